"""A small modeling layer for affine matrix inequalities.

Expressions are kept as a constant plus one coefficient array per variable,
so constraint values can be recomputed with plain numpy independently of the
conic solver. Feasibility problems are solved in max-slack form through cvxpy:

    maximize t  s.t.  E_j(x) - (m_j + t) I >= 0,  t <= cap,  equalities, sign bounds

and a solution is reported Feasible only if ``t > 0`` and an eigenvalue
re-check of every constraint succeeds.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from itertools import count
from typing import Optional

import numpy as np

from . import linalg as la

__all__ = [
    "Variable",
    "AffineMat",
    "AffineMatrixExpr",
    "Constraint",
    "LmiProblem",
    "SolverSettings",
    "SolveOutcome",
    "MarginReport",
    "bmat",
    "solve",
    "verify_assignment",
    "FEASIBLE",
    "INFEASIBLE",
    "INCONCLUSIVE",
]

FEASIBLE, INFEASIBLE, INCONCLUSIVE = "Feasible", "Infeasible", "Inconclusive"

_ids = count()


class Variable:
    """A decision variable: scalar, symmetric matrix or rectangular matrix.

    Scalars carry a sign (``"free"``, ``"nonneg"``, ``"positive"``); symmetric
    matrices may be flagged positive definite. ``positive`` and ``pd`` are
    strict and get encoded with the problem's strict margin.
    """

    def __init__(self, name: str, kind: str, shape: tuple, sign: str = "free", pd: bool = False):
        if kind not in ("scalar", "symmetric", "matrix"):
            raise ValueError(f"unknown variable kind {kind!r}")
        if sign not in ("free", "nonneg", "positive"):
            raise ValueError(f"unknown sign {sign!r}")
        if kind == "symmetric" and shape[0] != shape[1]:
            raise ValueError("symmetric variables must be square")
        self.id = next(_ids)
        self.name, self.kind, self.shape = name, kind, tuple(shape)
        self.sign, self.pd = sign, pd

    @property
    def size(self) -> int:
        """Number of free scalar entries."""
        m, n = self.shape
        return m * (m + 1) // 2 if self.kind == "symmetric" else m * n

    def basis(self) -> np.ndarray:
        """Array of shape ``(*shape, size)`` mapping the entry vector to the matrix."""
        m, n = self.shape
        out = np.zeros((m, n, self.size))
        if self.kind == "symmetric":
            for idx, (i, j) in enumerate(zip(*np.triu_indices(m))):
                out[i, j, idx] = out[j, i, idx] = 1.0
        else:
            for idx in range(m * n):
                out[idx // n, idx % n, idx] = 1.0
        return out

    def unpack(self, vec) -> np.ndarray:
        vec = np.asarray(vec, dtype=float).reshape(self.size)
        val = self.basis() @ vec
        return float(val[0, 0]) if self.kind == "scalar" else val

    def pack(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float).reshape(self.shape)
        if self.kind == "symmetric":
            return la.sym(value)[np.triu_indices(self.shape[0])]
        return value.reshape(-1)

    @property
    def expr(self) -> "AffineMat":
        return AffineMat(np.zeros(self.shape), {self.id: (self, self.basis())})

    def __repr__(self):
        return f"Variable({self.name!r}, {self.kind}, {self.shape})"

    # arithmetic is delegated to the expression form
    __array_ufunc__ = None

    def __add__(self, o): return self.expr + o
    def __radd__(self, o): return o + self.expr
    def __sub__(self, o): return self.expr - o
    def __rsub__(self, o): return _aff(o) - self.expr
    def __neg__(self): return -self.expr
    def __mul__(self, o): return self.expr * o
    def __rmul__(self, o): return self.expr * o
    def __matmul__(self, o): return self.expr @ o
    def __rmatmul__(self, o): return o @ self.expr

    @property
    def T(self): return self.expr.T

    def trace(self): return self.expr.trace()


def _aff(x) -> "AffineMat":
    if isinstance(x, AffineMat):
        return x
    if isinstance(x, Variable):
        return x.expr
    return AffineMat(np.atleast_2d(np.asarray(x, dtype=float)), {})


class AffineMat:
    """``const + sum_v sum_e x_{v,e} C_{v,e}``; ``coeffs[v.id] = (v, C)`` with ``C`` of shape ``(m, n, v.size)``."""

    __array_ufunc__ = None

    def __init__(self, const, coeffs: Optional[dict] = None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.coeffs = dict(coeffs or {})

    @property
    def shape(self) -> tuple:
        return self.const.shape

    @property
    def variables(self) -> list:
        return [v for v, _ in self.coeffs.values()]

    def _merge(self, other: "AffineMat", sign: float) -> "AffineMat":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        coeffs = dict(self.coeffs)
        for vid, (v, C) in other.coeffs.items():
            if vid in coeffs:
                coeffs[vid] = (v, coeffs[vid][1] + sign * C)
            else:
                coeffs[vid] = (v, sign * C)
        return AffineMat(self.const + sign * other.const, coeffs)

    def __add__(self, o): return self._merge(_aff(o), 1.0)
    def __radd__(self, o): return _aff(o)._merge(self, 1.0)
    def __sub__(self, o): return self._merge(_aff(o), -1.0)
    def __rsub__(self, o): return _aff(o)._merge(self, -1.0)
    def __neg__(self): return self * -1.0

    def __mul__(self, o):
        """Scale by a number, or multiply a 1x1 expression by a constant matrix."""
        if isinstance(o, (AffineMat, Variable)):
            o = _aff(o)
            if o.shape == (1, 1) and not o.coeffs:
                return self * float(o.const[0, 0])
            if self.shape == (1, 1) and not self.coeffs:
                return o * float(self.const[0, 0])
            raise ValueError("product of two variable expressions is not affine")
        o = np.asarray(o, dtype=float)
        if o.ndim == 0:
            return AffineMat(self.const * o, {k: (v, C * o) for k, (v, C) in self.coeffs.items()})
        if self.shape != (1, 1):
            raise ValueError("only a 1x1 expression can scale a matrix")
        o = np.atleast_2d(o)
        return AffineMat(self.const[0, 0] * o,
                         {k: (v, o[:, :, None] * C[0, 0][None, None, :]) for k, (v, C) in self.coeffs.items()})

    __rmul__ = __mul__

    def __matmul__(self, o):
        if isinstance(o, (AffineMat, Variable)):
            o = _aff(o)
            if o.coeffs:
                raise ValueError("product of two variable expressions is not affine")
            o = o.const
        o = np.atleast_2d(np.asarray(o, dtype=float))
        return AffineMat(self.const @ o, {k: (v, np.einsum("ije,jk->ike", C, o)) for k, (v, C) in self.coeffs.items()})

    def __rmatmul__(self, o):
        o = np.atleast_2d(np.asarray(o, dtype=float))
        return AffineMat(o @ self.const, {k: (v, np.einsum("ij,jke->ike", o, C)) for k, (v, C) in self.coeffs.items()})

    @property
    def T(self) -> "AffineMat":
        return AffineMat(self.const.T, {k: (v, C.transpose(1, 0, 2)) for k, (v, C) in self.coeffs.items()})

    def sym(self) -> "AffineMat":
        return (self + self.T) * 0.5

    def __getitem__(self, idx) -> "AffineMat":
        const = np.atleast_2d(self.const[idx])
        return AffineMat(const, {k: (v, C[idx].reshape(const.shape + (v.size,))) for k, (v, C) in self.coeffs.items()})

    def trace(self) -> "AffineMat":
        return AffineMat([[np.trace(self.const)]], {k: (v, np.trace(C)[None, None, :]) for k, (v, C) in self.coeffs.items()})

    def value(self, assignment: dict) -> np.ndarray:
        """Evaluate with ``assignment`` mapping variable names to values."""
        out = self.const.copy()
        for v, C in self.coeffs.values():
            if v.name not in assignment:
                raise KeyError(f"no value for variable {v.name!r}")
            out = out + C @ v.pack(assignment[v.name])
        return out

    def nnz(self) -> int:
        return int(np.count_nonzero(self.const) + sum(np.count_nonzero(C) for _, C in self.coeffs.values()))


def AffineMatrixExpr(expr) -> AffineMat:
    """Symmetrized square expression, the form every LMI constraint takes."""
    e = _aff(expr)
    if e.shape[0] != e.shape[1]:
        raise ValueError(f"constraint expressions must be square, got {e.shape}")
    return e.sym()


def bmat(blocks) -> AffineMat:
    """Assemble a block matrix from expressions, arrays or ``None`` (zero block)."""
    rows = len(blocks)
    cols = len(blocks[0])
    heights = [None] * rows
    widths = [None] * cols
    for i, row in enumerate(blocks):
        if len(row) != cols:
            raise ValueError("ragged block layout")
        for j, b in enumerate(row):
            if b is None:
                continue
            shp = _aff(b).shape if not (isinstance(b, np.ndarray) and b.ndim == 2) else b.shape
            if heights[i] is None:
                heights[i] = shp[0]
            if widths[j] is None:
                widths[j] = shp[1]
            if (heights[i], widths[j]) != shp:
                raise ValueError(f"block ({i}, {j}) has shape {shp}, expected {(heights[i], widths[j])}")
    if None in heights or None in widths:
        raise ValueError("every block row and column needs at least one sized block")
    r0 = np.concatenate([[0], np.cumsum(heights)])
    c0 = np.concatenate([[0], np.cumsum(widths)])
    out = AffineMat(np.zeros((r0[-1], c0[-1])))
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None or (isinstance(b, np.ndarray) and b.size == 0):
                continue
            b = _aff(b)
            E_l = np.zeros((r0[-1], heights[i]))
            E_l[r0[i]:r0[i + 1]] = np.eye(heights[i])
            E_r = np.zeros((widths[j], c0[-1]))
            E_r[:, c0[j]:c0[j + 1]] = np.eye(widths[j])
            out = out + E_l @ b @ E_r
    return out


@dataclass
class Constraint:
    expr: AffineMat
    margin: float = 0.0
    strict: bool = False
    name: str = ""
    slacked: bool = True


@dataclass
class SolverSettings:
    solvers: tuple = ("CLARABEL", "CVXOPT", "SCS")
    eps_strict: float = 1e-6
    verify_tol: float = 1e-7
    infeasible_tol: float = 1e-7
    slack_cap: float = 1.0
    verbose: bool = False


class LmiProblem:
    """Variables plus LMI constraints ``expr >= margin I`` and linear equalities."""

    def __init__(self, settings: Optional[SolverSettings] = None):
        self.settings = settings or SolverSettings()
        self.variables: list = []
        self.constraints: list = []
        self.equalities: list = []

    def _declare(self, v: Variable) -> Variable:
        if any(u.name == v.name for u in self.variables):
            raise ValueError(f"duplicate variable name {v.name!r}")
        self.variables.append(v)
        if v.kind == "scalar" and v.sign == "nonneg":
            self.add(v.expr, name=f"{v.name} >= 0", slacked=False)
        elif v.kind == "scalar" and v.sign == "positive":
            self.add(v.expr, strict=True, name=f"{v.name} > 0")
        elif v.kind == "symmetric" and v.pd:
            self.add(v.expr, strict=True, name=f"{v.name} > 0")
        return v

    def scalar(self, name: str, sign: str = "free") -> Variable:
        return self._declare(Variable(name, "scalar", (1, 1), sign=sign))

    def symmetric(self, name: str, n: int, pd: bool = False) -> Variable:
        return self._declare(Variable(name, "symmetric", (n, n), pd=pd))

    def matrix(self, name: str, m: int, n: int) -> Variable:
        return self._declare(Variable(name, "matrix", (m, n)))

    def strict_margin(self, expr: AffineMat) -> float:
        return self.settings.eps_strict * la.scale_of(expr.const)

    def add(self, expr, margin: float = 0.0, strict: bool = False, name: str = "", slacked: bool = True) -> Constraint:
        """Add ``expr >= margin I``; ``strict`` raises the margin to at least ``eps_strict (1 + ||const||)``."""
        e = AffineMatrixExpr(expr)
        known = {v.id for v in self.variables}
        for v in e.variables:
            if v.id not in known:
                raise ValueError(f"constraint {name!r} references undeclared variable {v.name!r}")
        if margin < 0:
            raise ValueError("margins must be nonnegative")
        if strict:
            margin = max(margin, self.strict_margin(e))
        c = Constraint(e, float(margin), strict, name or f"c{len(self.constraints)}", slacked)
        self.constraints.append(c)
        return c

    def add_equality(self, expr, value: float = 0.0, name: str = ""):
        """Scalar linear equality ``expr == value`` (never slacked)."""
        e = _aff(expr)
        if e.shape != (1, 1):
            raise ValueError("equalities must be scalar")
        self.equalities.append((e, float(value), name or f"eq{len(self.equalities)}"))

    @property
    def n_entries(self) -> int:
        return sum(v.size for v in self.variables)

    def summary(self) -> dict:
        return {
            "variables": [{"name": v.name, "kind": v.kind, "shape": list(v.shape), "sign": v.sign, "pd": v.pd}
                          for v in self.variables],
            "constraints": [{"name": c.name, "size": c.expr.shape[0], "nnz": c.expr.nnz(), "margin": c.margin,
                             "strict": c.strict, "slacked": c.slacked} for c in self.constraints],
            "equalities": [name for _, _, name in self.equalities],
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=1)


@dataclass
class MarginReport:
    """Per-constraint ``min eig(expr) - margin`` and pass flags."""

    entries: list
    equality_residuals: list
    tol: float

    @property
    def ok(self) -> bool:
        return all(e["ok"] for e in self.entries) and all(r["ok"] for r in self.equality_residuals)

    @property
    def min_margin(self) -> float:
        vals = [e["relative_margin"] for e in self.entries]
        return min(vals) if vals else np.inf

    def violations(self) -> list:
        return [e for e in self.entries if not e["ok"]] + [r for r in self.equality_residuals if not r["ok"]]

    def to_dict(self) -> dict:
        return {"tol": self.tol, "ok": self.ok, "entries": self.entries, "equalities": self.equality_residuals}


def verify_assignment(problem: LmiProblem, assignment: dict, tol: float = 1e-7) -> MarginReport:
    """Recompute every constraint numerically.

    A constraint passes when ``min eig(E) >= margin - tol (1 + ||E||)``; strict
    constraints must additionally keep at least half their margin.
    """
    entries = []
    for c in problem.constraints:
        E = la.sym(c.expr.value(assignment))
        lo = la.min_eig(E)
        s = la.scale_of(E)
        ok = lo >= c.margin - tol * s
        if c.strict:
            ok = ok and lo >= 0.5 * c.margin
        entries.append({"name": c.name, "min_eig": lo, "required": c.margin,
                        "relative_margin": (lo - c.margin) / s, "ok": bool(ok)})
    eqs = []
    for e, val, name in problem.equalities:
        got = float(e.value(assignment)[0, 0])
        eqs.append({"name": name, "value": got, "target": val,
                    "ok": bool(abs(got - val) <= tol * (1 + abs(val)))})
    return MarginReport(entries, eqs, tol)


@dataclass
class SolveOutcome:
    status: str
    assignment: dict = field(default_factory=dict)
    slack: float = float("nan")
    report: Optional[MarginReport] = None
    solver: str = ""
    reason: str = ""
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "slack": self.slack,
            "solver": self.solver,
            "reason": self.reason,
            "diagnostics": self.diagnostics,
            "margins": self.report.to_dict() if self.report else None,
        }


def _cvx_problem(problem: LmiProblem):
    import cvxpy as cp

    offsets, off = {}, 0
    for v in problem.variables:
        offsets[v.id] = off
        off += v.size
    x = cp.Variable(max(off, 1))
    t = cp.Variable()

    def lin(e: AffineMat):
        m, n = e.shape
        C = np.zeros((m * n, max(off, 1)))
        for vid, (v, Cv) in e.coeffs.items():
            C[:, offsets[vid]:offsets[vid] + v.size] = Cv.reshape(m * n, v.size)
        return C

    cons = [t <= problem.settings.slack_cap]
    for c in problem.constraints:
        m = c.expr.shape[0]
        C = lin(c.expr)
        shift = c.margin + (t if c.slacked else 0.0)
        if m == 1:
            cons.append(C @ x + c.expr.const.reshape(-1) - shift >= 0)
            continue
        E = cp.reshape(C @ x, (m, m), order="C") + c.expr.const
        E = 0.5 * (E + E.T)
        cons.append(E - shift * np.eye(m) >> 0)
    for e, val, _ in problem.equalities:
        cons.append(lin(e) @ x + e.const.reshape(-1) == val)
    return cp.Problem(cp.Maximize(t), cons), x, t, offsets


def _assignment(problem: LmiProblem, xval, offsets) -> dict:
    out = {}
    for v in problem.variables:
        vec = np.asarray(xval[offsets[v.id]:offsets[v.id] + v.size], dtype=float)
        val = v.unpack(vec)
        if v.kind == "scalar" and v.sign == "nonneg":
            val = max(val, 0.0)
        out[v.name] = val
    return out


def solve(problem: LmiProblem, settings: Optional[SolverSettings] = None) -> SolveOutcome:
    """Max-slack feasibility solve with independent verification.

    Feasible only if ``t* > 0`` and :func:`verify_assignment` passes;
    Infeasible if an accurate solve gives ``t* < -infeasible_tol`` or the
    solver proves the slack program infeasible; Inconclusive otherwise.
    """
    import cvxpy as cp

    s = settings or problem.settings
    t0 = time.perf_counter()
    if not problem.constraints and not problem.equalities:
        return SolveOutcome(FEASIBLE, {v.name: v.unpack(np.zeros(v.size)) for v in problem.variables},
                            slack=s.slack_cap, report=MarginReport([], [], s.verify_tol), reason="no constraints")
    prob, x, t, offsets = _cvx_problem(problem)
    attempts = []
    best: Optional[SolveOutcome] = None
    for name in s.solvers:
        if name not in cp.installed_solvers():
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                prob.solve(solver=name, verbose=s.verbose)
        except Exception as exc:  # solver breakdowns of any kind are never Feasible
            attempts.append({"solver": name, "status": "error", "message": str(exc)[:200]})
            continue
        status = prob.status
        tval = None if t.value is None else float(t.value)
        attempts.append({"solver": name, "status": status, "slack": tval})
        if status == cp.INFEASIBLE:
            # slack program infeasible means the unslacked part (signs, equalities) is
            return SolveOutcome(INFEASIBLE, solver=name, reason="solver certificate: unslacked constraints infeasible",
                                diagnostics={"attempts": attempts}, wall_time=time.perf_counter() - t0)
        if tval is None or x.value is None:
            continue
        assignment = _assignment(problem, x.value, offsets)
        if tval > 0:
            report = verify_assignment(problem, assignment, s.verify_tol)
            if report.ok:
                return SolveOutcome(FEASIBLE, assignment, tval, report, name,
                                    diagnostics={"attempts": attempts}, wall_time=time.perf_counter() - t0)
            attempts[-1]["verify_failed"] = [v["name"] for v in report.violations()]
            continue
        if status == cp.OPTIMAL and tval < -s.infeasible_tol:
            report = verify_assignment(problem, assignment, s.verify_tol)
            return SolveOutcome(INFEASIBLE, assignment, tval, report, name,
                                reason=f"optimal slack {tval:.3e} is negative",
                                diagnostics={"attempts": attempts}, wall_time=time.perf_counter() - t0)
        if best is None:
            best = SolveOutcome(INCONCLUSIVE, assignment, tval, None, name)
    reason = "no solver produced a verified feasible point or an accurate negative slack"
    out = SolveOutcome(INCONCLUSIVE, best.assignment if best else {}, best.slack if best else float("nan"),
                       None, best.solver if best else "", reason, {"attempts": attempts})
    out.wall_time = time.perf_counter() - t0
    return out
