"""Data-driven controller synthesis programs.

All programs share the decision variables ``F`` (lifted Lyapunov inverse),
``G = calK F`` and S-lemma multipliers, and are solved with :mod:`ddlpv.lmi`.

Two algebraically equivalent encodings of the vertex LMI are offered:

``"raw"``
    ``[[F-bI,0,0,0],[0,0,0,F],[0,0,0,G],[0,F,G^T,F]] - a blkdiag(Upsilon_p, 0)``.
``"ball"`` (default)
    the same matrix after the congruence ``xi_2 -> Zc L_p^T xi_1 + D^{-1/2} xi_2``
    that completes the square in ``Upsilon``. Feasible sets coincide; the ball
    form avoids the cancellation of large data products and solves reliably.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg as la
from .consistency import ConsistencyQmi, MatrixBall, Qmi, UnboundedSetError, schedule_lift_qmi
from .lmi import (FEASIBLE, AffineMat, LmiProblem, SolverSettings, Variable, bmat, solve)
from .lpv import AffineGain, SchedulingPolytope, lift_scheduling
from .lyapunov import BiquadraticLyapunov, QuadraticLyapunov

__all__ = [
    "SynthesisResult",
    "FbspBlocks",
    "blf_H",
    "assemble_blf_vertex_constraint",
    "assemble_blf_vertex_constraint_ball",
    "synthesize_blf",
    "synthesize_slf_baseline",
    "synthesize_fbsp",
    "fbsp_blocks",
    "fbsp_vertex_expr",
    "analyze_stability",
    "recover_controller",
    "METHODS",
]

METHODS = ("BLF", "SLF", "FBSP", "ANALYSIS")


def _arr(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


@dataclass
class SynthesisResult:
    """Outcome of one synthesis program.

    For ``SLF`` the matrix ``F`` is the ``n_x x n_x`` block ``F_0`` of the
    common Lyapunov function; for the other methods it has size ``n_x(1+n_p)``.
    """

    method: str
    status: str
    n_x: int
    n_u: int
    n_p: int
    F: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    points: Optional[np.ndarray] = None
    slack: float = float("nan")
    min_margin: float = float("nan")
    certified: bool = True
    extra: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def to_dict(self) -> dict:
        extra = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.extra.items()}
        return {
            "method": self.method,
            "status": self.status,
            "certified": self.certified,
            "dims": {"n_x": self.n_x, "n_u": self.n_u, "n_p": self.n_p},
            "F": _arr(self.F),
            "G": _arr(self.G),
            "alphas": [float(a) for a in self.alphas],
            "betas": [float(b) for b in self.betas],
            "points": _arr(self.points),
            "slack": self.slack,
            "min_margin": self.min_margin,
            "extra": extra,
            "notes": self.notes,
            "diagnostics": self.diagnostics,
            "timing": {"wall_time_s": self.wall_time},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=float)

    @classmethod
    def from_json(cls, text: str) -> "SynthesisResult":
        d = json.loads(text)
        dims = d["dims"]
        arr = lambda v: None if v is None else np.array(v, dtype=float)
        G = arr(d["G"])
        if G is not None:
            G = G.reshape(dims["n_u"], -1)
        return cls(d["method"], d["status"], dims["n_x"], dims["n_u"], dims["n_p"], arr(d["F"]), G,
                   d["alphas"], d["betas"], arr(d["points"]), d["slack"], d["min_margin"], d["certified"],
                   d.get("extra", {}), d.get("notes", []), d.get("diagnostics", {}),
                   d.get("timing", {}).get("wall_time_s", 0.0))


def _zeros(m, n):
    return np.zeros((m, n))


def _stack_FG(F, G, n_u: int, n: int) -> AffineMat:
    if n_u == 0:
        return F.expr if isinstance(F, Variable) else F
    return bmat([[F], [G if G is not None else _zeros(n_u, n)]])


def blf_H(F, G, beta, n_u: int) -> AffineMat:
    """``[[F-bI,0,0,0],[0,0,0,F],[0,0,0,G],[0,F,G^T,F]]`` (block sizes ``n, n, n_u, n``)."""
    n = F.shape[0]
    Gm = G if G is not None else _zeros(n_u, n)
    Z = _zeros
    if n_u == 0:
        return bmat([[F - beta * np.eye(n), Z(n, n), Z(n, n)],
                     [Z(n, n), Z(n, n), F],
                     [Z(n, n), F, F]])
    return bmat([[F - beta * np.eye(n), Z(n, n), Z(n, n_u), Z(n, n)],
                 [Z(n, n), Z(n, n), Z(n, n_u), F],
                 [Z(n_u, n), Z(n_u, n), Z(n_u, n_u), Gm],
                 [Z(n, n), F, Gm.T, F]])


def _fresh(n: int, n_u: int, tag: str = ""):
    F = Variable(f"F{tag}", "symmetric", (n, n), pd=True)
    G = Variable(f"G{tag}", "matrix", (n_u, n)) if n_u else None
    a = Variable(f"alpha{tag}", "scalar", (1, 1), sign="nonneg")
    b = Variable(f"beta{tag}", "scalar", (1, 1), sign="positive")
    return F, G, a, b


def assemble_blf_vertex_constraint(Ups_p: Qmi, dims, F=None, G=None, alpha=None, beta=None) -> AffineMat:
    """Vertex LMI ``H - alpha blkdiag(Upsilon_p, 0)`` of size ``3 n_x(1+n_p) + n_u``.

    ``dims = (n_x, n_u, n_p)``. Missing variables are created on the fly, so
    the returned expression can also be inspected on its own. ``G`` may be a
    constant (e.g. zero for open-loop analysis).
    """
    n_x, n_u, n_p = dims
    n = n_x * (1 + n_p)
    if Ups_p.q != n or Ups_p.r != n + n_u:
        raise ValueError(f"Upsilon_p has blocks ({Ups_p.q}, {Ups_p.r}), expected ({n}, {n + n_u})")
    if F is None:
        F, G0, alpha0, beta0 = _fresh(n, n_u)
        G = G0 if G is None else G
        alpha = alpha0 if alpha is None else alpha
        beta = beta0 if beta is None else beta
    H = blf_H(F, G, beta, n_u)
    U = la.blkdiag(Ups_p.Psi, _zeros(n, n))
    return (H - alpha * U).sym()


def assemble_blf_vertex_constraint_ball(ball: MatrixBall, p, dims, F, G, alpha, beta) -> AffineMat:
    """Ball-form vertex LMI, congruent to :func:`assemble_blf_vertex_constraint`."""
    n_x, n_u, n_p = dims
    n = n_x * (1 + n_p)
    r = n + n_u
    L = lift_scheduling(p, n_x)
    FG = _stack_FG(F, G, n_u, n)
    top = L @ ball.center.T @ FG
    mid = ball.D_inv_sqrt @ FG
    return bmat([[F - beta * np.eye(n) - alpha * (L @ ball.R @ L.T), _zeros(n, r), top],
                 [_zeros(r, n), alpha * np.eye(r), mid],
                 [top.T, mid.T, F]]).sym()


def _points(polytope: SchedulingPolytope, grid):
    if grid is None:
        return np.asarray(polytope.vertices, dtype=float), True
    return np.atleast_2d(np.asarray(grid, dtype=float)), False


def _ball_or_none(c: ConsistencyQmi, form: str):
    if form == "raw":
        return None
    if form != "ball":
        raise ValueError(f"unknown form {form!r}")
    try:
        return c.ball
    except (UnboundedSetError, ValueError):
        return None


def _finish(method, c, prob, F, G, alphas, betas, pts, certified, t0, notes, extra_vars=()):
    out = solve(prob)
    res = SynthesisResult(method, out.status, c.n_x, c.n_u, c.n_p, points=pts, slack=out.slack,
                          certified=certified, notes=list(notes), diagnostics=out.to_dict())
    res.diagnostics.pop("margins", None)
    if out.report is not None:
        res.min_margin = out.report.min_margin
    if out.status == FEASIBLE:
        a = out.assignment
        res.F = la.sym(a[F.name])
        res.G = a[G.name] if G is not None else np.zeros((c.n_u, F.shape[0]))
        res.alphas = [a[v.name] for v in alphas]
        res.betas = [a[v.name] for v in betas]
        for v in extra_vars:
            res.extra[v.name] = a[v.name]
    if not certified:
        res.notes.append("NON-CERTIFIED: grid mode only covers the listed scheduling points")
    res.wall_time = time.perf_counter() - t0
    return res


def _blf_program(c: ConsistencyQmi, polytope, settings, grid, form, with_gain: bool, method: str):
    t0 = time.perf_counter()
    if not c.noise_ok:
        raise ValueError("noise model violates the nonempty/bounded requirements")
    if polytope.n_p != c.n_p:
        raise ValueError("polytope and data disagree on n_p")
    pts, certified = _points(polytope, grid)
    n = c.n_lift
    n_u = c.n_u
    prob = LmiProblem(settings)
    F = prob.symmetric("F", n, pd=True)
    G = prob.matrix("G", n_u, n) if (with_gain and n_u) else None
    prob.add_equality(F.trace(), float(n), name="trace(F) = n")
    ball = _ball_or_none(c, form)
    notes = [f"vertex form: {'ball' if ball is not None else 'raw'}"]
    alphas, betas = [], []
    for i, p in enumerate(pts):
        a = prob.scalar(f"alpha_{i}", "nonneg")
        b = prob.scalar(f"beta_{i}", "positive")
        alphas.append(a)
        betas.append(b)
        if ball is not None:
            expr = assemble_blf_vertex_constraint_ball(ball, p, (c.n_x, n_u, c.n_p), F, G, a, b)
        else:
            expr = assemble_blf_vertex_constraint(schedule_lift_qmi(c, p), (c.n_x, n_u, c.n_p), F, G, a, b)
        prob.add(expr, name=f"vertex {i}")
    return _finish(method, c, prob, F, G, alphas, betas, pts, certified, t0, notes)


def synthesize_blf(c: ConsistencyQmi, polytope: SchedulingPolytope, settings: Optional[SolverSettings] = None,
                   grid=None, form: str = "ball") -> SynthesisResult:
    """Shared ``F, G`` with per-vertex multipliers ``alpha_i >= 0``, ``beta_i > 0``.

    ``grid`` replaces the vertices by arbitrary scheduling points (for
    non-convex scheduling sets); such results are stamped non-certified.
    """
    return _blf_program(c, polytope, settings, grid, form, True, "BLF")


def analyze_stability(c: ConsistencyQmi, polytope: SchedulingPolytope, settings: Optional[SolverSettings] = None,
                      grid=None, form: str = "ball") -> SynthesisResult:
    """Open-loop certificate ``P = F^{-1}``: the BLF program with ``G = 0``."""
    return _blf_program(c, polytope, settings, grid, form, False, "ANALYSIS")


def synthesize_slf_baseline(c: ConsistencyQmi, polytope: SchedulingPolytope,
                            settings: Optional[SolverSettings] = None, form: str = "ball") -> SynthesisResult:
    """Common quadratic Lyapunov function ``x^T F0^{-1} x`` with gains ``K_i = G_i F0^{-1}``.

    At each vertex ``p``, with ``N = [L_p F0; G L_p]``::

        [[F0 - bI - a U11, -a U12, 0], [-a U21, -a U22, N], [0, N^T, F0]] >= 0

    (raw form), or its completed-square counterpart in ball form.
    """
    t0 = time.perf_counter()
    if not c.noise_ok:
        raise ValueError("noise model violates the nonempty/bounded requirements")
    n_x, n_u, n = c.n_x, c.n_u, c.n_lift
    r = n + n_u
    prob = LmiProblem(settings)
    F0 = prob.symmetric("F", n_x, pd=True)
    G = prob.matrix("G", n_u, n) if n_u else None
    prob.add_equality(F0.trace(), float(n_x), name="trace(F0) = n_x")
    ball = _ball_or_none(c, form)
    U = c.Upsilon
    alphas, betas = [], []
    pts = np.asarray(polytope.vertices, dtype=float)
    for i, p in enumerate(pts):
        a = prob.scalar(f"alpha_{i}", "nonneg")
        b = prob.scalar(f"beta_{i}", "positive")
        alphas.append(a)
        betas.append(b)
        L = lift_scheduling(p, n_x)
        N = bmat([[L @ F0], [G @ L]]) if n_u else L @ F0
        if ball is not None:
            top = ball.center.T @ N
            mid = ball.D_inv_sqrt @ N
            expr = bmat([[F0 - b * np.eye(n_x) - a * ball.R, _zeros(n_x, r), top],
                         [_zeros(r, n_x), a * np.eye(r), mid],
                         [top.T, mid.T, F0]])
        else:
            expr = bmat([[F0 - b * np.eye(n_x) - a * U[:n_x, :n_x], -a * U[:n_x, n_x:], _zeros(n_x, n_x)],
                         [-a * U[n_x:, :n_x], -a * U[n_x:, n_x:], N],
                         [_zeros(n_x, n_x), N.T, F0]])
        prob.add(expr.sym(), name=f"vertex {i}")
    notes = [f"vertex form: {'ball' if ball is not None else 'raw'}"]
    return _finish("SLF", c, prob, F0, G, alphas, betas, pts, True, t0, notes)


@dataclass
class FbspBlocks:
    """Linear fractional representation of the vertex LMI in ``p``.

    With ``q = Delta_p z``, ``z = L11 q + L12 xi`` and ``y = L21 q + L22 xi``,
    the vertex LMI reads ``-y^T Theta y >= eps |xi|^2`` for ``Theta`` below
    (the ``eps`` term is included in ``Theta``).
    """

    Theta: AffineMat
    H: AffineMat
    L11: np.ndarray
    L12: np.ndarray
    L21: np.ndarray
    L22: np.ndarray
    Gamma: np.ndarray
    Delta: list
    conditioning: str

    @property
    def M(self) -> np.ndarray:
        k = self.L11.shape[0]
        m = self.L12.shape[1]
        return np.block([[self.L11, self.L12], [np.eye(k), _zeros(k, m)], [self.L21, self.L22]])


def _delta(p, n_x: int) -> np.ndarray:
    return np.kron(np.diag(np.atleast_1d(np.asarray(p, dtype=float))), np.eye(n_x))


def fbsp_blocks(c: ConsistencyQmi, polytope: SchedulingPolytope, F, G, alpha, beta, eps,
                conditioning: str = "ball") -> FbspBlocks:
    """Assemble ``Theta, H, L11, L12, L21, L22, Gamma`` and the vertex ``Delta`` matrices.

    ``conditioning="raw"`` uses ``Theta = blkdiag(alpha Upsilon, -(H - eps I))``
    and ``Gamma = blkdiag([I 0], I_r)``. ``"ball"`` first applies the constant
    congruence ``xi_2 -> D^{-1/2} xi_2`` and expresses the data QMI through its
    completed square, so ``Theta = blkdiag(alpha R, -alpha I, -(T^T H T - eps I))``.
    """
    n_x, n_u, n_p = c.n_x, c.n_u, c.n_p
    n = c.n_lift
    r = n + n_u
    k = n_x * n_p
    m = 3 * n + n_u
    H = blf_H(F, G, beta, n_u)
    ones = np.kron(np.ones((1, n_p)), np.eye(n_x))
    sel = np.hstack([np.eye(n_x), _zeros(n_x, k)])
    L12 = np.hstack([_zeros(k, n_x), np.eye(k), _zeros(k, m - n)])
    if conditioning == "raw":
        Gamma = la.blkdiag(sel, np.eye(r))
        L21_top = np.vstack([ones, _zeros(r, k)])
        W = alpha * c.Upsilon
        Hc = H
    elif conditioning == "ball":
        ball = c.ball
        K = la.psd_sqrt(ball.D) @ ball.center
        Gamma = np.block([[sel, _zeros(n_x, r)], [-K @ sel, np.eye(r)]])
        L21_top = np.vstack([ones, -K @ ones])
        W = bmat([[alpha * ball.R, _zeros(n_x, r)], [_zeros(r, n_x), -1.0 * alpha * np.eye(r)]])
        T = la.blkdiag(np.eye(n), ball.D_inv_sqrt, np.eye(n))
        Hc = (T.T @ H @ T).sym()
    else:
        raise ValueError(f"unknown conditioning {conditioning!r}")
    s = n_x + r
    Theta = bmat([[W, _zeros(s, m)], [_zeros(m, s), -1.0 * (Hc - eps * np.eye(m))]])
    L22 = np.vstack([np.hstack([Gamma, _zeros(s, n)]), np.eye(m)])
    L21 = np.vstack([L21_top, _zeros(m, k)])
    Deltas = [_delta(v, n_x) for v in np.asarray(polytope.vertices, dtype=float)]
    return FbspBlocks(Theta, Hc, _zeros(k, k), L12, L21, L22, Gamma, Deltas, conditioning)


def fbsp_vertex_expr(Xi, Delta) -> AffineMat:
    """``[I; Delta]^T Xi [I; Delta]``."""
    k = Delta.shape[0]
    S = np.vstack([np.eye(k), Delta])
    return (S.T @ _as_aff(Xi) @ S).sym()


def _as_aff(x) -> AffineMat:
    if isinstance(x, Variable):
        return x.expr
    return x if isinstance(x, AffineMat) else AffineMat(x)


def synthesize_fbsp(c: ConsistencyQmi, polytope: SchedulingPolytope, dims=None,
                    settings: Optional[SolverSettings] = None, conditioning: str = "ball") -> SynthesisResult:
    """Full-block multiplier relaxation: one ``p``-free LMI plus small vertex LMIs.

    Constraints: ``M^T blkdiag(Xi, Theta) M < 0``, ``[I; Delta_v]^T Xi [I; Delta_v] >= 0``
    at every vertex and ``Xi22 < 0``; single ``alpha >= 0``, ``beta > 0``,
    ``eps > 0``.
    """
    t0 = time.perf_counter()
    if dims is not None and tuple(dims) != (c.n_x, c.n_u, c.n_p):
        raise ValueError("dims do not match the consistency QMI")
    if not c.noise_ok:
        raise ValueError("noise model violates the nonempty/bounded requirements")
    n, n_u, k = c.n_lift, c.n_u, c.n_x * c.n_p
    prob = LmiProblem(settings)
    F = prob.symmetric("F", n, pd=True)
    G = prob.matrix("G", n_u, n) if n_u else None
    a = prob.scalar("alpha", "nonneg")
    b = prob.scalar("beta", "positive")
    eps = prob.scalar("eps", "positive")
    Xi = prob.symmetric("Xi", 2 * k) if k else None
    prob.add_equality(F.trace(), float(n), name="trace(F) = n")
    blocks = fbsp_blocks(c, polytope, F, G, a, b, eps, conditioning)
    M = blocks.M
    if k:
        outer = bmat([[Xi, _zeros(2 * k, blocks.Theta.shape[0])],
                      [_zeros(blocks.Theta.shape[0], 2 * k), blocks.Theta]])
        prob.add(-1.0 * (M.T @ outer @ M), strict=True, name="full-block LMI")
        for i, D in enumerate(blocks.Delta):
            prob.add(fbsp_vertex_expr(Xi, D), name=f"multiplier vertex {i}")
        prob.add(-1.0 * Xi.expr[k:, k:], strict=True, name="Xi22 < 0")
    else:
        prob.add(-1.0 * (blocks.L22.T @ blocks.Theta @ blocks.L22), strict=True, name="full-block LMI")
    notes = [f"conditioning: {conditioning}",
             "strictness enforced as Theta = blkdiag(., -(H - eps I))"]
    extra = [v for v in (a, b, eps, Xi) if v is not None]
    res = _finish("FBSP", c, prob, F, G, [a], [b], np.asarray(polytope.vertices, dtype=float), True, t0, notes,
                  extra_vars=extra)
    return res


def recover_controller(result: SynthesisResult):
    """``calK = G F^{-1}`` and the Lyapunov certificate.

    Returns ``(AffineGain, BiquadraticLyapunov)``; for ``SLF`` results the
    certificate is a :class:`QuadraticLyapunov` and ``K_i = G_i F0^{-1}``.
    ``ANALYSIS`` results yield the zero gain.
    """
    if result.F is None:
        raise ValueError(f"result has no certificate (status {result.status})")
    F = la.sym(result.F)
    Finv = la.chol_inv(F)
    n_x, n_u, n_p = result.n_x, result.n_u, result.n_p
    G = np.zeros((n_u, n_x * (1 + n_p))) if result.G is None else np.asarray(result.G, dtype=float)
    G = G.reshape(n_u, n_x * (1 + n_p))
    if result.method == "SLF":
        calK = G @ np.kron(np.eye(1 + n_p), Finv)
        return AffineGain.from_stacked(calK, n_x) if n_u else AffineGain.zero(0, n_x, n_p), QuadraticLyapunov(Finv)
    calK = np.linalg.solve(F, G.T).T
    gain = AffineGain.from_stacked(calK, n_x) if n_u else AffineGain.zero(0, n_x, n_p)
    return gain, BiquadraticLyapunov(Finv, n_x)
