"""Affine LPV plants, affine scheduled gains and trajectory simulation.

The plant is ``x[k+1] = A(p[k]) x[k] + B u[k] + w[k]`` with
``A(p) = A_0 + sum_i p_i A_i``. Stacking ``calA = [A_0 ... A_np]`` and lifting
the state with ``L_p = [1; p] kron I`` gives ``A(p) x = calA L_p x``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "SchedulingPolytope",
    "LpvPlant",
    "AffineGain",
    "Trajectory",
    "SchedulingMap",
    "SimulationDiverged",
    "ZeroNoise",
    "UniformNoise",
    "ReplayNoise",
    "GaussianInput",
    "lift_scheduling",
    "eval_A",
    "closed_loop_matrix",
    "simulate",
    "example_plant",
    "EXAMPLE_A",
    "EXAMPLE_B",
]


def _as_point(p) -> np.ndarray:
    return np.atleast_1d(np.asarray(p, dtype=float)).reshape(-1)


def lift_scheduling(p, n_x: int) -> np.ndarray:
    """Return ``L_p = [1; p] kron I_{n_x}``, of size ``n_x(1+n_p) x n_x``."""
    p = _as_point(p)
    return np.kron(np.concatenate(([1.0], p))[:, None], np.eye(n_x))


@dataclass(frozen=True)
class SchedulingPolytope:
    """Convex hull of a finite vertex list (one vertex per row)."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim == 1:
            V = V[None, :]
        if V.shape[0] < 1:
            raise ValueError("a scheduling polytope needs at least one vertex")
        if not np.all(np.isfinite(V)):
            raise ValueError("polytope vertices must be finite")
        object.__setattr__(self, "vertices", V)

    @classmethod
    def box(cls, lower, upper) -> "SchedulingPolytope":
        """Axis-aligned box ``[lower_1, upper_1] x ... x [lower_np, upper_np]``."""
        lower, upper = _as_point(lower), _as_point(upper)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("box bounds must have equal length and lower <= upper")
        n_p = lower.size
        corners = [[(upper if (i >> j) & 1 else lower)[j] for j in range(n_p)] for i in range(2**n_p)]
        return cls(np.array(corners, dtype=float).reshape(2**n_p, n_p))

    @classmethod
    def trivial(cls) -> "SchedulingPolytope":
        """The single-point polytope of an LTI system (``n_p = 0``)."""
        return cls(np.zeros((1, 0)))

    @property
    def n_p(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_v(self) -> int:
        return self.vertices.shape[0]

    def contains(self, p, tol: float = 1e-9) -> bool:
        """Whether ``p`` lies in the convex hull of the vertices."""
        p = _as_point(p)
        if p.size != self.n_p:
            raise ValueError(f"expected a point of length {self.n_p}, got {p.size}")
        if self.n_p == 0:
            return True
        A_eq = np.vstack([self.vertices.T, np.ones((1, self.n_v))])
        b_eq = np.concatenate([p, [1.0]])
        res = linprog(np.zeros(self.n_v), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status != 0:
            return False
        return bool(np.linalg.norm(A_eq @ res.x - b_eq) <= tol * (1 + np.linalg.norm(b_eq)))

    def sample_interior(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Random convex combinations of the vertices (Dirichlet weights)."""
        lam = rng.dirichlet(np.ones(self.n_v), size=count)
        return lam @ self.vertices


@dataclass(frozen=True)
class LpvPlant:
    """Affine LPV plant ``(A_0, ..., A_np, B)``; ``B`` is scheduling independent."""

    A: tuple
    B: np.ndarray

    def __post_init__(self):
        if isinstance(self.B, (list, tuple)):
            raise ValueError("B must be a single constant matrix; scheduling-dependent B is not supported")
        A = tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A)
        if len(A) < 1:
            raise ValueError("need at least A_0")
        n_x = A[0].shape[0]
        for a in A:
            if a.shape != (n_x, n_x):
                raise ValueError("all A_i must be square of the same size")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n_x, -1)
        if B.shape[0] != n_x:
            raise ValueError(f"B must have {n_x} rows, got {B.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A[0].shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_p(self) -> int:
        return len(self.A) - 1

    @property
    def stacked(self) -> np.ndarray:
        """``calA = [A_0 A_1 ... A_np]``."""
        return np.hstack(self.A)

    @property
    def AB(self) -> np.ndarray:
        """``[calA B]``, the matrix whose transpose the consistency QMI constrains."""
        return np.hstack([self.stacked, self.B])

    @classmethod
    def from_stacked(cls, AB, n_x: int, n_p: int) -> "LpvPlant":
        """Split ``[calA B]`` (``n_x x (n_x(1+n_p) + n_u)``) into a plant."""
        AB = np.asarray(AB, dtype=float)
        n = n_x * (1 + n_p)
        if AB.shape[0] != n_x or AB.shape[1] < n:
            raise ValueError("stacked matrix has the wrong shape")
        A = tuple(AB[:, i * n_x:(i + 1) * n_x] for i in range(1 + n_p))
        return cls(A, AB[:, n:])


@dataclass(frozen=True)
class AffineGain:
    """Scheduled state feedback ``u = (K_0 + sum_i p_i K_i) x = calK L_p x``."""

    K: tuple

    def __post_init__(self):
        K = tuple(np.atleast_2d(np.asarray(k, dtype=float)) for k in self.K)
        if len(K) < 1:
            raise ValueError("need at least K_0")
        shape = K[0].shape
        if any(k.shape != shape for k in K):
            raise ValueError("all K_i must share the shape n_u x n_x")
        object.__setattr__(self, "K", K)

    @property
    def n_u(self) -> int:
        return self.K[0].shape[0]

    @property
    def n_x(self) -> int:
        return self.K[0].shape[1]

    @property
    def n_p(self) -> int:
        return len(self.K) - 1

    @property
    def stacked(self) -> np.ndarray:
        return np.hstack(self.K)

    @classmethod
    def from_stacked(cls, calK, n_x: int) -> "AffineGain":
        calK = np.atleast_2d(np.asarray(calK, dtype=float))
        if calK.shape[1] % n_x:
            raise ValueError("column count must be a multiple of n_x")
        return cls(tuple(calK[:, i:i + n_x] for i in range(0, calK.shape[1], n_x)))

    @classmethod
    def zero(cls, n_u: int, n_x: int, n_p: int) -> "AffineGain":
        return cls(tuple(np.zeros((n_u, n_x)) for _ in range(1 + n_p)))

    def __call__(self, x, p) -> np.ndarray:
        return self.stacked @ lift_scheduling(p, self.n_x) @ np.asarray(x, dtype=float)


def eval_A(plant: LpvPlant, p) -> np.ndarray:
    """``A(p) = A_0 + sum_i p_i A_i``."""
    p = _as_point(p)
    if p.size != plant.n_p:
        raise ValueError(f"scheduling point has length {p.size}, plant expects {plant.n_p}")
    out = plant.A[0].copy()
    for pi, Ai in zip(p, plant.A[1:]):
        out += pi * Ai
    return out


def closed_loop_matrix(plant: LpvPlant, gain: AffineGain, p=None) -> np.ndarray:
    """Stacked closed-loop matrix ``calA + B calK`` (independent of ``p``).

    ``p`` is accepted for call-site symmetry and only checked for length; the
    state map at a scheduling point is ``closed_loop_matrix(...) @ L_p``.
    """
    if gain.n_p != plant.n_p or gain.n_x != plant.n_x or gain.n_u != plant.n_u:
        raise ValueError("gain and plant dimensions do not match")
    if p is not None and _as_point(p).size != plant.n_p:
        raise ValueError("scheduling point has the wrong length")
    return plant.stacked + plant.B @ gain.stacked


class SchedulingMap:
    """Source of the scheduling signal.

    Either endogenous (``p_k = psi(x_k)``, evaluated on the state before the
    step) or exogenous (a stored sequence indexed by ``k``).
    """

    def __init__(self, n_p: int, psi: Optional[Callable] = None, sequence=None):
        if (psi is None) == (sequence is None):
            raise ValueError("give exactly one of psi or sequence")
        self.n_p = int(n_p)
        self._psi = psi
        self._seq = None if sequence is None else np.asarray(sequence, dtype=float).reshape(len(sequence), self.n_p)

    @classmethod
    def endogenous(cls, psi: Callable, n_p: int) -> "SchedulingMap":
        return cls(n_p, psi=psi)

    @classmethod
    def exogenous(cls, sequence) -> "SchedulingMap":
        seq = np.asarray(sequence, dtype=float)
        if seq.ndim == 1:
            seq = seq[:, None]
        return cls(seq.shape[1], sequence=seq)

    @classmethod
    def constant(cls, p, steps: int) -> "SchedulingMap":
        p = _as_point(p)
        return cls.exogenous(np.tile(p, (steps, 1)).reshape(steps, p.size))

    @property
    def is_endogenous(self) -> bool:
        return self._psi is not None

    def __call__(self, k: int, x) -> np.ndarray:
        if self._psi is not None:
            p = _as_point(self._psi(np.asarray(x, dtype=float)))
        else:
            if k >= self._seq.shape[0]:
                raise IndexError(f"exogenous scheduling sequence has no sample {k}")
            p = self._seq[k]
        if p.size != self.n_p:
            raise ValueError(f"scheduling map returned {p.size} entries, expected {self.n_p}")
        return p


class ZeroNoise:
    """``w_k = 0``."""

    def __init__(self, n_x: int):
        self.n_x = n_x

    def __call__(self, k: int) -> np.ndarray:
        return np.zeros(self.n_x)


class UniformNoise:
    """``w_k`` uniform on ``[-w_max, w_max]^{n_x}``.

    Each sample is drawn from its own stream ``(seed, k)``, so the source is a
    pure function of ``k`` and can be evaluated in any order.
    """

    def __init__(self, n_x: int, w_max: float, seed):
        if w_max < 0:
            raise ValueError("w_max must be nonnegative")
        self.n_x, self.w_max, self.seed = n_x, float(w_max), seed

    def __call__(self, k: int) -> np.ndarray:
        if self.w_max == 0:
            return np.zeros(self.n_x)
        rng = np.random.default_rng(np.random.SeedSequence(_entropy(self.seed), spawn_key=(k,)))
        return rng.uniform(-self.w_max, self.w_max, self.n_x)


class ReplayNoise:
    """Replays recorded disturbance columns ``W[:, k]``."""

    def __init__(self, W):
        self.W = np.atleast_2d(np.asarray(W, dtype=float))

    def __call__(self, k: int) -> np.ndarray:
        return self.W[:, k].copy()


class GaussianInput:
    """Open-loop excitation ``u_k ~ N(0, variance I)`` with per-step streams."""

    def __init__(self, n_u: int, variance: float, seed):
        self.n_u, self.std, self.seed = n_u, float(np.sqrt(variance)), seed

    def __call__(self, k: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(_entropy(self.seed), spawn_key=(k,)))
        return self.std * rng.standard_normal(self.n_u)


def _entropy(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy
    return seed


class SimulationDiverged(RuntimeError):
    """Raised when the state stops being finite."""

    def __init__(self, step: int, trajectory: "Trajectory"):
        super().__init__(f"state became non-finite at step {step}")
        self.step = step
        self.trajectory = trajectory


@dataclass(frozen=True)
class Trajectory:
    """Signals of one run; ``x`` has ``N+1`` rows, ``u``, ``p``, ``w`` have ``N``."""

    x: np.ndarray
    u: np.ndarray
    p: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        N = x.shape[0] - 1
        u = np.asarray(self.u, dtype=float).reshape(N, -1)
        p = np.asarray(self.p, dtype=float).reshape(N, -1)
        w = np.asarray(self.w, dtype=float).reshape(N, -1)
        if N < 1:
            raise ValueError("a trajectory needs at least two state samples")
        if w.shape[1] != x.shape[1]:
            raise ValueError("disturbance and state dimensions differ")
        for name, arr in (("x", x), ("u", u), ("p", p), ("w", w)):
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def dims(self) -> tuple:
        return self.x.shape[1], self.u.shape[1], self.p.shape[1]

    def to_csv(self) -> str:
        n_x, n_u, n_p = self.dims
        header = (["k"] + [f"x{i + 1}" for i in range(n_x)] + [f"u{i + 1}" for i in range(n_u)]
                  + [f"p{i + 1}" for i in range(n_p)] + [f"w{i + 1}" for i in range(n_x)])
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for k in range(self.N):
            wr.writerow([k] + [repr(float(v)) for v in np.concatenate([self.x[k], self.u[k], self.p[k], self.w[k]])])
        wr.writerow([self.N] + [repr(float(v)) for v in self.x[self.N]] + [""] * (n_u + n_p + n_x))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        n_x = sum(h.startswith("x") for h in header)
        n_u = sum(h.startswith("u") for h in header)
        n_p = sum(h.startswith("p") for h in header)
        x, u, p, w = [], [], [], []
        for row in body[:-1]:
            vals = [float(v) for v in row[1:]]
            x.append(vals[:n_x])
            u.append(vals[n_x:n_x + n_u])
            p.append(vals[n_x + n_u:n_x + n_u + n_p])
            w.append(vals[n_x + n_u + n_p:])
        x.append([float(v) for v in body[-1][1:1 + n_x]])
        N = len(x) - 1
        return cls(np.array(x), np.array(u).reshape(N, n_u), np.array(p).reshape(N, n_p), np.array(w).reshape(N, n_x))


def simulate(plant: LpvPlant, scheduling: SchedulingMap, x0, N: int, *,
             gain: Optional[AffineGain] = None, inputs: Optional[Callable] = None,
             noise: Optional[Callable] = None) -> Trajectory:
    """Simulate ``x[k+1] = A(p_k) x_k + B u_k + w_k`` for ``N`` steps.

    Closed loop uses ``u_k = calK L_{p_k} x_k``; open loop needs ``inputs``,
    a callable ``k -> u_k``. ``noise`` is a callable ``k -> w_k`` (zero if
    omitted). Raises :class:`SimulationDiverged` when the state overflows.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if scheduling.n_p != plant.n_p:
        raise ValueError(f"scheduling map has n_p={scheduling.n_p}, plant has n_p={plant.n_p}")
    if gain is None and inputs is None:
        raise ValueError("open-loop simulation needs an input generator")
    n_x, n_u, n_p = plant.n_x, plant.n_u, plant.n_p
    noise = noise if noise is not None else ZeroNoise(n_x)
    calA = plant.stacked
    calK = gain.stacked if gain is not None else None
    x = np.zeros((N + 1, n_x))
    u = np.zeros((N, n_u))
    p = np.zeros((N, n_p))
    w = np.zeros((N, n_x))
    x[0] = np.asarray(x0, dtype=float).reshape(n_x)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            p[k] = scheduling(k, x[k])
            lifted = lift_scheduling(p[k], n_x) @ x[k]
            u[k] = calK @ lifted if calK is not None else np.asarray(inputs(k), dtype=float).reshape(n_u)
            w[k] = np.asarray(noise(k), dtype=float).reshape(n_x)
            x[k + 1] = calA @ lifted + plant.B @ u[k] + w[k]
            if not np.all(np.isfinite(x[k + 1])):
                raise SimulationDiverged(k + 1, Trajectory(x[:k + 2], u[:k + 1], p[:k + 1], w[:k + 1]))
    return Trajectory(x, u, p, w)


EXAMPLE_A = (
    np.array([[0.027, -0.138], [0.380, 0.014]]),
    np.array([[0.449, -0.164], [0.129, -0.257]]),
    np.array([[-0.265, -0.332], [-0.090, -0.059]]),
)
EXAMPLE_B = np.array([[0.309, 0.539], [-0.570, 0.467]])


def example_plant(delta: float = 5.0):
    """Two-state benchmark embedded with ``p = [delta sin x1, delta cos x2]``.

    Returns ``(plant, scheduling_map, polytope)`` with the polytope
    ``[-delta, delta]^2``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    plant = LpvPlant(EXAMPLE_A, EXAMPLE_B)

    def psi(x, d=float(delta)):
        return np.array([d * np.sin(x[0]), d * np.cos(x[1])])

    polytope = SchedulingPolytope.box([-delta, -delta], [delta, delta])
    return plant, SchedulingMap.endogenous(psi, 2), polytope
