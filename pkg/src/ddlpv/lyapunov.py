"""Biquadratic Lyapunov functions ``V(x, p) = x^T L_p^T P L_p x`` and decrease checks.

The decrease condition for the closed loop ``x+ = M L_p x`` (``M = calA + B calK``)
is checked in three Schur-equivalent forms:

* dual:    ``P^{-1} - L_{p+} M P^{-1} M^T L_{p+}^T > 0``
* coupled: ``[[P^{-1}, L_{p+} M], [M^T L_{p+}^T, P]] > 0``
* primal:  ``P - M^T L_{p+}^T P L_{p+} M > 0``
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import linalg as la
from .lpv import AffineGain, LpvPlant, SchedulingPolytope, Trajectory, closed_loop_matrix, lift_scheduling

__all__ = [
    "BiquadraticLyapunov",
    "QuadraticLyapunov",
    "eval_V",
    "decrease_lmi",
    "decrease_dual",
    "decrease_primal",
    "PolytopeCheck",
    "check_decrease_on_polytope",
    "AuditReport",
    "trajectory_decrease_audit",
]


@dataclass(frozen=True)
class BiquadraticLyapunov:
    """Positive definite ``P`` of size ``n_x (1 + n_p)``."""

    P: np.ndarray
    n_x: int

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape[0] != P.shape[1] or P.shape[0] % self.n_x:
            raise ValueError("P must be square with size a multiple of n_x")
        if not np.allclose(P, P.T, rtol=0, atol=1e-9 * la.scale_of(P)):
            raise ValueError("P must be symmetric")
        if not la.is_pd(P):
            raise ValueError("P must be positive definite")
        object.__setattr__(self, "P", la.sym(P))

    @property
    def n_p(self) -> int:
        return self.P.shape[0] // self.n_x - 1

    def __call__(self, x, p) -> float:
        return eval_V(self, x, p)


@dataclass(frozen=True)
class QuadraticLyapunov:
    """Scheduling-independent ``V(x) = x^T P0 x``."""

    P0: np.ndarray

    def __post_init__(self):
        P0 = la.sym(np.atleast_2d(np.asarray(self.P0, dtype=float)))
        if not la.is_pd(P0):
            raise ValueError("P0 must be positive definite")
        object.__setattr__(self, "P0", P0)

    @property
    def n_x(self) -> int:
        return self.P0.shape[0]

    def __call__(self, x, p=None) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.P0 @ x)


def eval_V(lyap: BiquadraticLyapunov, x, p) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    p = np.atleast_1d(np.asarray(p, dtype=float)).reshape(-1)
    if x.size != lyap.n_x or p.size != lyap.n_p:
        raise ValueError(f"expected x of length {lyap.n_x} and p of length {lyap.n_p}")
    xi = lift_scheduling(p, lyap.n_x) @ x
    return max(float(xi @ lyap.P @ xi), 0.0)


def _lifted_closed_loop(plant: LpvPlant, gain: AffineGain | None, p_next) -> np.ndarray:
    M = plant.stacked if gain is None else closed_loop_matrix(plant, gain)
    return lift_scheduling(p_next, plant.n_x) @ M


def _check_dims(plant: LpvPlant, lyap: BiquadraticLyapunov):
    if lyap.n_x != plant.n_x or lyap.n_p != plant.n_p:
        raise ValueError("Lyapunov matrix does not match the plant dimensions")


def decrease_lmi(plant: LpvPlant, gain: AffineGain | None, lyap: BiquadraticLyapunov, p_next,
                 tol: float = la.PSD_TOL):
    """Coupled form ``[[P^{-1}, L M], [., P]]`` and its strict-PD verdict.

    ``gain=None`` analyses the open loop. Raises ``LinAlgError`` if ``P`` is
    too badly conditioned to invert.
    """
    _check_dims(plant, lyap)
    LM = _lifted_closed_loop(plant, gain, p_next)
    Pinv = la.chol_inv(lyap.P)
    block = la.sym(np.block([[Pinv, LM], [LM.T, lyap.P]]))
    return block, la.is_pd(block, tol)


def decrease_dual(plant, gain, lyap, p_next, tol: float = la.PSD_TOL):
    _check_dims(plant, lyap)
    LM = _lifted_closed_loop(plant, gain, p_next)
    Pinv = la.chol_inv(lyap.P)
    mat = la.sym(Pinv - LM @ Pinv @ LM.T)
    return mat, la.is_pd(mat, tol)


def decrease_primal(plant, gain, lyap, p_next, tol: float = la.PSD_TOL):
    _check_dims(plant, lyap)
    LM = _lifted_closed_loop(plant, gain, p_next)
    mat = la.sym(lyap.P - LM.T @ lyap.P @ LM)
    return mat, la.is_pd(mat, tol)


@dataclass(frozen=True)
class PolytopeCheck:
    ok: bool
    worst_margin: float
    worst_vertex: int
    margins: np.ndarray

    def __bool__(self):
        return self.ok


def check_decrease_on_polytope(plant, gain, lyap: BiquadraticLyapunov, polytope: SchedulingPolytope,
                               tol: float = la.PSD_TOL) -> PolytopeCheck:
    """Coupled-form check at every vertex; affinity in ``p`` extends it to the hull."""
    V = np.asarray(polytope.vertices)
    if V.shape[0] == 0:
        raise ValueError("empty vertex list")
    margins = np.array([la.relative_margin(decrease_lmi(plant, gain, lyap, v)[0]) for v in V])
    worst = int(np.argmin(margins))
    return PolytopeCheck(bool(np.all(margins > tol)), float(margins[worst]), worst, margins)


@dataclass
class AuditReport:
    V: np.ndarray
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps({"V": self.V.tolist(), "violations": self.violations,
                           "decrease": (self.V[:-1] - self.V[1:]).tolist()}, indent=1)


def trajectory_decrease_audit(traj: Trajectory, lyap, zero_tol: float = 1e-12) -> AuditReport:
    """List the steps where ``V`` fails to strictly decrease while ``x != 0``.

    The scheduling value at the final state is not stored in a trajectory, so
    the last step is judged with ``p_N = p_{N-1}`` unless ``traj.meta`` holds
    ``"p_final"``. States with norm below ``zero_tol`` count as the origin.
    """
    N = traj.N
    p = list(traj.p)
    p.append(np.asarray(traj.meta.get("p_final", traj.p[-1]), dtype=float))
    V = np.array([lyap(traj.x[k], p[k]) for k in range(N + 1)])
    bad = []
    for k in range(N):
        if np.linalg.norm(traj.x[k]) > zero_tol and not V[k + 1] < V[k]:
            bad.append({"step": k, "V_k": float(V[k]), "V_next": float(V[k + 1])})
    return AuditReport(V, bad)
