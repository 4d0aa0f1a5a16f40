"""Set of LPV systems consistent with noisy data, described by a QMI.

A QMI matrix ``Psi`` of size ``q + r`` defines ``{Z (r x q) : [I; Z]^T Psi [I; Z] >= 0}``.
For data ``(Phi, Xplus)`` and noise model ``Pi`` the consistent systems are the
``Z = [calA B]^T`` in the set of ``Upsilon = [I Xplus; 0 -Phi] Pi [I Xplus; 0 -Phi]^T``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import ortho_group

from . import linalg as la
from .data import DataSet, NoiseModel, validate_noise_model
from .lpv import LpvPlant, lift_scheduling
from .seeding import child_rng

__all__ = [
    "Qmi",
    "ConsistencyQmi",
    "MatrixBall",
    "UnboundedSetError",
    "EmptySetError",
    "build_consistency_qmi",
    "schedule_lift_qmi",
    "qmi_membership",
    "qmi_to_ball",
    "sample_ball",
    "sample_compatible_systems",
]

MEMBERSHIP_TOL = 1e-8


class UnboundedSetError(ValueError):
    """``Psi22`` is not negative definite, so the QMI set is not a bounded ball."""


class EmptySetError(ValueError):
    """``Psi | Psi22`` has a negative eigenvalue, so the QMI set is empty."""


@dataclass(frozen=True)
class Qmi:
    Psi: np.ndarray
    q: int
    r: int

    def __post_init__(self):
        Psi = np.atleast_2d(np.asarray(self.Psi, dtype=float))
        if Psi.shape != (self.q + self.r, self.q + self.r):
            raise ValueError(f"Psi must be {(self.q + self.r,) * 2}, got {Psi.shape}")
        if not np.allclose(Psi, Psi.T, rtol=0, atol=1e-10 * la.scale_of(Psi)):
            raise ValueError("Psi must be symmetric")
        object.__setattr__(self, "Psi", la.sym(Psi))

    @property
    def Psi11(self):
        return self.Psi[:self.q, :self.q]

    @property
    def Psi12(self):
        return self.Psi[:self.q, self.q:]

    @property
    def Psi22(self):
        return self.Psi[self.q:, self.q:]

    def value(self, Z) -> np.ndarray:
        """``[I; Z]^T Psi [I; Z]``."""
        Z = np.asarray(Z, dtype=float).reshape(self.r, self.q)
        S = np.vstack([np.eye(self.q), Z])
        return la.sym(S.T @ self.Psi @ S)

    def to_dict(self) -> dict:
        return {"q": self.q, "r": self.r, "psi": self.Psi.tolist()}


@dataclass(frozen=True)
class MatrixBall:
    """``{Z : (Z - Zc)^T D (Z - Zc) <= R}`` with ``D > 0`` and ``R >= 0``."""

    center: np.ndarray
    D: np.ndarray
    R: np.ndarray

    @property
    def q(self) -> int:
        return self.center.shape[1]

    @property
    def r(self) -> int:
        return self.center.shape[0]

    def value(self, Z) -> np.ndarray:
        E = np.asarray(Z, dtype=float).reshape(self.center.shape) - self.center
        return la.sym(self.R - E.T @ self.D @ E)

    def contains(self, Z, tol: float = MEMBERSHIP_TOL, strict: bool = False, scale: float | None = None) -> bool:
        s = scale if scale is not None else la.scale_of(self.R) + la.scale_of(self.D)
        m = la.min_eig(self.value(Z))
        return m > tol * s if strict else m >= -tol * s

    @cached_property
    def D_inv_sqrt(self) -> np.ndarray:
        return la.pd_inv_sqrt(self.D)

    @cached_property
    def R_sqrt(self) -> np.ndarray:
        return la.psd_sqrt(self.R)

    def member(self, S) -> np.ndarray:
        """Map a contraction ``S`` (``r x q``, ``||S|| <= 1``) into the ball."""
        return self.center + self.D_inv_sqrt @ np.asarray(S, dtype=float) @ self.R_sqrt

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "D": self.D.tolist(), "R": self.R.tolist()}


@dataclass(frozen=True)
class ConsistencyQmi:
    """The QMI ``Upsilon`` of all ``[calA B]^T`` compatible with the data."""

    qmi: Qmi
    n_x: int
    n_u: int
    n_p: int
    noise_ok: bool = True
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def Upsilon(self) -> np.ndarray:
        return self.qmi.Psi

    @property
    def n_lift(self) -> int:
        """``n_x (1 + n_p)``, the lifted-state dimension."""
        return self.n_x * (1 + self.n_p)

    @cached_property
    def ball(self) -> MatrixBall:
        return qmi_to_ball(self.qmi)

    def contains(self, plant: LpvPlant, tol: float = MEMBERSHIP_TOL) -> bool:
        return qmi_membership(self.qmi, plant.AB.T, tol=tol)

    def to_json(self) -> str:
        d = {"dims": {"n_x": self.n_x, "n_u": self.n_u, "n_p": self.n_p},
             "upsilon": self.qmi.to_dict(), "provenance": self.provenance}
        try:
            d["ball"] = self.ball.to_dict()
        except ValueError:
            d["ball"] = None
        return json.dumps(d, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ConsistencyQmi":
        d = json.loads(text)
        u = d["upsilon"]
        dims = d["dims"]
        return cls(Qmi(np.array(u["psi"]), u["q"], u["r"]), dims["n_x"], dims["n_u"], dims["n_p"],
                   provenance=d.get("provenance", {}))


def build_consistency_qmi(ds: DataSet, noise: NoiseModel) -> ConsistencyQmi:
    """``Upsilon = [I Xplus; 0 -Phi] Pi [I Xplus; 0 -Phi]^T``."""
    if noise.n_x != ds.n_x or noise.N_d != ds.N_d:
        raise ValueError(f"noise model is for (n_x, N_d)=({noise.n_x}, {noise.N_d}), "
                         f"data has ({ds.n_x}, {ds.N_d})")
    r = ds.Phi.shape[0]
    M = np.block([[np.eye(ds.n_x), ds.Xplus], [np.zeros((r, ds.n_x)), -ds.Phi]])
    Ups = M @ noise.Pi @ M.T
    report = validate_noise_model(noise)
    return ConsistencyQmi(Qmi(la.sym(Ups), ds.n_x, r), ds.n_x, ds.n_u, ds.n_p, noise_ok=report.ok,
                          provenance={"N_d": ds.N_d, "noise_exists": report.exists, "noise_bounded": report.bounded})


def schedule_lift_qmi(c: ConsistencyQmi, p) -> Qmi:
    """``Upsilon_p = blkdiag(L_p, I) Upsilon blkdiag(L_p^T, I)``.

    Its set equals ``{Z L_p^T : Z in set(Upsilon)}``.
    """
    if not c.noise_ok:
        raise ValueError("noise model violates the nonempty/bounded requirements")
    p = np.atleast_1d(np.asarray(p, dtype=float)).reshape(-1)
    if p.size != c.n_p:
        raise ValueError(f"scheduling point has length {p.size}, expected {c.n_p}")
    T = la.blkdiag(lift_scheduling(p, c.n_x), np.eye(c.qmi.r))
    return Qmi(la.sym(T @ c.Upsilon @ T.T), c.n_lift, c.qmi.r)


def qmi_membership(q: Qmi, Z, strict: bool = False, tol: float = MEMBERSHIP_TOL) -> bool:
    """Whether ``[I; Z]^T Psi [I; Z]`` is PSD (or PD if ``strict``) up to ``tol (1 + ||Psi||)``."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (q.r, q.q):
        raise ValueError(f"Z must be {q.r} x {q.q}, got {Z.shape}")
    m = la.min_eig(q.value(Z))
    s = tol * la.scale_of(q.Psi)
    return m > s if strict else m >= -s


def qmi_to_ball(q: Qmi, tol: float = la.PSD_TOL) -> MatrixBall:
    """Complete the square: center ``-Psi22^{-1} Psi21``, ``D = -Psi22``, ``R = Psi | Psi22``."""
    D = -q.Psi22
    if not la.is_pd(D, tol):
        raise UnboundedSetError("Psi22 is not negative definite; the set is unbounded")
    center = np.linalg.solve(D, q.Psi12.T)
    R = la.sym(q.Psi11 + q.Psi12 @ center)
    if not la.is_psd(R, tol):
        raise EmptySetError(f"Psi | Psi22 has eigenvalue {la.min_eig(R):.3e}; the set is empty")
    return MatrixBall(center, la.sym(D), R)


def _haar(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 1:
        return np.array([[rng.choice([-1.0, 1.0])]])
    return ortho_group.rvs(n, random_state=rng)


def _contraction(r: int, q: int, rng: np.random.Generator) -> np.ndarray:
    k = min(r, q)
    U = _haar(r, rng)[:, :k]
    V = _haar(q, rng)[:, :k]
    return U @ np.diag(rng.uniform(0.0, 1.0, k)) @ V.T


def sample_ball(ball: MatrixBall, count: int, seed) -> np.ndarray:
    """Draw ``count`` members ``Zc + D^{-1/2} S R^{1/2}``.

    ``S = U diag(sigma) V^T`` with Haar ``U, V`` and ``sigma ~ U[0, 1]``; this
    covers the ball but is not uniform over it. Sample ``i`` uses the stream
    ``(seed, i)``.
    """
    out = np.empty((count,) + ball.center.shape)
    for i in range(count):
        rng = child_rng(seed, i)
        out[i] = ball.member(_contraction(ball.r, ball.q, rng))
    return out


def sample_compatible_systems(c: ConsistencyQmi, count: int, seed) -> list:
    """``count`` plants ``[calA B] = Z^T`` drawn from the consistency set."""
    Zs = sample_ball(c.ball, count, seed)
    return [LpvPlant.from_stacked(Z.T, c.n_x, c.n_p) for Z in Zs]
