"""Data matrices, persistency of excitation and QMI noise models."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from .lpv import Trajectory, lift_scheduling

__all__ = [
    "DataSet",
    "NoiseModel",
    "NoiseReport",
    "build_dataset",
    "is_persistently_exciting",
    "energy_bound_from_noise",
    "noise_model_from_energy_bound",
    "validate_noise_model",
]

RANK_RTOL = 2.0**-40


def _mat(a) -> list:
    return np.asarray(a, dtype=float).tolist()


@dataclass(frozen=True)
class DataSet:
    """``Phi = [L_{p_k} x_k; u_k]_k`` and ``Xplus = [x_{k+1}]_k``."""

    Phi: np.ndarray
    Xplus: np.ndarray
    n_x: int
    n_u: int
    n_p: int

    def __post_init__(self):
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        Xp = np.atleast_2d(np.asarray(self.Xplus, dtype=float))
        if Phi.shape[0] != self.n_x * (1 + self.n_p) + self.n_u:
            raise ValueError("Phi row count does not match n_x(1+n_p)+n_u")
        if Xp.shape != (self.n_x, Phi.shape[1]):
            raise ValueError("Xplus must be n_x x N_d with the same column count as Phi")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "Xplus", Xp)

    @property
    def N_d(self) -> int:
        return self.Phi.shape[1]

    @property
    def dims(self) -> tuple:
        return self.n_x, self.n_u, self.n_p, self.N_d

    def to_json(self) -> str:
        return json.dumps({
            "dims": {"n_x": self.n_x, "n_u": self.n_u, "n_p": self.n_p, "N_d": self.N_d},
            "phi": _mat(self.Phi),
            "xplus": _mat(self.Xplus),
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DataSet":
        d = json.loads(text)
        dims = d["dims"]
        N_d = dims["N_d"]
        rows = dims["n_x"] * (1 + dims["n_p"]) + dims["n_u"]
        Phi = np.array(d["phi"], dtype=float).reshape(rows, N_d)
        Xp = np.array(d["xplus"], dtype=float).reshape(dims["n_x"], N_d)
        return cls(Phi, Xp, dims["n_x"], dims["n_u"], dims["n_p"])


def build_dataset(traj: Trajectory) -> DataSet:
    """Stack a trajectory into ``(Phi, Xplus)``; ``N_d`` equals the trajectory length."""
    n_x, n_u, n_p = traj.dims
    if traj.x.shape[0] != traj.N + 1:
        raise ValueError("inconsistent signal lengths")
    cols = [np.concatenate([lift_scheduling(traj.p[k], n_x) @ traj.x[k], traj.u[k]]) for k in range(traj.N)]
    return DataSet(np.array(cols).T.reshape(-1, traj.N), traj.x[1:].T.copy(), n_x, n_u, n_p)


def is_persistently_exciting(ds: DataSet):
    """Return ``(is_pe, numerical_rank)`` for the data matrix ``Phi``.

    Singular values below ``max(shape) * sigma_max * 2**-40`` count as zero.
    """
    s = np.linalg.svd(ds.Phi, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        rank = 0
    else:
        rank = int(np.sum(s > max(ds.Phi.shape) * s[0] * RANK_RTOL))
    return rank == ds.Phi.shape[0], rank


def energy_bound_from_noise(W) -> np.ndarray:
    """Minimal-trace ``Omega`` with ``W W^T <= Omega``, which is ``W W^T`` itself."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    return la.sym(W @ W.T)


@dataclass(frozen=True)
class NoiseReport:
    exists: bool
    bounded: bool
    schur_eigenvalues: np.ndarray = field(repr=False)
    pi22_eigenvalues: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.exists and self.bounded


@dataclass(frozen=True)
class NoiseModel:
    """Disturbance QMI ``[I; W^T]^T Pi [I; W^T] >= 0`` with ``Pi`` of size ``n_x + N_d``."""

    Pi: np.ndarray
    n_x: int

    def __post_init__(self):
        Pi = np.atleast_2d(np.asarray(self.Pi, dtype=float))
        if Pi.shape[0] != Pi.shape[1] or Pi.shape[0] <= self.n_x:
            raise ValueError("Pi must be square of size n_x + N_d")
        if not np.allclose(Pi, Pi.T, atol=1e-12 * la.scale_of(Pi)):
            raise ValueError("Pi must be symmetric")
        object.__setattr__(self, "Pi", la.sym(Pi))

    @property
    def N_d(self) -> int:
        return self.Pi.shape[0] - self.n_x

    @property
    def Pi11(self):
        return self.Pi[:self.n_x, :self.n_x]

    @property
    def Pi12(self):
        return self.Pi[:self.n_x, self.n_x:]

    @property
    def Pi22(self):
        return self.Pi[self.n_x:, self.n_x:]

    def contains(self, W, tol: float = 1e-8) -> bool:
        """Whether the disturbance block ``W`` (``n_x x N_d``) satisfies the QMI."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        S = np.vstack([np.eye(self.n_x), W.T])
        val = S.T @ self.Pi @ S
        return la.min_eig(val) >= -tol * la.scale_of(self.Pi)

    def to_json(self) -> str:
        return json.dumps({"partition": {"n_x": self.n_x, "N_d": self.N_d}, "pi": _mat(self.Pi)}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "NoiseModel":
        d = json.loads(text)
        return cls(np.array(d["pi"], dtype=float), d["partition"]["n_x"])


def noise_model_from_energy_bound(Omega, N_d: int, tol: float = la.PSD_TOL) -> NoiseModel:
    """``Pi = blkdiag(Omega, -I_{N_d})``, i.e. the bound ``W W^T <= Omega``."""
    Omega = np.atleast_2d(np.asarray(Omega, dtype=float))
    if N_d < 1:
        raise ValueError("N_d must be positive")
    if not la.is_psd(Omega, tol):
        raise ValueError("Omega must be positive semidefinite")
    return NoiseModel(la.blkdiag(la.sym(Omega), -np.eye(N_d)), Omega.shape[0])


def validate_noise_model(noise: NoiseModel, tol: float = la.PSD_TOL) -> NoiseReport:
    """Check nonemptiness (``Pi | Pi22 >= 0``) and boundedness (``Pi22 < 0``)."""
    pi22_eigs = np.linalg.eigvalsh(noise.Pi22)
    bounded = bool(pi22_eigs[-1] < -tol * la.scale_of(noise.Pi22))
    # generalized Schur complement, so a singular Pi22 still yields a verdict
    schur = noise.Pi11 - noise.Pi12 @ np.linalg.pinv(noise.Pi22) @ noise.Pi12.T
    schur_eigs = np.linalg.eigvalsh(la.sym(schur))
    exists = bool(schur_eigs[0] >= -tol * la.scale_of(noise.Pi))
    return NoiseReport(exists, bounded, schur_eigs, pi22_eigs)
