"""A-posteriori certification of synthesis results and closed-loop ensembles."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import linalg as la
from .consistency import ConsistencyQmi, sample_compatible_systems
from .lpv import (AffineGain, LpvPlant, SchedulingMap, SchedulingPolytope, SimulationDiverged, UniformNoise,
                  ZeroNoise, closed_loop_matrix, lift_scheduling, simulate)
from .lyapunov import QuadraticLyapunov, trajectory_decrease_audit
from .seeding import derive_rng, derive_seed
from .synthesis import SynthesisResult, recover_controller

__all__ = [
    "CertificationReport",
    "certify_decrease",
    "decrease_margin",
    "Ensemble",
    "closed_loop_montecarlo",
    "frozen_spectrum_diagnostic",
    "unit_circle",
]

DEFAULT_TOL = 1e-7
EPS_STRICT = 1e-6


@dataclass
class CertificationReport:
    tolerance: float
    n_systems: int
    n_points: int
    n_checks: int
    min_margin: float
    passed: bool
    strict_passed: bool
    witness: Optional[dict] = None
    method: str = ""

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "method": self.method, "n_systems": self.n_systems,
                "n_points": self.n_points, "n_checks": self.n_checks, "min_margin": self.min_margin,
                "passed": self.passed, "strict_passed": self.strict_passed, "witness": self.witness}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def decrease_margin(plant: LpvPlant, gain: Optional[AffineGain], lyap, p, Pinv=None) -> float:
    """Relative margin of the coupled decrease matrix at scheduling point ``p``.

    For a biquadratic certificate this is ``[[P^{-1}, L_p M], [., P]]``; for a
    common quadratic one ``[[P0^{-1}, M L_p], [., P0]]``.
    """
    M = plant.stacked if gain is None else closed_loop_matrix(plant, gain)
    L = lift_scheduling(p, plant.n_x)
    if isinstance(lyap, QuadraticLyapunov):
        P = lyap.P0
        X = M @ L
    else:
        P = lyap.P
        X = L @ M
    if Pinv is None:
        Pinv = la.chol_inv(P)
    return la.relative_margin(np.block([[Pinv, X], [X.T, P]]))


def _batch_margins(plant, gain, lyap, pts, P, Pinv) -> np.ndarray:
    M = plant.stacked if gain is None else closed_loop_matrix(plant, gain)
    n = P.shape[0]
    blocks = np.empty((len(pts), 2 * n, 2 * n))
    blocks[:, :n, :n] = Pinv
    blocks[:, n:, n:] = P
    for j, p in enumerate(pts):
        L = lift_scheduling(p, plant.n_x)
        X = M @ L if isinstance(lyap, QuadraticLyapunov) else L @ M
        blocks[j, :n, n:] = X
        blocks[j, n:, :n] = X.T
    w = np.linalg.eigvalsh(blocks)
    return w[:, 0] / (1.0 + np.max(np.abs(w), axis=1))


def certify_decrease(result: SynthesisResult, c: ConsistencyQmi, polytope: SchedulingPolytope,
                     n_systems: int = 309, n_p_samples: int = 100, seed: int = 0,
                     tol: float = DEFAULT_TOL, extra_plants: Sequence[LpvPlant] = ()) -> CertificationReport:
    """Check the decrease condition on sampled compatible systems.

    The systems are the ball center, ``n_systems`` samples of the consistency
    set and any ``extra_plants``; the scheduling points are the polytope
    vertices plus ``n_p_samples`` interior points. Passes iff every relative
    margin is at least ``-tol``.
    """
    gain, lyap = recover_controller(result)
    P = lyap.P0 if isinstance(lyap, QuadraticLyapunov) else lyap.P
    Pinv = la.chol_inv(P)
    ball = c.ball
    plants = [LpvPlant.from_stacked(ball.center.T, c.n_x, c.n_p)]
    if n_systems:
        plants += sample_compatible_systems(c, n_systems, derive_seed(seed, "certify-systems"))
    plants += list(extra_plants)
    pts = np.asarray(polytope.vertices, dtype=float)
    if n_p_samples:
        pts = np.vstack([pts, polytope.sample_interior(n_p_samples, derive_rng(seed, "certify-points"))])
    worst, witness = np.inf, None
    for i, plant in enumerate(plants):
        margins = _batch_margins(plant, gain, lyap, pts, P, Pinv)
        j = int(np.argmin(margins))
        if margins[j] < worst:
            worst = float(margins[j])
            witness = {"system": i, "p": pts[j].tolist(), "point_index": j, "relative_eigenvalue": worst}
    passed = bool(worst >= -tol)
    return CertificationReport(tol, len(plants), len(pts), len(plants) * len(pts), float(worst), passed,
                               bool(worst >= EPS_STRICT / 2), None if passed else witness, result.method)


def frozen_spectrum_diagnostic(plant: LpvPlant, gain: Optional[AffineGain], p) -> float:
    """Spectral radius of ``L_p (calA + B calK)``; a necessary-condition screen only."""
    M = plant.stacked if gain is None else closed_loop_matrix(plant, gain)
    return float(np.max(np.abs(np.linalg.eigvals(lift_scheduling(p, plant.n_x) @ M))))


def unit_circle(count: int) -> list:
    """``count`` equally spaced points on the unit circle."""
    th = 2 * np.pi * np.arange(count) / count
    return [np.array([np.cos(t), np.sin(t)]) for t in th]


@dataclass
class Ensemble:
    members: list = field(default_factory=list)

    @property
    def trajectories(self) -> list:
        return [m["trajectory"] for m in self.members]

    def summary(self) -> dict:
        finals = [m["final_norm"] for m in self.members if not m["diverged"]]
        return {
            "n_members": len(self.members),
            "n_diverged": sum(m["diverged"] for m in self.members),
            "max_final_norm": max(finals) if finals else None,
            "decrease_violations": sum(m["violations"] for m in self.members),
            "members": [{k: v for k, v in m.items() if k != "trajectory"} for m in self.members],
        }

    def write(self, out_dir: str, prefix: str = "traj") -> None:
        os.makedirs(out_dir, exist_ok=True)
        for m in self.members:
            name = f"{prefix}_sys{m['system']:03d}_ic{m['ic']:02d}.csv"
            with open(os.path.join(out_dir, name), "w") as fh:
                fh.write(m["trajectory"].to_csv())
        with open(os.path.join(out_dir, f"{prefix}_summary.json"), "w") as fh:
            json.dump(self.summary(), fh, indent=1)


def closed_loop_montecarlo(result: SynthesisResult, plants: Sequence[LpvPlant], scheduling: SchedulingMap,
                           ics: Sequence, w_max: float = 0.0, N: int = 40, seed: int = 0) -> Ensemble:
    """Simulate every (plant, initial condition) pair under the synthesized gain.

    Member ``(i, j)`` draws disturbances from its own stream, so results do not
    depend on evaluation order. Divergent members are flagged, not raised.
    The decrease audit is only counted for noise-free runs.
    """
    gain, lyap = recover_controller(result)
    ens = Ensemble()
    idx = 0
    for i, plant in enumerate(plants):
        for j, x0 in enumerate(ics):
            noise = (UniformNoise(plant.n_x, w_max, derive_seed(seed, "montecarlo-noise", idx)) if w_max > 0
                     else ZeroNoise(plant.n_x))
            idx += 1
            diverged = False
            try:
                traj = simulate(plant, scheduling, x0, N, gain=gain, noise=noise)
            except SimulationDiverged as exc:
                traj, diverged = exc.trajectory, True
            violations = 0
            if not diverged and w_max == 0:
                try:
                    traj.meta["p_final"] = scheduling(traj.N, traj.x[-1])
                except IndexError:
                    pass
                violations = len(trajectory_decrease_audit(traj, lyap).violations)
            ens.members.append({"system": i, "ic": j, "diverged": diverged,
                                "final_norm": float(np.linalg.norm(traj.x[-1])) if not diverged else None,
                                "violations": violations, "trajectory": traj})
    return ens
