"""With no scheduling the machinery reduces to data-driven LTI stabilization.

Run: python3 demos/lti_reduction.py

A known unstable, controllable pair is excited once. Noise-free data pins the
system down exactly; with a disturbance budget the consistent set becomes a
ball and the synthesized gain has to stabilize all of it.
"""

import numpy as np

from ddlpv.consistency import build_consistency_qmi, sample_compatible_systems
from ddlpv.data import build_dataset, energy_bound_from_noise, noise_model_from_energy_bound
from ddlpv.lpv import GaussianInput, LpvPlant, SchedulingMap, SchedulingPolytope, UniformNoise, ZeroNoise, simulate
from ddlpv.synthesis import recover_controller, synthesize_blf

A = np.array([[1.2, 0.5, 0.0], [0.0, 0.9, 0.4], [0.1, 0.0, 1.1]])
B = np.array([[0.0], [0.0], [1.0]])
plant = LpvPlant((A,), B)
N_d = 15


def run(w_max, seed=3):
    noise = ZeroNoise(3) if w_max == 0 else UniformNoise(3, w_max, seed)
    traj = simulate(plant, SchedulingMap.exogenous(np.zeros((N_d, 0))), np.ones(3), N_d,
                    inputs=GaussianInput(1, 1.0, seed), noise=noise)
    ds = build_dataset(traj)
    W = traj.w.T
    c = build_consistency_qmi(ds, noise_model_from_energy_bound(energy_bound_from_noise(W), N_d))
    res = synthesize_blf(c, SchedulingPolytope.trivial())
    print(f"w_max = {w_max:g}: {res.status}")
    if not res.feasible:
        return
    gain, _ = recover_controller(res)
    K = gain.K[0]
    rho = max(abs(np.linalg.eigvals(A + B @ K)))
    print(f"  K = {np.array2string(K, precision=3)}, spectral radius on the true pair {rho:.3f}")
    if w_max > 0:
        rhos = [max(abs(np.linalg.eigvals(p.A[0] + p.B @ K))) for p in sample_compatible_systems(c, 200, seed)]
        print(f"  over 200 consistent pairs: worst spectral radius {max(rhos):.3f}")


if __name__ == "__main__":
    print(f"open-loop spectral radius {max(abs(np.linalg.eigvals(A))):.3f}")
    for w in (0.0, 0.01, 0.05, 0.2):
        run(w)
