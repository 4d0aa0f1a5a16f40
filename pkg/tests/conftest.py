import numpy as np
import pytest

import ddlpv.lmi as lmi_mod
import ddlpv.synthesis as synth_mod
from ddlpv.consistency import build_consistency_qmi
from ddlpv.data import build_dataset, energy_bound_from_noise, noise_model_from_energy_bound
from ddlpv.experiment import ExperimentConfig, consistency_from_record, generate_data
from ddlpv.lpv import GaussianInput, LpvPlant, SchedulingMap, UniformNoise, simulate

# every Feasible (problem, outcome) pair seen during the session, for the solver-honesty check
FEASIBLE_LOG = []
# criterion number -> (passed, detail), filled by the acceptance module
ACCEPTANCE = {}


@pytest.fixture(autouse=True, scope="session")
def _record_feasible_outcomes():
    orig = lmi_mod.solve

    def recording(problem, settings=None):
        out = orig(problem, settings)
        if out.feasible:
            FEASIBLE_LOG.append((problem, out))
        return out

    lmi_mod.solve = recording
    synth_mod.solve = recording
    yield
    lmi_mod.solve = orig
    synth_mod.solve = orig


def pytest_collection_modifyitems(items):
    # acceptance runs last so the solver-honesty criterion sees every other suite's solves
    def key(item):
        acc = item.module.__name__.endswith("test_acceptance")
        return (acc, acc and "solver_honesty" in item.name)
    items.sort(key=key)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def example_instance():
    """Benchmark data at the default seed: (config, trajectory, dataset, W, noise, consistency)."""
    cfg = ExperimentConfig()
    traj, ds, W = generate_data(cfg)
    noise, c = consistency_from_record(ds, W)
    return cfg, traj, ds, W, noise, c


def random_lpv_instance(seed, n_x=2, n_u=1, n_p=1, N_d=25, w_max=0.01, radius=0.6):
    """Random plant with exogenous scheduling in [-1, 1]^n_p and its consistency QMI."""
    rng = np.random.default_rng(seed)
    A = [rng.standard_normal((n_x, n_x)) * radius / np.sqrt(n_x) for _ in range(1 + n_p)]
    A[1:] = [a * 0.3 for a in A[1:]]
    B = rng.standard_normal((n_x, n_u))
    plant = LpvPlant(tuple(A), B)
    sched = SchedulingMap.exogenous(rng.uniform(-1, 1, (N_d, n_p)))
    traj = simulate(plant, sched, rng.standard_normal(n_x), N_d,
                    inputs=GaussianInput(n_u, 1.0, seed), noise=UniformNoise(n_x, w_max, seed + 1))
    ds = build_dataset(traj)
    W = traj.w.T
    noise = noise_model_from_energy_bound(energy_bound_from_noise(W), N_d)
    return plant, ds, W, build_consistency_qmi(ds, noise)
