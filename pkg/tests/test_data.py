import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddlpv.data import (DataSet, NoiseModel, energy_bound_from_noise, is_persistently_exciting, noise_model_from_energy_bound,
                        validate_noise_model)
from ddlpv.experiment import ExperimentConfig, generate_data
from ddlpv.lpv import lift_scheduling


def test_dataset_columns(example_instance):
    _, traj, ds, *_ = example_instance
    assert ds.Phi.shape == (8, 8) and ds.Xplus.shape == (2, 8)
    for k in range(traj.N):
        expect = np.concatenate([lift_scheduling(traj.p[k], 2) @ traj.x[k], traj.u[k]])
        assert np.allclose(ds.Phi[:, k], expect)
        assert np.allclose(ds.Xplus[:, k], traj.x[k + 1])


def test_data_equation_holds_with_recorded_noise(example_instance):
    cfg, traj, ds, W, *_ = example_instance
    from ddlpv.lpv import example_plant
    plant, _, _ = example_plant(5.0)
    assert np.allclose(ds.Xplus, plant.AB @ ds.Phi + W)


def test_pe_default_and_short_record(example_instance):
    ds = example_instance[2]
    assert is_persistently_exciting(ds) == (True, 8)
    cfg = ExperimentConfig.from_dict({"data": {"N_d": 7}})
    _, short, _ = generate_data(cfg)
    pe, rank = is_persistently_exciting(short)
    assert not pe and rank <= 7


def test_dataset_json_roundtrip(example_instance):
    ds = example_instance[2]
    back = DataSet.from_json(ds.to_json())
    assert np.array_equal(back.Phi, ds.Phi) and np.array_equal(back.Xplus, ds.Xplus)
    assert back.dims == ds.dims


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 12), st.integers(0, 10_000))
def test_energy_bound_is_gram(n_x, N, seed):
    W = np.random.default_rng(seed).uniform(-1, 1, (n_x, N))
    Om = energy_bound_from_noise(W)
    G = W @ W.T
    assert np.linalg.norm(Om - G, 2) <= 1e-10 * (1 + np.linalg.norm(G, 2))
    nm = noise_model_from_energy_bound(Om, N)
    assert nm.contains(W)


def test_noise_model_partition_and_json():
    nm = noise_model_from_energy_bound(np.eye(2) * 0.3, 5)
    assert nm.N_d == 5 and nm.Pi.shape == (7, 7)
    back = NoiseModel.from_json(nm.to_json())
    assert np.array_equal(back.Pi, nm.Pi) and back.n_x == 2
    rep = validate_noise_model(nm)
    assert rep.exists and rep.bounded and rep.ok


def test_noise_model_rejects_indefinite_omega():
    with pytest.raises(ValueError):
        noise_model_from_energy_bound(np.diag([1.0, -1.0]), 3)


def test_validate_flags_unbounded_and_empty():
    unbounded = NoiseModel(np.diag([1.0, 0.0, 0.0]), 1)
    rep = validate_noise_model(unbounded)
    assert rep.exists and not rep.bounded
    empty = NoiseModel(np.diag([-1.0, -1.0, -1.0]), 1)
    rep = validate_noise_model(empty)
    assert not rep.exists


def test_zero_noise_record():
    cfg = ExperimentConfig.from_dict({"data": {"w_max": 0.0}})
    traj, ds, W = generate_data(cfg)
    assert not np.any(W)
