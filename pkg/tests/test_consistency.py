import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddlpv.consistency import (ConsistencyQmi, EmptySetError, Qmi, UnboundedSetError, qmi_membership, qmi_to_ball,
                               sample_ball, sample_compatible_systems, schedule_lift_qmi)
from ddlpv.lpv import example_plant, lift_scheduling
from tests.conftest import random_lpv_instance


def test_upsilon_blocks(example_instance):
    *_, ds, W, noise, c = example_instance
    U = c.Upsilon
    Om = W @ W.T
    assert np.allclose(U[:2, :2], Om - ds.Xplus @ ds.Xplus.T)
    assert np.allclose(U[:2, 2:], ds.Xplus @ ds.Phi.T)
    assert np.allclose(U[2:, 2:], -ds.Phi @ ds.Phi.T)


def test_true_system_is_consistent(example_instance):
    c = example_instance[-1]
    plant, _, _ = example_plant(5.0)
    assert c.contains(plant)
    assert c.ball.contains(plant.AB.T)


def test_square_data_gives_radius_omega(example_instance):
    *_, W, noise, c = example_instance
    assert np.allclose(c.ball.R, W @ W.T, atol=1e-8 * (1 + np.abs(c.Upsilon).max()))


def test_ball_parameters():
    rng = np.random.default_rng(0)
    q, r = 2, 3
    D = np.eye(r) * 2
    Zc = rng.standard_normal((r, q))
    R = np.eye(q) * 0.5
    Psi = np.block([[R - Zc.T @ D @ Zc, Zc.T @ D], [D @ Zc, -D]])
    b = qmi_to_ball(Qmi(Psi, q, r))
    assert np.allclose(b.center, Zc) and np.allclose(b.D, D) and np.allclose(b.R, R)


def test_ball_errors():
    with pytest.raises(UnboundedSetError):
        qmi_to_ball(Qmi(np.diag([1.0, 0.0]), 1, 1))
    with pytest.raises(EmptySetError):
        qmi_to_ball(Qmi(np.diag([-1.0, -1.0]), 1, 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ball_form_agrees_with_qmi(seed):
    rng = np.random.default_rng(seed)
    q, r = rng.integers(1, 4), rng.integers(1, 5)
    M = rng.standard_normal((r, r))
    D = M @ M.T + 0.1 * np.eye(r)
    Zc = rng.standard_normal((r, q))
    R = np.diag(rng.uniform(0, 1, q))
    Psi = np.block([[R - Zc.T @ D @ Zc, Zc.T @ D], [D @ Zc, -D]])
    qm = Qmi(Psi, q, r)
    b = qmi_to_ball(qm)
    for _ in range(20):
        Z = Zc + rng.standard_normal((r, q)) * rng.uniform(0, 1)
        a = la_min(qm.value(Z))
        bb = la_min(b.value(Z))
        assert abs(a - bb) <= 1e-8 * (1 + np.abs(Psi).max()) * (1 + np.abs(Z).max()) ** 2


def la_min(M):
    return np.linalg.eigvalsh(M)[0]


def test_schedule_lift_preserves_membership(example_instance):
    c = example_instance[-1]
    rng = np.random.default_rng(3)
    Zs = sample_ball(c.ball, 30, 11)
    for Z in Zs:
        p = rng.uniform(-5, 5, 2)
        Up = schedule_lift_qmi(c, p)
        assert qmi_membership(Up, Z @ lift_scheduling(p, 2).T) == qmi_membership(c.qmi, Z)


def test_schedule_lift_rejects_bad_point(example_instance):
    with pytest.raises(ValueError):
        schedule_lift_qmi(example_instance[-1], [1.0])


def test_sampler_soundness_and_determinism():
    _, _, _, c = random_lpv_instance(5)
    a = sample_ball(c.ball, 50, 9)
    b = sample_ball(c.ball, 50, 9)
    assert np.array_equal(a, b)
    tol = 1e-8 * (1 + np.linalg.norm(c.Upsilon, 2))
    assert all(np.linalg.eigvalsh(c.qmi.value(Z))[0] >= -tol for Z in a)
    plants = sample_compatible_systems(c, 3, 9)
    assert np.allclose(plants[0].AB.T, a[0])


def test_zero_radius_collapses_to_center():
    rng = np.random.default_rng(0)
    D = np.eye(3)
    Zc = rng.standard_normal((3, 2))
    Psi = np.block([[-Zc.T @ D @ Zc, Zc.T @ D], [D @ Zc, -D]])
    b = qmi_to_ball(Qmi(Psi, 2, 3))
    assert np.allclose(sample_ball(b, 5, 0), Zc)


def test_json_roundtrip(example_instance):
    c = example_instance[-1]
    back = ConsistencyQmi.from_json(c.to_json())
    assert np.allclose(back.Upsilon, c.Upsilon) and back.n_lift == 6
