import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddlpv.lpv import AffineGain, LpvPlant, SchedulingMap, SchedulingPolytope, example_plant, simulate
from ddlpv.lyapunov import (BiquadraticLyapunov, check_decrease_on_polytope, decrease_dual, decrease_lmi,
                            decrease_primal, eval_V, trajectory_decrease_audit)


def scalar(a):
    return LpvPlant((np.array([[a]]),), np.zeros((1, 1)))


def test_eval_V_identity_and_zero():
    V = BiquadraticLyapunov(np.eye(6), 2)
    x, p = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    assert np.isclose(eval_V(V, x, p), (1 + p @ p) * (x @ x))
    assert eval_V(V, np.zeros(2), p) == 0.0


def test_eval_V_blockwise_expansion():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((6, 6))
    P = M @ M.T + np.eye(6)
    x, p = rng.standard_normal(2), rng.standard_normal(2)
    th = np.concatenate([[1.0], p])
    expect = sum(th[i] * th[j] * x @ P[2 * i:2 * i + 2, 2 * j:2 * j + 2] @ x for i in range(3) for j in range(3))
    assert np.isclose(eval_V(BiquadraticLyapunov(P, 2), x, p), expect)


def test_eval_V_dimension_errors():
    with pytest.raises(ValueError):
        eval_V(BiquadraticLyapunov(np.eye(6), 2), np.ones(3), np.ones(2))
    with pytest.raises(ValueError):
        BiquadraticLyapunov(-np.eye(2), 2)


def test_scalar_decrease():
    V = BiquadraticLyapunov(np.eye(1), 1)
    assert decrease_lmi(scalar(0.5), None, V, [])[1]
    assert not decrease_lmi(scalar(1.5), None, V, [])[1]


def test_singular_P_is_an_error():
    from ddlpv.linalg import chol_inv
    with pytest.raises(ValueError):
        BiquadraticLyapunov(np.diag([1.0, 1e-14]), 2)
    with pytest.raises(np.linalg.LinAlgError):
        chol_inv(np.diag([1.0, 1e-13]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_three_forms_agree(seed):
    rng = np.random.default_rng(seed)
    n_x, n_p, n_u = 2, 1, 1
    scale = rng.uniform(0.1, 1.2)
    plant = LpvPlant(tuple(rng.standard_normal((n_x, n_x)) * scale / 2 for _ in range(1 + n_p)),
                     rng.standard_normal((n_x, n_u)))
    gain = AffineGain(tuple(rng.standard_normal((n_u, n_x)) * 0.1 for _ in range(1 + n_p)))
    M = rng.standard_normal((4, 4))
    V = BiquadraticLyapunov(M @ M.T + 0.5 * np.eye(4), n_x)
    p = rng.uniform(-1, 1, n_p)
    verdicts = {decrease_lmi(plant, gain, V, p)[1], decrease_dual(plant, gain, V, p)[1],
                decrease_primal(plant, gain, V, p)[1]}
    assert len(verdicts) == 1


def test_polytope_check_open_loop_unstable_at_large_range():
    plant, _, poly = example_plant(5.0)
    chk = check_decrease_on_polytope(plant, AffineGain.zero(2, 2, 2), BiquadraticLyapunov(np.eye(6), 2), poly)
    assert not chk.ok and chk.worst_margin < 0


def test_polytope_check_lti_reduction():
    V = BiquadraticLyapunov(np.eye(1), 1)
    chk = check_decrease_on_polytope(scalar(0.5), None, V, SchedulingPolytope.trivial())
    assert chk.ok and chk.margins.shape == (1,)


def test_audit_stable_and_unstable_scalar():
    V = BiquadraticLyapunov(np.eye(1), 1)
    sched = SchedulingMap.constant([], 10)
    good = simulate(scalar(0.5), sched, [1.0], 10, gain=AffineGain.zero(1, 1, 0))
    assert trajectory_decrease_audit(good, V).ok
    bad = simulate(scalar(1.5), sched, [1.0], 10, gain=AffineGain.zero(1, 1, 0))
    rep = trajectory_decrease_audit(bad, V)
    assert len(rep.violations) == 10
    assert '"violations"' in rep.to_json()


def test_lifted_state_identity():
    rng = np.random.default_rng(4)
    plant = LpvPlant(tuple(rng.standard_normal((2, 2)) * 0.3 for _ in range(3)), rng.standard_normal((2, 1)))
    gain = AffineGain(tuple(rng.standard_normal((1, 2)) * 0.1 for _ in range(3)))
    sched = SchedulingMap.exogenous(rng.uniform(-1, 1, (6, 2)))
    traj = simulate(plant, sched, rng.standard_normal(2), 5, gain=gain)
    M = rng.standard_normal((6, 6))
    V = BiquadraticLyapunov(M @ M.T + np.eye(6), 2)
    from ddlpv.lpv import closed_loop_matrix, lift_scheduling
    cl = closed_loop_matrix(plant, gain)
    for k in range(4):
        xi = lift_scheduling(traj.p[k], 2) @ traj.x[k]
        Mk = lift_scheduling(traj.p[k + 1], 2) @ cl
        assert np.isclose(eval_V(V, traj.x[k + 1], traj.p[k + 1]), xi @ Mk.T @ V.P @ Mk @ xi)
