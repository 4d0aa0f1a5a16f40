import numpy as np
import pytest

from ddlpv.lpv import (AffineGain, LpvPlant, SchedulingMap, SchedulingPolytope, SimulationDiverged, Trajectory,
                       UniformNoise, closed_loop_matrix, eval_A, example_plant, lift_scheduling, simulate)


def test_lift_scheduling_shape_and_action():
    L = lift_scheduling([2.0, -1.0], 2)
    assert L.shape == (6, 2)
    x = np.array([1.0, 3.0])
    assert np.allclose(L @ x, [1, 3, 2, 6, -1, -3])
    assert np.allclose(lift_scheduling([], 3), np.eye(3))


def test_box_polytope_vertices_and_membership():
    P = SchedulingPolytope.box([-1, -2], [1, 2])
    assert P.n_v == 4 and P.n_p == 2
    assert P.contains([0.5, -1.9])
    assert not P.contains([1.1, 0.0])
    pts = P.sample_interior(50, np.random.default_rng(0))
    assert all(P.contains(p) for p in pts)


def test_trivial_polytope():
    P = SchedulingPolytope.trivial()
    assert P.n_p == 0 and P.n_v == 1


def test_stacked_roundtrip_and_eval_A():
    rng = np.random.default_rng(1)
    A = tuple(rng.standard_normal((2, 2)) for _ in range(3))
    plant = LpvPlant(A, rng.standard_normal((2, 1)))
    back = LpvPlant.from_stacked(plant.AB, 2, 2)
    assert np.allclose(back.stacked, plant.stacked) and np.allclose(back.B, plant.B)
    p = np.array([0.3, -0.7])
    assert np.allclose(eval_A(plant, p), A[0] + 0.3 * A[1] - 0.7 * A[2])
    assert np.allclose(plant.stacked @ lift_scheduling(p, 2), eval_A(plant, p))


def test_gain_evaluation_matches_closed_loop():
    rng = np.random.default_rng(2)
    plant = LpvPlant(tuple(rng.standard_normal((2, 2)) for _ in range(2)), rng.standard_normal((2, 2)))
    gain = AffineGain(tuple(rng.standard_normal((2, 2)) for _ in range(2)))
    x, p = rng.standard_normal(2), np.array([0.4])
    direct = eval_A(plant, p) @ x + plant.B @ gain(x, p)
    assert np.allclose(closed_loop_matrix(plant, gain) @ lift_scheduling(p, 2) @ x, direct)


def test_gain_dimension_mismatch():
    plant = LpvPlant((np.eye(2),), np.ones((2, 1)))
    with pytest.raises(ValueError):
        closed_loop_matrix(plant, AffineGain.zero(1, 2, 1))


def test_simulation_noise_free_linear_recursion():
    plant, sched, _ = example_plant(1.0)
    gain = AffineGain.zero(2, 2, 2)
    traj = simulate(plant, sched, [0.2, -0.1], 5, gain=gain)
    for k in range(5):
        assert np.allclose(traj.x[k + 1], eval_A(plant, traj.p[k]) @ traj.x[k])
        assert np.allclose(traj.p[k], [np.sin(traj.x[k, 0]), np.cos(traj.x[k, 1])])


def test_noise_streams_are_pure_functions_of_k():
    nz = UniformNoise(2, 0.1, 5)
    a = [nz(k) for k in range(4)]
    b = [nz(k) for k in reversed(range(4))][::-1]
    assert np.allclose(a, b)
    assert all(np.all(np.abs(w) <= 0.1) for w in a)
    assert np.allclose(UniformNoise(2, 0.0, 5)(3), 0)


def test_divergence_is_reported():
    plant = LpvPlant((np.array([[1e200]]),), np.zeros((1, 1)))
    with pytest.raises(SimulationDiverged) as err:
        simulate(plant, SchedulingMap.constant([], 10), [1e200], 10, gain=AffineGain.zero(1, 1, 0))
    assert err.value.step >= 1


def test_csv_roundtrip():
    plant, sched, _ = example_plant(5.0)
    traj = simulate(plant, sched, [0.3, 0.1], 6, inputs=lambda k: np.array([0.1 * k, -0.2]),
                    noise=UniformNoise(2, 0.1, 3))
    text = traj.to_csv()
    assert text.splitlines()[0] == "k,x1,x2,u1,u2,p1,p2,w1,w2"
    back = Trajectory.from_csv(text)
    for name in "xupw":
        assert np.array_equal(getattr(back, name), getattr(traj, name))


def test_example_plant_rejects_bad_delta():
    with pytest.raises(ValueError):
        example_plant(0.0)


def test_exogenous_scheduling_runs_out():
    s = SchedulingMap.exogenous([[0.1], [0.2]])
    assert np.allclose(s(1, None), [0.2])
    with pytest.raises(IndexError):
        s(2, None)
