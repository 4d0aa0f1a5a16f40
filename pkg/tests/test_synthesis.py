import numpy as np
import pytest

from ddlpv.consistency import build_consistency_qmi, schedule_lift_qmi
from ddlpv.data import build_dataset, energy_bound_from_noise, noise_model_from_energy_bound
from ddlpv.experiment import consistency_from_record
from ddlpv.lmi import FEASIBLE
from ddlpv.lpv import (GaussianInput, LpvPlant, SchedulingMap, SchedulingPolytope, UniformNoise, example_plant,
                       lift_scheduling, simulate)
from ddlpv.synthesis import (SynthesisResult, analyze_stability, assemble_blf_vertex_constraint,
                             assemble_blf_vertex_constraint_ball, fbsp_blocks, fbsp_vertex_expr, recover_controller,
                             synthesize_blf, synthesize_fbsp, synthesize_slf_baseline)
from ddlpv.verify import certify_decrease
from tests.conftest import random_lpv_instance


def lti_consistency(A, B, N=12, w_max=0.0, seed=0):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B) if np.size(B) else np.zeros((A.shape[0], 0))
    plant = LpvPlant((A,), B)
    traj = simulate(plant, SchedulingMap.constant([], N), np.ones(A.shape[0]), N,
                    inputs=GaussianInput(B.shape[1], 1.0, seed), noise=UniformNoise(A.shape[0], w_max, seed))
    ds = build_dataset(traj)
    _, c = consistency_from_record(ds, traj.w.T)
    return c


def numeric_vars(n, n_u, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    return M @ M.T + np.eye(n), rng.standard_normal((n_u, n)), abs(rng.standard_normal()), 0.05


def test_vertex_constraint_size(example_instance):
    c = example_instance[-1]
    e = assemble_blf_vertex_constraint(schedule_lift_qmi(c, [1.0, -1.0]), (2, 2, 2))
    assert e.shape == (20, 20)
    assert {v.name for v in e.variables} == {"F", "G", "alpha", "beta"}


def test_vertex_constraint_numeric_assembly(example_instance):
    c = example_instance[-1]
    F, G, a, b = numeric_vars(6, 2, 0)
    Up = schedule_lift_qmi(c, [0.3, 2.0])
    Z = np.zeros
    H = np.block([[F - b * np.eye(6), Z((6, 6)), Z((6, 2)), Z((6, 6))],
                  [Z((6, 6)), Z((6, 6)), Z((6, 2)), F],
                  [Z((2, 6)), Z((2, 6)), Z((2, 2)), G],
                  [Z((6, 6)), F, G.T, F]])
    U = np.zeros((20, 20))
    U[:14, :14] = Up.Psi
    e = assemble_blf_vertex_constraint(Up, (2, 2, 2), F, G, a, b)
    assert np.allclose(e.const, H - a * U)


def test_ball_form_is_a_congruence(example_instance):
    c = example_instance[-1]
    for seed in range(10):
        F, G, a, b = numeric_vars(6, 2, seed)
        p = np.random.default_rng(seed).uniform(-5, 5, 2)
        raw = assemble_blf_vertex_constraint(schedule_lift_qmi(c, p), (2, 2, 2), F, G, a, b).const
        ball = assemble_blf_vertex_constraint_ball(c.ball, p, (2, 2, 2), F, G, a, b).const
        L = lift_scheduling(p, 2)
        T = np.eye(20)
        T[6:14, :6] = c.ball.center @ L.T
        T[6:14, 6:14] = c.ball.D_inv_sqrt
        assert np.allclose(T.T @ raw @ T, ball, atol=1e-7 * (1 + np.abs(raw).max()))


def test_scalar_lti_deadbeat_oracle():
    c = lti_consistency(2.0, 1.0)
    res = synthesize_blf(c, SchedulingPolytope.trivial())
    assert res.status == FEASIBLE
    gain, _ = recover_controller(res)
    assert abs(2.0 + gain.K[0][0, 0]) < 1


def test_np0_blf_and_slf_coincide():
    c = lti_consistency(np.array([[1.1, 0.3], [0.0, 0.7]]), np.array([[0.0], [1.0]]), w_max=0.01)
    poly = SchedulingPolytope.trivial()
    a = synthesize_blf(c, poly)
    b = synthesize_slf_baseline(c, poly)
    assert a.status == b.status == FEASIBLE
    assert np.isclose(a.slack, b.slack, atol=1e-5)


def test_analysis_scalar_oracles():
    stable = lti_consistency(0.5, [], N=6)
    assert stable.n_u == 0
    assert analyze_stability(stable, SchedulingPolytope.trivial()).status == FEASIBLE
    unstable = lti_consistency(1.5, [], N=6, w_max=1e-4)
    assert analyze_stability(unstable, SchedulingPolytope.trivial()).status != FEASIBLE


def test_analysis_equals_blf_when_no_inputs():
    c = lti_consistency(np.array([[0.5, 0.2], [0.0, 0.4]]), [], N=6, w_max=1e-3)
    poly = SchedulingPolytope.trivial()
    a, b = analyze_stability(c, poly), synthesize_blf(c, poly)
    assert a.status == b.status and np.isclose(a.slack, b.slack, atol=1e-6)


def test_recover_controller_identities():
    rng = np.random.default_rng(0)
    G = rng.standard_normal((2, 6))
    res = SynthesisResult("BLF", FEASIBLE, 2, 2, 2, F=np.eye(6), G=G)
    gain, V = recover_controller(res)
    assert np.allclose(gain.stacked, G) and np.allclose(V.P, np.eye(6))
    gain0, _ = recover_controller(SynthesisResult("BLF", FEASIBLE, 2, 2, 2, F=np.eye(6), G=np.zeros((2, 6))))
    assert not np.any(gain0.stacked)
    M = rng.standard_normal((6, 6))
    F = M @ M.T + np.eye(6)
    gain, _ = recover_controller(SynthesisResult("BLF", FEASIBLE, 2, 2, 2, F=F, G=G))
    assert np.linalg.norm(gain.stacked @ F - G) <= 1e-10 * (1 + np.linalg.norm(G))
    with pytest.raises(ValueError):
        recover_controller(SynthesisResult("BLF", "Infeasible", 2, 2, 2))


def test_fbsp_block_shapes(example_instance):
    c = example_instance[-1]
    _, _, poly = example_plant(5.0)
    F, G, a, b = numeric_vars(6, 2, 1)
    blk = fbsp_blocks(c, poly, F, G, a, b, 0.01)
    assert blk.L11.shape == (4, 4) and blk.L12.shape == (4, 20)
    assert blk.Delta[0].shape == (4, 4) and len(blk.Delta) == 4
    assert blk.M.shape[1] == 24
    assert blk.L21.shape[0] == blk.L22.shape[0] == blk.Theta.shape[0]


@pytest.mark.parametrize("conditioning", ["raw", "ball"])
def test_fbsp_lfr_reproduces_vertex_lmi(example_instance, conditioning):
    c = example_instance[-1]
    _, _, poly = example_plant(5.0)
    F, G, a, b = numeric_vars(6, 2, 2)
    eps = 0.01
    blk = fbsp_blocks(c, poly, F, G, a, b, eps, conditioning)
    p = np.array([1.3, -4.0])
    Delta = np.kron(np.diag(p), np.eye(2))
    Y = blk.L22 + blk.L21 @ Delta @ blk.L12
    lfr = -(Y.T @ blk.Theta.const @ Y)
    raw = assemble_blf_vertex_constraint(schedule_lift_qmi(c, p), (2, 2, 2), F, G, a, b).const
    if conditioning == "ball":
        T = np.eye(20)
        T[6:14, 6:14] = c.ball.D_inv_sqrt
        raw = T.T @ raw @ T
    assert np.allclose(lfr, raw - eps * np.eye(20), atol=1e-7 * (1 + np.abs(raw).max()))


def test_fbsp_multiplier_zero_vertex():
    Xi = -np.eye(4)
    Xi[:2, :2] = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(fbsp_vertex_expr(Xi, np.zeros((2, 2))).const, Xi[:2, :2])


def test_fbsp_feasible_result_certifies():
    plant, ds, W, c = random_lpv_instance(3)
    poly = SchedulingPolytope.box([-1], [1])
    res = synthesize_fbsp(c, poly)
    assert res.status == FEASIBLE
    assert res.extra["eps"] > 0 and np.linalg.eigvalsh(res.extra["Xi"][2:, 2:]).max() < 0
    assert certify_decrease(res, c, poly, n_systems=50, n_p_samples=20).passed


def test_blf_monotone_in_noise_bound(example_instance):
    _, _, ds, W, _, c = example_instance
    _, _, poly = example_plant(1.0)
    assert synthesize_blf(c, poly).status == FEASIBLE
    for g in (0.5, 0.1):
        noise = noise_model_from_energy_bound(g * energy_bound_from_noise(W), ds.N_d)
        cg = build_consistency_qmi(ds, noise)
        assert synthesize_blf(cg, poly).status == FEASIBLE


def test_raw_form_agrees_on_benign_instance():
    _, _, _, c = random_lpv_instance(7)
    poly = SchedulingPolytope.box([-1], [1])
    assert synthesize_blf(c, poly, form="raw").status == synthesize_blf(c, poly).status == FEASIBLE


def test_grid_mode_is_flagged(example_instance):
    c = example_instance[-1]
    _, _, poly = example_plant(1.0)
    res = synthesize_blf(c, poly, grid=[[0.0, 0.0], [0.5, 0.5]])
    assert not res.certified and any("NON-CERTIFIED" in n for n in res.notes)


def test_result_json_roundtrip(example_instance):
    c = example_instance[-1]
    _, _, poly = example_plant(1.0)
    res = synthesize_blf(c, poly)
    back = SynthesisResult.from_json(res.to_json())
    assert back.status == res.status and np.allclose(back.F, res.F) and np.allclose(back.G, res.G)
    assert back.alphas == pytest.approx(res.alphas)
    d = res.to_dict()
    assert "wall_time_s" in d["timing"] and "wall_time" not in d
