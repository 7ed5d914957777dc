import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenario_cbf.cbf_core import superellipsoid_h
from scenario_cbf.qp import solve
from scenario_cbf.quadcopter import (
    QuadParams,
    QuadState,
    TrajectoryLog,
    accel_to_attitude,
    attitude_to_accel,
    build_step_qp,
    evaluate_run,
    goal_cost_terms,
    rotation_matrix,
    run_closed_loop,
    solve_step,
    step_dynamics,
)
from scenario_cbf.scenario import DisturbanceModel

angles = st.floats(-math.pi, math.pi)


# --- attitude ----------------------------------------------------------------

def test_rotation_identity():
    assert np.array_equal(rotation_matrix(0, 0, 0), np.eye(3))


def test_rotation_roll_quarter_turn():
    R = rotation_matrix(math.pi / 2, 0, 0)
    assert R == pytest.approx(np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]]), abs=1e-15)


def test_rotation_orthonormal_1000(rng):
    for _ in range(1000):
        R = rotation_matrix(*rng.uniform(-math.pi, math.pi, 3))
        assert np.max(np.abs(R.T @ R - np.eye(3))) <= 1e-12
        assert abs(np.linalg.det(R) - 1.0) <= 1e-12


@given(angles, angles, angles)
def test_rotation_orthonormal_property(phi, theta, psi):
    R = rotation_matrix(phi, theta, psi)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)


def test_hover_attitude():
    assert accel_to_attitude([0, 0, 0], 0.0, 1.0, 9.81) == (0.0, 0.0, 9.81)


def test_forward_x_acceleration_pitch():
    phi, theta, thrust = accel_to_attitude([9.81, 0, 0], 0.0, 1.0, 9.81)
    assert theta == pytest.approx(1.0) and phi == pytest.approx(0.0)


def test_attitude_round_trip(rng):
    for _ in range(100):
        u = rng.uniform(-5, 5, 3)
        psi = rng.uniform(-math.pi, math.pi)
        mass = rng.uniform(0.5, 3.0)
        phi, theta, thrust = accel_to_attitude(u, psi, mass)
        back = attitude_to_accel(phi, theta, psi, thrust, mass)
        assert np.max(np.abs(back - u)) <= 1e-12


def test_planar_attitude_has_hover_thrust():
    _, _, thrust = accel_to_attitude([1.0, 2.0], 0.3, 2.0, 9.81)
    assert thrust == pytest.approx(2 * 9.81)


# --- dynamics ----------------------------------------------------------------

def test_step_from_rest():
    s = step_dynamics(QuadState.at_rest([0, 0]), [1, 0], 0.1)
    assert s.r == pytest.approx([0.005, 0.0], abs=1e-15)
    assert s.rdot == pytest.approx([0.1, 0.0], abs=1e-15)


def test_step_uniform_motion():
    s = step_dynamics(QuadState([1.0, 2.0], [0.5, -1.0]), [0, 0], 0.2)
    assert s.r == pytest.approx([1.1, 1.8]) and s.rdot.tolist() == [0.5, -1.0]


@settings(max_examples=100)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.floats(1e-3, 1.0))
def test_two_half_steps_equal_one(vals, dt):
    s = QuadState(vals[0:2], vals[2:4])
    u = np.array(vals[4:6])
    a = step_dynamics(step_dynamics(s, u, dt / 2), u, dt / 2)
    b = step_dynamics(s, u, dt)
    assert a.r == pytest.approx(b.r, abs=1e-12)
    assert a.rdot == pytest.approx(b.rdot, abs=1e-12)


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_dynamics(QuadState.at_rest([0, 0]), [0, 0], 0.0)


def test_state_validation():
    with pytest.raises(ValueError):
        QuadState([0, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        QuadState([np.nan, 0], [0, 0])


# --- parameters ----------------------------------------------------------------

def test_params_validation():
    with pytest.raises(ValueError):
        QuadParams(dt=0.0)
    with pytest.raises(ValueError):
        QuadParams(goal_tol=-1)
    with pytest.raises(ValueError):
        QuadParams(cost_F=-np.eye(2))
    with pytest.raises(ValueError):
        QuadParams(goal=[1.0, 2.0, 3.0])


def test_params_round_trip():
    p = QuadParams(dt=0.05, preview=None, n_scenarios=17, redraw_truth=True)
    q = QuadParams.from_dict(json.loads(json.dumps(p.to_dict())))
    assert q.to_dict() == p.to_dict()
    with pytest.raises(ValueError):
        QuadParams.from_dict({"nonsense": 1})


def test_sample_count_defaults_to_campi():
    assert QuadParams().sample_count() == 216
    assert QuadParams().with_epsilon(0.001).sample_count() == 39618
    assert QuadParams(bound_formula="eq8").sample_count() == 281


# --- step QP ---------------------------------------------------------------------

def _cost(u, s, p, T):
    # scalar goal cost written out directly
    r_pred = s.r + s.rdot * T + 0.5 * u * T * T
    e = r_pred - p.goal
    return e @ p.cost_F @ e + u @ p.cost_G @ u


@pytest.mark.parametrize("preview", [None, 1.0])
def test_cost_terms_match_finite_differences(preview, rng):
    p = QuadParams(preview=preview, cost_F=np.array([[2.0, 0.3], [0.3, 1.0]]))
    T = p.lookahead
    for _ in range(20):
        s = QuadState(rng.uniform(0, 8, 2), rng.uniform(-1, 1, 2))
        H, c = goal_cost_terms(s, p)
        if preview is None:
            assert H == pytest.approx(2 * (0.25 * p.dt**4 * p.cost_F + p.cost_G), rel=1e-14)
            assert c == pytest.approx(p.dt**2 * p.cost_F @ (s.r + s.rdot * p.dt - p.goal), rel=1e-14)
        u0 = rng.uniform(-3, 3, 2)
        h = 1e-3
        grad = np.zeros(2)
        hess = np.zeros((2, 2))
        E = np.eye(2) * h
        for i in range(2):
            grad[i] = (_cost(u0 + E[i], s, p, T) - _cost(u0 - E[i], s, p, T)) / (2 * h)
            for j in range(2):
                hess[i, j] = (_cost(u0 + E[i] + E[j], s, p, T) - _cost(u0 + E[i] - E[j], s, p, T)
                              - _cost(u0 - E[i] + E[j], s, p, T) + _cost(u0 - E[i] - E[j], s, p, T)) / (4 * h * h)
        assert H == pytest.approx(hess, rel=1e-5, abs=1e-8)
        assert H @ u0 + c == pytest.approx(grad, rel=1e-6, abs=1e-8)


def test_zero_goal_weight_gives_zero_control():
    p = QuadParams(cost_F=np.zeros((2, 2)))
    s = QuadState.at_rest([0.5, 0.5])
    qp = build_step_qp(s, p, np.linspace(-0.1, 0.1, 20))
    assert np.max(np.abs(solve(qp.to_problem()).u_star)) <= 1e-12


def test_at_goal_control_is_zero():
    p = QuadParams.from_dict({"obstacle": [100.0, 100.0]})
    s = QuadState.at_rest(p.goal)
    qp = build_step_qp(s, p, np.linspace(-0.1, 0.1, 50))
    assert np.linalg.norm(solve(qp.to_problem()).u_star) <= 1e-6


def test_step_qp_one_row_per_scenario():
    p = QuadParams()
    ds = np.linspace(-0.1, 0.1, 33)
    qp = build_step_qp(QuadState([6.8, 7.0], [0.5, 0.4]), p, ds)
    assert qp.n_scenarios == 33
    assert np.allclose(np.linalg.norm(qp.A, axis=1), 1.0)


def test_step_qp_rows_are_ecbf_halfplanes():
    # unit scaling must not change which u satisfy each row
    from scenario_cbf.cbf_core import ecbf_halfplane

    p = QuadParams()
    s = QuadState([6.9, 7.1], [0.6, 0.2])
    ds = [-0.08, 0.0, 0.05]
    qp = build_step_qp(s, p, ds)
    rng = np.random.default_rng(0)
    for k, d in enumerate(ds):
        raw = ecbf_halfplane(s.r, s.rdot, p.cbf, d, p.ecbf)
        for u in rng.uniform(-5, 5, (50, 2)):
            assert (raw.value(u) <= 0) == (qp.A[k] @ u - qp.b[k] <= 0)


def test_solve_step_prunes_and_audits():
    p = QuadParams().with_epsilon(0.01)
    s = QuadState([6.8, 7.0], [0.8, 0.6])
    ds = np.random.default_rng(2).uniform(-0.1, 0.1, p.sample_count())
    qp = build_step_qp(s, p, ds)
    pruned = solve_step(qp, "exact-2d")
    full = solve_step(qp, None)
    assert pruned.kept_rows < qp.n_scenarios
    assert pruned.u == pytest.approx(full.u, abs=1e-8)
    assert pruned.max_violation <= 1e-8 and not pruned.fallback


def test_solve_step_falls_back_on_infeasible():
    # a tiny box that cannot satisfy the barrier right next to the obstacle
    p = QuadParams(u_lower=-1e-3, u_upper=1e-3)
    s = QuadState([7.5 - 0.45, 7.5], [0.6, 0.0])
    qp = build_step_qp(s, p, [0.0, 0.05])
    res = solve_step(qp, "exact-2d")
    assert res.fallback and res.status == "fallback"


# --- closed loop -------------------------------------------------------------------

def test_start_at_goal():
    p = QuadParams()
    log = run_closed_loop(p, QuadState.at_rest(p.goal), seed=0)
    assert len(log) == 1 and log.arrived
    summ = evaluate_run(log, p)
    assert summ.time_to_goal == 0.0 and summ.incursion_steps == 0 and summ.path_length == 0.0


def test_far_obstacle_straight_run():
    p = QuadParams.from_dict({"obstacle": [107.5, 107.5], "disturbance": {"kind": "finite-set", "values": [0.0]}})
    log = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=0)
    summ = evaluate_run(log, p)
    assert log.arrived and np.all(log.hbar_true > 0)
    assert summ.incursion_steps == 0
    # the barrier rows never bind
    assert np.all(log.active_count == 0)


def test_case_study_run_bends_around_obstacle():
    p = QuadParams()
    log = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=1)
    summ = evaluate_run(log, p)
    assert log.arrived and summ.incursion_steps == 0
    # the straight line passes through the obstacle centre region; the run does not
    assert summ.path_length > np.linalg.norm(p.goal - np.array([0.5, 0.5]))
    assert summ.min_hbar > 0
    assert np.nanmax(log.max_violation) <= 1e-8


def test_deterministic_case_is_safe():
    p = QuadParams(disturbance=DisturbanceModel.finite([0.0]))
    log = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=0)
    assert log.arrived and np.all(log.hbar_true >= 0)
    assert log.t[-1] < p.horizon


def test_log_invariants():
    p = QuadParams()
    log = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=3)
    assert np.allclose(np.diff(log.t), p.dt)
    assert np.all(np.diff(log.t) > 0)
    assert len(log) <= p.horizon / p.dt + 1
    assert log.meta["n_scenarios"] == 216 and log.meta["bound_formula"] == "campi"
    assert -0.1 <= log.meta["d_true"] <= 0.1
    # hbar is logged at the true offset
    k = len(log) // 2
    assert log.hbar_true[k] == pytest.approx(superellipsoid_h(log.r[k], None, p.cbf, log.meta["d_true"]))


def test_horizon_termination():
    p = QuadParams(horizon=1.0)
    log = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=0)
    assert not log.arrived and log.qp_status[-1] == "horizon"
    assert len(log) == 11
    assert math.isnan(evaluate_run(log, p).time_to_goal)


def test_run_determinism():
    p = QuadParams()
    a = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=5)
    b = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=5)
    for name in ("t", "r", "rdot", "u", "hbar_true", "active_count"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True), name
    assert a.qp_status == b.qp_status and a.meta == b.meta
    c = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=6)
    assert c.meta["d_true"] != a.meta["d_true"]


def test_redraw_truth_option():
    p = QuadParams(redraw_truth=True, horizon=2.0)
    log = run_closed_loop(p, QuadState.at_rest([6.5, 6.5]), seed=0)
    # with a per-step offset, hbar no longer matches a single d
    d0 = log.meta["d_true"]
    hs = [superellipsoid_h(r, None, p.cbf, d0) for r in log.r]
    assert not np.allclose(hs[1:], log.hbar_true[1:])


def test_three_dimensional_run():
    p = QuadParams.from_dict({
        "obstacle": [7.5, 7.5, 1.0], "shape": [0.4, 0.4, 0.4], "goal": [7.9, 8.1, 1.0],
        "cost_F": np.eye(3).tolist(), "cost_G": (0.1 * np.eye(3)).tolist(), "horizon": 30.0,
    })
    assert p.prune_mode == "dominance"
    log = run_closed_loop(p, QuadState.at_rest([0.5, 0.5, 1.0]), seed=0)
    assert log.arrived and np.all(log.hbar_true >= 0)
    assert log.csv_header()[1:4] == ["r_x", "r_y", "r_z"]


def test_start_dimension_checked():
    with pytest.raises(ValueError):
        run_closed_loop(QuadParams(), QuadState.at_rest([0, 0, 0]), 0)


# --- evaluation and serialization ----------------------------------------------------

def _synthetic_log(hbar):
    n = len(hbar)
    r = np.column_stack([np.linspace(0, 1, n), np.zeros(n)])
    return TrajectoryLog(
        t=0.1 * np.arange(n), r=r, rdot=np.zeros((n, 2)), u=np.zeros((n, 2)),
        hbar_true=np.array(hbar, dtype=float), qp_status=["optimal"] * n,
        active_count=np.zeros(n, dtype=int), solve_ms=np.zeros(n), max_violation=np.zeros(n),
    )


def test_evaluate_single_incursion():
    p = QuadParams()
    s = evaluate_run(_synthetic_log([1.0, 0.5, -0.2, 0.3]), p)
    assert s.incursion_steps == 1
    assert s.incursion_duration == pytest.approx(p.dt)
    assert s.min_hbar == -0.2
    assert s.path_length == pytest.approx(1.0)


def test_evaluate_no_incursion():
    s = evaluate_run(_synthetic_log([1.0, 0.0, 2.0]), QuadParams())
    assert s.incursion_steps == 0 and s.fallback_steps == 0


def test_csv_round_trip(tmp_path):
    p = QuadParams()
    log = run_closed_loop(p, QuadState.at_rest([0.5, 0.5]), seed=2)
    path = tmp_path / "traj.csv"
    log.to_csv(path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.decode("utf-8").splitlines()[0] == (
        "t,r_x,r_y,v_x,v_y,u_x,u_y,hbar_true,qp_status,active_count,solve_ms")
    back = TrajectoryLog.read_csv(path)
    for name in ("t", "r", "rdot", "u", "hbar_true", "active_count"):
        assert np.array_equal(getattr(back, name), getattr(log, name), equal_nan=True), name
    assert back.qp_status == log.qp_status
    log.write_metadata(tmp_path / "traj.json")
    meta = json.loads((tmp_path / "traj.json").read_text())
    assert meta["seed"] == 2 and meta["params"]["epsilon"] == 0.1 and "rng" in meta
