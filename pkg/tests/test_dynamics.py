import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

import containment as ct
from containment.dynamics import (
    Schedule,
    Trajectory,
    f0,
    f1,
    f_full,
    f_reduced,
    flow,
    flow_batch,
    killing_time,
    rescale_time,
)
from containment.equilibria import a_star, h_star


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

def test_schedule_left_closed_and_holds_last_dose():
    s = Schedule.from_pairs([(2.0, 0.5), (3.0, 1.0)])
    assert s.dose_at(0.0) == 0.5
    assert s.dose_at(2.0) == 1.0  # switch time belongs to the new segment
    assert s.dose_at(4.9) == 1.0
    assert s.dose_at(100.0) == 1.0  # held beyond the end


def test_schedule_repeat_cycles():
    s = Schedule.from_pairs([(2.0, 0.5), (3.0, 1.0)], repeat=True)
    assert s.dose_at(5.0) == 0.5
    assert s.dose_at(7.5) == 1.0
    spans = list(s.iter_segments(12.0))
    assert spans[0] == (0.0, 2.0, 0.5)
    assert spans[-1][1] == 12.0


def test_schedule_validation():
    with pytest.raises(ValueError, match="duration"):
        Schedule.from_pairs([(-1.0, 0.5)])
    with pytest.raises(ValueError, match="at least one"):
        Schedule(segments=())
    s = Schedule.from_pairs([(1.0, 2.0)])
    with pytest.raises(ValueError, match="outside"):
        s.validate_range((0.0, 1.0))


def test_random_schedule_respects_bounds():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = Schedule.random(rng, (0.3, 1.75))
        assert 1 <= len(s.segments) <= 20
        for dur, dose in s.segments:
            assert 0.1 <= dur <= 50.0
            assert 0.3 <= dose <= 1.75


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------

def test_fields_vanish_on_extinction_line(preset_a):
    x = np.array([[0.3, 0.0], [-0.2, 0.0]])
    assert np.all(f0(x, preset_a) == 0.0)
    assert np.all(f1(x, preset_a) == 0.0)


def test_dose_direction_sign_structure(preset_a):
    rng = np.random.default_rng(1)
    x = np.column_stack([rng.uniform(-0.5, 1.5, 200), rng.uniform(1e-3, 1.2, 200)])
    v = f1(x, preset_a)
    assert np.all(v[:, 0] > 0)  # treatment always pushes resistance up
    assert np.all(v[:, 1] < 0)  # and population down


def test_affine_structure(preset_c):
    rng = np.random.default_rng(2)
    x = np.column_stack([rng.uniform(-0.5, 1.5, 100), rng.uniform(0, 1.2, 100)])
    for a in (0.0, 0.4, 1.1):
        assert np.allclose(f_full(x, a, preset_c),
                           f0(x, preset_c) + a * f1(x, preset_c), rtol=1e-12)
    assert np.allclose(f_full(x, 0.0, preset_c), f0(x, preset_c))


def test_f0_vanishes_at_untreated_equilibrium(preset_a):
    u0 = brentq(lambda u: float(a_star(u, preset_a)), 0.05, 0.15, xtol=1e-14)
    x = np.array([u0, float(h_star(u0, preset_a))])
    assert np.abs(f0(x, preset_a)).max() < 1e-12


def test_f0_matches_numerical_differentiation(preset_a):
    # trait component rebuilt from finite differences of b0 and c
    x = np.array([0.3, 0.5])
    d = 1e-6
    fd_b0 = (float(preset_a.b0(0.3 + d)) - float(preset_a.b0(0.3 - d))) / (2 * d)
    fd_c = (float(preset_a.c(0.3 + d)) - float(preset_a.c(0.3 - d))) / (2 * d)
    expected_u = preset_a.epsilon * float(preset_a.k(0.5)) * (fd_b0 - fd_c * 0.5)
    assert float(f0(x, preset_a)[0]) == pytest.approx(expected_u, rel=1e-8)


def test_full_equals_rate_times_reduced(preset_c):
    rng = np.random.default_rng(3)
    x = np.column_stack([rng.uniform(-0.5, 1.5, 100), rng.uniform(1e-4, 1.2, 100)])
    for a in (0.2, 0.9):
        full = f_full(x, a, preset_c)
        red = f_reduced(x, a, preset_c)
        kn = np.asarray(preset_c.k(x[:, 1]))[:, None]
        assert np.allclose(full, kn * red, rtol=1e-12)


def test_reduced_identity_rate_form(preset_a):
    x = np.array([0.4, 0.7])
    a = 0.8
    v = f_reduced(x, a, preset_a)
    assert v[0] == pytest.approx(
        preset_a.epsilon * float(preset_a.b_d1(0.4, a)), rel=1e-14)
    assert v[1] == pytest.approx(float(preset_a.b(0.4, a)) - 0.7, rel=1e-14)


def test_reduced_population_rate_vanishes_on_landscape_graph(preset_a):
    for u, a in ((0.1, 0.5), (0.9, 1.2)):
        x = np.array([u, float(preset_a.h(u, a))])
        assert abs(float(f_reduced(x, a, preset_a)[1])) < 1e-13


def test_angle_condition_affine_identity(preset_c):
    rng = np.random.default_rng(4)
    x = np.column_stack([rng.uniform(-0.5, 1.5, 500), rng.uniform(1e-3, 1.2, 500)])
    a1 = rng.uniform(0, 1.3, 500)
    a2 = rng.uniform(0, 1.3, 500)
    fa1 = f_full(x, a1, preset_c)
    fa2 = f_full(x, a2, preset_c)
    cross = fa1[:, 0] * fa2[:, 1] - fa1[:, 1] * fa2[:, 0]
    f0v, f1v = f0(x, preset_c), f1(x, preset_c)
    base = f0v[:, 0] * f1v[:, 1] - f0v[:, 1] * f1v[:, 0]
    expected = (a2 - a1) * base
    scale = np.maximum(np.abs(cross), np.abs(expected)) + 1e-300
    assert np.all(np.abs(cross - expected) / scale < 1e-10)


# ---------------------------------------------------------------------------
# flows
# ---------------------------------------------------------------------------

def test_flow_holds_equilibrium(preset_a):
    u = 0.15
    a = float(a_star(u, preset_a))
    x0 = np.array([u, float(h_star(u, preset_a))])
    traj = flow(x0, Schedule.constant(a), preset_a, horizon=200.0)
    assert traj.status == "horizon"
    assert np.abs(traj.states - x0).max() < 1e-7


def test_full_system_frozen_on_extinction_line(preset_a):
    traj = flow(np.array([0.4, 0.0]), Schedule.constant(1.0), preset_a,
                system="full", horizon=50.0, eta=None)
    assert np.allclose(traj.states[:, 1], 0.0)
    assert np.allclose(traj.states[:, 0], 0.4)


def test_flow_converges_to_high_dose_node(preset_a):
    # start near the untreated optimum, treat at the maximum dose
    u0 = brentq(lambda u: float(a_star(u, preset_a)), 0.05, 0.15)
    u1 = brentq(lambda u: float(a_star(u, preset_a)) - 1.75, 0.15, 0.25)
    target = np.array([u1, float(h_star(u1, preset_a))])
    x0 = np.array([u0 + 0.01, float(h_star(u0, preset_a))])
    traj = flow(x0, Schedule.constant(1.75), preset_a, horizon=3000.0)
    d = np.hypot(traj.states[:, 0] - target[0], traj.states[:, 1] - target[1])
    assert d[-1] < 1e-5
    assert d[-1] < d[0] / 100


def test_trajectory_validation():
    with pytest.raises(ValueError, match="increasing"):
        Trajectory(t=np.array([0.0, 0.0]), states=np.zeros((2, 2)),
                   dose=np.zeros(2), status="horizon")


# ---------------------------------------------------------------------------
# killing time
# ---------------------------------------------------------------------------

def test_killing_time_zero_on_extinction_line(preset_a):
    assert killing_time(np.array([0.3, 0.0]), 1.0, preset_a) == 0.0


def test_killing_time_infinite_at_stable_node(preset_a):
    u = 0.15
    x0 = np.array([u, float(h_star(u, preset_a))])
    assert killing_time(x0, float(a_star(u, preset_a)), preset_a,
                        t_max=500.0) == math.inf


def test_killing_time_matches_fixed_step_oracle(preset_b):
    # preset (b): low-resistance states die under sustained dosing
    x0 = np.array([0.0, 0.3])
    a = 0.7
    eta = 1e-8
    tk = killing_time(x0, a, preset_b, t_max=200.0, eta=eta)
    assert math.isfinite(tk)

    # oracle: fixed-step RK4 scan with linear interpolation of the crossing
    def rhs(x):
        return f_reduced(x, a, preset_b)

    dt = 1e-3
    x = x0.copy()
    t = 0.0
    t_oracle = None
    for _ in range(int(200.0 / dt)):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x_new = x + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if x_new[1] < eta:
            frac = (x[1] - eta) / (x[1] - x_new[1])
            t_oracle = t + frac * dt
            break
        x, t = x_new, t + dt
    assert t_oracle is not None
    assert tk == pytest.approx(t_oracle, abs=1e-3)


# ---------------------------------------------------------------------------
# time rescaling between the systems
# ---------------------------------------------------------------------------

def _synthetic_traj(n_value):
    t = np.linspace(0.0, 5.0, 201)
    states = np.column_stack([np.zeros_like(t), np.full_like(t, n_value)])
    return Trajectory(t=t, states=states, dose=np.zeros_like(t), status="horizon")


def test_rescale_identity_on_unit_population():
    L = ct.preset("a")
    s = rescale_time(_synthetic_traj(1.0), L)
    assert np.allclose(s, np.linspace(0, 5, 201), rtol=1e-12)


def test_rescale_constant_half_population_doubles_time():
    L = ct.preset("a")
    s = rescale_time(_synthetic_traj(0.5), L)
    assert np.allclose(s, 2 * np.linspace(0, 5, 201), rtol=1e-12)


def test_rescale_strictly_increasing_and_matches_quadrature_oracle(preset_a):
    x0 = np.array([0.1, 0.9])
    traj = flow(x0, Schedule.constant(1.0), preset_a, horizon=30.0)
    s = rescale_time(traj, preset_a)
    assert np.all(np.diff(s) > 0)
    # oracle: augment the reduced system with the clock ds = dt/k(n)
    def rhs(t, y):
        du, dn = f_reduced(y[:2], 1.0, preset_a)
        return [du, dn, 1.0 / float(preset_a.k(y[1]))]

    sol = solve_ivp(rhs, (0, 30.0), [x0[0], x0[1], 0.0], rtol=1e-11, atol=1e-13)
    assert s[-1] == pytest.approx(sol.y[2, -1], rel=1e-4)  # trapezoid on step grid


def test_rescale_reports_divergence_near_extinction(preset_b):
    traj = flow(np.array([0.0, 0.3]), Schedule.constant(0.7), preset_b,
                horizon=100.0, eta=1e-12)
    with pytest.raises(ValueError, match="diverges"):
        rescale_time(traj, preset_b)


def test_full_and_reduced_orbits_agree_after_rescaling(preset_a):
    x0 = np.array([0.1, 0.8])
    red = flow(x0, Schedule.constant(1.2), preset_a, horizon=40.0,
               rtol=1e-11, atol=1e-13)
    s = rescale_time(red, preset_a)
    full = flow(x0, Schedule.constant(1.2), preset_a, system="full",
                horizon=float(s[-1]), rtol=1e-11, atol=1e-13)
    assert np.abs(full.end_state - red.end_state).max() < 1e-7


# ---------------------------------------------------------------------------
# integrator quality
# ---------------------------------------------------------------------------

def test_halving_tolerance_halves_end_state_error(preset_a):
    x0 = np.array([0.1, 0.9])
    sched = Schedule.from_pairs([(7.0, 1.5), (9.0, 0.4), (11.0, 1.0)])

    def end_state(tol):
        return flow(x0, sched, preset_a, horizon=27.0, rtol=tol,
                    atol=tol * 1e-3).end_state

    ref = end_state(1e-11)
    errs = [np.abs(end_state(tol) - ref).max() for tol in (1e-5, 5e-6)]
    assert errs[1] <= 0.5 * errs[0] * 1.05  # halves or better, small slack


def test_flow_batch_agrees_with_single_flows(preset_a):
    x0s = np.array([[0.1, 0.9], [0.15, 0.4], [0.2, 0.6]])
    sched = Schedule.from_pairs([(5.0, 1.2), (8.0, 0.5)], repeat=True)
    samples = flow_batch(x0s, sched, preset_a, horizon=30.0, rtol=1e-9,
                         atol=1e-12, sample_times=np.array([30.0]))
    for i in range(3):
        single = flow(x0s[i], sched, preset_a, horizon=30.0, rtol=1e-10,
                      atol=1e-13)
        assert np.abs(samples[0, i] - single.end_state).max() < 1e-6


def test_flow_batch_monitor_sees_every_step(preset_a):
    x0s = np.array([[0.1, 0.9], [0.2, 0.6]])
    seen = []

    def monitor(ts, ys):
        assert ys.shape[1:] == (2, 2)
        seen.append(ts.copy())

    flow_batch(x0s, Schedule.constant(1.0), preset_a, horizon=10.0,
               monitor=monitor)
    ts = np.concatenate(seen)
    assert ts[0] == 0.0 and ts[-1] == pytest.approx(10.0)
    assert np.all(np.diff(ts) > 0)


def test_killing_time_infinite_from_high_population(preset_a):
    # start above every landscape value in the window; maximum-dose
    # relaxation settles on the positive graph, never reaching extinction
    u = np.linspace(-0.5, 1.5, 200)
    assert float(np.max(preset_a.h(u, 1.75))) < 1.1
    tk = killing_time(np.array([0.3, 1.1]), 1.75, preset_a, t_max=2000.0)
    assert tk == math.inf
