"""Flows of the full and reduced dose-response systems.

Full system (state x = (u, n), dose a):

    u' = eps * k(n) * (b'(u, a) - c'(u) n)
    n' = n * (b(u, a) - c(u) n)

Reduced system (population factor k(n) = n * k_tilde(n) divided out):

    u' = eps * (b'(u, a) - c'(u) n)
    n' = (b(u, a) - c(u) n) / k_tilde(n)

Both share orbits where n > 0; times are related by
``s(t) = integral 1/k(n(tau)) dtau`` (the full system runs on clock s).
The extinction line E = {n = 0} consists of equilibria of the full
system and is crossed in finite time by the reduced one.

Piecewise-constant dosing is a :class:`Schedule`; trajectories are
integrated with an embedded Dormand-Prince 5(4) pair, restarted exactly
at switch times, with event locations refined inside the accepted step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from .landscape import Landscape

__all__ = [
    "Schedule",
    "Trajectory",
    "StiffnessError",
    "f0",
    "f1",
    "f_full",
    "f_reduced",
    "make_rhs",
    "flow",
    "killing_time",
    "rescale_time",
    "flow_batch",
    "Event",
    "integrate_segments",
]

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
DEFAULT_ETA = 1e-8


class StiffnessError(RuntimeError):
    """Step-size underflow; carries the last valid (t, state)."""

    def __init__(self, message, t, state):
        super().__init__(message)
        self.t = t
        self.state = np.asarray(state)


# ---------------------------------------------------------------------------
# dosing schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant dose, closed on the left: constant on [t_k, t_k+1).

    Beyond the last segment the final dose is held, unless ``repeat`` is
    set, in which case the whole pattern cycles.
    """

    segments: tuple[tuple[float, float], ...]  # (duration, dose)
    repeat: bool = False

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        for dur, dose in self.segments:
            if math.isnan(dur) or dur < 0:
                raise ValueError(f"bad duration {dur}")
            if not math.isfinite(dose):
                raise ValueError(f"non-finite dose {dose}")
        if self.repeat and self.period <= 0:
            raise ValueError("repeating schedule needs positive total duration")

    @classmethod
    def constant(cls, dose: float) -> "Schedule":
        return cls(segments=((math.inf, float(dose)),))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]], repeat: bool = False) -> "Schedule":
        return cls(segments=tuple((float(d), float(a)) for d, a in pairs), repeat=repeat)

    @classmethod
    def random(cls, rng: np.random.Generator, dose_range, *,
               max_switches: int = 20, duration_span=(0.1, 50.0),
               repeat: bool = True) -> "Schedule":
        """Random piecewise-constant input: 1..max_switches segments,
        log-uniform durations, doses uniform in the range."""
        n_seg = int(rng.integers(1, max_switches + 1))
        lo, hi = duration_span
        durs = np.exp(rng.uniform(np.log(lo), np.log(hi), n_seg))
        doses = rng.uniform(dose_range[0], dose_range[1], n_seg)
        return cls(segments=tuple(zip(durs.tolist(), doses.tolist())), repeat=repeat)

    @property
    def period(self) -> float:
        return float(sum(d for d, _ in self.segments if math.isfinite(d)))

    def validate_range(self, dose_range) -> None:
        lo, hi = dose_range
        for _, dose in self.segments:
            if not (lo - 1e-12 <= dose <= hi + 1e-12):
                raise ValueError(f"dose {dose} outside admissible range [{lo}, {hi}]")

    def dose_at(self, t: float) -> float:
        if t < 0:
            raise ValueError("schedule is defined on t >= 0")
        tt = t
        if self.repeat:
            tt = math.fmod(t, self.period)
        acc = 0.0
        for dur, dose in self.segments:
            acc += dur
            if tt < acc:
                return dose
        return self.segments[-1][1]

    def iter_segments(self, horizon: float) -> Iterator[tuple[float, float, float]]:
        """Yield (t_start, t_end, dose) covering [0, horizon)."""
        t = 0.0
        while t < horizon:
            progressed = False
            for dur, dose in self.segments:
                if t >= horizon:
                    return
                t_end = min(t + dur, horizon)
                if t_end > t:
                    yield t, t_end, dose
                    progressed = True
                t = t_end
            if not self.repeat:
                if t < horizon:
                    yield t, horizon, self.segments[-1][1]
                return
            if not progressed:  # all-zero durations would spin forever
                raise ValueError("repeating schedule with zero period")


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------

def f0(x, L: Landscape):
    """Dose-independent part of the full field."""
    x = np.asarray(x, dtype=float)
    u, n = x[..., 0], x[..., 1]
    kn = np.asarray(L.k(n))
    du = L.epsilon * kn * (L.b0_d1(u) - L.c_d1(u) * n)
    dn = n * (L.b0(u) - L.c(u) * n)
    return np.stack([du, dn], axis=-1)


def f1(x, L: Landscape):
    """Per-unit-dose part; components have fixed opposite signs off E."""
    x = np.asarray(x, dtype=float)
    u, n = x[..., 0], x[..., 1]
    kn = np.asarray(L.k(n))
    du = -L.epsilon * kn * L.b1_d1(u)
    dn = -n * L.b1(u)
    return np.stack([du, dn], axis=-1)


def f_full(x, a, L: Landscape):
    """Full field f0 + a*f1 evaluated directly."""
    x = np.asarray(x, dtype=float)
    u, n = x[..., 0], x[..., 1]
    kn = np.asarray(L.k(n))
    du = L.epsilon * kn * (L.b_d1(u, a) - L.c_d1(u) * n)
    dn = n * (L.b(u, a) - L.c(u) * n)
    return np.stack([du, dn], axis=-1)


def f_reduced(x, a, L: Landscape):
    """Reduced field; equals f_full / k(n) wherever n > 0."""
    x = np.asarray(x, dtype=float)
    u, n = x[..., 0], x[..., 1]
    du = L.epsilon * (L.b_d1(u, a) - L.c_d1(u) * n)
    dn = (L.b(u, a) - L.c(u) * n) / np.asarray(L.k_tilde(n))
    return np.stack([du, dn], axis=-1)


def make_rhs(L: Landscape, a: float, system: str) -> Callable:
    """Scalar-state right-hand side t, (u, n) -> (du, dn) for integrators."""
    if system == "reduced":
        def rhs(t, y):
            return f_reduced(y, a, L)
    elif system == "full":
        def rhs(t, y):
            return f_full(y, a, L)
    else:
        raise ValueError(f"unknown system {system!r}; use 'full' or 'reduced'")
    return rhs


# ---------------------------------------------------------------------------
# event-aware single-trajectory integration
# ---------------------------------------------------------------------------

@dataclass
class Event:
    """Scalar event g(t, y); triggers on a sign change in the step.

    direction: -1 fires only on decreasing crossings, +1 only increasing,
    0 on any.  Terminal events stop the integration at the refined time.
    """

    fn: Callable
    name: str
    terminal: bool = True
    direction: int = 0


@dataclass
class Trajectory:
    """Sampled solution under a schedule with per-sample active dose."""

    t: np.ndarray
    states: np.ndarray           # (n, 2)
    dose: np.ndarray
    status: str                  # horizon | hit_E | left_window | event:<name>
    events: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("non-finite trajectory states")

    @property
    def u(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def n(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def end_state(self) -> np.ndarray:
        return self.states[-1]

    def csv_rows(self):
        for i in range(self.t.size):
            yield (self.t[i], self.states[i, 0], self.states[i, 1], self.dose[i])


def _refine_event(ev: Event, interp, t_lo, t_hi, g_lo, g_hi):
    if g_lo == 0.0:
        return t_lo
    root = brentq(lambda s: float(ev.fn(s, interp(s))), t_lo, t_hi,
                  xtol=1e-13, rtol=8.9e-16)
    return float(root)


def _integrate_dose(rhs, x0, t0, t1, *, rtol, atol, events, sag_tol,
                    collect_t, collect_y, first_step=None):
    """Advance one constant-dose span, appending samples (t0 excluded).

    Returns (status, t_end, y_end, event_records, last_step_size).
    Event locations are refined with root finding on the step's dense
    interpolant; sagitta-based subdivision keeps emitted chords within
    sag_tol of the true solution when requested.
    """
    solver = RK45(rhs, t0, np.asarray(x0, dtype=float), t1,
                  rtol=rtol, atol=atol, first_step=first_step)
    g_prev = [float(ev.fn(t0, np.asarray(x0, dtype=float))) for ev in events]
    records = []
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise StiffnessError(
                f"integrator step failed at t={solver.t_old}: {msg}",
                solver.t_old, solver.y_old if solver.y_old is not None else solver.y)
        interp = solver.dense_output()
        t_lo, t_hi = solver.t_old, solver.t
        y_hi = solver.y

        hit: tuple[float, Event] | None = None
        g_now = []
        for ev, gl in zip(events, g_prev):
            gh = float(ev.fn(t_hi, y_hi))
            g_now.append(gh)
            crossed = (gl < 0 <= gh) or (gl > 0 >= gh) or (gl == 0.0 and gh != 0.0)
            if crossed:
                if ev.direction > 0 and not (gl < gh):
                    continue
                if ev.direction < 0 and not (gl > gh):
                    continue
                t_ev = _refine_event(ev, interp, t_lo, t_hi, gl, gh)
                if hit is None or t_ev < hit[0]:
                    hit = (t_ev, ev)
        end_t = hit[0] if (hit is not None and hit[1].terminal) else t_hi
        end_y = interp(end_t) if hit is not None and hit[1].terminal else y_hi

        if sag_tol is not None:
            _emit_refined(interp, t_lo, end_t, sag_tol, collect_t, collect_y)
        else:
            collect_t.append(end_t)
            collect_y.append(np.array(end_y))

        if hit is not None:
            t_ev, ev = hit
            records.append({"name": ev.name, "t": t_ev,
                            "state": np.array(interp(t_ev))})
            if ev.terminal:
                return f"event:{ev.name}", end_t, np.array(end_y), records, solver.h_abs
        g_prev = g_now
    return "reached", solver.t, solver.y, records, solver.h_abs


def _emit_refined(interp, t_lo, t_hi, sag_tol, collect_t, collect_y):
    """Subdivide one step until chords sag less than sag_tol from the curve."""
    if t_hi <= t_lo:
        return
    stack = [(t_lo, np.array(interp(t_lo)), t_hi, np.array(interp(t_hi)), 0)]
    while stack:
        ta, ya, tb, yb, depth = stack.pop()
        tm = 0.5 * (ta + tb)
        ym = np.array(interp(tm))
        sag = np.hypot(*(ym - 0.5 * (ya + yb)))
        if sag > sag_tol and depth < 18:
            stack.append((tm, ym, tb, yb, depth + 1))
            stack.append((ta, ya, tm, ym, depth + 1))
        else:
            if tm > ta:
                collect_t.append(tm)
                collect_y.append(ym)
            collect_t.append(tb)
            collect_y.append(yb)


def _window_event(window) -> Event:
    u_lo, u_hi, n_lo, n_hi = window

    def g(t, y):
        return min(y[0] - u_lo, u_hi - y[0], y[1] - n_lo, n_hi - y[1])

    return Event(g, "left_window", terminal=True, direction=-1)


def integrate_segments(L: Landscape, x0, schedule: Schedule, *, system: str,
                       horizon: float, rtol: float = DEFAULT_RTOL,
                       atol: float = DEFAULT_ATOL,
                       extra_events: Sequence[Event] = (),
                       window=None, eta: float | None = DEFAULT_ETA,
                       sag_tol: float | None = None) -> Trajectory:
    """Core driver: restart the integrator at every dose switch, watch events."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"initial state must be a finite pair, got {x0}")
    if system == "full" and x0[1] < 0:
        raise ValueError("full system requires n0 >= 0")

    events = list(extra_events)
    if eta is not None:
        events.append(Event(lambda t, y: y[1] - eta, "hit_E", terminal=True,
                            direction=-1))
    if window is not None:
        events.append(_window_event(window))

    ts: list[float] = [0.0]
    ys: list[np.ndarray] = [x0.copy()]
    doses: list[float] = [schedule.dose_at(0.0)]
    ev_records: list[dict] = []
    status = "horizon"
    t_cur, y_cur = 0.0, x0.copy()
    hint = None

    # immediate-event check at t = 0
    for ev in events:
        if ev.terminal and float(ev.fn(0.0, x0)) < 0:
            name = ev.name
            status = name if name in ("hit_E", "left_window") else f"event:{name}"
            return Trajectory(np.array([0.0]), x0[None, :], np.array([doses[0]]),
                              status, [{"name": name, "t": 0.0, "state": x0.copy()}])

    for t_a, t_b, dose in schedule.iter_segments(horizon):
        rhs = make_rhs(L, dose, system)
        n_before = len(ts)
        st, t_cur, y_cur, recs, hint = _integrate_dose(
            rhs, y_cur, t_a, t_b, rtol=rtol, atol=atol, events=events,
            sag_tol=sag_tol, collect_t=ts, collect_y=ys, first_step=hint)
        doses.extend([dose] * (len(ts) - n_before))
        ev_records.extend(recs)
        if st.startswith("event:"):
            name = st.split(":", 1)[1]
            status = name if name in ("hit_E", "left_window") else st
            break
    t_arr = np.asarray(ts)
    keep = np.concatenate([[True], np.diff(t_arr) > 0])
    return Trajectory(t=t_arr[keep], states=np.asarray(ys)[keep],
                      dose=np.asarray(doses)[keep], status=status,
                      events=ev_records)


def flow(x0, schedule: Schedule, L: Landscape, *, system: str = "reduced",
         horizon: float = 100.0, rtol: float = DEFAULT_RTOL,
         atol: float = DEFAULT_ATOL, window=None,
         eta: float | None = DEFAULT_ETA) -> Trajectory:
    """Trajectory from x0 under a piecewise-constant schedule.

    Terminal statuses: "horizon" (ran out), "hit_E" (population fell
    below eta), "left_window" (escaped the given box).
    """
    return integrate_segments(L, x0, schedule, system=system, horizon=horizon,
                              rtol=rtol, atol=atol, window=window, eta=eta)


# ---------------------------------------------------------------------------
# killing time and the time rescaling between the two systems
# ---------------------------------------------------------------------------

def killing_time(x0, a: float, L: Landscape, *, t_max: float = 1e4,
                 eta: float = DEFAULT_ETA, rtol: float = DEFAULT_RTOL,
                 atol: float = DEFAULT_ATOL) -> float:
    """First time the reduced trajectory under constant dose a falls below
    eta in population (proxy for reaching the extinction line).

    Returns math.inf when no crossing occurs before t_max.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0[1] <= eta:
        return 0.0
    traj = flow(x0, Schedule.constant(a), L, system="reduced", horizon=t_max,
                rtol=rtol, atol=atol, eta=eta)
    if traj.status == "hit_E":
        return float(traj.t[-1])
    return math.inf


def rescale_time(traj: Trajectory, L: Landscape, blowup_tol: float = 1e-10) -> np.ndarray:
    """Map reduced-system times to full-system times, s(t) = int 1/k(n) dtau.

    Cumulative trapezoid along the sampled trajectory; strictly increasing
    by construction.  Raises when the integrand blows up (trajectory too
    close to the extinction line).
    """
    kvals = np.asarray(L.k(traj.n), dtype=float)
    if np.any(kvals <= blowup_tol):
        i = int(np.argmax(kvals <= blowup_tol))
        raise ValueError(
            f"time rescaling diverges: k(n)={kvals[i]:.3e} at t={traj.t[i]:.6g}")
    integrand = 1.0 / kvals
    dt = np.diff(traj.t)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[:-1] + integrand[1:]) * dt)])
    return s


# ---------------------------------------------------------------------------
# batched integration for Monte-Carlo verification
# ---------------------------------------------------------------------------

def flow_batch(x0s, schedule: Schedule, L: Landscape, *, system: str = "reduced",
               horizon: float, rtol: float = 1e-7, atol: float = 1e-10,
               monitor: Callable | None = None,
               sample_times: np.ndarray | None = None,
               h0: float = 1e-3, rec_chunk: int = 1024) -> np.ndarray | None:
    """Integrate many initial states under one shared schedule.

    The step size adapts to the worst sample.  ``monitor(ts, ys)`` is
    called with the accepted-step times (m,) and states (m, n, 2) of each
    integration chunk; use it to watch set membership or harvest
    statistics.  When ``sample_times`` is given, states are linearly
    interpolated onto it and returned as (len(sample_times), n, 2).
    """
    from ._batchcore import get_segment_runner

    if system not in ("reduced", "full"):
        raise ValueError(f"unknown system {system!r}")
    y = np.ascontiguousarray(np.array(x0s, dtype=float))
    if y.ndim != 2 or y.shape[1] != 2:
        raise ValueError("x0s must have shape (n, 2)")
    runner = get_segment_runner(L, system)

    samples = None
    next_sample = 0
    if sample_times is not None:
        sample_times = np.asarray(sample_times, dtype=float)
        samples = np.empty((sample_times.size, y.shape[0], 2))

    rec_t = np.empty(rec_chunk)
    rec_y = np.empty((rec_chunk, y.shape[0], 2))
    if monitor is not None:
        monitor(np.zeros(1), y[None, :, :])

    h = h0
    t_prev = 0.0
    y_prev = y.copy()
    for t_a, t_b, dose in schedule.iter_segments(horizon):
        t = t_a
        while t < t_b - 1e-14:
            m, t, h, ok = runner(y, t, t_b, dose, h, rtol, atol, rec_t, rec_y)
            if not ok:
                raise StiffnessError(f"batch step underflow at t={t}", t, y)
            if m == 0:
                continue
            if monitor is not None:
                monitor(rec_t[:m], rec_y[:m])
            if samples is not None:
                ts = rec_t[:m]
                while next_sample < sample_times.size and \
                        sample_times[next_sample] <= ts[-1] + 1e-12:
                    s = sample_times[next_sample]
                    j = int(np.searchsorted(ts, s))
                    t_lo, y_lo = (t_prev, y_prev) if j == 0 else (ts[j - 1], rec_y[j - 1])
                    t_hi, y_hi = ts[min(j, m - 1)], rec_y[min(j, m - 1)]
                    w = 0.0 if t_hi == t_lo else np.clip((s - t_lo) / (t_hi - t_lo), 0.0, 1.0)
                    samples[next_sample] = y_lo + w * (y_hi - y_lo)
                    next_sample += 1
            t_prev = rec_t[m - 1]
            y_prev = rec_y[m - 1].copy()
    if samples is not None:
        while next_sample < sample_times.size:  # horizon landed between steps
            samples[next_sample] = y
            next_sample += 1
    return samples
