"""Property verification at desk scale: random sampling against the
structural claims of the model (sign geometry, invariance, controllability,
no-return, limit behavior, band invariance, range-inflation sweeps).

All operations are deterministic given a seed; failing reports carry
replayable counterexamples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from . import geometry
from .dynamics import (
    DEFAULT_ETA,
    Schedule,
    f_full,
    flow_batch,
    make_rhs,
)
from .equilibria import components, h_star, is_hyperbolic
from .landscape import Landscape
from .omega import OmegaConstructionError, OmegaCurve, build_omega

__all__ = [
    "VerificationReport",
    "CurativeField",
    "SweepResult",
    "verify_angle_condition",
    "verify_forward_invariance",
    "verify_controllability",
    "verify_no_return",
    "estimate_curative_set",
    "verify_limit_sets",
    "b_delta_contains",
    "verify_band_invariance",
    "bifurcation_sweep",
    "check_nesting",
]


@dataclass
class VerificationReport:
    name: str
    passed: bool
    n_samples: dict
    violations: list[dict] = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    seed: int | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "property": self.name,
            "passed": self.passed,
            "n_samples": self.n_samples,
            "n_violations": len(self.violations),
            "violations": self.violations[:25],
            "tolerances": self.tolerances,
            "seed": self.seed,
            "info": self.info,
        }


def _cross(v, w):
    return v[..., 0] * w[..., 1] - v[..., 1] * w[..., 0]


# ---------------------------------------------------------------------------
# relative orientation of the dose family (sign geometry off the branch)
# ---------------------------------------------------------------------------

def verify_angle_condition(L: Landscape, *, window=None, n_samples: int = 10_000,
                           band: float = 1e-3, dose_range=None,
                           seed: int = 0) -> VerificationReport:
    """For random states off a band around the equilibrium graph and random
    dose pairs a1 < a2, the rotation sense of f(x, a2) against f(x, a1)
    must match the side of the graph: positive above, negative below, and
    swapping the doses must flip it.
    """
    rng = np.random.default_rng(seed)
    if window is None:
        window = L.window
    u_lo, u_hi, n_lo, n_hi = window
    if dose_range is None:
        dose_range = (0.0, L.dose_max)

    kept = 0
    violations: list[dict] = []
    batches = 0
    while kept < n_samples and batches < 50:
        batches += 1
        m = 2 * (n_samples - kept)
        u = rng.uniform(u_lo, u_hi, m)
        n = rng.uniform(n_lo, n_hi, m)
        hs = np.asarray(h_star(u, L))
        off = np.abs(n - hs) > band
        u, n, hs = u[off], n[off], hs[off]
        if u.size == 0:
            continue
        a1 = rng.uniform(*dose_range, u.size)
        a2 = rng.uniform(*dose_range, u.size)
        lo_, hi_ = np.minimum(a1, a2), np.maximum(a1, a2)
        keep = hi_ - lo_ > 1e-9  # equal doses carry no sign information
        u, n, hs, lo_, hi_ = u[keep], n[keep], hs[keep], lo_[keep], hi_[keep]
        x = np.column_stack([u, n])
        f_a1 = f_full(x, lo_, L)
        f_a2 = f_full(x, hi_, L)
        c12 = _cross(f_a1, f_a2)
        c21 = _cross(f_a2, f_a1)
        side = np.sign(n - hs)
        bad = (np.sign(c12) != side) | (np.sign(c21) != -side)
        for i in np.nonzero(bad)[0][:10]:
            violations.append({
                "state": [float(u[i]), float(n[i])],
                "a1": float(lo_[i]), "a2": float(hi_[i]),
                "cross12": float(c12[i]), "side": float(side[i]),
            })
        kept += int(u.size)
    return VerificationReport(
        name="angle-condition", passed=not violations,
        n_samples={"states": kept}, violations=violations,
        tolerances={"band": band}, seed=seed,
        info={"window": list(window), "dose_range": list(dose_range)},
    )


# ---------------------------------------------------------------------------
# forward invariance of node-type sets
# ---------------------------------------------------------------------------

def verify_forward_invariance(omega: OmegaCurve, L: Landscape, *,
                              n_points: int = 100, n_schedules: int = 50,
                              horizon: float | None = None,
                              dilation: float = 1e-6, seed: int = 0,
                              rtol: float = 1e-6) -> VerificationReport:
    """Random interior points under random admissible schedules must stay
    inside the dilated set.  Node-type sets are forward invariant; for
    saddle/mixed types escapes are expected and reported as informative.
    """
    rng = np.random.default_rng(seed)
    A = omega.component.dose_range
    if horizon is None:
        horizon = 500.0 / L.epsilon
    points = omega.sample_interior(rng, n_points)

    violations: list[dict] = []
    escape_count = 0
    for j in range(n_schedules):
        sched = Schedule.random(rng, A)
        escaped = np.zeros(n_points, dtype=bool)

        def monitor(ts, ys, _esc=escaped, _sched=sched, _j=j):
            alive = np.nonzero(~_esc)[0]
            if alive.size == 0:
                return
            m = ts.size
            sub = np.ascontiguousarray(ys[:, alive, :]).reshape(m * alive.size, 2)
            inside = omega.contains_points(sub, dilation=dilation)
            out_any = ~inside.reshape(m, alive.size)
            new = out_any.any(axis=0)
            if new.any():
                _esc[alive[new]] = True
                for w in np.nonzero(new)[0][:3]:
                    i = int(alive[w])
                    step = int(np.argmax(out_any[:, w]))
                    violations.append({
                        "schedule_index": _j,
                        "point_index": i,
                        "start": points[i].tolist(),
                        "t": float(ts[step]),
                        "state": ys[step, i].tolist(),
                        "segments": list(_sched.segments),
                    })

        flow_batch(points, sched, L, system="reduced", horizon=horizon,
                   rtol=rtol, monitor=monitor)
        escape_count += int(escaped.sum())

    informative = omega.omega_type != 1
    return VerificationReport(
        name="forward-invariance",
        passed=(escape_count == 0) or informative,
        n_samples={"points": n_points, "schedules": n_schedules},
        violations=violations,
        tolerances={"dilation": dilation, "rtol": rtol},
        seed=seed,
        info={"omega_type": omega.omega_type, "escapes": escape_count,
              "horizon": horizon, "informative_only": informative},
    )


# ---------------------------------------------------------------------------
# two-phase steering (constructive controllability)
# ---------------------------------------------------------------------------

def _flow_watch(L: Landscape, x0, dose: float, t_max: float, *,
                fences: dict, prox: dict | None = None,
                rtol: float = 1e-9, atol: float = 1e-12):
    """Integrate the reduced flow under a constant dose until a fence
    polyline is crossed or a proximity ball is entered.

    fences: name -> (polyline, times-or-None).  Returns a dict with
    status ('fence:<name>', 'prox:<name>' or 'max_time'), the hit state,
    elapsed time, and for fences the interpolated fence parameter (time
    along the fence polyline when per-vertex times were supplied).
    """
    rhs = make_rhs(L, dose, "reduced")
    solver = RK45(rhs, 0.0, np.asarray(x0, dtype=float), t_max, rtol=rtol, atol=atol)
    prox = prox or {}
    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            return {"status": "failed", "t": solver.t, "state": solver.y}
        t0, t1 = solver.t_old, solver.t
        y0, y1 = solver.y_old if solver.y_old is not None else solver.y, solver.y
        chord = np.vstack([y0, y1])
        best = None
        for name, (poly, times) in fences.items():
            hit = geometry.first_intersection(chord, poly)
            if hit is None:
                continue
            _, t_chord, j, t_seg, pt = hit
            # refine the crossing on the dense solution against the fence segment
            dense = solver.dense_output()
            seg_a, seg_b = poly[j], poly[j + 1]
            d = seg_b - seg_a

            def g(s):
                ys = dense(s)
                return (ys[0] - seg_a[0]) * d[1] - (ys[1] - seg_a[1]) * d[0]

            g0, g1 = g(t0), g(t1)
            t_hit = brentq(g, t0, t1) if g0 * g1 < 0 else t0 + t_chord * (t1 - t0)
            y_hit = dense(t_hit)
            frac = t_seg
            fence_time = None
            if times is not None:
                fence_time = float(times[j] + frac * (times[j + 1] - times[j]))
            cand = {"status": f"fence:{name}", "t": float(t_hit),
                    "state": np.asarray(y_hit), "fence_time": fence_time,
                    "t_before": t0, "state_before": np.asarray(y0)}
            if best is None or cand["t"] < best["t"]:
                best = cand
        if best is not None:
            return best
        for name, (pt, radius) in prox.items():
            if np.hypot(*(y1 - pt)) <= radius:
                return {"status": f"prox:{name}", "t": float(t1),
                        "state": np.asarray(y1)}
    return {"status": "max_time", "t": float(solver.t), "state": np.asarray(solver.y)}


def _backward_orbit(L: Landscape, x1, dose: float, omega: OmegaCurve, *,
                    t_max: float, rtol=1e-9, atol=1e-12, margin=0.02):
    """Backward orbit from the target under the phase-one dose, grown until
    it leaves the enclosed set (plus a margin), with per-vertex times.
    Flowing forward from a point on it for its recorded time reaches x1."""
    base = make_rhs(L, dose, "reduced")
    rhs = lambda t, y: -base(t, y)
    solver = RK45(rhs, 0.0, np.asarray(x1, dtype=float), t_max, rtol=rtol, atol=atol)
    ts = [0.0]
    ys = [np.asarray(x1, dtype=float).copy()]
    u_lo, u_hi = L.u_window
    n_lo, n_hi = L.n_window
    exited_at = None
    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            break
        ts.append(float(solver.t))
        ys.append(solver.y.copy())
        y = solver.y
        if not (u_lo - 0.2 <= y[0] <= u_hi + 0.2 and n_lo - 0.3 <= y[1] <= n_hi + 0.3):
            return None  # left the working window: pair does not qualify
        if exited_at is None and not omega.encloses(y):
            exited_at = solver.t
        elif exited_at is not None:
            d = float(geometry.distance_to_polyline(y[None, :], omega.vertices)[0])
            if d > margin:
                break
    if exited_at is None:
        return None
    return np.asarray(ys), np.asarray(ts)


def _steer_once(x0, x1, omega: OmegaCurve, L: Landscape, *,
                tol_target: float, rtol: float, atol: float,
                r_switch: float = 1e-5, back_off: float = 1e-8) -> dict:
    """Execute the constructive two-phase steering recipe for one pair."""
    a_lo, a_hi = omega.component.dose_range
    comp = omega.component
    if np.hypot(*(np.asarray(x1) - np.asarray(x0))) <= tol_target:
        return {"ok": True, "distance": 0.0, "schedule": [], "phases": "trivial"}

    if omega.omega_type == 2:
        a_fwd, a_mid = a_hi, a_lo
        anchor = None
        fence_piece = _stable_piece(omega, comp.hi.state)
    else:
        node_end = comp.lo if comp.lo.label == "stable-node" else comp.hi
        if omega.omega_type == 1:
            node_end = comp.hi
        anchor = node_end.state
        a_fwd = node_end.dose
        a_mid = a_lo if a_fwd == a_hi else a_hi
        fence_piece = None

    t_phase = 800.0 / L.epsilon
    gamma = _backward_orbit(L, x1, a_fwd, omega, t_max=t_phase, rtol=rtol, atol=atol)
    if gamma is None:
        return {"ok": False, "reason": "backward orbit left the window",
                "qualifies": False}
    g_poly, g_times = gamma

    fences = {"gamma": (g_poly, g_times)}
    prox = {}
    if fence_piece is not None:
        fences["wstable"] = (fence_piece, None)
    if anchor is not None:
        prox["node"] = (anchor, r_switch)

    schedule: list[tuple[float, float]] = []
    res = _flow_watch(L, x0, a_fwd, t_phase, fences=fences, prox=prox,
                      rtol=rtol, atol=atol)
    if res["status"] == "fence:gamma":
        schedule.append((res["t"], a_fwd))
        state, tau = res["state"], res["fence_time"]
    else:
        if res["status"] == "fence:wstable":
            # stop a hair before the stable manifold so the mid-dose flow
            # passes the saddle on the inner side
            t_in = max(res["t"] - back_off, res["t_before"])
            mid_start = _state_at(L, x0, a_fwd, t_in, rtol, atol)
            schedule.append((t_in, a_fwd))
        elif res["status"] == "prox:node":
            mid_start = res["state"]
            schedule.append((res["t"], a_fwd))
        else:
            return {"ok": False, "reason": f"phase 1 ended with {res['status']}",
                    "qualifies": True}
        res2 = _flow_watch(L, mid_start, a_mid, t_phase,
                           fences={"gamma": (g_poly, g_times)},
                           rtol=rtol, atol=atol)
        if res2["status"] != "fence:gamma":
            return {"ok": False, "reason": f"phase 2 ended with {res2['status']}",
                    "qualifies": True}
        schedule.append((res2["t"], a_mid))
        state, tau = res2["state"], res2["fence_time"]

    # ride the backward orbit forward to the target
    end = _state_at(L, state, a_fwd, tau, rtol, atol) if tau > 0 else state
    schedule.append((tau, a_fwd))
    dist = float(np.hypot(*(end - np.asarray(x1, dtype=float))))
    return {"ok": dist <= tol_target, "distance": dist,
            "schedule": schedule, "qualifies": True}


def _state_at(L, x0, dose, t_end, rtol, atol):
    if t_end <= 0:
        return np.asarray(x0, dtype=float)
    solver = RK45(make_rhs(L, dose, "reduced"), 0.0, np.asarray(x0, dtype=float),
                  t_end, rtol=rtol, atol=atol)
    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            raise RuntimeError("integration failed in steering phase")
    return solver.y


def _stable_piece(omega: OmegaCurve, anchor) -> np.ndarray:
    for p in omega.pieces:
        if p.kind == "stable-manifold" and np.allclose(p.anchor, anchor, atol=1e-9):
            return omega.vertices[p.start:p.stop + 1]
    raise ValueError("no stable-manifold piece anchored at the given saddle")


def verify_controllability(omega: OmegaCurve, L: Landscape, *,
                           n_pairs: int = 50, tol_target: float = 1e-3,
                           seed: int = 0, rtol: float = 1e-9,
                           atol: float = 1e-12) -> VerificationReport:
    """Steer random interior pairs (x0 -> x1) with the two-phase recipe:
    run toward the organizing equilibrium under one extreme dose, switch,
    and intercept the backward orbit of the target.  Pairs whose backward
    orbit leaves the working window do not qualify and are reported.
    """
    rng = np.random.default_rng(seed)
    pts = omega.sample_interior(rng, 2 * n_pairs)
    x0s, x1s = pts[:n_pairs], pts[n_pairs:]
    violations = []
    non_qualifying = 0
    distances = []
    for i in range(n_pairs):
        res = _steer_once(x0s[i], x1s[i], omega, L, tol_target=tol_target,
                          rtol=rtol, atol=atol)
        if not res.get("qualifies", True):
            non_qualifying += 1
            continue
        distances.append(res.get("distance", math.inf))
        if not res["ok"]:
            violations.append({
                "x0": x0s[i].tolist(), "x1": x1s[i].tolist(),
                "distance": res.get("distance"),
                "reason": res.get("reason", "missed target"),
            })
    return VerificationReport(
        name="controllability", passed=not violations,
        n_samples={"pairs": n_pairs, "qualifying": n_pairs - non_qualifying},
        violations=violations,
        tolerances={"tol_target": tol_target, "rtol": rtol},
        seed=seed,
        info={"omega_type": omega.omega_type,
              "max_distance": max(distances) if distances else None,
              "non_qualifying": non_qualifying},
    )


# ---------------------------------------------------------------------------
# no-return property of saddle/mixed sets
# ---------------------------------------------------------------------------

def verify_no_return(omega: OmegaCurve, L: Landscape, *, n_points: int = 100,
                     horizon: float | None = None, exit_horizon: float | None = None,
                     margin: float = 1e-6, group_size: int = 10,
                     seed: int = 0, rtol: float = 1e-7) -> VerificationReport:
    """Trajectories leaving the set are continued under fresh random
    schedules; none may re-enter (strictly inside beyond the margin)."""
    if omega.omega_type == 1:
        raise ValueError("no-return applies to saddle/mixed sets (types 2, 3)")
    rng = np.random.default_rng(seed)
    A = omega.component.dose_range
    if horizon is None:
        horizon = 100.0 / L.epsilon
    if exit_horizon is None:
        exit_horizon = 200.0 / L.epsilon
    points = omega.sample_interior(rng, n_points)

    exit_states: list[np.ndarray] = []
    still_inside = 0
    for lo in range(0, n_points, group_size):
        group = points[lo:lo + group_size]
        sched = Schedule.random(rng, A)
        done = np.zeros(len(group), dtype=bool)
        exits: dict[int, np.ndarray] = {}

        def monitor(ts, ys, _done=done, _exits=exits):
            alive = np.nonzero(~_done)[0]
            if alive.size == 0:
                return
            m = ys.shape[0]
            sub = np.ascontiguousarray(ys[:, alive, :]).reshape(m * alive.size, 2)
            out = ~omega.contains_points(sub).reshape(m, alive.size)
            new = out.any(axis=0)
            for w in np.nonzero(new)[0]:
                i = int(alive[w])
                _exits[i] = ys[int(np.argmax(out[:, w])), i].copy()
            _done[alive[new]] = True

        flow_batch(group, sched, L, system="reduced", horizon=exit_horizon,
                   rtol=rtol, monitor=monitor)
        exit_states.extend(exits.values())
        still_inside += int((~done).sum())

    violations = []
    reentries = 0
    exit_arr = np.asarray(exit_states) if exit_states else np.empty((0, 2))
    for lo in range(0, exit_arr.shape[0], group_size):
        group = exit_arr[lo:lo + group_size]
        sched = Schedule.random(rng, A)

        def monitor(ts, ys, _g=group, _sched=sched):
            nonlocal reentries
            m, ng = ys.shape[0], ys.shape[1]
            flat = ys.reshape(m * ng, 2)
            inside = omega.contains_points(flat)
            if inside.any():
                idx = np.nonzero(inside)[0]
                deep = geometry.distance_to_polyline(flat[idx], omega.ring_mid) > margin
                for w in idx[deep][:3]:
                    reentries += 1
                    step, i = divmod(int(w), ng)
                    violations.append({
                        "exit_state": _g[i].tolist(), "t": float(ts[step]),
                        "state": flat[w].tolist(), "segments": list(_sched.segments),
                    })

        flow_batch(group, sched, L, system="reduced", horizon=horizon,
                   rtol=rtol, monitor=monitor)

    return VerificationReport(
        name="no-return", passed=reentries == 0,
        n_samples={"points": n_points, "exited": len(exit_states),
                   "still_inside": still_inside},
        violations=violations,
        tolerances={"margin": margin, "rtol": rtol}, seed=seed,
        info={"omega_type": omega.omega_type, "horizon": horizon},
    )


# ---------------------------------------------------------------------------
# curative set estimation (lower bound)
# ---------------------------------------------------------------------------

@dataclass
class CurativeField:
    """Indicator field over a state grid: True marks states driven below
    the extinction threshold by some tried schedule (a lower bound; False
    means unknown, never certified non-curative)."""

    u_values: np.ndarray
    n_values: np.ndarray
    curative: np.ndarray  # shape (n_n, n_u)
    eta: float
    tried: dict = field(default_factory=dict)

    @property
    def fraction(self) -> float:
        return float(self.curative.mean())

    def csv_rows(self):
        for i, nv in enumerate(self.n_values):
            for j, uv in enumerate(self.u_values):
                yield (uv, nv, int(self.curative[i, j]))


def estimate_curative_set(L: Landscape, A, *, grid=(61, 41),
                          schedule_budget: int = 5,
                          horizon: float | None = None,
                          eta: float = DEFAULT_ETA, seed: int = 0,
                          rtol: float = 1e-7) -> CurativeField:
    """Mark grid states whose reduced trajectory dips below eta under the
    extreme constant doses or any of a budget of random schedules."""
    rng = np.random.default_rng(seed)
    if horizon is None:
        horizon = 100.0 / L.epsilon
    u_lo, u_hi = L.u_window
    n_lo, n_hi = L.n_window
    u_values = np.linspace(u_lo, u_hi, grid[0])
    n_values = np.linspace(n_lo, n_hi, grid[1])
    uu, nn = np.meshgrid(u_values, n_values)
    pts = np.column_stack([uu.ravel(), nn.ravel()])
    curative = pts[:, 1] <= eta  # already extinct

    schedules = [Schedule.constant(A[1]), Schedule.constant(A[0])]
    schedules += [Schedule.random(rng, A) for _ in range(schedule_budget)]
    for sched in schedules:
        alive = ~curative
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]

        def monitor(ts, ys, _idx=idx):
            hit = (ys[:, :, 1] < eta).any(axis=0)
            if hit.any():
                curative[_idx[hit]] = True

        flow_batch(pts[idx], sched, L, system="reduced", horizon=horizon,
                   rtol=rtol, monitor=monitor)

    return CurativeField(
        u_values=u_values, n_values=n_values,
        curative=curative.reshape(len(n_values), len(u_values)),
        eta=eta,
        tried={"constants": [A[0], A[1]], "random": schedule_budget,
               "horizon": horizon, "seed": seed},
    )


# ---------------------------------------------------------------------------
# limit behavior: everything non-curative settles at a controllable set
# ---------------------------------------------------------------------------

def verify_limit_sets(L: Landscape, A, omegas: list[OmegaCurve], *,
                      n_points: int = 100, n_schedules: int = 1,
                      horizon: float | None = None, dist_tol: float = 1e-2,
                      tail_frac: float = 0.2, group_size: int = 10,
                      n_samples_t: int = 400, seed: int = 0,
                      rtol: float = 1e-7) -> VerificationReport:
    """Random starts under random schedules: the distance to the nearest
    enclosed set must fall below tolerance and stay below for the final
    fraction of the horizon.  Starts whose trajectory crosses the
    extinction threshold are excluded (curative, different asymptotics).
    """
    rng = np.random.default_rng(seed)
    if horizon is None:
        horizon = 500.0 / L.epsilon
    u_lo, u_hi = L.u_window
    n_lo, n_hi = L.n_window
    sample_times = np.linspace(0.0, horizon, n_samples_t)
    tail_from = int((1.0 - tail_frac) * n_samples_t)

    violations = []
    excluded = 0
    checked = 0
    drawn = 0
    target = n_points * n_schedules
    # curative starts (those whose trajectory crosses the extinction
    # threshold) do not count; keep drawing until enough survivors ran
    while checked < target and drawn < 8 * target:
        group = np.column_stack([
            rng.uniform(u_lo, u_hi, group_size),
            rng.uniform(max(n_lo, 0.05 * (n_hi - n_lo)), n_hi, group_size),
        ])
        drawn += group_size
        sched = Schedule.random(rng, A)
        min_n = np.full(len(group), np.inf)

        def monitor(ts, ys, _m=min_n):
            np.minimum(_m, ys[:, :, 1].min(axis=0), out=_m)

        samples = flow_batch(group, sched, L, system="reduced",
                             horizon=horizon, rtol=rtol, monitor=monitor,
                             sample_times=sample_times)
        curative = min_n < DEFAULT_ETA
        excluded += int(curative.sum())
        flat = samples.reshape(-1, 2)
        dists = np.min(
            np.stack([om.distance(flat).reshape(samples.shape[:2])
                      for om in omegas]), axis=0)
        for i in range(len(group)):
            if curative[i] or checked >= target:
                continue
            checked += 1
            tail = dists[tail_from:, i]
            if not np.all(tail < dist_tol):
                violations.append({
                    "start": group[i].tolist(),
                    "segments": list(sched.segments),
                    "max_tail_distance": float(tail.max()),
                })
    return VerificationReport(
        name="limit-sets", passed=not violations,
        n_samples={"target": target, "checked": checked, "drawn": drawn,
                   "excluded_curative": excluded},
        violations=violations,
        tolerances={"dist_tol": dist_tol, "tail_frac": tail_frac, "rtol": rtol},
        seed=seed,
        info={"horizon": horizon, "n_omegas": len(omegas)},
    )


# ---------------------------------------------------------------------------
# the invariant band between the extremal graphs
# ---------------------------------------------------------------------------

def b_delta_contains(x, delta: float, L: Landscape, A, *,
                     collar_scale: float = 1.0):
    """Membership in the band between the graphs h(., a_hi + delta) and
    h(., a_lo - delta), with an epsilon-proportional collar standing in
    for the perturbed slow manifolds."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    collar = collar_scale * L.epsilon
    lo_graph = np.asarray(L.h(x[:, 0], A[1] + delta))
    hi_graph = np.asarray(L.h(x[:, 0], A[0] - delta))
    ok = (x[:, 1] >= lo_graph - collar) & (x[:, 1] <= hi_graph + collar)
    return bool(ok[0]) if ok.size == 1 else ok


def verify_band_invariance(L: Landscape, A, *, delta: float = 0.0,
                           n_points: int = 50, n_schedules: int = 10,
                           horizon: float | None = None,
                           collar_scale: float = 1.0, seed: int = 0,
                           rtol: float = 1e-7) -> VerificationReport:
    """Sampled forward invariance of the band: trajectories started inside
    (without the collar) must stay inside up to the collar."""
    rng = np.random.default_rng(seed)
    if horizon is None:
        horizon = 100.0 / L.epsilon
    u_lo, u_hi = L.u_window
    pts = []
    tries = 0
    while len(pts) < n_points and tries < 200:
        tries += 1
        u = rng.uniform(u_lo, u_hi, 4 * n_points)
        lo_g = np.asarray(L.h(u, A[1] + delta))
        hi_g = np.asarray(L.h(u, A[0] - delta))
        ok = hi_g > lo_g
        u, lo_g, hi_g = u[ok], lo_g[ok], hi_g[ok]
        n = rng.uniform(lo_g, hi_g)
        keep = n > 0
        pts.extend(np.column_stack([u[keep], n[keep]])[: n_points - len(pts)])
    points = np.asarray(pts)
    violations: list[dict] = []
    for j in range(n_schedules):
        sched = Schedule.random(rng, A)

        def monitor(ts, ys, _sched=sched):
            m, ng = ys.shape[0], ys.shape[1]
            flat = ys.reshape(m * ng, 2)
            bad = ~b_delta_contains(flat, delta, L, A, collar_scale=collar_scale)
            for w in np.nonzero(np.atleast_1d(bad))[0][:3]:
                step, i = divmod(int(w), ng)
                violations.append({"start": points[i].tolist(),
                                   "t": float(ts[step]),
                                   "state": flat[w].tolist(),
                                   "segments": list(_sched.segments)})

        flow_batch(points, sched, L, system="reduced", horizon=horizon,
                   rtol=rtol, monitor=monitor)
    return VerificationReport(
        name="band-invariance", passed=not violations,
        n_samples={"points": int(points.shape[0]), "schedules": n_schedules},
        violations=violations,
        tolerances={"collar": collar_scale * L.epsilon, "delta": delta},
        seed=seed, info={"horizon": horizon},
    )


# ---------------------------------------------------------------------------
# range-inflation sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    base_range: tuple[float, float]
    entries: list[dict]          # per delta, ascending
    merge_events: list[dict]

    def to_dict(self) -> dict:
        return {
            "base_range": list(self.base_range),
            "entries": [
                {k: v for k, v in e.items() if k != "omegas"} for e in self.entries
            ],
            "merge_events": self.merge_events,
        }


def bifurcation_sweep(L: Landscape, A, deltas, *, u_grid=2000,
                      eta: float = DEFAULT_ETA, build=True,
                      **omega_kwargs) -> SweepResult:
    """Inflate the dose range symmetrically and track how the controllable
    sets change: component counts, omega types, and merge events between
    adjacent samples.  Non-hyperbolic inflations are reported and skipped.
    """
    a_lo, a_hi = float(A[0]), float(A[1])
    deltas = sorted(float(d) for d in deltas)
    entries = []
    for d in deltas:
        rng_d = (a_lo - d, a_hi + d)
        entry = {"delta": d, "range": list(rng_d), "hyperbolic": True,
                 "skipped": False, "components": [], "omega_types": [],
                 "omegas": []}
        if rng_d[0] > rng_d[1]:
            entry.update(skipped=True, reason="empty range")
            entries.append(entry)
            continue
        ok, wit = is_hyperbolic(rng_d, L)
        if not ok:
            entry.update(hyperbolic=False, skipped=True,
                         reason="non-hyperbolic", witnesses=wit)
            entries.append(entry)
            continue
        comps = components(rng_d, L, u_grid=u_grid, check_hyperbolic=False)
        entry["components"] = [c.to_dict() for c in comps]
        if build:
            try:
                omegas = [build_omega(c, L, eta=eta, **omega_kwargs) for c in comps]
                entry["omegas"] = omegas
                entry["omega_types"] = sorted(o.omega_type for o in omegas)
            except OmegaConstructionError as exc:
                entry.update(skipped=True, reason=f"construction failed: {exc}")
        else:
            entry["omega_types"] = sorted(c.kind for c in comps)
        entries.append(entry)

    merge_events = []
    built = [e for e in entries if not e["skipped"]]
    for before, after in zip(built[:-1], built[1:]):
        nb, na = len(before["components"]), len(after["components"])
        if na < nb:
            merge_events.append({
                "delta_before": before["delta"], "delta_after": after["delta"],
                "count_before": nb, "count_after": na,
            })
    return SweepResult(base_range=(a_lo, a_hi), entries=entries,
                       merge_events=merge_events)


def check_nesting(sweep: SweepResult) -> VerificationReport:
    """Strict monotonicity under range inflation: every boundary vertex of
    a smaller-range curve must lie inside some larger-range enclosed set."""
    built = [e for e in sweep.entries if not e["skipped"] and e.get("omegas")]
    violations = []
    pairs = 0
    for small, big in zip(built[:-1], built[1:]):
        pairs += 1
        for om_s in small["omegas"]:
            verts = om_s.vertices
            inside = np.zeros(verts.shape[0], dtype=bool)
            for om_b in big["omegas"]:
                inside |= om_b.contains_points(verts)
            if not inside.all():
                bad = verts[~inside]
                violations.append({
                    "delta_small": small["delta"], "delta_big": big["delta"],
                    "omega_type": om_s.omega_type,
                    "n_outside": int((~inside).sum()),
                    "example_vertex": bad[0].tolist(),
                })
    return VerificationReport(
        name="range-inflation-nesting", passed=not violations,
        n_samples={"delta_pairs": pairs},
        violations=violations, tolerances={},
        info={"deltas": [e["delta"] for e in built]},
    )
