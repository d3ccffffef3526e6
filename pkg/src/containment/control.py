"""Dose-minimal periodic therapy by forward-backward sweeping.

Solves, on the full system and a fixed interval [0, T],

    minimize   integral alpha(t) dt
    subject to n(T) = n(0),   alpha(t) in [a_lo, a_hi],

with the standard L1 Pontryagin setup: Hamiltonian H = alpha + lam . f,
adjoint lam' = -(Dx f)^T lam, transversality lam(T) = (0, nu) where the
scalar nu enforces the population-return constraint (shooting).  The
pointwise minimizer of H is bang-bang on the switching function
phi = 1 + lam . f1, relaxed by convex combination between iterations.

A converged run typically alternates one dosing interval (resistance
rises, population is knocked down) with one drug-free interval
(population recovers, cells re-sensitize).  Near a saddle-type
controllable set the long-run fate under repeated optimization splits:
trajectories either escape left into a node-type set and keep cycling,
or escape right, after which the return constraint becomes infeasible
and treatment falls back to the maximum tolerable dose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Schedule, flow
from .equilibria import components
from .landscape import Landscape
from .omega import OmegaCurve, build_omega

__all__ = [
    "OptimalRun",
    "fbsm_solve",
    "run_cycles",
    "classify_exit",
    "exit_experiment",
    "find_split",
    "forward_sim",
    "backward_sim",
]


# ---------------------------------------------------------------------------
# scalar-callable model (hot loops run one state at a time)
# ---------------------------------------------------------------------------

def _scalar_parts(L: Landscape):
    """Closures (b0, b0', b0'', b1, b1', b1'') over python floats."""
    mix = list(zip(L.r, L.g, L.u_centers))
    p1, p2, p3 = L.poly
    e1, e2 = 2 * p3, 2 * p3 - 1
    sig = [tuple(map(float, t)) for t in L.sigmoids]
    exp = math.exp

    def b0(u):
        s = -p1 * (u - p2) ** e1
        for rj, gj, uj in mix:
            s += rj * exp(-gj * (u - uj) ** 2)
        return s

    def b0p(u):
        s = -e1 * p1 * (u - p2) ** e2
        for rj, gj, uj in mix:
            s += rj * exp(-gj * (u - uj) ** 2) * (-2 * gj * (u - uj))
        return s

    def b0pp(u):
        s = -e1 * e2 * p1 * (u - p2) ** (e2 - 1)
        for rj, gj, uj in mix:
            w = u - uj
            s += rj * exp(-gj * w * w) * (4 * gj * gj * w * w - 2 * gj)
        return s

    def _sig(u, order):
        total = 0.0
        for c1, c2, c3, c4, c5, c6, c7 in sig:
            z = c4 * (c5 * u - c6)
            s = exp(-abs(z))
            if z >= 0:
                den = c2 * s + c3
                if order == 0:
                    total += c1 * s / den + c7
                elif order == 1:
                    total += -c1 * c3 * c4 * c5 * s / (den * den)
                else:
                    total += -c1 * c3 * (c4 * c5) ** 2 * s * (c2 * s - c3) / den**3
            else:
                den = c2 + c3 * s
                if order == 0:
                    total += c1 / den + c7
                elif order == 1:
                    total += -c1 * c3 * c4 * c5 * s / (den * den)
                else:
                    total += -c1 * c3 * (c4 * c5) ** 2 * s * (c2 - c3 * s) / den**3
        return total

    return (b0, b0p, b0pp,
            lambda u: _sig(u, 0), lambda u: _sig(u, 1), lambda u: _sig(u, 2))


def _scalar_model(L: Landscape):
    """Scalar field, Jacobian and dose-direction closures for the full system.

    Fast path for constant interaction and linear rate (the preset setting);
    otherwise falls back to the landscape's vectorized evaluators.
    """
    eps = L.epsilon
    b0, b0p, b0pp, b1, b1p, b1pp = _scalar_parts(L)

    if L.interaction.is_constant and L.rate.is_linear:
        cc = float(L.interaction.const)
        sl = float(L.rate.slope)

        def fld(u, n, a):
            bp = b0p(u) - a * b1p(u)
            return (eps * sl * n * bp, n * (b0(u) - a * b1(u) - cc * n))

        def jac(u, n, a):
            bp = b0p(u) - a * b1p(u)
            bpp = b0pp(u) - a * b1pp(u)
            return (eps * sl * n * bpp, eps * sl * bp,
                    n * bp, b0(u) - a * b1(u) - 2 * cc * n)

        def fdose(u, n):
            return (-eps * sl * n * b1p(u), -n * b1(u))

        return fld, jac, fdose

    def fld(u, n, a):
        kn = float(L.k(n))
        bp = b0p(u) - a * b1p(u) - float(L.c_d1(u)) * n
        return (eps * kn * bp, n * (b0(u) - a * b1(u) - float(L.c(u)) * n))

    def jac(u, n, a):
        kn = float(L.k(n))
        dkn = float(L.k_d1(n))
        cu, cpu, cppu = float(L.c(u)), float(L.c_d1(u)), float(L.c_d2(u))
        bp = b0p(u) - a * b1p(u) - cpu * n
        bpp = b0pp(u) - a * b1pp(u) - cppu * n
        return (eps * kn * bpp, eps * (dkn * bp - kn * cpu),
                n * bp, b0(u) - a * b1(u) - 2 * cu * n)

    def fdose(u, n):
        return (-eps * float(L.k(n)) * b1p(u), -n * b1(u))

    return fld, jac, fdose


# ---------------------------------------------------------------------------
# grid sweeps
# ---------------------------------------------------------------------------

def forward_sim(L: Landscape, x0, t: np.ndarray, control: np.ndarray) -> np.ndarray:
    """RK4 on the time grid with the control linearly interpolated at
    half-steps; returns states of shape (len(t), 2)."""
    fld, _, _ = _scalar_model(L)
    out = np.empty((t.size, 2))
    u, n = float(x0[0]), float(x0[1])
    out[0] = (u, n)
    for i in range(t.size - 1):
        dt = t[i + 1] - t[i]
        a0, a1 = control[i], control[i + 1]
        am = 0.5 * (a0 + a1)
        k1u, k1n = fld(u, n, a0)
        k2u, k2n = fld(u + 0.5 * dt * k1u, n + 0.5 * dt * k1n, am)
        k3u, k3n = fld(u + 0.5 * dt * k2u, n + 0.5 * dt * k2n, am)
        k4u, k4n = fld(u + dt * k3u, n + dt * k3n, a1)
        u += dt * (k1u + 2 * k2u + 2 * k3u + k4u) / 6.0
        n += dt * (k1n + 2 * k2n + 2 * k3n + k4n) / 6.0
        out[i + 1] = (u, n)
    return out


def backward_sim(L: Landscape, t: np.ndarray, states: np.ndarray,
                 control: np.ndarray, lam_T) -> np.ndarray:
    """Adjoint sweep lam' = -(Dx f)^T lam from lam(T), states interpolated
    midway between nodes; returns (len(t), 2)."""
    _, jac, _ = _scalar_model(L)
    lam = np.empty((t.size, 2))
    lu, ln = float(lam_T[0]), float(lam_T[1])
    lam[-1] = (lu, ln)

    def rhs(u, n, a, lu, ln):
        j11, j12, j21, j22 = jac(u, n, a)
        return (-(j11 * lu + j21 * ln), -(j12 * lu + j22 * ln))

    for i in range(t.size - 1, 0, -1):
        dt = t[i] - t[i - 1]
        u1, n1 = states[i]
        u0, n0 = states[i - 1]
        um, nm = 0.5 * (u0 + u1), 0.5 * (n0 + n1)
        a1, a0 = control[i], control[i - 1]
        am = 0.5 * (a0 + a1)
        k1u, k1n = rhs(u1, n1, a1, lu, ln)
        k2u, k2n = rhs(um, nm, am, lu - 0.5 * dt * k1u, ln - 0.5 * dt * k1n)
        k3u, k3n = rhs(um, nm, am, lu - 0.5 * dt * k2u, ln - 0.5 * dt * k2n)
        k4u, k4n = rhs(u0, n0, a0, lu - dt * k3u, ln - dt * k3n)
        lu -= dt * (k1u + 2 * k2u + 2 * k3u + k4u) / 6.0
        ln -= dt * (k1n + 2 * k2n + 2 * k3n + k4n) / 6.0
        lam[i - 1] = (lu, ln)
    return lam


def _switching(L: Landscape, states: np.ndarray, lam: np.ndarray) -> np.ndarray:
    _, _, fdose = _scalar_model(L)
    out = np.empty(states.shape[0])
    for i in range(states.shape[0]):
        g1u, g1n = fdose(states[i, 0], states[i, 1])
        out[i] = 1.0 + lam[i, 0] * g1u + lam[i, 1] * g1n
    return out


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

@dataclass
class OptimalRun:
    t: np.ndarray
    states: np.ndarray
    adjoint: np.ndarray
    control: np.ndarray
    objective: float
    nu: float
    residual: float
    converged: bool
    iterations: int
    objective_history: list[float]
    singular_fraction: float
    exit: str = "none"          # left | right | none
    x0: tuple[float, float] = (0.0, 0.0)
    dose_range: tuple[float, float] = (0.0, 0.0)
    info: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "x0": list(self.x0), "T": float(self.t[-1]),
            "dose_range": list(self.dose_range),
            "objective": self.objective, "nu": self.nu,
            "residual": self.residual, "converged": self.converged,
            "iterations": self.iterations,
            "singular_fraction": self.singular_fraction,
            "exit": self.exit, "info": self.info,
        }

    def csv_rows(self):
        for i in range(self.t.size):
            yield (self.t[i], self.states[i, 0], self.states[i, 1],
                   self.control[i], self.adjoint[i, 0], self.adjoint[i, 1])


def _fbsm_inner(L, x0, t, A, nu, control, *, tol_ctrl, max_iter, relax,
                sing_tol=1e-3):
    """Sweep to a fixed point of the relaxed bang-bang update for fixed nu.

    Returns (control, states, adjoint, iterations, obj_history, converged).
    """
    a_lo, a_hi = A
    obj_hist: list[float] = []
    pattern = None
    stable_count = 0
    converged = False
    states = adjoint = None
    it = 0
    for it in range(1, max_iter + 1):
        states = forward_sim(L, x0, t, control)
        adjoint = backward_sim(L, t, states, control, (0.0, nu))
        phi = _switching(L, states, adjoint)
        bang = np.where(phi < 0.0, a_hi, a_lo)
        new_control = relax * control + (1.0 - relax) * bang
        obj_hist.append(float(np.trapezoid(new_control, t)))
        denom = max(float(np.sum(np.abs(new_control))), 1e-12)
        change = float(np.sum(np.abs(new_control - control))) / denom
        control = new_control
        new_pattern = phi < 0.0
        if pattern is not None and np.array_equal(new_pattern, pattern):
            stable_count += 1
        else:
            stable_count = 0
        pattern = new_pattern
        if change < tol_ctrl or stable_count >= 3:
            converged = True
            break
    return control, states, adjoint, it, obj_hist, converged


def fbsm_solve(x0, T: float, A, L: Landscape, *, tol_ctrl: float = 1e-4,
               max_iter: int = 200, relax: float = 0.5,
               n_nodes: int | None = None, shoot_tol: float | None = None,
               nu_max: float = 1e4, max_shoots: int = 60,
               warm: tuple[np.ndarray, float] | None = None) -> OptimalRun:
    """Solve the L1-minimal periodic dosing problem from x0 over [0, T].

    The outer shooting loop adjusts the terminal multiplier nu until the
    population returns, |n(T) - n(0)| < shoot_tol (defaults to tol_ctrl);
    the inner loop is the relaxed forward-backward sweep.  Non-convergence
    is reported on the returned run, never raised.
    """
    if T <= 0:
        raise ValueError("horizon T must be positive")
    a_lo, a_hi = float(A[0]), float(A[1])
    if shoot_tol is None:
        shoot_tol = tol_ctrl
    if n_nodes is None:
        n_nodes = max(600, int(round(T / 0.02)) + 1)
    t = np.linspace(0.0, T, n_nodes)
    x0 = (float(x0[0]), float(x0[1]))
    n0 = x0[1]

    control = np.full(n_nodes, a_lo)
    nu0 = 0.0
    if warm is not None:
        warm_ctrl, warm_nu = warm
        control = np.interp(t, np.linspace(0.0, T, warm_ctrl.size), warm_ctrl)
        nu0 = float(warm_nu)

    total_iters = 0
    obj_hist_all: list[float] = []
    cache: dict = {}

    def g(nu):
        nonlocal total_iters, control
        ctrl, states, adjoint, its, hist, conv = _fbsm_inner(
            L, x0, t, (a_lo, a_hi), nu, control,
            tol_ctrl=tol_ctrl, max_iter=max_iter, relax=relax)
        total_iters += its
        obj_hist_all.extend(hist)
        control = ctrl  # warm-start the next multiplier
        cache.update(states=states, adjoint=adjoint, control=ctrl,
                     inner_converged=conv, sweep_objectives=hist)
        return states[-1, 1] - n0

    # bracket the multiplier: nu = 0 never doses; growing nu doses harder
    shots = 0
    nu_lo = 0.0 if warm is None else max(0.0, nu0 - 1.0)
    g_lo = g(nu_lo)
    shots += 1
    residual = abs(g_lo)
    best = (nu_lo, residual, dict(cache))
    converged = residual < shoot_tol
    if not converged:
        if g_lo < 0:
            # already over-returning with the least dosing the bracket allows
            nu_hi, g_hi = nu_lo, g_lo
            nu_lo, g_lo = 0.0, g(0.0)
            shots += 1
        else:
            nu_hi = max(1.0, 2 * nu0) if nu0 > 0 else 1.0
            g_hi = g(nu_hi)
            shots += 1
            while g_hi > 0 and nu_hi < nu_max and shots < max_shoots:
                nu_lo, g_lo = nu_hi, g_hi
                nu_hi *= 4.0
                g_hi = g(nu_hi)
                shots += 1
            if abs(g_hi) < residual:
                best = (nu_hi, abs(g_hi), dict(cache))
        if g_lo > 0 >= g_hi:
            # bisect on the multiplier, tracking the best residual seen
            for _ in range(max_shoots - shots):
                nu_mid = 0.5 * (nu_lo + nu_hi)
                g_mid = g(nu_mid)
                shots += 1
                if abs(g_mid) < best[1]:
                    best = (nu_mid, abs(g_mid), dict(cache))
                if abs(g_mid) < shoot_tol:
                    converged = True
                    break
                if g_mid > 0:
                    nu_lo = nu_mid
                else:
                    nu_hi = nu_mid
                if nu_hi - nu_lo < 1e-13 * max(1.0, nu_hi):
                    break

    nu, residual, snap = best
    states = snap["states"]
    adjoint = snap["adjoint"]
    control = snap["control"]
    phi = _switching(L, states, adjoint)
    sing = float(np.mean(np.abs(phi) < 1e-3))
    sweep_hist = snap.get("sweep_objectives", [])
    return OptimalRun(
        t=t, states=states, adjoint=adjoint, control=control,
        objective=float(np.trapezoid(control, t)),
        nu=float(nu), residual=float(residual),
        converged=bool(converged and snap.get("inner_converged", True)),
        iterations=total_iters, objective_history=obj_hist_all,
        singular_fraction=sing, x0=x0, dose_range=(a_lo, a_hi),
        info={"n_nodes": n_nodes, "relax": relax, "tol_ctrl": tol_ctrl,
              "shoot_tol": shoot_tol, "shots": shots,
              "final_sweep_objectives": sweep_hist,
              "final_sweep_monotone_from": _first_monotone_index(sweep_hist),
              "epsilon": L.epsilon},
    )


def _first_monotone_index(hist: list[float]) -> int | None:
    """Earliest index after which the recorded objective moves one-sidedly
    (the relaxed update contracts geometrically once the bang-bang pattern
    settles).  Reported on the run, asserted only in tests."""
    if not hist:
        return None
    tol = 1e-9 * max(1.0, max(map(abs, hist)))
    for i in range(len(hist)):
        seq = hist[i:]
        diffs = [b - a for a, b in zip(seq[:-1], seq[1:])]
        if all(d <= tol for d in diffs) or all(d >= -tol for d in diffs):
            return i
    return None


# ---------------------------------------------------------------------------
# cycling and the exit dichotomy
# ---------------------------------------------------------------------------

def run_cycles(run: OptimalRun, n_cycles: int, L: Landscape, *,
               resolve: bool = True, **solve_kwargs) -> dict:
    """Iterate the treatment interval n_cycles times from the run's start.

    With resolve=True (default) the problem is re-optimized each interval
    from the reached state, warm-started, so every interval is optimal and
    enforces its own population return -- the repeated-interval experiment.
    With resolve=False the converged schedule is replayed verbatim.
    Reports the per-cycle population-return error against the original n(0).
    """
    if not run.converged:
        raise ValueError("run_cycles needs a converged run")
    T = float(run.t[-1])
    n0 = run.x0[1]
    t_all = [run.t.copy()]
    states_all = [run.states.copy()]
    control_all = [run.control.copy()]
    errors = [abs(run.states[-1, 1] - n0)]
    objectives = [run.objective]
    current = run
    for k in range(1, n_cycles):
        x_next = current.states[-1]
        if resolve:
            nxt = fbsm_solve(x_next, T, run.dose_range, L,
                             warm=(current.control, current.nu), **solve_kwargs)
            if not nxt.converged:
                return {"cycles_completed": k, "failed_at": k,
                        "t": np.concatenate(t_all), "states": np.vstack(states_all),
                        "control": np.concatenate(control_all),
                        "return_errors": errors, "objectives": objectives,
                        "converged": False}
        else:
            states = forward_sim(L, x_next, run.t, run.control)
            nxt = OptimalRun(
                t=run.t, states=states, adjoint=run.adjoint, control=run.control,
                objective=run.objective, nu=run.nu,
                residual=abs(states[-1, 1] - states[0, 1]), converged=True,
                iterations=0, objective_history=[], singular_fraction=run.singular_fraction,
                x0=(float(x_next[0]), float(x_next[1])), dose_range=run.dose_range)
        t_all.append(nxt.t + k * T)
        states_all.append(nxt.states)
        control_all.append(nxt.control)
        errors.append(abs(nxt.states[-1, 1] - n0))
        objectives.append(nxt.objective)
        current = nxt
    return {"cycles_completed": n_cycles,
            "t": np.concatenate(t_all), "states": np.vstack(states_all),
            "control": np.concatenate(control_all),
            "return_errors": errors, "objectives": objectives,
            "converged": True}


def _saddle_omega(L: Landscape, A, x0) -> OmegaCurve:
    comps = [c for c in components(A, L) if c.kind in (2, 3)]
    for c in comps:
        om = build_omega(c, L)
        if om.encloses(np.asarray(x0, dtype=float)):
            return om
    raise ValueError(f"start {x0} is not inside any saddle/mixed controllable set")


def _side_of_exit(omega: OmegaCurve, state) -> str:
    piece = omega.nearest_piece(state)
    comp = omega.component
    if piece.kind == "stable-manifold":
        return "left" if abs(piece.anchor[0] - comp.u_lo) < abs(piece.anchor[0] - comp.u_hi) \
            else "right"
    u_mid = 0.5 * (comp.u_lo + comp.u_hi)
    return "left" if state[0] < u_mid else "right"


def classify_exit(run: OptimalRun, L: Landscape, *, omega: OmegaCurve | None = None,
                  max_cycles: int = 40, post_fail_dose: float | None = None,
                  **solve_kwargs) -> dict:
    """Long-run fate of repeated optimal treatment intervals from the run.

    Re-optimizes interval after interval until the trajectory leaves the
    saddle-type set (side read off the nearest boundary piece).  When an
    interval's optimization fails, treatment switches to the maximum
    tolerable dose and the continuation decides the side, matching the
    observed failure mode of right transitions.
    """
    if omega is None:
        omega = _saddle_omega(L, run.dose_range, run.x0)
    if post_fail_dose is None:
        post_fail_dose = L.dose_max
    T = float(run.t[-1])
    current = run
    state = np.asarray(run.x0, dtype=float)
    for cycle in range(max_cycles):
        if not current.converged:
            traj = flow(state, Schedule.constant(post_fail_dose), L, system="full",
                        horizon=50.0 / L.epsilon, eta=None)
            outside = ~omega.contains_points(traj.states)
            if outside.any():
                hit = traj.states[int(np.argmax(outside))]
                return {"exit": _side_of_exit(omega, hit), "cycle": cycle,
                        "failed": True, "state": hit.tolist()}
            return {"exit": "none", "cycle": cycle, "failed": True}
        outside = ~omega.contains_points(current.states)
        if outside.any():
            hit = current.states[int(np.argmax(outside))]
            return {"exit": _side_of_exit(omega, hit), "cycle": cycle,
                    "failed": False, "state": hit.tolist()}
        state = current.states[-1]
        current = fbsm_solve(state, T, run.dose_range, L,
                             warm=(current.control, current.nu), **solve_kwargs)
    return {"exit": "none", "cycle": max_cycles, "failed": False}


def exit_experiment(L: Landscape, A, x0, T: float, *, omega: OmegaCurve | None = None,
                    max_cycles: int = 40, **solve_kwargs) -> dict:
    """Solve from x0 and classify the long-run transition (left/right)."""
    run = fbsm_solve(x0, T, A, L, **solve_kwargs)
    verdict = classify_exit(run, L, omega=omega, max_cycles=max_cycles,
                            **solve_kwargs)
    run.exit = verdict["exit"]
    return {"run": run, **verdict}


def find_split(L: Landscape, A, u_lo: float, u_hi: float, n0: float, T: float, *,
               omega: OmegaCurve | None = None, tol_u: float = 2e-5,
               max_bisect: int = 18, max_cycles: int = 40,
               **solve_kwargs) -> dict:
    """Bisect the initial trait between a left-exiting and a right-exiting
    start; returns the bracket and its midpoint.  The endpoints must
    classify to opposite sides (raises otherwise)."""
    if omega is None:
        omega = _saddle_omega(L, A, (0.5 * (u_lo + u_hi), n0))

    def side(u):
        res = exit_experiment(L, A, (u, n0), T, omega=omega,
                              max_cycles=max_cycles, **solve_kwargs)
        return res["exit"]

    s_lo, s_hi = side(u_lo), side(u_hi)
    if {s_lo, s_hi} != {"left", "right"}:
        raise RuntimeError(
            f"bisection endpoints do not bracket the dichotomy: "
            f"side({u_lo})={s_lo}, side({u_hi})={s_hi}")
    history = [(u_lo, s_lo), (u_hi, s_hi)]
    for _ in range(max_bisect):
        if u_hi - u_lo <= tol_u:
            break
        u_mid = 0.5 * (u_lo + u_hi)
        s = side(u_mid)
        history.append((u_mid, s))
        if s not in ("left", "right"):
            raise RuntimeError(f"undecided classification at u0={u_mid}")
        if s == s_lo:
            u_lo = u_mid
        else:
            u_hi = u_mid
    return {"bracket": (u_lo, u_hi), "split": 0.5 * (u_lo + u_hi),
            "sides": (s_lo, s_hi), "history": history,
            "T": T, "epsilon": L.epsilon}
