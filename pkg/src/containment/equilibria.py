"""Equilibrium branch of the dose-response system and its classification.

For every trait value ``u`` there is exactly one dose making
``(u, h(u, a))`` an equilibrium of the reduced system (uniqueness from
H3, where the denominator below is strictly negative):

    a_star(u) = (b0'(u) c(u) - c'(u) b0(u)) / (b1'(u) c(u) - c'(u) b1(u)),

with equilibrium density ``h_star(u) = h(u, a_star(u))``.  The Jacobian
of the reduced field on the branch is upper triangular, with spectrum

    { eps * lam2(u) * a_star'(u),  -lam1(u) },

where ``lam1 = c/k_tilde(h_star) > 0`` and ``lam2 = (b1' c - b1 c')/c < 0``.
Stability is therefore read off the sign of ``a_star'``: positive means
stable node, negative means saddle, zero marks a fold candidate.

A dose range ``A = [a_lo, a_hi]`` selects the feasible part of the branch;
its maximal connected components are intervals in ``u`` whose endpoints sit
at the extreme doses.  Components come in three types: node-node (1),
saddle-saddle (2) and node-saddle (3).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .landscape import Landscape

__all__ = [
    "STABLE_NODE",
    "SADDLE",
    "FOLD_CANDIDATE",
    "NonHyperbolicRange",
    "GridResolutionError",
    "a_star",
    "a_star_d1",
    "a_star_d2",
    "h_star",
    "classify",
    "jacobian_eigs",
    "reduced_jacobian",
    "saddle_directions",
    "EquilibriumBranch",
    "branch",
    "Endpoint",
    "Component",
    "components",
    "is_hyperbolic",
    "folds",
    "equilibria_for_dose",
    "attractors_for_dose",
]

STABLE_NODE = "stable-node"
SADDLE = "saddle"
FOLD_CANDIDATE = "fold-candidate"

_H3_DENOM_TOL = 1e-14
_DEFAULT_DERIV_TOL = 1e-8


class NonHyperbolicRange(ValueError):
    """A fold of the branch sits at an extreme dose of the requested range."""

    def __init__(self, message, witnesses=None):
        super().__init__(message)
        self.witnesses = witnesses or []


class GridResolutionError(ValueError):
    """The u-grid cannot separate branch features (component lost in a cell)."""


# ---------------------------------------------------------------------------
# pointwise branch quantities (vectorized over u)
# ---------------------------------------------------------------------------

def _num_den(u, L: Landscape):
    c = np.asarray(L.c(u))
    dc = np.asarray(L.c_d1(u))
    num = np.asarray(L.b0_d1(u)) * c - dc * np.asarray(L.b0(u))
    den = np.asarray(L.b1_d1(u)) * c - dc * np.asarray(L.b1(u))
    return num, den


def a_star(u, L: Landscape):
    """Unique equilibrium dose at trait u (H3 keeps the denominator negative)."""
    num, den = _num_den(u, L)
    if np.any(np.abs(den) < _H3_DENOM_TOL):
        bad = np.atleast_1d(np.asarray(u))[np.atleast_1d(np.abs(den) < _H3_DENOM_TOL)]
        raise ValueError(f"H3 violated (vanishing denominator) near u = {bad[:5]}")
    return num / den


def a_star_d1(u, L: Landscape):
    """Analytic derivative of a_star (quotient rule; cross terms cancel)."""
    c = np.asarray(L.c(u))
    dc = np.asarray(L.c_d1(u))
    d2c = np.asarray(L.c_d2(u))
    num, den = _num_den(u, L)
    dnum = np.asarray(L.b0_d2(u)) * c - d2c * np.asarray(L.b0(u))
    dden = np.asarray(L.b1_d2(u)) * c - d2c * np.asarray(L.b1(u))
    return (dnum * den - num * dden) / den**2


def a_star_d2(u, L: Landscape, step: float = 1e-5):
    """Second derivative, central difference of the analytic first derivative.

    Only used to flag degenerate folds; classification never depends on it.
    """
    return (a_star_d1(np.asarray(u) + step, L) - a_star_d1(np.asarray(u) - step, L)) / (2 * step)


def h_star(u, L: Landscape):
    """Equilibrium density h(u, a_star(u)) along the branch."""
    return L.h(u, a_star(u, L))


def classify(u, L: Landscape, deriv_tol: float = _DEFAULT_DERIV_TOL) -> str:
    """Stability label at trait u from the sign of a_star'."""
    da = float(a_star_d1(u, L))
    if da > deriv_tol:
        return STABLE_NODE
    if da < -deriv_tol:
        return SADDLE
    return FOLD_CANDIDATE


def _lambda12(u, L: Landscape):
    c = np.asarray(L.c(u))
    lam1 = c / np.asarray(L.k_tilde(h_star(u, L)))
    lam2 = (np.asarray(L.b1_d1(u)) * c - np.asarray(L.b1(u)) * np.asarray(L.c_d1(u))) / c
    return lam1, lam2


def jacobian_eigs(u, L: Landscape):
    """Eigenvalue pair (slow, fast) of the reduced Jacobian on the branch.

    slow = eps * lam2 * a_star'  (sign of a_star' decides stability),
    fast = -lam1 < 0             (population relaxation).
    """
    lam1, lam2 = _lambda12(u, L)
    return L.epsilon * lam2 * a_star_d1(u, L), -lam1


def reduced_jacobian(u, L: Landscape) -> np.ndarray:
    """Closed-form (upper-triangular) Jacobian of the reduced field at
    the equilibrium (u, h_star(u)) for dose a_star(u)."""
    hs = h_star(u, L)
    a = a_star(u, L)
    j11 = L.epsilon * (float(L.b_d2(u, a)) - float(L.c_d2(u)) * float(hs))
    j12 = -L.epsilon * float(L.c_d1(u))
    j22 = -float(L.c(u)) / float(L.k_tilde(hs))
    return np.array([[j11, j12], [0.0, j22]])


def saddle_directions(u, L: Landscape):
    """Unit eigenvectors (unstable, stable) of a saddle on the branch.

    Triangular structure gives the slow (unstable) direction exactly
    (1, 0); the fast (stable) direction is vertical up to O(eps).
    """
    J = reduced_jacobian(u, L)
    j11, j12, j22 = J[0, 0], J[0, 1], J[1, 1]
    if not (j11 > 0 > j22):
        raise ValueError(f"not a saddle at u={u}: eigenvalues ({j11:.3e}, {j22:.3e})")
    v_unstable = np.array([1.0, 0.0])
    v_stable = np.array([j12, j22 - j11])
    nrm = np.linalg.norm(v_stable)
    if nrm == 0:
        raise ValueError("degenerate stable eigenvector")
    v_stable = v_stable / nrm
    if v_stable[1] < 0:
        v_stable = -v_stable
    return v_unstable, v_stable


# ---------------------------------------------------------------------------
# branch over a grid
# ---------------------------------------------------------------------------

@dataclass
class EquilibriumBranch:
    """The equilibrium graph sampled on a u-grid, with stability labels."""

    u: np.ndarray
    a: np.ndarray
    h: np.ndarray
    a_prime: np.ndarray
    labels: list[str]
    eigs: np.ndarray  # shape (n, 2): (slow, fast)

    def csv_rows(self):
        for i in range(self.u.size):
            yield (self.u[i], self.a[i], self.h[i], self.a_prime[i], self.labels[i])


def branch(L: Landscape, u_grid: np.ndarray | int = 2000,
           deriv_tol: float = _DEFAULT_DERIV_TOL) -> EquilibriumBranch:
    if np.isscalar(u_grid):
        u_grid = np.linspace(*L.u_window, int(u_grid))
    u_grid = np.asarray(u_grid, dtype=float)
    a = a_star(u_grid, L)
    da = a_star_d1(u_grid, L)
    hs = L.h(u_grid, a)
    lam1, lam2 = _lambda12(u_grid, L)
    eigs = np.stack([L.epsilon * lam2 * da, -lam1], axis=1)
    labels = [
        STABLE_NODE if d > deriv_tol else SADDLE if d < -deriv_tol else FOLD_CANDIDATE
        for d in da
    ]
    return EquilibriumBranch(u=u_grid, a=a, h=hs, a_prime=da, labels=labels, eigs=eigs)


# ---------------------------------------------------------------------------
# folds and hyperbolicity of a dose range
# ---------------------------------------------------------------------------

def folds(L: Landscape, u_grid: np.ndarray | int = 4000,
          degenerate_tol: float = 1e-4) -> list[dict]:
    """Locate zeros of a_star' on the working window.

    Returns one record per fold: u, dose a_star(u), curvature a_star'',
    and a degeneracy flag (|a_star''| below tolerance).
    """
    if np.isscalar(u_grid):
        u_grid = np.linspace(*L.u_window, int(u_grid))
    u_grid = np.asarray(u_grid, dtype=float)
    da = np.asarray(a_star_d1(u_grid, L))
    out = []
    sign_flip = np.nonzero(np.sign(da[:-1]) * np.sign(da[1:]) < 0)[0]
    for i in sign_flip:
        uf = brentq(lambda x: float(a_star_d1(x, L)), u_grid[i], u_grid[i + 1],
                    xtol=1e-13, rtol=8.9e-16)
        curv = float(a_star_d2(uf, L))
        out.append({
            "u": float(uf),
            "a": float(a_star(uf, L)),
            "curvature": curv,
            "degenerate": abs(curv) < degenerate_tol,
        })
    return out


def is_hyperbolic(A, L: Landscape, u_grid: np.ndarray | int = 4000,
                  dose_tol: float = 1e-9):
    """Whether all equilibria of the extremal fields f(., a_lo/a_hi) are
    hyperbolic: no fold of the branch may sit at an extreme dose.

    Returns (verdict, witnesses); each witness is a fold record whose dose
    matches one of the range endpoints within `dose_tol`.
    """
    a_lo, a_hi = float(A[0]), float(A[1])
    if a_lo > a_hi:
        raise ValueError(f"empty dose range {A}")
    witnesses = [
        f for f in folds(L, u_grid)
        if min(abs(f["a"] - a_lo), abs(f["a"] - a_hi)) <= dose_tol
    ]
    return (not witnesses), witnesses


# ---------------------------------------------------------------------------
# connected components of the feasible branch
# ---------------------------------------------------------------------------

@dataclass
class Endpoint:
    u: float
    dose: float          # the extreme dose this endpoint realizes
    state: np.ndarray    # (u, h_star(u))
    label: str

    def to_dict(self) -> dict:
        return {"u": self.u, "dose": self.dose,
                "state": [float(self.state[0]), float(self.state[1])],
                "label": self.label}


@dataclass
class Component:
    """One maximal u-interval of the branch with doses inside the range."""

    u_lo: float
    u_hi: float
    lo: Endpoint
    hi: Endpoint
    dose_range: tuple[float, float]
    kind: int = field(init=False)  # 1 node-node, 2 saddle-saddle, 3 mixed

    def __post_init__(self):
        labels = {self.lo.label, self.hi.label}
        if labels == {STABLE_NODE}:
            self.kind = 1
        elif labels == {SADDLE}:
            self.kind = 2
        elif labels == {STABLE_NODE, SADDLE}:
            self.kind = 3
        else:
            raise ValueError(f"cannot type component with endpoint labels {labels}")

    @property
    def width(self) -> float:
        return self.u_hi - self.u_lo

    def contains_u(self, u: float) -> bool:
        return self.u_lo <= u <= self.u_hi

    def to_dict(self) -> dict:
        return {
            "u_interval": [self.u_lo, self.u_hi],
            "type": self.kind,
            "lo": self.lo.to_dict(),
            "hi": self.hi.to_dict(),
            "dose_range": list(self.dose_range),
        }


def _refine_endpoint(u_in, u_out, target, L) -> float:
    """Bisect a_star(u) = target between a feasible and an infeasible point."""
    f = lambda x: float(a_star(x, L)) - target
    if f(u_in) == 0.0:
        return float(u_in)
    lo, hi = (u_in, u_out) if u_in < u_out else (u_out, u_in)
    return float(brentq(f, lo, hi, xtol=1e-12, rtol=8.9e-16))


def components(A, L: Landscape, u_grid: np.ndarray | int = 2000,
               deriv_tol: float = _DEFAULT_DERIV_TOL,
               check_hyperbolic: bool = True) -> list[Component]:
    """Maximal connected components of the feasible branch for dose range A.

    Endpoints are refined by bisection on a_star(u) = a_lo/a_hi to ~1e-12
    and typed from the sign of a_star'.  Raises NonHyperbolicRange when a
    fold sits at an extreme dose, and GridResolutionError when a feasible
    fold falls between grid points without being detected.
    """
    a_lo, a_hi = float(A[0]), float(A[1])
    if a_lo > a_hi:
        raise ValueError(f"empty dose range {A}")
    if check_hyperbolic:
        ok, wit = is_hyperbolic((a_lo, a_hi), L, u_grid if not np.isscalar(u_grid) else 2 * int(u_grid))
        if not ok:
            raise NonHyperbolicRange(
                f"range [{a_lo}, {a_hi}] is not hyperbolic: fold(s) at extreme dose", wit)

    if np.isscalar(u_grid):
        u_grid = np.linspace(*L.u_window, int(u_grid))
    u_grid = np.asarray(u_grid, dtype=float)
    a_vals = np.asarray(a_star(u_grid, L))
    feasible = (a_vals >= a_lo) & (a_vals <= a_hi)

    runs: list[tuple[int, int]] = []
    idx = np.nonzero(feasible)[0]
    if idx.size:
        breaks = np.nonzero(np.diff(idx) > 1)[0]
        starts = np.concatenate([[idx[0]], idx[breaks + 1]])
        ends = np.concatenate([idx[breaks], [idx[-1]]])
        runs = list(zip(starts, ends))

    out: list[Component] = []
    for i0, i1 in runs:
        ends = []
        for inner, outer_idx in ((i0, i0 - 1), (i1, i1 + 1)):
            u_in = float(u_grid[inner])
            if outer_idx < 0 or outer_idx >= u_grid.size:
                raise GridResolutionError(
                    f"feasible branch reaches the grid boundary at u={u_in}; "
                    "enlarge the working window")
            a_in = float(a_vals[inner])
            a_out = float(a_vals[outer_idx])
            target = a_lo if a_out < a_lo else a_hi
            # the crossing can pass both bounds inside one cell; pick the
            # bound actually crossed next to the feasible point
            if a_out < a_lo:
                target = a_lo
            elif a_out > a_hi:
                target = a_hi
            else:  # pragma: no cover - contradiction with run extraction
                raise GridResolutionError("inconsistent feasibility mask")
            u_end = _refine_endpoint(u_in, float(u_grid[outer_idx]), target, L)
            ends.append((u_end, target))
        (u_left, d_left), (u_right, d_right) = ends
        lo = Endpoint(u=u_left, dose=d_left,
                      state=np.array([u_left, float(h_star(u_left, L))]),
                      label=classify(u_left, L, deriv_tol))
        hi = Endpoint(u=u_right, dose=d_right,
                      state=np.array([u_right, float(h_star(u_right, L))]),
                      label=classify(u_right, L, deriv_tol))
        out.append(Component(u_lo=u_left, u_hi=u_right, lo=lo, hi=hi,
                             dose_range=(a_lo, a_hi)))

    # safeguard against features thinner than a grid cell: every fold with
    # a feasible dose must lie inside a detected component
    for f in folds(L, u_grid.size * 2):
        if a_lo + 1e-12 < f["a"] < a_hi - 1e-12:
            if not any(comp.contains_u(f["u"]) for comp in out):
                raise GridResolutionError(
                    f"fold at u={f['u']:.6g} (dose {f['a']:.6g}) not resolved by the "
                    "u-grid; increase grid resolution")
    return out


# ---------------------------------------------------------------------------
# equilibria of a single extremal field
# ---------------------------------------------------------------------------

def equilibria_for_dose(a: float, L: Landscape, u_grid: np.ndarray | int = 4000) -> list[dict]:
    """All equilibria of the reduced field at fixed dose a: roots of
    a_star(u) = a over the working window, with labels."""
    if np.isscalar(u_grid):
        u_grid = np.linspace(*L.u_window, int(u_grid))
    u_grid = np.asarray(u_grid, dtype=float)
    res = np.asarray(a_star(u_grid, L)) - float(a)
    out = []
    flips = np.nonzero(np.sign(res[:-1]) * np.sign(res[1:]) < 0)[0]
    for i in flips:
        ur = brentq(lambda x: float(a_star(x, L)) - float(a),
                    u_grid[i], u_grid[i + 1], xtol=1e-13, rtol=8.9e-16)
        out.append({
            "u": float(ur),
            "state": np.array([ur, float(L.h(ur, a))]),
            "label": classify(ur, L),
        })
    for i in np.nonzero(res == 0.0)[0]:
        ur = float(u_grid[i])
        if not any(abs(e["u"] - ur) < 1e-10 for e in out):
            out.append({"u": ur, "state": np.array([ur, float(L.h(ur, a))]),
                        "label": classify(ur, L)})
    out.sort(key=lambda e: e["u"])
    return out


def attractors_for_dose(a: float, L: Landscape, u_grid: np.ndarray | int = 4000) -> list[np.ndarray]:
    return [e["state"] for e in equilibria_for_dose(a, L, u_grid)
            if e["label"] == STABLE_NODE]
