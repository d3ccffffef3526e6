"""Growth landscapes for a trait-structured tumour population under dosing.

A :class:`Landscape` bundles the four ingredients of one model instance:

* the intrinsic growth profile ``b0(u)`` over the resistance trait ``u``,
  a Gaussian mixture minus an even-power confinement polynomial,
* the drug-efficacy profile ``b1(u)``, a sum of decaying sigmoids
  (log-kill: dose ``a`` removes ``a*b1(u)`` per capita),
* the crowding interaction ``c(u) > 0``,
* the evolutionary rate function ``k(n)`` with ``k(0)=0``, ``k'(0)>0``,
  and the timescale-separation rate ``epsilon``.

The per-capita equilibrium density ("fitness landscape") is

    h(u, a) = (b0(u) - a*b1(u)) / c(u).

All evaluations are closed forms with analytic first and second
derivatives; downstream classification of equilibria depends on
derivative signs, so finite differences are used only as cross-checks.

The structural assumptions audited by :func:`check_hypotheses`:

* H1  k vanishes only at 0 and k'(0) > 0,
* H2  b1 > 0 and b1' < 0 (treatment always costs growth, resistance
      always mitigates),
* H3  c'/c > b1'/b1 (rising dose pushes fitness maxima toward higher
      resistance),
* H4  h(., a) has finitely many isolated critical points and decays at
      large |u| (checked as monotone tails just outside the window).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Landscape",
    "Interaction",
    "RateFunction",
    "HypothesisReport",
    "HypothesisResult",
    "check_hypotheses",
    "default_grids",
    "preset",
    "PRESET_NAMES",
]

ArrayLike = float | np.ndarray


# ---------------------------------------------------------------------------
# interaction function c(u) and evolutionary rate k(n)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interaction:
    """Crowding interaction ``c(u)``: a positive constant or coded function.

    For a coded interaction supply value/first/second derivative callables,
    each accepting scalars or arrays.
    """

    const: float | None = 1.0
    funcs: tuple[Callable, Callable, Callable] | None = None

    def __post_init__(self):
        if (self.const is None) == (self.funcs is None):
            raise ValueError("Interaction needs exactly one of const or funcs")
        if self.const is not None and not self.const > 0:
            raise ValueError(f"constant interaction must be positive, got {self.const}")

    @property
    def is_constant(self) -> bool:
        return self.const is not None

    def value(self, u: ArrayLike) -> ArrayLike:
        if self.const is not None:
            return np.full_like(np.asarray(u, dtype=float), self.const) if np.ndim(u) else self.const
        return self.funcs[0](u)

    def d1(self, u: ArrayLike) -> ArrayLike:
        if self.const is not None:
            return np.zeros_like(np.asarray(u, dtype=float)) if np.ndim(u) else 0.0
        return self.funcs[1](u)

    def d2(self, u: ArrayLike) -> ArrayLike:
        if self.const is not None:
            return np.zeros_like(np.asarray(u, dtype=float)) if np.ndim(u) else 0.0
        return self.funcs[2](u)


@dataclass(frozen=True)
class RateFunction:
    """Evolutionary rate ``k(n)`` coupling trait motion to population size.

    Default is the identity ``k(n) = n`` (slope configurable).  A coded
    rate may be supplied as ``(k, k')`` callables; it must satisfy
    ``k(0) = 0`` and ``k'(0) > 0``.  ``k_tilde(n) = k(n)/n`` is extended
    continuously at ``n = 0`` by ``k'(0)``.
    """

    slope: float | None = 1.0
    funcs: tuple[Callable, Callable] | None = None

    def __post_init__(self):
        if (self.slope is None) == (self.funcs is None):
            raise ValueError("RateFunction needs exactly one of slope or funcs")
        if self.slope is not None and not self.slope > 0:
            raise ValueError(f"linear rate slope must be positive, got {self.slope}")

    @property
    def is_linear(self) -> bool:
        return self.slope is not None

    def value(self, n: ArrayLike) -> ArrayLike:
        if self.slope is not None:
            return self.slope * np.asarray(n, dtype=float) if np.ndim(n) else self.slope * n
        return self.funcs[0](n)

    def d1(self, n: ArrayLike) -> ArrayLike:
        if self.slope is not None:
            return np.full_like(np.asarray(n, dtype=float), self.slope) if np.ndim(n) else self.slope
        return self.funcs[1](n)

    def tilde(self, n: ArrayLike) -> ArrayLike:
        """k(n)/n, extended by k'(0) at n = 0."""
        if self.slope is not None:
            return np.full_like(np.asarray(n, dtype=float), self.slope) if np.ndim(n) else self.slope
        n_arr = np.asarray(n, dtype=float)
        scalar = n_arr.ndim == 0
        n_arr = np.atleast_1d(n_arr)
        out = np.empty_like(n_arr)
        tiny = np.abs(n_arr) < 1e-12
        out[~tiny] = self.funcs[0](n_arr[~tiny]) / n_arr[~tiny]
        out[tiny] = self.funcs[1](0.0)
        return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# the landscape itself
# ---------------------------------------------------------------------------

def _sigmoid_terms(u, tup, order):
    """Evaluate one decaying-sigmoid term c1/(c2 + c3*exp(c4*(c5*u - c6))) + c7.

    Overflow-safe: the exponential is always evaluated at a non-positive
    argument, so large |c4| never produces non-finite values.
    """
    c1, c2, c3, c4, c5, c6, c7 = tup
    z = c4 * (c5 * u - c6)
    s = np.exp(-np.abs(z))
    pos = z >= 0
    # 1/D with D = c2 + c3*e^z, rewritten so the exponential never overflows
    if order == 0:
        return np.where(pos, c1 * s / (c2 * s + c3), c1 / (c2 + c3 * s)) + c7
    if order == 1:
        frac = np.where(pos, s / (c2 * s + c3) ** 2, s / (c2 + c3 * s) ** 2)
        return -c1 * c3 * c4 * c5 * frac
    if order == 2:
        frac = np.where(
            pos,
            s * (c2 * s - c3) / (c2 * s + c3) ** 3,
            s * (c2 - c3 * s) / (c2 + c3 * s) ** 3,
        )
        return -c1 * c3 * (c4 * c5) ** 2 * frac
    raise ValueError(f"derivative order {order} not implemented")


@dataclass(frozen=True)
class Landscape:
    """One model instance: growth profile, drug efficacy, interaction, rate.

    Parameters mirror the mixture/sigmoid families used throughout the
    built-in presets:

    * ``r``, ``g``, ``u_centers``: Gaussian-mixture rates, widths (1/trait^2)
      and centers for ``b0``,
    * ``poly = (p1, p2, p3)``: confinement term ``p1*(u - p2)^(2*p3)``
      subtracted from the mixture (``p3`` a positive integer),
    * ``sigmoids``: list of 7-tuples ``(c1..c7)`` summed into ``b1``,
    * ``interaction``: ``c(u)``, strictly positive,
    * ``rate``: ``k(n)``,
    * ``epsilon``: timescale separation between trait and population motion,
    * ``window``: working box ``(u_min, u_max, n_min, n_max)``,
    * ``dose_max``: maximum instantaneously tolerable dose ``a_M``.
    """

    r: tuple[float, ...]
    g: tuple[float, ...]
    u_centers: tuple[float, ...]
    poly: tuple[float, float, int]
    sigmoids: tuple[tuple[float, ...], ...]
    interaction: Interaction = field(default_factory=Interaction)
    rate: RateFunction = field(default_factory=RateFunction)
    epsilon: float = 0.01
    window: tuple[float, float, float, float] = (-0.5, 1.5, 0.0, 1.2)
    dose_max: float = 1.0
    default_range: tuple[float, float] | None = None
    name: str = "custom"

    def __post_init__(self):
        if not (len(self.r) == len(self.g) == len(self.u_centers)):
            raise ValueError("r, g, u_centers must have equal length")
        if any(gj < 0 for gj in self.g):
            raise ValueError(f"mixture widths must be non-negative, got {self.g}")
        p1, p2, p3 = self.poly
        if not (isinstance(p3, (int, np.integer)) and p3 >= 1):
            raise ValueError(f"confinement exponent p3 must be an integer >= 1, got {p3!r}")
        if any(len(t) != 7 for t in self.sigmoids):
            raise ValueError("each sigmoid needs exactly 7 coefficients (c1..c7)")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        u_min, u_max, n_min, n_max = self.window
        if not (u_min < u_max and n_min < n_max):
            raise ValueError(f"degenerate window {self.window}")
        if not self.dose_max > 0:
            raise ValueError(f"dose_max must be positive, got {self.dose_max}")
        # c > 0 is load-bearing everywhere; audit it on the working grid
        # up front rather than failing obscurely later.
        u = np.linspace(u_min, u_max, 512)
        cvals = np.asarray(self.interaction.value(u))
        if np.any(cvals <= 0):
            bad = u[np.asarray(cvals <= 0)]
            raise ValueError(f"interaction c(u) <= 0 at u = {bad[:5]}")
        k0 = float(self.rate.value(0.0))
        dk0 = float(self.rate.d1(0.0))
        if abs(k0) > 1e-12 or dk0 <= 0:
            raise ValueError(f"rate must satisfy k(0)=0 and k'(0)>0, got k(0)={k0}, k'(0)={dk0}")

    # -- growth profile --------------------------------------------------

    def b0(self, u: ArrayLike) -> ArrayLike:
        u = np.asarray(u, dtype=float)
        p1, p2, p3 = self.poly
        out = -p1 * (u - p2) ** (2 * p3)
        for rj, gj, uj in zip(self.r, self.g, self.u_centers):
            out = out + rj * np.exp(-gj * (u - uj) ** 2)
        return out

    def b0_d1(self, u: ArrayLike) -> ArrayLike:
        u = np.asarray(u, dtype=float)
        p1, p2, p3 = self.poly
        out = -2 * p3 * p1 * (u - p2) ** (2 * p3 - 1)
        for rj, gj, uj in zip(self.r, self.g, self.u_centers):
            out = out + rj * np.exp(-gj * (u - uj) ** 2) * (-2 * gj * (u - uj))
        return out

    def b0_d2(self, u: ArrayLike) -> ArrayLike:
        u = np.asarray(u, dtype=float)
        p1, p2, p3 = self.poly
        out = -2 * p3 * (2 * p3 - 1) * p1 * (u - p2) ** (2 * p3 - 2)
        for rj, gj, uj in zip(self.r, self.g, self.u_centers):
            e = np.exp(-gj * (u - uj) ** 2)
            out = out + rj * e * (4 * gj**2 * (u - uj) ** 2 - 2 * gj)
        return out

    # -- drug efficacy ---------------------------------------------------

    def b1(self, u: ArrayLike) -> ArrayLike:
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for tup in self.sigmoids:
            out = out + _sigmoid_terms(u, tup, 0)
        return out

    def b1_d1(self, u: ArrayLike) -> ArrayLike:
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for tup in self.sigmoids:
            out = out + _sigmoid_terms(u, tup, 1)
        return out

    def b1_d2(self, u: ArrayLike) -> ArrayLike:
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for tup in self.sigmoids:
            out = out + _sigmoid_terms(u, tup, 2)
        return out

    # -- treated growth and the landscape --------------------------------

    def b(self, u: ArrayLike, a: ArrayLike) -> ArrayLike:
        return self.b0(u) - np.asarray(a) * self.b1(u)

    def b_d1(self, u: ArrayLike, a: ArrayLike) -> ArrayLike:
        return self.b0_d1(u) - np.asarray(a) * self.b1_d1(u)

    def b_d2(self, u: ArrayLike, a: ArrayLike) -> ArrayLike:
        return self.b0_d2(u) - np.asarray(a) * self.b1_d2(u)

    def c(self, u: ArrayLike) -> ArrayLike:
        return self.interaction.value(u)

    def c_d1(self, u: ArrayLike) -> ArrayLike:
        return self.interaction.d1(u)

    def c_d2(self, u: ArrayLike) -> ArrayLike:
        return self.interaction.d2(u)

    def h(self, u: ArrayLike, a: ArrayLike) -> ArrayLike:
        """Per-capita equilibrium density h(u, a) = b(u, a)/c(u)."""
        cval = np.asarray(self.c(u))
        if np.any(cval <= 0):
            raise ValueError("h(u, a) requested where c(u) <= 0")
        return self.b(u, a) / cval

    def h_du(self, u: ArrayLike, a: ArrayLike) -> ArrayLike:
        """Trait-derivative of the landscape, (b'c - b c')/c^2."""
        cval = np.asarray(self.c(u))
        return (self.b_d1(u, a) * cval - self.b(u, a) * self.c_d1(u)) / cval**2

    def k(self, n: ArrayLike) -> ArrayLike:
        return self.rate.value(n)

    def k_d1(self, n: ArrayLike) -> ArrayLike:
        return self.rate.d1(n)

    def k_tilde(self, n: ArrayLike) -> ArrayLike:
        return self.rate.tilde(n)

    # -- conveniences -----------------------------------------------------

    @property
    def u_window(self) -> tuple[float, float]:
        return self.window[0], self.window[1]

    @property
    def n_window(self) -> tuple[float, float]:
        return self.window[2], self.window[3]


# ---------------------------------------------------------------------------
# hypothesis audit
# ---------------------------------------------------------------------------

@dataclass
class HypothesisResult:
    name: str
    passed: bool
    witnesses: list[dict] = field(default_factory=list)
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "witnesses": self.witnesses,
            "detail": self.detail,
        }


@dataclass
class HypothesisReport:
    """Outcome of the structural audit H1-H4 on explicit grids.

    Failures always carry at least one witness point.  The report is a
    deterministic function of the landscape and the grids.
    """

    results: dict[str, HypothesisResult]
    u_grid: np.ndarray
    a_grid: np.ndarray

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "u_grid": {"min": float(self.u_grid.min()), "max": float(self.u_grid.max()),
                       "points": int(self.u_grid.size)},
            "a_grid": {"min": float(self.a_grid.min()), "max": float(self.a_grid.max()),
                       "points": int(self.a_grid.size)},
            "hypotheses": {k: v.to_dict() for k, v in self.results.items()},
        }


def default_grids(L: Landscape, u_points: int = 2000, a_points: int = 41):
    u_lo, u_hi = L.u_window
    return np.linspace(u_lo, u_hi, u_points), np.linspace(0.0, L.dose_max, a_points)


def check_hypotheses(
    L: Landscape,
    u_grid: np.ndarray | None = None,
    a_grid: np.ndarray | None = None,
    deriv_tol: float = 1e-10,
    flat_run: int = 3,
) -> HypothesisReport:
    """Audit H1-H4 on the given grids; failures are report entries, not errors.

    H4 is checked as (i) critical points of h(., a) isolated on the grid --
    no run of `flat_run` consecutive grid points with vanishing slope --
    and (ii) monotone decay on one-unit tails just outside the u-grid.
    """
    if u_grid is None or a_grid is None:
        du, da = default_grids(L)
        u_grid = du if u_grid is None else np.asarray(u_grid, dtype=float)
        a_grid = da if a_grid is None else np.asarray(a_grid, dtype=float)
    u_grid = np.asarray(u_grid, dtype=float)
    a_grid = np.asarray(a_grid, dtype=float)
    if u_grid.size == 0 or a_grid.size == 0:
        raise ValueError("hypothesis check requires non-empty grids")

    results: dict[str, HypothesisResult] = {}

    # H1: k vanishes only at 0, with positive slope there.
    k0 = float(L.k(0.0))
    dk0 = float(L.k_d1(0.0))
    n_probe = np.linspace(1e-6, max(L.n_window[1], 1.0), 256)
    kvals = np.asarray(L.k(n_probe))
    h1_wit = []
    if abs(k0) > deriv_tol:
        h1_wit.append({"n": 0.0, "k": k0})
    if dk0 <= deriv_tol:
        h1_wit.append({"n": 0.0, "k_prime": dk0})
    for idx in np.nonzero(np.abs(kvals) <= deriv_tol)[0][:3]:
        h1_wit.append({"n": float(n_probe[idx]), "k": float(kvals[idx])})
    results["H1"] = HypothesisResult(
        "H1", not h1_wit, h1_wit,
        f"k(0)={k0:.3e}, k'(0)={dk0:.3e}",
    )

    # H2: b1 > 0 and b1' < 0 on the grid.
    b1v = np.asarray(L.b1(u_grid))
    db1 = np.asarray(L.b1_d1(u_grid))
    bad = (b1v <= 0) | (db1 >= 0)
    h2_wit = [
        {"u": float(u_grid[i]), "b1": float(b1v[i]), "b1_prime": float(db1[i])}
        for i in np.nonzero(bad)[0][:10]
    ]
    results["H2"] = HypothesisResult(
        "H2", not h2_wit, h2_wit,
        f"min b1={b1v.min():.3e}, max b1'={db1.max():.3e}",
    )

    # H3: c'/c > b1'/b1, cross-multiplied to avoid division where b1 <= 0.
    cv = np.asarray(L.c(u_grid))
    dcv = np.asarray(L.c_d1(u_grid))
    margin = dcv * b1v - db1 * cv  # positive iff H3 holds (b1, c > 0)
    bad3 = margin <= 0
    h3_wit = [
        {"u": float(u_grid[i]), "margin": float(margin[i])}
        for i in np.nonzero(bad3)[0][:10]
    ]
    results["H3"] = HypothesisResult(
        "H3", not h3_wit, h3_wit,
        f"min cross-multiplied margin={margin.min():.3e}",
    )

    # H4: isolated critical points plus decaying tails.
    h4_wit = []
    slope = np.asarray(L.h_du(u_grid[None, :], a_grid[:, None]))
    zeroish = np.abs(slope) <= deriv_tol
    for ia in range(a_grid.size):
        run = 0
        for iu in range(u_grid.size):
            run = run + 1 if zeroish[ia, iu] else 0
            if run >= flat_run:
                h4_wit.append({
                    "a": float(a_grid[ia]), "u": float(u_grid[iu]),
                    "reason": "flat critical set",
                })
                break
    u_lo, u_hi = float(u_grid.min()), float(u_grid.max())
    tail_left = np.linspace(u_lo - 1.0, u_lo, 64)
    tail_right = np.linspace(u_hi, u_hi + 1.0, 64)
    sl_left = np.asarray(L.h_du(tail_left[None, :], a_grid[:, None]))
    sl_right = np.asarray(L.h_du(tail_right[None, :], a_grid[:, None]))
    for ia in range(a_grid.size):
        if np.any(sl_left[ia] <= 0):
            iu = int(np.argmax(sl_left[ia] <= 0))
            h4_wit.append({"a": float(a_grid[ia]), "u": float(tail_left[iu]),
                           "reason": "left tail not increasing"})
        if np.any(sl_right[ia] >= 0):
            iu = int(np.argmax(sl_right[ia] >= 0))
            h4_wit.append({"a": float(a_grid[ia]), "u": float(tail_right[iu]),
                           "reason": "right tail not decreasing"})
    results["H4"] = HypothesisResult("H4", not h4_wit, h4_wit[:10])

    return HypothesisReport(results=results, u_grid=u_grid, a_grid=a_grid)


# ---------------------------------------------------------------------------
# built-in presets a-d
# ---------------------------------------------------------------------------

_PRESET_TABLE = {
    # name: (r, g, u_centers, poly, sigmoids, dose_max, default_range)
    "a": ((0.0, 0.41, 0.86), (0.0, 1.9, 2.5), (0.0, 0.8, 0.0), (0.1, 0.65, 3),
          ((1.0, 0.9, 1.0, 0.5, 1.0, 0.3, 0.0),), 1.75, (0.3, 1.75)),
    "b": ((0.26, 0.4, 0.96), (13.0, 8.9, 7.9), (-0.01, 0.35, 0.87), (2.8, 0.6, 6),
          ((1.0, 0.9, 1.0, 11.0, 1.0, 0.5, 0.0),), 0.7, (0.0, 0.7)),
    "c": ((0.5, 0.7, 0.35), (18.6, 9.8, 8.8), (0.0, 0.25, 0.68), (10.0, 0.55, 5),
          ((-0.462, 1.0, 10.1, -1.44, 10.0, 0.0, 0.0),
           (-0.633, 1.0, 10.1, -1.44, 10.0, 3.7, 1.1)), 1.3, (0.15, 0.8)),
    "d": ((0.6, 0.4, 0.95), (14.3, 13.7, 13.8), (0.0, 0.47, 0.87), (1.0, 0.46, 6),
          ((1.0, 0.9, 1.0, 6.7, 1.0, 0.2, 0.0),), 1.3, (0.1, 0.45)),
}

PRESET_NAMES = tuple(_PRESET_TABLE)


def preset(name: str, epsilon: float = 0.01, **overrides) -> Landscape:
    """Build one of the four named example landscapes ("a".."d").

    ``epsilon`` and any other Landscape field may be overridden.
    """
    try:
        r, g, uc, poly, sig, a_m, rng = _PRESET_TABLE[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None
    kwargs = dict(
        r=r, g=g, u_centers=uc, poly=poly, sigmoids=sig,
        epsilon=epsilon, dose_max=a_m, default_range=rng, name=name,
    )
    kwargs.update(overrides)
    return Landscape(**kwargs)
