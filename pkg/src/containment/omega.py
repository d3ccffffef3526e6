"""Closed boundary curves of controllable sets around branch components.

Each connected component of the feasible equilibrium branch is enclosed
by a simple closed curve assembled from orbits of the two extremal
autonomous flows:

* type 1 (node-node):   two heteroclinic forward orbits, each endpoint
  flowed under the opposite extreme dose until it reaches the other,
* type 2 (saddle-saddle): four invariant-manifold arcs of the endpoint
  saddles, trimmed at their transversal crossings,
* type 3 (node-saddle):  a forward orbit from the node plus the stable
  and unstable manifolds of the saddle (two mirror sub-cases depending
  on which extreme dose the endpoints share).

The curves are oriented counter-clockwise with respect to forward time
of the extremal flows; orbits below the equilibrium graph run toward
higher resistance, orbits above it run back.  Closure is guaranteed only
for sufficiently fast population relaxation (small epsilon); failure to
close is reported as a diagnostic, not hidden.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .dynamics import DEFAULT_ETA, Event, make_rhs, _integrate_dose
from .equilibria import (
    SADDLE,
    STABLE_NODE,
    Component,
    a_star,
    a_star_d1,
    attractors_for_dose,
    components,
    saddle_directions,
)
from .landscape import Landscape

__all__ = [
    "OmegaConstructionError",
    "OmegaPiece",
    "OmegaCurve",
    "forward_orbit_to_attractor",
    "saddle_manifolds",
    "build_omega",
    "build_all",
    "encloses",
]

DEFAULT_SEED_OFFSET = 1e-6
DEFAULT_STOP_RADIUS = 1e-7
DEFAULT_SAG_TOL = 1e-7
CLOSURE_TOL = 1e-6
SNAP_TOL = 1e-10


class OmegaConstructionError(RuntimeError):
    """Constituent orbits failed to close up or intersect.

    Typically means the rate parameter is too large for the requested
    range, or the working window is too small; the message carries the
    failing piece.
    """


# ---------------------------------------------------------------------------
# raw orbit machinery
# ---------------------------------------------------------------------------

def _grow(L: Landscape, x0, a: float, *, backward: bool, window, max_time,
          stop_points=(), stop_radius=DEFAULT_STOP_RADIUS, rtol=1e-9,
          atol=1e-12, sag_tol=DEFAULT_SAG_TOL):
    """Integrate the reduced flow (optionally backward) from x0, returning
    a sagitta-refined polyline and the stop reason."""
    base = make_rhs(L, a, "reduced")
    rhs = (lambda t, y: -base(t, y)) if backward else base
    events = []
    if stop_points:
        pts = np.asarray(stop_points, dtype=float).reshape(-1, 2)

        def prox(t, y):
            return float(np.min(np.hypot(pts[:, 0] - y[0], pts[:, 1] - y[1]))) - stop_radius

        events.append(Event(prox, "converged", terminal=True, direction=-1))
    u_lo, u_hi, n_lo, n_hi = window

    def box(t, y):
        return min(y[0] - u_lo, u_hi - y[0], y[1] - n_lo, n_hi - y[1])

    events.append(Event(box, "left_window", terminal=True, direction=-1))

    ts: list[float] = [0.0]
    ys: list[np.ndarray] = [np.asarray(x0, dtype=float).copy()]
    status, _, _, _, _ = _integrate_dose(
        rhs, x0, 0.0, max_time, rtol=rtol, atol=atol, events=events,
        sag_tol=sag_tol, collect_t=ts, collect_y=ys)
    reason = status.split(":", 1)[1] if status.startswith("event:") else "max_time"
    return np.asarray(ys), reason


def forward_orbit_to_attractor(p, a: float, L: Landscape, *,
                               targets=None, stop_radius=DEFAULT_STOP_RADIUS,
                               window=None, max_time: float | None = None,
                               rtol: float = 1e-9, atol: float = 1e-12,
                               sag_tol: float = DEFAULT_SAG_TOL):
    """Reduced-system forward orbit from p under constant dose a, run until
    it settles within stop_radius of an attracting node of that dose.

    Returns (polyline, target_state).  The reached attractor is appended
    as the final vertex.  Raises :class:`OmegaConstructionError` when the
    orbit leaves the window or fails to converge in time.
    """
    p = np.asarray(p, dtype=float)
    if targets is None:
        targets = attractors_for_dose(a, L)
    targets = [np.asarray(t, dtype=float) for t in targets]
    if not targets:
        raise OmegaConstructionError(f"no attracting node for dose {a}")
    dists = [float(np.hypot(*(p - t))) for t in targets]
    if min(dists) <= stop_radius:
        hit = targets[int(np.argmin(dists))]
        return p[None, :].copy(), hit  # degenerate: already at the attractor
    if window is None:
        u_lo, u_hi = L.u_window
        n_lo, n_hi = L.n_window
        margin_u = 0.15 * (u_hi - u_lo)
        margin_n = 0.3 * (n_hi - n_lo)
        window = (u_lo - margin_u, u_hi + margin_u, n_lo - margin_n, n_hi + margin_n)
    if max_time is None:
        max_time = 500.0 / L.epsilon
    poly, reason = _grow(L, p, a, backward=False, window=window,
                         max_time=max_time, stop_points=targets,
                         stop_radius=stop_radius, rtol=rtol, atol=atol,
                         sag_tol=sag_tol)
    if reason != "converged":
        raise OmegaConstructionError(
            f"orbit from {p} under dose {a} did not reach an attractor "
            f"({reason}); epsilon too large or window too small")
    end = poly[-1]
    hit = targets[int(np.argmin([np.hypot(*(end - t)) for t in targets]))]
    return np.vstack([poly, hit]), hit


def saddle_manifolds(q, a: float, L: Landscape, *,
                     seed_offset: float = DEFAULT_SEED_OFFSET,
                     window=None, max_time: float | None = None,
                     stop_radius: float = DEFAULT_STOP_RADIUS,
                     rtol: float = 1e-9, atol: float = 1e-12,
                     sag_tol: float = DEFAULT_SAG_TOL) -> dict:
    """Four invariant half-manifolds of a saddle of the dose-a reduced flow.

    Seeds sit seed_offset along the unit eigenvectors of the closed-form
    triangular Jacobian: the unstable (slow) direction is exactly
    horizontal, the stable (fast) direction vertical up to O(eps).
    Unstable halves integrate forward, stable halves backward, each until
    leaving the window or converging to an attractor.  Polylines start at
    the saddle itself; keys are ("unstable", +1/-1) and ("stable", +1/-1)
    by seed sign (+1 along +u for unstable, +n for stable).
    """
    q = np.asarray(q, dtype=float)
    if abs(float(a_star(q[0], L)) - a) > 1e-8:
        raise ValueError(f"state {q} is not an equilibrium of the dose-{a} flow")
    if float(a_star_d1(q[0], L)) >= 0:
        raise ValueError(f"equilibrium at u={q[0]} is not a saddle")
    v_u, v_s = saddle_directions(q[0], L)
    if window is None:
        u_lo, u_hi = L.u_window
        n_lo, n_hi = L.n_window
        margin_u = 0.15 * (u_hi - u_lo)
        margin_n = 0.3 * (n_hi - n_lo)
        window = (u_lo - margin_u, u_hi + margin_u, n_lo - margin_n, n_hi + margin_n)
    if max_time is None:
        max_time = 500.0 / L.epsilon
    targets = attractors_for_dose(a, L)
    out = {}
    for kind, vec, backward in (("unstable", v_u, False), ("stable", v_s, True)):
        for sign in (+1, -1):
            seed = q + sign * seed_offset * vec
            poly, reason = _grow(
                L, seed, a, backward=backward, window=window, max_time=max_time,
                stop_points=targets if not backward else (),
                stop_radius=stop_radius, rtol=rtol, atol=atol, sag_tol=sag_tol)
            out[(kind, sign)] = {
                "polyline": np.vstack([q[None, :], poly]),
                "reason": reason,
            }
    return out


# ---------------------------------------------------------------------------
# curve assembly
# ---------------------------------------------------------------------------

@dataclass
class OmegaPiece:
    kind: str          # forward-orbit | stable-manifold | unstable-manifold
    dose: float
    anchor: np.ndarray  # the equilibrium the piece emanates from
    start: int = 0     # vertex span [start, stop] within the assembled ring
    stop: int = 0

    def tag(self) -> str:
        return (f"{self.kind}(u={self.anchor[0]:.6g}, a={self.dose:.6g})")


@dataclass
class OmegaCurve:
    """Simple closed boundary polyline of one controllable set."""

    vertices: np.ndarray              # closed ring, first vertex repeated last
    pieces: list[OmegaPiece]
    omega_type: int
    component: Component
    intersects_E: bool
    eta: float
    closure_error: float
    is_simple: bool
    area: float
    _band: tuple | None = field(default=None, repr=False)
    _ring_mid: np.ndarray | None = field(default=None, repr=False)
    _ring_coarse: np.ndarray | None = field(default=None, repr=False)
    _grid: tuple | None = field(default=None, repr=False)

    # -- queries -----------------------------------------------------------

    def encloses(self, x) -> bool:
        """Even-odd ray-crossing verdict for a single state."""
        return bool(geometry.point_in_polygon(np.asarray(x, dtype=float), self.vertices))

    def locate(self, x, tol: float = 1e-9) -> str:
        """'inside' / 'outside' / 'boundary' with a distance collar."""
        x = np.asarray(x, dtype=float)
        if float(geometry.distance_to_polyline(x[None, :], self.vertices)[0]) <= tol:
            return "boundary"
        return "inside" if self.encloses(x) else "outside"

    def contains_points(self, points, *, dilation: float = 0.0) -> np.ndarray:
        """Vectorized membership; a positive dilation also accepts points
        within that distance of the boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._band is not None:
            lo_u, lo_n, hi_u, hi_n = self._band
            nl = np.interp(pts[:, 0], lo_u, lo_n)
            nh = np.interp(pts[:, 0], hi_u, hi_n)
            inside = ((pts[:, 0] >= lo_u[0]) & (pts[:, 0] <= lo_u[-1])
                      & (pts[:, 1] > nl) & (pts[:, 1] < nh))
            if dilation > 0:
                out = ~inside
                if out.any():
                    near = geometry.distance_to_polyline(
                        pts[out], self.vertices) <= dilation
                    inside = inside.copy()
                    inside[np.nonzero(out)[0][near]] = True
            return inside
        inside, fuzzy = self._grid_classify(pts)
        # points in non-fuzzy cells are at least half a cell away from the
        # boundary, so small dilations only matter inside the fuzzy band
        if dilation > 0.5 * self._cell_diag():
            check = np.ones(pts.shape[0], dtype=bool)  # grid too coarse to help
        else:
            check = fuzzy
        if check.any():
            sub = pts[check]
            exact = geometry.points_in_polygon(sub, self.vertices)
            if dilation > 0:
                off = ~exact
                if off.any():
                    near = geometry.distance_to_polyline(
                        sub[off], self.vertices) <= dilation
                    exact[np.nonzero(off)[0][near]] = True
            inside = inside.copy()
            inside[check] = exact
        return inside

    def distance(self, points, *, coarse: bool = True) -> np.ndarray:
        """Distance to the closed set (0 inside, boundary distance outside).

        With coarse=True a decimated ring is used (size-scaled tolerance);
        good enough for convergence diagnostics, much faster in bulk.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ring = self.ring_coarse if coarse else self.vertices
        d = geometry.distance_to_polyline(pts, ring)
        d[geometry.points_in_polygon(pts, ring)] = 0.0
        return d

    # -- uniform-grid acceleration for bulk membership ----------------------

    def _coarse_tol(self) -> float:
        u0, u1, n0, n1 = self.bbox
        return min(1e-4, max(1e-9, 5e-3 * max(u1 - u0, n1 - n0)))

    def _cell_diag(self) -> float:
        u0, u1, n0, n1 = self.bbox
        return float(np.hypot((u1 - u0) / 256, (n1 - n0) / 256))

    def _grid_classify(self, pts):
        """(inside_guess, needs_exact) from a 256x256 occupancy grid."""
        if self._grid is None:
            u0, u1, n0, n1 = self.bbox
            pad_u = 1e-9 + 1e-6 * (u1 - u0)
            pad_n = 1e-9 + 1e-6 * (n1 - n0)
            u0, u1, n0, n1 = u0 - pad_u, u1 + pad_u, n0 - pad_n, n1 + pad_n
            nu = nn = 256
            ring = self.ring_coarse
            ug = np.linspace(u0 + (u1 - u0) / (2 * nu), u1 - (u1 - u0) / (2 * nu), nu)
            ng = np.linspace(n0 + (n1 - n0) / (2 * nn), n1 - (n1 - n0) / (2 * nn), nn)
            uu, nnn = np.meshgrid(ug, ng)
            centers = np.column_stack([uu.ravel(), nnn.ravel()])
            inside = geometry.points_in_polygon(centers, ring)
            dist = geometry.distance_to_polyline(centers, ring)
            fuzzy = dist <= self._cell_diag() + 1.5 * self._coarse_tol()
            codes = np.where(fuzzy, 2, inside.astype(np.int8)).reshape(nn, nu)
            self._grid = (u0, u1, n0, n1, nu, nn, codes.astype(np.int8))
        u0, u1, n0, n1, nu, nn, codes = self._grid
        iu = np.floor((pts[:, 0] - u0) / (u1 - u0) * nu).astype(np.int64)
        im = np.floor((pts[:, 1] - n0) / (n1 - n0) * nn).astype(np.int64)
        ok = (iu >= 0) & (iu < nu) & (im >= 0) & (im < nn)
        code = np.zeros(pts.shape[0], dtype=np.int8)
        code[ok] = codes[im[ok], iu[ok]]
        return code == 1, code == 2

    def nearest_piece(self, x) -> OmegaPiece:
        x = np.asarray(x, dtype=float)
        best, best_d = None, np.inf
        for piece in self.pieces:
            sub = self.vertices[piece.start:piece.stop + 1]
            d = float(geometry.distance_to_polyline(x[None, :], sub)[0])
            if d < best_d:
                best, best_d = piece, d
        return best

    @property
    def ring_mid(self) -> np.ndarray:
        if self._ring_mid is None:
            self._ring_mid = geometry.decimate_polyline(self.vertices, 5e-8)
        return self._ring_mid

    @property
    def ring_coarse(self) -> np.ndarray:
        if self._ring_coarse is None:
            self._ring_coarse = geometry.decimate_polyline(self.vertices,
                                                           self._coarse_tol())
        return self._ring_coarse

    @property
    def bbox(self):
        v = self.vertices
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())

    def sample_interior(self, rng: np.random.Generator, count: int,
                        max_tries: int = 200) -> np.ndarray:
        """Uniform rejection sample of interior points."""
        u0, u1, n0, n1 = self.bbox
        got: list[np.ndarray] = []
        for _ in range(max_tries):
            m = max(4 * count, 64)
            cand = np.column_stack([rng.uniform(u0, u1, m), rng.uniform(n0, n1, m)])
            cand = cand[self.contains_points(cand)]
            got.append(cand)
            if sum(len(g) for g in got) >= count:
                break
        pts = np.vstack(got) if got else np.empty((0, 2))
        if pts.shape[0] < count:
            raise RuntimeError(f"could not sample {count} interior points")
        return pts[:count]

    def summary(self) -> dict:
        return {
            "type": self.omega_type,
            "component": self.component.to_dict(),
            "intersects_E": self.intersects_E,
            "area": self.area,
            "closure_error": self.closure_error,
            "is_simple": self.is_simple,
            "n_vertices": int(self.vertices.shape[0]),
            "pieces": [p.tag() for p in self.pieces],
        }

    def csv_rows(self):
        tags = np.empty(self.vertices.shape[0] - 1, dtype=object)
        for p in self.pieces:
            tags[p.start:p.stop] = p.tag()
        for i in range(self.vertices.shape[0] - 1):
            yield (self.vertices[i, 0], self.vertices[i, 1], tags[i])
        yield (self.vertices[-1, 0], self.vertices[-1, 1], "closure")


def _snap_append(chunks: list[np.ndarray], poly: np.ndarray):
    """Append polyline, dropping a duplicated junction vertex."""
    if chunks and poly.shape[0] and np.hypot(*(chunks[-1][-1] - poly[0])) <= SNAP_TOL:
        poly = poly[1:]
    if poly.shape[0]:
        chunks.append(poly)


def _trim_pair(moving: np.ndarray, fence: np.ndarray, what: str):
    """Cut `moving` at its first crossing of `fence`; cut `fence` back to
    the crossing as well.  Returns (moving_trimmed, fence_to_crossing,
    crossing_point); fence_to_crossing runs from the crossing to fence[0].
    """
    hit = geometry.first_intersection(moving, fence, snap=SNAP_TOL)
    if hit is None:
        raise OmegaConstructionError(
            f"{what}: pieces do not intersect; epsilon too large or window too small")
    i, _, j, _, z = hit
    moving_tr = np.vstack([moving[:i + 1], z[None, :]])
    back = np.vstack([z[None, :], fence[j::-1]])
    return moving_tr, back, z


def _assemble(chunks: list[np.ndarray], kinds, doses, anchors) -> tuple[np.ndarray, list[OmegaPiece]]:
    ring_parts: list[np.ndarray] = []
    pieces: list[OmegaPiece] = []
    count = 0
    for poly, kind, dose, anchor in zip(chunks, kinds, doses, anchors):
        if ring_parts and np.hypot(*(ring_parts[-1][-1] - poly[0])) <= SNAP_TOL:
            poly = poly[1:]
        start = count if not ring_parts else count - 1
        ring_parts.append(poly)
        count += poly.shape[0]
        pieces.append(OmegaPiece(kind=kind, dose=float(dose),
                                 anchor=np.asarray(anchor, dtype=float),
                                 start=max(start, 0), stop=count - 1))
    ring = np.vstack(ring_parts)
    return ring, pieces


def _finalize(ring, pieces, comp, omega_type, eta, L) -> OmegaCurve:
    closure = float(np.hypot(*(ring[-1] - ring[0])))
    if closure > CLOSURE_TOL:
        raise OmegaConstructionError(
            f"curve failed to close (gap {closure:.3e}); epsilon too large "
            "or window too small")
    ring = np.vstack([ring, ring[0][None, :]]) if closure > 0 else ring
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[0][None, :]])
    area = geometry.signed_area(ring)
    if area < 0:  # pragma: no cover - construction is CCW by design
        raise OmegaConstructionError("assembled curve is not counter-clockwise")
    simple = geometry.polyline_is_simple(ring)
    curve = OmegaCurve(
        vertices=ring, pieces=pieces, omega_type=omega_type, component=comp,
        intersects_E=bool(ring[:, 1].min() <= eta), eta=eta,
        closure_error=closure, is_simple=simple, area=float(area),
    )
    curve._band = _try_band(curve)
    return curve


def _try_band(curve: OmegaCurve):
    """Two-graph fast membership for curves whose legs are u-monotone."""
    if curve.omega_type != 1:
        return None
    lower, upper = None, None
    for p in curve.pieces:
        sub = curve.vertices[p.start:p.stop + 1]
        if sub.shape[0] < 2:
            return None
        du = np.diff(sub[:, 0])
        if np.all(du > 0):
            lower = sub
        elif np.all(du < 0):
            upper = sub[::-1]
    if lower is None or upper is None:
        return None
    return (lower[:, 0], lower[:, 1], upper[:, 0], upper[:, 1])


def build_omega(comp: Component, L: Landscape, *,
                eta: float = DEFAULT_ETA,
                seed_offset: float = DEFAULT_SEED_OFFSET,
                stop_radius: float = DEFAULT_STOP_RADIUS,
                rtol: float = 1e-9, atol: float = 1e-12,
                sag_tol: float = DEFAULT_SAG_TOL,
                window=None) -> OmegaCurve:
    """Assemble the closed boundary curve enclosing one branch component."""
    a_lo, a_hi = comp.dose_range
    kw = dict(window=window, rtol=rtol, atol=atol, sag_tol=sag_tol)

    if comp.kind == 1:
        # heteroclinic loop between the endpoint nodes
        p_lo, p_hi = comp.lo.state, comp.hi.state
        if comp.lo.dose != a_lo or comp.hi.dose != a_hi:
            raise OmegaConstructionError(
                "node-node component with unexpected endpoint doses")
        lower, _ = forward_orbit_to_attractor(p_lo, a_hi, L, targets=[p_hi],
                                              stop_radius=stop_radius, **kw)
        upper, _ = forward_orbit_to_attractor(p_hi, a_lo, L, targets=[p_lo],
                                              stop_radius=stop_radius, **kw)
        ring, pieces = _assemble(
            [lower, upper],
            ["forward-orbit", "forward-orbit"],
            [a_hi, a_lo], [p_lo, p_hi])
        return _finalize(ring, pieces, comp, 1, eta, L)

    man_kw = dict(seed_offset=seed_offset, stop_radius=stop_radius, **kw)

    if comp.kind == 2:
        # left saddle carries the high dose, right saddle the low dose
        q_l, q_r = comp.lo.state, comp.hi.state
        if comp.lo.dose != a_hi or comp.hi.dose != a_lo:
            raise OmegaConstructionError(
                "saddle-saddle component with unexpected endpoint doses")
        m_l = saddle_manifolds(q_l, a_hi, L, **man_kw)
        m_r = saddle_manifolds(q_r, a_lo, L, **man_kw)
        bottom, right_back, _ = _trim_pair(
            m_l[("unstable", +1)]["polyline"], m_r[("stable", -1)]["polyline"],
            "lower unstable arc vs right stable arc")
        top, left_back, _ = _trim_pair(
            m_r[("unstable", -1)]["polyline"], m_l[("stable", +1)]["polyline"],
            "upper unstable arc vs left stable arc")
        ring, pieces = _assemble(
            [bottom, right_back, top, left_back],
            ["unstable-manifold", "stable-manifold", "unstable-manifold",
             "stable-manifold"],
            [a_hi, a_lo, a_lo, a_hi],
            [q_l, q_r, q_r, q_l])
        return _finalize(ring, pieces, comp, 2, eta, L)

    if comp.kind == 3:
        shared = comp.lo.dose
        if comp.hi.dose != shared:
            raise OmegaConstructionError(
                "node-saddle component endpoints must share an extreme dose")
        if shared == a_lo:
            # node left, saddle right; orbit from the node under the high dose
            if comp.lo.label != STABLE_NODE or comp.hi.label != SADDLE:
                raise OmegaConstructionError("unexpected endpoint layout for type 3")
            p, q = comp.lo.state, comp.hi.state
            mans = saddle_manifolds(q, a_lo, L, **man_kw)
            orbit, _ = _grow_for_trim(p, a_hi, L, **kw)
            bottom, right_back, _ = _trim_pair(
                orbit, mans[("stable", -1)]["polyline"],
                "node orbit vs saddle stable arc")
            top = mans[("unstable", -1)]["polyline"]
            top = _require_connects(top, p, stop_radius,
                                    "saddle unstable arc vs node")
            ring, pieces = _assemble(
                [bottom, right_back, top],
                ["forward-orbit", "stable-manifold", "unstable-manifold"],
                [a_hi, a_lo, a_lo], [p, q, q])
        else:
            # saddle left, node right; mirrored under the low dose
            if comp.lo.label != SADDLE or comp.hi.label != STABLE_NODE:
                raise OmegaConstructionError("unexpected endpoint layout for type 3")
            q, p = comp.lo.state, comp.hi.state
            mans = saddle_manifolds(q, a_hi, L, **man_kw)
            orbit, _ = _grow_for_trim(p, a_lo, L, **kw)
            top, left_back, _ = _trim_pair(
                orbit, mans[("stable", +1)]["polyline"],
                "node orbit vs saddle stable arc")
            bottom = mans[("unstable", +1)]["polyline"]
            bottom = _require_connects(bottom, p, stop_radius,
                                       "saddle unstable arc vs node")
            ring, pieces = _assemble(
                [top, left_back, bottom],
                ["forward-orbit", "stable-manifold", "unstable-manifold"],
                [a_lo, a_hi, a_hi], [p, q, q])
        return _finalize(ring, pieces, comp, 3, eta, L)

    raise ValueError(f"unknown component kind {comp.kind}")


def _grow_for_trim(p, a, L, *, window, rtol, atol, sag_tol):
    """Forward orbit from p under dose a grown until window exit or an
    attractor; used when the orbit will be trimmed rather than required
    to land on a specific target."""
    if window is None:
        u_lo, u_hi = L.u_window
        n_lo, n_hi = L.n_window
        margin_u = 0.15 * (u_hi - u_lo)
        margin_n = 0.3 * (n_hi - n_lo)
        window = (u_lo - margin_u, u_hi + margin_u, n_lo - margin_n, n_hi + margin_n)
    poly, reason = _grow(L, p, a, backward=False, window=window,
                         max_time=500.0 / L.epsilon,
                         stop_points=attractors_for_dose(a, L),
                         rtol=rtol, atol=atol, sag_tol=sag_tol)
    return poly, reason


def _require_connects(poly: np.ndarray, target, stop_radius, what) -> np.ndarray:
    gap = float(np.hypot(*(poly[-1] - np.asarray(target, dtype=float))))
    if gap > max(10 * stop_radius, CLOSURE_TOL):
        raise OmegaConstructionError(
            f"{what}: arc ends {gap:.3e} away from the node; epsilon too "
            "large or window too small")
    return np.vstack([poly, np.asarray(target, dtype=float)[None, :]])


def build_all(L: Landscape, A, *, u_grid=2000, eta: float = DEFAULT_ETA,
              **kwargs) -> list[OmegaCurve]:
    """Components of the range plus their boundary curves, left to right."""
    comps = components(A, L, u_grid=u_grid)
    return [build_omega(c, L, eta=eta, **kwargs) for c in comps]


def encloses(omega: OmegaCurve, x, boundary_tol: float = 0.0):
    """Even-odd enclosure verdict; with a positive tolerance, points within
    it of the boundary report 'boundary' instead of a boolean."""
    if boundary_tol > 0:
        return omega.locate(x, tol=boundary_tol)
    return omega.encloses(x)
