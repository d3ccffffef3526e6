import numpy as np
import pytest

import containment as ct
from containment.dynamics import f_full
from containment.equilibria import a_star, h_star
from containment.omega import (
    OmegaConstructionError,
    build_omega,
    encloses,
    forward_orbit_to_attractor,
    saddle_manifolds,
)


def hstar_of(L, poly):
    return np.asarray(h_star(poly[:, 0], L))


# ---------------------------------------------------------------------------
# forward orbits between extremal equilibria
# ---------------------------------------------------------------------------

def test_orbit_degenerates_when_start_is_the_attractor(preset_a):
    (comp,) = ct.components((0.3, 1.75), preset_a)
    poly, hit = forward_orbit_to_attractor(comp.hi.state, 1.75, preset_a)
    assert poly.shape == (1, 2)
    assert np.allclose(hit, comp.hi.state)


def test_orbit_connects_endpoint_nodes(preset_a):
    (comp,) = ct.components((0.3, 1.75), preset_a)
    poly, hit = forward_orbit_to_attractor(comp.lo.state, 1.75, preset_a,
                                           targets=[comp.hi.state])
    assert np.allclose(poly[-1], comp.hi.state)
    assert np.allclose(poly[0], comp.lo.state)
    # trapping: once off the start, the orbit stays below the branch graph
    interior = poly[1:-1]
    assert np.all(interior[:, 1] < hstar_of(preset_a, interior))


def test_orbit_error_when_window_cuts_the_path(preset_a):
    (comp,) = ct.components((0.3, 1.75), preset_a)
    with pytest.raises(OmegaConstructionError, match="window"):
        forward_orbit_to_attractor(comp.lo.state, 1.75, preset_a,
                                   targets=[comp.hi.state],
                                   window=(0.0, 0.3, 0.5, 1.2))


# ---------------------------------------------------------------------------
# saddle manifolds
# ---------------------------------------------------------------------------

def test_saddle_manifolds_structure(preset_c):
    comps = ct.components((0.5, 0.95), preset_c)
    comp = comps[1]
    assert comp.kind == 2
    q_left = comp.lo
    mans = saddle_manifolds(q_left.state, q_left.dose, preset_c)
    assert set(mans) == {("unstable", 1), ("unstable", -1),
                        ("stable", 1), ("stable", -1)}
    for val in mans.values():
        assert np.allclose(val["polyline"][0], q_left.state)
    # near the saddle, unstable halves hug the fast graph and stable halves
    # leave vertically: opposite sides of the branch graph
    un = mans[("unstable", 1)]["polyline"][1:40]
    st = mans[("stable", -1)]["polyline"][1:40]
    assert np.all(un[:, 1] < hstar_of(preset_c, un))
    assert np.all(st[:, 1] < hstar_of(preset_c, st))
    up = mans[("stable", 1)]["polyline"][1:40]
    assert np.all(up[:, 1] > hstar_of(preset_c, up))


def test_saddle_manifolds_reject_nodes(preset_c):
    comps = ct.components((0.5, 0.95), preset_c)
    node = comps[0].lo
    with pytest.raises(ValueError, match="saddle"):
        saddle_manifolds(node.state, node.dose, preset_c)


def test_unstable_manifold_reaches_adjacent_node(preset_c):
    # mixed component: the saddle's unstable arc under the shared dose must
    # terminate at the node endpoint
    comps = ct.components((0.15, 0.8), preset_c)
    comp = [c for c in comps if c.kind == 3][0]
    om = build_omega(comp, preset_c)
    unstable = [p for p in om.pieces if p.kind == "unstable-manifold"]
    assert len(unstable) == 1
    seg = om.vertices[unstable[0].start:unstable[0].stop + 1]
    node = comp.lo if comp.lo.label == "stable-node" else comp.hi
    assert np.hypot(*(seg[-1] - node.state)) < 1e-9


# ---------------------------------------------------------------------------
# curve assembly
# ---------------------------------------------------------------------------

def test_type1_curve_closes_and_is_simple(omega_a):
    assert omega_a.omega_type == 1
    assert omega_a.closure_error <= 1e-6
    assert omega_a.is_simple
    assert omega_a.area > 0  # counter-clockwise
    assert not omega_a.intersects_E
    assert np.allclose(omega_a.vertices[0], omega_a.vertices[-1])
    kinds = [p.kind for p in omega_a.pieces]
    assert kinds == ["forward-orbit", "forward-orbit"]


def test_type1_legs_trapped_on_opposite_sides(omega_a, preset_a):
    lower, upper = omega_a.pieces
    low = omega_a.vertices[lower.start + 1:lower.stop - 1]
    up = omega_a.vertices[upper.start + 1:upper.stop - 1]
    assert np.all(low[:, 1] < hstar_of(preset_a, low))
    assert np.all(up[:, 1] > hstar_of(preset_a, up))


def test_preset_c_sweep_curve_types(preset_c, omegas_c_a1):
    assert sorted(o.omega_type for o in omegas_c_a1) == [1, 1, 2]
    a2 = ct.build_all(preset_c, (0.4, 1.05))
    assert 3 in {o.omega_type for o in a2}
    a3 = ct.build_all(preset_c, (0.35, 1.23))
    assert [o.omega_type for o in a3] == [1]
    for om in [*omegas_c_a1, *a2, *a3]:
        assert om.is_simple and om.closure_error <= 1e-6 and om.area > 0


def test_type2_piece_layout(omega_c2):
    kinds = [p.kind for p in omega_c2.pieces]
    assert kinds == ["unstable-manifold", "stable-manifold",
                     "unstable-manifold", "stable-manifold"]
    # stable edges anchor at the two distinct saddles
    anchors = {round(p.anchor[0], 6) for p in omega_c2.pieces
               if p.kind == "stable-manifold"}
    assert len(anchors) == 2


def test_type3_both_mirror_cases(preset_c):
    case_ii = [c for c in ct.components((0.4, 1.05), preset_c) if c.kind == 3][0]
    assert case_ii.lo.dose == case_ii.hi.dose == 1.05  # shared high dose
    om2 = build_omega(case_ii, preset_c)
    assert om2.is_simple and om2.area > 0

    case_i = [c for c in ct.components((1.1, 1.3), preset_c) if c.kind == 3][0]
    assert case_i.lo.dose == case_i.hi.dose == 1.1  # shared low dose
    om1 = build_omega(case_i, preset_c)
    assert om1.is_simple and om1.area > 0


def test_boundary_flow_is_subtangential(omega_a, preset_a):
    # on orbit pieces, every admissible dose steers tangent or inward
    rng = np.random.default_rng(8)
    doses = rng.uniform(0.3, 1.75, 5)
    for piece in omega_a.pieces:
        verts = omega_a.vertices[piece.start:piece.stop + 1]
        pick = verts[10:-10:25]
        tangents = np.gradient(verts, axis=0)[10:-10:25]
        for a in doses:
            f = f_full(pick, a, preset_a)
            cross = tangents[:, 0] * f[:, 1] - tangents[:, 1] * f[:, 0]
            norm = (np.hypot(*tangents.T) * np.hypot(*f.T)) + 1e-300
            assert np.min(cross / norm) > -1e-6


def test_type2_stable_edges_flow_outward(omega_c2, preset_c):
    rng = np.random.default_rng(9)
    doses = rng.uniform(0.5, 0.95, 5)
    for piece in omega_c2.pieces:
        verts = omega_c2.vertices[piece.start:piece.stop + 1]
        pick = verts[10:-10:20]
        tangents = np.gradient(verts, axis=0)[10:-10:20]
        for a in doses:
            f = f_full(pick, a, preset_c)
            cross = tangents[:, 0] * f[:, 1] - tangents[:, 1] * f[:, 0]
            norm = (np.hypot(*tangents.T) * np.hypot(*f.T)) + 1e-300
            signed = cross / norm
            if piece.kind == "unstable-manifold":
                assert np.min(signed) > -1e-6
            else:
                assert np.max(signed) < 1e-6


# ---------------------------------------------------------------------------
# enclosure queries
# ---------------------------------------------------------------------------

def test_encloses_interior_equilibria(omega_a, preset_a):
    comp = omega_a.component
    for u in np.linspace(comp.u_lo + 1e-3, comp.u_hi - 1e-3, 7):
        assert omega_a.encloses(np.array([u, float(h_star(u, preset_a))]))


def test_encloses_rejects_far_points(omega_a):
    assert not omega_a.encloses(np.array([1.4, 1.1]))
    assert not omega_a.encloses(np.array([0.15, 1.19]))


def test_locate_boundary_collar(omega_a):
    v = omega_a.vertices[100]
    assert omega_a.locate(v, tol=1e-9) == "boundary"
    assert encloses(omega_a, v, boundary_tol=1e-9) == "boundary"


def test_contains_points_band_matches_ray_crossing(omega_a):
    rng = np.random.default_rng(10)
    u0, u1, n0, n1 = omega_a.bbox
    pts = np.column_stack([rng.uniform(u0 - 0.01, u1 + 0.01, 4000),
                           rng.uniform(n0 - 0.01, n1 + 0.01, 4000)])
    band = omega_a.contains_points(pts)
    from containment import geometry
    rays = geometry.points_in_polygon(pts, omega_a.vertices)
    diff = band != rays
    if diff.any():  # disagreement only within a hair of the boundary
        d = geometry.distance_to_polyline(pts[diff], omega_a.vertices)
        assert d.max() < 1e-6


def test_sample_interior_points_are_inside(omega_c2):
    rng = np.random.default_rng(11)
    pts = omega_c2.sample_interior(rng, 40)
    assert pts.shape == (40, 2)
    assert omega_c2.contains_points(pts).all()


def test_distance_zero_inside_positive_outside(omega_a):
    comp = omega_a.component
    mid = np.array([0.5 * (comp.u_lo + comp.u_hi), 0.4])
    out = np.array([1.3, 1.0])
    d = omega_a.distance(np.vstack([mid, out]))
    assert d[0] == 0.0
    assert d[1] > 0.1


def test_nearest_piece_identifies_boundary_segment(omega_c2):
    comp = omega_c2.component
    stable_left = [p for p in omega_c2.pieces if p.kind == "stable-manifold"
                   and abs(p.anchor[0] - comp.u_lo) < 1e-9][0]
    seg = omega_c2.vertices[stable_left.start:stable_left.stop + 1]
    probe = seg[len(seg) // 2] + np.array([-1e-4, 0.0])
    found = omega_c2.nearest_piece(probe)
    assert found.kind == "stable-manifold"
    assert abs(found.anchor[0] - comp.u_lo) < 1e-9


def test_csv_rows_cover_all_segments(omega_a):
    rows = list(omega_a.csv_rows())
    assert len(rows) == omega_a.vertices.shape[0]
    assert rows[-1][2] == "closure"
    assert all(r[2] for r in rows)
