import math

import numpy as np
import pytest

import containment as ct
from containment.landscape import Interaction, Landscape, RateFunction, check_hypotheses


def make_custom(**overrides):
    base = dict(
        r=(0.5,), g=(2.0,), u_centers=(0.3,), poly=(0.1, 0.0, 2),
        sigmoids=((1.0, 0.9, 1.0, 0.5, 1.0, 0.3, 0.0),), dose_max=1.0,
    )
    base.update(overrides)
    return Landscape(**base)


# ---------------------------------------------------------------------------
# growth profile b0
# ---------------------------------------------------------------------------

def test_b0_preset_a_at_zero_matches_hand_arithmetic(preset_a):
    # mixture term by term: r2*exp(-1.9*0.64) + r3 - p1*0.65^6
    expected = 0.86 + 0.41 * math.exp(-1.9 * 0.64) - 0.1 * 0.65**6
    assert float(preset_a.b0(0.0)) == pytest.approx(expected, rel=1e-15)


def test_b0_zero_mixture_is_zero():
    L = make_custom(r=(0.0, 0.0), g=(1.0, 2.0), u_centers=(0.0, 1.0),
                    poly=(0.0, 0.5, 3))
    for u in (-1.0, 0.2, 2.7):
        assert float(L.b0(u)) == 0.0


def test_b0_polynomial_vanishes_at_center():
    L = make_custom(r=(0.0,), g=(1.0,), u_centers=(0.0,), poly=(0.7, 0.65, 3))
    assert float(L.b0(0.65)) == 0.0


# ---------------------------------------------------------------------------
# efficacy profile b1
# ---------------------------------------------------------------------------

def test_b1_preset_a_sigmoid_midpoint(preset_a):
    # exponent vanishes at u = c6/c5, leaving c1/(c2 + c3)
    assert float(preset_a.b1(0.3)) == pytest.approx(1.0 / 1.9, rel=1e-15)


def test_b1_zero_numerator_is_zero():
    L = make_custom(sigmoids=((0.0, 0.9, 1.0, 0.5, 1.0, 0.3, 0.0),))
    assert np.all(np.asarray(L.b1(np.linspace(-2, 3, 7))) == 0.0)


def test_b1_preset_c_two_term_sum_matches_direct_evaluation(preset_c):
    # independent oracle: the formula transcribed term by term
    def direct(u):
        tot = 0.0
        for c1, c2, c3, c4, c5, c6, c7 in preset_c.sigmoids:
            tot += c1 / (c2 + c3 * math.exp(c4 * (c5 * u - c6))) + c7
        return tot

    for u in (0.0, 0.37, 1.2):
        assert float(preset_c.b1(u)) == pytest.approx(direct(u), rel=1e-13)


def test_b1_overflow_safe_for_steep_sigmoids():
    L = make_custom(sigmoids=((1.0, 0.9, 1.0, 500.0, 1.0, 0.3, 0.0),))
    u = np.array([-50.0, 0.3, 50.0])
    for fn in (L.b1, L.b1_d1, L.b1_d2):
        vals = np.asarray(fn(u))
        assert np.all(np.isfinite(vals))
    assert float(L.b1(50.0)) == pytest.approx(0.0, abs=1e-280)
    assert float(L.b1(-50.0)) == pytest.approx(1.0 / 0.9, rel=1e-12)


# ---------------------------------------------------------------------------
# the landscape h
# ---------------------------------------------------------------------------

def test_h_without_treatment_is_b0(preset_a):
    u = np.linspace(-0.5, 1.5, 11)
    assert np.allclose(preset_a.h(u, 0.0), preset_a.b0(u), rtol=1e-15)


def test_h_strictly_decreases_with_dose(preset_a):
    u = np.linspace(-0.5, 1.5, 101)
    h0 = np.asarray(preset_a.h(u, 0.0))
    h1 = np.asarray(preset_a.h(u, 1.75))
    assert np.all(h1 < h0)  # b1 > 0 on the window


def test_h_affine_identity_in_dose(preset_c):
    rng = np.random.default_rng(7)
    u = rng.uniform(-0.5, 1.5, 50)
    a1 = rng.uniform(0, 1.3, 50)
    a2 = rng.uniform(0, 1.3, 50)
    lhs = np.asarray(preset_c.h(u, a1)) - np.asarray(preset_c.h(u, a2))
    rhs = (a2 - a1) * np.asarray(preset_c.b1(u)) / np.asarray(preset_c.c(u))
    assert np.allclose(lhs, rhs, rtol=1e-11, atol=1e-14)


def test_h_reports_nonpositive_interaction():
    L = make_custom(interaction=Interaction(
        const=None, funcs=(lambda u: np.cos(u), lambda u: -np.sin(u),
                           lambda u: -np.cos(u))),
        window=(-1.0, 1.0, 0.0, 1.2))
    with pytest.raises(ValueError, match="c\\(u\\)"):
        L.h(np.array([2.0]), 0.5)  # cos < 0 out there


# ---------------------------------------------------------------------------
# analytic derivatives against centered differences (order-2 convergence)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("pair", [
    ("b0", "b0_d1"), ("b0_d1", "b0_d2"), ("b1", "b1_d1"), ("b1_d1", "b1_d2"),
])
def test_derivatives_have_second_order_fd_convergence(preset_c, pair):
    fn = getattr(preset_c, pair[0])
    dfn = getattr(preset_c, pair[1])
    u = np.array([-0.2, 0.11, 0.53, 0.97, 1.31])
    exact = np.asarray(dfn(u))

    def fd_err(delta):
        fd = (np.asarray(fn(u + delta)) - np.asarray(fn(u - delta))) / (2 * delta)
        return np.abs(fd - exact).max()

    e1, e2 = fd_err(1e-4), fd_err(5e-5)
    assert e1 < 5e-4
    # halving the step should shrink the error ~4x (allow slack for roundoff)
    assert e2 < e1 / 2.5


# ---------------------------------------------------------------------------
# hypothesis audit
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["a", "b", "c", "d"])
def test_all_presets_satisfy_hypotheses(name):
    L = ct.preset(name)
    report = check_hypotheses(L)
    assert report.all_passed, report.to_dict()


def test_constant_efficacy_fails_h2_with_witness():
    # c1 = 0 and c7 > 0 makes b1 a positive constant: b1' = 0 violates H2
    L = make_custom(sigmoids=((0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.5),))
    report = check_hypotheses(L)
    assert not report.results["H2"].passed
    assert report.results["H2"].witnesses  # failed hypotheses carry witnesses
    # with constant interaction, H3 reduces to b1' < 0, so it fails too
    assert not report.results["H3"].passed


def test_h3_tracks_monotonicity_when_interaction_constant(preset_a):
    report = check_hypotheses(preset_a)
    assert report.results["H2"].passed == report.results["H3"].passed is True


def test_report_is_deterministic(preset_a):
    u = np.linspace(-0.5, 1.5, 300)
    a = np.linspace(0.0, 1.75, 9)
    r1 = check_hypotheses(preset_a, u, a).to_dict()
    r2 = check_hypotheses(preset_a, u, a).to_dict()
    assert r1 == r2


def test_empty_grid_rejected(preset_a):
    with pytest.raises(ValueError, match="non-empty"):
        check_hypotheses(preset_a, np.array([]), np.array([0.0]))


# ---------------------------------------------------------------------------
# construction-time validation
# ---------------------------------------------------------------------------

def test_validation_rejects_bad_fields():
    with pytest.raises(ValueError, match="p3"):
        make_custom(poly=(0.1, 0.0, 1.5))
    with pytest.raises(ValueError, match="widths"):
        make_custom(g=(-1.0,))
    with pytest.raises(ValueError, match="epsilon"):
        make_custom(epsilon=0.0)
    with pytest.raises(ValueError, match="positive"):
        make_custom(interaction=Interaction(const=-1.0))
    with pytest.raises(ValueError, match="k"):
        make_custom(rate=RateFunction(slope=None,
                                      funcs=(lambda n: n + 0.1, lambda n: 1.0)))


def test_interaction_positivity_audited_on_window():
    funcs = (lambda u: 1.0 - u, lambda u: -np.ones_like(np.asarray(u, dtype=float)),
             lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    with pytest.raises(ValueError, match="c\\(u\\) <= 0"):
        make_custom(interaction=Interaction(const=None, funcs=funcs),
                    window=(-0.5, 1.5, 0.0, 1.2))


def test_rate_tilde_extension_at_zero():
    quad = RateFunction(slope=None, funcs=(lambda n: 2.0 * n + n**2,
                                           lambda n: 2.0 + 2.0 * n))
    assert float(quad.tilde(0.0)) == pytest.approx(2.0)
    assert float(quad.tilde(0.5)) == pytest.approx((2 * 0.5 + 0.25) / 0.5)
