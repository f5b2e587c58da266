import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affineflow import curves, flow, jets as J, variation as V
from affineflow.curves import SampledClosedCurve, sample_closed
from affineflow.errors import BoundaryViolation, InvalidParams
from affineflow.invariants import plane_ga_invariants, segment_length, xi_derivatives
from affineflow.jets import Jet
from affineflow.periodic import closed_fields, closed_integral

SQ2 = np.sqrt(2.0)


# extremal equation ------------------------------------------------------------------------------

def test_constant_curvature_is_extremal():
    for phi in (-1.5, 0.0, 2.0):
        for eps in (1, -1):
            assert V.extremal_residual(J.derivatives(lambda x: 0 * x + phi, np.linspace(0, 1, 5), 3), eps)[0] == 0


def test_tanh_curvature_is_extremal():
    xi = np.linspace(-10, 10, 201)
    d = J.derivatives(lambda x: 1.5 * SQ2 * J.tanh(SQ2 * x / 3), xi, 3)
    assert np.max(np.abs(V.extremal_residual(d, 1))) <= 1e-10


def test_shifted_reciprocal_is_extremal():
    xi = np.linspace(1, 20, 191)
    d = J.derivatives(lambda x: 4.5 / x + SQ2 / 2, xi, 3)
    assert np.max(np.abs(V.extremal_residual(d, -1))) <= 1e-10


def test_non_extremal_curvature_has_residual():
    d = J.derivatives(lambda x: J.sin(x), np.array([0.3]), 3)
    assert abs(V.extremal_residual(d, 1)[0]) > 1e-2


@pytest.mark.parametrize("name", ["tan", "cot", "tanh", "coth", "reciprocal+", "reciprocal-"])
def test_all_families_are_extremal_away_from_poles(name):
    fam = V.extremal_family(name)
    lo, hi = fam.window
    xi = np.linspace(lo, hi, 2001)
    poles = fam.poles(lo, hi)
    if len(poles):
        xi = xi[np.min(np.abs(xi[:, None] - poles[None, :]), axis=1) > V.POLE_MARGIN]
    res = V.extremal_residual(J.derivatives(fam.phi, xi, 3), fam.eps, relative=True)
    assert np.max(np.abs(res)) <= 1e-10


def test_family_sign_compatibility():
    with pytest.raises(InvalidParams):
        V.extremal_family("tanh", eps=-1)
    with pytest.raises(InvalidParams):
        V.extremal_family("sech")


# stability coefficients ---------------------------------------------------------------------------

def test_xlogx_coefficients():
    c = V.stability_coeffs(2.0, 0.0, 0.0, 1)
    assert c.P == pytest.approx((0.0, 0.0, 4.5, 9.0), abs=1e-14)


@pytest.mark.parametrize("beta", [0.2, 0.6, 1.0, 1.4])
def test_spiral_coefficients_are_unstable(beta):
    c = V.stability_coeffs(2 * np.sin(beta), 0.0, 0.0, 1)
    assert c.P1 < 0


def test_tan_family_third_coefficient_at_origin():
    d = J.derivatives(lambda x: -1.5 * SQ2 * J.tan(SQ2 * x / 3), 0.0, 2)
    assert V.stability_coeffs(d[0], d[1], d[2], -1).P3 == pytest.approx(-24.0, rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-4, 4), b=st.floats(-4, 4), c=st.floats(-4, 4), eps=st.sampled_from([1, -1]))
def test_third_coefficient_is_minus_f6(a, b, c, eps):
    co = V.stability_coeffs(a, b, c, eps)
    assert co.P3 == -co.f6
    assert co.P3 == pytest.approx(3 * (a * a + 9 * b - eps), rel=1e-14, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(phi=st.floats(-3, 3), eps=st.sampled_from([1, -1]))
def test_constant_case_matches_general_formulas(phi, eps):
    general = V.stability_coeffs(phi, 0.0, 0.0, eps).P
    special = V.constant_case_coeffs(phi, eps)
    for g, s in zip(general, special):
        assert g == pytest.approx(s, rel=1e-14, abs=1e-14)


def _p_from_f(fam, xi):
    """P0..P3 from integrating the f-coefficient form by parts (jets supply the xi-derivatives)."""
    d = J.derivatives(fam.phi, xi, 8)
    a, b, c = Jet(d[0:7]), Jet(d[1:8]), Jet(d[2:9])
    f = V.f_coefficients(a, b, c, fam.eps)

    def D(k, n):
        return f[k][n]

    P3 = -D(6, 0)
    P2 = 4.5 * D(6, 2) - 2.5 * D(5, 1) + D(4, 0)
    P1 = -3 * D(6, 4) + 2.5 * D(5, 3) - 2 * D(4, 2) + 1.5 * D(3, 1) - D(2, 0)
    P0 = 0.5 * (D(6, 6) - D(5, 5) + D(4, 4) - D(3, 3) + D(2, 2) - D(1, 1)) + D(0, 0)
    return np.stack([P0, P1, P2, P3])


@pytest.mark.parametrize("name, points", [
    ("tan", [-1.0, 0.3, 1.7]),
    ("cot", [1.2, 2.5, 4.0]),
    ("tanh", [-2.0, 0.4, 3.0]),
    ("coth", [-3.0, 0.9, 2.2]),
    ("reciprocal+", [-9.0, 2.0, 7.0]),
    ("reciprocal-", [-7.0, 1.5, 9.5]),
])
def test_simplified_coefficients_equal_integrated_f_form(name, points):
    fam = V.extremal_family(name)
    xi = np.array(points)
    expected = _p_from_f(fam, xi)
    got = V.stability_fields(fam, xi)
    scale = np.maximum(1.0, np.abs(expected))
    assert np.max(np.abs(got - expected) / scale) <= 1e-9


# first variation --------------------------------------------------------------------------------

def test_first_variation_vanishes_on_ellipse():
    e = curves.ellipse(2.0, 1.0)
    assert abs(V.first_variation(e, lambda x: 0 * x + 1.0)) <= 1e-12
    assert abs(V.first_variation(e, lambda x: J.sin(x / 3) + 0.5)) <= 1e-12


def _deformed_length(curve, U, h, N=256):
    s = sample_closed(curve, N)
    vecs, _ = xi_derivatives(curve, s.nodes, 2)
    xi = closed_fields(s).xi
    moved = s.points + h * (U(xi) * vecs[1]).T
    return closed_fields(SampledClosedCurve(moved, s.period)).length


def test_first_variation_matches_length_difference():
    e = curves.perturbed_ellipse(amplitude=0.03)
    L = closed_fields(sample_closed(e, 256)).length
    k = 2 * np.pi / L

    def U(x):
        return 1.0 + 0.4 * J.sin(2 * k * x) if isinstance(x, Jet) else 1.0 + 0.4 * np.sin(2 * k * x)

    # the difference quotient has an O(h^2) error with a large constant
    h = 1e-5
    fd = (_deformed_length(e, U, h) - _deformed_length(e, U, -h)) / (2 * h)
    exact = V.first_variation(e, U)
    assert abs(exact) > 1e-6
    assert fd == pytest.approx(exact, rel=1e-4)


def test_first_variation_matches_metric_rate():
    e = curves.perturbed_ellipse(amplitude=0.03)
    cf = closed_fields(sample_closed(e, 256))
    k = 2 * np.pi / cf.length
    state = flow.curvature_state(e, 256)
    gtog, _ = flow.invariant_rates(0.0, 1.0 + 0.4 * np.sin(2 * k * cf.xi), state)
    direct = closed_integral(gtog * state.g, state.period)
    assert V.first_variation(e, lambda x: 1.0 + 0.4 * J.sin(2 * k * x)) == pytest.approx(direct, rel=1e-10)


def test_first_variation_requires_boundary_conditions_on_open_arcs():
    with pytest.raises(BoundaryViolation):
        V.first_variation(curves.xlogx(), lambda x: 0 * x + 1.0)


# second variation -------------------------------------------------------------------------------

def test_second_variation_on_ellipse():
    value = V.second_variation(curves.ellipse(), lambda x: J.sin(x))
    assert value == pytest.approx(-1.5 * np.pi * (2 - 4 / 162), rel=1e-8)


def test_second_variation_of_zero_is_zero():
    assert V.second_variation(curves.ellipse(), lambda x: 0 * x) == 0.0


def _bump(lo, hi):
    width = hi - lo

    def U(x):
        return J.sin((x - lo) * (np.pi / width)) ** 6

    return U


def test_second_variation_negative_on_hyperbola():
    h = curves.hyperbola()
    length = segment_length("GA", h, *h.domain)
    value = V.second_variation(h, _bump(0.0, length), nodes=2048)
    assert value < 0


@settings(max_examples=10, deadline=None)
@given(c=st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3))
def test_second_variation_is_quadratic(c):
    h = curves.hyperbola()
    length = segment_length("GA", h, *h.domain)
    U = _bump(0.0, length)
    base = V.second_variation(h, U, nodes=1024)
    assert V.second_variation(h, lambda x: c * U(x), nodes=1024) == pytest.approx(c * c * base, rel=1e-12)


# classification ---------------------------------------------------------------------------------

def test_reciprocal_family_stable_window():
    rep = V.classify_family("reciprocal+")
    (lo, hi), = rep.stable_set()
    assert lo == pytest.approx(-10.55, abs=1e-2)
    assert hi == pytest.approx(-8.03, abs=1e-2)


def test_coth_family_stable_tails():
    rep = V.classify_family("coth")
    sets = rep.stable_set()
    assert sets[0][0] == -np.inf and sets[-1][1] == np.inf
    assert sets[0][1] == pytest.approx(-4.17, abs=1e-2)
    assert sets[-1][0] == pytest.approx(4.17, abs=1e-2)


def test_tanh_family_stable_pieces():
    sets = V.classify_family("tanh").stable_set()
    assert len(sets) == 3
    assert sets[0][1] == pytest.approx(-4.25, abs=1e-2)
    assert sets[1] == pytest.approx((-0.82, 0.82), abs=1e-2)
    assert sets[2][0] == pytest.approx(4.25, abs=1e-2)


@pytest.mark.parametrize("name", ["tan", "cot"])
def test_trigonometric_families_are_unstable(name):
    assert V.classify_family(name).verdict == "unstable"


def test_constant_verdicts():
    assert V.classify_family("const", phi=2.0, eps=1).verdict == "stable-maximal"
    assert V.classify_family("const", phi=0.7, eps=-1).verdict == "stable-maximal"
    assert V.classify_family("const", phi=2 * np.sin(0.5), eps=1).verdict == "unstable"


def test_thresholds_match_closed_forms():
    for name in ("reciprocal+", "reciprocal-", "coth", "tanh"):
        for key, (computed, closed) in V.classify_family(name).thresholds.items():
            assert computed == pytest.approx(closed, abs=1e-10), key
            assert abs(abs(computed) - abs(V.THRESHOLD_DECIMALS[key])) <= 1e-2, key


def test_reciprocal_third_coefficient_roots_reported():
    roots = V.classify_family("reciprocal+").roots["P3"]
    assert roots == pytest.approx([-4.5 * SQ2, 1.5 * SQ2], abs=1e-10)


def test_shift_moves_thresholds():
    base = V.classify_family("reciprocal+").stable_set()[0]
    moved = V.classify_family("reciprocal+", shift=2.0).stable_set()[0]
    assert moved == pytest.approx((base[0] + 2.0, base[1] + 2.0), abs=1e-9)


def test_plane_curve_inputs_accepted():
    # an ellipse sampled as points behaves like the analytic ellipse
    s = sample_closed(curves.ellipse(), 256)
    assert abs(V.first_variation(s, lambda x: 0 * x + 1.0)) <= 1e-10
    inv = plane_ga_invariants(s)
    assert np.max(np.abs(inv.phi)) <= 1e-10
