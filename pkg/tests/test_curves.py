import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affineflow import curves, jets as J
from affineflow.curves import AffineMap, ParamMap, apply_affine, eval_jets, reparametrize
from affineflow.errors import (
    NonMonotoneMap,
    NotClosed,
    OrderTooHigh,
    OutOfDomain,
    SingularMap,
    TooFewSamples,
)
from affineflow.invariants import arclength_element, plane_ga_invariants


def test_unit_circle_jets_at_zero():
    x = eval_jets(curves.circle(), 0.0, 2)
    np.testing.assert_allclose(x.data, [[1, 0], [0, 1], [-1, 0]], atol=1e-15)


def test_parabola_third_derivative_vanishes():
    x = eval_jets(curves.parabola(), np.linspace(-1.5, 1.5, 7), 3)
    np.testing.assert_array_equal(x[3], 0.0)


def test_ellipse_jets_match_finite_differences():
    e = curves.ellipse(2.0, 1.0)
    p, h = 0.7, 1e-2
    x = eval_jets(e, p, 4)
    pts = np.stack([e(p + k * h) for k in range(-3, 4)])  # seven-point stencils
    d1 = (-pts[0] + 9 * pts[1] - 45 * pts[2] + 45 * pts[4] - 9 * pts[5] + pts[6]) / (60 * h)
    d2 = (2 * pts[0] - 27 * pts[1] + 270 * pts[2] - 490 * pts[3] + 270 * pts[4] - 27 * pts[5] + 2 * pts[6]) / (180 * h**2)
    np.testing.assert_allclose(x[1], d1, atol=1e-7)
    np.testing.assert_allclose(x[2], d2, atol=1e-7)
    # higher orders against the analytic pattern of (2 cos p, sin p)
    for k in range(5):
        expected = [2 * np.cos(p + k * np.pi / 2), np.sin(p + k * np.pi / 2)]
        np.testing.assert_allclose(x[k], expected, atol=1e-14)


def test_out_of_domain_and_order_cap():
    with pytest.raises(OutOfDomain):
        eval_jets(curves.xlogx(), 10.0, 2)
    with pytest.raises(OrderTooHigh):
        eval_jets(curves.circle(), 0.0, J.MAX_ORDER + 1)


def test_unknown_builtin_name():
    with pytest.raises(OutOfDomain):
        curves.builtin("no-such-curve")


# affine maps ---------------------------------------------------------------------------

def test_identity_map_leaves_jets_unchanged():
    e = curves.egg()
    p = np.linspace(0, 6, 5)
    same = apply_affine(e, AffineMap(np.eye(2)))
    np.testing.assert_array_equal(eval_jets(same, p, 5).data, eval_jets(e, p, 5).data)


def test_doubling_map_doubles_every_derivative():
    c = curves.circle()
    p = np.linspace(0, 6, 5)
    big = apply_affine(c, AffineMap(2 * np.eye(2)))
    np.testing.assert_allclose(eval_jets(big, p, 6).data, 2 * eval_jets(c, p, 6).data, rtol=1e-15)


def test_singular_map_rejected():
    with pytest.raises(SingularMap):
        AffineMap([[1.0, 2.0], [2.0, 4.0]])


def test_shear_keeps_fully_affine_curvature():
    e = curves.perturbed_ellipse()
    p = np.linspace(0.1, 6.0, 11)
    sheared = apply_affine(e, AffineMap([[2.0, 1.0], [0.0, 1.0]], [5.0, -3.0]))
    assert not np.allclose(sheared(p), e(p))
    np.testing.assert_allclose(plane_ga_invariants(sheared, p).phi, plane_ga_invariants(e, p).phi, atol=1e-10)


matrices = st.lists(st.floats(-2, 2), min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2)).filter(
    lambda m: abs(np.linalg.det(m)) > 0.05)


@settings(max_examples=40, deadline=None)
@given(m=matrices, b=st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_affine_image_commutes_with_jets(m, b):
    e = curves.egg()
    p = np.linspace(0, 6, 7)
    moved = eval_jets(apply_affine(e, AffineMap(m, b)), p, 6)
    base = eval_jets(e, p, 6)
    for k in range(1, 7):
        np.testing.assert_allclose(moved[k], m @ base[k], atol=1e-12)
    np.testing.assert_allclose(moved[0], m @ base[0] + np.array(b)[:, None], atol=1e-12)


# reparametrization -------------------------------------------------------------------------

def test_identity_reparametrization():
    e = curves.ellipse()
    same = reparametrize(e, ParamMap(lambda t: t, e.domain))
    p = np.linspace(0, 6, 5)
    np.testing.assert_allclose(eval_jets(same, p, 4).data, eval_jets(e, p, 4).data, atol=1e-15)


def test_doubling_reparametrization_scales_derivatives():
    c = curves.circle()
    fast = reparametrize(c, ParamMap(lambda t: 2 * t, (0.0, np.pi)))
    p = np.linspace(0, 3, 5)
    x, y = eval_jets(fast, p, 2), eval_jets(c, 2 * p, 2)
    np.testing.assert_allclose(x[1], 2 * y[1], atol=1e-14)
    np.testing.assert_allclose(x[2], 4 * y[2], atol=1e-14)


def test_reparametrized_density_transforms_with_speed():
    e = curves.ellipse()
    r = ParamMap(lambda t: t + 0.3 * J.sin(t), (0.0, 2 * np.pi))
    moved = reparametrize(e, r, 2 * np.pi)
    p = np.linspace(0.2, 6.0, 9)
    g_new = arclength_element("GA", moved, p)
    g_old = arclength_element("GA", e, r(p))
    np.testing.assert_allclose(g_new, g_old * r.jets(p, 1)[1], rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.0, 0.9))
def test_reparametrization_preserves_point_set(a):
    e = curves.egg()
    r = ParamMap(lambda t: t + a * J.sin(t), (0.0, 2 * np.pi))
    p = np.linspace(0, 2 * np.pi, 13)
    np.testing.assert_allclose(reparametrize(e, r)(p), e(r(p)), atol=1e-12)


def test_non_monotone_map_rejected():
    with pytest.raises(NonMonotoneMap):
        reparametrize(curves.ellipse(), ParamMap(lambda t: t + 2 * J.sin(t), (0.0, 2 * np.pi)))


def test_catalog_orientation_is_positive():
    for name, params in [("ellipse", {}), ("hyperbola", {}), ("xlogx", {}), ("spiral", {"beta": 0.4}),
                         ("power", {"alpha": 3.0}), ("egg", {}), ("quartic-oval", {})]:
        c = curves.builtin(name, **params)
        lo, hi = c.domain
        x = eval_jets(c, np.linspace(lo, hi, 9)[1:-1], 2)
        assert np.all(J.bracket(x[1], x[2]) > 0), name


# sampling and spectral derivatives ---------------------------------------------------------------

def test_sampling_preconditions():
    with pytest.raises(NotClosed):
        curves.sample_closed(curves.hyperbola(), 64)
    with pytest.raises(TooFewSamples):
        curves.sample_closed(curves.ellipse(), 30)
    with pytest.raises(TooFewSamples):
        curves.sample_closed(curves.ellipse(), 65)


def test_spectral_derivative_of_sine():
    p = np.arange(64) * (2 * np.pi / 64)
    d = curves.spectral_derivatives(np.sin(p), 2 * np.pi, 1)
    assert np.max(np.abs(d[1] - np.cos(p))) < 1e-10


def test_spectral_derivatives_of_constant_vanish():
    d = curves.spectral_derivatives(np.full(64, 3.5), 2 * np.pi, 5)
    assert np.max(np.abs(d[1:])) < 1e-12


def test_spectral_jets_match_analytic_jets():
    e = curves.ellipse(2.0, 1.0)
    s = curves.sample_closed(e, 256)
    np.testing.assert_allclose(curves.spectral_jets(s, 4).data, eval_jets(e, s.nodes, 4).data, atol=1e-8)


def test_spectral_order_cap():
    with pytest.raises(OrderTooHigh):
        curves.spectral_jets(curves.sample_closed(curves.ellipse(), 64), 8)


def test_spectral_convergence_on_analytic_oval():
    e = curves.egg()
    errors = []
    for N in (32, 64, 128):
        s = curves.sample_closed(e, N)
        err = np.max(np.abs(curves.spectral_jets(s, 4)[4] - eval_jets(e, s.nodes, 4)[4]))
        errors.append(err)
    floor = 1e-9
    for coarse, fine in zip(errors, errors[1:]):
        assert fine <= coarse / 10 or fine < floor


def test_sampled_affine_image():
    s = curves.sample_closed(curves.ellipse(), 64)
    m = AffineMap([[1.0, 0.5], [0.0, 2.0]], [1.0, 1.0])
    moved = apply_affine(s, m)
    np.testing.assert_allclose(moved.points, s.points @ m.matrix.T + m.translation)
