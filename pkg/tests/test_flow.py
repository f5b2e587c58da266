import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affineflow import curves, flow, jets as J
from affineflow.curves import sample_closed
from affineflow.errors import BlowUp, InvalidParams
from affineflow.invariants import xi_derivatives
from affineflow.periodic import arc_stack

P64 = np.arange(64) * (2 * np.pi / 64)


def smooth_state(eps=1):
    # a synthetic low-mode state; the rate identities do not need a closed curve
    return flow.CurvatureState(0.1 * np.sin(3 * P64) + 0.05 * np.cos(P64), 3.0 + 0.2 * np.cos(2 * P64), eps)


# general motion rates ---------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(c=st.lists(st.floats(-1, 1), min_size=3, max_size=3), eps=st.sampled_from([1, -1]))
def test_tangential_motion_is_transport(c, eps):
    s = smooth_state(eps)
    W = c[0] + c[1] * np.sin(P64) + c[2] * np.cos(2 * P64)
    gtog, phit = flow.invariant_rates(W, 0.0, s)
    Wxi = arc_stack(W, s.g, s.period, 1)[1]
    np.testing.assert_allclose(gtog, Wxi, atol=1e-12)
    np.testing.assert_allclose(phit, W * s.phi_stack(1)[1], atol=1e-12)


def test_ellipse_is_stationary_under_normal_motion():
    s = flow.curvature_state(curves.ellipse(2.0, 1.0), 64)
    gtog, phit = flow.invariant_rates(0.0, 1.0, s)
    assert np.max(np.abs(gtog)) <= 1e-12
    assert np.max(np.abs(phit)) <= 1e-12


def test_heat_rates_agree_with_general_rates():
    s = smooth_state()
    gt, phit = flow.heat_rates(s)
    gtog, phit2 = flow.invariant_rates(0.0, 1.0, s)
    np.testing.assert_allclose(gt, gtog * s.g, atol=1e-13)
    np.testing.assert_allclose(phit, phit2, atol=1e-13)


@pytest.mark.parametrize("index", range(7))
def test_soliton_curvatures_are_stationary(index):
    fam, (lo, hi) = flow.soliton_families(1.5)[index]
    xi = np.linspace(lo, hi, 41)
    d = J.derivatives(fam.phi, xi, 5)
    U = np.vstack([np.ones_like(xi), np.zeros((5, xi.size))])
    gtog, phit = flow.rates_from_stacks(d, U, d[:2], fam.eps)
    assert np.max(np.abs(gtog)) <= 1e-8
    assert np.max(np.abs(phit)) <= 1e-8


def test_derivative_rate_vanishes_on_constant_curvature():
    s = flow.CurvatureState(np.full(64, 0.7), np.full(64, 2.0))
    for k in range(4):
        assert np.max(np.abs(flow.curvature_derivative_rate(s, k))) <= 1e-12
    with pytest.raises(InvalidParams):
        flow.curvature_derivative_rate(s, 4)


@pytest.mark.parametrize("k", range(4))
def test_derivative_rate_matches_time_difference(k):
    s = smooth_state()
    rate = flow.curvature_derivative_rate(s, k)
    errors = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        later = flow.run_heat_flow(s, dt, fixed_dt=dt / 8).state
        fd = (later.phi_stack(k)[k] - s.phi_stack(k)[k]) / dt
        errors.append(np.max(np.abs(fd - rate)))
    assert errors[-1] <= 0.02 * np.max(np.abs(rate))
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine == pytest.approx(2.0, rel=0.1)


# heat flow on the curvature state --------------------------------------------------------------

def test_ellipse_state_does_not_move():
    s = flow.curvature_state(curves.ellipse(2.0, 1.0), 64)
    new, _ = flow.heat_step_curvature(s, 0.05)
    assert new.t > 0
    assert np.max(np.abs(new.phi - s.phi)) <= 1e-12
    assert np.max(np.abs(new.g - s.g)) <= 1e-12


def test_perturbed_flow_conserves_and_monotone(perturbed_heat_run):
    run, _ = perturbed_heat_run
    assert run.error is None
    mon = run.monitors
    assert np.all(np.diff(mon.t) > 0)
    assert max(abs(m) for m in mon.meanphi) <= 1e-6
    assert np.all(np.diff(mon.L) >= -1e-13)
    assert np.all(np.diff(mon.E) <= 1e-13)
    assert mon.E[-1] < mon.E[0] / 10
    assert mon.L[-1] == pytest.approx(6 * np.pi, rel=1e-2)


def test_monitored_rate_matches_identity(perturbed_heat_run):
    run, _ = perturbed_heat_run
    s = run.state
    gt, _ = flow.heat_rates(s)
    measured = float(np.sum(gt) * s.period / s.N)
    assert measured == pytest.approx(s.length_rate_identity(), rel=1e-4)


def test_monitor_rows_and_timestamps():
    mon = flow.FlowMonitors()
    s = smooth_state()
    mon.record(s, 0.0)
    assert mon.rows().shape == (1, 5)
    with pytest.raises(ValueError):
        mon.record(s, 0.0)


def test_blow_up_is_reported_with_history():
    s = flow.CurvatureState(np.full(64, 500.0), np.full(64, 1.0))
    run = flow.run_heat_flow(s, 1.0)
    assert isinstance(run.error, BlowUp)
    assert len(run.monitors.t) >= 2


def test_snapshots_land_on_requested_times():
    s = flow.curvature_state(curves.perturbed_ellipse(), 64)
    run = flow.run_heat_flow(s, 0.2, snapshot_times=(0.0, 0.1, 0.2))
    assert [round(x.t, 12) for x in run.snapshots] == [0.0, 0.1, 0.2]


def test_curve_points_close_up_for_ellipse():
    pts, gap = flow.curve_points(flow.curvature_state(curves.ellipse(3.0, 1.0), 128))
    assert gap <= 1e-6  # fourth-order quadrature in p
    # whitened ellipse is the unit-variance circle of radius sqrt(2)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), np.sqrt(2), rtol=1e-6)


# curve-level flow --------------------------------------------------------------------------

def test_circle_shrinks_exponentially():
    out = flow.run_curve_flow(flow.CurveState(sample_closed(curves.circle(), 64)), 1.0)
    radius = np.linalg.norm(out.curve.points, axis=1)
    assert np.max(np.abs(radius - np.exp(-1 / 9))) <= 1e-5


def test_ellipse_shrinks_homothetically():
    out = flow.run_curve_flow(flow.CurveState(sample_closed(curves.ellipse(2.0, 1.0), 64)), 0.5)
    x, y = out.curve.points.T
    s = np.exp(-0.5 / 9)
    assert np.max(np.abs((x / (2 * s)) ** 2 + (y / s) ** 2 - 1)) <= 1e-6


@pytest.fixture(scope="module")
def unit_time_runs():
    e = curves.perturbed_ellipse()
    base = flow.run_heat_flow(flow.curvature_state(e, 128), 1.0).state
    mu = flow.run_mu_flow(flow.mu_state(e, 128), 1.0, step=flow.fullyaffine_via_equiaffine_step, rtol=1e-7)[-1]
    cs = flow.run_curve_flow(flow.CurveState(sample_closed(e, 128)), 1.0)
    return base, mu, flow.curvature_state(cs.curve)


def test_curve_backend_matches_curvature_backend(unit_time_runs):
    base, _, from_curve = unit_time_runs
    d = flow.profile_distance((base.phi, base.g, base.period), (from_curve.phi, from_curve.g, from_curve.period))
    assert d <= 1e-3
    assert from_curve.length == pytest.approx(base.length, rel=1e-4)


def test_equiaffine_backend_matches_curvature_backend(unit_time_runs):
    base, mu, _ = unit_time_runs
    d = flow.profile_distance((base.phi, base.g, base.period), (mu.phi(), mu.xi_density(), mu.period))
    assert d <= 1e-4


# equi-affine backend -----------------------------------------------------------------------

def test_equiaffine_heat_rates():
    m = flow.mu_state(curves.perturbed_ellipse(), 128)
    gtog, mut = flow.equiaffine_rates(0.0, 1.0, m)
    stack = m.mu_stack(2)
    np.testing.assert_allclose(gtog, -2 / 3 * stack[0], atol=1e-13)
    np.testing.assert_allclose(mut, 4 / 3 * stack[0] ** 2 + stack[2] / 3, atol=1e-10)


def test_tangential_equiaffine_motion_is_transport():
    m = flow.mu_state(curves.perturbed_ellipse(), 128)
    alpha = 0.3 + 0.2 * np.sin(np.arange(m.mu.size) * (2 * np.pi / m.mu.size))
    gtog, mut = flow.equiaffine_rates(alpha, 0.0, m)
    np.testing.assert_allclose(mut, alpha * m.mu_stack(1)[1], atol=1e-12)
    np.testing.assert_allclose(gtog, arc_stack(alpha, m.gbar, m.period, 1)[1], atol=1e-12)


def test_unit_circle_mu_rates():
    m = flow.mu_state(curves.circle(), 64)
    np.testing.assert_allclose(flow.equiaffine_rates(0.0, 1.0, m)[1], 4 / 3, atol=1e-12)
    gtog, mut = flow.fourth_order_mu_rates(m.mu_stack(4))
    al, be = flow.fullyaffine_coefficient_stacks(m.mu_stack(4))
    g2, m2 = flow.mu_rates_from_stacks(al, be, m.mu_stack(2))
    np.testing.assert_allclose(mut, 4 / 27, atol=1e-12)
    np.testing.assert_allclose(mut, m2, atol=1e-12)
    np.testing.assert_allclose(gtog, g2, atol=1e-12)


def test_fourth_order_form_matches_general_rates_on_oval():
    m = flow.mu_state(curves.egg(), 128)
    stack = m.mu_stack(4)
    gtog, mut = flow.fourth_order_mu_rates(stack)
    al, be = flow.fullyaffine_coefficient_stacks(stack)
    g2, m2 = flow.mu_rates_from_stacks(al, be, stack)
    assert np.max(np.abs(mut - m2)) <= 1e-12 * max(1.0, np.max(np.abs(mut)))
    assert np.max(np.abs(gtog - g2)) <= 1e-12


def test_fourth_order_mu_flow_is_second_order():
    bump = flow.MuState(1 + 0.3 * np.exp(-4 * (1 - np.cos(P64))), np.ones(64))

    def advance(h, T=0.04):
        s = bump
        while s.t < T - 1e-14:
            s, _ = flow.fullyaffine_via_equiaffine_step(s, min(h, T - s.t), min(h, T - s.t), rtol=1.0)
        return s.mu

    ref = advance(0.01 / 16)
    errors = [np.max(np.abs(advance(h) - ref)) for h in (0.01, 0.005, 0.0025)]
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine >= 3.6


def test_equiaffine_isoperimetric_increases():
    series = flow.run_mu_flow(flow.mu_state(curves.perturbed_ellipse(), 64), 0.3)
    values = [s.isoperimetric for s in series]
    assert np.all(np.diff(values) > 0)
    assert values[-1] <= 2 * np.pi + 1e-4


# solitons -----------------------------------------------------------------------------------

def test_classify_constant_zero_curvature():
    xi = np.linspace(-2, 2, 21)
    ell = flow.soliton_classify(lambda x: 0 * x, 1, xi)
    hyp = flow.soliton_classify(lambda x: 0 * x, -1, xi)
    assert ell.kind == hyp.kind == "constant"
    assert ell.a == pytest.approx(-1 / 9, abs=1e-14) and ell.motion == "shrinking"
    assert hyp.a == pytest.approx(1 / 9, abs=1e-14) and hyp.motion == "expanding"


@settings(max_examples=20, deadline=None)
@given(A=st.floats(0.3, 3.0))
def test_classify_tangent_family(A):
    xi = np.linspace(-1.0, 1.0, 21) * (np.pi / A)
    fam = flow.soliton_classify(lambda x: A * J.tan(A * x / 3), 1, xi)
    assert fam.kind == "tanA"
    assert fam.A == pytest.approx(A, rel=1e-9)
    assert fam.a == pytest.approx((2 * A * A - 1) / 9, rel=1e-9, abs=1e-12)


def test_classify_rejects_non_soliton():
    xi = np.linspace(0, 3, 21)
    assert isinstance(flow.soliton_classify(lambda x: J.sin(x), 1, xi), flow.NotASoliton)


def test_explicit_ellipse_at_time_zero():
    c = flow.explicit_soliton("ellipse", {"a0": 2.0, "b0": 1.0})
    th = np.linspace(0, 6, 7)
    np.testing.assert_allclose(c(th), curves.ellipse(2.0, 1.0)(th), atol=1e-15)


def test_explicit_xlogx_coordinates():
    t = 0.3
    th = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(flow.explicit_soliton("xlogx", t=t)(th),
                               [2 * th * np.exp(t), np.exp(t) * (2 * t * th + th * np.log(th))], rtol=1e-14)


def test_explicit_power_exponents():
    t = 0.7
    th = np.array([0.5, 1.5])
    np.testing.assert_allclose(flow.explicit_soliton("power", {"alpha": 3.0}, t)(th),
                               [th * np.exp(t / 5), th**3 * np.exp(9 * t / 5)], rtol=1e-14)


@pytest.mark.parametrize("kind, params", [
    ("power", {"alpha": 2.0}), ("power", {}), ("spiral", {"beta": 0.0}), ("spiral", {"beta": 2.0}),
    ("ellipse", {"a0": 0.0}), ("cardioid", {}),
])
def test_explicit_soliton_rejects_bad_params(kind, params):
    with pytest.raises(InvalidParams):
        flow.explicit_soliton(kind, params)


@pytest.mark.parametrize("kind, params", [
    ("ellipse", {}), ("hyperbola", {}), ("xlogx", {}), ("power", {"alpha": 3.0}),
    ("power", {"alpha": -1.0}), ("spiral", {"beta": np.pi / 6}),
])
@pytest.mark.parametrize("t", [0.0, 0.4])
def test_explicit_solitons_solve_the_heat_flow(kind, params, t):
    assert flow.verify_soliton_flow(kind, params, t) <= 1e-5


def test_wrong_exponent_is_detected():
    # the same ellipse shrinking like exp(-t/3) would not be a solution
    curve = flow.explicit_soliton("ellipse")
    th = np.linspace(0.1, 6.0, 20)
    ct = -curve(th) / 3.0
    vecs, _ = xi_derivatives(curve, th, 2)
    assert np.max(np.linalg.norm(ct - vecs[1], axis=0)) > 0.1
