"""Quick self-check of the core identities, used by ``affineflow verify``.

Each check returns ``(name, passed, detail)``.  The suite is deterministic
for a given seed and finishes in a few seconds.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import curves, flow, isoper, jets as J, variation
from .curves import AffineMap, ParamMap, apply_affine, reparametrize
from .invariants import plane_ga_invariants, repar_identity_residual

Check = tuple[str, bool, str]


def _coefficients() -> Check:
    c2, c3 = J.ga_coefficients(2), J.ga_coefficients(3)
    ok = (c2.alpha, c2.beta, c2.gamma) == (3, 5, 12) and (c3.alpha, c3.beta, c3.gamma) == (24, 35, 60)
    worst = max(max(abs(r) for r in J.coefficient_system_residuals(J.ga_coefficients(n))) for n in range(2, 11))
    return "coefficient integers", ok and worst == 0, f"n=2 {c2.alpha, c2.beta, c2.gamma}, max residual {worst}"


def _random_map(rng: np.random.Generator) -> AffineMap:
    while True:
        m = rng.normal(size=(2, 2))
        if abs(np.linalg.det(m)) > 0.3:
            return AffineMap(m, rng.normal(size=2))


def _wobble(rng: np.random.Generator, period: float) -> ParamMap:
    a = rng.uniform(0.05, 0.2)
    k = 2 * np.pi / period
    return ParamMap(lambda t: t + a / k * J.sin(k * t), (0.0, period))


def _reparametrisation(rng) -> Check:
    worst = 0.0
    for _ in range(5):
        curve = curves.egg(rng.uniform(0.05, 0.2))
        r = _wobble(rng, curves.TWO_PI)
        p = rng.uniform(0.2, 6.0, 8)
        worst = max(worst, float(np.max(repar_identity_residual(curve, r, p))))
    return "reparametrisation identity", worst <= 1e-6, f"max relative residual {worst:.2e}"


def _invariance(rng) -> Check:
    worst = 0.0
    for base in (curves.ellipse(2, 1), curves.egg(), curves.perturbed_ellipse()):
        p = np.linspace(0.3, 6.0, 9)
        ref = plane_ga_invariants(base, p).phi
        r = _wobble(rng, curves.TWO_PI)
        moved = reparametrize(apply_affine(base, _random_map(rng)), r, curves.TWO_PI)
        # the moved curve at s corresponds to the base curve at r(s); invert r on the probes
        s = p.copy()
        for _ in range(60):
            s = s - (r(s) - p) / r.jets(s, 1)[1]
        got = plane_ga_invariants(moved, s).phi
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return "affine invariance of phi", worst <= 1e-7, f"max deviation {worst:.2e}"


def _closed_forms() -> Check:
    p = np.linspace(0.4, 3.5, 7)
    checks = {
        "ellipse": (plane_ga_invariants(curves.ellipse(), p).phi, 0.0),
        "hyperbola": (plane_ga_invariants(curves.hyperbola(), np.linspace(-1.5, 1.5, 7)).phi, 0.0),
        "xlogx": (np.abs(plane_ga_invariants(curves.xlogx(), np.linspace(0.5, 4, 7)).phi), 2.0),
        "spiral": (np.abs(plane_ga_invariants(curves.log_spiral(0.6), np.linspace(-1, 1, 7)).phi), 2 * np.sin(0.6)),
    }
    worst = max(float(np.max(np.abs(v - target))) for v, target in checks.values())
    return "closed-form curvatures", worst <= 1e-8, f"max deviation {worst:.2e}"


def _isoperimetric() -> Check:
    e = isoper.isoper_report(curves.ellipse(3.0, 0.5, (1.0, -2.0), 0.4))
    egg = isoper.isoper_report(curves.egg())
    spread = max(abs(egg.L_ga - 3 * egg.I_ea), abs(egg.L_ga - egg.I_euclid))
    ok = abs(e.slack_to_6pi) <= 1e-6 and abs(e.I_ea - 2 * np.pi) <= 1e-8 and spread <= 1e-6 and egg.slack_to_6pi > 1e-3
    return "isoperimetric identities", ok, f"ellipse slack {e.slack_to_6pi:.1e}, egg slack {egg.slack_to_6pi:.4f}"


def _extremals() -> Check:
    worst = 0.0
    for name in ("tan", "cot", "tanh", "coth", "reciprocal+", "reciprocal-"):
        fam = variation.extremal_family(name)
        lo, hi = fam.window
        xi = np.linspace(lo, hi, 401)
        poles = fam.poles(lo, hi)
        if len(poles):
            xi = xi[np.min(np.abs(xi[:, None] - np.asarray(poles)[None, :]), axis=1) > 1e-2]
        res = variation.extremal_residual(J.derivatives(fam.phi, xi, 6), fam.eps, relative=True)
        worst = max(worst, float(np.max(np.abs(res))))
    return "extremal equation", worst <= 1e-10, f"max relative residual {worst:.2e}"


def _solitons() -> Check:
    params = {"ellipse": {}, "hyperbola": {}, "xlogx": {}, "power": {"alpha": 3.0}, "spiral": {"beta": np.pi / 6}}
    worst = max(flow.verify_soliton_flow(k, v, 0.4) for k, v in params.items())
    return "soliton flow residuals", worst <= 1e-5, f"max residual {worst:.2e}"


def _stationarity() -> Check:
    worst = 0.0
    for fam, (lo, hi) in flow.soliton_families():
        xi = np.linspace(lo, hi, 41)
        phi = np.broadcast_to(J.derivatives(fam.phi, xi, 6), (7,) + xi.shape)
        U = np.zeros((6,) + xi.shape)
        U[0] = 1.0
        gt, pt = flow.rates_from_stacks(phi[:5], U, phi[:2], fam.eps)
        worst = max(worst, float(np.max(np.abs(gt))), float(np.max(np.abs(pt))))
    return "soliton stationarity", worst <= 1e-8, f"max rate {worst:.2e}"


def _fourth_order() -> Check:
    st = flow.mu_state(curves.perturbed_ellipse(), 128)
    m = st.mu_stack(4)
    g1, m1 = flow.mu_rates_from_stacks(*flow.fullyaffine_coefficient_stacks(m), m)
    g2, m2 = flow.fourth_order_mu_rates(m)
    worst = float(max(np.max(np.abs(m1 - m2)), np.max(np.abs(g1 - g2))))
    return "equi-affine fourth-order form", worst <= 1e-12, f"max difference {worst:.2e}"


CHECKS: list[Callable] = [_coefficients, _reparametrisation, _invariance, _closed_forms, _isoperimetric,
                          _extremals, _solitons, _stationarity, _fourth_order]


def run_identity_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for check in CHECKS:
        try:
            out.append(check(rng) if check.__code__.co_argcount else check())
        except Exception as exc:  # a crashing check is reported, not raised
            out.append((check.__name__.strip("_"), False, f"{type(exc).__name__}: {exc}"))
    return out
