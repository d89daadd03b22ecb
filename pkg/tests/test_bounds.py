import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import B1, SHARP, WINDOW
from edgecurrent.bounds import (
    F_eps,
    NOISE_FLOOR,
    appendix2_certificate,
    bound_constants,
    corollary_constant,
    cs_envelope,
    decay_certificate,
    default_h2p_constant,
    effective_potential,
    energy_identity_residual,
    envelope_appendix2,
    envelope_appendix3,
    hermite_sup,
    kappa_and_F,
    oscillator_overlaps,
    positivity_check,
    projection_bounds,
    restricted_sups,
    s_function,
    soft_constant,
    soft_integrals,
    trace_bounds,
    trace_upper_bound,
    trace_upper_general,
    turning_point_condition,
)
from edgecurrent.errors import (
    HypothesisViolation,
    InvalidArgument,
    UnsupportedFamily,
)
from edgecurrent.model import (
    FieldConfig,
    PotentialSpec,
    check_hypotheses,
    fiber_grid,
    hypothesis_threshold,
    lambda_n,
    make_problem,
)
from edgecurrent.numerics import hermite_gaussian_array
from edgecurrent.spectra import Window, invert_dispersion, scan_dispersion, solve_fiber

PARA = PotentialSpec("parabolic", 20.0)
TANH = PotentialSpec("tanh", 30.0)


def _fiber(spec, k, n=1, field=B1, **kw):
    return solve_fiber(make_problem(spec, field, k, **kw), n)


def _preimage_ks(spec, count, window=WINDOW, field=B1):
    t = scan_dispersion(spec, field, np.linspace(-3, 6, 46), 1)
    p = invert_dispersion(t, 0, window)
    return np.linspace(p.k_c, p.k_a, count)


# --- constants -------------------------------------------------------------------------

def test_hermite_sup_values():
    s0 = hermite_sup(0)
    assert s0.values == (1.0,) and s0.aggregate == 1.0
    s1 = hermite_sup(1)
    assert s1.values[1] == pytest.approx(2 * math.exp(-0.5), abs=1e-10)
    assert s1.aggregate == pytest.approx(math.sqrt(1 + 2 / math.e), abs=1e-10)


@pytest.mark.parametrize("n", [-1, 21])
def test_hermite_sup_range(n):
    with pytest.raises(InvalidArgument):
        hermite_sup(n)


def test_hermite_sup_brute_force():
    s = hermite_sup(10)
    for m in range(11):
        r = math.sqrt(4 * m + 8)
        u = np.linspace(-r, r, 1_000_001)
        assert s.values[m] == pytest.approx(hermite_gaussian_array(m, u).max(), rel=1e-9)


def test_corollary_constant():
    assert corollary_constant(0) == pytest.approx(math.sqrt(math.pi) / 32, rel=1e-12)
    c1 = math.sqrt(math.pi) / (32 * 4 * (1 + 2 / math.e))
    assert corollary_constant(1) == pytest.approx(c1, rel=1e-9)
    vals = [corollary_constant(n) for n in range(8)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_soft_constant_matches_flat_constant_at_full_sups():
    assert soft_constant(0, 1.0) == pytest.approx(corollary_constant(0))
    with pytest.raises(InvalidArgument):
        soft_constant(0, 0.0)


def test_kappa_example():
    kf = kappa_and_F(Window(0, 1.9, 2.1, 1.5, 2.5), B1, 0.05)
    assert kf["kappa2"] == pytest.approx(0.91, abs=1e-12)
    assert kf["kappa"] == pytest.approx(0.95394, abs=1e-5)
    assert kf["stable"] and kf["F"] > 0


def test_kappa_degenerate_window():
    kf = kappa_and_F(Window(0, 2.0, 2.0, 1.5, 2.5), B1, 0.0)
    assert kf["kappa"] == 1.0 and kf["F"] == 0.0


def test_kappa_unstable_is_a_value():
    kf = kappa_and_F(Window(0, 1.9, 2.1, 1.8, 2.2), B1, 0.2)
    assert not kf["stable"] and kf["kappa2"] <= 0 and math.isnan(kf["F"])


def test_kappa_needs_outer():
    with pytest.raises(InvalidArgument):
        kappa_and_F(WINDOW, B1, 0.0)


@settings(max_examples=50)
@given(st.floats(1.05, 1.95), st.floats(0.0, 0.9), st.floats(0.0, 0.3), st.floats(0.3, 4.0))
def test_kappa_in_unit_interval(a_out, half_width, v1, B):
    mid = 2.0
    a_out = min(a_out, mid - 0.01)
    c_out = 2 * mid - a_out
    a = mid - half_width * (mid - a_out)
    c = 2 * mid - a
    if not a_out < a:
        return
    kf = kappa_and_F(Window(0, a, c, a_out, c_out), FieldConfig(B), v1 * B)
    if kf["stable"]:
        assert 0 < kf["kappa"] <= 1 and kf["F"] >= 0


def test_F_eps_vanishes_without_deviation():
    assert F_eps(Window(0, 2.0, 2.0, 1.5, 2.5), B1, 0.0, 0.05) == 0.0


def test_bound_constants_record():
    bc = bound_constants(1, Window(1, 1.9, 2.1, 1.5, 2.5), B1, 0.05, PARA, 1.0)
    assert bc.H_m[0] == 1.0 and bc.H_n == pytest.approx(math.sqrt(1 + 2 / math.e))
    assert bc.kappa2 == pytest.approx(0.91)
    assert bc.Lambda_n == pytest.approx(lambda_n(PARA, B1, 1, 2.1, 1.0))
    assert bc.M_n == pytest.approx(bc.Lambda_n)
    assert all(v is None or v > 0 for k, v in bc.to_dict().items() if k not in ("n", "H_m", "extras"))


def test_cs_envelope():
    assert cs_envelope([1.0, 2.0]) == pytest.approx(math.sqrt(1 + 2))


def test_restricted_sups_bounded_by_global():
    g = hermite_sup(2)
    r = restricted_sups(2, B1, 0.7, -0.3)
    for m in range(3):
        assert r["H"][m] <= g.values[m] + 1e-9
        assert r["H_tilde"][m] <= g.values[m] + 1e-9
    assert r["H_agg"] <= g.aggregate + 1e-9


def test_turning_point_condition_sharp_is_trivial():
    tp = turning_point_condition(WINDOW, B1, 1.0, 0.0, 1.0)
    assert tp["holds"] and tp["minus_x_eps"] == 0.0


# --- step decay ---------------------------------------------------------------------------

def test_decay_certificates_pass():
    for k in _preimage_ks(SHARP, 5):
        c = decay_certificate(_fiber(SHARP, k), 0, SHARP, B1)
        assert c.passed and c.margin > 1e3 * c.slack


def test_decay_at_step_saturates():
    p = _fiber(SHARP, 0.7)
    w, phi = p.level(0)
    e = int(np.argmin(np.abs(p.x)))
    ratio = phi[e] ** 2 / (phi[e] ** 2 * math.exp(0.0))
    assert ratio == 1.0


def test_decay_precondition():
    spec = PotentialSpec("sharp", 2.0)
    p = _fiber(spec, -3.0)
    assert p.omega[0] > 2.0
    with pytest.raises(InvalidArgument):
        decay_certificate(p, 0, spec, B1)
    with pytest.raises(UnsupportedFamily):
        decay_certificate(_fiber(PARA, 0.0), 0, PARA, B1)


# --- exponential envelopes ----------------------------------------------------------------------

def test_constant_w_envelopes_coincide():
    x = np.linspace(-5, 0, 501)
    W = np.full_like(x, 4.0)
    env = envelope_appendix2(W, x, 0.0, 0.3, dW=np.zeros_like(x))
    np.testing.assert_allclose(env.S, 4.0)
    np.testing.assert_allclose(env.lower, env.upper, rtol=1e-12)
    np.testing.assert_allclose(env.upper, 0.3 * np.exp(-2.0 * (0.0 - x)), rtol=1e-12)


def test_bounded_below_mode():
    x = np.linspace(-2, 0, 201)
    env = envelope_appendix2(np.full_like(x, 9.0), x, 0.0, 1.0, mode="bounded_below", W_inf=2.25)
    np.testing.assert_allclose(env.upper, np.exp(-1.5 * (0 - x)), rtol=1e-12)
    assert env.lower is None


def test_envelope_argument_errors():
    x = np.linspace(-2, 0, 21)
    with pytest.raises(InvalidArgument):
        envelope_appendix2(np.full_like(x, -1.0), x, 0.0, 1.0)
    with pytest.raises(HypothesisViolation):
        envelope_appendix2(1.0 + x + 3.0, x, 0.0, 1.0)
    with pytest.raises(InvalidArgument):
        envelope_appendix2(np.ones_like(x), x, 0.0, 1.0, mode="bounded_below")
    with pytest.raises(InvalidArgument):
        envelope_appendix2(np.ones_like(x), x, 0.0, -1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 20), st.floats(0.0, 5.0), st.floats(0.01, 0.1))
def test_s_dominates_w(w0, slope, h):
    x = np.arange(-4.0, 0.0 + h / 2, h)
    W = w0 + slope * x * x
    dW = 2 * slope * x
    S = s_function(W, dW, h)
    assert np.all(S >= W * (1 - 1e-12))


def test_s_function_against_direct_quadrature():
    h = 0.002
    x = np.arange(-6.0, 0.0 + h / 2, h)
    W = 1.0 + x * x
    dW = 2 * x
    S = s_function(W, dW, h)
    i = x.size - 1
    from scipy.integrate import quad
    inner = lambda u, t: math.exp(-2 * quad(lambda v: math.sqrt(1 + v * v), u, t)[0])
    ref = W[i] - quad(lambda u: 2 * u * inner(u, 0.0), -6.0, 0.0, limit=200)[0]
    assert S[i] == pytest.approx(ref, rel=1e-5)


@pytest.mark.parametrize("spec", [SHARP, PARA, TANH, PotentialSpec("exponential", 5.0, rate=1.0)])
def test_envelope_sandwich(spec):
    for k in _preimage_ks(spec, 4):
        c = appendix2_certificate(_fiber(spec, k), 0, spec, B1)
        assert c.passed and c.details["S_ge_W"]


def test_bounded_below_envelope_sharp():
    for k in _preimage_ks(SHARP, 3):
        c = appendix2_certificate(_fiber(SHARP, k), 0, SHARP, B1, mode="bounded_below")
        assert c.passed


# --- soft-potential envelopes -----------------------------------------------------------------

def test_soft_envelope_sharp_h2():
    eps = 0.5
    spec = PotentialSpec("sharp", hypothesis_threshold(0, 1.7, eps, 1.0) * 1.5)
    rep = check_hypotheses(spec, B1, 0, 1.7, eps, fiber_grid(spec, B1, 0.0))
    assert rep.H1 and rep.H2
    for k in _preimage_ks(spec, 4):
        assert envelope_appendix3(_fiber(spec, k), 0, spec, B1, eps, "H2", rep).passed


def test_soft_envelope_parabolic_h2p():
    ks = _preimage_ks(PARA, 4)
    rep = check_hypotheses(PARA, B1, 0, 1.7, 1.0, fiber_grid(PARA, B1, ks), ks)
    assert rep.H2p
    for k in ks:
        c = envelope_appendix3(_fiber(PARA, k), 0, PARA, B1, 1.0, "H2'", rep)
        assert c.passed
        assert c.parameters["C_k"] == pytest.approx(lambda_n(PARA, B1, 0, 1.7, 1.0))


def test_soft_envelope_margin_improves_with_eps():
    spec = PotentialSpec("sharp", 100.0)
    k = _preimage_ks(spec, 3)[1]
    p = _fiber(spec, k)
    margins = []
    for eps in (0.25, 0.5, 1.0):
        rep = check_hypotheses(spec, B1, 0, 1.7, eps, fiber_grid(spec, B1, k))
        c = envelope_appendix3(p, 0, spec, B1, eps, "H2", rep)
        margins.append(c.details["worst_lower_ratio"])
    assert margins[0] >= margins[1] >= margins[2]


def test_soft_envelope_requires_report():
    p = _fiber(SHARP, 0.7)
    with pytest.raises(InvalidArgument):
        envelope_appendix3(p, 0, SHARP, B1, 1.0, "H2", None)
    rep = check_hypotheses(PotentialSpec("none"), B1, 0, 1.7, 1.0, fiber_grid(SHARP, B1, 0.7))
    with pytest.raises(InvalidArgument):
        envelope_appendix3(p, 0, SHARP, B1, 1.0, "H2", rep)


# --- projections and traces -----------------------------------------------------------------

def test_free_overlaps_are_kronecker():
    p = _fiber(PotentialSpec("none"), 0.5, 3, h=0.005)
    for j in range(3):
        a = oscillator_overlaps(p, j, 5)
        e = np.zeros(6)
        e[j] = 1.0
        np.testing.assert_allclose(np.abs(a), e, atol=1e-4)
    out = projection_bounds(p, 0, WINDOW, B1, PotentialSpec("none"), diagnostic=True)
    assert all(c.verdict == "diagnostic" for c in out["certificates"])
    with pytest.raises(InvalidArgument):
        projection_bounds(p, 0, WINDOW, B1, PotentialSpec("none"))


def test_projection_bounds_sharp():
    for k in _preimage_ks(SHARP, 4):
        p = _fiber(SHARP, k)
        out = projection_bounds(p, 0, WINDOW, B1, SHARP)
        w = p.omega[0]
        assert out["weight"] >= (3 - w) / 2 > 0
        assert all(c.passed for c in out["certificates"])


def test_completeness_parabolic():
    for k in _preimage_ks(PARA, 3):
        out = projection_bounds(_fiber(PARA, k), 0, WINDOW, B1, PARA)
        assert out["completeness"] == pytest.approx(1.0, abs=1e-6)


def test_trace_upper_value():
    assert trace_upper_bound(B1, 100.0, 0) == pytest.approx(math.sqrt(0.02) * 3**0.25, rel=1e-12)
    assert trace_upper_bound(B1, 100.0, 0) == pytest.approx(0.18612, abs=1e-5)


def test_trace_bounds_sandwich():
    for k in _preimage_ks(SHARP, 4):
        lo, up = trace_bounds(_fiber(SHARP, k), 0, SHARP, B1, WINDOW)
        assert lo.passed and up.passed and lo.margin > 0 and up.margin > 0


def test_trace_bounds_preconditions():
    with pytest.raises(InvalidArgument):
        trace_bounds(_fiber(SHARP, 4.0), 0, SHARP, B1, WINDOW)
    spec = PotentialSpec("sharp", 2.5)
    with pytest.raises(InvalidArgument):
        trace_bounds(_fiber(spec, 0.0), 0, spec, B1, WINDOW)
    with pytest.raises(UnsupportedFamily):
        trace_bounds(_fiber(PARA, 0.0), 0, PARA, B1, WINDOW)


def test_trace_upper_general_random_k():
    rng = np.random.default_rng(3)
    for k in rng.uniform(-3, 6, 20):
        p = _fiber(SHARP, float(k), 2)
        for l in range(2):
            assert all(c.passed for c in trace_upper_general(p, l, SHARP, B1))


# --- soft integrals ----------------------------------------------------------------------------

def test_soft_integrals_sharp_trace_route():
    rep = check_hypotheses(SHARP, B1, 0, 1.7, 1.0, fiber_grid(SHARP, B1, 0.7))
    s = soft_integrals(_fiber(SHARP, 0.7), 0, SHARP, B1, 1.0, rep)
    assert s.route == "trace" and s.V_tilde == 100.0 and s.jump == 100.0
    # V0 times the length scale sqrt(eps / 2B)
    assert s.V == pytest.approx(100.0 * math.sqrt(0.5), rel=1e-5)


def test_soft_integrals_tanh_positive_and_monotone_in_eps():
    # at a fixed turning point the damping exponent grows with eps
    k = _preimage_ks(TANH, 3)[1]
    p = _fiber(TANH, k)
    rep = check_hypotheses(TANH, B1, 0, 1.7, 0.25, fiber_grid(TANH, B1, k))
    prev = math.inf
    for eps in (0.25, 0.5, 1.0):
        s = soft_integrals(p, 0, TANH, B1, eps, rep)
        assert 0 < s.V < math.inf and 0 < s.V_tilde < prev
        prev = s.V_tilde


def test_soft_integrals_h2p_route():
    ks = _preimage_ks(PARA, 2)
    rep = check_hypotheses(PARA, B1, 0, 1.7, 1.0, fiber_grid(PARA, B1, ks), ks)
    s = soft_integrals(_fiber(PARA, ks[0]), 0, PARA, B1, 1.0, rep, "H2'")
    assert s.route == "quadrature" and s.V > 0 and s.V_tilde > 0


def test_default_h2p_constant_parabolic_is_lambda():
    assert default_h2p_constant(PARA, B1, 0, 1.7, 1.0, 0.5, -0.43) == lambda_n(PARA, B1, 0, 1.7, 1.0)


# --- qualitative diagnostics --------------------------------------------------------------------

@pytest.mark.parametrize("spec", [SHARP, PARA, TANH])
def test_positivity_and_growth(spec):
    for k in _preimage_ks(spec, 3):
        r = positivity_check(_fiber(spec, k), 0, spec, B1)
        assert r["positive"] and r["increasing"]


@pytest.mark.parametrize("spec", [PARA, TANH])
def test_energy_identity(spec):
    k = _preimage_ks(spec, 3)[1]
    p = _fiber(spec, k)
    w, phi = p.level(0)
    W = effective_potential(spec, B1, k, w, p.x)
    ok = np.nonzero((W > 0) & (W < 50) & (p.x < 0) & (np.abs(phi) > NOISE_FLOOR * np.abs(phi).max()))[0]
    nodes = ok[np.linspace(0, ok.size - 1, 10).astype(int)]
    assert np.all(np.abs(energy_identity_residual(p, 0, spec, B1, nodes)) < 1e-4)
