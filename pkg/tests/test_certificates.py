import json
from pathlib import Path

import numpy as np
import pytest

from certopt import (CERTIFIED_GLOBAL, CERTIFIED_UNIQUE, INCONCLUSIVE, FeFunction,
                     build_uniform_mesh, certify_continuous_norm, certify_discrete,
                     certify_sign, check_supersolution, continuous_threshold,
                     discrete_threshold, exact_lq_norm, gagliardo_nirenberg_constant,
                     load_solution, lumped_q_norm, make_certificate_params, make_custom,
                     make_exponential, make_power_law)
from certopt.certificates import GN_C4_INV_SQUARED, GN_C6_INV, _norm_verdict
from certopt.solvers import KKTSolution, ResidualRecord, SolveDiagnostics

from conftest import oracle_lq_norm

FIXTURES = Path(__file__).parent / "fixtures"


def solution_from_values(n, p_values, y_values=None, zero_trace=False):
    mesh = build_uniform_mesh(n)
    y = np.zeros(mesh.num_vertices) if y_values is None else np.asarray(y_values, float)
    return KKTSolution(y=FeFunction(mesh, y, zero_trace=zero_trace),
                       p=FeFunction(mesh, np.asarray(p_values, float), zero_trace=zero_trace),
                       mu=np.zeros(mesh.num_vertices),
                       diagnostics=SolveDiagnostics(0, ResidualRecord(0, 0, 0), 0, True))


# ---------------------------------------------------------------------------
# interpolation constants

def test_stored_interpolation_constants():
    c4 = gagliardo_nirenberg_constant(4.0)
    c6 = gagliardo_nirenberg_constant(6.0)
    assert c4 ** -2 == pytest.approx(2.381297723376159, abs=1e-12)
    assert c6 ** -1 == pytest.approx(1.616080082127768, abs=1e-12)
    assert c6 ** -0.5 == pytest.approx(1.271251384316953, abs=1e-12)


def test_unknown_index_names_override_mechanism():
    with pytest.raises(ValueError, match="gn_constant_override"):
        gagliardo_nirenberg_constant(5.0)
    assert gagliardo_nirenberg_constant(5.0, override=1.25) == 1.25
    with pytest.raises(ValueError):
        gagliardo_nirenberg_constant(5.0, override=-1.0)


# ---------------------------------------------------------------------------
# parameter validation and derived exponents

def test_derived_exponents_quadratic_family():
    params = make_certificate_params(make_power_law(1.0, 3.0), q=2.0, alpha=1.0)
    assert params.t == pytest.approx(4.0, abs=0.0)
    assert params.rho == pytest.approx(0.5, abs=0.0)
    assert params.c_t == gagliardo_nirenberg_constant(4.0)


def test_derived_exponents_cubic_family():
    params = make_certificate_params(make_power_law(1.0, 4.0), q=3.0, alpha=1.0)
    assert params.t == pytest.approx(6.0, abs=0.0)
    assert params.rho == pytest.approx(5.0 / 6.0, rel=1e-15)


def test_inadmissible_index_is_rejected():
    cubic = make_power_law(1.0, 4.0)  # gamma = 1/2 needs q > 2
    with pytest.raises(ValueError, match="q"):
        make_certificate_params(cubic, q=2.0, alpha=1.0)
    with pytest.raises(ValueError):
        make_certificate_params(make_exponential(1.0), q=2.0, alpha=1.0)
    with pytest.raises(ValueError):
        make_certificate_params(make_power_law(1.0, 3.0), q=2.0, alpha=-1.0)


def test_three_dimensional_index_window():
    quad = make_power_law(1.0, 3.0)  # gamma = 0: 1.5 <= q < 3
    params = make_certificate_params(quad, q=2.0, alpha=1.0, d=3)
    assert params.t == pytest.approx(4.0)
    assert params.rho == pytest.approx(3.0 / 4.0 + 0.0)
    with pytest.raises(ValueError):
        make_certificate_params(quad, q=3.0, alpha=1.0, d=3)
    # the extended flag admits larger q (t then needs an override constant)
    params = make_certificate_params(quad, q=6.0, alpha=1.0, d=3,
                                     gn_override=1.0, extended_range=True)
    assert params.extended_range


# ---------------------------------------------------------------------------
# threshold values

def test_threshold_frozen_value():
    # high-precision evaluation of the closed form (mpmath, 40 digits):
    # 2.08930936722553059250777953...
    params = make_certificate_params(make_power_law(1.0, 3.0), q=2.0, alpha=1.0)
    assert continuous_threshold(params) == pytest.approx(2.0893093672255306, rel=1e-12)
    assert discrete_threshold(params) == pytest.approx(0.5 * 2.0893093672255306, rel=1e-12)


def test_threshold_alpha_scaling_law():
    for nl, q in ((make_power_law(1.0, 3.0), 2.0), (make_power_law(1.0, 4.0), 3.0),
                  (make_power_law(1.0, 6.0), 6.0)):
        unit = make_certificate_params(nl, q=q, alpha=1.0)
        for alpha in (1e-6, 1e-2, 10.0, 1e3):
            scaled = make_certificate_params(nl, q=q, alpha=alpha)
            expected = alpha ** (unit.rho / 2.0) * continuous_threshold(unit)
            assert continuous_threshold(scaled) == pytest.approx(expected, rel=1e-14)
            assert continuous_threshold(scaled) > 0


def test_threshold_increases_with_alpha():
    params_small = make_certificate_params(make_power_law(1.0, 4.0), q=3.0, alpha=0.1)
    params_large = make_certificate_params(make_power_law(1.0, 4.0), q=3.0, alpha=1.0)
    assert continuous_threshold(params_large) > continuous_threshold(params_small)


def test_discrete_threshold_never_exceeds_continuous():
    for nl, q in ((make_power_law(1.0, 3.0), 2.0), (make_power_law(1.0, 4.0), 3.0),
                  (make_power_law(1.0, 4.0), 4.0), (make_power_law(1.0, 6.0), 6.0)):
        params = make_certificate_params(nl, q=q, alpha=0.37)
        assert discrete_threshold(params) <= continuous_threshold(params)


def test_gamma_zero_is_continuous_limit():
    quad = make_power_law(1.0, 3.0)
    at_zero = make_certificate_params(quad, q=2.0, alpha=1.0)
    c4 = gagliardo_nirenberg_constant(4.0)
    nudged_nl = make_custom(quad.phi, quad.phi_y, quad.phi_yy,
                            gamma=1e-8, growth_bound=2.0)
    nudged = make_certificate_params(nudged_nl, q=2.0, alpha=1.0, gn_override=c4)
    ratio = continuous_threshold(nudged) / continuous_threshold(at_zero)
    assert abs(ratio - 1.0) < 1e-6


def test_discrete_threshold_requires_dimension_two():
    params = make_certificate_params(make_power_law(1.0, 3.0), q=2.0, alpha=1.0, d=3)
    with pytest.raises(ValueError):
        discrete_threshold(params)
    sol = solution_from_values(4, np.zeros(25))
    with pytest.raises(ValueError):
        certify_discrete(sol, params)


# ---------------------------------------------------------------------------
# verdicts

def test_zero_adjoint_certifies_uniquely():
    params = make_certificate_params(make_power_law(1.0, 3.0), q=2.0, alpha=1.0)
    sol = solution_from_values(4, np.zeros(25))
    for report in (certify_discrete(sol, params), certify_continuous_norm(sol, params)):
        assert report.verdict == CERTIFIED_UNIQUE
        assert report.margin == pytest.approx(report.threshold)
        assert report.certified


def test_verdict_bands():
    assert _norm_verdict(0.5, 1.0) == CERTIFIED_UNIQUE
    assert _norm_verdict(1.0, 1.0) == CERTIFIED_GLOBAL
    assert _norm_verdict(1.0 + 5e-15, 1.0) == CERTIFIED_GLOBAL
    assert _norm_verdict(1.0 + 1e-13, 1.0) == INCONCLUSIVE
    order = {CERTIFIED_UNIQUE: 2, CERTIFIED_GLOBAL: 1, INCONCLUSIVE: 0}
    values = [0.3, 0.9999999, 1.0, 1.0000001, 2.0]
    ranks = [order[_norm_verdict(v, 1.0)] for v in values]
    assert ranks == sorted(ranks, reverse=True)  # smaller norm never degrades


def test_certificate_norms_match_fem_norms():
    rng = np.random.default_rng(9)
    mesh = build_uniform_mesh(4)
    p = rng.normal(size=mesh.num_vertices)
    sol = solution_from_values(4, p)
    params = make_certificate_params(make_power_law(1.0, 4.0), q=3.0, alpha=1.0)
    assert certify_discrete(sol, params).norm_value == lumped_q_norm(sol.p, 3.0)
    assert certify_continuous_norm(sol, params).norm_value == exact_lq_norm(sol.p, 3)


def test_continuous_norm_fallback_for_non_integer_index():
    nl = make_custom(lambda y: y, lambda y: np.ones_like(np.asarray(y, float)),
                     lambda y: np.zeros_like(np.asarray(y, float)),
                     gamma=0.0, growth_bound=1.0)
    params = make_certificate_params(nl, q=2.5, alpha=1.0, gn_override=1.0)
    sol = solution_from_values(4, np.zeros(25))
    with pytest.raises(ValueError, match="quadrature_fallback"):
        certify_continuous_norm(sol, params)
    report = certify_continuous_norm(sol, params, quadrature_fallback=True)
    assert "quadrature" in report.assumptions_note
    assert report.verdict == CERTIFIED_UNIQUE


# ---------------------------------------------------------------------------
# sign certificate and barrier check

def test_sign_certificate_negative_adjoint():
    values = np.full(25, -1.0)
    sol = solution_from_values(4, values)
    report = certify_sign(sol, make_power_law(1.0, 3.0), interval=(-10.0, 10.0),
                          direction="convex", range_hypothesis_asserted=True)
    assert report.verdict == CERTIFIED_UNIQUE
    assert "asserted" in report.assumptions_note


def test_sign_certificate_mirrored_concave():
    sol = solution_from_values(4, np.full(25, 0.7))
    report = certify_sign(sol, make_power_law(1.0, 3.0), interval=(-10.0, 10.0),
                          direction="concave", range_hypothesis_asserted=True)
    assert report.verdict == CERTIFIED_UNIQUE


def test_sign_certificate_mixed_sign_is_inconclusive():
    values = np.linspace(-1.0, 1.0, 25)
    sol = solution_from_values(4, values)
    report = certify_sign(sol, make_power_law(1.0, 3.0), interval=(-10.0, 10.0),
                          direction="convex", range_hypothesis_asserted=True)
    assert report.verdict == INCONCLUSIVE


def test_sign_certificate_requires_assertion_and_range():
    sol = solution_from_values(4, np.full(25, -1.0))
    unasserted = certify_sign(sol, make_power_law(1.0, 3.0), interval=(-10.0, 10.0),
                              direction="convex", range_hypothesis_asserted=False)
    assert unasserted.verdict == INCONCLUSIVE
    outside = certify_sign(solution_from_values(4, np.full(25, -1.0),
                                                y_values=np.full(25, 3.0)),
                           make_power_law(1.0, 3.0), interval=(-1.0, 1.0),
                           direction="convex", range_hypothesis_asserted=True)
    assert outside.verdict == INCONCLUSIVE


def test_supersolution_constant_barrier():
    cubic = make_power_law(1.0, 4.0)  # y^3
    ok, margin = check_supersolution(lambda x: np.full(x.shape[:-1], 2.0),
                                     lambda x: np.zeros(x.shape[:-1]),
                                     cubic, control_upper=8.0, sample_density=16)
    assert ok and margin == pytest.approx(0.0, abs=1e-12)
    ok, margin = check_supersolution(lambda x: np.full(x.shape[:-1], 2.0),
                                     lambda x: np.zeros(x.shape[:-1]),
                                     cubic, control_upper=8.5, sample_density=16)
    assert not ok and margin == pytest.approx(-0.5, abs=1e-12)


def test_supersolution_parabolic_barrier():
    cubic = make_power_law(1.0, 4.0)

    def barrier(x):
        return 1.0 + x[..., 0] * (1.0 - x[..., 0])

    def laplacian(x):
        return np.full(x.shape[:-1], -2.0)

    ok, margin = check_supersolution(barrier, laplacian, cubic,
                                     control_upper=2.0, sample_density=32)
    assert ok
    assert margin == pytest.approx(1.0, abs=1e-12)


def test_supersolution_negative_barrier_fails_boundary_sign():
    cubic = make_power_law(1.0, 4.0)
    ok, margin = check_supersolution(lambda x: np.full(x.shape[:-1], -1.0),
                                     lambda x: np.zeros(x.shape[:-1]),
                                     cubic, control_upper=-10.0, sample_density=8)
    assert not ok
    assert margin == pytest.approx(-1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# shipped regression fixture

def test_regression_fixture_norm_and_threshold():
    run, alpha, spec, sol = load_solution(FIXTURES / "cubic_case1_a1_alpha0p1_n8.json")
    expected = json.loads((FIXTURES / "cubic_case1_a1_alpha0p1_n8.expected.json").read_text())
    params = make_certificate_params(spec.nonlinearity, q=3.0, alpha=alpha)
    continuous = certify_continuous_norm(sol, params)
    discrete = certify_discrete(sol, params)
    assert continuous.norm_value == pytest.approx(expected["norm_L3"], rel=1e-10)
    assert continuous.threshold == pytest.approx(expected["eta"], rel=1e-10)
    assert discrete.norm_value == pytest.approx(expected["norm_h3"], rel=1e-10)
    assert discrete.threshold == pytest.approx(expected["threshold_discrete"], rel=1e-10)
    assert continuous.verdict == expected["verdict"]
    # cross-check the stored norm against the independent quadrature oracle
    assert oracle_lq_norm(sol.p, 3) == pytest.approx(expected["norm_L3"], rel=1e-10)
