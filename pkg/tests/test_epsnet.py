import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau.epsnet import (
    CertificateError,
    EpsGrid,
    GenNumber,
    INF_VALUATION,
    ScaleExpr,
    ScaleExprParseError,
    classify_net,
    gn_arith,
    valuation,
    valuation_with_floor,
)


# ---------------------------------------------------------------------------
# ScaleExpr grammar
# ---------------------------------------------------------------------------

def test_parse_and_print_round_trip():
    text = "1*eps^-1*log^2 + 0+1i*eps^0"
    expr = ScaleExpr.parse(text)
    assert ScaleExpr.parse(expr.as_text()) == expr


def test_parse_rejects_malformed_exponent():
    with pytest.raises(ScaleExprParseError):
        ScaleExpr.parse("eps^")


def test_parse_rejects_negative_log_power():
    with pytest.raises(ScaleExprParseError):
        ScaleExpr.parse("1*eps^0*log^-1")


def test_normalization_drops_zero_terms_and_sorts():
    expr = ScaleExpr.make([(0.0, 1.0, 0), (2.0, -1.0, 1), (1.0, 0.5, 0)])
    pows = [(p, l) for _, p, l in expr.terms]
    assert pows == sorted(pows, key=lambda p: (p[0], -p[1]))
    assert all(c != 0 for c, _, _ in expr.terms)


coeff_st = st.complex_numbers(
    min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False
)
term_st = st.tuples(
    coeff_st,
    st.integers(-12, 12).map(lambda k: k / 4.0),
    st.integers(0, 2),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(term_st, min_size=1, max_size=4))
def test_text_round_trip_property(terms):
    expr = ScaleExpr.make(terms)
    again = ScaleExpr.parse(expr.as_text())
    grid = EpsGrid.default(4, 14)
    a = expr.eval(grid.array)
    b = again.eval(grid.array)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


# ---------------------------------------------------------------------------
# Valuations
# ---------------------------------------------------------------------------

def test_symbolic_valuation_is_exact(grid):
    expr = ScaleExpr.make([(2.0, 1.5, 0), (1.0, 3.0, 1)])
    num = GenNumber.symbolic(expr, grid)
    assert valuation(num).value == 1.5


def test_zero_expression_valuation_is_infinite(grid):
    num = GenNumber.symbolic(ScaleExpr.zero(), grid)
    assert valuation(num).value == INF_VALUATION


def test_sampled_valuation_close_to_exact(grid):
    num = GenNumber.from_values((grid.array**1.5).astype(complex), grid)
    assert abs(valuation(num).value - 1.5) < 0.05


def test_sampled_valuation_with_log_factor(grid):
    vals = grid.array**-1.0 * grid.log_inv**2
    num = GenNumber.from_values(vals.astype(complex), grid)
    assert abs(valuation(num).value - (-1.0)) < 0.05


def test_valuation_with_floor_treats_noise_as_zero(grid):
    vals = np.full(len(grid), 1e-14, dtype=complex)
    num = GenNumber.from_values(vals, grid)
    est = valuation_with_floor(num, 1e-10)
    assert est.value == INF_VALUATION


@settings(max_examples=40, deadline=None)
@given(
    st.integers(-8, 8).map(lambda k: k / 2.0),
    st.integers(0, 2),
)
def test_monomial_valuation_property(pow_eps, pow_log):
    grid = EpsGrid.default()
    expr = ScaleExpr.monomial(1.0 + 0.5j, pow_eps, pow_log)
    num = GenNumber.symbolic(expr, grid)
    assert valuation(num).value == pow_eps
    shadow = GenNumber.from_values(expr.eval(grid.array), grid)
    assert abs(valuation(shadow).value - pow_eps) < 0.05


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

def test_moderate_classification(grid):
    num = GenNumber.symbolic(ScaleExpr.monomial(3.0, -2.0, 0), grid)
    cert = classify_net(num, "moderate")
    assert cert.passed and cert.witness["N"] == 2


def test_negligible_up_to(grid):
    num = GenNumber.symbolic(ScaleExpr.monomial(1.0, 7.0, 0), grid)
    assert classify_net(num, "negligible_up_to", q=5.0).passed
    assert not classify_net(num, "negligible_up_to", q=9.0).passed


def test_slow_scale_accepts_log_and_rejects_powers(grid):
    log_net = GenNumber.from_values(grid.log_inv.astype(complex), grid)
    assert classify_net(log_net, "slow_scale").passed
    pow_net = GenNumber.symbolic(ScaleExpr.monomial(1.0, -0.5, 0), grid)
    assert not classify_net(pow_net, "slow_scale").passed


def test_log_type_classification(grid):
    log_net = GenNumber.from_values(grid.log_inv.astype(complex), grid)
    assert classify_net(log_net, "log_type").passed
    bad = GenNumber.symbolic(ScaleExpr.monomial(1.0, -1.0, 0), grid)
    assert not classify_net(bad, "log_type").passed


def test_strictly_nonzero_records_inverse_exponent(grid):
    num = GenNumber.symbolic(ScaleExpr.monomial(1.0, 3.0, 0), grid)
    cert = classify_net(num, "strictly_nonzero")
    assert cert.passed and abs(cert.witness["m"] - 3.0) < 0.1


def test_strictly_positive_requires_real_positive(grid):
    pos = GenNumber.constant(2.0, grid)
    assert classify_net(pos, "strictly_positive").passed
    neg = GenNumber.constant(-2.0, grid)
    assert not classify_net(neg, "strictly_positive").passed


# ---------------------------------------------------------------------------
# Arithmetic with certificates
# ---------------------------------------------------------------------------

def test_add_and_mul_track_symbolic_exactness(grid):
    a = GenNumber.symbolic(ScaleExpr.monomial(1.0, 1.0, 0), grid)
    b = GenNumber.symbolic(ScaleExpr.monomial(2.0, 2.0, 0), grid)
    s = gn_arith("add", a, b)
    assert valuation(s).value == 1.0
    p = gn_arith("mul", a, b)
    assert valuation(p).value == 3.0


def test_inverse_requires_certificate(grid):
    zeroish = GenNumber.from_values(np.zeros(len(grid), dtype=complex), grid)
    with pytest.raises(CertificateError):
        gn_arith("inv", zeroish)
    good = GenNumber.symbolic(ScaleExpr.monomial(1.0, 2.0, 0), grid)
    inv = gn_arith("inv", good)
    assert abs(valuation(inv).value - (-2.0)) < 0.05


def test_exp_requires_log_type(grid):
    big = GenNumber.symbolic(ScaleExpr.monomial(1.0, -1.0, 0), grid)
    with pytest.raises(CertificateError):
        gn_arith("exp_log_type", big)
    log_net = GenNumber.from_values(grid.log_inv.astype(complex), grid)
    e = gn_arith("exp_log_type", log_net)
    assert abs(valuation(e).value - (-1.0)) < 0.05


def test_abs_of_nonnegative_symbolic_stays_symbolic(grid):
    a = GenNumber.symbolic(ScaleExpr.make([(1.0, 1.0, 0), (2.0, 2.0, 1)]), grid)
    result = gn_arith("abs", a)
    assert result.expr is not None


def test_grid_mismatch_rejected():
    g1 = EpsGrid.default()
    g2 = EpsGrid.default(5, 20)
    a = GenNumber.constant(1.0, g1)
    b = GenNumber.constant(1.0, g2)
    with pytest.raises(ValueError):
        gn_arith("add", a, b)
