import math

import numpy as np
import pytest

from colombeau.epsnet import (
    CertificateError,
    EpsGrid,
    GenNumber,
    INF_VALUATION,
    ScaleExpr,
    classify_net,
    valuation,
)
from colombeau.fourier import (
    BumpFunction,
    CombSlice,
    CompactNet,
    DiffSlice,
    TransformedSlice,
    box_quadrature,
    fl_slice_transform,
    fl_symbol_identity,
    fl_transform,
    gauss_legendre,
    inverse_fl,
    operator_slice_terms,
    pw_classify,
    slice_quadrature,
)
from conftest import make_poly


# ---------------------------------------------------------------------------
# Bumps and slices
# ---------------------------------------------------------------------------

def test_bump_supported_on_declared_ball():
    f = BumpFunction([0.3], 0.5)
    pts = np.array([[0.3], [0.79], [0.81], [-0.3]])
    vals = f.eval(pts)
    assert vals[0] > 0 and vals[1] > 0
    assert vals[2] == 0 and vals[3] == 0


def test_bump_derivative_matches_finite_difference():
    f = BumpFunction([0.0, 0.2], 0.8)
    pt = np.array([[0.1, 0.3]])
    h = 1e-6
    fd = (f.eval(pt + [[h, 0]]) - f.eval(pt - [[h, 0]])) / (2 * h)
    assert abs(f.deriv((1, 0), pt)[0] - fd[0]) < 1e-6


def test_plateau_bump_is_one_on_inner_ball():
    f = BumpFunction([0.0], 1.0, plateau=0.5)
    pts = np.linspace(-0.49, 0.49, 11)[:, None]
    assert np.allclose(f.eval(pts), 1.0)


def test_reflected_slice_flips_odd_derivatives():
    base = CombSlice([1.0], [BumpFunction([0.2], 0.5)])
    refl = TransformedSlice(base, reflect=True)
    pt = np.array([[0.1]])
    assert np.allclose(refl.eval(pt), base.eval(-pt))
    assert np.allclose(refl.deriv((1,), pt), -base.deriv((1,), -pt))


def test_exp_profile_bump_agrees_with_formula():
    f = BumpFunction([0.0], 1.0, profile="exp_bump")
    x = np.array([[0.5]])
    expected = math.exp(-1.0 / (1.0 - 0.25))
    assert abs(f.eval(x)[0] - expected * f.eval(np.array([[0.0]]))[0] / math.exp(-1.0)) < 1e-12


# ---------------------------------------------------------------------------
# Transform
# ---------------------------------------------------------------------------

def test_transform_of_bump_matches_doubled_order_quadrature(grid):
    u = CompactNet.single(grid, [0.1], 0.7)
    zeta = np.array([[0.5 + 0.2j], [3.0 - 1.0j], [0.0 + 0.0j]])
    coarse = fl_slice_transform(u.slice(0), zeta, order=64)
    fine = fl_slice_transform(u.slice(0), zeta, order=160)
    assert np.max(np.abs(coarse - fine)) < 1e-12


def test_transform_at_zero_is_the_mass(grid):
    u = CompactNet.single(grid, [0.0], 1.0)
    pts, w = slice_quadrature(u.slice(0), 96)
    mass = np.sum(w * u.slice(0).eval(pts))
    val = fl_slice_transform(u.slice(0), np.array([[0.0 + 0.0j]]), order=96)[0]
    assert abs(val - mass) < 1e-12


def test_shifted_transform_with_zero_shift_matches_plain(grid):
    u = CompactNet.single(grid, [0.0, 0.0], 0.6)
    eta = GenNumber.constant(0.0, grid)
    cert = classify_net(eta, "log_type")
    for xi in (np.array([1.0, 2.0]), np.array([0.3, -0.5])):
        plain = fl_transform(u, zeta=xi.astype(complex))
        shifted = fl_transform(u, xi=xi, eta_n=eta, eta_cert=cert)
        assert np.max(np.abs(plain.values() - shifted.values())) < 1e-12


def test_shifted_transform_requires_log_type(grid):
    u = CompactNet.single(grid, [0.0, 0.0], 0.6)
    eta = GenNumber.symbolic(ScaleExpr.monomial(1.0, -1.0, 0), grid)
    with pytest.raises(CertificateError):
        fl_transform(u, xi=np.array([1.0, 0.0]), eta_n=eta, eta_cert=None)


# ---------------------------------------------------------------------------
# Frequency-side classification
# ---------------------------------------------------------------------------

def test_plain_bump_classified_uniform(grid):
    u = CompactNet.single(grid, [0.0], 0.5)
    cert = pw_classify(u, q_max=3)
    assert cert.cls.startswith("Einf")
    assert all(rec["N"] == 0 for rec in cert.table.values())


def test_eps_power_multiplier_classified_negligible(grid):
    mult = GenNumber.symbolic(ScaleExpr.monomial(1.0, 5.0, 0), grid)
    u = CompactNet.single(grid, [0.0], 0.5, multiplier=mult)
    cert = pw_classify(u, q_max=6)
    assert cert.cls.startswith("N_")
    assert cert.q >= 5


def test_negative_power_multiplier_keeps_uniform_growth(grid):
    mult = GenNumber.symbolic(ScaleExpr.monomial(1.0, -3.0, 0), grid)
    u = CompactNet.single(grid, [0.0], 0.5, multiplier=mult)
    cert = pw_classify(u, q_max=3)
    assert cert.cls.startswith("Einf")
    assert max(rec["N"] for rec in cert.table.values()) == 3


def test_symbol_action_identity_under_transform(grid):
    P = make_poly(grid, 1, {(1,): 1.0})
    u = CompactNet.single(grid, [0.0], 0.7)
    zeta = np.array([[0.5 + 0.2j], [3.0 + 0.0j], [-1.0 - 0.5j]])
    net, est = fl_symbol_identity(P, u, zeta)
    assert np.max(np.abs(net.values())) < 1e-10


def test_symbol_action_identity_scales_with_coefficient(grid):
    inv_eps = GenNumber.symbolic(ScaleExpr.monomial(1.0, -1.0, 0), grid)
    P = make_poly(grid, 1, {(1,): inv_eps})
    u = CompactNet.single(grid, [0.0], 0.7)
    zeta = np.array([[0.5 + 0.2j], [3.0 + 0.0j]])
    net, est = fl_symbol_identity(P, u, zeta)
    # residual is quadrature noise amplified by one inverse order
    assert np.max(np.abs(net.values())) < 1e-10 * 2.0**44


def test_inverse_transform_round_trip(grid):
    u = CompactNet.single(grid, [0.0], 0.8)

    def v(ei, pts):
        return fl_slice_transform(u.slice(ei), pts.astype(complex), order=96)

    res = inverse_fl(v, grid, 1, a_target=0.8)
    direct = u.slice(0).eval(res.x_pts)
    err = float(np.max(np.abs(res.values[0] - direct)))
    assert err < 1e-6
    assert res.support_passed


# ---------------------------------------------------------------------------
# Operator slices
# ---------------------------------------------------------------------------

def test_operator_slice_matches_symbol_convention(grid):
    # P(xi) = i xi corresponds to d/dx
    P = make_poly(grid, 1, {(1,): 1j})
    u = CompactNet.single(grid, [0.0], 0.6)
    terms = operator_slice_terms(P, 0, transpose=False)
    slc = DiffSlice(terms, u.slice(0))
    pt = np.array([[0.2]])
    assert abs(slc.eval(pt)[0] - u.slice(0).deriv((1,), pt)[0]) < 1e-12


def test_transpose_flips_odd_orders(grid):
    P = make_poly(grid, 1, {(1,): 1j})
    u = CompactNet.single(grid, [0.0], 0.6)
    slc = DiffSlice(operator_slice_terms(P, 0, transpose=True), u.slice(0))
    pt = np.array([[0.2]])
    assert abs(slc.eval(pt)[0] + u.slice(0).deriv((1,), pt)[0]) < 1e-12


def test_box_quadrature_integrates_polynomial_exactly():
    pts, w = box_quadrature(np.zeros(2), 1.0, 16, 2)
    val = np.sum(w * (pts[:, 0] ** 2 * pts[:, 1] ** 2))
    assert abs(val - 4.0 / 9.0) < 1e-12
