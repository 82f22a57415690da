import math

import numpy as np
import pytest
from scipy.linalg import expm

from colombeau.epsnet import (
    CertificateError,
    EpsGrid,
    GenNumber,
    INF_VALUATION,
    ScaleExpr,
    valuation,
)
from colombeau.fourier import BumpFunction, CompactNet, box_quadrature
from colombeau.fundsol import (
    DeltaFunctional,
    LineFunctional,
    evolution_check,
    evolution_fundsol,
    first_order_operator,
    cr_fundsol,
    cr_operator,
    hormander_fundsol,
    kernel_decompose,
    laplace2d_fundsol,
    laplace2d_operator,
    matrix_exp,
    ode_first_order_fundsol,
    ode_second_order_fundsol,
    second_order_operator,
    verify_delta,
    verify_halfspace_support,
)
from colombeau.genpoly import weight_inequalities
from conftest import make_poly


def const(grid, z):
    return GenNumber.constant(z, grid)


def power_net(grid, p):
    return GenNumber.symbolic(ScaleExpr.monomial(1.0, p, 0), grid)


def small_tests(grid, dim=1):
    centers = ([0.0] * dim, [0.05] + [0.0] * (dim - 1))
    radii = (0.25, 0.2)
    return [CompactNet.single(grid, list(c), r) for c, r in zip(centers, radii)]


# ---------------------------------------------------------------------------
# First-order ODE kernels
# ---------------------------------------------------------------------------

def test_heaviside_solves_derivative(grid):
    a = const(grid, 0.0)
    E = ode_first_order_fundsol(a, const(grid, 0.0))
    P = first_order_operator(a)
    report = verify_delta(E, P, small_tests(grid), threshold=8, floor=1e-10)
    assert report.passed
    assert float(np.max(np.abs(report.residual.values()))) < 1e-10


def test_first_order_kernel_matches_exponential(grid):
    a = const(grid, -2.0)
    E = ode_first_order_fundsol(a, const(grid, 0.0))
    x = np.array([-1.0, -0.1, 0.2, 1.5])
    k = E.kernel_values(0, x)
    oracle = np.exp(-2.0 * x) * (x > 0)
    assert np.max(np.abs(k - oracle)) < 1e-14


def test_first_order_homogeneous_shift_still_solves(grid):
    a = const(grid, 1.0)
    E = ode_first_order_fundsol(a, const(grid, 0.7))
    P = first_order_operator(a)
    report = verify_delta(E, P, small_tests(grid), threshold=8, floor=1e-9)
    assert report.passed


def test_log_type_variant_rejects_fast_growth(grid):
    a = power_net(grid, -1.0)  # eps^-1 is not log-type
    with pytest.raises(CertificateError):
        ode_first_order_fundsol(a, const(grid, 0.0))


def test_log_type_coefficient_small_support(grid):
    a = GenNumber.from_values(grid.log_inv.astype(complex), grid)
    E = ode_first_order_fundsol(a, const(grid, 0.0))
    P = first_order_operator(a)
    report = verify_delta(E, P, small_tests(grid), threshold=8, floor=1e-9)
    assert report.passed


def test_robust_variant_switches_side_with_sign(grid):
    a = GenNumber.from_values(
        np.where(np.arange(len(grid)) % 2 == 0, 3.0, -3.0).astype(complex), grid
    )
    E = ode_first_order_fundsol(a, const(grid, 0.0), variant="robust")
    x = np.array([-0.5, 0.5])
    # positive coefficient: left-sided kernel -e^{ax} on x<0
    k_pos = E.kernel_values(0, x)
    assert abs(k_pos[0] - (-math.exp(-1.5))) < 1e-14 and k_pos[1] == 0.0
    # negative coefficient: right-sided kernel e^{ax} on x>0
    k_neg = E.kernel_values(1, x)
    assert k_neg[0] == 0.0 and abs(k_neg[1] - math.exp(-1.5)) < 1e-14
    P = first_order_operator(a)
    report = verify_delta(E, P, small_tests(grid), threshold=8, floor=1e-9)
    assert report.passed


def test_robust_variant_bound_and_zeroth_order_certificate(grid):
    a_vals = 1.0 / grid.array
    a = GenNumber.from_values(a_vals.astype(complex), grid)
    E = ode_first_order_fundsol(a, const(grid, 0.0), variant="robust")
    # |E(f)| <= r sup|f| for f supported in [-r, r]
    for r in (0.5, 1.0, 2.0):
        u = CompactNet.single(grid, [0.2 * r], 0.7 * r)
        pts, w = box_quadrature(np.zeros(1), r, 48, 1)
        sup = float(np.max(np.abs(u.slice(0).eval(pts))))
        acted = np.abs(E.apply(u).values())
        assert np.all(acted <= r * sup + 1e-12)
    records = E.basic_certificate()
    assert all(rec["N"] == 0 for rec in records)


def test_robust_variant_rejects_complex_coefficient(grid):
    a = const(grid, 1.0 + 1.0j)
    with pytest.raises(ValueError):
        ode_first_order_fundsol(a, const(grid, 0.0), variant="robust")


# ---------------------------------------------------------------------------
# Matrix exponential and second-order kernels
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "b,c,cls",
    [
        (3.0, 2.0, "strictly_positive"),
        (2.0, 1.0, "zero"),
        (1.0, 5.0, "strictly_negative"),
    ],
)
def test_matrix_exp_matches_dense_exponential(grid, b, c, cls):
    case = matrix_exp(const(grid, b), const(grid, c))
    assert case.delta_class == cls
    M = np.array([[0.0, 1.0], [-c, -b]])
    for x in (-1.0, 0.3, 2.0):
        got = case.entries(0, np.array([x]))[:, :, 0]
        assert np.max(np.abs(got - expm(x * M))) < 1e-12


def test_matrix_exp_group_law(grid):
    case = matrix_exp(const(grid, 1.0), const(grid, 5.0))
    x, y = 0.7, -0.4
    ex = case.entries(0, np.array([x]))[:, :, 0]
    ey = case.entries(0, np.array([y]))[:, :, 0]
    exy = case.entries(0, np.array([x + y]))[:, :, 0]
    assert np.max(np.abs(ex @ ey - exy)) < 1e-13


def test_matrix_exp_requires_log_type_damping(grid):
    with pytest.raises(CertificateError):
        matrix_exp(power_net(grid, -1.0), const(grid, 1.0))


def test_matrix_exp_negative_delta_drops_log_type_on_constant_term(grid):
    # c = eps^-1 is not log-type, but Delta = b^2 - 4c < 0 strictly
    case = matrix_exp(const(grid, 1.0), power_net(grid, -1.0))
    assert case.delta_class == "strictly_negative"
    with pytest.raises(CertificateError):
        # same c in the positive-Delta configuration is rejected
        matrix_exp(const(grid, 1.0), gn_neg_power(grid))


def gn_neg_power(grid):
    return GenNumber.symbolic(ScaleExpr.monomial(-1.0, -1.0, 0), grid)


def test_second_order_kernel_oracle(grid):
    # u'' + 3u' + 2u = delta  ->  E = (e^{-x} - e^{-2x}) H(x)
    E = ode_second_order_fundsol(const(grid, 3.0), const(grid, 2.0))
    x = np.array([0.1, 0.7, 2.0])
    oracle = np.exp(-x) - np.exp(-2.0 * x)
    assert np.max(np.abs(E.kernel_values(0, x) - oracle)) < 1e-13
    assert np.max(np.abs(E.kernel_values(0, -x))) == 0.0


def test_second_order_solves_delta(grid):
    b, c = const(grid, 1.0), const(grid, 5.0)
    E = ode_second_order_fundsol(b, c)
    report = verify_delta(E, second_order_operator(b, c), small_tests(grid),
                          threshold=8, floor=1e-9)
    assert report.passed


def test_kernel_decompose_recovers_derivative_plus_mass(grid):
    u = CompactNet.single(grid, [0.3], 0.6)

    class UnitMass:
        def __init__(self, bump):
            pts, w = box_quadrature(bump.center, bump.radius, 96, 1)
            self._scale = 1.0 / float(np.sum(w * bump.eval(pts)).real)
            self._bump = bump
            self.center = bump.center
            self.radius = bump.radius

        def eval(self, pts):
            return self._scale * self._bump.eval(pts)

    phi0 = UnitMass(BumpFunction([-1.5], 0.4))
    xs, v_vals, mass = kernel_decompose(u, phi0)
    # v vanishes at both ends of the window (compact support)
    assert abs(v_vals[0, 0]) < 1e-8 and abs(v_vals[0, -1]) < 1e-12
    # v' + mass phi0 == u, checked by central differences
    h = xs[1] - xs[0]
    dv = np.gradient(v_vals[0], h)
    recon = dv + mass.values()[0] * phi0.eval(xs[:, None])
    direct = u.slice(0).eval(xs[:, None])
    assert np.max(np.abs(recon - direct)[2:-2]) < 1e-4


def test_kernel_decompose_rejects_unnormalized_profile(grid):
    u = CompactNet.single(grid, [0.0], 0.5)
    with pytest.raises(ValueError):
        kernel_decompose(u, BumpFunction([-1.5], 0.4))


# ---------------------------------------------------------------------------
# Quadrature construction from the weight partition
# ---------------------------------------------------------------------------

def test_quadrature_construction_requires_certificate(grid):
    P = make_poly(grid, 1, {(1,): 1j})
    with pytest.raises(CertificateError):
        hormander_fundsol(P, 1.0, None)


def test_quadrature_construction_solves_derivative(grid):
    P = make_poly(grid, 1, {(1,): 1j})  # d/dx
    cert = weight_inequalities(P, np.zeros(1))
    sol, E = hormander_fundsol(P, 1.0, cert)
    tests = [CompactNet.single(grid, [0.0], 0.5),
             CompactNet.single(grid, [0.05], 0.6)]
    report = verify_delta(E, P, tests, threshold=6, floor=1e-6)
    assert report.passed
    assert sol.C_sel < 50.0


# ---------------------------------------------------------------------------
# Evolution operators
# ---------------------------------------------------------------------------

def heat_symbol(grid):
    return make_poly(grid, 2, {(2, 0): 1.0, (0, 1): 1j})


def omega_log(grid):
    return GenNumber.from_values((grid.log_inv + 1.0).astype(complex), grid)


def test_evolution_conditions_heat_transport_schroedinger(grid):
    om = omega_log(grid)
    for coeffs in (
        {(2, 0): 1.0, (0, 1): 1j},        # heat
        {(2, 0): 1j, (0, 1): 1j},         # free evolution
        {(1, 0): 1j * 2.0, (0, 1): 1j, (0, 0): 0.5},  # transport
    ):
        evo = evolution_check(make_poly(grid, 2, coeffs), om, -1.0)
        assert evo.passed
        assert evo.r1 == 0.0


def test_evolution_check_rejects_nonnegative_threshold(grid):
    with pytest.raises(ValueError):
        evolution_check(heat_symbol(grid), omega_log(grid), 0.5)


def test_evolution_check_rejects_fast_scale(grid):
    evo = evolution_check(heat_symbol(grid), power_net(grid, -1.0), -1.0)
    assert not evo.passed
    assert not evo.scale_cert["upper_ok"]


def test_evolution_check_flags_roots_below_contour(grid):
    # reversed heat flow: roots sit at Im = -|xi'|^2, below every c omega
    P = make_poly(grid, 2, {(2, 0): -1.0, (0, 1): 1j})
    evo = evolution_check(P, omega_log(grid), -1.0)
    assert not evo.passed
    assert evo.witness is not None and "xi_prime" in evo.witness


def test_evolution_fundsol_requires_verified_conditions(grid):
    P = make_poly(grid, 2, {(2, 0): -1.0, (0, 1): 1j})
    evo = evolution_check(P, omega_log(grid), -1.0)
    with pytest.raises(CertificateError):
        evolution_fundsol(P, evo, -0.5)


# ---------------------------------------------------------------------------
# Planar kernels
# ---------------------------------------------------------------------------

def test_cr_kernel_solves_delta(grid):
    a, b = const(grid, 1.0), const(grid, 1.0)
    E = cr_fundsol(a, b)
    P = cr_operator(a, b)
    tests = [CompactNet.single(grid, [0.0, 0.0], 0.4),
             CompactNet.single(grid, [0.1, -0.05], 0.3)]
    report = verify_delta(E, P, tests, threshold=5, floor=1e-5)
    assert report.passed


def test_laplace_kernel_solves_delta(grid):
    a1, a2 = const(grid, 1.0), const(grid, 2.0)
    E = laplace2d_fundsol(a1, a2)
    P = laplace2d_operator(a1, a2)
    tests = [CompactNet.single(grid, [0.0, 0.0], 0.4)]
    report = verify_delta(E, P, tests, threshold=4, floor=1e-4)
    assert report.passed


# ---------------------------------------------------------------------------
# Functionals and support checks
# ---------------------------------------------------------------------------

def test_point_mass_functional_is_evaluation(grid):
    u = CompactNet.single(grid, [0.1], 0.5)
    d = DeltaFunctional(grid, 1)
    vals = d.apply(u).values()
    assert np.max(np.abs(vals - u.eval0())) < 1e-14
    records = d.basic_certificate()
    assert all(rec["N"] == 0 and rec["j"] == 0 for rec in records)


def test_line_functional_matches_direct_quadrature(grid):
    u = CompactNet.single(grid, [0.0, 0.0], 0.8)
    T = LineFunctional(grid)
    got = T.apply(u).values()[0]
    from colombeau.fourier import gauss_legendre
    t, w = gauss_legendre(400)
    t, w = 2.0 * t, 2.0 * w
    oracle = np.sum(w * u.slice(0).eval(np.column_stack([t, -t])))
    assert abs(got - oracle) < 1e-10


def test_halfspace_support_check_requires_hint(grid):
    d = DeltaFunctional(grid, 1)
    with pytest.raises(ValueError):
        verify_halfspace_support(d, 0.5, [CompactNet.single(grid, [-2.0], 0.3)])
