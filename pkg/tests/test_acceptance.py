"""End-to-end acceptance checks with stated tolerances and runtime guards."""

import math
import time

import numpy as np
import pytest

from colombeau.epsnet import (
    EpsGrid,
    GenNumber,
    INF_VALUATION,
    ScaleExpr,
    classify_net,
    valuation,
    valuation_with_floor,
)
from colombeau.genpoly import (
    ellipticity_class,
    elliptic_lower_bound,
    weight_inequalities,
)
from colombeau.fourier import BumpFunction, CompactNet
from colombeau.fundsol import (
    LineFunctional,
    evolution_check,
    evolution_fundsol,
    first_order_operator,
    cr_fundsol,
    cr_operator,
    hormander_fundsol,
    laplace2d_fundsol,
    laplace2d_operator,
    ode_first_order_fundsol,
    ode_second_order_fundsol,
    second_order_operator,
    transpose_operator_slice,
    verify_delta,
    verify_halfspace_support,
)
from colombeau.analysis import (
    WeightK,
    bpk_convolution_check,
    bpk_norm,
    bpk_symbol_action,
    fl_of_spatial,
    freq_grid,
    structure_decompose,
)
from colombeau.fundsol import DeltaFunctional
from colombeau.cli import run_job
from conftest import make_poly


def const(grid, z):
    return GenNumber.constant(z, grid)


def power_net(grid, p, coeff=1.0):
    return GenNumber.symbolic(ScaleExpr.monomial(coeff, p, 0), grid)


class Timer:
    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.monotonic() - self.t0


# ---------------------------------------------------------------------------
# 1. Valuation exactness on randomized scale expressions
# ---------------------------------------------------------------------------

def test_valuation_exact_on_random_nets(grid):
    rng = np.random.default_rng(7)
    with Timer() as t:
        for _ in range(50):
            n_terms = rng.integers(1, 4)
            powers = rng.choice(np.arange(-6, 7) / 2.0, size=n_terms, replace=False)
            expr = ScaleExpr.zero()
            for p in powers:
                coeff = complex(rng.uniform(0.5, 3.0) * rng.choice([-1.0, 1.0]),
                                rng.uniform(-1.0, 1.0))
                expr = expr + ScaleExpr.monomial(coeff, float(p), int(rng.integers(0, 3)))
            exact = float(np.min(powers))
            sym = GenNumber.symbolic(expr, grid)
            est_sym = valuation(sym)
            assert est_sym.value == exact
            sampled = GenNumber.from_values(sym.values(), grid)
            est_smp = valuation(sampled)
            assert abs(est_smp.value - exact) <= 0.05
    assert t.elapsed < 1.0


# ---------------------------------------------------------------------------
# 2. Generalized zeros, null solution and the line functional
# ---------------------------------------------------------------------------

def battery_symbol(grid, r):
    return make_poly(grid, 2, {(1, 0): power_net(grid, r), (0, 1): 1j})


def constructed_zero(grid, r, c_prime):
    z1 = grid.array**c_prime + 1j * grid.array ** (c_prime - r)
    z2 = 1j * grid.array**r * z1
    return z1.astype(complex), z2.astype(complex)


def zero_residual(P, z1, z2):
    grid = P.grid
    pts = np.column_stack([z1, z2])
    return np.array([P.eval_points(pts[ei : ei + 1])[ei, 0] for ei in range(len(grid))])


def test_constructed_zeros_null_solution_and_line_functional(grid):
    r = 0.5
    P = battery_symbol(grid, r)
    with Timer() as t:
        # (i) exact zeros at every scale c', with |Re zeta| at that scale
        for c_prime in (-1.0, 0.0, 1.0):
            z1, z2 = constructed_zero(grid, r, c_prime)
            res = GenNumber.from_values(np.abs(zero_residual(P, z1, z2)).astype(complex), grid)
            neg = classify_net(res, "negligible_up_to", q=10.0)
            assert neg.passed
            re_mag = np.sqrt(z1.real**2 + z2.real**2)
            est = valuation(GenNumber.from_values(re_mag.astype(complex), grid))
            assert abs(est.value - c_prime) <= 0.05

        # (iii) the scale c' = -r reaches |Re zeta| ~ eps^-r ...
        z1, z2 = constructed_zero(grid, r, -r)
        re_mag = np.sqrt(z1.real**2 + z2.real**2)
        est = valuation(GenNumber.from_values(re_mag.astype(complex), grid))
        assert abs(est.value - (-r)) <= 0.05
        # ... and the matching exponential null solution has derivative growth
        # exceeding every single-N bound on the unit box: sup |d^alpha u_eps|
        # = e * eps^(-r alpha_1), so the fitted exponent grows with alpha_1.
        # P_eps(eps^-r, i) = 0 exactly: u = exp(i x1 eps^-r - x2) solves P(D)u = 0
        null_pts = np.column_stack([1.0 / grid.array**r,
                                    1j * np.ones(len(grid))]).astype(complex)
        null_resid = np.array([P.eval_points(null_pts[ei : ei + 1])[ei, 0]
                               for ei in range(len(grid))])
        assert np.max(np.abs(null_resid)) < 1e-12
        fitted = []
        for a1 in range(0, 7):
            sup = math.e * grid.array ** (-r * a1)
            estd = valuation(GenNumber.from_values(sup.astype(complex), grid))
            fitted.append(estd.value)
        for a1 in range(0, 7):
            assert abs(fitted[a1] - (-r * a1)) <= 0.05
        assert fitted[6] < fitted[0] - 2.5  # no single N bounds all orders

        # (iv) the anti-diagonal line functional is annihilated by D1 - D2
        Pline = make_poly(grid, 2, {(1, 0): 1.0, (0, 1): -1.0})
        T = LineFunctional(grid)
        worst = 0.0
        for center, radius in (([0.0, 0.0], 0.6), ([0.3, -0.2], 0.4)):
            u = CompactNet.single(grid, center, radius)
            for ei in (0, len(grid) // 2, len(grid) - 1):
                slc = transpose_operator_slice(Pline, ei, u.slice(ei))
                worst = max(worst, abs(T.action(ei, slc)))
        assert worst < 1e-8
    assert t.elapsed < 10.0


def test_zero_residual_is_exact_per_eps(grid):
    r = 0.5
    P = battery_symbol(grid, r)
    z1, z2 = constructed_zero(grid, r, -r)
    res = zero_residual(P, z1, z2)
    assert np.max(np.abs(res)) < 1e-12


# ---------------------------------------------------------------------------
# 3. Ellipticity classifier with validated lower bounds
# ---------------------------------------------------------------------------

def test_ellipticity_classifier_three_cases(grid):
    with Timer() as t:
        P1 = make_poly(grid, 2, {(1, 0): power_net(grid, 0.5), (0, 1): 1j})
        e1 = ellipticity_class(P1)
        assert e1.classification == "G_elliptic"
        elliptic_lower_bound(P1, e1, validation_samples=1000)  # 0 violations or raises

        slow = GenNumber.from_values((1.0 / (grid.log_inv + 2.0)).astype(complex), grid)
        P2 = make_poly(grid, 2, {(1, 0): slow, (0, 1): 1j})
        e2 = ellipticity_class(P2)
        assert e2.classification == "Ginf_elliptic"
        elliptic_lower_bound(P2, e2, validation_samples=1000)

        P3 = make_poly(grid, 2, {(1, 1): 1.0})
        assert ellipticity_class(P3).classification == "neither"
    assert t.elapsed < 5.0


# ---------------------------------------------------------------------------
# 4. Fundamental-solution identities
# ---------------------------------------------------------------------------

def test_fundamental_solution_identities(grid):
    with Timer() as t:
        tests1 = [CompactNet.single(grid, [0.0], 0.25),
                  CompactNet.single(grid, [0.05], 0.2)]

        # Heaviside / first order: analytically exact
        a = const(grid, 0.0)
        E = ode_first_order_fundsol(a, const(grid, 0.0))
        rep = verify_delta(E, first_order_operator(a), tests1, threshold=8, floor=1e-10)
        assert rep.passed
        assert float(np.max(np.abs(rep.residual.values()))) < 1e-10

        # second order through the matrix exponential
        b, c = const(grid, 1.0), const(grid, 5.0)
        E2 = ode_second_order_fundsol(b, c)
        rep2 = verify_delta(E2, second_order_operator(b, c), tests1,
                            threshold=8, floor=1e-9)
        assert rep2.passed

        # plane kernels
        tests2 = [CompactNet.single(grid, [0.0, 0.0], 0.4),
                  CompactNet.single(grid, [0.1, -0.05], 0.3)]
        a1, b1 = const(grid, 1.0), const(grid, 1.0)
        repc = verify_delta(cr_fundsol(a1, b1), cr_operator(a1, b1), tests2,
                            threshold=5, floor=1e-5)
        assert repc.passed
        repl = verify_delta(laplace2d_fundsol(a1, const(grid, 2.0)),
                            laplace2d_operator(a1, const(grid, 2.0)),
                            [tests2[0]], threshold=4, floor=1e-4)
        assert repl.passed

        # weight-partition quadrature construction on the line
        wide = [CompactNet.single(grid, [0.0], 0.5),
                CompactNet.single(grid, [0.05], 0.6)]
        for coeffs in ({(1,): 1j}, {(1,): 1j, (0,): -1j}):  # P = D and P = D - i
            P = make_poly(grid, 1, coeffs)
            cert = weight_inequalities(P, np.zeros(1))
            _, EH = hormander_fundsol(P, 1.0, cert)
            reph = verify_delta(EH, P, wide, threshold=6, floor=1e-6)
            assert reph.passed
            # per-eps residual below 1e-6 at fixed eps
            assert all(pt["max_residual"] < 1e-6 for pt in reph.per_test)

        # heat evolution solution in the plane
        Ph = make_poly(grid, 2, {(2, 0): 1.0, (0, 1): 1j})
        evo = evolution_check(Ph, const(grid, 1.0), -1.0)
        assert evo.passed
        Eh = evolution_fundsol(Ph, evo, c_prime=-4.0)
        testsh = [CompactNet.single(grid, [0.0, 0.5], 0.4)]
        reph = verify_delta(Eh, Ph, testsh, threshold=5, floor=1e-5)
        assert reph.passed
    assert t.elapsed < 180.0


# ---------------------------------------------------------------------------
# 5. Evolution halfspace support and contour-shift independence
# ---------------------------------------------------------------------------

def test_evolution_support_and_contour_independence(grid):
    with Timer() as t:
        P = make_poly(grid, 2, {(2, 0): 1.0, (0, 1): 1j})
        evo = evolution_check(P, const(grid, 1.0), -1.0)
        E1 = evolution_fundsol(P, evo, c_prime=-4.0)
        below = [CompactNet.single(grid, [0.0, -1.0], 0.3)]
        rep = verify_halfspace_support(E1, 0.5, below, threshold=6, floor=1e-9)
        assert rep.passed

        # the action does not depend on the admissible contour shift
        E2 = evolution_fundsol(P, evo, c_prime=-2.0)
        probe = CompactNet.single(grid, [0.0, 0.5], 0.4)
        v1 = E1.apply(probe).values()
        v2 = E2.apply(probe).values()
        assert np.max(np.abs(v1 - v2)) < 1e-5
    assert t.elapsed < 120.0


# ---------------------------------------------------------------------------
# 6. Weighted sup-norm bound of the quadrature solution
# ---------------------------------------------------------------------------

def test_kernel_weighted_norm_has_no_eps_growth(grid):
    with Timer() as t:
        P = make_poly(grid, 1, {(1,): 1j, (0,): -1j})  # P = D - i
        cert = weight_inequalities(P, np.zeros(1))
        _, E = hormander_fundsol(P, 1.0, cert)
        xs = np.linspace(-4.0, 4.0, 501)
        c_growth = 0.5
        xi, w = freq_grid(20.0, 401, 1)
        kernels = np.empty((len(grid), len(xs)), dtype=complex)
        for ei in range(len(grid)):
            if ei > 0 and P.is_classical():
                kernels[ei] = kernels[0]
                continue
            kernels[ei] = E.kernel_on_grid(ei, xs[:, None])
        weighted = kernels / np.cosh(c_growth * np.abs(xs))[None, :]
        fl = fl_of_spatial(xs, weighted, xi)
        _, certn = bpk_norm(fl, grid, xi, w, math.inf, WeightK.one(),
                            weight_poly=P)
        b = 0.0 if certn.b == -math.inf else certn.b
        assert b <= 0.05
    assert t.elapsed < 60.0


# ---------------------------------------------------------------------------
# 7. Convolution norm inequality and exponent transfer
# ---------------------------------------------------------------------------

def test_convolution_inequality_and_exponent_transfer(grid):
    rng = np.random.default_rng(11)
    with Timer() as t:
        for trial in range(20):
            c1 = float(rng.uniform(-0.4, 0.4))
            c2 = float(rng.uniform(-0.4, 0.4))
            r1 = float(rng.uniform(0.2, 0.6))
            r2 = float(rng.uniform(0.2, 0.6))
            p1 = float(rng.choice([0.0, 1.0, 2.0]))
            T1 = CompactNet.single(grid, [c1], r1,
                                   multiplier=power_net(grid, -p1))
            T2 = CompactNet.single(grid, [c2], r2)
            k1 = WeightK.bracket(float(rng.choice([0.0, 1.0])))
            k2 = WeightK.one()
            P = make_poly(grid, 1, {(2,): -1.0, (0,): 1.0})
            rep = bpk_convolution_check(T1, T2, k1, k2, P, p=2,
                                        radius=25.0, points=401)
            assert rep["violations"] == 0

        # exponent transfer: for a degree-zero symbol |P| equals its weight,
        # so the action shifts the exponent by exactly the symbol's growth
        T = CompactNet.single(grid, [0.0], 0.5)
        P0 = make_poly(grid, 1, {(0,): power_net(grid, -1.0)})
        rep = bpk_symbol_action(P0, T, WeightK.one())
        assert rep["pointwise_bound_ok"]
        assert abs(rep["b_out"] - rep["b_in_weighted"]) <= 0.1
    assert t.elapsed < 60.0


# ---------------------------------------------------------------------------
# 8. Structure representatives of the point mass and its derivative
# ---------------------------------------------------------------------------

def test_structure_representatives_and_scaling(grid):
    with Timer() as t:
        d0 = DeltaFunctional(grid, 1)
        r0 = structure_decompose(d0, k=2, points=1601,
                                 verify_test=BumpFunction([0.1], 0.3))
        assert r0.fd_error < 1e-4

        d1 = DeltaFunctional(grid, 1, order=(1,))
        r1 = structure_decompose(d1, k=3, order=1, points=6401,
                                 verify_test=BumpFunction([0.1], 0.3))
        assert r1.fd_error < 1e-4

        scaled = DeltaFunctional(grid, 1, multiplier=power_net(grid, -3.0))
        rs = structure_decompose(scaled, k=2, points=801)
        base = structure_decompose(d0, k=2, points=801)
        assert abs((rs.N_prime - base.N_prime) - 3.0) <= 0.2
    assert t.elapsed < 30.0


# ---------------------------------------------------------------------------
# 9. Deterministic job reruns
# ---------------------------------------------------------------------------

def test_job_reruns_are_byte_identical(tmp_path):
    spec = {
        "operator": {"preset": "cr"},
        "tasks": ["classify", "weight", "fundsol", "verify", "solve"],
        "grid": {"kmin": 4, "kmax": 30},
    }
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert run_job(spec, out1, seed=0) == 0
    assert run_job(spec, out2, seed=0) == 0
    files1 = sorted(p.name for p in out1.iterdir())
    files2 = sorted(p.name for p in out2.iterdir())
    assert files1 == files2 and files1
    for name in files1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
