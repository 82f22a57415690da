"""Solvability, weighted-norm machinery, parametrices, and structure results.

Operations: solve ``P(D)u = v`` through a verified fundamental solution and
check the residual / support bound; weighted frequency-side norms with
tempered weights and the optional symbol-weight net, with moderateness fits;
the convolution-norm inequality check; high-frequency parametrices for
elliptic symbols with the cutoff-net growth table; singular-support probing
of explicit kernels; the ansatz zero search with the two necessary-condition
checks; and the finite-order structure decomposition through the iterated
ramp kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from colombeau.epsnet import (
    Certificate,
    CertificateError,
    EpsGrid,
    GenNumber,
    INF_VALUATION,
    ValuationEstimate,
    classify_net,
    valuation,
    valuation_with_floor,
)
from colombeau.genpoly import EllipticityResult, GenPolynomial, weight_values
from colombeau.fourier import (
    BumpFunction,
    CombSlice,
    CompactNet,
    TestSlice,
    TransformedSlice,
    _smoothstep_coeffs,
    box_quadrature,
    fl_slice_transform,
    gauss_legendre,
    slice_quadrature,
)
from colombeau.fundsol import FunctionalNet

__all__ = [
    "WeightK",
    "BpkCert",
    "GenZero",
    "ConvolveSolution",
    "convolve_solve",
    "freq_grid",
    "fl_of_compact",
    "fl_of_spatial",
    "bpk_norm",
    "bpk_convolution_check",
    "bpk_symbol_action",
    "CutoffPhi",
    "cutoff_growth_table",
    "parametrix",
    "singular_support_probe",
    "zero_search",
    "structure_decompose",
]


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightK:
    """Tempered weight (1 + |xi|)^s (products collapse to the summed power).

    The temperedness constants (C, N) in ``k(xi+eta) <= (1+C|xi|)^N k(eta)``
    are C = 1, N = ceil(|s|).
    """

    power: float = 0.0

    @classmethod
    def one(cls) -> "WeightK":
        return cls(0.0)

    @classmethod
    def bracket(cls, s: float) -> "WeightK":
        return cls(float(s))

    def __mul__(self, other: "WeightK") -> "WeightK":
        return WeightK(self.power + other.power)

    def eval(self, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(xi)
        return (1.0 + np.linalg.norm(xi, axis=1)) ** self.power

    @property
    def tempered_constants(self) -> tuple[float, int]:
        return 1.0, int(math.ceil(abs(self.power)))


@dataclass
class BpkCert:
    p: Union[int, float]
    k: WeightK
    uses_weight_net: bool
    b: float
    window: tuple[int, int]
    r_squared: float


# ---------------------------------------------------------------------------
# Frequency grids and transforms of inputs
# ---------------------------------------------------------------------------

def freq_grid(radius: float, points_per_axis: int, dim: int = 1):
    """Uniform tensor grid on [-radius, radius]^dim with trapezoid weights."""
    axis = np.linspace(-radius, radius, points_per_axis)
    h = axis[1] - axis[0]
    w_axis = np.full(points_per_axis, h)
    w_axis[0] = w_axis[-1] = h / 2.0
    if dim == 1:
        return axis[:, None], w_axis
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    wg = np.meshgrid(*([w_axis] * dim), indexing="ij")
    w = np.ones(pts.shape[0])
    for g in wg:
        w *= g.ravel()
    return pts, w


def fl_of_compact(u: CompactNet, xi_pts: np.ndarray, order: int = 64) -> np.ndarray:
    """Transform values of a compact net on real frequencies, (n_eps, n_xi)."""
    out = np.empty((len(u.grid), xi_pts.shape[0]), dtype=complex)
    prev = None
    for ei in range(len(u.grid)):
        mult = u.mult_values()[:, ei]
        if prev is not None and np.array_equal(mult, prev[0]):
            out[ei] = prev[1]
            continue
        vals = fl_slice_transform(u.slice(ei), xi_pts.astype(complex), order=order)
        out[ei] = vals
        prev = (mult, vals)
    return out


def fl_of_spatial(x_grid: np.ndarray, values: np.ndarray, xi_pts: np.ndarray) -> np.ndarray:
    """Trapezoid transform of sampled line data: values (n_eps, n_x) -> (n_eps, n_xi)."""
    h = x_grid[1] - x_grid[0]
    w = np.full(x_grid.shape[0], h)
    w[0] = w[-1] = h / 2.0
    phase = np.exp(-1j * np.outer(x_grid, xi_pts[:, 0]))
    return (values * w[None, :]) @ phase


# ---------------------------------------------------------------------------
# B_{p,k} norms
# ---------------------------------------------------------------------------

def bpk_norm(
    fl_values: np.ndarray,
    grid: EpsGrid,
    xi_pts: np.ndarray,
    xi_weights: np.ndarray,
    p: Union[int, float],
    k: WeightK,
    weight_poly: Optional[GenPolynomial] = None,
) -> tuple[np.ndarray, BpkCert]:
    """Weighted frequency norm per eps and the fitted moderateness exponent.

    ``(2 pi)^-n ||k (Pt_eps) fl||_p`` on the supplied grid; p = inf uses the
    grid maximum, a lower bound of the true sup.  The certificate's b is the
    fitted exponent in O(eps^-b) over the small-eps half of the grid.
    """
    dim = xi_pts.shape[1]
    kvals = k.eval(xi_pts)
    integrand = np.abs(fl_values) * kvals[None, :]
    if weight_poly is not None:
        wt = weight_values(weight_poly, xi_pts)
        if wt.shape[0] == 1 or weight_poly.is_classical():
            integrand = integrand * wt[:1]
        else:
            integrand = integrand * wt
    two_pi_n = (2.0 * math.pi) ** dim
    if p == math.inf or p == "inf":
        norms = np.max(integrand, axis=1) / two_pi_n
    elif p == 1:
        norms = integrand @ xi_weights / two_pi_n
    elif p == 2:
        norms = np.sqrt((integrand**2) @ xi_weights) / two_pi_n
    else:
        raise ValueError("p must be 1, 2 or inf")
    net = GenNumber.from_values(norms.astype(complex), grid)
    est = valuation(net)
    b = -math.inf if est.value == INF_VALUATION else -est.value
    cert = BpkCert(p, k, weight_poly is not None, b, est.window, est.r_squared)
    return norms, cert


def bpk_convolution_check(
    T1: CompactNet,
    T2: CompactNet,
    k1: WeightK,
    k2: WeightK,
    Pnet: GenPolynomial,
    p: Union[int, float] = 2,
    radius: float = 40.0,
    points: int = 801,
) -> dict:
    """Frequency-side check of the convolution-norm inequality.

    LHS ``||k1 k2 Pt fl(T1) fl(T2)||_p``, RHS ``||k1 Pt fl(T1)||_p *
    sup |k2 fl(T2)|``, both on the shared grid where the pointwise bound
    makes the inequality exact; reports per-eps slack, violations (expected
    zero) and the inherited exponent b1 + b2.
    """
    grid = T1.grid
    dim = T1.dim
    xi, w = freq_grid(radius, points, dim)
    F1 = fl_of_compact(T1, xi)
    F2 = fl_of_compact(T2, xi)
    lhs, cert_lhs = bpk_norm(F1 * F2, grid, xi, w, p, k1 * k2, weight_poly=Pnet)
    rhs1, cert1 = bpk_norm(F1, grid, xi, w, p, k1, weight_poly=Pnet)
    sup2, cert2 = bpk_norm(F2, grid, xi, w, math.inf, k2)
    rhs = rhs1 * sup2 * (2.0 * math.pi) ** dim  # sup norm carries no (2 pi)^-n here
    slack = rhs - lhs
    violations = int(np.sum(slack < -1e-12 * np.maximum(rhs, 1e-300)))
    return {
        "lhs": lhs,
        "rhs": rhs,
        "violations": violations,
        "b_lhs": cert_lhs.b,
        "b1": cert1.b,
        "b2": cert2.b,
        "b_inherited": cert1.b + cert2.b,
    }


def bpk_symbol_action(
    P: GenPolynomial,
    T: CompactNet,
    k: WeightK,
    p: Union[int, float] = 2,
    radius: float = 40.0,
    points: int = 801,
) -> dict:
    """Moderateness transfer under the symbol action P_eps(D)T.

    ``||k P fl(T)||_p <= ||k Pt fl(T)||_p`` pointwise (|P| <= Pt), so the
    output exponent without the weight net is at most the weighted input
    exponent.
    """
    grid = T.grid
    xi, w = freq_grid(radius, points, T.dim)
    F = fl_of_compact(T, xi)
    Pv = P.eval_points(xi)
    out, cert_out = bpk_norm(np.abs(Pv) * np.abs(F), grid, xi, w, p, k)
    inp, cert_in = bpk_norm(F, grid, xi, w, p, k, weight_poly=P)
    wt = weight_values(P, xi)
    pointwise_ok = bool(np.all(np.abs(Pv) <= wt * (1.0 + 1e-12)))
    return {
        "b_out": cert_out.b,
        "b_in_weighted": cert_in.b,
        "pointwise_bound_ok": pointwise_ok,
        "norms_out": out,
        "norms_in": inp,
    }


# ---------------------------------------------------------------------------
# Parametrix
# ---------------------------------------------------------------------------

class CutoffPhi:
    """Radial cutoff: 0 on |t| <= 1, 1 on |t| >= 2, C^k ramp between."""

    def __init__(self, k: int = 8):
        self.k = k
        self._ramp = np.array(_smoothstep_coeffs(k)[::-1])  # highest power first

    def eval(self, t: np.ndarray) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        out = np.where(t >= 2.0, 1.0, 0.0)
        mid = (t > 1.0) & (t < 2.0)
        out = np.where(mid, np.polyval(self._ramp, np.clip(t - 1.0, 0.0, 1.0)), out)
        return out

    def deriv(self, t: np.ndarray, order: int) -> np.ndarray:
        if order == 0:
            return self.eval(t)
        t = np.asarray(t, dtype=float)
        sgn = np.sign(t) ** order
        a = np.abs(t)
        poly = np.polyder(self._ramp, order)
        mid = (a > 1.0) & (a < 2.0)
        out = np.zeros_like(a)
        out[mid] = np.polyval(poly, a[mid] - 1.0)
        return out * sgn


def cutoff_growth_table(
    scale: GenNumber,
    j_max: int = 2,
    weight_powers: Sequence[int] = (0, 1, 2, 3),
    phi: Optional[CutoffPhi] = None,
) -> dict:
    """Growth table of the net ``g_eps = phi(scale_eps xi) - 1``.

    For each derivative order j and polynomial weight power Mw, fits the
    valuation of ``sup (1+|xi|)^Mw |d^j g_eps|``; the net is uniformly
    tempered (single N for all seminorms) iff all fitted N agree.
    """
    phi = phi or CutoffPhi()
    grid = scale.grid
    sv = np.abs(scale.values().real)
    if np.any(sv <= 0):
        raise ValueError("scale net must be positive")
    table = {}
    Ns = []
    for j in range(j_max + 1):
        for Mw in weight_powers:
            # sup over xi: the cutoff transition lives on |xi| in [1/s, 2/s];
            # g itself is -1 on |xi| <= 1/s.
            sups = np.empty(len(grid))
            for ei in range(len(grid)):
                s = sv[ei]
                hi = 2.0 / s
                t = np.linspace(0.0, hi, 512)
                if j == 0:
                    gv = phi.eval(s * t) - 1.0
                else:
                    gv = phi.deriv(s * t, j) * s**j
                sups[ei] = float(np.max((1.0 + t) ** Mw * np.abs(gv)))
            net = GenNumber.from_values(sups.astype(complex), grid)
            est = valuation_with_floor(net, 1e-280)
            val = est.value
            N = 0 if val == INF_VALUATION else int(max(0, math.ceil(-val - 0.05)))
            table[(j, Mw)] = {"valuation": val, "N": N}
            Ns.append(N)
    single = len(set(Ns)) == 1
    return {"table": table, "single_N": single, "N_max": max(Ns), "class": "uniform" if single else "per_seminorm"}


class ParametrixFunctional(FunctionalNet):
    """High-frequency spectral parametrix on the line.

    Action integrates ``phi(scale_eps xi) FL(u(-.))(xi) / P_eps(xi)`` over the
    band where the cutoff is active and the test transform is numerically
    resolvable; contributions beyond the analytic decay bound of the transform
    are dropped as exact zeros within the documented floor.
    """

    def __init__(self, P: GenPolynomial, scale: GenNumber, phi: CutoffPhi,
                 quad_order: int = 256, decay_cap: float = 1e-18):
        super().__init__(P.grid)
        if P.dim != 1:
            raise ValueError("parametrix quadrature implemented for n = 1")
        self.P = P
        self.scale = scale
        self.phi = phi
        self.dim = 1
        self.quad_order = quad_order
        self.decay_cap = decay_cap

    def _band_cap(self, test: TestSlice) -> float:
        # |fl(u)|(xi) <~ (r |xi|)^-(k+1); beyond this radius the contribution
        # is below decay_cap and is dropped.
        r = max(test.support_radius, 1e-3)
        kk = 9.0
        return (self.decay_cap ** (-1.0 / kk)) / r

    def action(self, eps_index: int, test: TestSlice) -> complex:
        s = float(np.abs(self.scale.values()[eps_index].real))
        A = 1.0 / s
        cap = self._band_cap(test)
        if A >= cap:
            return 0.0 + 0.0j
        hi = cap
        x, w = gauss_legendre(self.quad_order)
        total = 0.0 + 0.0j
        spatial = max(96, int(hi * max(test.support_radius, 0.1)))
        spatial = min(spatial, 1024)
        for sign in (-1.0, 1.0):
            a0, b0 = (A, hi) if sign > 0 else (-hi, -A)
            cuts = np.unique(np.clip([a0, sign * 2.0 * A, b0], a0, b0))
            for aa, bb in zip(cuts[:-1], cuts[1:]):
                if bb <= aa:
                    continue
                mid, half = 0.5 * (aa + bb), 0.5 * (bb - aa)
                xi = mid + half * x
                phiv = self.phi.eval(s * xi)
                F = fl_slice_transform(test, (-xi).astype(complex)[:, None], order=spatial)
                Pv = self.P.eval_points(xi[:, None])[eps_index]
                total += half * np.sum(w * phiv * F / Pv)
        return complex(total / (2.0 * math.pi))

    def remainder_pair(self, eps_index: int, test: TestSlice) -> complex:
        """<v, u> with v the inverse transform of (phi(scale xi) - 1)."""
        s = float(np.abs(self.scale.values()[eps_index].real))
        A = 1.0 / s
        cap = min(2.0 * A, self._band_cap(test))
        x, w = gauss_legendre(self.quad_order)
        spatial = max(96, min(int(cap * max(test.support_radius, 0.1)), 1024))
        total = 0.0 + 0.0j
        for sign in (-1.0, 1.0):
            a0, b0 = (0.0, cap) if sign > 0 else (-cap, 0.0)
            mid, half = 0.5 * (a0 + b0), 0.5 * (b0 - a0)
            xi = mid + half * x
            phiv = self.phi.eval(s * xi)
            F = fl_slice_transform(test, (-xi).astype(complex)[:, None], order=spatial)
            total += half * np.sum(w * (phiv - 1.0) * F)
        return complex(total / (2.0 * math.pi))

    def remainder_transform_outside(self, eps_index: int, radius_factor: float = 1.001,
                                    samples: int = 64) -> float:
        """max |phi(scale xi) - 1| outside the cutoff ball (must vanish)."""
        s = float(np.abs(self.scale.values()[eps_index].real))
        xi = np.linspace(radius_factor * 2.0 / s, 4.0 / s, samples)
        return float(np.max(np.abs(self.phi.eval(s * xi) - 1.0)))


def parametrix(
    P: GenPolynomial,
    ell: EllipticityResult,
    bound: dict,
    phi: Optional[CutoffPhi] = None,
) -> tuple[ParametrixFunctional, GenNumber]:
    """Spectral parametrix for an elliptic symbol, plus the cutoff scale net.

    The first ellipticity class uses the scale ``eps^M`` from the validated
    lower bound; the slow-scale class uses ``1/s_eps`` with s from the bound.
    Returns the functional and the scale net (the remainder is the inverse
    transform of ``phi(scale xi) - 1``, frequency-supported in the cutoff
    ball of radius ``2/scale``).
    """
    phi = phi or CutoffPhi()
    grid = P.grid
    if ell.classification == "G_elliptic":
        M = float(bound[1])
        scale = GenNumber.from_values((grid.array**M).astype(complex), grid)
    elif ell.classification == "Ginf_elliptic":
        s_vals = np.maximum(np.abs(bound[1].values().real), 1.0)
        scale = GenNumber.from_values((1.0 / s_vals).astype(complex), grid)
    else:
        raise CertificateError("parametrix requires an elliptic classification")
    return ParametrixFunctional(P, scale, phi), scale


def parametrix_identity_residual(
    F: ParametrixFunctional,
    P: GenPolynomial,
    tests: Sequence[CompactNet],
    floor: float = 1e-8,
) -> tuple[GenNumber, ValuationEstimate]:
    """Residual net of F(tP(D)u) - u(0) - <v, u> over the tests."""
    from colombeau.fundsol import transpose_operator_slice

    grid = F.grid
    worst = np.zeros(len(grid))
    for u in tests:
        res = np.empty(len(grid), dtype=complex)
        for ei in range(len(grid)):
            slc = transpose_operator_slice(P, ei, u.slice(ei))
            res[ei] = (
                F.action(ei, slc)
                - u.eval0()[ei]
                - F.remainder_pair(ei, u.slice(ei))
            )
        worst = np.maximum(worst, np.abs(res))
    net = GenNumber.from_values(worst.astype(complex), grid)
    return net, valuation_with_floor(net, floor)


# ---------------------------------------------------------------------------
# Convolution solve
# ---------------------------------------------------------------------------

@dataclass
class ConvolveSolution:
    x_grid: list[np.ndarray]  # per-axis nodes
    values: np.ndarray  # (n_eps, *grid shape)
    residual: float
    support_ok: Optional[bool]
    support_max: Optional[float]
    warnings: list[str] = field(default_factory=list)


def _fd_partial(values: np.ndarray, axis: int, order: int, h: float) -> np.ndarray:
    """Centered 4th-order finite-difference partial along one grid axis."""
    v = np.moveaxis(values, axis, -1)
    out = np.full_like(v, np.nan)
    if order == 1:
        out[..., 2:-2] = (-v[..., 4:] + 8 * v[..., 3:-1] - 8 * v[..., 1:-3] + v[..., :-4]) / (12 * h)
    elif order == 2:
        out[..., 2:-2] = (
            -v[..., 4:] + 16 * v[..., 3:-1] - 30 * v[..., 2:-2] + 16 * v[..., 1:-3] - v[..., :-4]
        ) / (12 * h * h)
    else:
        raise ValueError("finite-difference orders 1 and 2 only")
    return np.moveaxis(out, -1, axis)


_STENCIL_1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_STENCIL_2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _solve_at(E: FunctionalNet, v: CompactNet, pts: np.ndarray) -> np.ndarray:
    """u = E * v at the given points, (n_eps, n_pts)."""
    n_eps = len(v.grid)
    if hasattr(E, "solve_on_points"):
        return E.solve_on_points(v, pts)
    out = np.empty((n_eps, pts.shape[0]), dtype=complex)
    classical_v = bool(np.max(np.abs(v.mult_values() - v.mult_values()[:, :1])) == 0.0)
    fast = E.eps_invariant and classical_v
    for ei in range(n_eps):
        if fast and ei > 0:
            out[ei] = out[0]
            continue
        base = v.slice(ei)
        for j in range(pts.shape[0]):
            out[ei, j] = E.action(ei, TransformedSlice(base, shift=pts[j], reflect=True))
    return out


def convolve_solve(
    P: GenPolynomial,
    v: CompactNet,
    E: FunctionalNet,
    x_grid: Optional[list[np.ndarray]] = None,
    verified: bool = True,
    support_margin: float = 0.25,
    probe_eps_indices: Optional[Sequence[int]] = None,
    probe_points: Optional[np.ndarray] = None,
    fd_spacing: float = 2e-3,
) -> ConvolveSolution:
    """u = E * v on an output grid, with the operator residual by differences.

    ``u_eps(x) = E_eps(v_eps(x - .))``; the residual is the max over probe
    points and probed eps indices of ``|P_eps(D)u_eps - v_eps|`` with
    4th-order centered cross stencils of spacing ``fd_spacing`` (independent
    of the display grid).  With a halfspace support hint on E, also checks
    that u vanishes below the lower edge of supp v minus the margin.
    """
    warnings = []
    if not verified:
        warnings.append("fundamental solution not verified")
    dim = v.dim
    lo = np.array([min(b.center[i] - b.radius for _, b in v.terms) for i in range(dim)])
    hi = np.array([max(b.center[i] + b.radius for _, b in v.terms) for i in range(dim)])
    if x_grid is None:
        pad = 1.0
        x_grid = [np.linspace(lo[i] - pad, hi[i] + pad, 33) for i in range(dim)]
    shape = tuple(len(ax) for ax in x_grid)
    mesh = np.meshgrid(*x_grid, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    n_eps = len(v.grid)
    values = _solve_at(E, v, pts).reshape((n_eps,) + shape)
    # residual P(D)u - v at probe points with tight independent stencils
    if probe_eps_indices is None:
        probe_eps_indices = [0, n_eps // 2, n_eps - 1]
    if probe_points is None:
        frac = np.array([0.15, 0.4, 0.65, 0.85])
        probe_points = np.column_stack([lo[i] + frac * (hi[i] - lo[i]) for i in range(dim)])
    probe_points = np.atleast_2d(probe_points)
    h = fd_spacing
    offsets = np.arange(-2, 3) * h
    stencil_pts = [probe_points]
    for axis_i in range(dim):
        for off in offsets:
            if off == 0.0:
                continue
            shifted = probe_points.copy()
            shifted[:, axis_i] += off
            stencil_pts.append(shifted)
    all_pts = np.concatenate(stencil_pts)
    u_st = _solve_at(E, v, all_pts)
    n_probe = probe_points.shape[0]
    # unpack: u_center, then 4 shifts per axis in offset order (-2h,-h,h,2h)
    u_center = u_st[:, :n_probe]
    per_axis = {}
    pos = n_probe
    for axis_i in range(dim):
        cols = []
        for off in offsets:
            if off == 0.0:
                cols.append(u_center)
                continue
            cols.append(u_st[:, pos : pos + n_probe])
            pos += n_probe
        per_axis[axis_i] = np.stack(cols)  # (5, n_eps, n_probe)
    cvals = P.coeff_values()
    residual = 0.0
    for ei in probe_eps_indices:
        acc = np.zeros(n_probe, dtype=complex)
        for alpha, av in cvals.items():
            tot = sum(alpha)
            if tot == 0:
                term = u_center[ei]
            else:
                axes_used = [i for i, p_ord in enumerate(alpha) if p_ord]
                if len(axes_used) != 1:
                    raise ValueError("residual check supports single-axis monomials")
                axis_i = axes_used[0]
                p_ord = alpha[axis_i]
                if p_ord == 1:
                    term = np.tensordot(_STENCIL_1, per_axis[axis_i][:, ei], axes=(0, 0)) / h
                elif p_ord == 2:
                    term = np.tensordot(_STENCIL_2, per_axis[axis_i][:, ei], axes=(0, 0)) / h**2
                else:
                    raise ValueError("residual check supports derivative order <= 2 per axis")
            acc = acc + av[ei] * (-1j) ** tot * term
        vv = v.slice(ei).eval(probe_points)
        residual = max(residual, float(np.max(np.abs(acc - vv))))
    support_ok = None
    support_max = None
    if E.support_hint and E.support_hint.get("type") == "halfspace":
        axis = E.support_hint["axis"]
        edge = min(b.center[axis] - b.radius for _, b in v.terms)
        mask = mesh[axis] < edge - support_margin
        if np.any(mask):
            support_max = float(np.max(np.abs(values[:, mask])))
            support_ok = support_max < 1e-6
    return ConvolveSolution([np.asarray(a) for a in x_grid], values, residual,
                            support_ok, support_max, warnings)


# ---------------------------------------------------------------------------
# Singular support probe
# ---------------------------------------------------------------------------

def singular_support_probe(
    kernel,
    annuli: Sequence[tuple[float, float]],
    j_max: int = 3,
    samples: int = 48,
) -> dict:
    """Valuation table of sup |d^alpha E_eps| per annulus and order.

    ``kernel`` exposes ``deriv(alpha, eps_index, pts)``, ``dim`` and ``grid``.
    Verdicts: regular (all valuations finite), uniformly regular (a single
    moderateness exponent bounds all orders), classical (all valuations
    >= -0.05).
    """
    grid = kernel.grid
    dim = kernel.dim
    table = {}
    all_N = {}
    for (r0, r1) in annuli:
        radii = np.linspace(r0, r1, 6)
        if dim == 1:
            pts = np.concatenate([radii, -radii])[:, None]
        else:
            ang = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
            pts = np.concatenate([
                np.column_stack([rr * np.cos(ang), rr * np.sin(ang)]) for rr in radii
            ])
        for j in range(j_max + 1):
            alphas = [a for a in _alphas(dim, j)]
            sups = np.zeros(len(grid))
            for alpha in alphas:
                for ei in range(len(grid)):
                    sups[ei] = max(sups[ei], float(np.max(np.abs(kernel.deriv(alpha, ei, pts)))))
            net = GenNumber.from_values(sups.astype(complex), grid)
            est = valuation_with_floor(net, 1e-280)
            val = est.value
            N = 0 if val == INF_VALUATION else int(max(0, math.ceil(-val - 0.05)))
            table[((r0, r1), j)] = {"valuation": val, "N": N}
            all_N.setdefault(j, 0)
            all_N[j] = max(all_N[j], N)
    finite = all(v["valuation"] > -50.0 for v in table.values())
    single = len(set(all_N.values())) == 1
    classical = all(v["valuation"] >= -0.05 for v in table.values())
    verdict = (
        "classical" if classical else
        "uniformly_regular" if finite and single else
        "regular" if finite else
        "irregular"
    )
    return {"table": table, "N_per_order": all_N, "verdict": verdict}


def _alphas(dim: int, total: int):
    from itertools import product as _product

    return [a for a in _product(range(total + 1), repeat=dim) if sum(a) == total]


# ---------------------------------------------------------------------------
# Zero search
# ---------------------------------------------------------------------------

@dataclass
class GenZero:
    zeta: tuple[GenNumber, ...]
    residual: GenNumber
    residual_valuation: float
    im_log_type: bool
    im_certs: tuple[Certificate, ...]
    re_valuation: ValuationEstimate
    ansatz: str


def zero_search(
    P: GenPolynomial,
    ansatz: Optional[Sequence[GenNumber]] = None,
    c_prime_grid: Sequence[float] = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0),
    residual_order: float = 10.0,
) -> tuple[list[GenZero], dict]:
    """Solve the last coordinate exactly from first-coordinate ansatz nets.

    Plane symbols only; the equation is at most quadratic in the solved
    coordinate.  Solutions are kept when |P(zeta)| is negligible to the
    configured order; the report evaluates both necessary conditions
    (log-type imaginary part for membership, and nonnegative valuation of
    |Re zeta| for the uniform class) and flags violations.
    """
    if P.dim != 2:
        raise ValueError("zero search implemented for plane symbols")
    grid = P.grid
    if ansatz is None:
        ansatz = []
        r_set = {0.0}
        for c in P.coeffs.values():
            est = valuation(c)
            if est.value != INF_VALUATION and abs(est.value) > 0.01:
                r_set.add(round(abs(est.value), 6))
        for cp in c_prime_grid:
            for r in sorted(r_set):
                vals = grid.array**cp * (1.0 + 1j * grid.array ** (-r))
                ansatz.append(GenNumber.from_values(vals.astype(complex), grid))
                if r > 0:
                    vals2 = grid.array ** (-r) + 1j * np.ones(len(grid))
                    ansatz.append(GenNumber.from_values(vals2.astype(complex), grid))
            # classical imaginary part at every real scale
            vals3 = grid.array**cp + 1j * np.ones(len(grid))
            ansatz.append(GenNumber.from_values(vals3.astype(complex), grid))
    zeros: list[GenZero] = []
    cvals = P.coeff_values()
    deg2 = max((a[1] for a in P.coeffs), default=0)
    if deg2 == 0:
        return [], {"note": "no dependence on the solved coordinate", "zeros": 0}
    for idx, z1 in enumerate(ansatz):
        z1v = z1.values()
        # coefficients of the polynomial in zeta_2 per eps
        coef = np.zeros((deg2 + 1, len(grid)), dtype=complex)
        for alpha, av in cvals.items():
            coef[alpha[1]] += av * z1v ** alpha[0]
        branches: list[np.ndarray] = []
        if deg2 == 1:
            if np.any(np.abs(coef[1]) < 1e-300):
                continue
            branches.append(-coef[0] / coef[1])
        elif deg2 == 2:
            a2, a1, a0 = coef[2], coef[1], coef[0]
            if np.any(np.abs(a2) < 1e-300):
                continue
            disc = np.sqrt(a1 * a1 - 4.0 * a2 * a0)
            branches.append((-a1 + disc) / (2.0 * a2))
            branches.append((-a1 - disc) / (2.0 * a2))
        else:
            continue
        for z2v in branches:
            pts = np.column_stack([z1v, z2v])
            res = np.array([P.eval_points(pts[ei : ei + 1])[ei, 0] for ei in range(len(grid))])
            res_net = GenNumber.from_values(res, grid)
            scale = float(np.max(np.abs(z1v)) + np.max(np.abs(z2v)))
            est = valuation_with_floor(res_net, 1e-12 * max(scale, 1.0))
            if est.value < residual_order:
                continue
            im1 = GenNumber.from_values(z1v.imag.astype(complex), grid)
            im2 = GenNumber.from_values(z2v.imag.astype(complex), grid)
            c1 = classify_net(im1, "log_type")
            c2 = classify_net(im2, "log_type")
            re_mag = np.sqrt(z1v.real**2 + z2v.real**2)
            re_est = valuation(GenNumber.from_values(re_mag.astype(complex), grid))
            zeros.append(GenZero(
                zeta=(z1, GenNumber.from_values(z2v, grid)),
                residual=res_net,
                residual_valuation=est.value,
                im_log_type=c1.passed and c2.passed,
                im_certs=(c1, c2),
                re_valuation=re_est,
                ansatz=f"ansatz[{idx}]",
            ))
    members = [z for z in zeros if z.im_log_type]
    violations = [z for z in members if z.re_valuation.value < -0.1]
    report = {
        "zeros": len(zeros),
        "members": len(members),
        "uniform_condition_violations": len(violations),
        "min_re_valuation": min((z.re_valuation.value for z in zeros), default=math.inf),
        "min_member_re_valuation": min((z.re_valuation.value for z in members), default=math.inf),
    }
    return zeros, report


# ---------------------------------------------------------------------------
# Structure decomposition
# ---------------------------------------------------------------------------

class _RampProductSlice(TestSlice):
    """y -> psi(y) * (x - y)_+^{k-1} / (k-1)! with analytic derivatives."""

    def __init__(self, x: float, psi: BumpFunction, k: int):
        self.x = x
        self.psi = psi
        self.k = k
        self.support_center = psi.center
        self.support_radius = psi.radius

    def _ramp(self, y: np.ndarray, d: int) -> np.ndarray:
        k = self.k
        if d > k - 1:
            return np.zeros_like(y)
        z = self.x - y
        coef = (-1.0) ** d / math.factorial(k - 1 - d)
        return coef * np.where(z > 0.0, z, 0.0) ** (k - 1 - d)

    def eval(self, pts: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(pts)[:, 0]
        return self.psi.eval(np.atleast_2d(pts)) * self._ramp(y, 0)

    def deriv(self, alpha, pts: np.ndarray) -> np.ndarray:
        j = int(alpha[0])
        pts = np.atleast_2d(pts)
        y = pts[:, 0]
        out = np.zeros(y.shape[0], dtype=float)
        for i in range(j + 1):
            out = out + math.comb(j, i) * self.psi.deriv((i,), pts) * self._ramp(y, j - i)
        return out


@dataclass
class StructureResult:
    x_grid: np.ndarray
    values: np.ndarray  # (n_eps, n_x)
    k: int
    fd_error: Optional[float]
    moderateness_valuation: float
    N_prime: float


def structure_decompose(
    T: FunctionalNet,
    psi: Optional[BumpFunction] = None,
    k: int = 2,
    order: int = 0,
    x_range: tuple[float, float] = (-1.5, 1.5),
    points: int = 1501,
    verify_test: Optional[BumpFunction] = None,
) -> StructureResult:
    """Continuous representative: F_eps(x) = (psi T_eps)(E_k(x - .)) on a grid.

    ``E_k(x) = (x)_+^(k-1)/(k-1)!`` on the line; ``k`` must exceed the order
    of T by at least 2 so E_k is smooth enough.  Verification pairs the k-th
    difference derivative of F with a test and compares to (psi T)(test)
    directly (4th-order centered stencils, trapezoid pairing).
    """
    if getattr(T, "dim", 1) != 1:
        raise ValueError("structure decomposition implemented on the line")
    if k < order + 2:
        raise ValueError("k must be at least the order of T plus 2")
    if psi is None:
        psi = BumpFunction([0.0], 1.0, plateau=0.5, k=8)
    grid = T.grid
    xs = np.linspace(x_range[0], x_range[1], points)
    values = np.empty((len(grid), points), dtype=complex)
    for ei in range(len(grid)):
        if T.eps_invariant and ei > 0:
            values[ei] = values[0]
            continue
        for j, x in enumerate(xs):
            values[ei, j] = T.action(ei, _RampProductSlice(float(x), psi, k))
    fd_error = None
    if verify_test is not None:
        h = xs[1] - xs[0]
        der = values.copy()
        for _ in range(k):
            der = np.stack([_fd_partial(der[ei][None, :], 1, 1, h)[0] for ei in range(len(grid))])
        u = verify_test.eval(xs[:, None])
        w = np.full(points, h)
        w[0] = w[-1] = h / 2.0
        errs = []
        for ei in (0, len(grid) // 2, len(grid) - 1):
            vals = der[ei]
            mask = ~np.isnan(vals.real)
            paired = np.sum(w[mask] * vals[mask] * u[mask])
            direct = T.action(ei, CombSlice([1.0], [verify_test])) if psi is None else None
            # direct action of psi T on the test
            direct = T.action(ei, _PsiProductSlice(psi, verify_test))
            errs.append(abs(paired - direct))
        fd_error = float(max(errs))
    sup = np.max(np.abs(values), axis=1)
    est = valuation_with_floor(GenNumber.from_values(sup.astype(complex), grid), 1e-280)
    N_prime = 0.0 if est.value == INF_VALUATION else max(0.0, -est.value)
    return StructureResult(xs, values, k, fd_error, est.value, N_prime)


class _PsiProductSlice(TestSlice):
    """y -> psi(y) u(y) with Leibniz derivatives."""

    def __init__(self, psi: BumpFunction, u: BumpFunction):
        self.psi = psi
        self.u = u
        self.support_center = u.center
        self.support_radius = u.radius

    def eval(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return self.psi.eval(pts) * self.u.eval(pts)

    def deriv(self, alpha, pts: np.ndarray) -> np.ndarray:
        j = int(alpha[0])
        pts = np.atleast_2d(pts)
        out = np.zeros(pts.shape[0], dtype=float)
        for i in range(j + 1):
            out = out + math.comb(j, i) * self.psi.deriv((i,), pts) * self.u.deriv((j - i,), pts)
        return out
