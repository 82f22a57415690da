"""Fourier-Laplace transform of compactly supported nets and Paley-Wiener tests.

Test functions are piecewise-polynomial (or exponential) bumps with exact
derivatives; compactly supported nets are finite combinations of bumps with
generalized-number multipliers.  The transform ``FL(u)(zeta) = int e^{-i x.zeta}
u(x) dx`` is evaluated by tensor Gauss-Legendre quadrature over the support
box, per grid-eps, including the shifted variant with a log-type imaginary
shift in the last coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, Optional, Sequence

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

__all__ = [
    "BumpFunction",
    "CompactNet",
    "TestSlice",
    "CombSlice",
    "TransformedSlice",
    "DiffSlice",
    "ProductSlice",
    "PaleyWienerCert",
    "InverseFLResult",
    "fl_transform",
    "fl_slice_transform",
    "pw_classify",
    "inverse_fl",
    "fl_symbol_identity",
    "gauss_legendre",
    "box_quadrature",
]


# ---------------------------------------------------------------------------
# Dense multivariate polynomials as {multi-index: coeff} dicts
# ---------------------------------------------------------------------------

Poly = dict[tuple[int, ...], float]


def _poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for a, ca in p.items():
        for b, cb in q.items():
            key = tuple(x + y for x, y in zip(a, b))
            out[key] = out.get(key, 0.0) + ca * cb
    return {k: v for k, v in out.items() if v != 0.0}


def _poly_scale(p: Poly, factor: float) -> Poly:
    return {k: v * factor for k, v in p.items()}


def _poly_add(p: Poly, q: Poly) -> Poly:
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0.0) + v
    return {k: v for k, v in out.items() if v != 0.0}


def _poly_diff(p: Poly, axis: int) -> Poly:
    out: Poly = {}
    for a, c in p.items():
        if a[axis] == 0:
            continue
        b = list(a)
        b[axis] -= 1
        out[tuple(b)] = out.get(tuple(b), 0.0) + c * a[axis]
    return out


def _poly_eval(p: Poly, pts: np.ndarray) -> np.ndarray:
    out = np.zeros(pts.shape[0])
    for a, c in p.items():
        mono = np.full(pts.shape[0], c)
        for axis, power in enumerate(a):
            if power:
                mono = mono * pts[:, axis] ** power
        out += mono
    return out


def _radial_poly_in_y(coeffs_s: Sequence[float], dim: int, radius: float) -> Poly:
    """Expand sum_j coeffs_s[j] * s**j with s = |y|**2 / radius**2 into y-monomials."""
    s_poly: Poly = {}
    for axis in range(dim):
        key = tuple(2 if i == axis else 0 for i in range(dim))
        s_poly[key] = 1.0 / radius**2
    out: Poly = {}
    power: Poly = {(0,) * dim: 1.0}
    for j, c in enumerate(coeffs_s):
        if j > 0:
            power = _poly_mul(power, s_poly)
        if c != 0.0:
            out = _poly_add(out, _poly_scale(power, c))
    return out


def _smoothstep_coeffs(k: int) -> list[float]:
    """Coefficients of q(t) = I_t(k+1, k+1) in powers of t (degree 2k+1).

    q(0) = 0, q(1) = 1, with k vanishing derivatives at both endpoints.
    """
    coeffs = [0.0] * (2 * k + 2)
    norm = 0.0
    raw = []
    for j in range(k + 1):
        c = math.comb(k, j) * (-1.0) ** j / (k + j + 1)
        raw.append(c)
        norm += c
    for j, c in enumerate(raw):
        coeffs[k + j + 1] = c / norm
    return coeffs


class BumpFunction:
    """Smooth compactly supported bump on the ball(center, radius).

    ``poly_bump(k)`` is ``(1 - |x-c|**2/r**2)**k`` inside the ball (piecewise
    polynomial, exact derivatives); with ``plateau > 0`` the profile equals 1
    for ``|x-c| <= plateau*r`` and descends through a C^k polynomial
    smoothstep.  ``exp_bump`` is ``exp(1 - 1/(1 - |x-c|**2/r**2))`` with
    derivatives generated symbolically.  Derivatives are available up to
    order 12.
    """

    MAX_DERIV = 12

    def __init__(
        self,
        center,
        radius: float,
        profile: str = "poly_bump",
        k: int = 8,
        plateau: float = 0.0,
    ):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.dim = self.center.shape[0]
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.profile = profile
        self.k = int(k)
        self.plateau = float(plateau)
        self._deriv_cache: dict[tuple[int, ...], list[tuple[float, float, Poly]]] = {}
        self._sym_cache: dict[tuple[int, ...], Callable] = {}
        if profile == "poly_bump":
            self._pieces = self._build_poly_pieces()
        elif profile == "exp_bump":
            self._pieces = None
        else:
            raise ValueError(f"unknown profile {profile!r}")

    def _build_poly_pieces(self) -> list[tuple[float, float, Poly]]:
        k, dim, r = self.k, self.dim, self.radius
        if self.plateau <= 0.0:
            # (1 - s)**k in powers of s
            coeffs = [math.comb(k, j) * (-1.0) ** j for j in range(k + 1)]
            return [(0.0, 1.0, _radial_poly_in_y(coeffs, dim, r))]
        s0 = self.plateau**2
        # q(u), u = (1 - s)/(1 - s0): rewrite in powers of s.
        q = _smoothstep_coeffs(k)
        # u**p = ((1 - s)/(1-s0))**p -> binomial expansion in s
        max_p = len(q) - 1
        coeffs_s = [0.0] * (max_p + 1)
        for p, qp in enumerate(q):
            if qp == 0.0:
                continue
            scale = qp / (1.0 - s0) ** p
            for j in range(p + 1):
                coeffs_s[j] += scale * math.comb(p, j) * (-1.0) ** j
        return [
            (0.0, s0, {(0,) * dim: 1.0}),
            (s0, 1.0, _radial_poly_in_y(coeffs_s, dim, r)),
        ]

    # -- piecewise polynomial evaluation ------------------------------------
    def _eval_pieces(
        self, pieces: list[tuple[float, float, Poly]], pts: np.ndarray
    ) -> np.ndarray:
        y = pts - self.center[None, :]
        s = np.sum(y**2, axis=1) / self.radius**2
        out = np.zeros(pts.shape[0])
        for lo, hi, poly in pieces:
            mask = (s >= lo) & (s < hi)
            if np.any(mask):
                out[mask] = _poly_eval(poly, y[mask])
        return out

    def eval(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.profile == "poly_bump":
            return self._eval_pieces(self._pieces, pts)
        return self._eval_exp((0,) * self.dim, pts)

    def deriv(self, alpha: Sequence[int], pts: np.ndarray) -> np.ndarray:
        alpha = tuple(int(a) for a in alpha)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if sum(alpha) > self.MAX_DERIV:
            raise ValueError(f"derivative order {sum(alpha)} exceeds {self.MAX_DERIV}")
        if sum(alpha) == 0:
            return self.eval(pts)
        if self.profile == "exp_bump":
            return self._eval_exp(alpha, pts)
        if alpha not in self._deriv_cache:
            pieces = []
            for lo, hi, poly in self._pieces:
                d = poly
                for axis, order in enumerate(alpha):
                    for _ in range(order):
                        d = _poly_diff(d, axis)
                pieces.append((lo, hi, d))
            self._deriv_cache[alpha] = pieces
        return self._eval_pieces(self._deriv_cache[alpha], pts)

    def _eval_exp(self, alpha: tuple[int, ...], pts: np.ndarray) -> np.ndarray:
        if alpha not in self._sym_cache:
            import sympy as sp

            ys = sp.symbols(f"y0:{self.dim}")
            s = sum(yi**2 for yi in ys) / self.radius**2
            expr = sp.exp(1 - 1 / (1 - s))
            for axis, order in enumerate(alpha):
                for _ in range(order):
                    expr = sp.diff(expr, ys[axis])
            self._sym_cache[alpha] = sp.lambdify(ys, expr, modules="numpy")
        y = pts - self.center[None, :]
        s = np.sum(y**2, axis=1) / self.radius**2
        out = np.zeros(pts.shape[0])
        mask = s < 1.0 - 1e-14
        if np.any(mask):
            cols = [y[mask, i] for i in range(self.dim)]
            out[mask] = self._sym_cache[alpha](*cols)
        return out

    @property
    def support_center(self) -> np.ndarray:
        return self.center

    @property
    def support_radius(self) -> float:
        return self.radius


# ---------------------------------------------------------------------------
# Test slices: one eps-slice of a test net, with exact derivatives
# ---------------------------------------------------------------------------

class TestSlice:
    """Duck-typed interface: eval(pts), deriv(alpha, pts), support data."""

    dim: int
    support_center: np.ndarray
    support_radius: float

    def eval(self, pts: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def deriv(self, alpha, pts: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class CombSlice(TestSlice):
    """Linear combination of bumps with fixed complex weights."""

    def __init__(self, weights: Sequence[complex], bumps: Sequence[BumpFunction]):
        self.weights = [complex(w) for w in weights]
        self.bumps = list(bumps)
        self.dim = self.bumps[0].dim
        centers = np.stack([b.center for b in self.bumps])
        mid = 0.5 * (centers.min(axis=0) + centers.max(axis=0))
        self.support_center = mid
        self.support_radius = max(
            float(np.linalg.norm(b.center - mid)) + b.radius for b in self.bumps
        )

    def eval(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0], dtype=complex)
        for w, b in zip(self.weights, self.bumps):
            out += w * b.eval(pts)
        return out

    def deriv(self, alpha, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0], dtype=complex)
        for w, b in zip(self.weights, self.bumps):
            out += w * b.deriv(alpha, pts)
        return out


class TransformedSlice(TestSlice):
    """f(x) = base(x - shift), or base(shift - x) when reflected."""

    def __init__(self, base: TestSlice, shift=None, reflect: bool = False):
        self.base = base
        self.dim = base.dim
        self.shift = (
            np.zeros(self.dim) if shift is None else np.atleast_1d(np.asarray(shift, dtype=float))
        )
        self.reflect = reflect
        if reflect:
            self.support_center = self.shift - base.support_center
        else:
            self.support_center = self.shift + base.support_center
        self.support_radius = base.support_radius

    def _pullback(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.reflect:
            return self.shift[None, :] - pts
        return pts - self.shift[None, :]

    def eval(self, pts: np.ndarray) -> np.ndarray:
        return self.base.eval(self._pullback(pts))

    def deriv(self, alpha, pts: np.ndarray) -> np.ndarray:
        sign = (-1.0) ** sum(alpha) if self.reflect else 1.0
        return sign * self.base.deriv(alpha, self._pullback(pts))


class DiffSlice(TestSlice):
    """f = sum_j c_j * d^(alpha_j) base."""

    def __init__(self, terms: Sequence[tuple[complex, tuple[int, ...]]], base: TestSlice):
        self.terms = [(complex(c), tuple(a)) for c, a in terms]
        self.base = base
        self.dim = base.dim
        self.support_center = base.support_center
        self.support_radius = base.support_radius

    def eval(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0], dtype=complex)
        for c, a in self.terms:
            out += c * self.base.deriv(a, pts)
        return out

    def deriv(self, alpha, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0], dtype=complex)
        for c, a in self.terms:
            combined = tuple(x + y for x, y in zip(a, alpha))
            out += c * self.base.deriv(combined, pts)
        return out


class ProductSlice(TestSlice):
    """Pointwise product of two slices, with Leibniz derivatives."""

    def __init__(self, left: TestSlice, right: TestSlice):
        self.left = left
        self.right = right
        self.dim = left.dim
        self.support_center = right.support_center
        self.support_radius = right.support_radius

    def eval(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.left.eval(pts) * self.right.eval(pts)

    def deriv(self, alpha, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        alpha = tuple(int(a) for a in alpha)
        out = np.zeros(pts.shape[0], dtype=complex)
        ranges = [range(a + 1) for a in alpha]
        for beta in product(*ranges):
            coeff = 1.0
            for a, b in zip(alpha, beta):
                coeff *= math.comb(a, b)
            gamma = tuple(a - b for a, b in zip(alpha, beta))
            out += coeff * self.left.deriv(beta, pts) * self.right.deriv(gamma, pts)
        return out


# ---------------------------------------------------------------------------
# Compact nets
# ---------------------------------------------------------------------------

class CompactNet:
    """eps-net of test functions: bumps with GenNumber multipliers."""

    def __init__(
        self,
        terms: Sequence[tuple[GenNumber, BumpFunction]],
        grid: EpsGrid,
        support_radius: Optional[float] = None,
    ):
        if not terms:
            raise ValueError("CompactNet needs at least one term")
        self.terms = list(terms)
        self.grid = grid
        self.dim = self.terms[0][1].dim
        reach = max(float(np.linalg.norm(b.center)) + b.radius for _, b in self.terms)
        self.support_radius = support_radius if support_radius is not None else reach * 1.1
        if reach > self.support_radius + 1e-12:
            raise ValueError("terms exceed the declared support radius")
        self._mult_values = None

    @classmethod
    def single(
        cls,
        grid: EpsGrid,
        center=0.0,
        radius: float = 1.0,
        multiplier: Optional[GenNumber] = None,
        profile: str = "poly_bump",
        k: int = 8,
    ) -> "CompactNet":
        bump = BumpFunction(center, radius, profile=profile, k=k)
        mult = multiplier if multiplier is not None else GenNumber.constant(1.0, grid)
        return cls([(mult, bump)], grid)

    def mult_values(self) -> np.ndarray:
        if self._mult_values is None:
            self._mult_values = np.stack([m.values() for m, _ in self.terms])
        return self._mult_values  # (n_terms, n_eps)

    def slice(self, eps_index: int) -> CombSlice:
        weights = self.mult_values()[:, eps_index]
        return CombSlice(weights, [b for _, b in self.terms])

    def eval(self, eps_index: int, pts: np.ndarray) -> np.ndarray:
        return self.slice(eps_index).eval(pts)

    def eval0(self) -> np.ndarray:
        """Value at the origin per grid-eps."""
        origin = np.zeros((1, self.dim))
        base = np.array([b.eval(origin)[0] for _, b in self.terms])
        return (self.mult_values() * base[:, None]).sum(axis=0)

    def scaled(self, multiplier: GenNumber) -> "CompactNet":
        from colombeau.epsnet import gn_arith

        return CompactNet(
            [(gn_arith("mul", m, multiplier), b) for m, b in self.terms],
            self.grid,
            self.support_radius,
        )


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def box_quadrature(
    center: np.ndarray, radius: float, order: int, dim: int
) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes/weights on the box center +- radius."""
    x, w = gauss_legendre(order)
    axes_pts = [center[i] + radius * x for i in range(dim)]
    grids = np.meshgrid(*axes_pts, indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    weights = np.ones(pts.shape[0])
    w_scaled = w * radius
    for i in range(dim):
        block = np.meshgrid(*([w_scaled] * dim), indexing="ij")[i].ravel()
        weights *= block
    return pts, weights


def slice_quadrature(slc: TestSlice, order: int) -> tuple[np.ndarray, np.ndarray]:
    return box_quadrature(slc.support_center, slc.support_radius, order, slc.dim)


# ---------------------------------------------------------------------------
# Fourier-Laplace transform
# ---------------------------------------------------------------------------

def fl_slice_transform(
    slc: TestSlice, zeta_pts: np.ndarray, order: int = 64
) -> np.ndarray:
    """FL of one slice at complex frequency points (n_zeta, dim)."""
    zeta_pts = np.atleast_2d(np.asarray(zeta_pts, dtype=complex))
    pts, w = slice_quadrature(slc, order)
    vals = slc.eval(pts) * w
    out = np.empty(zeta_pts.shape[0], dtype=complex)
    chunk = max(1, int(2e6 / max(pts.shape[0], 1)))
    for start in range(0, zeta_pts.shape[0], chunk):
        zz = zeta_pts[start : start + chunk]
        phase = np.exp(-1j * (zz @ pts.T.astype(complex)))
        out[start : start + chunk] = phase @ vals
    return out


def fl_transform(
    u: CompactNet,
    zeta=None,
    xi=None,
    eta_n: Optional[GenNumber] = None,
    eta_cert: Optional[Certificate] = None,
    order: int = 64,
) -> GenNumber:
    """FL(u)(zeta) per grid-eps; shifted variant takes (xi real, eta_n log-type).

    The shifted transform evaluates ``int e^{-i(x'.xi' + x_n xi_n)}
    e^{x_n eta_{n,eps}} u_eps(x) dx`` and demands a log-type certificate on
    ``eta_n`` (re-checked here).
    """
    n_eps = len(u.grid)
    if eta_n is None:
        if zeta is None:
            raise ValueError("provide zeta, or xi with eta_n")
        zeta = np.asarray(zeta, dtype=complex)
        base = np.stack(
            [fl_slice_transform(_unit_slice(b), zeta[None, :], order)[0] for _, b in u.terms]
        )
        vals = (u.mult_values() * base[:, None]).sum(axis=0)
        return GenNumber.from_values(vals, u.grid)

    check = classify_net(eta_n, "log_type")
    if not check.passed:
        raise CertificateError("shifted transform requires a log-type eta_n")
    if eta_cert is not None and eta_cert.mode != "log_type":
        raise CertificateError("eta certificate must be log_type")
    xi = np.asarray(xi, dtype=float)
    if xi.shape[0] != u.dim:
        raise ValueError("xi must have the full dimension (last entry = Re zeta_n)")
    eta_vals = eta_n.values()  # (n_eps,), real log-type shift
    out = np.zeros(n_eps, dtype=complex)
    mults = u.mult_values()
    for t, (_, bump) in enumerate(u.terms):
        pts, w = box_quadrature(bump.center, bump.radius, order, bump.dim)
        f = bump.eval(pts) * w
        phase = np.exp(-1j * (pts @ xi))
        shift = np.exp(np.real(eta_vals)[:, None] * pts[:, -1][None, :])
        out += mults[t] * (shift * (phase * f)[None, :]).sum(axis=1)
    return GenNumber.from_values(out, u.grid)


def _unit_slice(bump: BumpFunction) -> CombSlice:
    return CombSlice([1.0], [bump])


# ---------------------------------------------------------------------------
# Paley-Wiener classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PaleyWienerCert:
    a: float
    table: dict  # M -> {"N": int, "c": float, "valuation": float, "r_squared": float}
    cls: str  # "E_FL_a" | "Einf_FL_a" | "N_FL_a(q)"
    q: Optional[int] = None

    def neg_passes(self, q: float) -> bool:
        """Whether the net certifies as negligible-type up to order q."""
        return all(rec["valuation"] >= q - 0.1 for rec in self.table.values())


def pw_classify(
    u: CompactNet,
    M_max: int = 6,
    q_max: int = 10,
    order: int = 64,
    seed: int = 5,
) -> PaleyWienerCert:
    """Classify FL(u) into the three Paley-Wiener growth classes.

    Samples zeta on mixed real/imaginary shells, forms
    ``g_M(eps) = max |FL(u_eps)(zeta)| (1+|zeta|)^M e^{-a|Im zeta|}`` and fits
    the eps-exponent N_M per M.
    """
    if M_max > 8 or q_max > 10:
        raise ValueError("M_max <= 8 and q_max <= 10 (derivative availability)")
    a = u.support_radius
    rng = np.random.default_rng(seed)
    radii = np.geomspace(1.0, 100.0, 5)
    im_mags = np.array([0.0, 1.0 / a, 4.0 / a])
    zetas = []
    for r in radii:
        for im in im_mags:
            d_re = rng.standard_normal(u.dim)
            d_re /= np.linalg.norm(d_re)
            d_im = rng.standard_normal(u.dim)
            d_im /= np.linalg.norm(d_im)
            zetas.append(r * d_re + 1j * im * d_im)
    zeta_pts = np.array(zetas)

    base = np.stack(
        [fl_slice_transform(_unit_slice(b), zeta_pts, order) for _, b in u.terms]
    )  # (n_terms, n_zeta)
    flv = u.mult_values().T @ base  # (n_eps, n_zeta) -- wrong orientation fix below
    flv = np.einsum("te,tz->ez", u.mult_values(), base)
    mag = np.abs(flv)
    abs_zeta = np.linalg.norm(zeta_pts, axis=1)
    im_norm = np.linalg.norm(np.imag(zeta_pts), axis=1)
    table = {}
    vals_per_M = []
    for M in range(0, M_max + 1):
        g = mag * ((1.0 + abs_zeta) ** M * np.exp(-a * im_norm))[None, :]
        g_net = GenNumber.from_values(g.max(axis=1).astype(complex), u.grid)
        est = valuation(g_net)
        N_M = int(max(0, math.ceil(-est.value - 0.1))) if est.value != INF_VALUATION else 0
        c_M = float(np.max(g.max(axis=1) * u.grid.array ** N_M))
        table[M] = {
            "N": N_M,
            "c": c_M,
            "valuation": est.value,
            "r_squared": est.r_squared,
        }
        vals_per_M.append(est.value)
    min_val = min(vals_per_M)
    Ns = [rec["N"] for rec in table.values()]
    if min_val >= 1.0:
        q = min(int(math.floor(min_val + 0.1)), q_max)
        return PaleyWienerCert(a, table, f"N_FL_a({q})", q=q)
    if max(Ns) - min(Ns) <= 1:
        return PaleyWienerCert(a, table, "Einf_FL_a")
    return PaleyWienerCert(a, table, "E_FL_a")


# ---------------------------------------------------------------------------
# Inverse transform
# ---------------------------------------------------------------------------

@dataclass
class InverseFLResult:
    x_pts: np.ndarray  # (n_pts, dim)
    values: np.ndarray  # (n_eps, n_pts)
    a_target: float
    support_margin: float
    support_valuation: ValuationEstimate
    support_passed: bool
    truncation_radius: float


def inverse_fl(
    v: Callable[[int, np.ndarray], np.ndarray],
    grid: EpsGrid,
    dim: int,
    a_target: float,
    q_max: int = 10,
    order: Optional[int] = None,
    x_points: Optional[np.ndarray] = None,
    floor: float = 1e-8,
) -> InverseFLResult:
    """Inverse transform u_eps(x) = (2pi)^-n int e^{i x.xi} v_eps(xi) dxi.

    ``v`` maps (eps_index, xi_points) to sampled values.  The decay of v is
    fitted first; insufficient decay (slower than (1+|xi|)^-(n+1)) is an
    error.  The reconstruction is checked to vanish outside the target ball.
    """
    probe_r = np.geomspace(2.0, 40.0, 9)
    probe_dirs = np.eye(dim)
    peak = 0.0
    tail_mag = np.zeros(len(probe_r))
    for d in probe_dirs:
        pts = probe_r[:, None] * d[None, :]
        for ei in range(0, len(grid), max(1, len(grid) // 6)):
            vals = np.abs(np.asarray(v(ei, pts)))
            tail_mag = np.maximum(tail_mag, vals)
            peak = max(peak, float(np.abs(v(ei, np.zeros((1, dim)))[0])))
    peak = max(peak, float(np.max(tail_mag)), 1e-300)
    fit = np.polyfit(np.log(1.0 + probe_r[3:]), np.log(np.maximum(tail_mag[3:], 1e-300)), 1)
    decay = -float(fit[0])
    if decay < dim + 1 - 0.25:
        raise ValueError(
            f"insufficient decay of v: fitted exponent {decay:.2f} < n+1 = {dim + 1}"
        )
    # Truncate where the fitted decay bound drops below 1e-10 of the peak.
    level = float(tail_mag[-1]) / peak
    R = probe_r[-1] * (max(level, 1e-299) / 1e-10) ** (1.0 / decay)
    R = float(min(max(R, 20.0), 2e4))
    margin = 0.1 * a_target
    if x_points is None:
        if dim == 1:
            xs = np.linspace(-1.6 * a_target, 1.6 * a_target, 201)
            x_points = xs[:, None]
        else:
            axes = [np.linspace(-1.6 * a_target, 1.6 * a_target, 41)] * dim
            grids = np.meshgrid(*axes, indexing="ij")
            x_points = np.column_stack([g.ravel() for g in grids])
    if order is None:
        # Resolve the oscillation e^{i x xi} over |xi| <= R at the largest
        # probed |x|: the rule needs ~ R * x_max / 2 nodes plus headroom.
        order = int(max(128, math.ceil(R * 1.6 * a_target / 2.0) + 64))
        order = min(order, 768)
    nodes, w = box_quadrature(np.zeros(dim), R, order, dim)
    phase = np.exp(1j * (x_points @ nodes.T))  # (n_pts, n_nodes)
    values = np.empty((len(grid), x_points.shape[0]), dtype=complex)
    for ei in range(len(grid)):
        integrand = np.asarray(v(ei, nodes)) * w
        values[ei] = (phase @ integrand) / (2.0 * math.pi) ** dim
    outside = np.linalg.norm(x_points, axis=1) > a_target + margin
    if np.any(outside):
        out_net = GenNumber.from_values(
            np.max(np.abs(values[:, outside]), axis=1).astype(complex), grid
        )
        sup_val = valuation_with_floor(out_net, floor * peak)
        passed = sup_val.value >= q_max
    else:
        sup_val = ValuationEstimate(INF_VALUATION, 1.0, (0, len(grid)))
        passed = True
    return InverseFLResult(
        x_pts=x_points,
        values=values,
        a_target=a_target,
        support_margin=margin,
        support_valuation=sup_val,
        support_passed=passed,
        truncation_radius=R,
    )


# ---------------------------------------------------------------------------
# Symbol identity
# ---------------------------------------------------------------------------

def apply_operator_slice(P, u_slice: TestSlice, transpose: bool = False) -> "DiffSlice":
    """P(D) (or its transpose) applied to a slice; coefficients at fixed eps
    must be supplied via ``P`` rows -- see :func:`operator_slice_terms`."""
    raise NotImplementedError("use operator_slice_terms with a fixed eps index")


def operator_slice_terms(P, eps_index: int, transpose: bool = False):
    """Terms (c, alpha) with c = a_alpha(eps) * (+-i)^|alpha| so that
    ``DiffSlice(terms, u)`` equals ``P(D)u`` (or the transpose) at that eps.

    ``D^alpha = (-i)^|alpha| d^alpha`` and the transpose flips ``D -> -D``.
    """
    terms = []
    for alpha, vals in P.coeff_values().items():
        k = sum(alpha)
        factor = (1j) ** k if transpose else (-1j) ** k
        terms.append((vals[eps_index] * factor, alpha))
    return terms


def fl_symbol_identity(
    P,
    u: CompactNet,
    zeta_samples: np.ndarray,
    order: int = 64,
    floor: float = 1e-9,
) -> tuple[GenNumber, ValuationEstimate]:
    """Residual of FL(P(D)u)(zeta) - P(zeta) FL(u)(zeta) over zeta samples."""
    zeta_pts = np.atleast_2d(np.asarray(zeta_samples, dtype=complex))
    n_eps = len(u.grid)
    symbol = P.eval_points(zeta_pts)  # (n_eps, n_zeta)
    residual = np.zeros(n_eps)
    for ei in range(n_eps):
        base = u.slice(ei)
        pdu = DiffSlice(operator_slice_terms(P, ei), base)
        lhs = fl_slice_transform(pdu, zeta_pts, order)
        rhs = symbol[ei] * fl_slice_transform(base, zeta_pts, order)
        residual[ei] = float(np.max(np.abs(lhs - rhs)))
    net = GenNumber.from_values(residual.astype(complex), u.grid)
    return net, valuation_with_floor(net, floor)
