"""Generalized polynomials: derivatives, the weight function, and ellipticity.

A :class:`GenPolynomial` is ``P(xi) = sum_{|alpha| <= m} a_alpha xi**alpha``
with :class:`~colombeau.epsnet.GenNumber` coefficients.  The module provides
exact differentiation/evaluation, the weight ``Pt(xi)**2 = sum |d^alpha P|**2``,
the tempered-weight inequalities with fitted constants, and the classification
of elliptic operators from the infimum of the principal symbol on the sphere,
together with the constructive lower bounds that classification yields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Optional, Sequence

import numpy as np

from colombeau.epsnet import (
    Certificate,
    EpsGrid,
    GenNumber,
    INF_VALUATION,
    ScaleExpr,
    classify_net,
    gn_arith,
    valuation,
)

__all__ = [
    "MultiIndex",
    "GenPolynomial",
    "WeightCertificate",
    "EllipticityResult",
    "derive_eval",
    "weight",
    "weight_values",
    "weight_inequalities",
    "ellipticity_class",
    "elliptic_lower_bound",
]

MultiIndex = tuple[int, ...]


def _multi_indices(dim: int, max_order: int) -> list[MultiIndex]:
    out = [
        alpha
        for alpha in product(range(max_order + 1), repeat=dim)
        if sum(alpha) <= max_order
    ]
    out.sort(key=lambda a: (sum(a), a))
    return out


def _falling_factorial(beta: int, alpha: int) -> int:
    """beta * (beta-1) * ... * (beta-alpha+1)."""
    out = 1
    for j in range(alpha):
        out *= beta - j
    return out


class GenPolynomial:
    """Polynomial with generalized-number coefficients.

    The declared degree is syntactic: a degree-m polynomial whose top
    coefficients happen to be negligible is kept (and flagged by callers),
    never rejected.
    """

    def __init__(
        self,
        dim: int,
        degree: int,
        coeffs: dict[MultiIndex, GenNumber],
        grid: EpsGrid,
    ):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        if not coeffs:
            raise ValueError("polynomial needs at least one coefficient")
        for alpha in coeffs:
            if len(alpha) != dim:
                raise ValueError(f"multi-index {alpha} does not match dimension {dim}")
            if any(a < 0 for a in alpha):
                raise ValueError("multi-index entries must be nonnegative")
            if sum(alpha) > degree:
                raise ValueError(f"multi-index {alpha} exceeds declared degree {degree}")
        if degree > 0 and not any(sum(a) == degree for a in coeffs):
            raise ValueError("declared degree has no coefficient of that order")
        self.dim = dim
        self.degree = degree
        self.coeffs = dict(coeffs)
        self.grid = grid
        self._coeff_values: Optional[dict[MultiIndex, np.ndarray]] = None
        self._derivatives: dict[MultiIndex, "GenPolynomial"] = {}

    # -- constructors ---------------------------------------------------------
    @classmethod
    def from_spec(
        cls,
        entries: Sequence[dict],
        grid: EpsGrid,
        dim: Optional[int] = None,
        degree: Optional[int] = None,
    ) -> "GenPolynomial":
        """Build from config entries ``{"alpha": [i1..in], "coeff": ScaleExpr-text}``."""
        coeffs: dict[MultiIndex, GenNumber] = {}
        for entry in entries:
            alpha = tuple(int(a) for a in entry["alpha"])
            coeff = entry["coeff"]
            if isinstance(coeff, str):
                num = GenNumber.symbolic(ScaleExpr.parse(coeff), grid)
            elif isinstance(coeff, GenNumber):
                num = coeff
            else:
                num = GenNumber.constant(complex(coeff), grid)
            coeffs[alpha] = num
        inferred_dim = len(next(iter(coeffs)))
        inferred_deg = max(sum(a) for a in coeffs)
        if dim is not None and dim != inferred_dim:
            raise ValueError(f"declared dim {dim} != inferred {inferred_dim}")
        if degree is not None and degree != inferred_deg:
            raise ValueError(f"declared degree {degree} != inferred {inferred_deg}")
        return cls(inferred_dim, inferred_deg, coeffs, grid)

    # -- coefficient views ----------------------------------------------------
    def coeff_values(self) -> dict[MultiIndex, np.ndarray]:
        if self._coeff_values is None:
            self._coeff_values = {a: c.values() for a, c in self.coeffs.items()}
        return self._coeff_values

    def is_classical(self, rtol: float = 1e-12) -> bool:
        """True when every coefficient is constant across the grid."""
        for vals in self.coeff_values().values():
            ref = vals[0]
            scale = max(1.0, abs(ref))
            if np.max(np.abs(vals - ref)) > rtol * scale:
                return False
        return True

    # -- calculus -------------------------------------------------------------
    def derive(self, alpha: MultiIndex) -> "GenPolynomial":
        """Exact derivative d^alpha P (symbolic on the monomial basis)."""
        alpha = tuple(int(a) for a in alpha)
        if alpha in self._derivatives:
            return self._derivatives[alpha]
        if len(alpha) != self.dim:
            raise ValueError("multi-index dimension mismatch")
        new_coeffs: dict[MultiIndex, GenNumber] = {}
        for beta, coeff in self.coeffs.items():
            if any(b < a for b, a in zip(beta, alpha)):
                continue
            factor = 1
            for b, a in zip(beta, alpha):
                factor *= _falling_factorial(b, a)
            gamma = tuple(b - a for b, a in zip(beta, alpha))
            scaled = gn_arith("mul", coeff, GenNumber.constant(factor, self.grid))
            if gamma in new_coeffs:
                new_coeffs[gamma] = gn_arith("add", new_coeffs[gamma], scaled)
            else:
                new_coeffs[gamma] = scaled
        if not new_coeffs:
            new_coeffs = {(0,) * self.dim: GenNumber.constant(0.0, self.grid)}
        new_deg = max(sum(a) for a in new_coeffs)
        result = GenPolynomial(self.dim, new_deg, new_coeffs, self.grid)
        self._derivatives[alpha] = result
        return result

    def principal_part(self) -> "GenPolynomial":
        top = {a: c for a, c in self.coeffs.items() if sum(a) == self.degree}
        if not top:
            raise ValueError("no coefficient of top order")
        return GenPolynomial(self.dim, self.degree, top, self.grid)

    # -- evaluation -----------------------------------------------------------
    def eval_points(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at fixed (possibly complex) points: result (n_eps, n_pts)."""
        pts = np.atleast_2d(np.asarray(pts))
        if pts.shape[1] != self.dim:
            raise ValueError("points have wrong dimension")
        n_eps = len(self.grid)
        out = np.zeros((n_eps, pts.shape[0]), dtype=complex)
        for alpha, cvals in self.coeff_values().items():
            mono = np.ones(pts.shape[0], dtype=complex)
            for axis, power in enumerate(alpha):
                if power:
                    mono = mono * pts[:, axis] ** power
            out += cvals[:, None] * mono[None, :]
        return out

    def eval_per_eps(self, pts_per_eps: np.ndarray) -> np.ndarray:
        """Evaluate at one point per grid-eps: pts (n_eps, dim) -> (n_eps,)."""
        pts = np.asarray(pts_per_eps)
        if pts.shape != (len(self.grid), self.dim):
            raise ValueError("expected one point per grid eps")
        out = np.zeros(len(self.grid), dtype=complex)
        for alpha, cvals in self.coeff_values().items():
            mono = np.ones(len(self.grid), dtype=complex)
            for axis, power in enumerate(alpha):
                if power:
                    mono = mono * pts[:, axis] ** power
            out += cvals * mono
        return out

    def eval_gen(self, zeta: Sequence[GenNumber]) -> GenNumber:
        """Evaluate at a vector of generalized numbers."""
        if len(zeta) != self.dim:
            raise ValueError("point has wrong dimension")
        pts = np.stack([z.values() for z in zeta], axis=1)
        return GenNumber.from_values(self.eval_per_eps(pts), self.grid)

    def scale_coeffs(self, factor: complex) -> "GenPolynomial":
        scaled = {
            a: gn_arith("mul", c, GenNumber.constant(factor, self.grid))
            for a, c in self.coeffs.items()
        }
        return GenPolynomial(self.dim, self.degree, scaled, self.grid)


# ---------------------------------------------------------------------------
# derive_eval / weight
# ---------------------------------------------------------------------------

def derive_eval(P: GenPolynomial, alpha: MultiIndex, point) -> GenNumber:
    """d^alpha P evaluated at a complex vector or a vector of GenNumbers."""
    dP = P.derive(tuple(alpha))
    if len(point) != P.dim:
        raise ValueError("point has wrong dimension")
    if all(isinstance(z, GenNumber) for z in point):
        return dP.eval_gen(list(point))
    pt = np.asarray([complex(z) for z in point], dtype=complex)[None, :]
    vals = dP.eval_points(pt)[:, 0]
    return GenNumber.from_values(vals, P.grid)


def weight_values(P: GenPolynomial, pts: np.ndarray) -> np.ndarray:
    """Pt_eps(xi) on real points: sqrt(sum_{|alpha|<=m} |d^alpha P(xi)|**2).

    Returns an array of shape (n_eps, n_pts).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    total = np.zeros((len(P.grid), pts.shape[0]), dtype=float)
    for alpha in _multi_indices(P.dim, P.degree):
        dvals = P.derive(alpha).eval_points(pts)
        total += np.abs(dvals) ** 2
    return np.sqrt(total)


def weight(P: GenPolynomial, xi) -> GenNumber:
    """The weight net Pt_eps(xi) at a real point, as a generalized number."""
    xi = np.asarray(xi, dtype=float)
    vals = weight_values(P, xi[None, :])[:, 0]
    return GenNumber.from_values(vals.astype(complex), P.grid)


# ---------------------------------------------------------------------------
# Weight inequalities (tempered constant C, invertibility exponent N)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightCertificate:
    C: float
    N: int
    xi0: tuple[float, ...]
    window: tuple[int, int]
    samples: int = 0


def _sample_directions(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    vecs = rng.standard_normal((count, dim))
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return vecs / norms


def weight_inequalities(
    P: GenPolynomial,
    xi0,
    sample_pairs: int = 64,
    seed: int = 7,
) -> WeightCertificate:
    """Fit the tempered constant C and invertibility exponent N of the weight.

    C is the smallest constant (inflated 1.5x for headroom on fresh samples)
    with ``Pt(xi+eta) <= (1+C|xi|)**m * Pt(eta)`` on log-spaced sample pairs at
    every grid eps; N is the smallest integer with
    ``Pt(xi) >= eps**N * (1+C|xi0-xi|)**-m`` on a radial sample around xi0 on
    the small-eps tail.
    """
    xi0 = np.asarray(xi0, dtype=float)
    w0 = weight(P, xi0)
    nz = classify_net(w0, "strictly_nonzero")
    if not nz.passed:
        est = valuation(gn_arith("abs", w0))
        raise ValueError(
            f"weight not invertible at xi0={xi0.tolist()}: valuation diagnostic {est}"
        )
    rng = np.random.default_rng(seed)
    m = max(P.degree, 1)
    radii = np.geomspace(1e-1, 1e3, 9)
    dirs_xi = _sample_directions(rng, P.dim, sample_pairs)
    dirs_eta = _sample_directions(rng, P.dim, sample_pairs)
    r_xi = rng.choice(radii, size=sample_pairs)
    r_eta = rng.choice(radii, size=sample_pairs)
    xi = dirs_xi * r_xi[:, None]
    eta = dirs_eta * r_eta[:, None]
    w_sum = weight_values(P, xi + eta)
    w_eta = weight_values(P, eta)
    ratio = np.power(w_sum / w_eta, 1.0 / m)  # (n_eps, n_pairs)
    norm_xi = np.linalg.norm(xi, axis=1)
    c_needed = (ratio - 1.0) / norm_xi[None, :]
    C = max(1e-9, float(np.max(c_needed))) * 1.5

    # Invertibility exponent on the tail.
    tail = P.grid.small_half()
    dirs = _sample_directions(rng, P.dim, 16)
    rad = np.concatenate([[0.0], np.geomspace(1e-2, 1e3, 13)])
    pts = (dirs[None, :, :] * rad[:, None, None]).reshape(-1, P.dim) + xi0[None, :]
    wv = weight_values(P, pts)[tail]  # (n_tail, n_pts)
    dist = np.linalg.norm(pts - xi0[None, :], axis=1)
    rhs_base = np.power(1.0 + C * dist, -float(m))[None, :]
    g = wv / rhs_base
    log_eps = P.grid.log_eps[tail][:, None]
    need = np.where(g < 1.0, np.log(g) / log_eps, 0.0)
    N = int(max(0, math.ceil(float(np.max(need)) - 1e-12)))
    return WeightCertificate(
        C=C,
        N=N,
        xi0=tuple(xi0.tolist()),
        window=(int(tail[0]), len(P.grid)),
        samples=sample_pairs,
    )


# ---------------------------------------------------------------------------
# Ellipticity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticityResult:
    classification: str  # "G_elliptic" | "Ginf_elliptic" | "neither"
    infimum: GenNumber
    nonzero_cert: Certificate
    slow_scale_cert: Optional[Certificate] = None
    diagnostic: str = ""


def _sphere_points(dim: int, n2: int = 720, n3: tuple[int, int] = (64, 128)) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        theta = np.linspace(0.0, 2.0 * math.pi, n2, endpoint=False)
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if dim == 3:
        lat, lon = n3
        phi = (np.arange(lat) + 0.5) * math.pi / lat
        lam = np.arange(lon) * 2.0 * math.pi / lon
        PH, LM = np.meshgrid(phi, lam, indexing="ij")
        return np.column_stack(
            [
                (np.sin(PH) * np.cos(LM)).ravel(),
                (np.sin(PH) * np.sin(LM)).ravel(),
                np.cos(PH).ravel(),
            ]
        )
    raise ValueError("sphere sampling supports n <= 3 only")


def _refine_around(dim: int, point: np.ndarray, spread: float, count: int = 32) -> np.ndarray:
    """Extra unit-sphere samples in an angular neighborhood of ``point``."""
    if dim == 1:
        return point[None, :]
    if dim == 2:
        theta0 = math.atan2(point[1], point[0])
        theta = theta0 + np.linspace(-spread, spread, count)
        return np.column_stack([np.cos(theta), np.sin(theta)])
    rng = np.random.default_rng(12345)
    perturbed = point[None, :] + spread * rng.standard_normal((count, dim))
    perturbed /= np.linalg.norm(perturbed, axis=1, keepdims=True)
    return perturbed


def ellipticity_class(
    P: GenPolynomial,
    sphere_samples: Optional[int] = None,
    order_bound: int = 10,
) -> EllipticityResult:
    """Classify the operator from the infimum of |P_m| on the unit sphere.

    The infimum net strictly nonzero gives at least G-ellipticity; if its
    inverse is additionally a slow-scale net the operator is Ginf-elliptic.
    """
    if P.dim > 3:
        raise ValueError("ellipticity classification supports n <= 3")
    Pm = P.principal_part()
    top_scale = max(float(np.max(np.abs(v))) for v in Pm.coeff_values().values())
    if top_scale == 0.0:
        zero = GenNumber.constant(0.0, P.grid)
        return EllipticityResult(
            "neither", zero, Certificate("strictly_nonzero", False),
            diagnostic="degenerate principal part (all coefficients zero)",
        )

    n2 = sphere_samples if (sphere_samples and P.dim == 2) else 720
    pts = _sphere_points(P.dim, n2=n2)
    vals = np.abs(Pm.eval_points(pts))  # (n_eps, n_pts)
    coarse_min = vals.min(axis=0)
    order = np.argsort(coarse_min)[:3]
    spread = 2.0 * math.pi / pts.shape[0] if P.dim == 2 else 0.1
    extra = [pts]
    for idx in order:
        extra.append(_refine_around(P.dim, pts[idx], spread))
    all_pts = np.vstack(extra)
    all_vals = np.abs(Pm.eval_points(all_pts))
    inf_values = all_vals.min(axis=1)
    infimum = GenNumber.from_values(inf_values.astype(complex), P.grid)

    nz = classify_net(infimum, "strictly_nonzero", order_bound)
    if not nz.passed:
        return EllipticityResult("neither", infimum, nz, diagnostic=nz.diagnostic)
    inv = GenNumber.from_values(1.0 / inf_values.astype(complex), P.grid)
    ss = classify_net(inv, "slow_scale", order_bound)
    if ss.passed:
        return EllipticityResult("Ginf_elliptic", infimum, nz, ss)
    return EllipticityResult("G_elliptic", infimum, nz, ss)


def elliptic_lower_bound(
    P: GenPolynomial,
    result: EllipticityResult,
    validation_samples: int = 1000,
    seed: int = 11,
):
    """Constructive lower bound for an elliptic symbol, validated on a radial sample.

    G case: returns ``(a, M)`` with ``|P_eps(xi)| >= eps**a * |xi|**m`` for
    ``|xi| >= eps**-M`` (a = r+1, M = N+r+1 from the fitted infimum exponent r
    and the lower-order growth exponent N).  Ginf case: returns the slow-scale
    pair ``(omega, s)`` with ``|P_eps(xi)| >= omega_eps**-1 |xi|**m`` for
    ``|xi| >= s_eps`` (omega = 2 c, s = d c**2).
    """
    if result.classification == "neither":
        raise ValueError("no lower bound for a non-elliptic symbol")
    m = P.degree
    grid = P.grid
    rng = np.random.default_rng(seed)
    tail = grid.small_half()
    eps_tail = grid.array[tail]
    n_dirs = max(8, validation_samples // 125)
    dirs = _sample_directions(rng, P.dim, n_dirs)
    inf_vals = np.abs(result.infimum.values())

    lower_orders = [a for a in P.coeffs if sum(a) < m]

    if result.classification == "Ginf_elliptic":
        c_net = 1.0 / inf_vals
        omega = GenNumber.from_values((2.0 * c_net).astype(complex), grid)
        if lower_orders:
            d_net = np.zeros(len(grid))
            for a in lower_orders:
                d_net += np.abs(P.coeff_values()[a])
        else:
            d_net = np.zeros(len(grid))
        s_vals = d_net * c_net ** 2
        s = GenNumber.from_values(s_vals.astype(complex), grid)
        radii_scale = np.geomspace(1.0, 1e3, max(2, validation_samples // n_dirs))
        violations = []
        for i, eps_i in zip(tail, eps_tail):
            base = max(s_vals[i], 1.0)
            radii = base * radii_scale
            pts = (dirs[None, :, :] * radii[:, None, None]).reshape(-1, P.dim)
            pv = np.abs(P.eval_points(pts)[i])
            bound = (inf_vals[i] / 2.0) * np.linalg.norm(pts, axis=1) ** m
            bad = pv < bound * (1.0 - 1e-9)
            if np.any(bad):
                j = int(np.argmax(bad))
                violations.append((pts[j].tolist(), float(eps_i)))
        if violations:
            raise ValueError(f"Ginf lower-bound validation failed at {violations[0]}")
        return omega, s

    # G case
    r_fit = valuation(result.infimum).value
    r = max(0.0, r_fit)
    if lower_orders:
        N = max(
            int(math.ceil(max(0.0, -valuation(P.coeffs[a]).value)))
            for a in lower_orders
        )
    else:
        N = 0
    a_exp = r + 1.0
    M = int(math.ceil(N + r + 1.0))
    radii_scale = np.geomspace(1.0, 1e3, max(2, validation_samples // n_dirs))
    violations = []
    for i, eps_i in zip(tail, eps_tail):
        radii = eps_i ** (-float(M)) * radii_scale
        pts = (dirs[None, :, :] * radii[:, None, None]).reshape(-1, P.dim)
        pv = np.abs(P.eval_points(pts)[i])
        bound = eps_i ** a_exp * np.linalg.norm(pts, axis=1) ** m
        bad = pv < bound * (1.0 - 1e-9)
        if np.any(bad):
            j = int(np.argmax(bad))
            violations.append((pts[j].tolist(), float(eps_i)))
    if violations:
        raise ValueError(f"G lower-bound validation failed at {violations[0]}")
    return a_exp, M
