"""Arithmetic and asymptotic classification of eps-parameterized nets of complex numbers.

A net is a family ``(x_eps)`` of complex numbers indexed by a decreasing grid of
eps values in (0, 1].  Nets are represented either exactly, as a finite sum of
terms ``coeff * eps**pow_eps * log(1/eps)**pow_log`` (:class:`ScaleExpr`), or as
a black-box callable sampled on the grid.  The central measurement is the
*valuation*: the supremum of all ``b`` with ``|x_eps| = O(eps**b)``, estimated
for sampled nets by regression of ``log|x_eps|`` against ``log eps``.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "INF_VALUATION",
    "EpsGrid",
    "ScaleExpr",
    "ScaleExprParseError",
    "GenNumber",
    "ValuationEstimate",
    "Certificate",
    "CertificateError",
    "valuation",
    "valuation_with_floor",
    "classify_net",
    "gn_arith",
]

#: Sentinel valuation of the identically-zero net.
INF_VALUATION = math.inf


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsGrid:
    """Ordered grid of eps values in (0, 1], strictly decreasing."""

    points: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 8:
            raise ValueError("EpsGrid needs at least 8 points")
        arr = np.asarray(self.points, dtype=float)
        if np.any(arr <= 0.0) or np.any(arr > 1.0):
            raise ValueError("EpsGrid points must lie in (0, 1]")
        if np.any(np.diff(arr) >= 0.0):
            raise ValueError("EpsGrid points must be strictly decreasing")

    @classmethod
    def default(cls, kmin: int = 4, kmax: int = 44) -> "EpsGrid":
        """Geometric grid eps_k = 2**-k for k = kmin..kmax."""
        if kmax - kmin + 1 < 8:
            raise ValueError("grid must span at least 8 exponents")
        return cls(tuple(2.0 ** -k for k in range(kmin, kmax + 1)))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    @property
    def log_eps(self) -> np.ndarray:
        return np.log(self.array)

    @property
    def log_inv(self) -> np.ndarray:
        """log(1/eps) per grid point (positive, increasing)."""
        return -np.log(self.array)

    def small_half(self) -> np.ndarray:
        """Indices of the smallest-eps half of the grid (the asymptotic window)."""
        n = len(self.points)
        return np.arange(n // 2, n)

    def tail(self, fraction: float = 0.5) -> np.ndarray:
        n = len(self.points)
        start = int(math.floor(n * (1.0 - fraction)))
        return np.arange(min(start, n - 4), n)


# ---------------------------------------------------------------------------
# ScaleExpr
# ---------------------------------------------------------------------------

class ScaleExprParseError(ValueError):
    """Malformed scale-expression text."""


def _normalize_terms(
    terms: Sequence[tuple[complex, float, int]],
) -> tuple[tuple[complex, float, int], ...]:
    merged: dict[tuple[float, int], complex] = {}
    for coeff, pow_eps, pow_log in terms:
        if pow_log < 0 or int(pow_log) != pow_log:
            raise ValueError("pow_log must be a nonnegative integer")
        key = (float(pow_eps), int(pow_log))
        merged[key] = merged.get(key, 0.0) + complex(coeff)
    out = [
        (c, p, l)
        for (p, l), c in merged.items()
        if c != 0
    ]
    out.sort(key=lambda t: (t[1], -t[2]))
    return tuple(out)


@dataclass(frozen=True)
class ScaleExpr:
    """Finite sum of terms ``coeff * eps**pow_eps * log(1/eps)**pow_log``.

    Terms with zero coefficient are dropped and the rest are sorted
    lexicographically by ``(pow_eps, -pow_log)``, so equal expressions have
    equal term tuples.
    """

    terms: tuple[tuple[complex, float, int], ...]

    @classmethod
    def make(cls, terms: Sequence[tuple[complex, float, int]]) -> "ScaleExpr":
        return cls(_normalize_terms(terms))

    @classmethod
    def monomial(cls, coeff: complex = 1.0, pow_eps: float = 0.0, pow_log: int = 0) -> "ScaleExpr":
        return cls.make([(coeff, pow_eps, pow_log)])

    @classmethod
    def zero(cls) -> "ScaleExpr":
        return cls(())

    @classmethod
    def parse(cls, text: str) -> "ScaleExpr":
        return _parse_scale_expr(text)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def exact_valuation(self) -> float:
        """Smallest pow_eps among nonzero terms; +inf sentinel for zero."""
        if not self.terms:
            return INF_VALUATION
        return min(p for _, p, _ in self.terms)

    def eval(self, eps: np.ndarray) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        out = np.zeros(eps.shape, dtype=complex)
        if not self.terms:
            return out
        loginv = -np.log(eps)
        for coeff, pow_eps, pow_log in self.terms:
            term = np.power(eps, pow_eps).astype(complex)
            if pow_log:
                term *= loginv ** pow_log
            out += coeff * term
        return out

    def __add__(self, other: "ScaleExpr") -> "ScaleExpr":
        return ScaleExpr.make(list(self.terms) + list(other.terms))

    def __neg__(self) -> "ScaleExpr":
        return ScaleExpr(tuple((-c, p, l) for c, p, l in self.terms))

    def __sub__(self, other: "ScaleExpr") -> "ScaleExpr":
        return self + (-other)

    def __mul__(self, other: "ScaleExpr") -> "ScaleExpr":
        prods = [
            (c1 * c2, p1 + p2, l1 + l2)
            for c1, p1, l1 in self.terms
            for c2, p2, l2 in other.terms
        ]
        return ScaleExpr.make(prods)

    def scale(self, factor: complex) -> "ScaleExpr":
        return ScaleExpr.make([(factor * c, p, l) for c, p, l in self.terms])

    def conjugate(self) -> "ScaleExpr":
        return ScaleExpr(tuple((c.conjugate(), p, l) for c, p, l in self.terms))

    def as_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for c, p, l in self.terms:
            coeff = f"{c.real:.17g}" if c.imag == 0 else f"{c.real:.17g}{c.imag:+.17g}i"
            factors = [coeff]
            if p != 0:
                factors.append(f"eps^{p:g}")
            if l != 0:
                factors.append(f"log^{l}")
            parts.append("*".join(factors))
        return " + ".join(parts)


_COMPLEX_RE = re.compile(
    r"^(?P<re>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"(?:(?P<im>[+-](?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i)?$"
)
_IMAG_CONT_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i($|\*)")
_EPS_RE = re.compile(r"^eps(?:\^(?P<p>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?))?$")
_LOG_RE = re.compile(r"^log(?:\^(?P<p>\d+))?$")


def _parse_scale_expr(text: str) -> ScaleExpr:
    src = text.strip()
    if not src:
        raise ScaleExprParseError("empty scale expression")
    if src == "0":
        return ScaleExpr.zero()
    chunks = [c.strip() for c in src.split("+")]
    # Re-join chunks that are the imaginary continuation of a complex literal
    # ("0+1i*eps^2" splits into "0" and "1i*eps^2").
    terms_text: list[str] = []
    for chunk in chunks:
        if not chunk:
            raise ScaleExprParseError(f"dangling '+' in {text!r}")
        if terms_text and _IMAG_CONT_RE.match(chunk):
            terms_text[-1] = terms_text[-1] + "+" + chunk
        else:
            terms_text.append(chunk)
    terms: list[tuple[complex, float, int]] = []
    for term_text in terms_text:
        coeff = complex(1.0)
        pow_eps = 0.0
        pow_log = 0
        seen_coeff = seen_eps = seen_log = False
        for factor in (f.strip() for f in term_text.split("*")):
            if not factor:
                raise ScaleExprParseError(f"empty factor in term {term_text!r}")
            m = _EPS_RE.match(factor)
            if m:
                if seen_eps:
                    raise ScaleExprParseError(f"duplicate eps factor in {term_text!r}")
                if factor != "eps" and m.group("p") is None:
                    raise ScaleExprParseError(f"malformed eps power in {term_text!r}")
                pow_eps = float(m.group("p")) if m.group("p") is not None else 1.0
                seen_eps = True
                continue
            if factor.startswith("eps"):
                raise ScaleExprParseError(f"malformed eps factor {factor!r} in {term_text!r}")
            m = _LOG_RE.match(factor)
            if m:
                if seen_log:
                    raise ScaleExprParseError(f"duplicate log factor in {term_text!r}")
                pow_log = int(m.group("p")) if m.group("p") is not None else 1
                seen_log = True
                continue
            if factor.startswith("log"):
                raise ScaleExprParseError(f"malformed log factor {factor!r} in {term_text!r}")
            m = _COMPLEX_RE.match(factor)
            if m:
                if seen_coeff:
                    raise ScaleExprParseError(f"duplicate coefficient in {term_text!r}")
                re_part = float(m.group("re"))
                im_part = float(m.group("im")) if m.group("im") is not None else 0.0
                coeff = complex(re_part, im_part)
                seen_coeff = True
                continue
            raise ScaleExprParseError(f"cannot parse factor {factor!r} in {term_text!r}")
        terms.append((coeff, pow_eps, pow_log))
    return ScaleExpr.make(terms)


# ---------------------------------------------------------------------------
# GenNumber
# ---------------------------------------------------------------------------

class GenNumber:
    """A generalized complex number: Symbolic (ScaleExpr) or Sampled (callable).

    All operations go through :func:`gn_arith`; the dunder operators are thin
    wrappers for the certificate-free subset.
    """

    __slots__ = ("grid", "expr", "fn", "_values")

    def __init__(
        self,
        grid: EpsGrid,
        expr: Optional[ScaleExpr] = None,
        fn: Optional[Callable[[float], complex]] = None,
        values: Optional[np.ndarray] = None,
    ):
        if (expr is None) == (fn is None) and values is None:
            raise ValueError("provide exactly one of expr / fn / values")
        self.grid = grid
        self.expr = expr
        self.fn = fn
        self._values: Optional[np.ndarray] = None
        if values is not None:
            vals = np.asarray(values, dtype=complex)
            if vals.shape != (len(grid),):
                raise ValueError("values must match grid length")
            self._values = vals
            lookup = dict(zip(grid.points, vals))
            self.fn = lambda e: lookup[e]

    # -- constructors -------------------------------------------------------
    @classmethod
    def symbolic(cls, expr: ScaleExpr | str, grid: EpsGrid) -> "GenNumber":
        if isinstance(expr, str):
            expr = ScaleExpr.parse(expr)
        return cls(grid, expr=expr)

    @classmethod
    def sampled(cls, fn: Callable[[float], complex], grid: EpsGrid) -> "GenNumber":
        return cls(grid, fn=fn)

    @classmethod
    def from_values(cls, values: np.ndarray, grid: EpsGrid) -> "GenNumber":
        return cls(grid, values=values)

    @classmethod
    def constant(cls, value: complex, grid: EpsGrid) -> "GenNumber":
        return cls(grid, expr=ScaleExpr.monomial(value, 0.0, 0))

    # -- basic views ---------------------------------------------------------
    @property
    def is_symbolic(self) -> bool:
        return self.expr is not None

    def values(self) -> np.ndarray:
        """Complex values on the grid, cached."""
        if self._values is None:
            if self.expr is not None:
                self._values = self.expr.eval(self.grid.array)
            else:
                out = np.empty(len(self.grid), dtype=complex)
                for i, e in enumerate(self.grid.points):
                    out[i] = complex(self.fn(e))  # type: ignore[misc]
                self._values = out
        return self._values

    def __repr__(self) -> str:
        if self.expr is not None:
            return f"GenNumber({self.expr.as_text()!r})"
        return f"GenNumber(sampled, {len(self.grid)} pts)"

    # -- ergonomic arithmetic -------------------------------------------------
    def __add__(self, other: "GenNumber") -> "GenNumber":
        return gn_arith("add", self, other)

    def __mul__(self, other: "GenNumber") -> "GenNumber":
        return gn_arith("mul", self, other)

    def __neg__(self) -> "GenNumber":
        return gn_arith("neg", self)

    def __sub__(self, other: "GenNumber") -> "GenNumber":
        return gn_arith("add", self, gn_arith("neg", other))

    def conj(self) -> "GenNumber":
        return gn_arith("conj", self)

    def abs(self) -> "GenNumber":
        return gn_arith("abs", self)


# ---------------------------------------------------------------------------
# Valuation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValuationEstimate:
    value: float
    r_squared: float
    window: tuple[int, int]  # [start, stop) indices into the grid


def _fit_valuation(
    log_eps: np.ndarray, log_mag: np.ndarray
) -> tuple[float, float]:
    """Fit log|x| = v*log(eps) + l*log(log(1/eps)) + const; return (v, r^2).

    The log-log regressor absorbs the ``log(1/eps)**k`` factors that scale
    expressions commonly carry, so the eps-exponent is recovered without bias.
    """
    loglog = np.log(-log_eps)
    A = np.column_stack([log_eps, loglog, np.ones_like(log_eps)])
    coef, _, _, _ = np.linalg.lstsq(A, log_mag, rcond=None)
    fitted = A @ coef
    ss_res = float(np.sum((log_mag - fitted) ** 2))
    ss_tot = float(np.sum((log_mag - log_mag.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return float(coef[0]), r2


def valuation(x: GenNumber) -> ValuationEstimate:
    """Estimated valuation sup{b : |x_eps| = O(eps**b)}."""
    n = len(x.grid)
    if x.is_symbolic:
        assert x.expr is not None
        return ValuationEstimate(x.expr.exact_valuation, 1.0, (0, n))
    window = x.grid.small_half()
    vals = x.values()[window]
    mags = np.abs(vals)
    usable = mags > 0.0
    if not np.any(usable):
        return ValuationEstimate(INF_VALUATION, 1.0, (int(window[0]), n))
    if int(usable.sum()) < 4:
        log_eps = x.grid.log_eps[window][usable]
        log_mag = np.log(mags[usable])
        slope = float(np.polyfit(log_eps, log_mag, 1)[0]) if usable.sum() >= 2 else 0.0
        return ValuationEstimate(slope, 0.0, (int(window[0]), n))
    log_eps = x.grid.log_eps[window][usable]
    log_mag = np.log(mags[usable])
    v, r2 = _fit_valuation(log_eps, log_mag)
    return ValuationEstimate(v, r2, (int(window[0]), n))


def valuation_with_floor(x: GenNumber, floor: float) -> ValuationEstimate:
    """Valuation of a residual net, ignoring values below a quadrature floor.

    Values with ``|x_eps| <= floor`` are treated as numerically
    indistinguishable from zero.  When every grid value sits below the floor
    the net is consistent with the exact-zero prediction and the sentinel
    valuation is returned.
    """
    vals = np.abs(x.values())
    window = x.grid.small_half()
    usable = vals[window] > floor
    n = len(x.grid)
    if not np.any(usable):
        return ValuationEstimate(INF_VALUATION, 1.0, (int(window[0]), n))
    if int(usable.sum()) < 4:
        # Too few above-floor points for a fit: bound the valuation from the
        # on-grid certificate |x_eps| <= eps**b.
        log_eps = x.grid.log_eps[window][usable]
        log_mag = np.log(vals[window][usable])
        return ValuationEstimate(float(np.min(log_mag / log_eps)), 0.0, (int(window[0]), n))
    log_eps = x.grid.log_eps[window][usable]
    log_mag = np.log(vals[window][usable])
    v, r2 = _fit_valuation(log_eps, log_mag)
    return ValuationEstimate(v, r2, (int(window[0]), n))


# ---------------------------------------------------------------------------
# Classification certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    mode: str
    passed: bool
    witness: dict = field(default_factory=dict)
    diagnostic: str = ""


class CertificateError(ValueError):
    """An operation was attempted without the required certificate."""


def _window_slope(log_inv: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of log(values) against log(log-scale growth)."""
    usable = values > 0.0
    if usable.sum() < 2:
        return -math.inf
    return float(np.polyfit(log_inv[usable], np.log(values[usable]), 1)[0])


def classify_net(
    x: GenNumber,
    mode: str,
    order_bound: int = 10,
    q: Optional[float] = None,
) -> Certificate:
    """On-grid certificate for the asymptotic class of a net.

    Modes: ``moderate``, ``negligible_up_to`` (requires ``q``), ``slow_scale``,
    ``log_type``, ``strictly_nonzero``, ``strictly_positive``.
    """
    window = x.grid.small_half()
    eps_w = x.grid.array[window]
    log_inv_w = x.grid.log_inv[window]
    vals_w = x.values()[window]
    mags_w = np.abs(vals_w)

    if mode == "moderate":
        est = valuation(x)
        if est.value == INF_VALUATION:
            return Certificate(mode, True, {"N": 0, "valuation": est.value})
        finite = bool(np.all(np.isfinite(mags_w)))
        N = int(math.ceil(max(0.0, -est.value)))
        return Certificate(
            mode, finite, {"N": N, "valuation": est.value, "r_squared": est.r_squared}
        )

    if mode == "negligible_up_to":
        if q is None:
            q = float(order_bound)
        if q > order_bound:
            raise ValueError("q must be <= order_bound")
        est = valuation(x)
        passed = est.value >= q
        return Certificate(
            mode, passed, {"q": q, "valuation": est.value, "r_squared": est.r_squared}
        )

    if mode == "slow_scale":
        witness_c = {}
        for qq in range(1, order_bound + 1):
            w = mags_w ** qq * eps_w
            if not np.all(np.isfinite(w)):
                return Certificate(mode, False, {"q_failed": qq}, "overflow at power %d" % qq)
            slope = _window_slope(log_inv_w, w)
            witness_c[qq] = float(np.max(w)) if w.size else 0.0
            if slope > 0.05:
                return Certificate(
                    mode,
                    False,
                    {"q_failed": qq, "growth_slope": slope, "c_q": witness_c},
                    f"|x|^{qq}*eps grows toward small eps",
                )
        return Certificate(mode, True, {"c_q": witness_c, "order_bound": order_bound})

    if mode == "log_type":
        ratio = mags_w / x.grid.log_inv[window]
        if not np.all(np.isfinite(ratio)):
            return Certificate(mode, False, {}, "non-finite values")
        slope = _window_slope(log_inv_w, ratio)
        bound = float(np.max(ratio)) if ratio.size else 0.0
        passed = slope <= 0.05
        return Certificate(
            mode, passed, {"bound": bound, "growth_slope": slope},
            "" if passed else "|x|/log(1/eps) grows toward small eps",
        )

    if mode == "strictly_nonzero":
        if np.any(mags_w == 0.0):
            return Certificate(mode, False, {}, "zero value on the tail window")
        log_eps_w = x.grid.log_eps[window]
        m = float(np.max(np.log(mags_w) / log_eps_w))
        return Certificate(mode, True, {"m": m})

    if mode == "strictly_positive":
        re_w = vals_w.real
        if np.any(re_w <= 0.0):
            neg = int(np.sum(re_w <= 0.0))
            return Certificate(
                mode, False, {"nonpositive_points": neg},
                "real part not positive on the tail window (possible sign oscillation)",
            )
        re_net = GenNumber.from_values(x.values().real.astype(complex), x.grid)
        nz = classify_net(re_net, "strictly_nonzero", order_bound)
        im_net = GenNumber.from_values(1j * x.values().imag, x.grid)
        im_neg = classify_net(im_net, "negligible_up_to", order_bound, q=float(order_bound))
        passed = nz.passed and im_neg.passed
        return Certificate(
            mode, passed,
            {"m": nz.witness.get("m"), "im_valuation": im_neg.witness.get("valuation")},
            "" if passed else "imaginary part not negligible" if nz.passed else nz.diagnostic,
        )

    raise ValueError(f"unknown classification mode {mode!r}")


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------

def _same_grid(*args: GenNumber) -> EpsGrid:
    grid = args[0].grid
    for a in args[1:]:
        if a.grid is not grid and a.grid.points != grid.points:
            raise ValueError("operands live on different eps-grids")
    return grid


def gn_arith(op: str, *args: GenNumber, cert: Optional[Certificate] = None) -> GenNumber:
    """Ring and guarded operations on generalized numbers.

    ``inv`` demands a ``strictly_nonzero`` certificate and ``exp_log_type`` a
    ``log_type`` certificate; both are re-checked here, and both always return
    Sampled results.  Symbolic representations are preserved under
    ``add``/``mul``/``neg``/``conj``.
    """
    grid = _same_grid(*args)

    if op == "add":
        x, y = args
        if x.is_symbolic and y.is_symbolic:
            return GenNumber.symbolic(x.expr + y.expr, grid)  # type: ignore[operator]
        return GenNumber.from_values(x.values() + y.values(), grid)

    if op == "mul":
        x, y = args
        if x.is_symbolic and y.is_symbolic:
            return GenNumber.symbolic(x.expr * y.expr, grid)  # type: ignore[operator]
        return GenNumber.from_values(x.values() * y.values(), grid)

    if op == "neg":
        (x,) = args
        if x.is_symbolic:
            return GenNumber.symbolic(-x.expr, grid)  # type: ignore[operator]
        return GenNumber.from_values(-x.values(), grid)

    if op == "conj":
        (x,) = args
        if x.is_symbolic:
            return GenNumber.symbolic(x.expr.conjugate(), grid)  # type: ignore[union-attr]
        return GenNumber.from_values(np.conjugate(x.values()), grid)

    if op == "abs":
        (x,) = args
        if x.is_symbolic:
            assert x.expr is not None
            coeffs = [c for c, _, _ in x.expr.terms]
            if all(c.imag == 0 and c.real >= 0 for c in coeffs):
                # Nonnegative combination of positive factors: |x| = x exactly.
                return GenNumber.symbolic(x.expr, grid)
        return GenNumber.from_values(np.abs(x.values()).astype(complex), grid)

    if op == "inv":
        (x,) = args
        check = classify_net(x, "strictly_nonzero")
        if not check.passed:
            raise CertificateError(
                "inv requires a strictly_nonzero net: " + (check.diagnostic or "tail check failed")
            )
        if cert is not None and cert.mode != "strictly_nonzero":
            raise CertificateError("inv certificate must be strictly_nonzero")
        return GenNumber.from_values(1.0 / x.values(), grid)

    if op == "exp_log_type":
        (x,) = args
        check = classify_net(x, "log_type")
        if not check.passed:
            raise CertificateError(
                "exp_log_type requires a log-type net: " + (check.diagnostic or "growth check failed")
            )
        if cert is not None and cert.mode != "log_type":
            raise CertificateError("exp_log_type certificate must be log_type")
        return GenNumber.from_values(np.exp(x.values()), grid)

    raise ValueError(f"unknown operation {op!r}")
