"""Shared numerical kernels: log-gamma, signed log-domain sums, trapezoidal
quadrature of densities on [1, inf), and bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import BracketError, DomainError, QuadratureError

#: Minimum number of trapezoid bins covering an adaptive support.
MIN_BINS = 10_000
#: Initial support width (tau_max - 1) tried by the adaptive search.
INITIAL_SPAN = 0.01
#: Supports wider than this are rejected (heavy-tailed, tiny-N densities).
MAX_SPAN = 2048.0
#: Bins of the coarse pre-scan that locates the span.
COARSE_BINS = 400


def log_gamma(x):
    """log Gamma(x) for x > 0; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"log_gamma requires finite x > 0, got {x!r}")
    if arr.ndim == 0:
        return math.lgamma(float(arr))
    return gammaln(arr)


def log_sum_exp(terms: Iterable[Tuple[int, float]]) -> Tuple[int, float]:
    """Signed log of ``sum(sign * exp(log_mag))``.

    Returns ``(sign, log_magnitude)``; an exactly cancelling sum gives
    ``(+1, -inf)``.
    """
    terms = list(terms)
    if not terms:
        raise DomainError("log_sum_exp needs at least one term")
    peak = max(lm for _, lm in terms)
    if peak == -math.inf:
        return 1, -math.inf
    total = math.fsum(s * math.exp(lm - peak) for s, lm in terms)
    if total == 0.0:
        return 1, -math.inf
    return (1 if total > 0 else -1), peak + math.log(abs(total))


def logsumexp_rows(log_terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """Vectorised log(sum(exp(.))) of nonnegative terms along ``axis``."""
    return logsumexp(log_terms, axis=axis)


@dataclass(frozen=True)
class QuadratureSpec:
    bin_width: float = 1e-3
    tail_mass_tol: float = 1e-8
    upper_limit_hint: Optional[float] = None

    def __post_init__(self):
        if not self.bin_width > 0:
            raise DomainError("bin_width must be positive")
        if not 0 < self.tail_mass_tol <= 1e-3:
            raise DomainError("tail_mass_tol must lie in (0, 1e-3]")
        if self.upper_limit_hint is not None and not self.upper_limit_hint > 1:
            raise DomainError("upper_limit_hint must exceed 1")


@dataclass(frozen=True)
class Support:
    """Uniform grid on [1, tau_max] with the integrand sampled on it."""

    tau: np.ndarray
    values: np.ndarray
    bin_width: float
    tail_mass: float

    @property
    def upper(self) -> float:
        return float(self.tau[-1])

    def integral(self) -> float:
        return trapezoid(self.values, self.bin_width)


def trapezoid(values: np.ndarray, dx: float) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(dx * (np.sum(v) - 0.5 * (v[0] + v[-1])))


def _tail_mass(tau: np.ndarray, vals: np.ndarray) -> float:
    # Exponential fit over the last tenth of the bins, integrated to infinity.
    m = vals.size
    d = max(m // 10, 2)
    if not np.any(vals > 0):
        return math.inf
    if int(np.argmax(vals)) >= m - d:
        return math.inf
    f_end = vals[-1]
    if f_end == 0.0:
        return 0.0
    f_start = vals[-d - 1]
    if f_start <= f_end:
        return math.inf
    rate = math.log(f_start / f_end) / (tau[-1] - tau[-d - 1])
    return float(f_end / rate)


def _check_finite(tau, vals):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        t = float(tau[np.argmax(bad)])
        raise QuadratureError(f"integrand not finite at tau={t!r}", tau=t)


def adaptive_support(f: Callable[[np.ndarray], np.ndarray],
                     spec: QuadratureSpec = QuadratureSpec()) -> Support:
    """Find [1, tau_max] holding all but ``tail_mass_tol`` of the integrand.

    The span is doubled until the extrapolated tail mass is below tolerance.
    The bin width is ``min(spec.bin_width, span / MIN_BINS)``.
    """
    span = (spec.upper_limit_hint - 1.0) if spec.upper_limit_hint else INITIAL_SPAN
    coarse = True
    while span <= MAX_SPAN:
        if coarse:
            # cheap pre-scan to locate the span; the accepted grid is re-checked
            tau = 1.0 + np.linspace(0.0, span, COARSE_BINS + 1)
            vals = np.asarray(f(tau), dtype=float)
            _check_finite(tau, vals)
            if _tail_mass(tau, vals) < spec.tail_mass_tol:
                coarse = False
                continue
            span *= 2.0
            continue
        width = min(spec.bin_width, span / MIN_BINS)
        n = int(math.ceil(span / width - 1e-9))
        tau = 1.0 + width * np.arange(n + 1)
        vals = np.asarray(f(tau), dtype=float)
        _check_finite(tau, vals)
        tail = _tail_mass(tau, vals)
        if tail < spec.tail_mass_tol:
            tau.flags.writeable = False
            vals.flags.writeable = False
            return Support(tau, vals, width, tail)
        span *= 2.0
    if not np.any(vals > 0):
        # zero on the whole scanned range, e.g. f = 0
        return Support(tau, vals, float(tau[1] - tau[0]), 0.0)
    raise QuadratureError(f"support not bounded below tau={1.0 + MAX_SPAN}",
                          tau=1.0 + MAX_SPAN)


def integrate(f: Callable[[np.ndarray], np.ndarray],
              spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Trapezoidal estimate of the integral of ``f`` over [1, inf).

    ``f`` is called with numpy arrays of abscissae.
    """
    return adaptive_support(f, spec).integral()


def bisect(f: Callable[[float], float], lo: float, hi: float,
           tol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of ``f`` in [lo, hi]; returns the midpoint of the final bracket."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def db_to_linear(db):
    out = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(alpha):
    out = 10.0 * np.log10(np.asarray(alpha, dtype=float))
    return float(out) if out.ndim == 0 else out
