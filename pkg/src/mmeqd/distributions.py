"""Exact densities of the eigenvalue ratio tau = lambda1 / lambda2 for K = 2.

Noise only::

    f0(t) = (N-1) Gamma(2N) / Gamma(N)^2 * (t-1)^2 t^(N-2) / (t+1)^(2N)

Signal present (rank-one non-centrality, omega = 2 alpha N)::

    f1(t) = e^-omega (t-1) t^(N-2) sum_{j>=1} (t^j - 1) Gamma(j+2N-1) omega^(j-1)
            / (j! Gamma(j+N-1) Gamma(N-1) (t+1)^(j+2N-1))

Everything is evaluated in log space. The series for f1 is truncated at
``J_s`` terms; for each tau only the terms within ``SERIES_WINDOW`` nats of
the largest one are summed (the log-terms are concave in j, so the skipped
terms are below exp(-SERIES_WINDOW) relative each, and decay geometrically).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _sp_integrate
from scipy.special import gammaln, ive

from .errors import DomainError, TruncationError
from .numerics import QuadratureSpec, Support, adaptive_support, bisect, logsumexp_rows

#: Log-magnitude window kept around the dominant series term.
SERIES_WINDOW = 40.0
#: llr(1) is evaluated at 1 + LLR_TAU_EPS (both densities vanish at tau = 1).
LLR_TAU_EPS = 1e-9
#: Normalisation criterion for accepting a truncation.
NORMALIZATION_TOL = 1e-5
MAX_TRUNCATION = 1_000_000

# Upper summation bounds J_s, keyed by N then SNR in dB.
TRUNCATION_TABLE = {
    50: {-20: 10, -15: 20, -10: 30, -5: 60, 0: 200},
    100: {-20: 20, -15: 30, -10: 50, -5: 200, 0: 300},
    500: {-20: 30, -15: 60, -10: 200, -5: 400, 0: 2000},
    1000: {-20: 50, -15: 200, -10: 300, -5: 800, 0: 3000},
    5000: {-20: 200, -15: 400, -10: 2000, -5: 4000, 0: 20000},
    10000: {-20: 300, -15: 800, -10: 3000, -5: 7000, 0: 30000},
    50000: {-20: 2000, -15: 4000, -10: 20000, -5: 40000, 0: 200000},
}
TRUNCATION_SNR_DB = (-20, -15, -10, -5, 0)


@dataclass(frozen=True)
class DistParams:
    n: int
    alpha: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError("N must be an integer >= 2")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise DomainError("alpha must be finite and nonnegative")

    @classmethod
    def from_db(cls, n, snr_db):
        return cls(int(n), 10.0 ** (snr_db / 10.0))

    @property
    def omega1(self) -> float:
        return 2.0 * self.alpha * self.n

    @property
    def omega2(self) -> float:
        return 0.0


@dataclass(frozen=True)
class SeriesTruncation:
    j_s: int
    achieved_integral_deviation: float = float("nan")

    def __post_init__(self):
        if int(self.j_s) != self.j_s or self.j_s < 1:
            raise DomainError("J_s must be an integer >= 1")


def _as_tau(tau):
    t = np.asarray(tau, dtype=float)
    if np.any(~(t >= 1.0)):
        raise DomainError("tau must be >= 1")
    return t


# --- H0 -------------------------------------------------------------------

def log_pdf_h0(tau, n: int):
    """log f0(tau); -inf at tau = 1."""
    t = _as_tau(tau)
    if n < 2:
        raise DomainError("N must be >= 2")
    const = math.log(n - 1) + math.lgamma(2 * n) - 2.0 * math.lgamma(n)
    with np.errstate(divide="ignore"):
        out = (const + 2.0 * np.log(t - 1.0) + (n - 2) * np.log(t)
               - 2.0 * n * np.log1p(t))
    return out if out.ndim else float(out)


def pdf_h0(tau, n: int):
    return np.exp(log_pdf_h0(tau, n))


# --- H1 -------------------------------------------------------------------

@functools.lru_cache(maxsize=512)
def _series_coefficients(n: int, alpha: float, j_s: int) -> np.ndarray:
    # A_j = log Gamma(j+2N-1) - log j! - log Gamma(j+N-1) + (j-1) log omega, j = 0..J_s
    j = np.arange(j_s + 1, dtype=float)
    a = (gammaln(j + 2 * n - 1) - gammaln(j + 1) - gammaln(j + n - 1)
         + (j - 1) * math.log(2.0 * alpha * n))
    a.flags.writeable = False
    return a


def _window_log_terms(coef, j, u, lt):
    # log of A_j + j log(t/(t+1)) + log(1 - t^-j), broadcasting j against u/lt
    return coef[j] + j * u + np.log(-np.expm1(-j * lt))


def _series_log_sum(coef: np.ndarray, t: np.ndarray, window: float = SERIES_WINDOW,
                    chunk_cells: int = 2_000_000) -> np.ndarray:
    """log sum_{j=1}^{J} exp(A_j) t^j (1 - t^-j) (t+1)^-j for t > 1.

    Terms are accumulated in ascending j by a sequential cumulative sum so
    the result does not depend on how rows are batched.
    """
    jmax = coef.size - 1
    u = np.log(t) - np.log1p(t)
    lt = np.log(t)
    m = t.size

    def term(jj):
        return _window_log_terms(coef, jj, u, lt)

    # peak: first j with term(j+1) <= term(j); concavity makes this unique
    lo = np.ones(m, dtype=np.int64)
    hi = np.full(m, jmax, dtype=np.int64)
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        go_left = term(np.minimum(mid + 1, jmax)) <= term(mid)
        active = lo < hi
        hi = np.where(active & go_left, mid, hi)
        lo = np.where(active & ~go_left, mid + 1, lo)
    peak = lo
    top = term(peak)
    cut = top - window

    # left edge: smallest j in [1, peak] with term(j) >= cut
    lo = np.ones(m, dtype=np.int64)
    hi = peak.copy()
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        ok = term(mid) >= cut
        active = lo < hi
        hi = np.where(active & ok, mid, hi)
        lo = np.where(active & ~ok, mid + 1, lo)
    left = lo
    # right edge: largest j in [peak, jmax] with term(j) >= cut
    lo = peak.copy()
    hi = np.full(m, jmax, dtype=np.int64)
    while np.any(lo < hi):
        mid = (lo + hi + 1) // 2
        ok = term(mid) >= cut
        active = lo < hi
        lo = np.where(active & ok, mid, lo)
        hi = np.where(active & ~ok, mid - 1, hi)
    right = lo

    out = np.empty(m)
    widths = right - left + 1
    order = np.argsort(widths, kind="stable")
    rows = max(1, chunk_cells // int(widths.max()))
    offsets = np.arange(int(widths.max()))
    for start in range(0, m, rows):
        idx = order[start:start + rows]
        wmax = int(widths[idx].max())
        jj = left[idx, None] + offsets[None, :wmax]
        valid = jj <= right[idx, None]
        np.minimum(jj, jmax, out=jj)
        terms = coef[jj]
        terms += jj * u[idx, None]
        # log(1 - t^-j) is below 4e-18 in magnitude once j log t > 40
        near = left[idx] * lt[idx] < window
        if np.any(near):
            terms[near] += np.log(-np.expm1(-jj[near] * lt[idx][near][:, None]))
        terms -= top[idx, None]
        np.exp(terms, out=terms)
        terms[~valid] = 0.0
        acc = np.cumsum(terms, axis=1)
        out[idx] = top[idx] + np.log(acc[np.arange(idx.size), widths[idx] - 1])
    return out


def log_pdf_h1(tau, params: DistParams, trunc: SeriesTruncation):
    """log f1(tau) with the series truncated at ``trunc.j_s``."""
    t = _as_tau(tau)
    if not params.alpha > 0:
        raise DomainError("alpha = 0: use the H0 density")
    n, omega = params.n, params.omega1
    flat = np.atleast_1d(t).ravel()
    out = np.full(flat.shape, -np.inf)
    inner = flat > 1.0
    if np.any(inner):
        ti = flat[inner]
        coef = _series_coefficients(n, float(params.alpha), int(trunc.j_s))
        series = _series_log_sum(coef, ti)
        out[inner] = (np.log(ti - 1.0) - omega - math.lgamma(n - 1)
                      + (n - 2) * np.log(ti) - (2 * n - 1) * np.log1p(ti) + series)
    out = out.reshape(t.shape)
    return out if out.ndim else float(out)


def pdf_h1(tau, params: DistParams, trunc: SeriesTruncation):
    return np.exp(log_pdf_h1(tau, params, trunc))


# --- Bessel-integral oracle -------------------------------------------------

def _log_bessel_i(order: int, x: float) -> float:
    if x == 0.0:
        return 0.0 if order == 0 else -math.inf
    return math.log(ive(order, x)) + x


def _log_hyp0f1(b: int, x: float) -> float:
    # 0F1(; b; x) = (b-1)! x^{-(b-1)/2} I_{b-1}(2 sqrt(x))
    a = b - 1
    if x == 0.0:
        return 0.0
    return math.lgamma(a + 1) - 0.5 * a * math.log(x) + _log_bessel_i(a, 2.0 * math.sqrt(x))


def pdf_h1_oracle(tau: float, params: DistParams) -> float:
    """f1 by direct numeric integration of the joint eigenvalue density.

    Uses the hypergeometric-determinant form with omega2 = 0 and Bessel
    functions from their truncated power series. Test use only; N <= 20.
    """
    n, w1 = params.n, params.omega1
    if n > 20:
        raise DomainError("oracle restricted to N <= 20")
    if not params.alpha > 0:
        raise DomainError("oracle needs alpha > 0")
    t = float(tau)
    if t < 1:
        raise DomainError("tau must be >= 1")
    if t == 1.0:
        return 0.0
    # K_un with omega2 = 0
    log_k = -w1 - 2.0 * math.lgamma(n - 1) - math.log(w1)

    def log_integrand(lam2):
        lam1 = t * lam2
        h1 = _log_hyp0f1(n - 1, lam1 * w1)
        h2 = _log_hyp0f1(n - 1, lam2 * w1)
        det = h1 + math.log(-math.expm1(h2 - h1))
        return (log_k + math.log(lam2) - (lam1 + lam2) + math.log(lam1 - lam2)
                + (n - 2) * math.log(lam1 * lam2) + det)

    # locate the mode to scale and split the integration range
    grid = np.geomspace(1e-4, 20.0 * (n + w1 + 10.0), 400)
    vals = np.array([log_integrand(g) for g in grid])
    k = int(np.argmax(vals))
    top = vals[k]
    mode = float(grid[k])

    def scaled(lam2):
        return math.exp(log_integrand(lam2) - top) if lam2 > 0 else 0.0

    pts = [0.0, 0.5 * mode, mode, 2.0 * mode, 4.0 * mode]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += _sp_integrate.quad(scaled, a, b, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    total += _sp_integrate.quad(scaled, pts[-1], math.inf, epsabs=0.0, epsrel=1e-12,
                                limit=400)[0]
    return math.exp(top) * total


# --- supports, truncation ---------------------------------------------------

@functools.lru_cache(maxsize=256)
def h0_support(n: int, spec: QuadratureSpec = QuadratureSpec()) -> Support:
    return adaptive_support(lambda t: pdf_h0(t, n), spec)


def h1_support(params: DistParams, trunc: SeriesTruncation,
               spec: QuadratureSpec = QuadratureSpec()) -> Support:
    return _h1_support(params, int(trunc.j_s), spec)


@functools.lru_cache(maxsize=1024)
def _h1_support(params: DistParams, j_s: int, spec: QuadratureSpec) -> Support:
    trunc = SeriesTruncation(j_s)
    return adaptive_support(lambda t: pdf_h1(t, params, trunc), spec)


def normalization_deviation(params: DistParams, j_s: int,
                            spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Integral of the truncated f1 minus one."""
    return h1_support(params, SeriesTruncation(j_s), spec).integral() - 1.0


def table_seed(params: DistParams) -> int:
    """Starting J_s: the tabulated cell, else the next larger tabulated N and SNR."""
    snr_db = 10.0 * math.log10(params.alpha)
    ns = sorted(TRUNCATION_TABLE)
    n_key = next((v for v in ns if v >= params.n), ns[-1])
    col = next((v for v in TRUNCATION_SNR_DB if v >= snr_db - 1e-9), TRUNCATION_SNR_DB[-1])
    return TRUNCATION_TABLE[n_key][col]


@functools.lru_cache(maxsize=1024)
def choose_truncation(params: DistParams, spec: QuadratureSpec = QuadratureSpec(),
                      start: int = 0) -> SeriesTruncation:
    """Smallest J_s in the doubling sequence from the table seed (or ``start``)
    whose truncated f1 integrates to one within 1e-5."""
    if not params.alpha > 0:
        raise DomainError("truncation needs alpha > 0")
    j_s = int(start) if start else table_seed(params)
    while j_s <= MAX_TRUNCATION:
        dev = normalization_deviation(params, j_s, spec)
        if abs(dev) < NORMALIZATION_TOL:
            return SeriesTruncation(j_s, dev)
        j_s *= 2
    raise TruncationError(f"no J_s <= {MAX_TRUNCATION} normalises f1 for {params}")


# --- CDFs ---------------------------------------------------------------------

def log_delta1(a: int, b: int, c: float) -> float:
    """log Delta1(a, b, c), from its defining finite sum.

    Delta1(a, b, c) = (b-1)! (a! - sum_{j<b} (a+j)! c^j / (j! (c+1)^(a+j+1))).
    """
    j = np.arange(b, dtype=float)
    q = c / (c + 1.0)
    logs = (gammaln(a + j + 1) - gammaln(j + 1) - math.lgamma(a + 1)
            + j * math.log(q) - (a + 1) * math.log1p(c))
    rel = float(logsumexp_rows(logs))  # log(sum / a!)
    return math.lgamma(b) + math.lgamma(a + 1) + math.log(-math.expm1(rel))


def p_literal(x: float, n: int):
    """p(x) scaled by 1 / (Gamma(N) Gamma(N-1)), from the three Delta1 sums."""
    scale = math.lgamma(n) + math.lgamma(n - 1)
    return (math.exp(log_delta1(n, n - 1, x) - scale)
            - 2.0 * math.exp(log_delta1(n - 1, n, x) - scale)
            + math.exp(log_delta1(n - 2, n + 1, x) - scale))


def _log_binom_pmf(k, m, logq, log1q):
    return (gammaln(m + 1.0) - gammaln(k + 1.0) - gammaln(m - k + 1.0)
            + k * logq + (m - k) * log1q)


def _binom_lower_tail(n: int, x: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
    # P(B <= n - 1), B ~ Binomial(2n - 1, x / (x + 1)), summed in log space
    m = 2 * n - 1
    out = np.empty(x.size)
    rows = max(1, chunk // n)
    k = np.arange(n, dtype=float)[None, :]
    lk = gammaln(m + 1.0) - gammaln(k + 1.0) - gammaln(m - k + 1.0)
    for s in range(0, x.size, rows):
        xs = x[s:s + rows, None]
        logq = np.log(xs) - np.log1p(xs)
        log1q = -np.log1p(xs)
        out[s:s + rows] = np.exp(logsumexp_rows(lk + k * logq + (m - k) * log1q))
    return out


def cdf_h0(x, n: int):
    """F0(x) = K_uc (p(x) - p(1)).

    Each Delta1(a, b, c) with a + b = 2N - 1 equals (b-1)! a! P(B >= b),
    B ~ Binomial(2N - 1, c / (c + 1)). Substituting into p and cancelling the
    O(N)-weighted tails exactly gives

        F0(x) = N P(B = N) (1/x - 1) + 1 - 2 P(B <= N - 1),

    which keeps full absolute precision for N up to 1e5 and beyond, and
    fixes K_uc = 1 / (Gamma(N) Gamma(N-1)), i.e. F0(inf) = 1.
    """
    xa = _as_tau(x)
    flat = np.atleast_1d(xa).astype(float).ravel()
    m = 2 * n - 1
    logq = np.log(flat) - np.log1p(flat)
    log1q = -np.log1p(flat)
    pmf_n = np.exp(_log_binom_pmf(float(n), m, logq, log1q))
    lower = _binom_lower_tail(n, flat)
    f = n * pmf_n * (1.0 / flat - 1.0) + 1.0 - 2.0 * lower
    f = np.clip(f, 0.0, 1.0)
    f[flat == 1.0] = 0.0
    f = f.reshape(xa.shape)
    return f if f.ndim else float(f)


def k_uc_normalized(n: int, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """log K_uc from F0(tau_max) = 1 using the literal Delta1 sums."""
    upper = h0_support(n, spec).upper
    scale = math.lgamma(n) + math.lgamma(n - 1)
    return -(scale + math.log(p_literal(upper, n) - p_literal(1.0, n)))


def cdf_h1(x, params: DistParams, trunc: SeriesTruncation,
           spec: QuadratureSpec = QuadratureSpec()):
    """F1(x): trapezoid of f1 over [1, x] on the adaptive support grid.

    The last partial bin ends exactly at x. Values are clamped to [0, 1].
    """
    xa = _as_tau(x)
    sup = h1_support(params, trunc, spec)
    flat = np.atleast_1d(xa).astype(float).ravel()
    vals = sup.values
    h = sup.bin_width
    cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (vals[1:] + vals[:-1]))))
    k = np.clip(np.floor((flat - 1.0) / h).astype(np.int64), 0, vals.size - 1)
    inside = flat < sup.upper
    out = np.empty(flat.size)
    out[~inside] = cum[-1]
    if np.any(inside):
        ki = k[inside]
        xi = flat[inside]
        fx = pdf_h1(xi, params, trunc)
        out[inside] = cum[ki] + 0.5 * (xi - sup.tau[ki]) * (vals[ki] + fx)
    out = np.clip(out, 0.0, 1.0)
    out[flat == 1.0] = 0.0
    out = out.reshape(xa.shape)
    return out if out.ndim else float(out)


# --- log-likelihood ratio --------------------------------------------------------

def llr(tau, params: DistParams, trunc: SeriesTruncation):
    """log f1(tau) - log f0(tau); tau = 1 is evaluated at 1 + LLR_TAU_EPS."""
    t = _as_tau(tau)
    t = np.where(t == 1.0, 1.0 + LLR_TAU_EPS, t)
    out = log_pdf_h1(t, params, trunc) - log_pdf_h0(t, params.n)
    return out if np.ndim(out) else float(out)


def llr_series(tau: float, params: DistParams, j_s: int) -> float:
    """Log-likelihood ratio from its Pochhammer series (independent path).

    l = -omega - log(t-1) + log sum_j (t^j - 1) omega^(j-1) (2N)_(j-1)
        / (j! (t+1)^(j-1) (N)_(j-1))
    """
    n, w = params.n, params.omega1
    t = float(tau)
    terms = []
    for j in range(1, j_s + 1):
        log_poch_2n = math.lgamma(2 * n + j - 1) - math.lgamma(2 * n)
        log_poch_n = math.lgamma(n + j - 1) - math.lgamma(n)
        lt = (math.log(math.expm1(j * math.log(t))) + (j - 1) * math.log(w)
              + log_poch_2n - math.lgamma(j + 1) - (j - 1) * math.log1p(t) - log_poch_n)
        terms.append(lt)
    peak = max(terms)
    s = peak + math.log(math.fsum(math.exp(v - peak) for v in terms))
    return -w - math.log(t - 1.0) + s


def quantile_h0(prob: float, n: int, tol: float = 1e-13) -> float:
    """x with F0(x) = prob, by bisection on the adaptive support."""
    if not 0 <= prob <= 1:
        raise DomainError("probability must lie in [0, 1]")
    if prob == 0:
        return 1.0
    upper = h0_support(n).upper
    if prob >= cdf_h0(upper, n):
        return upper
    return bisect(lambda v: cdf_h0(v, n) - prob, 1.0, upper, tol)
