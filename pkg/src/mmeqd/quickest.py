"""Quickest detection on the block statistic stream: CUSUM for a known SNR,
GLR over a finite SNR grid, and the Wald-type bounds on mean detection delay
and mean time to false alarm.

All times here are in blocks; multiply by N (``to_sample_timescale``) for
samples.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .distributions import (DistParams, SeriesTruncation, choose_truncation, h0_support,
                            h1_support, llr)
from .errors import BoundUndefinedError, DomainError
from .numerics import QuadratureSpec, trapezoid
from .signal_model import H0, H1, TestStatistic

#: Number of log-spaced excess thresholds delta used for gamma(f).
DELTA_POINTS = 200
#: The delta grid spans [DELTA_MIN_RATIO * delta_max, delta_max].
DELTA_MIN_RATIO = 1e-4
#: Root of the moment condition used by the false-alarm bound (exact here).
PHI = -1.0

#: Default GLR grids in dB as (start, stop, step).
GRID_QD_DB = (-20.0, -5.0, 0.1)
GRID_RUNTIME_DB = (-25.0, -5.0, 0.1)


def _tau_value(tau) -> float:
    return float(tau.tau if isinstance(tau, TestStatistic) else tau)


# --- CUSUM -------------------------------------------------------------------

@dataclass(frozen=True)
class CusumState:
    """CUSUM decision statistic after ``k`` blocks.

    ``m`` is the last block at which g was reset to zero (0 before any data).
    """

    g: float = 0.0
    k: int = 0
    alarmed_at: Optional[int] = None
    m: int = 0


def cusum_update(g: float, l: float) -> float:
    return max(0.0, g + l)


def cusum_step_llr(state: CusumState, l: float, h: float) -> CusumState:
    """One CUSUM block with a precomputed log-likelihood ratio."""
    if state.alarmed_at is not None:
        return state
    k = state.k + 1
    s = state.g + l
    if s <= 0.0:
        return CusumState(0.0, k, None, k)
    return CusumState(s, k, k if s > h else None, state.m)


def cusum_step(state: CusumState, tau, params: DistParams, trunc: SeriesTruncation,
               h: float) -> CusumState:
    """g' = max(0, g + l(tau)); alarm latched at the first g' > h."""
    if not h > 0:
        raise DomainError("threshold h must be positive")
    if state.alarmed_at is not None:
        return state
    return cusum_step_llr(state, llr(_tau_value(tau), params, trunc), h)


def cusum_run(llrs: Sequence[float], h: float) -> Tuple[np.ndarray, Optional[int]]:
    """g(k) for a whole llr sequence, without stopping at the alarm."""
    g = np.empty(len(llrs))
    cur = 0.0
    alarm = None
    for i, l in enumerate(llrs):
        cur = cusum_update(cur, float(l))
        g[i] = cur
        if alarm is None and cur > h:
            alarm = i + 1
    return g, alarm


# --- GLR ---------------------------------------------------------------------

def db_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive dB grid start, start + step, ..., stop (rounded to 1e-10 dB)."""
    if not step > 0 or stop < start:
        raise DomainError("grid needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 10)


def parse_grid(text: str) -> Tuple[float, float, float]:
    """Parse ``START:STOP:STEP`` (dB)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise DomainError(f"grid must be START:STOP:STEP, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise DomainError(f"grid must be START:STOP:STEP, got {text!r}") from exc
    db_grid(start, stop, step)
    return start, stop, step


@dataclass(frozen=True)
class GlrGrid:
    """Candidate SNRs (ascending) with a verified truncation for each."""

    n: int
    snr_db: Tuple[float, ...]
    truncations: Tuple[SeriesTruncation, ...]

    @classmethod
    def build(cls, n: int, snr_db: Sequence[float], spec: QuadratureSpec = QuadratureSpec(),
              j_s: Optional[int] = None) -> "GlrGrid":
        grid = tuple(float(v) for v in snr_db)
        if not grid:
            raise DomainError("GLR grid must be non-empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError("GLR grid must be strictly ascending")
        truncs = []
        for v in grid:
            p = DistParams.from_db(n, v)
            truncs.append(SeriesTruncation(j_s) if j_s else choose_truncation(p, spec))
        return cls(n, grid, tuple(truncs))

    @property
    def params(self) -> Tuple[DistParams, ...]:
        return tuple(DistParams.from_db(self.n, v) for v in self.snr_db)

    def llr_matrix(self, tau) -> np.ndarray:
        """llr for every candidate: shape ``tau.shape + (len(grid),)``."""
        t = np.asarray(tau, dtype=float)
        cols = [np.asarray(llr(t, p, tr)) for p, tr in zip(self.params, self.truncations)]
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class GlrState:
    """Per-candidate CUSUM sums and their last reset blocks.

    ``g`` is the maximum of ``sums``; ``alpha_hat_db`` and ``m_star`` belong
    to the first (smallest SNR) candidate achieving it.
    """

    sums: np.ndarray
    resets: np.ndarray
    k: int = 0
    g: float = 0.0
    alpha_hat_db: float = math.nan
    m_star: int = 0
    alarmed_at: Optional[int] = None

    @classmethod
    def initial(cls, size: int) -> "GlrState":
        if size < 1:
            raise DomainError("GLR grid must be non-empty")
        return cls(np.zeros(size), np.zeros(size, dtype=np.int64))


def glr_step_llr(state: GlrState, l: np.ndarray, grid_db: Sequence[float],
                 h: float) -> GlrState:
    """One GLR block given the llr of every candidate."""
    if state.alarmed_at is not None:
        return state
    k = state.k + 1
    s = state.sums + np.asarray(l, dtype=float)
    reset = s <= 0.0
    sums = np.where(reset, 0.0, s)
    resets = np.where(reset, k, state.resets)
    i = int(np.argmax(sums))
    g = float(sums[i])
    return GlrState(sums, resets, k, g, float(grid_db[i]), int(resets[i]),
                    k if g > h else None)


def glr_step(state: GlrState, tau, grid: GlrGrid, h: float) -> GlrState:
    """Update every candidate's CUSUM; g_G is their maximum; alarm at g_G > h."""
    if not h > 0:
        raise DomainError("threshold h must be positive")
    if state.alarmed_at is not None:
        return state
    return glr_step_llr(state, grid.llr_matrix(_tau_value(tau)), grid.snr_db, h)


def glr_brute_force(llr_rows: np.ndarray) -> np.ndarray:
    """g_G(k) = max_{0<=m<=k} max_i sum_{j=m+1}^{k} l_i(j), by enumeration.

    ``llr_rows`` has shape (k_max, grid size). Reference implementation.
    """
    rows = np.asarray(llr_rows, dtype=float)
    out = np.empty(rows.shape[0])
    for k in range(1, rows.shape[0] + 1):
        best = 0.0
        for m in range(k):
            best = max(best, float(np.max(rows[m:k].sum(axis=0))))
        out[k - 1] = best
    return out


# --- expectations and bounds ---------------------------------------------------

@functools.lru_cache(maxsize=64)
def _llr_on_support(under: str, params: DistParams, j_s: int, spec: QuadratureSpec):
    trunc = SeriesTruncation(j_s)
    if under == H0:
        sup = h0_support(params.n, spec)
    elif under == H1:
        sup = h1_support(params, trunc, spec)
    else:
        raise DomainError(f"unknown hypothesis {under!r}")
    l = np.asarray(llr(sup.tau, params, trunc))
    return sup.values, l, sup.bin_width


def _check_alpha(params: DistParams):
    if not params.alpha > 0:
        raise DomainError("bounds need alpha > 0")


def expectation_llr(under: str, params: DistParams, trunc: Optional[SeriesTruncation] = None,
                    spec: QuadratureSpec = QuadratureSpec()) -> float:
    """E_f[l] by trapezoid on the adaptive support of f."""
    _check_alpha(params)
    trunc = trunc or choose_truncation(params, spec)
    f, l, dx = _llr_on_support(under, params, int(trunc.j_s), spec)
    return trapezoid(l * f, dx)


def delta_grid(delta_max: float, points: int = DELTA_POINTS,
               min_ratio: float = DELTA_MIN_RATIO) -> np.ndarray:
    return np.logspace(math.log10(delta_max * min_ratio), math.log10(delta_max), points)


def gamma_f(under: str, params: DistParams, trunc: Optional[SeriesTruncation] = None,
            spec: QuadratureSpec = QuadratureSpec(), points: int = DELTA_POINTS) -> float:
    """sup over a delta grid of E_f[l - delta | l >= delta].

    A delta with zero conditioning mass contributes 0.
    """
    _check_alpha(params)
    trunc = trunc or choose_truncation(params, spec)
    f, l, dx = _llr_on_support(under, params, int(trunc.j_s), spec)
    delta_max = float(np.max(l))
    if not delta_max > 0:
        return 0.0
    best = 0.0
    for d in delta_grid(delta_max, points):
        mask = l >= d
        mass = trapezoid(f * mask, dx)
        if mass > 0:
            best = max(best, trapezoid((l - d) * f * mask, dx) / mass)
    return best


@dataclass(frozen=True)
class QdBounds:
    tau_d_upper: float
    tau_fa_lower: float
    tau_fa_simple: float
    phi: float
    gamma_f0: float
    gamma_f1: float
    e_l_f0: float
    e_l_f1: float


@dataclass(frozen=True)
class BoundConstants:
    """h-independent constants shared by the bounds."""

    e_l_f0: float
    e_l_f1: float
    gamma_f0: float
    gamma_f1: float
    phi: float = PHI

    @classmethod
    def compute(cls, params: DistParams, trunc: Optional[SeriesTruncation] = None,
                spec: QuadratureSpec = QuadratureSpec()) -> "BoundConstants":
        trunc = trunc or choose_truncation(params, spec)
        return cls(expectation_llr(H0, params, trunc, spec),
                   expectation_llr(H1, params, trunc, spec),
                   gamma_f(H0, params, trunc, spec),
                   gamma_f(H1, params, trunc, spec))

    def td_upper(self, h: float) -> float:
        _check_h(h)
        if not self.e_l_f1 > 0:
            raise BoundUndefinedError(f"E_f1[l] = {self.e_l_f1!r} is not positive")
        return (h + self.gamma_f1) / self.e_l_f1

    def tfa_lower(self, h: float) -> float:
        _check_h(h)
        if not self.e_l_f0 < 0:
            raise BoundUndefinedError(f"E_f0[l] = {self.e_l_f0!r} is not negative")
        # (e^{-phi h} - 1) / phi with phi = -1
        return (1.0 - math.exp(h) + h + self.gamma_f0) / self.e_l_f0

    def bounds(self, h: float) -> QdBounds:
        return QdBounds(self.td_upper(h), self.tfa_lower(h), bound_tfa_simple(h), self.phi,
                        self.gamma_f0, self.gamma_f1, self.e_l_f0, self.e_l_f1)


def _check_h(h):
    if not h > 0:
        raise DomainError("threshold h must be positive")


def bound_td_upper(h: float, params: DistParams, trunc: Optional[SeriesTruncation] = None,
                   spec: QuadratureSpec = QuadratureSpec(),
                   gamma: Optional[float] = None) -> float:
    """(h + gamma(f1)) / E_f1[l]; ``gamma`` overrides the computed gamma(f1)."""
    _check_h(h)
    _check_alpha(params)
    e1 = expectation_llr(H1, params, trunc, spec)
    g1 = gamma_f(H1, params, trunc, spec) if gamma is None else gamma
    return BoundConstants(-1.0, e1, 0.0, g1).td_upper(h)


def bound_tfa_lower(h: float, params: DistParams, trunc: Optional[SeriesTruncation] = None,
                    spec: QuadratureSpec = QuadratureSpec()) -> float:
    """(1 - e^h + h + gamma(f0)) / E_f0[l]."""
    _check_h(h)
    _check_alpha(params)
    e0 = expectation_llr(H0, params, trunc, spec)
    g0 = gamma_f(H0, params, trunc, spec)
    return BoundConstants(e0, 1.0, g0, 0.0).tfa_lower(h)


def bound_tfa_simple(h: float) -> float:
    if not h >= 0:
        raise DomainError("threshold h must be nonnegative")
    return math.exp(h)


def qd_bounds(h: float, params: DistParams, trunc: Optional[SeriesTruncation] = None,
              spec: QuadratureSpec = QuadratureSpec()) -> QdBounds:
    return BoundConstants.compute(params, trunc, spec).bounds(h)


def to_sample_timescale(blocks, n: int):
    return blocks * n
