"""Fixed-block MME detection: false-alarm and detection probabilities,
threshold design and ROC curves."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .distributions import (DistParams, SeriesTruncation, cdf_h0, cdf_h1, choose_truncation,
                            h0_support)
from .errors import DesignError, DomainError
from .numerics import bisect

log = logging.getLogger(__name__)

CLAMP_WARN = 1e-6
DESIGN_TOL = 1e-8


@dataclass(frozen=True)
class RocPoint:
    h: float
    p_fa: float
    p_d: float


def _clamp(p, what):
    arr = np.asarray(p, dtype=float)
    excess = np.max(np.maximum(arr - 1.0, -arr), initial=0.0)
    if excess > CLAMP_WARN:
        log.warning("%s clamped into [0, 1] by %.3g", what, excess)
    out = np.clip(arr, 0.0, 1.0)
    return out if out.ndim else float(out)


def _check_h(h):
    arr = np.asarray(h, dtype=float)
    if np.any(~(arr >= 1.0)):
        raise DomainError("threshold h must be >= 1")
    return arr


def pfa(h, n: int):
    """P_fa(h) = 1 - F0(h)."""
    _check_h(h)
    return _clamp(1.0 - np.asarray(cdf_h0(h, n)), "P_fa")


def pd(h, params: DistParams, trunc: Optional[SeriesTruncation] = None):
    """P_d(h) = 1 - F1(h), with F1 by quadrature."""
    _check_h(h)
    if not params.alpha > 0:
        raise DomainError("P_d needs alpha > 0")
    trunc = trunc or choose_truncation(params)
    return _clamp(1.0 - np.asarray(cdf_h1(h, params, trunc)), "P_d")


def design_threshold(n: int, target_pfa: float) -> float:
    """Threshold h with P_fa(h) = target_pfa (bisection on the H0 support)."""
    if not 0 < target_pfa <= 1:
        raise DesignError(f"target P_fa must lie in (0, 1], got {target_pfa}")
    if target_pfa == 1.0:
        return 1.0
    upper = h0_support(n).upper
    floor = pfa(upper, n)
    if target_pfa <= floor:
        raise DesignError(f"target P_fa {target_pfa} below the resolvable floor {floor:.3g}")
    h = bisect(lambda x: pfa(x, n) - target_pfa, 1.0, upper, tol=1e-14)
    achieved = pfa(h, n)
    if abs(achieved - target_pfa) >= DESIGN_TOL:
        raise DesignError(f"bisection reached P_fa {achieved!r} for target {target_pfa!r}")
    return h


def default_pfa_grid(points: int = 20) -> np.ndarray:
    """Log-spaced P_fa values on [1e-4, 1]."""
    return np.logspace(-4, 0, points)


def roc(n: int, alpha: float, h_grid: Optional[Sequence[float]] = None,
        pfa_grid: Optional[Sequence[float]] = None,
        trunc: Optional[SeriesTruncation] = None) -> List[RocPoint]:
    """ROC points ordered by increasing threshold.

    Give either thresholds or target false-alarm rates (default: 20 log-spaced
    P_fa values). The h = 1 endpoint (1, 1) is always included.
    """
    params = DistParams(n, alpha)
    trunc = trunc or choose_truncation(params)
    if h_grid is not None and pfa_grid is not None:
        raise DomainError("give h_grid or pfa_grid, not both")
    if h_grid is None:
        targets = default_pfa_grid() if pfa_grid is None else np.asarray(pfa_grid, float)
        if np.any(np.diff(targets) < 0):
            raise DomainError("pfa_grid must be sorted ascending")
        hs = sorted({design_threshold(n, float(q)) for q in targets} | {1.0})
    else:
        hs = np.asarray(h_grid, dtype=float)
        if np.any(np.diff(hs) < 0):
            raise DomainError("h_grid must be sorted ascending")
        hs = sorted(set(hs.tolist()) | {1.0})
    hs = np.asarray(hs)
    fa = np.atleast_1d(pfa(hs, n))
    det = np.atleast_1d(pd(hs, params, trunc))
    return [RocPoint(float(h), float(a), float(b)) for h, a, b in zip(hs, fa, det)]
