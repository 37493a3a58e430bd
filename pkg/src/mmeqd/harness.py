"""Seeded Monte-Carlo experiments for the quickest detectors.

Trial ``i`` of experiment ``seed`` draws its statistics from the stream
``make_rng(seed, b, i)``, where ``b`` codes the stream kind (see
``STREAM_CODES``). Each trial draws its blocks in fixed chunks of
``CHUNK_BLOCKS``, so its statistic sequence does not depend on which other
trials run alongside it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .distributions import (LLR_TAU_EPS, NORMALIZATION_TOL, SERIES_WINDOW, DistParams,
                            SeriesTruncation, choose_truncation, llr)
from .errors import DomainError, EstimationError
from .numerics import QuadratureSpec
from .quickest import (DELTA_MIN_RATIO, DELTA_POINTS, CusumState, GlrGrid, GlrState,
                       cusum_step_llr, db_grid, expectation_llr, glr_step_llr)
from .signal_model import GENERATOR_NAME, H0, H1, ModelConfig, make_rng, sample_statistics

log = logging.getLogger(__name__)

CUSUM = "cusum"
GLR = "glr"
ALGORITHMS = (CUSUM, GLR)

#: Stream kind codes: the second stream id.
STREAM_CODES = {"H0": 0, "H1": 1, "mixed": 2, "cycle-H0": 3, "cycle-IS": 4}
CHUNK_BLOCKS = 32
#: Runs without an alarm after this many blocks are censored.
DEFAULT_MAX_BLOCKS = 10_000
DEFAULT_SEEDS = 200
FULL_SEEDS = 1000
#: Means from fewer uncensored trials are reported with a warning.
MIN_UNCENSORED = 30
DEFAULT_SAMPLER = "wishart"
#: Renewal cycles longer than this are treated as a failure.
MAX_CYCLE_BLOCKS = 1_000_000

SEED_SCHEME = ("trial i of experiment seed s uses Philox keyed by SeedSequence([s, b, i]); "
               "b: 0 pure H0, 1 pure H1, 2 mid-stream change, 3 H0 renewal cycles, "
               "4 importance-sampled cycles; blocks drawn in chunks of %d" % CHUNK_BLOCKS)


@dataclass(frozen=True)
class Scenario:
    """One quickest-detection experiment; ``seed`` is the experiment id."""

    config: ModelConfig
    algorithm: str
    h: float
    change_block: float = 1
    max_blocks: int = DEFAULT_MAX_BLOCKS
    glr_grid: Optional[Tuple[float, float, float]] = None
    seed: int = 0
    sampler: str = DEFAULT_SAMPLER
    j_s: Optional[int] = None
    spec: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise DomainError(f"algorithm must be one of {ALGORITHMS}")
        if not self.h > 0:
            raise DomainError("threshold h must be positive")
        if not self.change_block >= 1:
            raise DomainError("change_block must be >= 1")
        if int(self.max_blocks) != self.max_blocks or self.max_blocks < 0:
            raise DomainError("max_blocks must be a nonnegative integer")
        if self.algorithm == GLR and self.glr_grid is None:
            raise DomainError("GLR needs a grid")
        if self.algorithm == CUSUM and not self.config.snr > 0:
            raise DomainError("CUSUM needs a known SNR > 0")
        if self.seed < 0:
            raise DomainError("seed must be nonnegative")

    @property
    def stream_code(self) -> int:
        if self.change_block == 1:
            return STREAM_CODES["H1"]
        if math.isinf(self.change_block):
            return STREAM_CODES["H0"]
        return STREAM_CODES["mixed"]

    @property
    def hypothesis(self) -> str:
        return {0: H0, 1: H1}.get(self.stream_code, "mixed")

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.config.snr) if self.config.snr > 0 else -math.inf


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    alarm_block: Optional[int]
    is_false_alarm: bool
    detection_delay_blocks: Optional[int]
    hypothesis: str = H1

    @property
    def censored(self) -> bool:
        return self.alarm_block is None


@dataclass(frozen=True)
class TauEstimate:
    mean_blocks: float
    std_error: float
    censored_count: int
    used: int


# --- detectors -----------------------------------------------------------------

class _Detector:
    """Maps statistics to per-candidate llr values; CUSUM has one candidate."""

    def __init__(self, scenario: Scenario):
        n = scenario.config.n
        if scenario.algorithm == CUSUM:
            params = DistParams(n, scenario.config.snr)
            trunc = (SeriesTruncation(scenario.j_s) if scenario.j_s
                     else choose_truncation(params, scenario.spec))
            self.grid_db = (scenario.snr_db,)
            self._llr = lambda t: np.asarray(llr(t, params, trunc))[..., None]
            self.truncations = (trunc,)
        else:
            grid = GlrGrid.build(n, db_grid(*scenario.glr_grid), scenario.spec, scenario.j_s)
            self.grid_db = grid.snr_db
            self._llr = grid.llr_matrix
            self.truncations = grid.truncations

    def llr(self, tau: np.ndarray) -> np.ndarray:
        return self._llr(tau)


def _draw_chunk(config: ModelConfig, rng, change_block: float, first: int, count: int,
                sampler: str) -> np.ndarray:
    # blocks first+1 .. first+count; blocks before change_block are H0
    n0 = int(min(count, max(0.0, change_block - 1 - first)))
    parts = []
    if n0:
        parts.append(sample_statistics(config, H0, rng, n0, method=sampler))
    if count - n0:
        parts.append(sample_statistics(config, H1, rng, count - n0, method=sampler))
    return np.concatenate(parts)


def _record(scenario: Scenario, trial: int, alarm: Optional[int]) -> TrialRecord:
    kc = scenario.change_block
    fa = alarm is not None and alarm < kc
    delay = None if alarm is None or fa else int(alarm - kc + 1)
    return TrialRecord(int(trial), alarm, fa, delay, scenario.hypothesis)


def run_trials(scenario: Scenario, trials: Sequence[int],
               detector: Optional[_Detector] = None) -> List[TrialRecord]:
    """Run the detector on each trial's stream until alarm or ``max_blocks``.

    Trials advance in lockstep one chunk at a time; results are identical to
    running each trial alone.
    """
    det = detector or _Detector(scenario)
    trials = [int(t) for t in trials]
    rngs = [make_rng(scenario.seed, scenario.stream_code, t) for t in trials]
    size = len(det.grid_db)
    sums = np.zeros((len(trials), size))
    alarms: List[Optional[int]] = [None] * len(trials)
    active = np.arange(len(trials))
    done = 0
    while active.size and done < scenario.max_blocks:
        count = min(CHUNK_BLOCKS, scenario.max_blocks - done)
        taus = np.stack([_draw_chunk(scenario.config, rngs[i], scenario.change_block, done,
                                     count, scenario.sampler) for i in active])
        ls = det.llr(taus)
        s = sums[active]
        hit = np.zeros(active.size, dtype=bool)
        for b in range(count):
            s = s + ls[:, b, :]
            s[s <= 0.0] = 0.0
            new = ~hit & (s.max(axis=1) > scenario.h)
            for i in np.flatnonzero(new):
                alarms[active[i]] = done + b + 1
            hit |= new
        sums[active] = s
        active = active[~hit]
        done += count
    return [_record(scenario, t, a) for t, a in zip(trials, alarms)]


def run_trial(scenario: Scenario, trial: int = 0) -> TrialRecord:
    return run_trials(scenario, [trial])[0]


# --- estimation -------------------------------------------------------------------

def estimate_tau(records: Sequence[TrialRecord], kind: str) -> TauEstimate:
    """Mean detection delay (``kind="detection"``) or mean alarm time
    (``kind="false_alarm"``) over uncensored trials; censored runs are only
    counted."""
    if kind == "detection":
        values = [r.detection_delay_blocks for r in records
                  if r.detection_delay_blocks is not None]
    elif kind == "false_alarm":
        values = [r.alarm_block for r in records if r.is_false_alarm]
    else:
        raise DomainError(f"unknown estimate kind {kind!r}")
    censored = sum(r.censored for r in records)
    if not values:
        raise EstimationError(f"no uncensored trials ({censored} censored)")
    if len(values) < MIN_UNCENSORED:
        log.warning("mean from only %d uncensored trials", len(values))
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return TauEstimate(float(v.mean()), se, int(censored), int(v.size))


@dataclass(frozen=True)
class RenewalEstimate:
    """Mean time to false alarm from excursion cycles of the CUSUM walk.

    A cycle starts at g = 0 and ends at the first reset (g + l <= 0) or alarm.
    With L the cycle length and p the alarm probability of one cycle,
    tau_fa = E[L] / p. E[L] is averaged over cycles drawn under H0; p is the
    importance-sampled mean of exp(-S_T) 1{S_T > h} over cycles drawn under
    H1, which is exact because the walk increments are the log-likelihood
    ratio. Both means use the control variate S_T - E_f[l] T, whose mean is
    zero by Wald's identity.
    """

    mean_blocks: float
    std_error: float
    mean_cycle: float
    p_alarm: float
    cycles: int


def _walk_cycles(scenario: Scenario, det: _Detector, code: int, hypothesis: str,
                 cycles: int) -> Tuple[np.ndarray, np.ndarray]:
    # lengths and final sums of excursions from 0 out of (0, h]
    rngs = [make_rng(scenario.seed, code, i) for i in range(cycles)]
    kc = 1 if hypothesis == H1 else math.inf
    s = np.zeros(cycles)
    length = np.zeros(cycles, dtype=np.int64)
    active = np.arange(cycles)
    done = 0
    while active.size:
        if done >= MAX_CYCLE_BLOCKS:
            raise EstimationError(f"renewal cycles exceeded {MAX_CYCLE_BLOCKS} blocks")
        taus = np.stack([_draw_chunk(scenario.config, rngs[i], kc, done, CHUNK_BLOCKS,
                                     scenario.sampler) for i in active])
        ls = det.llr(taus)[..., 0]
        cur = s[active]
        alive = np.ones(active.size, dtype=bool)
        for b in range(CHUNK_BLOCKS):
            cur = np.where(alive, cur + ls[:, b], cur)
            length[active[alive]] += 1
            alive &= (cur > 0.0) & (cur <= scenario.h)
        s[active] = cur
        active = active[alive]
        done += CHUNK_BLOCKS
    return length, s


def control_variate_mean(y: np.ndarray, x: np.ndarray) -> Tuple[float, float]:
    """Mean of ``y`` corrected by the zero-mean control ``x``, with its
    standard error."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    vx = float(np.var(x, ddof=1))
    beta = float(np.cov(y, x)[0, 1] / vx) if vx > 0 else 0.0
    r = y - beta * x
    return float(r.mean()), float(r.std(ddof=1) / math.sqrt(r.size))


def estimate_tfa_renewal(scenario: Scenario, cycles: int = FULL_SEEDS) -> RenewalEstimate:
    """CUSUM mean time to false alarm for thresholds far beyond direct simulation."""
    if scenario.algorithm != CUSUM:
        raise DomainError("the renewal estimator applies to CUSUM only")
    if cycles < 2:
        raise DomainError("need at least two cycles")
    det = _Detector(scenario)
    params = DistParams(scenario.config.n, scenario.config.snr)
    trunc = det.truncations[0]
    e0 = expectation_llr(H0, params, trunc, scenario.spec)
    e1 = expectation_llr(H1, params, trunc, scenario.spec)
    length, s0 = _walk_cycles(scenario, det, STREAM_CODES["cycle-H0"], H0, cycles)
    t1, s1 = _walk_cycles(scenario, det, STREAM_CODES["cycle-IS"], H1, cycles)
    w = np.where(s1 > scenario.h, np.exp(-s1), 0.0)
    el, se_l = control_variate_mean(length, s0 - e0 * length)
    p, se_p = control_variate_mean(w, s1 - e1 * t1)
    if not p > 0 or not np.any(w > 0):
        raise EstimationError("no importance-sampled cycle reached the threshold")
    tau = el / p
    se = tau * math.sqrt((se_l / el) ** 2 + (se_p / p) ** 2)
    return RenewalEstimate(tau, se, el, p, cycles)


# --- curves and traces ------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    horizon_samples: int
    snr_db: float
    p_fa: float
    p_d: float
    n_seeds: int
    h: float


def performance_curves(config: ModelConfig, h: float, horizons: Sequence[int], seeds: int,
                       algorithm: str = GLR, glr_grid=None, seed: int = 0,
                       sampler: str = DEFAULT_SAMPLER, j_s: Optional[int] = None,
                       spec: QuadratureSpec = QuadratureSpec()
                       ) -> Tuple[List[CurvePoint], Dict[str, List[TrialRecord]]]:
    """Fractions of pure-H0 (false alarm) and pure-H1 (detection) trials
    1..seeds that alarmed within each horizon (in samples)."""
    n = config.n
    hs = [int(v) for v in horizons]
    if any(v < 0 or v % n for v in hs):
        raise DomainError(f"horizons must be nonnegative multiples of N={n}")
    if seeds < 1:
        raise DomainError("need at least one seed")
    max_blocks = max(hs) // n if hs else 0
    trials = range(1, seeds + 1)
    records = {}
    for hyp, kc in ((H0, math.inf), (H1, 1)):
        sc = Scenario(config, algorithm, h, kc, max_blocks, glr_grid, seed, sampler, j_s, spec)
        records[hyp] = run_trials(sc, trials)
    snr_db = 10.0 * math.log10(config.snr) if config.snr > 0 else -math.inf
    out = []
    for v in hs:
        k = v // n
        fa = sum(r.alarm_block is not None and r.alarm_block <= k for r in records[H0])
        d = sum(r.alarm_block is not None and r.alarm_block <= k for r in records[H1])
        out.append(CurvePoint(v, snr_db, fa / seeds, d / seeds, seeds, h))
    return out, records


@dataclass(frozen=True)
class TraceRow:
    k: int
    tau: float
    g: float
    alarmed: bool
    alpha_hat_db: Optional[float] = None
    m_star: Optional[int] = None


@dataclass(frozen=True)
class TracePair:
    cusum: List[TraceRow]
    glr: List[TraceRow]


def trace_pair(seed: int, config: ModelConfig, h: float, glr_grid, blocks: int = 100,
               change_block: float = 1, trial: int = 0, sampler: str = DEFAULT_SAMPLER,
               j_s: Optional[int] = None,
               spec: QuadratureSpec = QuadratureSpec()) -> TracePair:
    """CUSUM and GLR driven by the same statistics, block by block.

    After an alarm a detector's state is frozen (``alarmed`` stays 1).
    """
    sc_c = Scenario(config, CUSUM, h, change_block, blocks, None, seed, sampler, j_s, spec)
    sc_g = Scenario(config, GLR, h, change_block, blocks, glr_grid, seed, sampler, j_s, spec)
    rng = make_rng(seed, sc_c.stream_code, trial)
    taus = np.concatenate([
        _draw_chunk(config, rng, change_block, first, min(CHUNK_BLOCKS, blocks - first), sampler)
        for first in range(0, blocks, CHUNK_BLOCKS)]) if blocks else np.empty(0)
    lc = _Detector(sc_c).llr(taus)[:, 0]
    det_g = _Detector(sc_g)
    lg = det_g.llr(taus)
    cs = CusumState()
    gs = GlrState.initial(len(det_g.grid_db))
    rows_c, rows_g = [], []
    for i in range(blocks):
        cs = cusum_step_llr(cs, float(lc[i]), h)
        gs = glr_step_llr(gs, lg[i], det_g.grid_db, h)
        rows_c.append(TraceRow(i + 1, float(taus[i]), cs.g, cs.alarmed_at is not None,
                               m_star=cs.m))
        rows_g.append(TraceRow(i + 1, float(taus[i]), gs.g, gs.alarmed_at is not None,
                               gs.alpha_hat_db, gs.m_star))
    return TracePair(rows_c, rows_g)


def metadata(scenario: Optional[Scenario] = None, **extra) -> dict:
    """Parameters, tolerances and the random-stream scheme of a run."""
    meta = {
        "generator": GENERATOR_NAME,
        "seed_scheme": SEED_SCHEME,
        "quadrature_bin_width": QuadratureSpec().bin_width,
        "quadrature_tail_mass_tol": QuadratureSpec().tail_mass_tol,
        "normalization_tol": NORMALIZATION_TOL,
        "series_window_nats": SERIES_WINDOW,
        "llr_tau_eps": LLR_TAU_EPS,
        "gamma_delta_points": DELTA_POINTS,
        "gamma_delta_min_ratio": DELTA_MIN_RATIO,
    }
    if scenario is not None:
        meta.update({
            "algorithm": scenario.algorithm,
            "n": scenario.config.n,
            "snr_db": scenario.snr_db,
            "psk_order": scenario.config.psk_order,
            "h": scenario.h,
            "change_block": scenario.change_block,
            "max_blocks": scenario.max_blocks,
            "glr_grid_db": scenario.glr_grid,
            "seed": scenario.seed,
            "sampler": scenario.sampler,
            "table1_override": scenario.j_s,
            "quadrature_bin_width": scenario.spec.bin_width,
            "quadrature_tail_mass_tol": scenario.spec.tail_mass_tol,
        })
    meta.update(extra)
    return meta
