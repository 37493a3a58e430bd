"""PSK + AWGN sample blocks for two receivers and the eigenvalue-ratio statistic.

Random streams use numpy's counter-based Philox4x64-10 bit generator keyed
through a ``SeedSequence`` built from integer stream ids, so a given
``(seed, stream, trial)`` triple always yields the same sequence of blocks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DataError, DegenerateCovarianceError, DomainError

H0 = "H0"
H1 = "H1"
GENERATOR_NAME = "numpy.random.Philox (Philox4x64-10) keyed by SeedSequence(stream ids)"

#: Relative guard on the smaller eigenvalue, lambda2 <= EPS_DEGENERATE * lambda1.
EPS_DEGENERATE = 1e-12
PSK_ORDERS = (1, 2, 4, 8, 16)


@dataclass(frozen=True)
class ModelConfig:
    """Two-receiver PSK model. ``snr`` is linear; see :meth:`from_db`."""

    samples_per_block: int
    snr: float = 0.0
    psk_order: int = 4
    receivers: int = 2

    def __post_init__(self):
        if self.receivers != 2:
            raise DomainError("only K = 2 receivers are supported")
        if int(self.samples_per_block) != self.samples_per_block or self.samples_per_block < 2:
            raise DomainError("samples_per_block must be an integer >= 2")
        if not (self.snr >= 0 and math.isfinite(self.snr)):
            raise DomainError("snr must be finite and nonnegative")
        if self.psk_order not in PSK_ORDERS:
            raise DomainError(f"psk_order must be one of {PSK_ORDERS}")

    @classmethod
    def from_db(cls, samples_per_block, snr_db, psk_order=4):
        snr = 0.0 if snr_db is None else 10.0 ** (snr_db / 10.0)
        return cls(samples_per_block, snr, psk_order)

    @property
    def n(self) -> int:
        return self.samples_per_block


@dataclass(frozen=True)
class SampleBlock:
    entries: np.ndarray
    hypothesis: str
    block_index: int


@dataclass(frozen=True)
class EigPair:
    lambda1: float
    lambda2: float


@dataclass(frozen=True)
class TestStatistic:
    tau: float
    block_index: int

    __test__ = False  # keep pytest from collecting this class


def make_rng(*stream_ids: int) -> np.random.Generator:
    """Generator for the stream identified by nonnegative integer ids."""
    ss = np.random.SeedSequence([int(s) for s in stream_ids])
    return np.random.Generator(np.random.Philox(ss))


def _noise(rng: np.random.Generator, shape) -> np.ndarray:
    # CN(0, 1): real and imaginary parts each N(0, 1/2).
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)


def _symbols(rng: np.random.Generator, order: int, size: int) -> np.ndarray:
    if order == 1:
        return np.ones(size, dtype=complex)
    k = rng.integers(0, order, size=size)
    return np.exp(2j * np.pi * k / order)


def generate_block(config: ModelConfig, hypothesis: str, rng: np.random.Generator,
                   block_index: int = 1) -> SampleBlock:
    """Draw one 2 x N block; rows share the symbol, noise is i.i.d. CN(0, 1)."""
    n = config.samples_per_block
    if hypothesis == H1:
        s = _symbols(rng, config.psk_order, n)
        w = _noise(rng, (2, n))
        y = math.sqrt(config.snr) * s[None, :] + w
    elif hypothesis == H0:
        y = _noise(rng, (2, n))
    else:
        raise DomainError(f"unknown hypothesis {hypothesis!r}")
    return SampleBlock(y, hypothesis, block_index)


def _eigs_2x2(r11, r22, r12_abs2):
    tr = r11 + r22
    det = r11 * r22 - r12_abs2
    disc = np.sqrt(np.maximum(0.25 * (r11 - r22) ** 2 + r12_abs2, 0.0))
    lam1 = 0.5 * tr + disc
    # det / lam1 avoids cancellation in tr/2 - disc when lam2 << lam1.
    with np.errstate(divide="ignore", invalid="ignore"):
        lam2 = np.where(lam1 > 0, det / lam1, 0.0)
    return lam1, np.maximum(lam2, 0.0)


def covariance_eigs(block) -> EigPair:
    """Ordered eigenvalues of the scaled covariance R = Y Y^H (no 1/N)."""
    y = np.asarray(getattr(block, "entries", block))
    if y.ndim != 2 or y.shape[0] != 2 or y.shape[1] < 1:
        raise DataError(f"expected a 2 x N block, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise DataError("block contains non-finite entries")
    r11 = float(np.vdot(y[0], y[0]).real)
    r22 = float(np.vdot(y[1], y[1]).real)
    r12 = np.vdot(y[1], y[0])  # sum_j y0_j conj(y1_j)
    lam1, lam2 = _eigs_2x2(r11, r22, float(abs(r12) ** 2))
    return EigPair(float(lam1), float(lam2))


def test_statistic(eigs: EigPair, block_index: int = 0) -> TestStatistic:
    """MME statistic lambda1 / lambda2."""
    if not eigs.lambda2 > EPS_DEGENERATE * eigs.lambda1:
        raise DegenerateCovarianceError(
            f"lambda2={eigs.lambda2!r} is degenerate relative to lambda1={eigs.lambda1!r}")
    return TestStatistic(max(eigs.lambda1 / eigs.lambda2, 1.0), block_index)


test_statistic.__test__ = False


def statistic_stream(config: ModelConfig, change_block: Optional[float],
                     rng: np.random.Generator) -> Iterator[TestStatistic]:
    """Infinite stream of per-block statistics.

    Blocks ``1 .. change_block - 1`` are noise only, later blocks carry the
    signal. ``change_block=None`` or ``inf`` never changes.
    """
    kc = math.inf if change_block is None else change_block
    if kc < 1:
        raise DomainError("change_block must be >= 1")
    k = 1
    while True:
        hyp = H1 if k >= kc else H0
        blk = generate_block(config, hyp, rng, k)
        yield test_statistic(covariance_eigs(blk), k)
        k += 1


def sample_statistics(config: ModelConfig, hypothesis: str, rng: np.random.Generator,
                      count: int, method: str = "explicit", chunk: int = 256) -> np.ndarray:
    """Draw ``count`` independent statistics under one hypothesis.

    ``method="explicit"`` builds full PSK + AWGN blocks. ``method="wishart"``
    draws R directly: after a unitary rotation of the columns the signal
    occupies one column, so R = (m + w)(m + w)^H + W' with m = sqrt(alpha N) 1
    and W' ~ CW_2(N - 1, I) from the Bartlett decomposition. Both give the
    same distribution; the second costs O(1) per block.
    """
    n = config.samples_per_block
    if method == "wishart":
        return _wishart_statistics(n, config.snr if hypothesis == H1 else 0.0, rng, count)
    if method != "explicit":
        raise DomainError(f"unknown sampling method {method!r}")
    out = np.empty(count)
    done = 0
    amp = math.sqrt(config.snr)
    while done < count:
        m = min(chunk, count - done)
        w = _noise(rng, (m, 2, n))
        if hypothesis == H1:
            if config.psk_order == 1:
                s = np.ones((m, n), dtype=complex)
            else:
                s = np.exp(2j * np.pi * rng.integers(0, config.psk_order, size=(m, n))
                           / config.psk_order)
            y = amp * s[:, None, :] + w
        else:
            y = w
        r11 = np.einsum("ij,ij->i", y[:, 0].conj(), y[:, 0]).real
        r22 = np.einsum("ij,ij->i", y[:, 1].conj(), y[:, 1]).real
        r12 = np.einsum("ij,ij->i", y[:, 1].conj(), y[:, 0])
        lam1, lam2 = _eigs_2x2(r11, r22, np.abs(r12) ** 2)
        out[done:done + m] = np.maximum(lam1 / lam2, 1.0)
        done += m
    return out


def _wishart_statistics(n: int, snr: float, rng: np.random.Generator, count: int) -> np.ndarray:
    dof = n - 1 if snr > 0 else n
    a = np.sqrt(rng.gamma(dof, size=count))
    b = np.sqrt(rng.gamma(dof - 1, size=count))
    c = _noise(rng, (count,))
    # L = [[a, 0], [c, b]] -> L L^H
    r11 = a * a
    r22 = np.abs(c) ** 2 + b * b
    r12 = a * np.conj(c)
    if snr > 0:
        m = math.sqrt(snr * n)
        v = m + _noise(rng, (count, 2))
        r11 = r11 + np.abs(v[:, 0]) ** 2
        r22 = r22 + np.abs(v[:, 1]) ** 2
        r12 = r12 + v[:, 0] * np.conj(v[:, 1])
    lam1, lam2 = _eigs_2x2(r11, r22, np.abs(r12) ** 2)
    return np.maximum(lam1 / lam2, 1.0)


def dump_blocks_csv(path, blocks: Sequence[SampleBlock]) -> None:
    """Debug dump with columns block,row,col,re,im."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block", "row", "col", "re", "im"])
        for blk in blocks:
            for r in range(blk.entries.shape[0]):
                for c in range(blk.entries.shape[1]):
                    v = blk.entries[r, c]
                    w.writerow([blk.block_index, r, c, f"{v.real:.12g}", f"{v.imag:.12g}"])
