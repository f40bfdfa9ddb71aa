"""Monte Carlo ensemble: Wigner sampling, exact propagation, moment estimation.

Every chunk of samples owns an independent Philox stream keyed by
``(seed, chunk index)``, and chunk moments are always reduced in index order,
so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import SimulationError, TruncationError, ValidationError
from .kinematics import propagate_arrays
from .states import GaussianState

logger = logging.getLogger(__name__)

TRUNCATION_POLICIES = ("reject", "error")
MAX_REJECT_FRACTION = 1e-3
SAMPLE_HEADER = ("i", "x_a", "p_a", "x_b", "p_b", "t_coll", "collided")


@dataclass(frozen=True)
class EnsembleConfig:
    n_samples: int
    t1: float
    seed: int = 0
    chunk_size: int = 10_000
    truncation_policy: str = "reject"
    workers: int = 1
    max_reject_fraction: float = MAX_REJECT_FRACTION

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise ValidationError(f"n_samples must be an integer >= 2, got {self.n_samples!r}")
        if int(self.chunk_size) != self.chunk_size or self.chunk_size < 1:
            raise ValidationError(f"chunk_size must be a positive integer, got {self.chunk_size!r}")
        if not (0 <= int(self.seed) < 2**64) or int(self.seed) != self.seed:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.truncation_policy not in TRUNCATION_POLICIES:
            raise ValidationError(f"truncation_policy must be one of {TRUNCATION_POLICIES}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if not math.isfinite(self.t1):
            raise ValidationError("t1 must be finite")

    @property
    def n_chunks(self) -> int:
        return -(-self.n_samples // self.chunk_size)

    def chunk_bounds(self, k: int) -> tuple[int, int]:
        start = k * self.chunk_size
        return start, min(start + self.chunk_size, self.n_samples)


@dataclass(frozen=True)
class ChunkMoments:
    """Count, mean and centred second-moment sum of one block of samples."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "ChunkMoments":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        if n == 0:
            d = x.shape[1]
            return cls(0, np.zeros(d), np.zeros((d, d)))
        mean = x.mean(axis=0)
        c = x - mean
        return cls(n, mean, c.T @ c)

    def combine(self, other: "ChunkMoments") -> "ChunkMoments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.n * other.n / n)
        return ChunkMoments(n, mean, m2)

    def covariance(self) -> np.ndarray:
        if self.n < 2:
            raise ValidationError("at least two samples are needed for a covariance")
        c = self.m2 / (self.n - 1)
        return (c + c.T) / 2


def reduce_moments(chunks: Sequence[ChunkMoments]) -> ChunkMoments:
    total = chunks[0]
    for c in chunks[1:]:
        total = total.combine(c)
    return total


@dataclass(frozen=True, eq=False)
class MomentEstimate:
    mean: np.ndarray
    cov: np.ndarray
    n_used: int
    n_rejected: int
    mean_stderr: np.ndarray
    cov_stderr: np.ndarray
    chunks: tuple[ChunkMoments, ...] = field(default=(), repr=False)

    @property
    def n_samples(self) -> int:
        return self.n_used + self.n_rejected


def _estimate(chunks: Sequence[ChunkMoments], n_rejected: int = 0) -> MomentEstimate:
    total = reduce_moments(chunks)
    if total.n < 2:
        raise ValidationError(f"need at least 2 usable samples, got {total.n}")
    cov = total.covariance()
    var = np.diag(cov)
    mean_se = np.sqrt(np.maximum(var, 0) / total.n)
    # Gaussian theory: Var(S_ij) = (S_ii S_jj + S_ij^2) / (n - 1)
    cov_se = np.sqrt(np.maximum(np.outer(var, var) + cov**2, 0) / (total.n - 1))
    return MomentEstimate(total.mean, cov, total.n, n_rejected, mean_se, cov_se,
                          tuple(c for c in chunks if c.n > 0))


def estimate_moments(samples: np.ndarray, n_rejected: int = 0, chunk_size: int | None = None) -> MomentEstimate:
    """Unbiased mean and covariance (n-1 denominator) with Gaussian standard errors."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise ValidationError("samples must be a 2D array (n, d)")
    step = chunk_size or max(x.shape[0], 1)
    chunks = [ChunkMoments.from_samples(x[i:i + step]) for i in range(0, max(x.shape[0], 1), step)]
    return _estimate(chunks, n_rejected)


def jackknife(est: MomentEstimate, fn: Callable[[np.ndarray, np.ndarray], object]):
    """Delete-one-chunk jackknife standard error of ``fn(mean, cov)``.

    ``fn`` may return a scalar or an array. Returns ``(value, stderr)``; the
    error is ``nan`` when fewer than two chunks are available.
    """
    chunks = est.chunks
    value = np.asarray(fn(est.mean, est.cov), dtype=float)
    k = len(chunks)
    if k < 2:
        return value, np.full_like(value, np.nan)
    prefix = [chunks[0]]
    for c in chunks[1:]:
        prefix.append(prefix[-1].combine(c))
    suffix = [chunks[-1]]
    for c in reversed(chunks[:-1]):
        suffix.append(c.combine(suffix[-1]))
    suffix.reverse()
    reps = []
    for i in range(k):
        if i == 0:
            part = suffix[1]
        elif i == k - 1:
            part = prefix[k - 2]
        else:
            part = prefix[i - 1].combine(suffix[i + 1])
        reps.append(np.asarray(fn(part.mean, part.covariance()), dtype=float))
    reps = np.array(reps)
    spread = reps - reps.mean(axis=0)
    stderr = np.sqrt((k - 1) / k * np.sum(spread**2, axis=0))
    return value, stderr


def _sampling_matrix(cov: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(cov))
    scale = np.where(d > 0, d, 1.0)
    normed = cov / np.outer(scale, scale)
    try:
        low = np.linalg.cholesky(normed)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(normed)
        if w[0] < -1e-9 * max(1.0, w[-1]):
            raise ValidationError("covariance is not positive semidefinite; cannot sample") from None
        low = v * np.sqrt(np.clip(w, 0, None))
    return scale[:, None] * low


def chunk_generator(seed: int, k: int) -> np.random.Generator:
    """Counter-based stream for chunk ``k``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(k,))))


@dataclass(frozen=True, eq=False)
class SampleChunk:
    index: int
    start: int
    samples: np.ndarray     # (m, 4) initial points, including rejected ones
    valid: np.ndarray       # (m,) boolean mask

    @property
    def n_rejected(self) -> int:
        return int(self.valid.size - np.count_nonzero(self.valid))


def valid_mask(samples: np.ndarray, m_a: float, m_b: float) -> np.ndarray:
    """Points with B left of A and B moving towards A."""
    x_a, p_a, x_b, p_b = samples.T
    return (x_b < x_a) & (p_b / m_b > p_a / m_a)


def draw_chunk(state: GaussianState, cfg: EnsembleConfig, k: int, m_a: float, m_b: float) -> SampleChunk:
    start, stop = cfg.chunk_bounds(k)
    z = chunk_generator(cfg.seed, k).standard_normal((stop - start, 4))
    x = state.mean + z @ _sampling_matrix(state.cov).T
    ok = valid_mask(x, m_a, m_b)
    if cfg.truncation_policy == "error" and not ok.all():
        bad = start + int(np.argmin(ok))
        raise TruncationError(f"sample {bad} starts outside the collision geometry")
    return SampleChunk(k, start, x, ok)


def draw_samples(state: GaussianState, cfg: EnsembleConfig, m_a: float, m_b: float) -> Iterator[SampleChunk]:
    """Stream of sample chunks in index order."""
    _sampling_matrix(state.cov)
    for k in range(cfg.n_chunks):
        yield draw_chunk(state, cfg, k, m_a, m_b)


class CsvSampleSink:
    """Streams per-sample records to CSV; rows arrive chunk by chunk in index order."""

    def __init__(self, fh, coord_scale=(1.0, 1.0, 1.0, 1.0), time_scale: float = 1.0):
        self._writer = csv.writer(fh, lineterminator="\n")
        self._writer.writerow(SAMPLE_HEADER)
        self._coord_scale = np.asarray(coord_scale, dtype=float)
        self._time_scale = float(time_scale)

    def write(self, start: int, valid: np.ndarray, final: np.ndarray, t_coll: np.ndarray, collided: np.ndarray):
        idx = start + np.flatnonzero(valid)
        final = final * self._coord_scale
        t_coll = t_coll * self._time_scale
        rows = (
            (int(i), *(f"{v:.17g}" for v in row), f"{t:.17g}", int(c))
            for i, row, t, c in zip(idx, final, t_coll, collided)
        )
        self._writer.writerows(rows)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    final: MomentEstimate       # at t1
    initial: MomentEstimate     # accepted draws at t0
    n_collided: int
    n_missed: int               # accepted but no contact before t1
    max_momentum_error: float   # per-sample |delta(p_a + p_b)| / |p_b(t0)|
    max_energy_error: float


@dataclass(frozen=True, eq=False)
class _ChunkResult:
    index: int
    initial: ChunkMoments
    final: ChunkMoments
    n_rejected: int
    n_collided: int
    momentum_error: float
    energy_error: float
    rows: tuple | None


def _process_chunk(state, cfg, k, m_a, m_b, keep_rows) -> _ChunkResult:
    chunk = draw_chunk(state, cfg, k, m_a, m_b)
    x = chunk.samples[chunk.valid]
    res = propagate_arrays(x[:, 0], x[:, 1], x[:, 2], x[:, 3], m_a, m_b, state.time, cfg.t1)
    final = np.column_stack([res.x_a, res.p_a, res.x_b, res.p_b])
    hit = res.collided
    if np.any(hit):
        p0 = x[hit, 1] + x[hit, 3]
        p1 = res.p_a[hit] + res.p_b[hit]
        e0 = x[hit, 1] ** 2 / m_a + x[hit, 3] ** 2 / m_b
        e1 = res.p_a[hit] ** 2 / m_a + res.p_b[hit] ** 2 / m_b
        mom_err = float(np.max(np.abs(p1 - p0) / np.abs(x[hit, 3])))
        en_err = float(np.max(np.abs(e1 - e0) / e0))
    else:
        mom_err = en_err = 0.0
    rows = (chunk.start, chunk.valid, final, res.t_coll, hit) if keep_rows else None
    return _ChunkResult(k, ChunkMoments.from_samples(x), ChunkMoments.from_samples(final),
                        chunk.n_rejected, int(np.count_nonzero(hit)), mom_err, en_err, rows)


def run_ensemble(state: GaussianState, m_a: float, m_b: float, cfg: EnsembleConfig,
                 sink: CsvSampleSink | None = None) -> EnsembleResult:
    """Draw, propagate and reduce the ensemble; optionally stream every sample to ``sink``."""
    _sampling_matrix(state.cov)
    results: list[_ChunkResult] = []
    window = max(1, 4 * cfg.workers)

    def consume(r: _ChunkResult):
        if sink is not None:
            sink.write(*r.rows)
        results.append(_ChunkResult(r.index, r.initial, r.final, r.n_rejected, r.n_collided,
                                    r.momentum_error, r.energy_error, None))

    keep = sink is not None
    if cfg.workers == 1:
        for k in range(cfg.n_chunks):
            consume(_process_chunk(state, cfg, k, m_a, m_b, keep))
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for lo in range(0, cfg.n_chunks, window):
                ks = range(lo, min(lo + window, cfg.n_chunks))
                for r in pool.map(lambda k: _process_chunk(state, cfg, k, m_a, m_b, keep), ks):
                    consume(r)

    n_rejected = sum(r.n_rejected for r in results)
    if n_rejected > cfg.max_reject_fraction * cfg.n_samples:
        raise SimulationError(
            f"{n_rejected} of {cfg.n_samples} draws left the collision geometry "
            f"(limit {cfg.max_reject_fraction:g}); check x0 and the mean velocity"
        )
    if n_rejected:
        logger.info("rejected %d of %d draws", n_rejected, cfg.n_samples)
    n_used = cfg.n_samples - n_rejected
    n_collided = sum(r.n_collided for r in results)
    if n_collided < n_used:
        logger.warning("%d accepted samples did not collide before t1", n_used - n_collided)
    return EnsembleResult(
        final=_estimate([r.final for r in results], n_rejected),
        initial=_estimate([r.initial for r in results], n_rejected),
        n_collided=n_collided,
        n_missed=n_used - n_collided,
        max_momentum_error=max(r.momentum_error for r in results),
        max_energy_error=max(r.energy_error for r in results),
    )
