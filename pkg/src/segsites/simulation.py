"""Seeded Monte Carlo draws of the number of segregating sites.

Three mechanisms produce the same law for ``S_n``:

``geometric-sum``
    ``S_n = G_2 + ... + G_n`` with ``G_k`` geometric on {0, 1, ...} and
    stopping probability ``(k-1)/(k-1+theta)``, sampled by inversion.
``exponential-mixture``
    ``tau_k ~ Exp(k(k-1)/2)`` and ``G_k | tau_k ~ Poisson(theta k tau_k / 2)``.
``full-tree``
    Coalescence times for the whole genealogy, then one Poisson draw with
    mean ``theta/2`` times the total branch length ``sum_k k tau_k``.  Under
    infinite sites every mutation below the root segregates and the tree
    topology does not affect the count, so no labelled tree is built.

Random streams
--------------
Replicates are generated in fixed blocks of ``BLOCK_SIZE``.  Block ``j`` of
a run draws from ``Philox`` keyed by
``SeedSequence(seed, spawn_key=(method_index, j))``, so any replicate can be
regenerated from ``(seed, method, params)`` alone and the result does not
depend on how many worker threads evaluated the blocks.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from segsites.analytic import MutationParams

BLOCK_SIZE = 4096
# Epochs processed per draw call; bounds memory at BLOCK_SIZE * EPOCH_CHUNK.
EPOCH_CHUNK = 256
SUMMARY_BATCHES = 100
Z_FLAG = 4.0


class Method(str, enum.Enum):
    GEOMETRIC_SUM = "geometric-sum"
    EXPONENTIAL_MIXTURE = "exponential-mixture"
    FULL_TREE = "full-tree"


_METHOD_INDEX = {m: i for i, m in enumerate(Method)}


@dataclass(frozen=True)
class SimConfig:
    params: MutationParams
    replicates: int
    seed: int
    method: Method = Method.GEOMETRIC_SUM

    def __post_init__(self):
        if isinstance(self.replicates, bool) or int(self.replicates) != self.replicates:
            raise TypeError("replicates must be an integer")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "method", Method(self.method))

    def to_dict(self):
        return {
            "n": self.params.n,
            "theta": self.params.theta,
            "replicates": self.replicates,
            "seed": self.seed,
            "method": self.method.value,
        }


@dataclass(frozen=True)
class ReplicateBatch:
    counts: np.ndarray
    config: SimConfig

    def __len__(self):
        return len(self.counts)


@dataclass(frozen=True)
class SummaryStats:
    """Plug-in sample cumulants with batch-means standard errors.

    ``k2 = m2``, ``k3 = m3`` and ``k4 = m4 - 3 m2**2`` from the central
    sample moments ``m_j``; these carry an O(1/R) bias that is negligible
    at the replicate counts used for verification.
    """

    R: int
    mean: float
    variance: float
    k3: float
    k4: float
    se_mean: float
    se_k2: float
    se_k3: float
    se_k4: float

    def to_dict(self):
        return asdict(self)


def _block_generator(seed, method, block):
    ss = np.random.SeedSequence(seed, spawn_key=(_METHOD_INDEX[method], block))
    return np.random.Generator(np.random.Philox(ss))


def _epoch_chunks(n):
    # lineage counts k = 2..n, in fixed-size chunks
    for start in range(2, n + 1, EPOCH_CHUNK):
        yield np.arange(start, min(start + EPOCH_CHUNK, n + 1), dtype=np.float64)


def _draw_geometric_sum(rng, size, n, theta):
    total = np.zeros(size, dtype=np.int64)
    log_theta = math.log(theta)
    for k in _epoch_chunks(n):
        log_continue = log_theta - np.log(k - 1.0 + theta)
        v = 1.0 - rng.random((size, k.size))  # in (0, 1]
        total += np.floor(np.log(v) / log_continue).astype(np.int64).sum(axis=1)
    return total


def _draw_exponential_mixture(rng, size, n, theta):
    total = np.zeros(size, dtype=np.int64)
    for k in _epoch_chunks(n):
        rate = k * (k - 1.0) / 2.0
        tau = rng.standard_exponential((size, k.size)) / rate
        total += rng.poisson(theta * k * tau / 2.0).sum(axis=1)
    return total


def _draw_full_tree(rng, size, n, theta):
    length = np.zeros(size, dtype=np.float64)
    for k in _epoch_chunks(n):
        rate = k * (k - 1.0) / 2.0
        tau = rng.standard_exponential((size, k.size)) / rate
        length += (k * tau).sum(axis=1)
    return rng.poisson(theta * length / 2.0).astype(np.int64)


_DRAWERS = {
    Method.GEOMETRIC_SUM: _draw_geometric_sum,
    Method.EXPONENTIAL_MIXTURE: _draw_exponential_mixture,
    Method.FULL_TREE: _draw_full_tree,
}


def simulate(config: SimConfig, workers: int | None = None) -> ReplicateBatch:
    """Draw ``config.replicates`` independent realizations of ``S_n``.

    The output is a deterministic function of ``config``; ``workers`` only
    changes how many blocks are evaluated concurrently.
    """
    R = config.replicates
    n_blocks = -(-R // BLOCK_SIZE)
    draw = _DRAWERS[config.method]
    n, theta = config.params.n, config.params.theta

    def run_block(j):
        size = min(BLOCK_SIZE, R - j * BLOCK_SIZE)
        rng = _block_generator(config.seed, config.method, j)
        return draw(rng, size, n, theta)

    if workers is None:
        workers = min(4, os.cpu_count() or 1)
    if workers <= 1 or n_blocks == 1:
        blocks = [run_block(j) for j in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run_block, range(n_blocks)))
    return ReplicateBatch(np.concatenate(blocks), config)


def _plugin_cumulants(x):
    mean = x.mean()
    d = x - mean
    d2 = d * d
    m2 = d2.mean()
    m3 = (d2 * d).mean()
    m4 = (d2 * d2).mean()
    return np.array([mean, m2, m3, m4 - 3.0 * m2 * m2])


def summarize(batch: ReplicateBatch | np.ndarray) -> SummaryStats:
    """Sample mean, variance, k3, k4 and their standard errors.

    Standard errors come from batch means: the replicates are split into
    ``SUMMARY_BATCHES`` contiguous sub-batches (fewer when ``R < 200``), each
    statistic is recomputed per sub-batch, and the spread of those values
    divided by the square root of the sub-batch count is reported.
    """
    counts = batch.counts if isinstance(batch, ReplicateBatch) else np.asarray(batch)
    R = len(counts)
    if R < 4:
        raise ValueError(f"need at least 4 replicates for k4, got {R}")
    x = counts.astype(np.float64)
    full = _plugin_cumulants(x)
    n_sub = min(SUMMARY_BATCHES, R // 2)
    per_sub = np.array([_plugin_cumulants(part) for part in np.array_split(x, n_sub)])
    se = per_sub.std(axis=0, ddof=1) / math.sqrt(n_sub)
    return SummaryStats(
        R=R,
        mean=float(full[0]),
        variance=float(full[1]),
        k3=float(full[2]),
        k4=float(full[3]),
        se_mean=float(se[0]),
        se_k2=float(se[1]),
        se_k3=float(se[2]),
        se_k4=float(se[3]),
    )


def empirical_pmf(batch: ReplicateBatch | np.ndarray) -> np.ndarray:
    """Relative frequencies of 0, 1, ..., max(counts)."""
    counts = batch.counts if isinstance(batch, ReplicateBatch) else np.asarray(batch)
    return np.bincount(counts) / len(counts)


def total_variation(p, q) -> float:
    """Total variation distance between two pmfs on {0, 1, ...}.

    The shorter vector is zero-padded.  Mass missing from a truncated pmf
    (``1 - sum``) is added in full, so for truncated inputs the value is an
    upper bound on the distance between the untruncated laws.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    size = max(p.size, q.size)
    p = np.pad(p, (0, size - p.size))
    q = np.pad(q, (0, size - q.size))
    missing = max(1.0 - p.sum(), 0.0) + max(1.0 - q.sum(), 0.0)
    return 0.5 * (float(np.abs(p - q).sum()) + missing)


@dataclass(frozen=True)
class MethodComparison:
    first: Method
    second: Method
    statistic: str
    z: float

    @property
    def flagged(self):
        return abs(self.z) > Z_FLAG


@dataclass(frozen=True)
class CrossMethodReport:
    params: MutationParams
    replicates: int
    seeds: dict
    comparisons: tuple = ()
    declined: str | None = None

    @property
    def ok(self):
        return self.declined is None and not any(c.flagged for c in self.comparisons)


def _mean_var_with_se(counts):
    x = counts.astype(np.float64)
    R = x.size
    d = x - x.mean()
    m2 = (d * d).mean()
    m4 = (d**4).mean()
    return x.mean(), math.sqrt(m2 / R), m2, math.sqrt(max(m4 - m2 * m2, 0.0) / R)


def cross_method_check(
    params: MutationParams, replicates: int, seed: int, workers: int | None = None
) -> CrossMethodReport:
    """Compare the three simulation mechanisms pairwise.

    Each method runs on its own seed derived from ``seed``.  Means and
    variances are compared with two-sample z-scores; ``|z| > 4`` is flagged.
    """
    derived = np.random.SeedSequence(seed).generate_state(len(Method), np.uint64)
    seeds = {m: int(s) for m, s in zip(Method, derived)}
    if replicates < 4:
        return CrossMethodReport(
            params, replicates, seeds,
            declined=f"need at least 4 replicates per method, got {replicates}",
        )
    stats = {}
    for m in Method:
        batch = simulate(SimConfig(params, replicates, seeds[m], m), workers=workers)
        stats[m] = _mean_var_with_se(batch.counts)
    comparisons = []
    methods = list(Method)
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            ma, sma, va, sva = stats[a]
            mb, smb, vb, svb = stats[b]
            z_mean = _z(ma - mb, math.hypot(sma, smb))
            z_var = _z(va - vb, math.hypot(sva, svb))
            comparisons.append(MethodComparison(a, b, "mean", z_mean))
            comparisons.append(MethodComparison(a, b, "variance", z_var))
    return CrossMethodReport(params, replicates, seeds, tuple(comparisons))


def _z(diff, se):
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / se


def write_counts(path, counts, fmt: str = "text") -> Path:
    """Write a batch as decimal lines (``text``) or an ``.npy`` int64 column (``binary``)."""
    path = Path(path)
    counts = np.asarray(counts, dtype=np.int64)
    if fmt == "text":
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("".join(f"{c}\n" for c in counts.tolist()))
    elif fmt == "binary":
        with open(path, "wb") as fh:
            np.save(fh, counts, allow_pickle=False)
    else:
        raise ValueError(f"unknown batch format {fmt!r}")
    return path


def read_counts(path) -> np.ndarray:
    """Read a batch written by :func:`write_counts`, either format."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(6)
    if head == b"\x93NUMPY":
        return np.load(path, allow_pickle=False)
    return np.loadtxt(path, dtype=np.int64, ndmin=1)
