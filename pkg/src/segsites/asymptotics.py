"""Numerical diagnostics for the large-sample behaviour of ``S_n``.

The law of large numbers shows up as the relative variance
``Var(S_n / E S_n)`` vanishing like ``1 / (theta log n)``; the central limit
theorem as the standardized cumulants of order three and higher vanishing
like ``theta**(1 - i/2) / (log n)**((i - 2)/2)``.  Both are tabulated from
exact cumulants.  :func:`monte_carlo_clt_check` looks at the distribution
itself through simulation.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import stats

from segsites.analytic import (
    MutationParams,
    segsites_cumulant,
    segsites_pmf_by_convolution,
)
from segsites.simulation import Method, SimConfig, simulate
from segsites.special_functions import harmonic

DEFAULT_GRID = "2^1..2^20"
# Checks for "eventually decreasing" columns start here.
MONOTONE_FROM_N = 16
CLT_MIN_REPLICATES = 10**5


@dataclass(frozen=True)
class ConvergenceTable:
    """Diagnostic columns aligned with an increasing grid of sample sizes."""

    grid: tuple[int, ...]
    columns: dict

    def __post_init__(self):
        _check_grid(self.grid)
        for name, col in self.columns.items():
            if len(col) != len(self.grid):
                raise ValueError(f"column {name!r} has {len(col)} rows, grid has {len(self.grid)}")

    def column(self, name) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=np.float64)

    def to_csv(self) -> str:
        """Header ``n`` plus one column per diagnostic; reals in round-trip ``repr`` form."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        writer.writerow(["n", *names])
        for row, n in enumerate(self.grid):
            writer.writerow([n, *(repr(float(self.columns[c][row])) for c in names)])
        return buf.getvalue()

    def to_records(self) -> list[dict]:
        names = list(self.columns)
        return [
            {"n": n, **{c: float(self.columns[c][row]) for c in names}}
            for row, n in enumerate(self.grid)
        ]


def _check_grid(grid):
    if not grid:
        raise ValueError("grid is empty")
    if any(int(n) != n or n < 2 for n in grid):
        raise ValueError("grid entries must be integers >= 2")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")


def parse_grid(text: str) -> tuple[int, ...]:
    """Parse ``"2^1..2^20"`` (powers of a base) or ``"10,100,1000"``."""
    text = text.strip()
    m = re.fullmatch(r"(\d+)\^(\d+)\s*\.\.\s*(\d+)\^(\d+)", text)
    if m:
        base, lo, base2, hi = map(int, m.groups())
        if base != base2 or base < 2:
            raise ValueError(f"grid {text!r}: bases must match and be >= 2")
        grid = tuple(base**j for j in range(lo, hi + 1))
    else:
        try:
            grid = tuple(int(tok) for tok in text.split(","))
        except ValueError:
            raise ValueError(f"cannot parse grid {text!r}") from None
    _check_grid(grid)
    return grid


def lln_table(theta: float, grid) -> ConvergenceTable:
    """Relative variance of ``S_n`` against its ``1/(theta log n)`` asymptote.

    Columns: ``relvar`` is ``Var(S_n)/(E S_n)**2``, ``asymptote`` is
    ``1/(theta log n)``, ``ratio`` their quotient, and ``harmonic_log_ratio``
    is ``H_n / log n``.
    """
    grid = tuple(int(n) for n in grid)
    _check_grid(grid)
    relvar, asym, h_ratio = [], [], []
    for n in grid:
        h1 = harmonic(n - 1, 1)
        h2 = harmonic(n - 1, 2)
        mean = theta * h1
        relvar.append((theta * h1 + theta**2 * h2) / mean**2)
        asym.append(1.0 / (theta * math.log(n)))
        h_ratio.append(harmonic(n, 1) / math.log(n))
    relvar = np.array(relvar)
    asym = np.array(asym)
    return ConvergenceTable(
        grid,
        {
            "relvar": relvar,
            "asymptote": asym,
            "ratio": relvar / asym,
            "harmonic_log_ratio": np.array(h_ratio),
        },
    )


def clt_table(theta: float, grid, max_order: int = 4) -> ConvergenceTable:
    """Standardized cumulants of ``S_n`` and their asymptotic comparators.

    Column ``k{i}`` holds ``kappa_i / kappa_2**(i/2)`` and ``asym{i}`` holds
    ``theta**(1 - i/2) / (log n)**((i - 2)/2)`` for ``3 <= i <= max_order``.
    ``k1`` and ``k2`` are the standardized mean and variance, 0 and 1 by
    construction.
    """
    if max_order < 3:
        raise ValueError(f"max_order must be >= 3, got {max_order}")
    grid = tuple(int(n) for n in grid)
    _check_grid(grid)
    cols = {"k1": [], "k2": []}
    for i in range(3, max_order + 1):
        cols[f"k{i}"] = []
        cols[f"asym{i}"] = []
    for n in grid:
        params = MutationParams(theta, n)
        mean = segsites_cumulant(params, 1)
        var = segsites_cumulant(params, 2)
        cols["k1"].append((mean - mean) / math.sqrt(var))
        cols["k2"].append(var / var)
        for i in range(3, max_order + 1):
            cols[f"k{i}"].append(segsites_cumulant(params, i) / var ** (i / 2))
            cols[f"asym{i}"].append(
                theta ** (1 - i / 2) / math.log(n) ** ((i - 2) / 2)
            )
    return ConvergenceTable(grid, {k: np.array(v) for k, v in cols.items()})


def lattice_cdf_distance(counts, mean, sd) -> float:
    """Sup distance between the empirical CDF of integer data and a normal CDF.

    The normal CDF is evaluated at the half-integers ``m + 1/2`` (continuity
    correction), which removes the unavoidable jump error of comparing a
    lattice law with a continuous one.
    """
    counts = np.asarray(counts)
    lo, hi = int(counts.min()), int(counts.max())
    ecdf = np.cumsum(np.bincount(counts - lo)) / counts.size
    m = np.arange(lo, hi + 1)
    gauss = stats.norm.cdf((m + 0.5 - mean) / sd)
    below = stats.norm.cdf((lo - 0.5 - mean) / sd)
    return float(max(np.max(np.abs(ecdf - gauss)), below, 1.0 - gauss[-1]))


def exact_cdf_distance(params: MutationParams) -> float:
    """The same distance as :func:`lattice_cdf_distance`, for the exact law of ``S_n``."""
    mean = segsites_cumulant(params, 1)
    sd = math.sqrt(segsites_cumulant(params, 2))
    size = int(mean + 40 * sd + 50)
    pmf = segsites_pmf_by_convolution(params, size)
    m = np.arange(size)
    gauss = stats.norm.cdf((m + 0.5 - mean) / sd)
    return float(np.max(np.abs(np.cumsum(pmf) - gauss)))


def normal_control_distance(replicates: int, seed: int) -> float:
    """Kolmogorov distance of ``replicates`` direct standard-normal draws.

    This is the sampling-noise floor for a CDF distance at that replicate
    count when the underlying law is exactly Gaussian.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return float(stats.kstest(rng.standard_normal(replicates), "norm").statistic)


@dataclass(frozen=True)
class CLTReport:
    theta: float
    n: int
    replicates: int
    seed: int
    cdf_distance: float
    exact_cdf_distance: float
    skewness: float
    se_skewness: float
    analytic_skewness: float
    excess_kurtosis: float
    se_excess_kurtosis: float
    analytic_excess_kurtosis: float


def _shape(x):
    d = x - x.mean()
    m2 = (d * d).mean()
    return (d**3).mean() / m2**1.5, (d**4).mean() / m2**2 - 3.0


def monte_carlo_clt_check(
    theta: float,
    n: int,
    replicates: int,
    seed: int,
    method: Method = Method.GEOMETRIC_SUM,
    workers: int | None = None,
) -> CLTReport:
    """Compare simulated ``S_n``, standardized by its exact mean and sd, with N(0, 1).

    Reports the continuity-corrected CDF distance of the sample, the same
    distance for the exact law of ``S_n`` (so sampling noise and genuine
    non-normality can be told apart), and sample skewness and excess
    kurtosis next to their exact values.  Standard errors use 100 batch
    means.
    """
    if replicates < CLT_MIN_REPLICATES:
        raise ValueError(f"need at least {CLT_MIN_REPLICATES} replicates, got {replicates}")
    params = MutationParams(theta, n)
    batch = simulate(SimConfig(params, replicates, seed, method), workers=workers)
    mean = segsites_cumulant(params, 1)
    var = segsites_cumulant(params, 2)
    sd = math.sqrt(var)
    x = batch.counts.astype(np.float64)
    skew, kurt = _shape(x)
    sub = np.array([_shape(part) for part in np.array_split(x, 100)])
    se = sub.std(axis=0, ddof=1) / 10.0
    return CLTReport(
        theta=theta,
        n=n,
        replicates=replicates,
        seed=seed,
        cdf_distance=lattice_cdf_distance(batch.counts, mean, sd),
        exact_cdf_distance=exact_cdf_distance(params),
        skewness=float(skew),
        se_skewness=float(se[0]),
        analytic_skewness=segsites_cumulant(params, 3) / var**1.5,
        excess_kurtosis=float(kurt),
        se_excess_kurtosis=float(se[1]),
        analytic_excess_kurtosis=segsites_cumulant(params, 4) / var**2,
    )
