"""Closed-form distributional results for the number of segregating sites.

Under Kingman's coalescent with infinite-sites mutation at scaled rate theta,
the number of segregating sites in a sample of size ``n`` decomposes as

    S_n = G_2 + ... + G_n,

with independent geometric ``G_k`` on {0, 1, ...} whose "continue"
probability is ``theta / (k - 1 + theta)``.  Each ``G_k`` is a negative
binomial with shape 1, so its cumulants are polylogarithms of negative
order, and the cumulants of ``S_n`` follow by additivity.

Every cumulant here can be computed by two unrelated formulas; see
:func:`segsites_cumulant` and :func:`negbin_cumulant_partition_sum`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from segsites.errors import CapacityError, IntegrityError, PrecisionLossError
from segsites.special_functions import (
    SET_PARTITION_MAX_D,
    harmonic,
    polylog_neg_closed,
    polylog_neg_closed_array,
    polylog_neg_series,
    set_partitions,
    stirling_row,
)

# Relative agreement demanded between the two cumulant formulas.
DUAL_FORM_RTOL = 1e-10
# Largest term / |result| tolerated in the alternating pmf sum.
PMF_CANCELLATION_LIMIT = 1e12
MOMENT_MAX_ORDER = 12


@dataclass(frozen=True)
class MutationParams:
    """Scaled mutation rate ``theta > 0`` and sample size ``n >= 2``."""

    theta: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ValueError(f"theta must be a positive finite real, got {self.theta}")
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            raise TypeError(f"n must be an integer, got {type(self.n).__name__}")
        if self.n < 2:
            raise ValueError(f"sample size n must be >= 2, got {self.n}")


@dataclass(frozen=True)
class NegBinParams:
    """Negative binomial with pmf ``C(a+k-1, k) (1-p)**a p**k``, k >= 0."""

    a: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise ValueError(f"shape a must be positive, got {self.a}")
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {self.p}")

    @property
    def mixing_rate(self) -> float:
        """Rate of the gamma mixing law that yields this distribution.

        A Poisson whose mean is Gamma(shape ``a``, rate ``b``) has the pmf
        above with ``p = 1 / (1 + b)``, so ``b = (1 - p) / p``.
        """
        if self.p == 0.0:
            return math.inf
        return (1.0 - self.p) / self.p


@dataclass(frozen=True)
class CumulantVector:
    """Cumulants ``kappa_1, ..., kappa_I``; ``values[0]`` is the mean."""

    values: tuple[float, ...]

    @property
    def max_order(self) -> int:
        return len(self.values)

    def __getitem__(self, order: int) -> float:
        if not 1 <= order <= self.max_order:
            raise IndexError(f"cumulant order {order} not in 1..{self.max_order}")
        return self.values[order - 1]


@dataclass(frozen=True)
class MomentVector:
    """Raw moments ``E X, E X**2, ..., E X**I``."""

    values: tuple[float, ...]

    @property
    def max_order(self) -> int:
        return len(self.values)

    def __getitem__(self, order: int) -> float:
        if not 1 <= order <= self.max_order:
            raise IndexError(f"moment order {order} not in 1..{self.max_order}")
        return self.values[order - 1]


def _check_order(i):
    if isinstance(i, bool) or not isinstance(i, (int, np.integer)) or i < 1:
        raise ValueError(f"cumulant order must be a positive integer, got {i!r}")
    return int(i)


def poisson_cumulant(lam: float, j: int) -> float:
    """Every cumulant of a Poisson law equals its mean."""
    _check_order(j)
    if not lam > 0:
        raise ValueError(f"Poisson mean must be positive, got {lam}")
    return float(lam)


def gamma_cumulant(alpha: float, beta: float, j: int) -> float:
    """``j``-th cumulant of Gamma(shape ``alpha``, rate ``beta``): alpha (j-1)! / beta**j."""
    j = _check_order(j)
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"gamma parameters must be positive, got {alpha}, {beta}")
    if math.isinf(beta):
        return 0.0
    return alpha * math.factorial(j - 1) / beta**j


def negbin_cumulant(params: NegBinParams, i: int) -> float:
    """``i``-th cumulant of the negative binomial, ``a * Li_{1-i}(p)``."""
    i = _check_order(i)
    return params.a * polylog_neg_closed(i - 1, params.p)


def negbin_cumulant_partition_sum(params: NegBinParams, i: int) -> float:
    """``i``-th negative binomial cumulant by the law of total cumulance.

    Conditionally on its gamma-distributed mean ``tau`` the variable is
    Poisson, so every conditional cumulant equals ``tau`` and the joint
    cumulant over a partition with ``m`` blocks reduces to ``kappa_m(tau)``.
    The sum runs over all set partitions of ``{1..i}`` explicitly.
    """
    i = _check_order(i)
    if i > SET_PARTITION_MAX_D:
        raise CapacityError(
            f"partition-sum cumulant limited to order <= {SET_PARTITION_MAX_D}"
        )
    rate = params.mixing_rate
    by_blocks = {}
    for partition in set_partitions(i):
        m = len(partition)
        by_blocks[m] = by_blocks.get(m, 0) + 1
    terms = [
        count * gamma_cumulant(params.a, rate, m) for m, count in by_blocks.items()
    ]
    return math.fsum(terms)


def negbin_cumulant_cgf_series(
    params: NegBinParams, i: int, rel_tol: float = 1e-13
) -> float:
    """``i``-th cumulant read off the Taylor expansion of the log-mgf.

    ``log E exp(tN) = a (log(1-p) - log(1 - p e**t))`` and expanding
    ``-log(1 - p e**t)`` in powers of ``t`` gives coefficient
    ``sum_{k >= 1} p**k k**(i-1)`` for ``t**i / i!``; that series is
    truncated directly.
    """
    i = _check_order(i)
    if params.p == 0.0:
        return 0.0
    return params.a * polylog_neg_series(i - 1, params.p, rel_tol=rel_tol)


def negbin_pmf(params: NegBinParams, k: int) -> float:
    """``C(a+k-1, k) (1-p)**a p**k`` for ``k >= 0``."""
    if k < 0:
        return 0.0
    if params.p == 0.0:
        return 1.0 if k == 0 else 0.0
    log_pmf = (
        math.lgamma(params.a + k)
        - math.lgamma(params.a)
        - math.lgamma(k + 1)
        + params.a * math.log1p(-params.p)
        + k * math.log(params.p)
    )
    return math.exp(log_pmf)


def geometric_Gk_cumulant(theta: float, k: int, i: int) -> float:
    """``i``-th cumulant of the sites ``G_k`` added while ``k`` lineages remain."""
    if k < 2:
        raise ValueError(f"G_k is defined for k >= 2, got {k}")
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    return negbin_cumulant(NegBinParams(1.0, theta / (k - 1 + theta)), i)


def segsites_cumulant_polylog(params: MutationParams, i: int) -> float:
    """``sum_{k=1}^{n-1} Li_{1-i}(theta / (k + theta))``."""
    i = _check_order(i)
    k = np.arange(1, params.n, dtype=np.float64)
    u = params.theta / (k + params.theta)
    return math.fsum(polylog_neg_closed_array(i - 1, u))


def segsites_cumulant_harmonic(params: MutationParams, i: int) -> float:
    """``sum_{b=1}^i S(i, b) (b-1)! theta**b H_{n-1}^(b)``."""
    i = _check_order(i)
    row = stirling_row(i)
    theta = params.theta
    terms = [
        row[b] * math.factorial(b - 1) * theta**b * harmonic(params.n - 1, b)
        for b in range(1, i + 1)
    ]
    return math.fsum(terms)


def segsites_cumulant(params: MutationParams, i: int) -> float:
    """``i``-th cumulant of the number of segregating sites.

    Both the polylogarithm sum over coalescence epochs and the
    Stirling/harmonic-number expansion are evaluated; they must agree to
    ``DUAL_FORM_RTOL`` relatively.  The Stirling/harmonic value is returned
    since all its terms are positive.

    Raises
    ------
    IntegrityError
        If the two forms disagree.  This indicates a defect, not bad input.
    """
    by_epoch = segsites_cumulant_polylog(params, i)
    by_harmonic = segsites_cumulant_harmonic(params, i)
    if abs(by_epoch - by_harmonic) > DUAL_FORM_RTOL * abs(by_harmonic):
        raise IntegrityError(
            f"cumulant order {i} at theta={params.theta}, n={params.n}: "
            f"polylog form {by_epoch!r} != harmonic form {by_harmonic!r}"
        )
    return by_harmonic


def segsites_cumulants(params: MutationParams, max_order: int) -> CumulantVector:
    """Cumulants of orders ``1..max_order``."""
    max_order = _check_order(max_order)
    return CumulantVector(
        tuple(segsites_cumulant(params, i) for i in range(1, max_order + 1))
    )


def segsites_mean(params: MutationParams) -> float:
    """Watterson's mean, ``theta H_{n-1}``."""
    return segsites_cumulant(params, 1)


def segsites_var(params: MutationParams) -> float:
    """Watterson's variance, ``theta H_{n-1} + theta**2 H_{n-1}^(2)``."""
    return segsites_cumulant(params, 2)


def segsites_pmf(params: MutationParams, m: int) -> float:
    """``P(S_n = m)`` from the alternating binomial sum.

    The sum is accumulated with :func:`math.fsum`.  Its terms can exceed the
    result by many orders of magnitude once ``n`` grows beyond a few dozen;
    when the ratio of the largest term to the result passes
    ``PMF_CANCELLATION_LIMIT`` the value is no longer trustworthy in double
    precision.

    Raises
    ------
    PrecisionLossError
        If cancellation exceeds ``PMF_CANCELLATION_LIMIT``.
    """
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 0:
        raise ValueError(f"m must be a nonnegative integer, got {m!r}")
    n, theta = params.n, params.theta
    front = (n - 1) / theta
    terms = []
    for k in range(1, n):
        ratio = theta / (k + theta)
        binom = math.comb(n - 2, k - 1)
        if binom < 2**1000:
            mag = front * float(binom) * ratio ** (m + 1)
        else:
            mag = math.exp(
                math.log(front) + math.log(binom) + (m + 1) * math.log(ratio)
            )
        terms.append(mag if k % 2 == 1 else -mag)
    result = math.fsum(terms)
    largest = max(abs(t) for t in terms)
    if largest > 0 and (result <= 0 or largest / result > PMF_CANCELLATION_LIMIT):
        ratio = math.inf if result <= 0 else largest / result
        raise PrecisionLossError(
            f"pmf(m={m}) at n={n}, theta={theta}: largest term / result = "
            f"{ratio:.3g} exceeds {PMF_CANCELLATION_LIMIT:.0e}",
            ratio=ratio,
        )
    return result


def segsites_pmf_table(params: MutationParams, mass_cutoff: float):
    """Rows ``(m, pmf, cumulative)`` until cumulative mass reaches ``1 - mass_cutoff``."""
    if not 0.0 < mass_cutoff < 1.0:
        raise ValueError(f"mass_cutoff must lie in (0, 1), got {mass_cutoff}")
    rows = []
    masses = []
    m = 0
    while True:
        pm = segsites_pmf(params, m)
        masses.append(pm)
        cumulative = math.fsum(masses)
        rows.append((m, pm, cumulative))
        if cumulative >= 1.0 - mass_cutoff:
            return rows
        if pm == 0.0:
            raise PrecisionLossError(
                f"pmf underflowed at m={m} with cumulative mass {cumulative!r}",
                ratio=math.inf,
            )
        m += 1


def segsites_pmf_by_convolution(params: MutationParams, size: int) -> np.ndarray:
    """``P(S_n = m)`` for ``m < size`` by convolving the epoch geometrics.

    Every operation is on nonnegative numbers, so this stays accurate for
    sample sizes where the alternating sum of :func:`segsites_pmf` breaks
    down.  Mass at ``m >= size`` is discarded at each step, which only
    affects the result through the truncated tail.
    """
    if size < 1:
        raise ValueError(f"size must be positive, got {size}")
    m = np.arange(size, dtype=np.float64)
    pmf = np.zeros(size)
    pmf[0] = 1.0
    for k in range(1, params.n):
        cont = params.theta / (k + params.theta)
        geom = (1.0 - cont) * np.exp(m * math.log(cont))
        pmf = np.convolve(pmf, geom)[:size]
    return pmf


def segsites_pgf(params: MutationParams, s: float) -> float:
    """``E s**S_n = prod_{k=1}^{n-1} k / (k + theta (1 - s))``."""
    shift = params.theta * (1.0 - s)
    if 1.0 + shift <= 0.0:
        raise ValueError(
            f"pgf undefined at s={s}: factor denominator 1 + theta(1-s) = "
            f"{1.0 + shift} <= 0"
        )
    k = np.arange(1, params.n, dtype=np.float64)
    return float(np.exp(np.sum(np.log(k) - np.log(k + shift))))


def moments_from_cumulants(kappa: CumulantVector | Sequence[float]) -> MomentVector:
    """Raw moments from cumulants via the complete Bell polynomial recurrence.

    ``mu'_j = sum_{l=0}^{j-1} C(j-1, l) kappa_{l+1} mu'_{j-1-l}`` with
    ``mu'_0 = 1``.
    """
    values = kappa.values if isinstance(kappa, CumulantVector) else tuple(kappa)
    if not values:
        raise ValueError("need at least one cumulant")
    if len(values) > MOMENT_MAX_ORDER:
        raise CapacityError(
            f"moment conversion limited to order <= {MOMENT_MAX_ORDER}"
        )
    mu = [1.0]
    for j in range(1, len(values) + 1):
        mu.append(
            math.fsum(
                math.comb(j - 1, l) * values[l] * mu[j - 1 - l] for l in range(j)
            )
        )
    return MomentVector(tuple(mu[1:]))


def watterson_estimator(s_observed: int, n: int) -> float:
    """Watterson's estimate of theta, ``S / H_{n-1}``."""
    if s_observed < 0:
        raise ValueError(f"segregating-site count must be >= 0, got {s_observed}")
    if n < 2:
        raise ValueError(f"sample size must be >= 2, got {n}")
    return s_observed / harmonic(n - 1, 1)


__all__ = [
    "DUAL_FORM_RTOL",
    "PMF_CANCELLATION_LIMIT",
    "MutationParams",
    "NegBinParams",
    "CumulantVector",
    "MomentVector",
    "poisson_cumulant",
    "gamma_cumulant",
    "negbin_cumulant",
    "negbin_cumulant_partition_sum",
    "negbin_cumulant_cgf_series",
    "negbin_pmf",
    "geometric_Gk_cumulant",
    "segsites_cumulant",
    "segsites_cumulant_polylog",
    "segsites_cumulant_harmonic",
    "segsites_cumulants",
    "segsites_mean",
    "segsites_var",
    "segsites_pmf",
    "segsites_pmf_table",
    "segsites_pmf_by_convolution",
    "segsites_pgf",
    "moments_from_cumulants",
    "watterson_estimator",
]
