"""Exact combinatorics and the polylogarithm of negative integer order.

Stirling numbers of the second kind are held in an immutable table of exact
Python integers, built once from the additive recurrence

    S(n + 1, k) = S(n, k - 1) + k * S(n, k).

The polylogarithm ``Li_{-n}(u) = sum_{l >= 1} u**l * l**n`` is available
two ways: a finite closed form in ``x = u / (1 - u)`` whose coefficients are
``k! * S(n + 1, k + 1)``, and direct truncation of the defining series.  The
two share no code so either can serve as an oracle for the other.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import mpmath
import numpy as np

from segsites.errors import CapacityError, TruncationError

__all__ = [
    "STIRLING_MAX_N",
    "SET_PARTITION_MAX_D",
    "SERIES_MAX_TERMS",
    "PolylogArg",
    "stirling2",
    "stirling_row",
    "stirling_table",
    "bell",
    "harmonic",
    "polylog_neg_closed",
    "polylog_neg_closed_array",
    "polylog_neg_series",
    "zeta_int",
    "set_partitions",
    "perturb_stirling",
]

STIRLING_MAX_N = 64
SET_PARTITION_MAX_D = 12
SERIES_MAX_TERMS = 10**7

_SERIES_CHUNK = 4096


def _build_stirling_table(max_n):
    rows = [(1,)]
    for n in range(max_n):
        prev = rows[-1]
        row = [0] * (n + 2)
        for k in range(1, n + 2):
            left = prev[k - 1]
            right = prev[k] if k <= n else 0
            row[k] = left + k * right
        rows.append(tuple(row))
    return tuple(rows)


# Row n holds S(n, 0..n).  Replaced wholesale (never mutated) by perturb_stirling.
_TABLE = _build_stirling_table(STIRLING_MAX_N)


def _check_nonneg_int(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return int(value)


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind, exact.

    Number of partitions of an ``n``-element set into ``k`` nonempty blocks.
    Values come from a precomputed table of Python integers, so there is no
    rounding and no silent overflow.

    Raises
    ------
    CapacityError
        If ``n > STIRLING_MAX_N``.
    """
    n = _check_nonneg_int("n", n)
    k = _check_nonneg_int("k", k)
    if n > STIRLING_MAX_N:
        raise CapacityError(
            f"stirling2 table holds n <= {STIRLING_MAX_N}, got n={n}"
        )
    if k > n:
        return 0
    return _TABLE[n][k]


def stirling_row(n: int) -> tuple[int, ...]:
    """Return ``(S(n, 0), ..., S(n, n))``."""
    n = _check_nonneg_int("n", n)
    if n > STIRLING_MAX_N:
        raise CapacityError(
            f"stirling2 table holds n <= {STIRLING_MAX_N}, got n={n}"
        )
    return _TABLE[n]


def stirling_table() -> tuple[tuple[int, ...], ...]:
    """The full triangular table, row ``n`` of length ``n + 1``."""
    return _TABLE


def bell(n: int) -> int:
    """Bell number, the row sum of the Stirling table."""
    return sum(stirling_row(n))


@contextlib.contextmanager
def perturb_stirling(n: int, k: int, factor: int = 2):
    """Temporarily multiply one table entry by ``factor``.

    Fault-injection hook for checking that the verification suite notices a
    corrupted table.  Not thread-safe; never use outside of testing.
    """
    global _TABLE
    original = _TABLE
    if not (0 <= k <= n <= STIRLING_MAX_N):
        raise ValueError(f"no table entry ({n}, {k})")
    row = list(original[n])
    row[k] *= factor
    _TABLE = original[:n] + (tuple(row),) + original[n + 1:]
    try:
        yield
    finally:
        _TABLE = original


@lru_cache(maxsize=4096)
def harmonic(n: int, b: int = 1) -> float:
    """Generalized harmonic number ``H_n^(b) = sum_{k=1}^n k**-b``.

    Terms are generated in ascending ``k`` and accumulated with
    :func:`math.fsum`, which returns the correctly rounded sum of the
    (individually rounded) terms, so the result is independent of summation
    order and accurate to a few ulps.
    """
    n = _check_nonneg_int("n", n)
    b = _check_nonneg_int("b", b)
    if n < 1 or b < 1:
        raise ValueError(f"harmonic needs n >= 1 and b >= 1, got n={n}, b={b}")
    k = np.arange(1, n + 1, dtype=np.float64)
    return math.fsum(np.power(k, -float(b)))


@dataclass(frozen=True)
class PolylogArg:
    """Order ``-neg_order`` and argument ``u`` of ``Li_{-neg_order}(u)``."""

    neg_order: int
    u: float

    def __post_init__(self):
        _check_nonneg_int("neg_order", self.neg_order)
        if not math.isfinite(self.u) or not -1.0 < self.u < 1.0:
            raise ValueError(f"polylog argument must lie in (-1, 1), got {self.u}")


def polylog_neg_closed(neg_order: int, u: float) -> float:
    """``Li_{-n}(u)`` from the finite Stirling-number closed form.

    Evaluates ``sum_{k=0}^n k! S(n+1, k+1) x**(k+1)`` with ``x = u/(1-u)`` in
    exact rational arithmetic starting from the binary value of ``u``, then
    rounds once.  For ``u < 0`` the terms alternate in sign and cancel
    heavily; exact evaluation sidesteps that entirely.
    """
    arg = PolylogArg(neg_order, u)
    n = arg.neg_order
    uq = Fraction(arg.u)
    x = uq / (1 - uq)
    row = stirling_row(n + 1)
    total = Fraction(0)
    xp = x
    for k in range(n + 1):
        total += math.factorial(k) * row[k + 1] * xp
        xp *= x
    return float(total)


def polylog_neg_closed_array(neg_order: int, u) -> np.ndarray:
    """Vectorized closed form in floating point, for ``0 <= u < 1`` only.

    With nonnegative ``u`` every term is nonnegative, so Horner evaluation
    in double precision loses nothing to cancellation.
    """
    n = _check_nonneg_int("neg_order", neg_order)
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0) or np.any(u >= 1):
        raise ValueError("polylog_neg_closed_array requires 0 <= u < 1")
    x = u / (1.0 - u)
    row = stirling_row(n + 1)
    coeffs = [float(math.factorial(k) * row[k + 1]) for k in range(n + 1)]
    acc = np.zeros_like(x)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc * x


def _series_peak(n, abs_u):
    # Term magnitude |u|^l l^n is maximal at l = n / -log|u|.
    if n == 0:
        return 1.0
    return n / -math.log(abs_u)


def polylog_neg_series(
    neg_order: int,
    u: float,
    rel_tol: float = 1e-12,
    max_terms: int = SERIES_MAX_TERMS,
) -> float:
    """``Li_{-n}(u)`` by truncating ``sum_{l >= 1} u**l * l**n``.

    Past the peak term the ratio ``r`` of consecutive term magnitudes is
    decreasing and below 1, so the remainder after term ``l`` is bounded by
    ``t_{l+1} / (1 - r_l)``.  Summation stops at the first ``l`` where that
    bound falls below ``rel_tol`` times the running partial sum in
    magnitude.  Nonnegative ``u`` is summed in double precision in chunks;
    negative ``u`` is summed with mpmath at a working precision wide enough
    to absorb the largest intermediate term.

    Raises
    ------
    TruncationError
        If the stopping rule is not met within ``max_terms`` terms, which
        can only happen for ``|u|`` very close to 1.
    """
    arg = PolylogArg(neg_order, u)
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    n, u = arg.neg_order, arg.u
    if u == 0.0:
        return 0.0
    peak = _series_peak(n, abs(u))
    if u > 0.0:
        return _series_float(n, u, rel_tol, max_terms, peak)
    return _series_mp(n, u, rel_tol, max_terms, peak)


def _series_float(n, u, rel_tol, max_terms, peak):
    chunk_sums = []
    partial = 0.0
    log_u = math.log(u)
    start = 1
    while start <= max_terms:
        stop = min(start + _SERIES_CHUNK, max_terms + 1)
        ls = np.arange(start, stop, dtype=np.float64)
        terms = np.exp(ls * log_u + n * np.log(ls))
        running = partial + np.cumsum(terms)
        # candidate stop after term j when term j+1 is negligible
        nxt = np.exp((ls + 1) * log_u + n * np.log(ls + 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(terms > 0.0, nxt / terms, 0.0)
        done = (
            (ls + 1 > peak)
            & (ratio < 1.0)
            & (nxt < rel_tol * (1.0 - ratio) * running)
        )
        hit = np.flatnonzero(done)
        if hit.size:
            j = hit[0]
            chunk_sums.append(math.fsum(terms[: j + 1]))
            return math.fsum(chunk_sums)
        chunk_sums.append(math.fsum(terms))
        partial = math.fsum(chunk_sums)
        start = stop
    raise TruncationError(
        f"Li_-{n}({u}) series did not reach rel_tol={rel_tol} within "
        f"{max_terms} terms",
        terms=max_terms,
        partial_sum=math.fsum(chunk_sums),
        last_term=float(terms[-1]),
    )


def _series_mp(n, u, rel_tol, max_terms, peak):
    log2_peak = peak * math.log2(abs(u)) + (n * math.log2(peak) if n else 0.0)
    prec = 53 + 64 + max(0, math.ceil(log2_peak))
    with mpmath.workprec(prec):
        um = mpmath.mpf(u)
        power = mpmath.mpf(1)
        total = mpmath.mpf(0)
        tol = mpmath.mpf(rel_tol)
        for l in range(1, max_terms + 1):
            power *= um
            total += power * mpmath.mpf(l) ** n
            cur = abs(power) * mpmath.mpf(l) ** n
            nxt = abs(power * um) * mpmath.mpf(l + 1) ** n
            ratio = nxt / cur
            if l + 1 > peak and ratio < 1 and nxt < tol * (1 - ratio) * abs(total):
                return float(total)
        raise TruncationError(
            f"Li_-{n}({u}) series did not reach rel_tol={rel_tol} within "
            f"{max_terms} terms",
            terms=max_terms,
            partial_sum=float(total),
            last_term=float(nxt),
        )


def zeta_int(b: int, rel_tol: float = 1e-12) -> float:
    """Riemann zeta at an integer ``b >= 2``.

    Direct summation of ``k**-b`` for ``k < N`` plus an Euler-Maclaurin tail
    (integral term, midpoint term and two Bernoulli corrections).  ``N`` is
    the smallest value for which the next omitted correction,
    ``b(b+1)(b+2)(b+3)(b+4) N**-(b+5) / 30240``, is below ``rel_tol``.
    """
    b = _check_nonneg_int("b", b)
    if b < 2:
        raise ValueError(f"zeta_int needs b >= 2, got {b}")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    c = b * (b + 1) * (b + 2) * (b + 3) * (b + 4) / 30240.0
    big_n = max(10, math.ceil((c / rel_tol) ** (1.0 / (b + 5))))
    head = harmonic(big_n - 1, b)
    nn = float(big_n)
    tail = (
        nn ** (1 - b) / (b - 1)
        + 0.5 * nn**-b
        + b * nn ** (-b - 1) / 12.0
        - b * (b + 1) * (b + 2) * nn ** (-b - 3) / 720.0
    )
    return head + tail


def set_partitions(d: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Yield every partition of ``{1, ..., d}`` exactly once.

    Each partition is a tuple of blocks, each block a sorted tuple, blocks
    ordered by their smallest element.  Enumeration walks restricted growth
    strings, so memory stays O(d) however many partitions there are.

    Raises
    ------
    CapacityError
        If ``d > SET_PARTITION_MAX_D``.
    """
    d = _check_nonneg_int("d", d)
    if d < 1:
        raise ValueError("set_partitions needs d >= 1")
    if d > SET_PARTITION_MAX_D:
        raise CapacityError(
            f"set partition enumeration is limited to d <= {SET_PARTITION_MAX_D}"
            f" (Bell({d}) = {bell(d)})"
        )
    return _rgs_partitions(d)


def _rgs_partitions(d):
    # a[i] is the block of element i+1; m[i] = max(a[:i+1]).
    a = [0] * d
    m = [0] * d
    while True:
        blocks = [[] for _ in range(m[-1] + 1)]
        for i, blk in enumerate(a):
            blocks[blk].append(i + 1)
        yield tuple(tuple(b) for b in blocks)
        i = d - 1
        while i > 0 and a[i] > m[i - 1]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        m[i] = max(m[i - 1], a[i])
        for j in range(i + 1, d):
            a[j] = 0
            m[j] = m[i]
