"""Self-verification suite behind ``segsites verify``.

Each check pits a library routine against an independent oracle (exact
rational arithmetic, brute-force enumeration, a second formula, or
simulation) and yields a :class:`CheckResult`.  ``fast`` runs the
deterministic identities only; ``full`` adds the Monte Carlo suites at one
million replicates per cell.
"""

from __future__ import annotations

import contextlib
import math
import time
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from segsites import analytic as an
from segsites import asymptotics as asy
from segsites import simulation as sim
from segsites import special_functions as sf

LEVELS = ("fast", "full")
MC_REPLICATES = 10**6
MC_SEED = 20240601
MC_GRID = [(n, theta) for n in (2, 5, 10, 50) for theta in (0.5, 1.0, 2.0)]
CUMULANT_GRID_THETA = (0.1, 0.5, 1.0, 2.0, 10.0)
CUMULANT_GRID_N = (2, 3, 5, 10, 50, 100)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def to_dict(self):
        return asdict(self)


def _rel(a, b):
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def exact_harmonic(n, b):
    return sum(Fraction(1, k**b) for k in range(1, n + 1))


def bell_triangle(n_max):
    """Bell numbers 0..n_max from Aitken's array, independent of Stirling numbers."""
    bells = [1]
    row = [1]
    for _ in range(n_max):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
        bells.append(row[0])
    return bells


# --- deterministic identities -------------------------------------------


def check_stirling_table():
    table = sf.stirling_table()
    bells = bell_triangle(sf.STIRLING_MAX_N)
    bad = []
    if table[0][0] != 1:
        bad.append("S(0,0) != 1")
    for n in range(1, len(table)):
        if table[n][0] != 0:
            bad.append(f"S({n},0) != 0")
        for k in range(1, n + 1):
            left = table[n - 1][k - 1]
            right = table[n - 1][k] if k <= n - 1 else 0
            if table[n][k] != left + k * right:
                bad.append(f"recurrence fails at ({n},{k})")
        if sum(table[n]) != bells[n]:
            bad.append(f"row {n} sum != Bell({n})")
    return not bad, "; ".join(bad[:5]) or f"{len(table)} rows ok"


def check_stirling_vs_partitions():
    bad = []
    for d in range(1, 9):
        counts = [0] * (d + 1)
        for p in sf.set_partitions(d):
            counts[len(p)] += 1
        if counts != [sf.stirling2(d, k) for k in range(d + 1)]:
            bad.append(f"d={d}")
    return not bad, f"mismatch at {bad}" if bad else "d <= 8 enumerations match"


def check_harmonic_exact():
    worst = 0.0
    for n in (1, 9, 100, 1000, 10**4):
        for b in range(1, 5):
            worst = max(worst, _rel(sf.harmonic(n, b), float(exact_harmonic(n, b))))
    return worst < 1e-12, f"max rel err {worst:.2e}"


def check_polylog_closed_vs_series():
    worst = 0.0
    for n in range(11):
        for u in (-0.9, -0.5, -0.1, 0.1, 0.5, 0.9):
            closed = sf.polylog_neg_closed(n, u)
            series = sf.polylog_neg_series(n, u, rel_tol=1e-12)
            worst = max(worst, abs(closed - series) / abs(closed))
    return worst < 1e-9, f"max rel diff {worst:.2e}"


def check_polylog_derivative():
    h = 1e-6
    worst = 0.0
    for n in range(7):
        for u in (-0.7, -0.3, 0.2, 0.5, 0.8):
            fd = (sf.polylog_neg_closed(n, u + h) - sf.polylog_neg_closed(n, u - h)) / (2 * h)
            target = sf.polylog_neg_closed(n + 1, u) / u
            worst = max(worst, _rel(fd, target))
    return worst < 1e-5, f"max rel diff {worst:.2e}"


def check_zeta():
    errs = [
        abs(sf.zeta_int(2) - math.pi**2 / 6),
        abs(sf.zeta_int(4) - math.pi**4 / 90),
        abs(sf.harmonic(10**6, 2) - sf.zeta_int(2)),
    ]
    ok = errs[0] < 1e-10 and errs[1] < 1e-10 and errs[2] < 1.1e-6
    return ok, "errors " + ", ".join(f"{e:.2e}" for e in errs)


def check_dual_formula():
    worst = 0.0
    for theta in CUMULANT_GRID_THETA:
        for n in CUMULANT_GRID_N:
            params = an.MutationParams(theta, n)
            for i in range(1, 9):
                worst = max(
                    worst,
                    _rel(
                        an.segsites_cumulant_polylog(params, i),
                        an.segsites_cumulant_harmonic(params, i),
                    ),
                )
    return worst < 1e-10, f"max rel diff {worst:.2e}"


def check_additivity():
    worst = 0.0
    for theta in CUMULANT_GRID_THETA:
        for n in CUMULANT_GRID_N:
            params = an.MutationParams(theta, n)
            for i in range(1, 9):
                parts = math.fsum(an.geometric_Gk_cumulant(theta, k, i) for k in range(2, n + 1))
                worst = max(worst, _rel(an.segsites_cumulant_harmonic(params, i), parts))
    return worst < 1e-12, f"max rel diff {worst:.2e}"


def check_negbin_three_ways():
    worst = 0.0
    for a in (0.5, 1.0, 2.0):
        for p in (0.1, 0.5, 0.9):
            nb = an.NegBinParams(a, p)
            for i in range(1, 9):
                closed = an.negbin_cumulant(nb, i)
                worst = max(
                    worst,
                    _rel(closed, an.negbin_cumulant_partition_sum(nb, i)),
                    _rel(closed, an.negbin_cumulant_cgf_series(nb, i)),
                )
    return worst < 1e-9, f"max rel diff {worst:.2e}"


def check_pgf_pmf():
    worst = 0.0
    for n in (2, 3, 5, 10):
        for theta in (0.5, 1.0, 2.0):
            params = an.MutationParams(theta, n)
            pmf = [an.segsites_pmf(params, m) for m in range(400)]
            for s in (0.0, 0.3, 0.7):
                series = math.fsum(p * s**m for m, p in enumerate(pmf))
                worst = max(worst, abs(series - an.segsites_pgf(params, s)))
    return worst < 1e-8, f"max abs diff {worst:.2e}"


def check_pmf_mass_and_mean():
    worst_mass = worst_mean = 0.0
    for n in (2, 3, 5, 10):
        for theta in (0.5, 1.0, 2.0):
            params = an.MutationParams(theta, n)
            pmf = [an.segsites_pmf(params, m) for m in range(600)]
            worst_mass = max(worst_mass, abs(math.fsum(pmf) - 1.0))
            mean = math.fsum(m * p for m, p in enumerate(pmf))
            worst_mean = max(worst_mean, abs(mean - an.segsites_mean(params)))
    ok = worst_mass < 1e-9 and worst_mean < 1e-6
    return ok, f"mass err {worst_mass:.2e}, mean err {worst_mean:.2e}"


def check_watterson_identity():
    worst = 0.0
    for theta in CUMULANT_GRID_THETA:
        for n in CUMULANT_GRID_N:
            est = an.watterson_estimator(an.segsites_mean(an.MutationParams(theta, n)), n)
            worst = max(worst, _rel(est, theta))
    return worst < 1e-12, f"max rel err {worst:.2e}"


def check_asymptotics():
    grid = asy.parse_grid("2^4..2^20")
    clt = asy.clt_table(1.0, grid, max_order=4)
    lln = asy.lln_table(1.0, grid)
    problems = []
    if np.any(clt.column("k1") != 0.0) or np.any(clt.column("k2") != 1.0):
        problems.append("standardized k1/k2 not exactly 0/1")
    for col in ("k3", "k4"):
        if not np.all(np.diff(clt.column(col)) < 0):
            problems.append(f"{col} not strictly decreasing")
    ratio = lln.column("ratio")[-1]
    if abs(ratio - 1.0) > 0.2:
        problems.append(f"relvar*theta*log n = {ratio:.4f} at 2^20")
    if abs(lln.column("harmonic_log_ratio")[-1] - 1.0) >= 0.1:
        problems.append("H_n/log n not within 0.1 of 1 at 2^20")
    return not problems, "; ".join(problems) or f"lln ratio at 2^20 = {ratio:.4f}"


FAST_CHECKS = {
    "stirling_table": check_stirling_table,
    "stirling_vs_partitions": check_stirling_vs_partitions,
    "harmonic_exact": check_harmonic_exact,
    "polylog_closed_vs_series": check_polylog_closed_vs_series,
    "polylog_derivative_recursion": check_polylog_derivative,
    "zeta_int": check_zeta,
    "dual_formula": check_dual_formula,
    "additivity": check_additivity,
    "negbin_three_ways": check_negbin_three_ways,
    "pgf_pmf_consistency": check_pgf_pmf,
    "pmf_mass_and_mean": check_pmf_mass_and_mean,
    "watterson_identity": check_watterson_identity,
    "asymptotics": check_asymptotics,
}


# --- Monte Carlo suites ---------------------------------------------------


def check_mc_cumulants():
    worst = 0.0
    where = ""
    for method in sim.Method:
        for n, theta in MC_GRID:
            params = an.MutationParams(theta, n)
            summary = sim.summarize(
                sim.simulate(sim.SimConfig(params, MC_REPLICATES, MC_SEED, method))
            )
            pairs = [
                (summary.mean, summary.se_mean, 1),
                (summary.variance, summary.se_k2, 2),
                (summary.k3, summary.se_k3, 3),
                (summary.k4, summary.se_k4, 4),
            ]
            for est, se, i in pairs:
                z = abs(est - an.segsites_cumulant(params, i)) / se
                if z > worst:
                    worst, where = z, f"{method.value} n={n} theta={theta} order {i}"
    return worst < 5.0, f"max |z| {worst:.2f} ({where})"


def check_mc_pmf():
    worst = 0.0
    for n in (2, 3, 5):
        params = an.MutationParams(1.0, n)
        batch = sim.simulate(sim.SimConfig(params, MC_REPLICATES, MC_SEED))
        rows = an.segsites_pmf_table(params, 1e-9)
        tv = sim.total_variation([r[1] for r in rows], sim.empirical_pmf(batch))
        worst = max(worst, tv)
    return worst < 0.005, f"max TV {worst:.4f}"


def check_mc_chi_square():
    params = an.MutationParams(1.0, 10)
    a = sim.simulate(sim.SimConfig(params, 10**5, MC_SEED, sim.Method.GEOMETRIC_SUM)).counts
    b = sim.simulate(sim.SimConfig(params, 10**5, MC_SEED, sim.Method.EXPONENTIAL_MIXTURE)).counts
    p = two_sample_chi_square(a, b)
    return p > 1e-3, f"p = {p:.4f}"


def two_sample_chi_square(a, b, min_expected=5.0):
    """p-value of a chi-square homogeneity test on binned counts.

    Bins from the first one whose expected count drops below
    ``min_expected`` upward are pooled into a single tail bin.
    """
    top = int(max(a.max(), b.max())) + 1
    ha = np.bincount(a, minlength=top).astype(float)
    hb = np.bincount(b, minlength=top).astype(float)
    expected = (ha + hb) * min(a.size, b.size) / (a.size + b.size)
    low = np.flatnonzero(expected < min_expected)
    cut = max(int(low[0]), 1) if low.size else top
    table = np.vstack([
        np.append(ha[:cut], ha[cut:].sum()),
        np.append(hb[:cut], hb[cut:].sum()),
    ])
    table = table[:, table.sum(axis=0) > 0]
    return float(stats.chi2_contingency(table)[1])


def check_mc_cross_method():
    bad = []
    for n, theta in ((2, 1.0), (50, 0.5)):
        report = sim.cross_method_check(an.MutationParams(theta, n), 10**5, MC_SEED)
        if not report.ok:
            bad.append(f"n={n}")
    return not bad, f"flagged: {bad}" if bad else "all |z| <= 4"


FULL_CHECKS = {
    **FAST_CHECKS,
    "mc_cumulants": check_mc_cumulants,
    "mc_pmf_total_variation": check_mc_pmf,
    "mc_chi_square": check_mc_chi_square,
    "mc_cross_method": check_mc_cross_method,
}


def run(level: str = "fast", perturb_stirling: tuple[int, int] | None = None):
    """Run every check for ``level``; optionally corrupt one Stirling entry first."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    checks = FAST_CHECKS if level == "fast" else FULL_CHECKS
    ctx = (
        sf.perturb_stirling(*perturb_stirling)
        if perturb_stirling is not None
        else contextlib.nullcontext()
    )
    results = []
    with ctx:
        for name, fn in checks.items():
            start = time.perf_counter()
            try:
                passed, detail = fn()
            except Exception as exc:  # a crash is a failed check, not a crashed suite
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - start))
    return results
