import math

import numpy as np
import pytest
from scipy import stats

from segsites import simulation as sim
from segsites.analytic import MutationParams, segsites_cumulants, segsites_pmf_by_convolution
from segsites.simulation import Method, SimConfig

ALL_METHODS = list(Method)


def run(theta, n, R, seed=0, method=Method.GEOMETRIC_SUM, workers=1):
    return sim.simulate(SimConfig(MutationParams(theta, n), R, seed, method), workers=workers)


@pytest.mark.parametrize("method", ALL_METHODS)
def test_same_seed_same_output(method):
    a = run(1.5, 20, 10_000, seed=7, method=method)
    b = run(1.5, 20, 10_000, seed=7, method=method)
    assert np.array_equal(a.counts, b.counts)
    assert a.counts.dtype == np.int64
    assert len(a) == 10_000


@pytest.mark.parametrize("method", ALL_METHODS)
def test_output_independent_of_worker_count(method):
    a = run(1.0, 30, 3 * sim.BLOCK_SIZE + 17, seed=3, method=method, workers=1)
    b = run(1.0, 30, 3 * sim.BLOCK_SIZE + 17, seed=3, method=method, workers=4)
    assert np.array_equal(a.counts, b.counts)


def test_smaller_run_is_prefix_of_larger_run():
    small = run(2.0, 15, 5000, seed=11)
    large = run(2.0, 15, 20000, seed=11)
    assert np.array_equal(small.counts, large.counts[:5000])


def test_different_seeds_and_methods_differ():
    a = run(2.0, 15, 5000, seed=1)
    b = run(2.0, 15, 5000, seed=2)
    c = run(2.0, 15, 5000, seed=1, method=Method.FULL_TREE)
    assert not np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)


@pytest.mark.parametrize("method", ALL_METHODS)
def test_tiny_theta_gives_no_mutations(method):
    batch = run(1e-9, 5, 10**4, method=method)
    assert batch.counts.mean() < 1e-6


@pytest.mark.parametrize("method", ALL_METHODS)
def test_n2_theta1_mean(method):
    s = sim.summarize(run(1.0, 2, 10**5, seed=5, method=method))
    assert abs(s.mean - 1.0) < 4 * s.se_mean


@pytest.mark.parametrize("method", ALL_METHODS)
@pytest.mark.parametrize("theta, n", [(0.5, 7), (3.0, 40)])
def test_cumulants_match_analytic(method, theta, n):
    s = sim.summarize(run(theta, n, 2 * 10**5, seed=21, method=method, workers=None))
    kv = segsites_cumulants(MutationParams(theta, n), 4)
    for est, se, ref in [
        (s.mean, s.se_mean, kv[1]),
        (s.variance, s.se_k2, kv[2]),
        (s.k3, s.se_k3, kv[3]),
        (s.k4, s.se_k4, kv[4]),
    ]:
        assert abs(est - ref) < 5 * se


@pytest.mark.parametrize("method", ALL_METHODS)
def test_sampler_pmf_close_to_exact(method):
    params = MutationParams(1.0, 10)
    batch = run(1.0, 10, 4 * 10**5, seed=8, method=method, workers=None)
    emp = sim.empirical_pmf(batch)
    exact = segsites_pmf_by_convolution(params, emp.size + 60)
    assert sim.total_variation(emp, exact) < 0.01


@pytest.mark.slow
def test_million_replicates_reproducible_and_k3_matches():
    a = run(2.0, 10, 10**6, seed=123, workers=None)
    b = run(2.0, 10, 10**6, seed=123, workers=2)
    assert np.array_equal(a.counts, b.counts)
    s = sim.summarize(a)
    k3 = segsites_cumulants(MutationParams(2.0, 10), 3)[3]
    assert abs(s.k3 - k3) < 5 * s.se_k3


def test_summarize_constant_batch():
    s = sim.summarize(np.full(100, 3))
    assert (s.mean, s.variance, s.k3, s.k4) == (3.0, 0.0, 0.0, 0.0)
    assert s.se_mean == 0.0


def test_summarize_poisson_reference():
    rng = np.random.default_rng(0)
    s = sim.summarize(rng.poisson(4.0, size=10**6))
    for est, se in [(s.mean, s.se_mean), (s.variance, s.se_k2), (s.k3, s.se_k3), (s.k4, s.se_k4)]:
        assert abs(est - 4.0) < 5 * se
    assert s.R == 10**6


def test_summarize_needs_four_replicates():
    with pytest.raises(ValueError):
        sim.summarize(np.array([1, 2, 3]))


def test_empirical_pmf_and_total_variation():
    assert sim.empirical_pmf(np.array([0, 0, 2, 1])).tolist() == [0.5, 0.25, 0.25]
    assert sim.total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert sim.total_variation([1.0], [0.0, 1.0]) == 1.0
    # truncated pmf: missing mass counts against it
    assert sim.total_variation([0.5, 0.4], [0.5, 0.5]) == pytest.approx(0.1)


def test_simconfig_validation():
    params = MutationParams(1.0, 5)
    with pytest.raises(ValueError):
        SimConfig(params, 0, 1)
    with pytest.raises(ValueError):
        SimConfig(params, 10, -1)
    with pytest.raises(TypeError):
        SimConfig(params, 2.5, 1)
    with pytest.raises(ValueError):
        SimConfig(params, 10, 1, "no-such-method")
    assert SimConfig(params, 10, 1, "full-tree").method is Method.FULL_TREE


# --- cross-method consistency ----------------------------------------------------


def test_cross_method_declines_single_replicate():
    report = sim.cross_method_check(MutationParams(1.0, 5), 1, seed=0)
    assert report.declined
    assert not report.ok
    assert report.comparisons == ()


@pytest.mark.parametrize("n, theta", [(2, 1.0), (50, 0.5)])
def test_cross_method_agreement_over_seeds(n, theta):
    flagged = 0
    for seed in range(5):
        report = sim.cross_method_check(MutationParams(theta, n), 10**5, seed=seed)
        assert len(report.comparisons) == 6
        flagged += sum(c.flagged for c in report.comparisons)
    assert flagged == 0


def test_cross_method_flags_a_broken_sampler(monkeypatch):
    real = sim._DRAWERS[Method.FULL_TREE]
    monkeypatch.setitem(
        sim._DRAWERS, Method.FULL_TREE, lambda rng, size, n, theta: real(rng, size, n, 1.2 * theta)
    )
    report = sim.cross_method_check(MutationParams(1.0, 20), 10**5, seed=0)
    assert not report.ok
    assert any(c.flagged and Method.FULL_TREE in (c.first, c.second) for c in report.comparisons)


def test_chi_square_homogeneity_between_methods():
    a = run(1.0, 20, 10**5, seed=1, method=Method.GEOMETRIC_SUM, workers=None).counts
    b = run(1.0, 20, 10**5, seed=2, method=Method.EXPONENTIAL_MIXTURE, workers=None).counts
    c = run(1.0, 20, 10**5, seed=3, method=Method.FULL_TREE, workers=None).counts
    top = 15
    table = np.array([np.bincount(np.minimum(x, top), minlength=top + 1) for x in (a, b, c)])
    assert stats.chi2_contingency(table).pvalue > 1e-3


# --- batch I/O ------------------------------------------------------------------


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_counts_round_trip(tmp_path, fmt):
    counts = run(2.0, 10, 1000).counts
    path = sim.write_counts(tmp_path / "counts", counts, fmt)
    assert np.array_equal(sim.read_counts(path), counts)


def test_text_counts_are_one_per_line(tmp_path):
    path = sim.write_counts(tmp_path / "c.txt", [3, 0, 12])
    assert path.read_text() == "3\n0\n12\n"


def test_single_replicate_round_trip(tmp_path):
    path = sim.write_counts(tmp_path / "c.txt", [4])
    assert sim.read_counts(path).tolist() == [4]


def test_unknown_format():
    with pytest.raises(ValueError):
        sim.write_counts("x", [1], "csv")


def test_batch_se_scales_like_root_R():
    s1 = sim.summarize(run(1.0, 10, 10**4, seed=4))
    s2 = sim.summarize(run(1.0, 10, 4 * 10**4, seed=4))
    assert s2.se_mean == pytest.approx(s1.se_mean / 2, rel=0.35)
    assert math.isfinite(s2.se_k4)
