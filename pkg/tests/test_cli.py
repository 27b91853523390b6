import csv
import io
import json
import time

import numpy as np
import pytest

from segsites import analytic as an
from segsites import cli
from segsites.special_functions import harmonic


def run_cli(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def usage_exit(argv):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    return info.value.code


# --- analytic commands ------------------------------------------------------------


def test_cumulants_csv(capsys):
    code, out, _ = run_cli(["cumulants", "--n", "10", "--theta", "2", "--max-order", "3"], capsys)
    assert code == cli.EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["order"]) for r in rows] == [1, 2, 3]
    assert float(rows[0]["cumulant"]) == pytest.approx(2 * harmonic(9, 1), rel=1e-15)
    assert all(float(r["rel_diff"]) <= 1e-10 for r in rows)


def test_cumulants_json(capsys):
    code, out, _ = run_cli(["cumulants", "--n", "2", "--theta", "1", "--format", "json"], capsys)
    assert code == 0
    records = json.loads(out)
    assert [r["cumulant"] for r in records[:3]] == pytest.approx([1.0, 2.0, 6.0])


def test_pmf_table(capsys):
    code, out, _ = run_cli(["pmf", "--n", "2", "--theta", "1", "--mass-cutoff", "1e-3"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert float(rows[0]["pmf"]) == 0.5
    assert float(rows[-1]["cumulative"]) >= 1 - 1e-3


def test_pgf_values(capsys):
    code, out, _ = run_cli(["pgf", "--n", "2", "--theta", "1", "--s", "0", "1"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["pgf"]) for r in rows] == [0.5, 1.0]


def test_watterson(capsys):
    code, out, _ = run_cli(
        ["watterson", "--n", "6", "--segregating-sites", "5", "--format", "json"], capsys
    )
    assert code == 0
    assert json.loads(out)[0]["theta_hat"] == pytest.approx(300 / 137, rel=1e-15)


def test_out_file_writes_manifest_and_is_stable(tmp_path, capsys):
    out = tmp_path / "k.csv"
    argv = ["cumulants", "--n", "7", "--theta", "0.5", "--out", str(out)]
    assert run_cli(argv, capsys)[0] == 0
    first = out.read_bytes()
    manifest = json.loads((tmp_path / "k.csv.manifest.json").read_text())
    assert manifest["command"] == "cumulants"
    assert manifest["parameters"]["n"] == 7
    assert manifest["version"]
    assert run_cli(argv, capsys)[0] == 0
    assert out.read_bytes() == first


# --- usage errors ------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        ["cumulants", "--n", "1", "--theta", "1"],
        ["cumulants", "--n", "5", "--theta", "0"],
        ["cumulants", "--n", "5", "--theta", "-2"],
        ["cumulants", "--n", "5", "--theta", "nan"],
        ["cumulants", "--n", "2.5", "--theta", "1"],
        ["pmf", "--n", "5", "--theta", "1", "--mass-cutoff", "2"],
        ["pgf", "--n", "5", "--theta", "1", "--s", "3"],
        ["simulate", "--n", "5", "--theta", "1", "--replicates", "0", "--out", "x"],
        ["simulate", "--n", "5", "--theta", "1", "--replicates", "5", "--seed", "-1", "--out", "x"],
        ["asymptotics", "--theta", "1", "--grid", "8,4"],
        ["no-such-command"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert usage_exit(argv) == cli.EXIT_USAGE
    capsys.readouterr()


def test_bad_seed_env_is_usage_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.SEED_ENV, "banana")
    argv = ["simulate", "--n", "3", "--theta", "1", "--replicates", "5", "--out", str(tmp_path)]
    assert usage_exit(argv) == cli.EXIT_USAGE
    capsys.readouterr()


def test_numeric_failure_exit_5(capsys):
    code, _, err = run_cli(["pmf", "--n", "100", "--theta", "1"], capsys)
    assert code == cli.EXIT_NUMERIC
    assert "numerical" in err


def test_integrity_failure_exit_5(monkeypatch, capsys):
    real = an.harmonic
    monkeypatch.setattr(an, "harmonic", lambda n, b: real(n, b) * (1 + 1e-6))
    code, _, _ = run_cli(["cumulants", "--n", "10", "--theta", "1"], capsys)
    assert code == cli.EXIT_NUMERIC


def test_io_failure_exit_4(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run_cli(
        ["cumulants", "--n", "5", "--theta", "1", "--out", str(blocker / "sub" / "k.csv")], capsys
    )
    assert code == cli.EXIT_IO
    assert err


# --- simulate and replay ------------------------------------------------------------


def simulate_argv(out, *extra):
    return ["simulate", "--n", "10", "--theta", "1.5", "--replicates", "5000", "--out", str(out),
            *extra]


def test_simulate_writes_batch_summary_manifest(tmp_path, capsys):
    code, out, _ = run_cli(simulate_argv(tmp_path / "a", "--seed", "9"), capsys)
    assert code == 0
    assert "analytic" in out
    counts = np.loadtxt(tmp_path / "a" / "counts.txt", dtype=np.int64)
    assert counts.size == 5000
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["summary"]["R"] == 5000
    assert summary["config"]["seed"] == 9
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 9
    assert manifest["parameters"]["method"] == "geometric-sum"


def test_simulate_is_byte_reproducible(tmp_path, capsys):
    run_cli(simulate_argv(tmp_path / "a", "--seed", "4"), capsys)
    run_cli(simulate_argv(tmp_path / "b", "--seed", "4", "--workers", "3"), capsys)
    for name in ("counts.txt", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_binary_format(tmp_path, capsys):
    run_cli(simulate_argv(tmp_path / "t", "--seed", "1"), capsys)
    run_cli(simulate_argv(tmp_path / "b", "--seed", "1", "--format", "binary"), capsys)
    text = np.loadtxt(tmp_path / "t" / "counts.txt", dtype=np.int64)
    assert np.array_equal(np.load(tmp_path / "b" / "counts.npy"), text)


def test_seed_from_environment_and_flag_precedence(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.SEED_ENV, "12")
    run_cli(simulate_argv(tmp_path / "env"), capsys)
    run_cli(simulate_argv(tmp_path / "flag", "--seed", "12"), capsys)
    run_cli(simulate_argv(tmp_path / "other", "--seed", "13"), capsys)
    env = (tmp_path / "env" / "counts.txt").read_bytes()
    assert env == (tmp_path / "flag" / "counts.txt").read_bytes()
    assert env != (tmp_path / "other" / "counts.txt").read_bytes()


def test_simulate_single_replicate(tmp_path, capsys):
    argv = ["simulate", "--n", "4", "--theta", "1", "--replicates", "1", "--out", str(tmp_path)]
    assert run_cli(argv, capsys)[0] == 0
    assert json.loads((tmp_path / "summary.json").read_text())["summary"] is None


def test_replay_reproduces_simulation(tmp_path, capsys):
    run_cli(simulate_argv(tmp_path / "a", "--seed", "31"), capsys)
    original = (tmp_path / "a" / "counts.txt").read_bytes()
    (tmp_path / "a" / "counts.txt").unlink()
    assert run_cli(["replay", str(tmp_path / "a" / "manifest.json")], capsys)[0] == 0
    assert (tmp_path / "a" / "counts.txt").read_bytes() == original


def test_replay_table_command(tmp_path, capsys):
    out = tmp_path / "p.csv"
    run_cli(["pmf", "--n", "4", "--theta", "1", "--out", str(out)], capsys)
    original = out.read_bytes()
    out.unlink()
    assert run_cli(["replay", str(tmp_path / "p.csv.manifest.json"), "--out", str(out)],
                   capsys)[0] == 0
    assert out.read_bytes() == original


def test_replay_rejects_non_manifest(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert usage_exit(["replay", str(bad)]) == cli.EXIT_USAGE
    code, _, _ = run_cli(["replay", str(tmp_path / "missing.json")], capsys)
    assert code == cli.EXIT_IO


# --- asymptotics --------------------------------------------------------------------


def test_asymptotics_tables(tmp_path, capsys):
    argv = ["asymptotics", "--theta", "1", "--grid", "2^1..2^10", "--out", str(tmp_path)]
    assert run_cli(argv, capsys)[0] == 0
    lln = list(csv.DictReader(io.StringIO((tmp_path / "lln.csv").read_text())))
    clt = list(csv.DictReader(io.StringIO((tmp_path / "clt.csv").read_text())))
    assert len(lln) == len(clt) == 10
    assert {"relvar", "asymptote", "ratio"} <= set(lln[0])
    assert {"k3", "asym3", "k4", "asym4"} <= set(clt[0])
    assert json.loads((tmp_path / "manifest.json").read_text())["command"] == "asymptotics"


def test_asymptotics_stdout(capsys):
    code, out, _ = run_cli(["asymptotics", "--theta", "2", "--grid", "4,16", "--table", "lln"],
                           capsys)
    assert code == 0
    assert out.splitlines()[0].startswith("n,relvar")


# --- verify ------------------------------------------------------------------------


def test_verify_fast_passes_quickly(tmp_path, capsys):
    start = time.perf_counter()
    code, _, _ = run_cli(["verify", "--level", "fast", "--out", str(tmp_path / "r.json")], capsys)
    elapsed = time.perf_counter() - start
    report = json.loads((tmp_path / "r.json").read_text())
    assert code == cli.EXIT_OK
    assert report["passed"]
    assert all(c["passed"] for c in report["checks"])
    assert elapsed < 60


def test_verify_detects_stirling_perturbation(capsys):
    code, out, _ = run_cli(["verify", "--level", "fast", "--perturb-stirling", "5", "2"], capsys)
    report = json.loads(out)
    assert code == cli.EXIT_VERIFY
    assert not report["passed"]
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    assert {"stirling_table", "polylog_closed_vs_series", "negbin_three_ways"} <= failed
    # both cumulant forms expand through the same table, so they stay equal
    assert "dual_formula" not in failed


def test_max_order_zero_is_usage_error(capsys):
    assert usage_exit(["cumulants", "--n", "2", "--theta", "1", "--max-order", "0"]) == 2
    capsys.readouterr()


def test_pmf_mean_matches_first_cumulant(capsys):
    _, out, _ = run_cli(["pmf", "--n", "5", "--theta", "0.5", "--mass-cutoff", "1e-12"], capsys)
    mean = sum(int(r["m"]) * float(r["pmf"]) for r in csv.DictReader(io.StringIO(out)))
    _, out, _ = run_cli(["cumulants", "--n", "5", "--theta", "0.5", "--max-order", "1"], capsys)
    k1 = float(next(csv.DictReader(io.StringIO(out)))["cumulant"])
    assert abs(mean - k1) < 1e-6


def test_asymptotics_default_grid(tmp_path, capsys):
    assert run_cli(["asymptotics", "--theta", "1", "--out", str(tmp_path)], capsys)[0] == 0
    lln = list(csv.DictReader(io.StringIO((tmp_path / "lln.csv").read_text())))
    clt = list(csv.DictReader(io.StringIO((tmp_path / "clt.csv").read_text())))
    assert len(lln) == len(clt) == 20
    k3 = [float(r["k3"]) for r in clt]
    assert all(v > 0 for v in k3)
    assert k3[-1] < k3[3]
    assert abs(float(lln[-1]["ratio"]) - 1) < 0.2


@pytest.mark.slow
def test_verify_full_passes(tmp_path, capsys):
    code, _, _ = run_cli(["verify", "--level", "full", "--out", str(tmp_path / "r.json")], capsys)
    report = json.loads((tmp_path / "r.json").read_text())
    assert code == cli.EXIT_OK
    names = {c["name"] for c in report["checks"]}
    assert {"mc_cumulants", "mc_pmf_total_variation", "mc_chi_square", "mc_cross_method"} <= names
