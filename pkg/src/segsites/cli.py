"""Command-line interface: ``segsites <command> [options]``.

Exit status: 0 success, 2 usage error, 3 verification failure, 4 I/O
error, 5 numerical failure (precision loss, non-convergence).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path

from segsites import __version__
from segsites import analytic as an
from segsites import asymptotics as asy
from segsites import simulation as sim
from segsites import verify as ver
from segsites.errors import IntegrityError, PrecisionLossError, TruncationError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFY = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

SEED_ENV = "SEGSITES_SEED"


class UsageError(Exception):
    pass


def _positive_int(minimum):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {value}")
        return value
    return parse


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a real number, got {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be a positive finite real, got {text}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


# --- output helpers ---------------------------------------------------------


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render(records, fmt):
    if fmt == "json":
        return json.dumps(records, indent=2) + "\n"
    if not records:
        return ""
    names = list(records[0])
    lines = [",".join(names)]
    lines += [",".join(_fmt(r[c]) for c in names) for r in records]
    return "\n".join(lines) + "\n"


def _write_text(path, text):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _manifest(command, params, argv):
    return {
        "command": command,
        "parameters": params,
        "seed": params.get("seed"),
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "argv": argv,
    }


def _emit(args, text, params, argv):
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    _write_text(out, text)
    manifest = _manifest(args.command, params, argv)
    _write_text(out.with_name(out.name + ".manifest.json"), json.dumps(manifest, indent=2) + "\n")


# --- commands ---------------------------------------------------------------


def cmd_cumulants(args):
    params = an.MutationParams(args.theta, args.n)
    records = []
    for i in range(1, args.max_order + 1):
        by_epoch = an.segsites_cumulant_polylog(params, i)
        by_harmonic = an.segsites_cumulant_harmonic(params, i)
        diff = 0.0 if by_epoch == by_harmonic else abs(by_epoch - by_harmonic) / abs(by_harmonic)
        records.append({
            "order": i,
            "cumulant": an.segsites_cumulant(params, i),
            "polylog_form": by_epoch,
            "harmonic_form": by_harmonic,
            "rel_diff": diff,
        })
    p = {"n": args.n, "theta": args.theta, "max_order": args.max_order, "format": args.format}
    argv = ["cumulants", "--n", str(args.n), "--theta", repr(args.theta),
            "--max-order", str(args.max_order), "--format", args.format]
    _emit(args, _render(records, args.format), p, argv)
    return EXIT_OK


def cmd_pmf(args):
    if not 0.0 < args.mass_cutoff < 1.0:
        raise UsageError("--mass-cutoff must lie in (0, 1)")
    params = an.MutationParams(args.theta, args.n)
    rows = an.segsites_pmf_table(params, args.mass_cutoff)
    records = [{"m": m, "pmf": p, "cumulative": c} for m, p, c in rows]
    p = {"n": args.n, "theta": args.theta, "mass_cutoff": args.mass_cutoff, "format": args.format}
    argv = ["pmf", "--n", str(args.n), "--theta", repr(args.theta),
            "--mass-cutoff", repr(args.mass_cutoff), "--format", args.format]
    _emit(args, _render(records, args.format), p, argv)
    return EXIT_OK


def cmd_pgf(args):
    params = an.MutationParams(args.theta, args.n)
    try:
        records = [{"s": s, "pgf": an.segsites_pgf(params, s)} for s in args.s]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    p = {"n": args.n, "theta": args.theta, "s": args.s, "format": args.format}
    argv = ["pgf", "--n", str(args.n), "--theta", repr(args.theta),
            "--s", *(repr(s) for s in args.s), "--format", args.format]
    _emit(args, _render(records, args.format), p, argv)
    return EXIT_OK


def cmd_watterson(args):
    est = an.watterson_estimator(args.segregating_sites, args.n)
    records = [{"segregating_sites": args.segregating_sites, "n": args.n, "theta_hat": est}]
    p = {"n": args.n, "segregating_sites": args.segregating_sites, "format": args.format}
    argv = ["watterson", "--n", str(args.n), "--segregating-sites",
            str(args.segregating_sites), "--format", args.format]
    _emit(args, _render(records, args.format), p, argv)
    return EXIT_OK


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return _seed(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"${SEED_ENV}={env!r} is not a valid seed") from None
    return 0


def cmd_simulate(args):
    seed = _resolve_seed(args)
    params = an.MutationParams(args.theta, args.n)
    config = sim.SimConfig(params, args.replicates, seed, sim.Method(args.method))
    batch = sim.simulate(config, workers=args.workers)

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        counts_name = "counts.txt" if args.format == "text" else "counts.npy"
        sim.write_counts(out / counts_name, batch.counts, args.format)
    except OSError as exc:
        raise OSError(f"cannot write batch under {out}: {exc.strerror or exc}") from exc

    summary = None
    comparison = None
    if args.replicates >= 4:
        stats = sim.summarize(batch)
        summary = stats.to_dict()
        mean = an.segsites_mean(params)
        comparison = {
            "analytic_mean": mean,
            "z_mean": (stats.mean - mean) / stats.se_mean if stats.se_mean > 0 else None,
        }
    _write_text(
        out / "summary.json",
        json.dumps({"config": config.to_dict(), "summary": summary,
                    "comparison": comparison}, indent=2) + "\n",
    )
    p = {**config.to_dict(), "format": args.format}
    argv = ["simulate", "--n", str(args.n), "--theta", repr(args.theta),
            "--replicates", str(args.replicates), "--seed", str(seed),
            "--method", args.method, "--format", args.format, "--out", str(out)]
    _write_text(out / "manifest.json",
                json.dumps(_manifest("simulate", p, argv), indent=2) + "\n")
    if comparison is not None:
        z = comparison["z_mean"]
        z_text = "n/a" if z is None else f"{z:+.2f}"
        print(f"mean {summary['mean']!r} vs analytic {comparison['analytic_mean']!r} "
              f"(z = {z_text})")
    print(f"wrote {out / counts_name}, {out / 'summary.json'}, {out / 'manifest.json'}")
    return EXIT_OK


def cmd_verify(args):
    results = ver.run(args.level, perturb_stirling=args.perturb_stirling)
    report = {
        "level": args.level,
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write_text(Path(args.out), text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_asymptotics(args):
    try:
        grid = asy.parse_grid(args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    tables = {}
    if args.table in ("lln", "both"):
        tables["lln"] = asy.lln_table(args.theta, grid).to_csv()
    if args.table in ("clt", "both"):
        tables["clt"] = asy.clt_table(args.theta, grid, args.max_order).to_csv()
    p = {"theta": args.theta, "grid": args.grid, "max_order": args.max_order, "table": args.table}
    argv = ["asymptotics", "--theta", repr(args.theta), "--grid", args.grid,
            "--max-order", str(args.max_order), "--table", args.table]
    if args.out is None:
        for name, text in tables.items():
            if len(tables) > 1:
                sys.stdout.write(f"# {name}\n")
            sys.stdout.write(text)
        return EXIT_OK
    out = Path(args.out)
    for name, text in tables.items():
        _write_text(out / f"{name}.csv", text)
    _write_text(out / "manifest.json",
                json.dumps(_manifest("asymptotics", p, argv + ["--out", str(out)]), indent=2) + "\n")
    return EXIT_OK


def cmd_replay(args):
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read {args.manifest}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.manifest} is not a manifest: {exc}") from exc
    argv = list(manifest.get("argv") or [])
    if not argv or argv[0] == "replay":
        raise UsageError(f"{args.manifest} has no replayable command")
    if "--out" not in argv and args.out is not None:
        argv += ["--out", args.out]
    return main(argv)


# --- parser -----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="segsites",
        description="Exact cumulants and Monte Carlo checks for the number of "
                    "segregating sites under Kingman's coalescent.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model(p, need_theta=True):
        p.add_argument("--n", type=_positive_int(2), required=True, help="sample size (>= 2)")
        if need_theta:
            p.add_argument("--theta", type=_positive_float, required=True,
                           help="scaled mutation rate")

    def add_table_out(p):
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", help="write here instead of stdout, with a manifest alongside")

    p = sub.add_parser("cumulants", help="exact cumulants of S_n by both formulas")
    add_model(p)
    p.add_argument("--max-order", type=_positive_int(1), default=4)
    add_table_out(p)
    p.set_defaults(func=cmd_cumulants)

    p = sub.add_parser("pmf", help="probability mass function table")
    add_model(p)
    p.add_argument("--mass-cutoff", type=float, default=1e-6,
                   help="stop once cumulative mass reaches 1 - cutoff")
    add_table_out(p)
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("pgf", help="probability generating function values")
    add_model(p)
    p.add_argument("--s", type=float, nargs="+", required=True)
    add_table_out(p)
    p.set_defaults(func=cmd_pgf)

    p = sub.add_parser("watterson", help="Watterson's estimate of theta")
    p.add_argument("--n", type=_positive_int(2), required=True)
    p.add_argument("--segregating-sites", type=_positive_int(0), required=True)
    add_table_out(p)
    p.set_defaults(func=cmd_watterson)

    p = sub.add_parser("simulate", help="seeded Monte Carlo batch of S_n")
    add_model(p)
    p.add_argument("--replicates", type=_positive_int(1), required=True)
    p.add_argument("--seed", type=_seed, default=None,
                   help=f"64-bit seed (default: ${SEED_ENV}, else 0)")
    p.add_argument("--method", choices=[m.value for m in sim.Method],
                   default=sim.Method.GEOMETRIC_SUM.value)
    p.add_argument("--format", choices=("text", "binary"), default="text",
                   help="batch file: one decimal count per line, or .npy int64")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=_positive_int(1), default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the self-verification suite")
    p.add_argument("--level", choices=ver.LEVELS, default="fast")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--perturb-stirling", type=int, nargs=2, metavar=("N", "K"),
                   default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("asymptotics", help="LLN/CLT convergence tables as CSV")
    p.add_argument("--theta", type=_positive_float, required=True)
    p.add_argument("--grid", default=asy.DEFAULT_GRID,
                   help="'B^i..B^j' or comma-separated sizes (default %(default)s)")
    p.add_argument("--max-order", type=_positive_int(3), default=4)
    p.add_argument("--table", choices=("lln", "clt", "both"), default="both")
    p.add_argument("--out", help="output directory for lln.csv / clt.csv")
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output location if the manifest has none")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, TypeError) as exc:
        parser.error(str(exc))
    except (PrecisionLossError, TruncationError, IntegrityError) as exc:
        print(f"segsites: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"segsites: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
