"""Command-line entry points: simulate, report, serve."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import yaml

from . import __version__
from .simharness import (DEFAULT_QUANTILES, config_from_dict, config_hash,
                         final_efficiency_table, read_results_csv, run_study,
                         summarize, write_results_csv, write_summary_csv)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _parse_quantiles(text: str) -> tuple[float, ...]:
    qs = tuple(float(v) for v in text.split(","))
    if any(not 0.0 < q < 1.0 for q in qs):
        raise argparse.ArgumentTypeError("quantiles must lie strictly in (0, 1)")
    return qs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqdesign",
                                     description="Sequential optimal-design engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sim = sub.add_parser("simulate", help="run a simulation study from a config file")
    sim.add_argument("--config", required=True, help="YAML study configuration")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--jobs", type=int, default=1,
                     help="parallel replication workers (default 1)")
    sim.add_argument("--seed-covariates", type=int, default=None)
    sim.add_argument("--seed-deviates", type=int, default=None)
    sim.add_argument("--seed-policy", type=int, default=None)
    sim.add_argument("--quantiles", type=_parse_quantiles,
                     default=DEFAULT_QUANTILES)
    sim.add_argument("-v", "--verbose", action="store_true")

    rep = sub.add_parser("report", help="summarize an existing results file")
    rep.add_argument("--results", required=True, help="results.csv from simulate")
    rep.add_argument("--out", required=True, help="summary file to write")
    rep.add_argument("--quantiles", type=_parse_quantiles,
                     default=DEFAULT_QUANTILES)

    srv = sub.add_parser("serve", help="run the live trial-session API")
    srv.add_argument("--state-dir", required=True, help="event-log directory")
    srv.add_argument("--bind", default="127.0.0.1:8000", help="host:port to bind")
    srv.add_argument("--token", default=None, help="static bearer token")
    return parser


def _cmd_simulate(args) -> int:
    try:
        with open(args.config) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(raw, dict):
        print("error: config must be a mapping of fields", file=sys.stderr)
        return EXIT_CONFIG
    seeds = raw.setdefault("seeds", {})
    if args.seed_covariates is not None:
        seeds["covariates"] = args.seed_covariates
    if args.seed_deviates is not None:
        seeds["deviates"] = args.seed_deviates
    if args.seed_policy is not None:
        seeds["policy"] = args.seed_policy
    try:
        config = config_from_dict(raw)
    except ValueError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        result = run_study(config, jobs=args.jobs)
        rows = result.rows()
        write_results_csv(rows, out / "results.csv")
        write_summary_csv(summarize(rows, args.quantiles), out / "summary.csv")
        table = final_efficiency_table(result, args.quantiles)
        if table:
            write_summary_csv(table, out / "final_efficiency.csv")
    except Exception as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    manifest = {
        "version": __version__,
        "config_sha256": config_hash(config),
        "seeds": {"covariates": config.seeds.covariates,
                  "deviates": config.seeds.deviates,
                  "policy": config.seeds.policy},
        "n": config.n, "n0": config.n0, "replications": config.replications,
        "policies": [p.name for p in config.policies],
        "quantiles": list(args.quantiles),
        "wall_time_s": time.time() - started,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.verbose:
        print(f"wrote {out / 'results.csv'} ({len(result.replications)} replications)")
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        rows = read_results_csv(args.results)
    except (OSError, ValueError) as exc:
        print(f"error: invalid results file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_summary_csv(summarize(rows, args.quantiles), args.out)
    except Exception as exc:
        print(f"error: report failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, sep, port = args.bind.rpartition(":")
    if not sep or not port.isdigit():
        print(f"error: invalid bind address {args.bind!r}", file=sys.stderr)
        return EXIT_RUNTIME
    app = create_app(args.state_dir, token=args.token)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: server failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.subcommand == "simulate":
        return _cmd_simulate(args)
    if args.subcommand == "report":
        return _cmd_report(args)
    return _cmd_serve(args)


if __name__ == "__main__":
    sys.exit(main())
