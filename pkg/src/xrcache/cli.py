"""Command-line entry point: ``xrcache <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import dynamic, harness, verify, xr


def _load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def cmd_scenario_table(args) -> int:
    cfg = _load_config(args.config)
    raw = cfg.get("scenarios") if isinstance(cfg, dict) else cfg
    specs = [xr.ScenarioSpec.from_dict(d) for d in raw] if raw else list(xr.REFERENCE_SCENARIOS)
    _emit(xr.scenario_table_csv([xr.scenario_metrics(s) for s in specs]), args.out)
    return 0


def cmd_codec_verify(args) -> int:
    cfg = _load_config(args.config)
    max_users = args.max_users or cfg.get("max_users", 4)
    max_files = args.max_files or cfg.get("max_files", 4)
    Ls = tuple(cfg.get("L", (1, 2)))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    rows = verify.exhaustive_report(max_users, max_files, Ls, seed=seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "K", "N", "t", "L", "demands", "decodes", "failures"])
    for r in rows:
        w.writerow([r.scheme, r.K, r.N, r.t, r.L, r.demands, r.decodes, r.failures])
    _emit(buf.getvalue(), args.out)
    failed = sum(r.failures for r in rows)
    print(f"{sum(r.decodes for r in rows)} decodes, {failed} failures", file=sys.stderr)
    return 1 if failed else 0


def cmd_simulate(args) -> int:
    cfg = harness.ExperimentConfig.from_dict(_load_config(args.config))
    if args.preset == "crowd":
        cfg = harness.crowd_config()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    schemes = args.schemes.split(",") if args.schemes else harness.SCHEMES
    reports = harness.run_all(cfg, schemes)
    _emit(harness.reports_csv(reports), args.out)
    sys.stderr.write(harness.summary_csv(reports))
    return 0


def cmd_dynamic_dof(args) -> int:
    cfg = _load_config(args.config)
    K = args.users or cfg.get("users", 50)
    P = args.profiles or cfg.get("profiles", 10)
    t = args.t if args.t is not None else cfg.get("t", 5)
    L = args.l or cfg.get("L", 9)
    seeds = args.trials or cfg.get("trials", 200)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if args.sigma_grid:
        grid = _floats(args.sigma_grid)
    elif "sigma_grid" in cfg:
        grid = [float(x) for x in cfg["sigma_grid"]]
    else:
        top = dynamic.max_sigma(K, P)
        grid = [top * i / 4 for i in range(5)]
    rows = dynamic.dof_sweep(K, P, t, L, grid, n_seeds=seeds, seed=seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sigma", "mean_dof", "std_dof"])
    for s, m, sd in rows:
        w.writerow([repr(s), repr(m), repr(sd)])
    _emit(buf.getvalue(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xrcache", description="Coded caching for multi-user XR.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", help="CSV output path (default: stdout)")
        return p

    p = common(sub.add_parser("scenario-table", help="dimensioning table of XR setups"))
    p.set_defaults(func=cmd_scenario_table)

    p = common(sub.add_parser("codec-verify", help="exhaustive decodability check"))
    p.add_argument("--max-users", type=int)
    p.add_argument("--max-files", type=int)
    p.set_defaults(func=cmd_codec_verify)

    p = common(sub.add_parser("simulate", help="delivery-time CDFs of the four schemes"))
    p.add_argument("--preset", choices=["desk", "crowd"], default="desk")
    p.add_argument("--schemes", help="comma-separated subset of " + ",".join(harness.SCHEMES))
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("dynamic-dof", help="DoF vs profile-assignment skew"))
    p.add_argument("--users", type=int)
    p.add_argument("--profiles", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--sigma-grid", help="comma- or space-separated sigma values")
    p.set_defaults(func=cmd_dynamic_dof)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
