"""Command-line interface: ``plrates {rates,simulate,estimate,sweep,geometry}``.

Exit codes: 0 all verdicts passing, 1 a failing verdict, 2 usage or config
error, 3 inconclusive.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .config import ConfigError, load_config
from .engine import write_trajectories
from .estimator import Verdict
from .rates import SpectralParams, max_stable_step, rate_curve, rate_summary

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 3

log = logging.getLogger("plrates")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2) + "\n")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def verdict_exit(verdicts) -> int:
    verdicts = list(verdicts)
    if any(v is Verdict.ABOVE_M_WITHIN_EPS for v in verdicts):
        return EXIT_FAIL
    if any(v is Verdict.INCONCLUSIVE for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _parse_grid(text: str | None) -> list[float]:
    if not text:
        return []
    return [float(x) for x in text.replace(",", " ").split()]


def cmd_rates(args) -> int:
    try:
        p = SpectralParams(args.mu, args.L, args.sigma)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    grid = _parse_grid(args.gamma_grid)
    if args.grid_n:
        hi = max_stable_step(p)
        grid += [hi * (i + 1) / (args.grid_n + 1) for i in range(args.grid_n)]
    summary = rate_summary(p)
    print(" ".join(f"{k}={v:.6g}" for k, v in summary.items()))
    rows = [(pt.gamma, pt.m_value, pt.phi_value, pt.stable) for pt in rate_curve(p, grid)]
    if rows:
        print("gamma,m,phi,stable")
        for g, m, phi, st in rows:
            print(f"{g:.6g},{m:.6g},{phi:.6g},{str(st).lower()}")
    if args.csv:
        write_csv(Path(args.csv), ["gamma", "m", "phi", "stable"],
                  [(repr(g), repr(m), repr(phi), str(st).lower()) for g, m, phi, st in rows])
    if args.json:
        write_json(Path(args.json), summary)
    return EXIT_OK


def _load(args):
    overrides = dict(kv.split("=", 1) for kv in (args.set or []) if "=" in kv)
    if any("=" not in kv for kv in (args.set or [])):
        raise ConfigError("--set expects section.key=value")
    for flag, key in (("gamma", "run.gamma"), ("steps", "run.steps"), ("replicas", "run.replicas"),
                      ("seed", "run.base_seed"), ("workers", "run.workers"), ("out", "output.dir")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = str(v)
    if getattr(args, "gamma", None) is not None:
        overrides["run.gamma_grid"] = "none"
    return load_config(args.config, overrides)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir()
    trajs, summary = experiments.simulate(cfg)
    files = write_trajectories(trajs, out, combined=args.combined or cfg.output.combined)
    summary["files"] = [str(p) for p in files]
    write_json(out / "simulate_summary.json", summary)
    print(json.dumps(_jsonable({k: v for k, v in summary.items() if k != "files"})))
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir()
    res = experiments.estimate(cfg)
    report = res.report.to_json()
    write_json(out / "rate_report.json", report)
    write_csv(out / "plot_data.csv", ["k", "median_log_distsq", "theory_log_line"], res.plot)
    print(json.dumps(_jsonable(report)))
    return verdict_exit([res.report.verdict])


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir()
    rows, summary = experiments.sweep(cfg)
    cols = ["gamma", "empirical_rate", "theory_m", "theory_phi", "verdict"]
    write_csv(out / "sweep.csv", cols, [[r[c] for c in cols] for r in rows])
    write_json(out / "sweep_summary.json", summary)
    for r in rows:
        print(",".join(str(r[c]) for c in cols))
    print(json.dumps(_jsonable(summary)))
    # points beyond the stability threshold are demonstrations, not checks
    return verdict_exit(Verdict(r["verdict"]) for r in rows if r["theory_m"] < 1)


def cmd_geometry(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir()
    data, contraction = experiments.geometry(cfg)
    write_json(out / "geometry.json", data)
    if contraction is not None:
        write_csv(out / "contraction.csv", ["k", "normsq_ratio", "bound"], contraction.rows())
    print(json.dumps(_jsonable(data)))
    return {"PASS": EXIT_OK, "FAIL": EXIT_FAIL}.get(data["status"], EXIT_INCONCLUSIVE)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plrates", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rates", help="closed-form rates and optimal step-sizes")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--gamma-grid", help="comma-separated step-sizes")
    p.add_argument("--grid-n", type=int, default=0, help="add N equispaced steps in (0, max stable step)")
    p.add_argument("--csv", help="write gamma,m,phi,stable to this file")
    p.add_argument("--json", help="write the summary to this file")
    p.set_defaults(func=cmd_rates)

    for name, func, help_ in (
        ("simulate", cmd_simulate, "run (S)GD replicas and dump trajectories"),
        ("estimate", cmd_estimate, "fit asymptotic rates and compare with m(gamma)"),
        ("sweep", cmd_sweep, "empirical rate over a step-size grid"),
        ("geometry", cmd_geometry, "Hessian spectrum, PL constant and contraction at the limit"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="experiment config (INI sections)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        p.add_argument("--out", help="output directory")
        p.add_argument("--gamma", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--replicas", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        if name == "simulate":
            p.add_argument("--combined", action="store_true", help="one CSV with a replica column")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
