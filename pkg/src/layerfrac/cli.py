"""Command-line entry points: ``run``, ``sweep`` and ``verify``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, SimulationConfig, load_config

log = logging.getLogger("layerfrac")

SERIES_HEADER = ["t", "J", "J_over_Gc_num", "E_elastic", "E_surface", "E_plastic", "tip_nominal_x", "tip_actual_x"]
POLAR_HEADER = ["theta_rad", "G_eff", "G_eff_over_Gc_num", "max_path_deviation", "wake_clusters", "converged"]


def _num(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def write_series(path: Path, series, Gc_num: float) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for r in series:
            w.writerow([_num(r.t), _num(r.J), _num(r.J / Gc_num), _num(r.E_elastic), _num(r.E_surface),
                        _num(r.E_plastic), _num(r.tip_nominal_x), _num(r.tip_actual_x)])


def write_polar(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POLAR_HEADER)
        for r in rows:
            w.writerow([_num(r.theta), _num(r.G_eff), _num(r.G_eff_over_Gc_num), _num(r.max_path_deviation),
                        int(r.wake_clusters), int(bool(r.converged))])


def _load(args) -> SimulationConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, mesh=replace(cfg.mesh, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, output=replace(cfg.output, directory=args.out))
    return cfg


def cmd_run(args) -> int:
    from .simulation import run_quasistatic

    cfg = _load(args)
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    res = run_quasistatic(cfg, out_dir=out)
    write_series(out / "series.csv", res.series, cfg.Gc_num)
    try:
        g_eff = res.effective_toughness()
    except ValueError:
        g_eff = float("nan")
    summary = {
        "G_eff": None if math.isnan(g_eff) else g_eff,
        "G_eff_over_Gc_num": None if math.isnan(g_eff) else g_eff / cfg.Gc_num,
        "Gc_num": cfg.Gc_num,
        "r_y": cfg.ductility_ratios(),
        "wall_time_s": res.wall_time,
        "steps": len(res.series),
        "converged": res.converged,
        "partial": not res.completed,
        "error": res.error,
        "snapshots": [str(p) for p in res.snapshots],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"G_eff = {g_eff:.6g} (G_eff/Gc_num = {g_eff / cfg.Gc_num:.4f}); outputs in {out}")
    return 0 if res.completed else 1


def cmd_sweep(args) -> int:
    from .analysis import sweep_angles

    cfg = _load(args)
    try:
        thetas = [float(t) for t in args.thetas.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"--thetas: {exc}") from exc
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_angles(cfg, thetas, jobs=args.jobs, out_dir=out)
    write_polar(out / "polar.csv", rows)
    for r in rows:
        if r.error:
            print(f"theta={r.theta:.4f}: {r.error}", file=sys.stderr)
    print(f"{len(rows)} rows written to {out / 'polar.csv'}")
    return 0 if all(r.error is None for r in rows) else 1


def cmd_verify(args) -> int:
    from .verify import run_all

    checks = run_all()
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layerfrac", description="Phase-field fracture in layered elastic-plastic media")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for solver detail")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", help="output directory (overrides output.directory)")
        sp.add_argument("--seed", type=int, help="mesh seed (overrides mesh.seed)")

    r = sub.add_parser("run", help="single simulation")
    common(r)
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="one simulation per layer angle")
    common(s)
    s.add_argument("--thetas", required=True, help="comma-separated layer angles in radians")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)
    v = sub.add_parser("verify", help="run the built-in oracle checks")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
