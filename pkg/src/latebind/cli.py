"""Command-line entry point.

Subcommands:
  calibrate  microbenchmark the device profiles, fit cost lines, derive
             break-evens, and write a thresholds file
  run        execute a benchmark scenario under the requested modes and
             emit per-mode report files
  report     print a percentile comparison from existing samples.csv files
  gen        dump a generated table as CSV for debugging

Configuration precedence: command-line flags > --config JSON file >
built-in defaults.  Every command echoes its resolved configuration, and
run/calibrate write it next to their outputs.  Exit codes: 0 success,
1 validation/configuration error, 2 result-equivalence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

from . import bench
from .accel import calibrate_break_evens, fits_csv, measurements_csv
from .clock import SimulatedClock, WallClock
from .datagen import dump_table_csv, generate_table, load_table_spec
from .errors import ResultMismatchError, ValidationError
from .planner import AcceleratorCost, CostModel, LinearCost
from .policy import (MODES, Thresholds, calibrate, calibration_report,
                     dump_thresholds, load_thresholds)

ENV_OUT_DIR = "LATEBIND_OUT"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RESULT_MISMATCH = 2


@dataclass(frozen=True)
class RunConfig:
    scenario: str = bench.INPUT_SCALE_SHIFT
    seed: int = 1
    clock: str = "simulated"
    sigma: float = 0.05
    out: str = "out"
    queries: int = 200
    modes: tuple[str, ...] = MODES
    drift_fraction: float = 0.2
    miscal_factor: float = 2.0
    fact_rows: int = 0            # 0 = scenario default
    dim_rows: int = 0
    thresholds_file: str = ""
    # decision thresholds (defaults mirror policy.Thresholds)
    rho_join: float = 10.0
    mem_high: float = 0.8
    opt_distrust: float = 1.0
    offload_margin: float = 1.1
    reevaluate_band: float = 1.2
    # calibrate-only knobs
    cpu_per_item: float = 1.0
    accel_setup: float = 8000.0
    accel_per_item: float = 0.2
    repetitions: int = 5
    sizes: tuple[int, ...] = ()   # empty = grid centered on the model crossover


_CONFIG_FIELDS = set(RunConfig.__dataclass_fields__)


def _load_config(path: Optional[str]) -> RunConfig:
    cfg = RunConfig()
    if not path:
        return cfg
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    if "modes" in doc:
        doc["modes"] = tuple(doc["modes"])
    if "sizes" in doc:
        doc["sizes"] = tuple(int(s) for s in doc["sizes"])
    return replace(cfg, **doc)


def _apply_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates = {}
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    if "modes" in updates:
        updates["modes"] = tuple(updates["modes"].split(","))
    if "sizes" in updates:
        updates["sizes"] = tuple(int(s) for s in updates["sizes"].split(","))
    return replace(cfg, **updates)


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = _load_config(getattr(args, "config", None))
    if getattr(args, "out", None) is None and os.environ.get(ENV_OUT_DIR) and cfg.out == "out":
        cfg = replace(cfg, out=os.environ[ENV_OUT_DIR])
    return _apply_flags(cfg, args)


def _banner(cfg: RunConfig, command: str) -> str:
    doc = asdict(cfg)
    doc["command"] = command
    return "config: " + json.dumps(doc, sort_keys=True)


def _write_config(cfg: RunConfig, command: str, target: Path) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    doc = asdict(cfg)
    doc["command"] = command
    doc["modes"] = list(doc["modes"])
    doc["sizes"] = list(doc["sizes"])
    with target.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _clock(cfg: RunConfig) -> SimulatedClock | WallClock:
    if cfg.clock == "simulated":
        return SimulatedClock(sigma=cfg.sigma)
    if cfg.clock == "wall":
        return WallClock()
    raise ValidationError(f"unknown clock mode {cfg.clock!r}")


def _base_thresholds(cfg: RunConfig) -> Thresholds:
    return Thresholds(rho_join=cfg.rho_join, mem_high=cfg.mem_high,
                      opt_distrust=cfg.opt_distrust, offload_margin=cfg.offload_margin,
                      reevaluate_band=cfg.reevaluate_band)


def _calibration_model(cfg: RunConfig) -> CostModel:
    base = CostModel.default()
    cpu = {kind: (LinearCost(cfg.cpu_per_item, 0.0) if kind in base.accel else line)
           for kind, line in base.cpu.items()}
    accel = {kind: AcceleratorCost(setup=cfg.accel_setup,
                                   transfer=cfg.accel_per_item / 2.0,
                                   compute=cfg.accel_per_item / 2.0)
             for kind in base.accel}
    return CostModel(cpu=cpu, accel=accel, join=base.join)


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    print(_banner(cfg, "calibrate"))
    model = _calibration_model(cfg)
    clock = SimulatedClock(sigma=cfg.sigma)
    break_evens, measurements, fits = calibrate_break_evens(
        model, clock, cfg.seed, sizes=list(cfg.sizes) or None,
        repetitions=cfg.repetitions)
    thresholds = calibrate(break_evens, _base_thresholds(cfg))

    out_dir = Path(cfg.out) / "calibration"
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "thresholds.json").open("w", encoding="utf-8", newline="\n") as fh:
        dump_thresholds(thresholds, fh)
    with (out_dir / "measurements.csv").open("w", encoding="utf-8", newline="\n") as fh:
        measurements_csv(measurements, fh)
    with (out_dir / "fits.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fits_csv(fits, fh)
    with (out_dir / "break_evens.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("op_kind,n_star_estimated,n_star_observed,relative_error\n")
        for kind, be in sorted(break_evens.items()):
            if be is None:
                fh.write(f"{kind},,,\n")
            else:
                fh.write(f"{kind},{be.n_star_estimated!r},{be.n_star_observed!r},"
                         f"{be.relative_error!r}\n")
    _write_config(cfg, "calibrate", out_dir / "config.json")

    print(calibration_report(thresholds), end="")
    missing = [kind for kind, be in break_evens.items() if be is None]
    for kind, be in sorted(break_evens.items()):
        if be is not None:
            print(f"break-even[{kind}]: estimated {be.n_star_estimated:.2f}  "
                  f"observed {be.n_star_observed:.2f}  "
                  f"relative_error {be.relative_error:.4%}")
    print(f"wrote {out_dir}/thresholds.json")
    if missing:
        print(f"warning: no break-even for {', '.join(missing)}; "
              f"offloading disabled for these op kinds", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _build_scenario(cfg: RunConfig) -> bench.Scenario:
    common = dict(seed=cfg.seed, query_count=cfg.queries, modes=cfg.modes)
    if cfg.scenario == bench.INPUT_SCALE_SHIFT:
        extra = {}
        if cfg.fact_rows:
            extra["fact_rows"] = cfg.fact_rows
        if cfg.dim_rows:
            extra["dim_rows"] = cfg.dim_rows
        return bench.scenario_input_scale_shift(
            drift_fraction=cfg.drift_fraction, **common, **extra)
    if cfg.scenario == bench.STALE_STATS:
        extra = {}
        if cfg.fact_rows:
            extra["fact_rows"] = cfg.fact_rows
        if cfg.dim_rows:
            extra["dim_rows"] = cfg.dim_rows
        return bench.scenario_stale_stats(**common, **extra)
    if cfg.scenario == bench.BREAK_EVEN:
        extra = {}
        if cfg.dim_rows:
            extra["dim_rows"] = cfg.dim_rows
        return bench.scenario_break_even(miscal_factor=cfg.miscal_factor, **common, **extra)
    raise ValidationError(f"unknown scenario {cfg.scenario!r}")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    print(_banner(cfg, "run"))
    scenario = _build_scenario(cfg)
    clock = _clock(cfg)
    base = _base_thresholds(cfg)
    thresholds = None
    if cfg.thresholds_file:
        with open(cfg.thresholds_file, encoding="utf-8") as fh:
            loaded = load_thresholds(fh)
        thresholds = bench.scenario_thresholds(scenario, base)
        thresholds[bench.ORCHESTRATED] = loaded
    reports = bench.run_scenario(scenario, clock, thresholds=thresholds,
                                 base_thresholds=base)
    out_dir = Path(cfg.out)
    for report in reports.values():
        bench.report_emit(report, out_dir)
    _write_config(cfg, "run", out_dir / scenario.name / "config.json")
    print(bench.compare_reports(reports), end="")
    print(f"wrote {out_dir / scenario.name}")
    return EXIT_OK


def _read_samples(path: Path) -> tuple[str, list[float], int]:
    if not path.exists():
        raise FileNotFoundError(f"samples file not found: {path}")
    mode = ""
    latencies: list[float] = []
    failures = 0
    with path.open(encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            mode = row["mode"]
            if row["failed"] not in ("0", ""):
                failures += 1
            else:
                latencies.append(float(row["latency"]))
    if not latencies:
        raise ValidationError(f"no usable samples in {path}")
    return mode, sorted(latencies), failures


def cmd_report(args: argparse.Namespace) -> int:
    stats = {}
    for raw in args.paths:
        mode, samples, failures = _read_samples(Path(raw))
        stats[mode or raw] = (samples, failures)
    header = f"{'mode':<20}{'p50':>14}{'p95':>14}{'p99':>14}{'fail':>6}"
    print(header)
    for mode in sorted(stats):
        samples, failures = stats[mode]
        print(f"{mode:<20}{bench.percentile(samples, 50):>14.2f}"
              f"{bench.percentile(samples, 95):>14.2f}"
              f"{bench.percentile(samples, 99):>14.2f}{failures:>6d}")
    base = stats.get(bench.BASELINE)
    if base is not None:
        print("ratios vs baseline (baseline / mode):")
        for mode in sorted(stats):
            samples, _ = stats[mode]
            print(f"{mode:<20}"
                  f"p50 {bench.percentile(base[0], 50) / bench.percentile(samples, 50):>8.2f}  "
                  f"p95 {bench.percentile(base[0], 95) / bench.percentile(samples, 95):>8.2f}  "
                  f"p99 {bench.percentile(base[0], 99) / bench.percentile(samples, 99):>8.2f}")
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    spec = load_table_spec(args.spec)
    if args.rows is not None:
        spec = replace(spec, row_count=args.rows)
    table = generate_table(spec, args.seed if args.seed is not None else 1)
    if args.out_file:
        with open(args.out_file, "w", encoding="utf-8", newline="\n") as fh:
            dump_table_csv(table, fh)
        print(f"wrote {args.out_file}")
    else:
        dump_table_csv(table, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latebind",
        description="analytical engine and benchmark harness for runtime-late-bound "
                    "operator decisions")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, help="master seed (default 1)")
        p.add_argument("--sigma", type=float,
                       help="simulated-clock noise sigma (default 0.05)")
        p.add_argument("--out", help=f"output directory (default ${ENV_OUT_DIR} or ./out)")
        p.add_argument("--rho-join", dest="rho_join", type=float,
                       help="estimate-ratio trigger for join re-selection (default 10)")
        p.add_argument("--mem-high", dest="mem_high", type=float,
                       help="memory-pressure trigger (default 0.8)")
        p.add_argument("--opt-distrust", dest="opt_distrust", type=float,
                       help="planner-risk level enabling re-evaluation (default 1.0)")
        p.add_argument("--offload-margin", dest="offload_margin", type=float,
                       help="safety multiplier on the break-even size (default 1.1)")
        p.add_argument("--reevaluate-band", dest="reevaluate_band", type=float,
                       help="near-threshold band half-width (default 1.2)")

    cal = sub.add_parser("calibrate", help="fit device cost lines and derive break-evens")
    common(cal)
    cal.add_argument("--cpu-per-item", dest="cpu_per_item", type=float,
                     help="cpu cost per row for offloadable ops (default 1.0)")
    cal.add_argument("--accel-setup", dest="accel_setup", type=float,
                     help="accelerator up-front cost (default 8000)")
    cal.add_argument("--accel-per-item", dest="accel_per_item", type=float,
                     help="accelerator transfer+compute cost per row (default 0.2)")
    cal.add_argument("--repetitions", type=int, help="measurements per size (default 5)")
    cal.add_argument("--sizes", help="comma-separated measurement sizes")
    cal.set_defaults(func=cmd_calibrate)

    run = sub.add_parser("run", help="run a benchmark scenario")
    common(run)
    run.add_argument("--scenario", choices=bench.SCENARIO_NAMES,
                     help="scenario name (default input_scale_shift)")
    run.add_argument("--clock", choices=("simulated", "wall"),
                     help="clock mode (default simulated)")
    run.add_argument("--queries", type=int, help="queries per scenario (default 200)")
    run.add_argument("--modes", help="comma-separated execution modes (default all)")
    run.add_argument("--drift-fraction", dest="drift_fraction", type=float,
                     help="drifted query fraction for input_scale_shift "
                          "(default 0.2; 0 = zero-drift control)")
    run.add_argument("--miscal-factor", dest="miscal_factor", type=float,
                     help="planner device-model error factor for break_even (default 2.0)")
    run.add_argument("--fact-rows", dest="fact_rows", type=int, help="fact table rows")
    run.add_argument("--dim-rows", dest="dim_rows", type=int, help="dim table rows")
    run.add_argument("--thresholds", dest="thresholds_file",
                     help="thresholds JSON for the orchestrated mode "
                          "(default: calibrate internally, noise-free)")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="compare existing samples.csv files")
    rep.add_argument("paths", nargs="+", help="samples.csv paths, one per mode")
    rep.set_defaults(func=cmd_report)

    gen = sub.add_parser("gen", help="generate a table and dump it as CSV")
    gen.add_argument("--spec", required=True, help="table spec JSON file")
    gen.add_argument("--rows", type=int, help="row count override")
    gen.add_argument("--seed", type=int, help="generation seed (default 1)")
    gen.add_argument("--out-file", dest="out_file", help="CSV path (default stdout)")
    gen.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResultMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESULT_MISMATCH
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
