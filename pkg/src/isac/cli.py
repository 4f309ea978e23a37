"""Scenario-runner command line.

Verbs:
  run <scenario-id|config.json>   execute one scenario, write its log
  suite                           execute all nine benchmark scenarios
  export-scenario <scenario-id>   print (or save) a scenario config file
  validate <config.json>          check a config without running it

Exit codes: 0 success, 1 configuration error, 2 simulation divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .configio import dumps_config, parse_config, save_config, validate_scenario
from .errors import ConfigError, DivergenceError, IsacError
from .runlog import write_runlog
from .scenarios import SCENARIO_IDS, ScenarioConfig, build_scenario


def _resolve_scenario(target: str, dt_override: float | None) -> ScenarioConfig:
    if target in SCENARIO_IDS:
        config = build_scenario(target)
    elif os.path.exists(target):
        config = parse_config(target)
    else:
        raise ConfigError(
            f"{target!r} is neither a known scenario id {SCENARIO_IDS} "
            f"nor an existing config file")
    if dt_override is not None:
        config = replace(config, dt_sec=float(dt_override))
        validate_scenario(config)
    return config


def _run_one(target: str, out_dir: str, dt_override: float | None) -> dict:
    # module-level so the suite can dispatch it to worker processes
    from .controller import run as run_scenario
    config = _resolve_scenario(target, dt_override)
    log = run_scenario(config)
    run_dir = os.path.join(out_dir, config.scenario_id)
    write_runlog(log, run_dir)
    return {"scenario_id": config.scenario_id, "run_dir": run_dir,
            "summary": log.summary}


def _cmd_run(args) -> int:
    result = _run_one(args.target, args.out_dir, args.dt_override)
    s = result["summary"]
    print(f"{result['scenario_id']}: final_err={s['final_tracking_error']:.4g} "
          f"rms_err={s['rms_tracking_error']:.4g} "
          f"accepted={s['steps_accepted']}/{s['steps_total']} "
          f"wall/sim={s['wall_sim_ratio']:.3f} -> {result['run_dir']}")
    return 0


def _cmd_suite(args) -> int:
    results = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_run_one, sid, args.out_dir, args.dt_override)
                       for sid in SCENARIO_IDS]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(sid, args.out_dir, args.dt_override)
                   for sid in SCENARIO_IDS]
    suite = {}
    for r in results:
        s = r["summary"]
        suite[r["scenario_id"]] = s
        print(f"{r['scenario_id']}: final_err={s['final_tracking_error']:.4g} "
              f"wall/sim={s['wall_sim_ratio']:.3f}")
    path = os.path.join(args.out_dir, "suite_summary.json")
    os.makedirs(args.out_dir, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(suite, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"suite summary -> {path}")
    return 0


def _cmd_export(args) -> int:
    config = build_scenario(args.scenario_id)
    if args.out:
        save_config(config, args.out)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(dumps_config(config))
    return 0


def _cmd_validate(args) -> int:
    config = parse_config(args.path)
    print(f"{args.path}: valid ({config.scenario_id})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isac", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out-dir", default="runs",
                       help="directory for run logs (default: ./runs)")
        p.add_argument("--dt-override", type=float, default=None,
                       help="override the scenario integration step")
        p.add_argument("--seedless", action="store_true",
                       help="no-op guard: runs are always deterministic")

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("target", help="scenario id or config file path")
    add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_suite = sub.add_parser("suite", help="run all nine benchmark scenarios")
    add_common(p_suite)
    p_suite.add_argument("--jobs", type=int, default=1,
                         help="parallel scenario jobs (default: 1)")
    p_suite.set_defaults(func=_cmd_suite)

    p_exp = sub.add_parser("export-scenario",
                           help="write a scenario's config file")
    p_exp.add_argument("scenario_id", choices=SCENARIO_IDS)
    p_exp.add_argument("--out", default=None, help="output path (default: stdout)")
    p_exp.set_defaults(func=_cmd_export)

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("path")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return 2
    except IsacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
