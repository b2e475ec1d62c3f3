"""``zoomtower`` command line.

Every subcommand reads an experiment config (``--config``, default: the
shipped doubling pipeline), runs the stages it depends on and writes JSON
reports plus ``summary.json`` into ``--out``.  The summary is also printed
to stdout.  Exit status is 0 iff every certificate passed; otherwise it is
the code of the first failing stage (see ``EXIT_CODES``), 2 for an invalid
config and 3 for a stage-dependency error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import STAGES, ConfigError, DependencyError, ExperimentConfig, check_stages, load_shipped
from .pipeline import EXIT_CODES, Run, diag, dump_json, jsonable, run_stages

# subcommand -> (stages it needs, optional extra task)
COMMANDS = {
    "map-info": (["map"], None),
    "periodic": (["map", "periodic"], None),
    "preorbit-density": (["map", "periodic"], ("preorbit-density", Run.task_preorbit_density)),
    "verify-example": (["map"], ("verify-example", Run.task_verify_example)),
    "zooming-scan": (["map"], ("zooming-scan", Run.task_zooming_scan)),
    "build-induced": (["map", "periodic", "source-zooming", "induced"], None),
    "measure-sample": (["map", "periodic", "source-zooming", "induced", "measures"], None),
    "lyapunov": (list(STAGES[:-1]), ("stats", lambda run, r: run.stage_stats(r, ("lyapunov",)))),
    "correlations": (list(STAGES[:-1]), ("stats", lambda run, r: run.stage_stats(r, ("correlations", "tail")))),
    "pipeline": (None, None),
}


def u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="zoomtower", description="Zooming sets, induced Markov maps and tower measures on tori.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON); default: shipped doubling-pipeline.json")
    common.add_argument("--seed", type=u64, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory; default: the config's output_dir")
    common.add_argument("--threads", type=positive, default=1, help="worker threads for sampling (results do not depend on it)")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="csv adds delimited tables next to the JSON reports")
    common.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else load_shipped()
        stages, extra = COMMANDS[args.command]
        stages = cfg.stages if stages is None else check_stages(stages)
    except DependencyError as e:
        diag("config", f"dependency error: {e}")
        return 3
    except (ConfigError, OSError) as e:
        diag("config", f"invalid config: {e}")
        return 2
    out = args.out if args.out is not None else Path(cfg.output_dir)
    run = Run(cfg, out, seed=args.seed, fmt=args.format, figures=not args.no_figures, threads=args.threads)
    summary = run_stages(run, stages, extra)
    summary["command"] = args.command
    dump_json(summary, out / "summary.json")
    print(json.dumps(jsonable({k: summary[k] for k in ("command", "passed", "exit_code", "failed_stage")}), sort_keys=True))
    return summary["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
