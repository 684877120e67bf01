"""Command-line entry point: ``tune run | resume | report``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import report
from .config import load_config
from .errors import TuneError
from .loop import resume_trial, run_experiment


def _run(args):
    cfg = load_config(args.config)
    out = args.out or cfg.out_dir
    states = run_experiment(cfg, parallelism=args.parallelism, out_dir=out)
    for s in states:
        best = f"{s.incumbent[1]:.4f}" if s.incumbent else "n/a"
        status = "completed" if s.completed else f"aborted ({s.diagnosis})"
        print(f"{s.method.name:14s} {status:10s} best={best} evals={s.budget_used}")
    print(f"logs and manifest in {out}")
    return 0 if all(s.completed for s in states) else 1


def _resume(args):
    s = resume_trial(args.trial, out_path=args.out)
    best = f"{s.incumbent[1]:.4f}" if s.incumbent else "n/a"
    print(f"{s.method.name}: {s.budget_used}/{s.budget_total} evaluations, best={best}")
    return 0 if s.completed else 1


def _report(args):
    summaries = report.load_summaries(args.logs, batch=args.batch)
    for p in report.emit(summaries, args.out, include_embedded=args.include_embedded):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tune", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("--config", required=True, help="YAML or JSON experiment config")
    r.add_argument("--parallelism", type=int, default=None, help="concurrent trials (default: one per method)")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.set_defaults(func=_run)

    s = sub.add_parser("resume", help="replay a trial log and continue it to the budget")
    s.add_argument("--trial", required=True, help="trial-<name>.jsonl log")
    s.add_argument("--out", default=None, help="write the continued log here instead of in place")
    s.set_defaults(func=_resume)

    t = sub.add_parser("report", help="tables and charts from trial logs")
    t.add_argument("--logs", required=True, help="directory holding trial-*.jsonl")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--batch", type=int, default=10, help="steps per norm-difference batch")
    t.add_argument("--include-embedded", action="store_true", help="plot REMBO and random traces too")
    t.set_defaults(func=_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (TuneError, ValueError, OSError) as exc:
        print(f"tune: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
