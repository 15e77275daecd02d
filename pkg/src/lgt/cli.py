"""Command-line entry point: run, report, fuzz-parsers, validate-config."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .backend import BackendConfig, BackendConfigError, make_backend
from .datasets import DatasetError
from .experiment import (
    METHODS,
    ExperimentConfig,
    ExperimentConfigError,
    load_experiment_config,
    load_records,
    run_experiment,
)
from .fuzz import fuzz_parsers
from .report import ReportError, emit_report

log = logging.getLogger("lgt")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgt", description="Agent-guided neural network configuration tuning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", required=True, type=Path, help="experiment JSON file")
    run.add_argument("--method", action="append", choices=METHODS,
                     help="restrict to this method (repeatable)")
    run.add_argument("--seed", action="append", type=int, help="restrict to this seed (repeatable)")
    run.add_argument("--backend", choices=("scripted", "http"))
    run.add_argument("--endpoint", help="chat-completions base URL for the http backend")
    run.add_argument("--model", help="model name sent to the http backend")
    run.add_argument("--out", type=Path, help="output directory (overrides the config)")

    rep = sub.add_parser("report", help="summarize run records")
    rep.add_argument("--in", dest="in_dir", required=True, type=Path)
    rep.add_argument("--out", required=True, type=Path)

    fz = sub.add_parser("fuzz-parsers", help="feed random text to every response parser")
    fz.add_argument("--iterations", type=int, default=10_000)
    fz.add_argument("--seed", type=int, default=0)

    val = sub.add_parser("validate-config", help="check an experiment file without running it")
    val.add_argument("--config", required=True, type=Path)
    return p


def _override(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.method:
        changes["methods"] = tuple(dict.fromkeys(args.method))
    if args.seed:
        changes["seeds"] = tuple(dict.fromkeys(args.seed))
    backend = {}
    if args.backend:
        backend["kind"] = args.backend
    if args.endpoint:
        backend["endpoint_url"] = args.endpoint
    if args.model:
        backend["model_name"] = args.model
    if backend:
        changes["backend"] = BackendConfig.from_dict({**cfg.backend.to_dict(), **backend})
    if args.out:
        changes["output_dir"] = str(args.out)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _override(load_experiment_config(args.config), args)
    backend = make_backend(cfg.backend) if "lgt" in cfg.methods else None
    records = run_experiment(cfg, base_dir=args.config.parent, backend=backend)
    failed = [r for r in records if not r.ok]
    print(f"{len(records) - len(failed)}/{len(records)} runs succeeded; records in {cfg.output_dir}")
    for r in failed:
        print(f"  FAILED {r.method} seed {r.seed}: {r.error}", file=sys.stderr)
    return 0 if not failed else 1


def cmd_report(args) -> int:
    paths = emit_report(load_records(args.in_dir), args.out)
    print(paths["summary_txt"].read_text(encoding="utf-8"), end="")
    return 0


def cmd_fuzz(args) -> int:
    logging.getLogger("lgt.agents").setLevel(logging.ERROR)
    rep = fuzz_parsers(args.iterations, args.seed)
    print(f"{rep.iterations} responses: {rep.aborts} aborts, {rep.invalid} invalid outputs")
    for f in rep.failures[:10]:
        print(f"  {f}", file=sys.stderr)
    return 0 if rep.ok else 1


def cmd_validate(args) -> int:
    cfg = load_experiment_config(args.config)
    if cfg.dataset.source == "csv_path":
        path = Path(cfg.dataset.path)
        path = path if path.is_absolute() else args.config.parent / path
        if not path.is_file():
            raise DatasetError(f"dataset file not found: {path}")
    print(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    return 0


COMMANDS = {"run": cmd_run, "report": cmd_report, "fuzz-parsers": cmd_fuzz, "validate-config": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ExperimentConfigError, BackendConfigError, DatasetError, ReportError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
