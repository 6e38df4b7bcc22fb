"""Command-line entry point.

Stage subcommands (ingest, filter, dedup, audit, apply) run the pipeline up
to that stage, reusing cached stage outputs.  `serve` hosts the triage
review service, `decide` commits one triage decision from the terminal,
`report`/`merge`/`format` are standalone tools over their file formats.

Exit codes: 0 success; 1 configuration or input error; 2 data/validation
error (e.g. decision conflict); 3 apply blocked on pending triage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import adapterlab, report as report_mod
from .corpus import ConfigError, format_alpaca, load_records
from .decontam import (
    AlreadyDecidedError,
    DecisionLog,
    PendingFlagsError,
    TriageDecision,
    UnknownFlagError,
    replay,
    utc_now,
)
from .pipeline import STAGE_DIRS, STAGE_ORDER, PipelineConfig, load_flags, run_pipeline
from .service import ServiceSetupError, serve

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_PENDING_TRIAGE = 3


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    if not args.config:
        raise ConfigError("this command needs --config <path>")
    config = PipelineConfig.load(args.config)
    if args.out:
        config.out_dir = args.out
    return config


def _print_stage_summary(manifest: dict) -> None:
    stages = manifest.get("stages", {})
    for stage in STAGE_ORDER:
        meta = stages.get(stage)
        if meta is None:
            continue
        tag = "cached" if meta.get("cached") else "ran"
        print(f"{stage:>8}: {meta['in_count']} -> {meta['out_count']} records ({tag})")
    print(f"status: {manifest.get('status')}")


def _cmd_stage(args: argparse.Namespace, until: str) -> int:
    config = _load_config(args)
    manifest = run_pipeline(config, until=until)
    _print_stage_summary(manifest)
    if manifest.get("status") == "awaiting-triage":
        pending = manifest.get("pending_flags", [])
        print(f"{len(pending)} flag(s) await triage: {', '.join(pending)}")
        return EXIT_PENDING_TRIAGE
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    config = _load_config(args)
    serve(config)
    return EXIT_OK


def _cmd_decide(args: argparse.Namespace) -> int:
    config = _load_config(args)
    flags_path = Path(config.out_dir) / STAGE_DIRS["audit"] / "flags.jsonl"
    if not flags_path.exists():
        print(f"no audit flags at {flags_path}; run `platy audit` first", file=sys.stderr)
        return EXIT_CONFIG
    flags = load_flags(flags_path)
    log = DecisionLog(config.decisions_log_path())
    state = replay(flags, log)
    decision = TriageDecision(
        flag_id=args.flag,
        category=args.category,
        reviewer=args.reviewer,
        timestamp=utc_now(),
        note=args.note,
    )
    state.check(decision)
    log.append(decision)
    state.apply(decision)
    progress = state.progress()
    print(f"decision recorded: {args.flag} -> {args.category}")
    print(f"pending: {progress['pending']}, decided: {progress['decided']}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    scores = report_mod.load_scores(args.scores)
    with open(args.tasks, "r", encoding="utf-8") as fh:
        tasks = [line.strip() for line in fh if line.strip()]
    for model in (args.base, args.merged):
        if model not in scores:
            print(f"no scores for model {model!r} in {args.scores}", file=sys.stderr)
            return EXIT_DATA
    base, merged = scores[args.base], scores[args.merged]
    table = report_mod.delta_table(tasks, [(args.merged, base, merged)])
    averages = report_mod.averages_table([base, merged], tasks)
    print(report_mod.render(averages, args.format), end="")
    print()
    print(report_mod.render(table, args.format), end="")
    return EXIT_OK


def _cmd_merge(args: argparse.Namespace) -> int:
    base = adapterlab.load_weights(args.base)
    adapters = adapterlab.load_adapters(args.adapters)
    merged = adapterlab.merge_recipe({"base": base}, adapters, "base")
    adapterlab.save_weights(args.output, merged)
    targeted = {a.target for a in adapters}
    for name in merged:
        mark = "merged" if name in targeted else "copied"
        print(f"{name}: {mark}")
    print(f"wrote {len(merged)} module(s) -> {args.output}")
    return EXIT_OK


def _cmd_format(args: argparse.Namespace) -> int:
    records = load_records(args.records)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        text = format_alpaca(rec)
        if args.with_output:
            text += rec.output + "\n"
        with open(out_dir / f"{rec.id}.txt", "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    print(f"wrote {len(records)} prompt file(s) -> {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platy",
        description="Dataset curation pipeline: filter, dedup, contamination triage, "
                    "adapter merging, and benchmark delta reports.",
    )
    parser.add_argument("--config", help="pipeline config file (JSON)")
    parser.add_argument("--out", help="override the configured output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    for stage, text in [
        ("ingest", "ingest source datasets into canonical records"),
        ("filter", "apply the keyword filter"),
        ("dedup", "remove exact and near duplicates"),
        ("audit", "flag train/benchmark contamination"),
        ("apply", "apply the removal policy and emit cleaned artifacts"),
    ]:
        sub.add_parser(stage, help=text)

    sub.add_parser("serve", help="host the triage review service (PLATY_BIND overrides bind)")

    p_decide = sub.add_parser("decide", help="commit one triage decision")
    p_decide.add_argument("--flag", required=True, help="flag id")
    p_decide.add_argument("--category", required=True,
                          choices=["duplicate", "gray-area", "similar-but-different"])
    p_decide.add_argument("--reviewer", required=True)
    p_decide.add_argument("--note")

    p_report = sub.add_parser("report", help="benchmark averages and delta table")
    p_report.add_argument("--scores", required=True, help="line-delimited {model, task, score}")
    p_report.add_argument("--base", required=True, help="base model name")
    p_report.add_argument("--merged", required=True, help="merged model name")
    p_report.add_argument("--tasks", required=True, help="task manifest, one task per line")
    p_report.add_argument("--format", default="aligned-text",
                          choices=list(report_mod.RENDER_FORMATS))

    p_merge = sub.add_parser("merge", help="merge an adapter container onto base weights")
    p_merge.add_argument("--base", required=True, help="base weight container")
    p_merge.add_argument("--adapters", required=True, help="adapter container")
    p_merge.add_argument("--output", required=True, help="merged weight container")

    p_format = sub.add_parser("format", help="render records as prompt text files")
    p_format.add_argument("--records", required=True, help="records file (JSONL)")
    p_format.add_argument("--out-dir", required=True, help="directory for per-record .txt files")
    p_format.add_argument("--with-output", action="store_true",
                          help="append the answer text after the response marker")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("ingest", "filter", "dedup", "audit", "apply"):
            return _cmd_stage(args, args.command)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "decide":
            return _cmd_decide(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "merge":
            return _cmd_merge(args)
        if args.command == "format":
            return _cmd_format(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, ServiceSetupError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PendingFlagsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PENDING_TRIAGE
    except (UnknownFlagError, AlreadyDecidedError, adapterlab.ContainerFormatError,
            adapterlab.ShapeError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
