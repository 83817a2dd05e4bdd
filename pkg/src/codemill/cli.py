"""Command-line orchestrator: one subcommand per pipeline stage.

Stages read their predecessor's outputs from the run directory and are
individually resumable. ``pipeline`` chains every stage for small end-to-end
runs. Credentials are environment-only; there is no flag for them.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .evaluate import evaluate_pass_at_1, load_samples, load_tests
from .pipeline import (
    StageError,
    make_context,
    stage_augment,
    stage_decontaminate,
    stage_export,
    stage_gen_inputs,
    stage_ingest,
    stage_label,
    stage_postprocess,
    stage_synthesize,
    stage_verify,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codemill",
        description="Verified competitive-programming dataset pipeline.",
    )
    parser.add_argument("--config", metavar="PATH", help="YAML config file")
    parser.add_argument("--run-dir", metavar="PATH", default="run", help="run directory root")
    parser.add_argument("--workers", type=int, metavar="N", help="sandbox worker pool size")
    parser.add_argument("--seed", type=int, metavar="N", help="master RNG seed")
    parser.add_argument(
        "--replay", metavar="DIR", help="replay LLM completions from this cache directory"
    )
    parser.add_argument(
        "--keep-failed", action="store_true", help="keep temp dirs of failed executions"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read, dedupe, and filter the problem corpus")
    p.add_argument("--problems", required=True, metavar="PATH", help="problem JSONL file")

    sub.add_parser("synthesize", help="synthesize new problems from seeds")
    sub.add_parser("gen-inputs", help="generate scale-controlled test inputs")
    sub.add_parser("label", help="label seed-problem outputs with their oracles")
    sub.add_parser(
        "verify",
        help="mutual verification for synthetic problems, then the seed augmentation gate",
    )
    sub.add_parser("postprocess", help="apply thresholds and pick fastest solutions")

    p = sub.add_parser("decontaminate", help="drop problems overlapping benchmarks")
    p.add_argument("--benchmarks", metavar="PATH", help="benchmark JSONL of {id, text}")

    sub.add_parser("export", help="write the final dataset JSONL")

    p = sub.add_parser("eval", help="pass@1 of sampled solutions over labeled tests")
    p.add_argument("--solutions", required=True, metavar="PATH")
    p.add_argument("--tests", required=True, metavar="PATH")
    p.add_argument("-k", type=int, default=1, help="samples per problem to grade")
    p.add_argument("--out", metavar="PATH", help="write the report JSON here")

    p = sub.add_parser("pipeline", help="run every stage in order (toy end-to-end mode)")
    p.add_argument("--problems", required=True, metavar="PATH")
    p.add_argument("--benchmarks", metavar="PATH")

    return parser


def _configure(args) -> tuple:
    config = load_config(args.config)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if overrides:
        config = config.with_overrides(**overrides)
    ctx = make_context(args.run_dir, config, replay_dir=args.replay, keep_failed=args.keep_failed)
    return config, ctx


def _run_stage(name: str, fn, *fn_args) -> int:
    summary = fn(*fn_args)
    line = ", ".join(f"{k}={v}" for k, v in summary.items() if k != "stage")
    print(f"[{name}] {line}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, ctx = _configure(args)
        if args.command == "ingest":
            return _run_stage("ingest", stage_ingest, ctx, args.problems)
        if args.command == "synthesize":
            return _run_stage("synthesize", stage_synthesize, ctx)
        if args.command == "gen-inputs":
            return _run_stage("gen-inputs", stage_gen_inputs, ctx)
        if args.command == "label":
            return _run_stage("label", stage_label, ctx)
        if args.command == "verify":
            code = _run_stage("verify", stage_verify, ctx)
            return code or _run_stage("augment", stage_augment, ctx)
        if args.command == "postprocess":
            return _run_stage("postprocess", stage_postprocess, ctx)
        if args.command == "decontaminate":
            return _run_stage("decontaminate", stage_decontaminate, ctx, args.benchmarks)
        if args.command == "export":
            return _run_stage("export", stage_export, ctx)
        if args.command == "eval":
            report = evaluate_pass_at_1(
                load_samples(args.solutions),
                load_tests(args.tests),
                args.k,
                ctx.need_sandbox(),
                config.limits,
                runtime_tag=config.solution_runtime_tag,
            )
            text = json.dumps(report, indent=2, sort_keys=True)
            if args.out:
                Path(args.out).write_text(text + "\n", encoding="utf-8")
            print(text)
            return 0
        if args.command == "pipeline":
            _run_stage("ingest", stage_ingest, ctx, args.problems)
            _run_stage("synthesize", stage_synthesize, ctx)
            _run_stage("gen-inputs", stage_gen_inputs, ctx)
            _run_stage("label", stage_label, ctx)
            _run_stage("verify", stage_verify, ctx)
            _run_stage("augment", stage_augment, ctx)
            _run_stage("postprocess", stage_postprocess, ctx)
            _run_stage("decontaminate", stage_decontaminate, ctx, args.benchmarks)
            _run_stage("export", stage_export, ctx)
            return 0
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced with type for actionability
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
