"""Stage-oriented pipeline over a run directory.

Stages are numbered 01-ingest through 09-export. Each one reads its
predecessor's manifests, keeps a per-item completion marker under
``<stage>/done/`` so interrupted runs resume where they stopped, and
rebuilds its aggregate outputs from the markers in sorted order, which makes
re-runs byte-identical. Iteration order is always sorted and generator seeds
derive from the master seed, so with a replay LLM backend the exported
dataset is a pure function of (corpus, cache, config, seed); measured CPU
times do appear in intermediate markers but never in the export.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

from . import corpus, inputgen, postproc, synth, verify
from .config import PipelineConfig
from .corpus import Problem, ProblemKind, Solution, SolutionOrigin
from .llm import ChatRequest, Gateway, LiveBackend, ReplayBackend, extract_code_blocks
from .sandbox import ResourceLimits, RunnerRecipe, SandboxExecutor, default_recipes
from .templates import fill, load_template

STAGE_DIRS = {
    "ingest": "01-ingest",
    "synthesize": "02-synthesize",
    "gen-inputs": "03-gen-inputs",
    "label": "04-label",
    "verify": "05-verify",
    "augment": "06-augment",
    "postprocess": "07-postprocess",
    "decontaminate": "08-decontaminate",
    "export": "09-export",
}

STAGE_ORDER = list(STAGE_DIRS)


class StageError(Exception):
    pass


def write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path: Path) -> list[dict]:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


class RunDirectory:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def stage_dir(self, stage: str) -> Path:
        path = self.root / STAGE_DIRS[stage]
        path.mkdir(parents=True, exist_ok=True)
        return path

    def manifest_path(self, stage: str) -> Path:
        return self.root / STAGE_DIRS[stage] / "manifest.json"

    def stage_complete(self, stage: str) -> bool:
        return self.manifest_path(stage).exists()

    def require_stage(self, stage: str, needed_by: str) -> Path:
        if not self.stage_complete(stage):
            raise StageError(
                f"stage '{needed_by}' needs the output of stage '{stage}'; "
                f"run 'codemill {stage}' first"
            )
        return self.root / STAGE_DIRS[stage]

    def finish_stage(self, stage: str, summary: dict) -> dict:
        payload = {"stage": stage, **summary}
        path = self.manifest_path(stage)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        tmp.replace(path)
        return payload


class ItemMarkers:
    """Per-item completion markers holding each item's output payload."""

    def __init__(self, stage_dir: Path):
        self.directory = stage_dir / "done"
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, item_id: str) -> Path:
        # ids come from user data; anything path-hostile gets hashed
        if not re.fullmatch(r"[A-Za-z0-9._-]+", item_id):
            item_id = "h-" + hashlib.sha256(item_id.encode("utf-8")).hexdigest()[:32]
        return self.directory / f"{item_id}.json"

    def get(self, item_id: str) -> Optional[dict]:
        path = self._path(item_id)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, item_id: str, payload: dict) -> dict:
        path = self._path(item_id)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)
        return payload

    def run_items(
        self, item_ids: list[str], compute: Callable[[str], dict]
    ) -> dict[str, dict]:
        out = {}
        for item_id in item_ids:
            cached = self.get(item_id)
            out[item_id] = cached if cached is not None else self.put(item_id, compute(item_id))
        return out


@dataclass
class PipelineContext:
    run: RunDirectory
    config: PipelineConfig
    gateway: Optional[Gateway] = None
    sandbox: Optional[SandboxExecutor] = None

    def need_gateway(self) -> Gateway:
        if self.gateway is None:
            raise StageError("this stage needs an LLM backend; none is configured")
        return self.gateway

    def need_sandbox(self) -> SandboxExecutor:
        if self.sandbox is None:
            raise StageError("this stage needs the sandbox executor")
        return self.sandbox


def make_gateway(config: PipelineConfig, run_root: Path, replay_dir: Optional[str] = None) -> Gateway:
    if replay_dir:
        return Gateway(ReplayBackend(), replay_dir)
    if config.backend.type == "replay":
        return Gateway(ReplayBackend(), run_root / "llm-cache")
    if config.backend.type == "live":
        endpoint = config.backend.endpoint_url or os.environ.get("CODEMILL_ENDPOINT", "")
        if not endpoint:
            raise StageError(
                "live backend needs an endpoint URL (config backend.endpoint_url "
                "or $CODEMILL_ENDPOINT)"
            )
        backend = LiveBackend(
            endpoint_url=endpoint,
            model=config.backend.model,
            api_key_env=config.backend.api_key_env,
        )
        return Gateway(backend, run_root / "llm-cache")
    raise StageError(f"unknown backend type {config.backend.type!r}")


def make_sandbox(config: PipelineConfig, keep_failed: bool = False) -> SandboxExecutor:
    recipes = default_recipes()
    for tag, spec in (config.recipes or {}).items():
        recipes[tag] = RunnerRecipe(
            tag=tag, argv=list(spec["argv"]), extension=spec.get("extension", ".py")
        )
    return SandboxExecutor(recipes=recipes, workers=config.workers, keep_failed=keep_failed)


def make_context(
    run_dir: str | Path,
    config: PipelineConfig,
    replay_dir: Optional[str] = None,
    keep_failed: bool = False,
) -> PipelineContext:
    run = RunDirectory(run_dir)
    return PipelineContext(
        run=run,
        config=config,
        gateway=make_gateway(config, run.root, replay_dir),
        sandbox=make_sandbox(config, keep_failed),
    )


def _load_problems(path: Path) -> list[Problem]:
    return [corpus.problem_from_record(row) for row in read_jsonl(path)]


def _problems_by_id(ctx: PipelineContext, needed_by: str = "downstream") -> dict[str, Problem]:
    out: dict[str, Problem] = {}
    ingest_dir = ctx.run.require_stage("ingest", needed_by)
    for problem in _load_problems(ingest_dir / "problems.jsonl"):
        out[problem.id] = problem
    synth_manifest = ctx.run.root / STAGE_DIRS["synthesize"] / "problems.jsonl"
    if synth_manifest.exists():
        for problem in _load_problems(synth_manifest):
            out[problem.id] = problem
    return out


# -- 01 ingest ----------------------------------------------------------------


def stage_ingest(ctx: PipelineContext, problems_path: str | Path) -> dict:
    stage_dir = ctx.run.stage_dir("ingest")
    result = corpus.ingest_problems(problems_path)
    deduped = corpus.dedupe(result.problems)
    kept = corpus.filter_missing_oracle(deduped.kept)

    write_jsonl(stage_dir / "problems.jsonl", [corpus.problem_to_record(p) for p in kept])
    write_jsonl(
        stage_dir / "rejects.jsonl",
        [
            {"line": r.line_number, "reason": r.reason, "record_id": r.record_id}
            for r in result.rejects
        ],
    )
    write_jsonl(
        stage_dir / "duplicates.jsonl",
        [{"id": pid, "duplicate_of": original} for pid, original in deduped.dropped],
    )
    missing = [p.id for p in deduped.kept if p not in kept]
    write_jsonl(stage_dir / "missing_oracle.jsonl", [{"id": pid} for pid in missing])
    stats = corpus.corpus_stats(kept)
    (stage_dir / "stats.json").write_text(
        json.dumps({"rows": stats.rows, "total": stats.total}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return ctx.run.finish_stage(
        "ingest",
        {
            "ingested": len(result.problems),
            "rejects": len(result.rejects),
            "duplicates": len(deduped.dropped),
            "missing_oracle": len(missing),
            "problems": len(kept),
        },
    )


# -- 02 synthesize ------------------------------------------------------------


def stage_synthesize(ctx: PipelineContext) -> dict:
    ingest_dir = ctx.run.require_stage("ingest", "synthesize")
    stage_dir = ctx.run.stage_dir("synthesize")
    gateway = ctx.need_gateway()
    config = ctx.config
    seeds = [p for p in _load_problems(ingest_dir / "problems.jsonl") if p.oracle_solutions]
    seeds.sort(key=lambda p: p.id)
    markers = ItemMarkers(stage_dir)

    def compute(seed_id: str) -> dict:
        seed = seed_by_id[seed_id]
        prompt = synth.build_synthesis_prompt(seed, seed.oracle_solutions[0])
        response = gateway.complete(
            ChatRequest(
                prompt=prompt,
                temperature=config.temperature,
                max_tokens=config.max_tokens,
                n_samples=config.synth_samples_per_seed,
                request_tag="synthesize",
            )
        )
        problems, examples, failures = [], [], []
        for sample_index, completion in enumerate(response.completions):
            try:
                parsed = synth.parse_synthesis_response(completion, seed_id=seed.id, strict=True)
            except synth.SynthesisParseError as exc:
                failures.append({"seed_id": seed.id, "sample": sample_index, "error": str(exc)})
                continue
            problem = synth.to_problem(parsed, seed, sample_index)
            problems.append(corpus.problem_to_record(problem))
            examples.append(
                {"problem_id": problem.id, "example_cases": parsed.example_cases}
            )
        return {"problems": problems, "examples": examples, "failures": failures}

    seed_by_id = {p.id: p for p in seeds}
    results = markers.run_items([p.id for p in seeds], compute)

    all_problems, all_examples, all_failures = [], [], []
    for seed_id in sorted(results):
        payload = results[seed_id]
        all_problems += payload["problems"]
        all_examples += payload["examples"]
        all_failures += payload["failures"]
    all_problems.sort(key=lambda r: r["id"])
    all_examples.sort(key=lambda r: r["problem_id"])
    write_jsonl(stage_dir / "problems.jsonl", all_problems)
    write_jsonl(stage_dir / "examples.jsonl", all_examples)
    write_jsonl(stage_dir / "failures.jsonl", all_failures)
    return ctx.run.finish_stage(
        "synthesize",
        {"seeds": len(seeds), "synthesized": len(all_problems), "failures": len(all_failures)},
    )


# -- 03 gen-inputs -------------------------------------------------------------

UTILITY_RETRIES = 3


def _gen_limits(config: PipelineConfig) -> ResourceLimits:
    # Serializing 1e5-scale inputs takes longer than judging them.
    return replace(
        config.limits,
        wall_timeout_seconds=max(30.0, config.limits.wall_timeout_seconds),
    )


def stage_gen_inputs(ctx: PipelineContext) -> dict:
    ctx.run.require_stage("ingest", "gen-inputs")
    stage_dir = ctx.run.stage_dir("gen-inputs")
    gateway = ctx.need_gateway()
    sandbox = ctx.need_sandbox()
    config = ctx.config
    problems = sorted(_problems_by_id(ctx, "gen-inputs").values(), key=lambda p: p.id)
    markers = ItemMarkers(stage_dir)
    limits = _gen_limits(config)
    problem_by_id = {p.id: p for p in problems}

    def compute(problem_id: str) -> dict:
        problem = problem_by_id[problem_id]
        exponent = (
            inputgen.infer_exponent_limit(problem.constraints_text or problem.input_format)
            or config.e_default
        )
        base_prompt = inputgen.build_utilgen_prompt(problem)
        last_error = ""
        for attempt in range(UTILITY_RETRIES):
            prompt = base_prompt
            if attempt:
                prompt += (
                    f"\n\nThe previous attempt failed: {last_error}\n"
                    "Return corrected generate_test_input and validate_test_input functions."
                )
            response = gateway.complete(
                ChatRequest(
                    prompt=prompt,
                    temperature=config.temperature,
                    max_tokens=config.max_tokens,
                    n_samples=1,
                    request_tag="gen-inputs",
                )
            )
            try:
                pair = inputgen.parse_utility_pair(response.completions[0], exponent)
            except inputgen.UtilityParseError as exc:
                last_error = str(exc)
                continue
            grid = inputgen.scale_grid(
                len(pair.param_names), exponent, config.grid_cap, config.rng_seed
            )
            per_point = max(
                config.inputs_per_point, math.ceil(config.min_inputs / len(grid))
            )
            try:
                report = inputgen.generate_inputs(
                    problem, pair, grid, sandbox,
                    limits=limits, per_point=per_point, rng_seed=config.rng_seed,
                )
            except inputgen.UtilityPairDefectError as exc:
                last_error = str(exc)
                continue
            rows = inputgen.save_inputs(stage_dir, problem.id, report.inputs)
            return {
                "status": "ok",
                "attempts": attempt + 1,
                "exponent": exponent,
                "param_names": pair.param_names,
                "generator": pair.generator_source,
                "validator": pair.validator_source,
                "rows": rows,
                "generated": report.generated,
                "valid": len(report.inputs),
            }
        return {"status": "failed", "attempts": UTILITY_RETRIES, "error": last_error}

    results = markers.run_items([p.id for p in problems], compute)

    manifest_rows, utility_rows, failures = [], [], []
    for problem_id in sorted(results):
        payload = results[problem_id]
        if payload["status"] == "ok":
            manifest_rows += payload["rows"]
            utility_rows.append(
                {
                    "problem_id": problem_id,
                    "param_names": payload["param_names"],
                    "exponent": payload["exponent"],
                    "generator": payload["generator"],
                    "validator": payload["validator"],
                }
            )
        else:
            failures.append({"problem_id": problem_id, "error": payload["error"]})
    write_jsonl(stage_dir / "inputs_manifest.jsonl", manifest_rows)
    write_jsonl(stage_dir / "utility_pairs.jsonl", utility_rows)
    write_jsonl(stage_dir / "failures.jsonl", failures)
    return ctx.run.finish_stage(
        "gen-inputs",
        {
            "problems": len(problems),
            "with_inputs": len(utility_rows),
            "input_generation_failed": len(failures),
            "inputs": len(manifest_rows),
        },
    )


def _inputs_for(ctx: PipelineContext, problem_id: str) -> list[inputgen.TestInput]:
    stage_dir = ctx.run.root / STAGE_DIRS["gen-inputs"]
    rows = [
        row
        for row in read_jsonl(stage_dir / "inputs_manifest.jsonl")
        if row["problem_id"] == problem_id
    ]
    return inputgen.load_inputs(stage_dir, rows)


# -- 04 label -------------------------------------------------------------------


def _save_cases(
    stage_dir: Path, problem_id: str, cases: list[verify.TestCase]
) -> list[dict]:
    case_dir = stage_dir / "cases" / problem_id
    case_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    counters: dict[str, int] = {}
    for case in cases:
        tag = case.input.scale.tag
        k = counters.get(tag, 0)
        counters[tag] = k + 1
        in_name, out_name = f"{tag}-{k}.in", f"{tag}-{k}.out"
        (case_dir / in_name).write_text(case.input.input_text, encoding="utf-8")
        (case_dir / out_name).write_text(case.expected_output + "\n", encoding="utf-8")
        rows.append(
            {
                "problem_id": problem_id,
                "in_file": f"cases/{problem_id}/{in_name}",
                "out_file": f"cases/{problem_id}/{out_name}",
                "scale": list(case.input.scale.values),
                "label_origin": case.label_origin.value,
            }
        )
    return rows


def _load_cases(stage_dir: Path, rows: list[dict]) -> list[verify.TestCase]:
    cases = []
    for row in rows:
        input_text = (stage_dir / row["in_file"]).read_text(encoding="utf-8")
        output_text = (stage_dir / row["out_file"]).read_text(encoding="utf-8")
        cases.append(
            verify.TestCase(
                input=inputgen.TestInput(
                    input_text=input_text,
                    scale=inputgen.ScalePoint(tuple(row["scale"])),
                    validated=True,
                ),
                expected_output=verify.canonicalize_output(output_text),
                label_origin=verify.LabelOrigin(row["label_origin"]),
            )
        )
    return cases


def stage_label(ctx: PipelineContext) -> dict:
    ctx.run.require_stage("gen-inputs", "label")
    stage_dir = ctx.run.stage_dir("label")
    sandbox = ctx.need_sandbox()
    config = ctx.config
    ingest_dir = ctx.run.require_stage("ingest", "label")
    seeds = [p for p in _load_problems(ingest_dir / "problems.jsonl") if p.oracle_solutions]
    seeds.sort(key=lambda p: p.id)
    markers = ItemMarkers(stage_dir)
    seed_by_id = {p.id: p for p in seeds}

    def compute(problem_id: str) -> dict:
        problem = seed_by_id[problem_id]
        for solution in problem.oracle_solutions:
            solution.runtime_language_tag = config.oracle_runtime_tag
        inputs = _inputs_for(ctx, problem_id)
        if not inputs:
            return {"status": "skipped", "reason": "no generated inputs"}
        try:
            cases = verify.label_with_oracle(problem, inputs, sandbox, config.limits)
        except verify.OracleFailureError as exc:
            return {"status": "quarantined", "reason": str(exc)}
        return {"status": "ok", "rows": _save_cases(stage_dir, problem_id, cases)}

    results = markers.run_items([p.id for p in seeds], compute)

    case_rows, quarantined, skipped = [], [], []
    for problem_id in sorted(results):
        payload = results[problem_id]
        if payload["status"] == "ok":
            case_rows += payload["rows"]
        elif payload["status"] == "quarantined":
            quarantined.append({"problem_id": problem_id, "reason": payload["reason"]})
        else:
            skipped.append({"problem_id": problem_id, "reason": payload["reason"]})
    write_jsonl(stage_dir / "cases_manifest.jsonl", case_rows)
    write_jsonl(stage_dir / "quarantined.jsonl", quarantined)
    write_jsonl(stage_dir / "skipped.jsonl", skipped)
    return ctx.run.finish_stage(
        "label",
        {
            "seeds": len(seeds),
            "labeled": len({row["problem_id"] for row in case_rows}),
            "quarantined": len(quarantined),
            "skipped": len(skipped),
        },
    )


# -- candidate sampling (shared by verify and augment) ---------------------------


def solve_prompt(problem: Problem) -> str:
    if problem.kind is ProblemKind.FUNCTION:
        return fill(
            load_template("solve_function"),
            question=problem.statement,
            starter_code=problem.starter_code or "",
        )
    return fill(
        load_template("solve_stdio"),
        question=problem.statement,
        input_format=problem.input_format,
        output_format=problem.output_format,
    )


def sample_candidates(
    gateway: Gateway, config: PipelineConfig, problem: Problem, request_tag: str
) -> list[Solution]:
    response = gateway.complete(
        ChatRequest(
            prompt=solve_prompt(problem),
            temperature=config.temperature,
            max_tokens=config.max_tokens,
            n_samples=config.n_candidates,
            request_tag=request_tag,
        )
    )
    candidates = []
    for completion in response.completions:
        blocks = [b for b in extract_code_blocks(completion) if b.code.strip()]
        if not blocks:
            continue
        candidates.append(
            Solution(
                source_text=blocks[0].code,
                origin=SolutionOrigin.MODEL,
                runtime_language_tag=config.solution_runtime_tag,
            )
        )
    return candidates


# -- 05 verify -------------------------------------------------------------------


def stage_verify(ctx: PipelineContext) -> dict:
    ctx.run.require_stage("gen-inputs", "verify")
    stage_dir = ctx.run.stage_dir("verify")
    gateway = ctx.need_gateway()
    sandbox = ctx.need_sandbox()
    config = ctx.config
    problems = [p for p in _problems_by_id(ctx, "verify").values() if p.is_synthetic]
    problems.sort(key=lambda p: p.id)
    markers = ItemMarkers(stage_dir)
    problem_by_id = {p.id: p for p in problems}

    def compute(problem_id: str) -> dict:
        problem = problem_by_id[problem_id]
        inputs = _inputs_for(ctx, problem_id)
        if len(inputs) < config.min_inputs:
            return {
                "status": "skipped",
                "reason": f"only {len(inputs)} valid inputs, need {config.min_inputs}",
            }
        candidates = sample_candidates(gateway, config, problem, request_tag="candidates")
        if len(candidates) < 2:
            return {"status": "skipped", "reason": "fewer than 2 usable candidate solutions"}
        threshold = postproc.threshold_for(
            problem,
            default=config.threshold_default,
            hard=config.threshold_hard,
            rating_cutoff=config.hard_rating_cutoff,
        )
        report = verify.mutual_verify(
            candidates,
            inputs,
            threshold,
            sandbox,
            limits=config.limits,
            min_inputs=config.min_inputs,
            kind=problem.kind,
            fn_name=problem.fn_name,
            problem_id=problem_id,
        )
        payload = {"status": "done", "report": report.to_record()}
        if report.decision is verify.Decision.ACCEPT:
            payload["rows"] = _save_cases(stage_dir, problem_id, report.labeled_cases)
            payload["accepted_solutions"] = [
                corpus.solution_to_record(candidates[i])
                for i in report.accepted_solution_indices
            ]
        return payload

    results = markers.run_items([p.id for p in problems], compute)

    reports, case_rows, accepted_rows, skipped = [], [], [], []
    accepted_count = 0
    for problem_id in sorted(results):
        payload = results[problem_id]
        if payload["status"] == "skipped":
            skipped.append({"problem_id": problem_id, "reason": payload["reason"]})
            continue
        reports.append(payload["report"])
        (stage_dir / "reports").mkdir(exist_ok=True)
        report_path = stage_dir / "reports" / f"{problem_id}.json"
        report_path.write_text(
            json.dumps(payload["report"], ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        if payload["report"]["decision"] == "accept":
            accepted_count += 1
            case_rows += payload["rows"]
            accepted_rows.append(
                {"problem_id": problem_id, "solutions": payload["accepted_solutions"]}
            )
    write_jsonl(stage_dir / "reports.jsonl", reports)
    write_jsonl(stage_dir / "cases_manifest.jsonl", case_rows)
    write_jsonl(stage_dir / "accepted_solutions.jsonl", accepted_rows)
    write_jsonl(stage_dir / "skipped.jsonl", skipped)
    return ctx.run.finish_stage(
        "verify",
        {
            "synthetic_problems": len(problems),
            "verified": len(reports),
            "accepted": accepted_count,
            "skipped": len(skipped),
        },
    )


# -- 06 augment -------------------------------------------------------------------


def stage_augment(ctx: PipelineContext) -> dict:
    label_dir = ctx.run.require_stage("label", "augment")
    stage_dir = ctx.run.stage_dir("augment")
    gateway = ctx.need_gateway()
    sandbox = ctx.need_sandbox()
    config = ctx.config
    ingest_dir = ctx.run.require_stage("ingest", "augment")
    case_rows = read_jsonl(label_dir / "cases_manifest.jsonl")
    rows_by_problem: dict[str, list[dict]] = {}
    for row in case_rows:
        rows_by_problem.setdefault(row["problem_id"], []).append(row)
    seeds = [
        p
        for p in _load_problems(ingest_dir / "problems.jsonl")
        if p.id in rows_by_problem
    ]
    seeds.sort(key=lambda p: p.id)
    markers = ItemMarkers(stage_dir)
    seed_by_id = {p.id: p for p in seeds}

    def compute(problem_id: str) -> dict:
        problem = seed_by_id[problem_id]
        cases = _load_cases(label_dir, rows_by_problem[problem_id])
        candidates = sample_candidates(gateway, config, problem, request_tag="augment")
        if not candidates:
            return {"status": "skipped", "reason": "no usable candidate solutions"}
        kept = verify.augment_seed_solutions(problem, cases, candidates, sandbox, config.limits)
        return {
            "status": "ok",
            "kept": [corpus.solution_to_record(s) for s in kept],
            "all_unverified": all(s.unverified for s in kept),
        }

    results = markers.run_items([p.id for p in seeds], compute)

    augmented, skipped = [], []
    for problem_id in sorted(results):
        payload = results[problem_id]
        if payload["status"] == "ok":
            augmented.append(
                {
                    "problem_id": problem_id,
                    "solutions": payload["kept"],
                    "all_unverified": payload["all_unverified"],
                }
            )
        else:
            skipped.append({"problem_id": problem_id, "reason": payload["reason"]})
    write_jsonl(stage_dir / "augmented.jsonl", augmented)
    write_jsonl(stage_dir / "skipped.jsonl", skipped)
    return ctx.run.finish_stage(
        "augment",
        {"seeds": len(seeds), "augmented": len(augmented), "skipped": len(skipped)},
    )


# -- 07 postprocess ----------------------------------------------------------------


def _verification_summary_for_seed(config: PipelineConfig, problem: Problem) -> dict:
    threshold = postproc.threshold_for(
        problem,
        default=config.threshold_default,
        hard=config.threshold_hard,
        rating_cutoff=config.hard_rating_cutoff,
    )
    return {"origin": "oracle", "agreement": 1.0, "threshold": threshold}


def stage_postprocess(ctx: PipelineContext) -> dict:
    verify_dir = ctx.run.require_stage("verify", "postprocess")
    augment_dir = ctx.run.require_stage("augment", "postprocess")
    label_dir = ctx.run.require_stage("label", "postprocess")
    stage_dir = ctx.run.stage_dir("postprocess")
    config = ctx.config
    problems = _problems_by_id(ctx, "postprocess")

    rows: list[dict] = []

    # Synthetic problems: the fastest accepted solution carries the record.
    reports = {r["problem_id"]: r for r in read_jsonl(verify_dir / "reports.jsonl")}
    accepted = {
        r["problem_id"]: r["solutions"]
        for r in read_jsonl(verify_dir / "accepted_solutions.jsonl")
    }
    verify_cases: dict[str, list[dict]] = {}
    for row in read_jsonl(verify_dir / "cases_manifest.jsonl"):
        verify_cases.setdefault(row["problem_id"], []).append(row)
    for problem_id in sorted(accepted):
        problem = problems[problem_id]
        solutions = [corpus.solution_from_record(r) for r in accepted[problem_id]]
        fastest = postproc.select_fastest(problem, solutions)
        report = reports[problem_id]
        cases = _load_cases(verify_dir, verify_cases[problem_id])
        record = postproc.DatasetRecord(
            problem=problem,
            solution=fastest,
            test_cases=cases,
            verification=postproc.VerificationSummary(
                origin="mutual",
                agreement=report["agreement_fraction"],
                threshold=report["threshold"],
            ),
            solution_passed=True,
        )
        rows.append(_record_row(record))

    # Seed problems: every augmented solution that passed (or the unverified
    # fallback set) becomes a record against the oracle-labeled cases.
    label_cases: dict[str, list[dict]] = {}
    for row in read_jsonl(label_dir / "cases_manifest.jsonl"):
        label_cases.setdefault(row["problem_id"], []).append(row)
    for entry in read_jsonl(augment_dir / "augmented.jsonl"):
        problem_id = entry["problem_id"]
        problem = problems[problem_id]
        cases = _load_cases(label_dir, label_cases[problem_id])
        summary = _verification_summary_for_seed(config, problem)
        solutions = [corpus.solution_from_record(r) for r in entry["solutions"]]
        solutions.sort(key=lambda s: s.source_hash)
        for solution in solutions:
            record = postproc.DatasetRecord(
                problem=problem,
                solution=solution,
                test_cases=cases,
                verification=postproc.VerificationSummary(**summary),
                solution_passed=not solution.unverified,
            )
            rows.append(_record_row(record))

    rows.sort(key=lambda r: (r["record"]["id"], r["solution_hash"]))
    write_jsonl(stage_dir / "records.jsonl", rows)
    return ctx.run.finish_stage("postprocess", {"records": len(rows)})


def _record_row(record: postproc.DatasetRecord) -> dict:
    return {
        "record": postproc.record_to_json_dict(record),
        "solution_passed": record.solution_passed,
        "unverified": record.solution.unverified,
        "runtime_tag": record.solution.runtime_language_tag,
        "solution_hash": record.solution.source_hash,
    }


def _record_from_row(row: dict) -> postproc.DatasetRecord:
    data = row["record"]
    problem = corpus.problem_from_record(
        {
            "id": data["id"],
            "statement": data["statement"],
            "source": data["source"],
            "input_format": data["input_format"],
            "output_format": data["output_format"],
            "kind": data["kind"],
            "fn_name": data["fn_name"],
            "starter_code": data["starter_code"],
            "seed_id": data["seed_id"],
        }
    )
    solution = Solution(
        source_text=data["solution"],
        origin=SolutionOrigin(data["solution_origin"]),
        runtime_language_tag=row.get("runtime_tag", "python"),
        unverified=bool(row.get("unverified", False)),
    )
    cases = [
        verify.TestCase(
            input=inputgen.TestInput(
                input_text=test["input"],
                scale=inputgen.ScalePoint(tuple(test["scale"])),
                validated=True,
            ),
            expected_output=test["output"],
            label_origin=verify.LabelOrigin(data["verification"]["origin"]),
        )
        for test in data["tests"]
    ]
    return postproc.DatasetRecord(
        problem=problem,
        solution=solution,
        test_cases=cases,
        verification=postproc.VerificationSummary(**data["verification"]),
        solution_passed=bool(row.get("solution_passed", True)),
    )


# -- 08 decontaminate ---------------------------------------------------------------


def stage_decontaminate(ctx: PipelineContext, benchmarks_path: Optional[str] = None) -> dict:
    postproc_dir = ctx.run.require_stage("postprocess", "decontaminate")
    stage_dir = ctx.run.stage_dir("decontaminate")
    config = ctx.config
    rows = read_jsonl(postproc_dir / "records.jsonl")
    benchmarks = benchmarks_path or config.benchmarks_path

    removed_rows: list[dict] = []
    if benchmarks:
        docs = [(d["id"], d["text"]) for d in read_jsonl(Path(benchmarks))]
        index = postproc.build_ngram_index(docs, n=config.ngram_n)
        problems: dict[str, Problem] = {}
        for row in rows:
            record = _record_from_row(row)
            problems.setdefault(record.problem.id, record.problem)
        result = postproc.decontaminate(sorted(problems.values(), key=lambda p: p.id), index)
        removed_ids = {pid for pid, _, _ in result.removed}
        removed_rows = [
            {"problem_id": pid, "benchmark_id": bench, "matched_gram": gram}
            for pid, bench, gram in result.removed
        ]
        rows = [row for row in rows if row["record"]["id"] not in removed_ids]

    write_jsonl(stage_dir / "records.jsonl", rows)
    write_jsonl(stage_dir / "removed.jsonl", removed_rows)
    return ctx.run.finish_stage(
        "decontaminate",
        {"records": len(rows), "removed_problems": len(removed_rows)},
    )


# -- 09 export ------------------------------------------------------------------------


def stage_export(ctx: PipelineContext) -> dict:
    decon_dir = ctx.run.require_stage("decontaminate", "export")
    stage_dir = ctx.run.stage_dir("export")
    rows = read_jsonl(decon_dir / "records.jsonl")
    records = [_record_from_row(row) for row in rows]
    manifest = postproc.export_dataset(records, stage_dir / "dataset.jsonl")
    (stage_dir / "export_manifest.json").write_text(
        json.dumps(manifest.to_record(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return ctx.run.finish_stage("export", manifest.to_record())
