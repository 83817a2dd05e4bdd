"""Scale-controlled test input generation.

The flow per problem: prompt for a generator/validator utility pair, parse
the two entry points out of the response, enumerate scale points for the
generator's parameters, run the generator for each point through the sandbox
shim, then keep only inputs the validator accepts.

Scale values come from the candidate set {1..9} plus the powers of ten up to
an exponent limit e. Taken as a set, 10^0 collapses into the 1..9 range, so
one parameter has 9 + e candidate values.
"""

from __future__ import annotations

import ast
import hashlib
import itertools
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .corpus import Problem, ProblemKind
from .llm import extract_code_blocks
from .sandbox import ResourceLimits, SandboxExecutor, ShimJob, Verdict
from .templates import fill, load_template

GENERATOR_ENTRY = "generate_test_input"
VALIDATOR_ENTRY = "validate_test_input"


class InputGenError(Exception):
    pass


class UtilityParseError(InputGenError):
    pass


class UtilityPairDefectError(InputGenError):
    pass


@dataclass
class UtilityPair:
    generator_source: str
    validator_source: str
    param_names: list[str]
    exponent_limit_e: int = 5


@dataclass(frozen=True, order=True)
class ScalePoint:
    values: tuple[int, ...]

    @property
    def tag(self) -> str:
        return "x".join(str(v) for v in self.values)

    def decades(self) -> tuple[int, ...]:
        return tuple(len(str(v)) - 1 for v in self.values)


@dataclass
class TestInput:
    input_text: str
    scale: ScalePoint
    validated: bool = False


def build_utilgen_prompt(problem: Problem) -> str:
    """Prompt for the generator/validator pair, keyed to the problem kind."""
    if not problem.statement.strip():
        raise InputGenError(f"problem {problem.id}: empty statement")
    if problem.kind is ProblemKind.FUNCTION:
        return fill(
            load_template("utilgen_function"),
            question=problem.statement,
            starter_code=problem.starter_code or "",
        )
    return fill(load_template("utilgen_stdio"), question=problem.statement)


def parse_utility_pair(text: str, exponent_limit_e: int = 5) -> UtilityPair:
    """Extract the two utility functions from a completion.

    The first fenced block defining each entry point wins; helper blocks are
    ignored. Parameter names come from the generator's signature.
    """
    blocks = extract_code_blocks(text)
    if len(blocks) < 2:
        raise UtilityParseError(
            f"expected two code blocks (generator and validator), found {len(blocks)}"
        )
    generator_source = validator_source = None
    for block in blocks:
        if generator_source is None and f"def {GENERATOR_ENTRY}" in block.code:
            generator_source = block.code
        if validator_source is None and f"def {VALIDATOR_ENTRY}" in block.code:
            validator_source = block.code
    if generator_source is None:
        raise UtilityParseError(f"no block defines {GENERATOR_ENTRY}")
    if validator_source is None:
        raise UtilityParseError(f"no block defines {VALIDATOR_ENTRY}")

    try:
        tree = ast.parse(generator_source)
    except SyntaxError as exc:
        raise UtilityParseError(f"generator block does not parse: {exc}") from exc
    param_names: Optional[list[str]] = None
    for node in ast.walk(tree):
        if isinstance(node, ast.FunctionDef) and node.name == GENERATOR_ENTRY:
            param_names = [a.arg for a in node.args.args]
            break
    if param_names is None:
        raise UtilityParseError(f"generator block has no def {GENERATOR_ENTRY}")
    if not param_names:
        raise UtilityParseError("generator takes no scale parameters")
    return UtilityPair(
        generator_source=generator_source,
        validator_source=validator_source,
        param_names=param_names,
        exponent_limit_e=exponent_limit_e,
    )


def candidate_scales(e: int) -> list[int]:
    """The per-parameter candidate set {1..9} | {10^i : 0 <= i <= e}, sorted."""
    if e < 0:
        raise ValueError("exponent limit must be non-negative")
    return sorted(set(range(1, 10)) | {10**i for i in range(e + 1)})


def scale_grid(n_params: int, e: int, cap: int = 200, rng_seed: int = 0) -> list[ScalePoint]:
    """Cartesian grid of scale points, capped by stratified sampling.

    Under the cap the full product is returned. Over it, a deterministic
    sample is drawn that first covers every decade of every parameter, then
    fills the remainder uniformly. Output is deduplicated and sorted.
    """
    if n_params < 1:
        raise ValueError("n_params must be >= 1")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    base = candidate_scales(e)
    total = len(base) ** n_params
    if total <= cap:
        return [ScalePoint(values) for values in itertools.product(base, repeat=n_params)]

    rng = random.Random(rng_seed)
    by_decade: dict[int, list[int]] = {}
    for v in base:
        by_decade.setdefault(len(str(v)) - 1, []).append(v)

    chosen: set[tuple[int, ...]] = set()
    for position in range(n_params):
        for decade in sorted(by_decade):
            values = [rng.choice(base) for _ in range(n_params)]
            values[position] = rng.choice(by_decade[decade])
            chosen.add(tuple(values))
    if len(chosen) > cap:
        chosen = set(rng.sample(sorted(chosen), cap))
    while len(chosen) < cap:
        chosen.add(tuple(rng.choice(base) for _ in range(n_params)))
    return [ScalePoint(values) for values in sorted(chosen)]


_POWER_PATTERNS = [
    re.compile(r"10\s*\^\s*\{?(\d)\}?"),       # 10^5, 10^{5}
    re.compile(r"10\s*\*\*\s*(\d)"),           # 10**5
    re.compile(r"1e(\d)\b", re.IGNORECASE),     # 1e5
]


def infer_exponent_limit(constraints_text: str) -> Optional[int]:
    """Best-effort read of the largest power-of-ten bound in constraint prose."""
    exponents = []
    for pattern in _POWER_PATTERNS:
        exponents += [int(m) for m in pattern.findall(constraints_text)]
    for match in re.findall(r"\b10+\b", constraints_text):
        exponents.append(len(match) - 1)
    if not exponents:
        return None
    return max(0, min(9, max(exponents)))


def _sub_seed(base_seed: int, problem_id: str, values: tuple[int, ...], k: int) -> int:
    payload = f"{base_seed}\x1f{problem_id}\x1f{values}\x1f{k}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


@dataclass
class InputGenReport:
    """Valid inputs plus the counters the defect checks are based on."""

    inputs: list[TestInput]
    points_total: int = 0
    generated: int = 0
    skipped_out_of_constraint: int = 0
    generator_failures: int = 0
    validator_rejections: int = 0

    @property
    def validation_rate(self) -> float:
        return len(self.inputs) / self.generated if self.generated else 0.0


def generate_inputs(
    problem: Problem,
    pair: UtilityPair,
    grid: list[ScalePoint],
    sandbox: SandboxExecutor,
    limits: Optional[ResourceLimits] = None,
    per_point: int = 1,
    rng_seed: int = 0,
    revalidate_fraction: float = 0.1,
) -> InputGenReport:
    """Run generator then validator over the grid; keep validator-true inputs.

    The generator runs once per (point, duplicate) with a derived sub-seed so
    repeated pipeline runs reproduce the same inputs byte for byte. A
    generator that fails on more than half the attempted points, or a
    validator that rejects everything it is shown, raises
    :class:`UtilityPairDefectError` so the caller can re-prompt.
    """
    limits = limits or ResourceLimits(wall_timeout_seconds=30.0)
    attempts: list[tuple[ScalePoint, int]] = [
        (point, k) for point in grid for k in range(per_point)
    ]
    gen_jobs = [
        ShimJob(
            source_text=pair.generator_source,
            request={
                "mode": "GENERATE",
                "params": list(point.values),
                "seed": _sub_seed(rng_seed, problem.id, point.values, k),
            },
            limits=limits,
        )
        for point, k in attempts
    ]
    gen_results = sandbox.batch_run(gen_jobs)

    report = InputGenReport(inputs=[], points_total=len(attempts))
    candidates: list[tuple[ScalePoint, int, str]] = []
    for (point, k), result in zip(attempts, gen_results):
        response = result.shim_response
        if result.verdict is not Verdict.OK or not response or not response.get("ok"):
            report.generator_failures += 1
            continue
        input_string = response.get("input_string")
        if input_string is None:
            report.skipped_out_of_constraint += 1
            continue
        report.generated += 1
        candidates.append((point, k, input_string))

    if report.generator_failures > 0.5 * len(attempts):
        raise UtilityPairDefectError(
            f"problem {problem.id}: generator failed on {report.generator_failures} "
            f"of {len(attempts)} scale points"
        )

    val_jobs = [
        ShimJob(
            source_text=pair.validator_source,
            request={"mode": "VALIDATE", "input_string": text},
            limits=limits,
        )
        for _, _, text in candidates
    ]
    val_results = sandbox.batch_run(val_jobs)
    keyed: list[tuple[tuple, TestInput]] = []
    for (point, k, text), result in zip(candidates, val_results):
        response = result.shim_response
        ok = result.verdict is Verdict.OK and response and response.get("ok")
        if ok and response.get("valid") is True:
            keyed.append(((point.values, k), TestInput(text, point, validated=True)))
        else:
            report.validator_rejections += 1

    if candidates and not keyed:
        raise UtilityPairDefectError(
            f"problem {problem.id}: validator rejected all {len(candidates)} generated inputs"
        )

    keyed.sort(key=lambda item: item[0])
    report.inputs = [test_input for _, test_input in keyed]

    if report.inputs and revalidate_fraction > 0:
        rng = random.Random(rng_seed)
        sample_size = max(1, math.ceil(revalidate_fraction * len(report.inputs)))
        sample = rng.sample(report.inputs, min(sample_size, len(report.inputs)))
        recheck = sandbox.batch_run(
            [
                ShimJob(
                    source_text=pair.validator_source,
                    request={"mode": "VALIDATE", "input_string": ti.input_text},
                    limits=limits,
                )
                for ti in sample
            ]
        )
        for ti, result in zip(sample, recheck):
            response = result.shim_response or {}
            if not (result.verdict is Verdict.OK and response.get("ok") and response.get("valid")):
                raise UtilityPairDefectError(
                    f"problem {problem.id}: validator is not deterministic "
                    f"(flipped on re-run at scale {ti.scale.tag})"
                )
    return report


# -- persistence (one file per input, plus a JSONL manifest) -----------------


def save_inputs(stage_dir: str | Path, problem_id: str, inputs: list[TestInput]) -> list[dict]:
    """Write inputs as <problem-id>/<scale-tag>-<k>.in and return manifest rows."""
    stage_dir = Path(stage_dir)
    problem_dir = stage_dir / problem_id
    problem_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    counters: dict[str, int] = {}
    for test_input in inputs:
        tag = test_input.scale.tag
        k = counters.get(tag, 0)
        counters[tag] = k + 1
        name = f"{tag}-{k}.in"
        (problem_dir / name).write_text(test_input.input_text, encoding="utf-8")
        rows.append(
            {
                "problem_id": problem_id,
                "file": f"{problem_id}/{name}",
                "scale": list(test_input.scale.values),
                "validated": test_input.validated,
            }
        )
    return rows


def load_inputs(stage_dir: str | Path, manifest_rows: list[dict]) -> list[TestInput]:
    stage_dir = Path(stage_dir)
    out = []
    for row in manifest_rows:
        text = (stage_dir / row["file"]).read_text(encoding="utf-8")
        out.append(
            TestInput(
                input_text=text,
                scale=ScalePoint(tuple(row["scale"])),
                validated=bool(row.get("validated", True)),
            )
        )
    return out


def distinct_decades(inputs: list[TestInput]) -> set[int]:
    """Decades covered by the leading scale parameter of the retained inputs."""
    return {ti.scale.decades()[0] for ti in inputs}


__all__ = [
    "GENERATOR_ENTRY",
    "VALIDATOR_ENTRY",
    "InputGenError",
    "InputGenReport",
    "ScalePoint",
    "TestInput",
    "UtilityPair",
    "UtilityPairDefectError",
    "UtilityParseError",
    "build_utilgen_prompt",
    "candidate_scales",
    "distinct_decades",
    "generate_inputs",
    "infer_exponent_limit",
    "load_inputs",
    "parse_utility_pair",
    "save_inputs",
    "scale_grid",
]
