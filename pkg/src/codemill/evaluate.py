"""Desk-scale pass@1 harness over labeled test cases.

pass@1 for one problem is the fraction of its first k sampled solutions that
pass every test; the reported score is the mean over problems. Tests come
from an exported dataset JSONL; samples from a JSONL of
``{"problem_id", "solutions": [source, ...]}`` rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .corpus import Solution, SolutionOrigin
from .sandbox import FunctionJob, ResourceLimits, SandboxExecutor, StdioJob, Verdict
from .verify import canonicalize_output


class EvalError(Exception):
    pass


@dataclass
class EvalProblem:
    problem_id: str
    kind: str  # "stdio" | "function"
    fn_name: Optional[str]
    tests: list[tuple[str, str]]  # (input text, expected canonical output)


def load_tests(path: str | Path) -> dict[str, EvalProblem]:
    """Read labeled problems from an exported dataset JSONL."""
    out: dict[str, EvalProblem] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            tests = [(t["input"], t["output"]) for t in row.get("tests", [])]
            if not tests:
                raise EvalError(f"problem {row['id']} has no labeled tests")
            out[row["id"]] = EvalProblem(
                problem_id=row["id"],
                kind=row.get("kind", "stdio"),
                fn_name=row.get("fn_name"),
                tests=tests,
            )
    if not out:
        raise EvalError(f"no labeled problems in {path}")
    return out


def load_samples(path: str | Path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            out[row["problem_id"]] = list(row["solutions"])
    if not out:
        raise EvalError(f"no solution samples in {path}")
    return out


def _passes(
    sandbox: SandboxExecutor,
    source: str,
    problem: EvalProblem,
    limits: ResourceLimits,
    runtime_tag: str,
) -> bool:
    solution = Solution(source, SolutionOrigin.MODEL, runtime_tag)
    if problem.kind == "function":
        jobs = [
            FunctionJob(solution, problem.fn_name or "", test_input, limits)
            for test_input, _ in problem.tests
        ]
    else:
        jobs = [StdioJob(solution, test_input, limits) for test_input, _ in problem.tests]
    results = sandbox.batch_run(jobs)
    for (_, expected), result in zip(problem.tests, results):
        if result.verdict is not Verdict.OK:
            return False
        if canonicalize_output(result.stdout_text) != canonicalize_output(expected):
            return False
    return True


def evaluate_pass_at_1(
    samples: dict[str, list[str]],
    tests: dict[str, EvalProblem],
    k: int,
    sandbox: SandboxExecutor,
    limits: Optional[ResourceLimits] = None,
    runtime_tag: str = "python",
) -> dict:
    """Mean over problems of (passing fraction of the first k samples)."""
    if k < 1:
        raise EvalError("k must be >= 1")
    limits = limits or ResourceLimits()
    per_problem: dict[str, float] = {}
    for problem_id in sorted(tests):
        if problem_id not in samples:
            raise EvalError(f"no solution samples for problem {problem_id}")
        pool = samples[problem_id]
        if k > len(pool):
            raise EvalError(
                f"problem {problem_id}: k={k} exceeds the {len(pool)} available samples"
            )
        passed = sum(
            1 for source in pool[:k] if _passes(sandbox, source, tests[problem_id], limits, runtime_tag)
        )
        per_problem[problem_id] = passed / k
    overall = sum(per_problem.values()) / len(per_problem)
    return {
        "pass_at_1": overall,
        "k": k,
        "n_problems": len(per_problem),
        "per_problem": per_problem,
    }


def unbiased_pass_at_k(n: int, c: int, k: int) -> float:
    """Estimator 1 - C(n-c, k)/C(n, k), for cross-checking sampled rates."""
    if c == 0:
        return 0.0
    if c >= n or n - c < k:
        return 1.0
    value = 1.0
    for i in range(k):
        value *= (n - c - i) / (n - i)
    return 1.0 - value
