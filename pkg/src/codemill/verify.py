"""Output labeling by oracle execution or by agreement among sampled solutions.

Seed problems have trusted reference programs, so their test outputs come
from running the oracle. Synthetic problems have no oracle; there the pipeline
samples many candidate solutions, runs every one on the full shared input
set, groups identical output vectors, and accepts outputs and solutions
together when the largest group is big enough. Wrong solutions tend to
diverge from each other while correct ones converge, which is what makes the
agreement signal informative, provided the inputs span small to large scales.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .corpus import Problem, ProblemKind, Solution
from .inputgen import TestInput
from .sandbox import (
    ExecutionResult,
    FunctionJob,
    ResourceLimits,
    SandboxExecutor,
    StdioJob,
    Verdict,
)


class VerifyError(Exception):
    pass


class OracleFailureError(VerifyError):
    """Oracle run failed or oracles disagreed; the problem is quarantined."""


class LabelOrigin(str, Enum):
    ORACLE = "oracle"
    MUTUAL = "mutual"


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


def canonicalize_output(raw: str) -> str:
    """Strip per-line trailing whitespace and trailing blank lines; LF endings."""
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    lines = [line.rstrip() for line in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


@dataclass
class TestCase:
    input: TestInput
    expected_output: str
    label_origin: LabelOrigin


@dataclass
class OutputGroup:
    vector_hash: str
    members: list[int]  # solution indices
    size: int


@dataclass
class VerificationReport:
    problem_id: str
    groups: list[OutputGroup]
    winning_group: Optional[int]
    agreement_fraction: float
    decision: Decision
    labeled_cases: list[TestCase]
    accepted_solution_indices: list[int]
    threshold: float
    n_solutions: int
    n_completed: int
    excluded: list[tuple[int, str]] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "decision": self.decision.value,
            "threshold": self.threshold,
            "agreement_fraction": self.agreement_fraction,
            "n_solutions": self.n_solutions,
            "n_completed": self.n_completed,
            "winning_group": self.winning_group,
            "groups": [
                {"vector_hash": g.vector_hash, "members": g.members, "size": g.size}
                for g in self.groups
            ],
            "accepted_solution_indices": self.accepted_solution_indices,
            "excluded": [[i, reason] for i, reason in self.excluded],
        }


def _vector_hash(vector: Sequence[str]) -> str:
    digest = hashlib.sha256()
    for item in vector:
        digest.update(item.encode("utf-8"))
        digest.update(b"\x1e")
    return digest.hexdigest()


@dataclass
class GroupingOutcome:
    groups: list[OutputGroup]
    winning_group: Optional[int]
    agreement_fraction: float
    decision: Decision
    n_completed: int


def group_and_decide(
    vectors: Sequence[Optional[Sequence[str]]], threshold: float
) -> GroupingOutcome:
    """Group complete output vectors by equality and apply the threshold.

    ``vectors[i]`` is solution i's canonical output vector, or None when the
    solution failed to complete every input (those drop out of both the
    groups and the agreement denominator). Accepts only a unique largest
    group whose share of completers reaches the threshold; a tie between
    largest groups means no majority exists and rejects.
    """
    if not 0.0 < threshold <= 1.0:
        raise VerifyError(f"threshold must be in (0, 1], got {threshold}")
    members_by_vector: dict[tuple[str, ...], list[int]] = {}
    for index, vector in enumerate(vectors):
        if vector is None:
            continue
        members_by_vector.setdefault(tuple(vector), []).append(index)
    n_completed = sum(len(m) for m in members_by_vector.values())
    groups = [
        OutputGroup(vector_hash=_vector_hash(vec), members=members, size=len(members))
        for vec, members in members_by_vector.items()
    ]
    # Deterministic report order regardless of solution order: biggest first,
    # then by vector hash.
    groups.sort(key=lambda g: (-g.size, g.vector_hash))

    if not groups or n_completed == 0:
        return GroupingOutcome([], None, 0.0, Decision.REJECT, 0)

    largest = groups[0]
    tie = len(groups) > 1 and groups[1].size == largest.size
    fraction = largest.size / n_completed
    if tie or fraction < threshold:
        return GroupingOutcome(groups, None, fraction, Decision.REJECT, n_completed)
    return GroupingOutcome(groups, 0, fraction, Decision.ACCEPT, n_completed)


def _jobs_for(
    solution: Solution,
    inputs: list[TestInput],
    limits: ResourceLimits,
    kind: ProblemKind,
    fn_name: Optional[str],
):
    if kind is ProblemKind.FUNCTION:
        if not fn_name:
            raise VerifyError("function-kind verification requires fn_name")
        return [
            FunctionJob(solution, fn_name, test_input.input_text, limits)
            for test_input in inputs
        ]
    return [StdioJob(solution, test_input.input_text, limits) for test_input in inputs]


def _apply_run_stats(solution: Solution, results: list[ExecutionResult]) -> Optional[list[str]]:
    """Record verdicts and total CPU; return the canonical vector if all OK."""
    solution.verdicts = [r.verdict.value for r in results]
    solution.cpu_time_total_seconds = sum(r.cpu_time_seconds for r in results)
    if all(r.verdict is Verdict.OK for r in results):
        return [canonicalize_output(r.stdout_text) for r in results]
    return None


def label_with_oracle(
    problem: Problem,
    inputs: list[TestInput],
    sandbox: SandboxExecutor,
    limits: Optional[ResourceLimits] = None,
    cross_check: bool = False,
) -> list[TestCase]:
    """Run the problem's oracle on every input and take its outputs as truth.

    Any non-OK oracle run quarantines the problem: either the input is bad or
    the oracle is, and neither may leak into the dataset. With
    ``cross_check`` a second oracle (when present) must agree everywhere.
    """
    if not problem.oracle_solutions:
        raise VerifyError(f"problem {problem.id} has no oracle solution")
    if any(not test_input.validated for test_input in inputs):
        raise VerifyError(f"problem {problem.id}: unvalidated input passed to labeling")
    limits = limits or ResourceLimits()
    oracle = problem.oracle_solutions[0]
    results = sandbox.batch_run(_jobs_for(oracle, inputs, limits, problem.kind, problem.fn_name))
    for test_input, result in zip(inputs, results):
        if result.verdict is not Verdict.OK:
            raise OracleFailureError(
                f"problem {problem.id}: oracle verdict {result.verdict.value} "
                f"on input at scale {test_input.scale.tag}"
            )
    vector = [canonicalize_output(r.stdout_text) for r in results]
    oracle.cpu_time_total_seconds = sum(r.cpu_time_seconds for r in results)

    if cross_check and len(problem.oracle_solutions) > 1:
        second = problem.oracle_solutions[1]
        second_results = sandbox.batch_run(
            _jobs_for(second, inputs, limits, problem.kind, problem.fn_name)
        )
        for test_input, first_out, result in zip(inputs, vector, second_results):
            if result.verdict is not Verdict.OK or canonicalize_output(result.stdout_text) != first_out:
                raise OracleFailureError(
                    f"problem {problem.id}: oracles disagree on input at scale "
                    f"{test_input.scale.tag}"
                )

    return [
        TestCase(input=test_input, expected_output=output, label_origin=LabelOrigin.ORACLE)
        for test_input, output in zip(inputs, vector)
    ]


def mutual_verify(
    solutions: list[Solution],
    inputs: list[TestInput],
    threshold: float,
    sandbox: SandboxExecutor,
    limits: Optional[ResourceLimits] = None,
    min_inputs: int = 50,
    kind: ProblemKind = ProblemKind.STDIO,
    fn_name: Optional[str] = None,
    problem_id: str = "",
) -> VerificationReport:
    """Label outputs by agreement across candidate solutions.

    Every solution runs on every input. Solutions with any non-OK run are
    excluded from grouping (and from the agreement denominator); the rest are
    grouped by exact equality of canonical output vectors. The problem is
    accepted when a unique largest group reaches the threshold, in which case
    its vector becomes the labeled outputs and its members the accepted
    solutions.
    """
    if len(inputs) < min_inputs:
        raise VerifyError(
            f"mutual verification needs at least {min_inputs} inputs, got {len(inputs)}"
        )
    if len(solutions) < 2:
        raise VerifyError("mutual verification needs at least 2 solutions")
    limits = limits or ResourceLimits()

    jobs = []
    for solution in solutions:
        jobs.extend(_jobs_for(solution, inputs, limits, kind, fn_name))
    results = sandbox.batch_run(jobs)

    vectors: list[Optional[list[str]]] = []
    excluded: list[tuple[int, str]] = []
    for index, solution in enumerate(solutions):
        chunk = results[index * len(inputs) : (index + 1) * len(inputs)]
        vector = _apply_run_stats(solution, chunk)
        if vector is None:
            bad = next(r.verdict.value for r in chunk if r.verdict is not Verdict.OK)
            excluded.append((index, bad))
        vectors.append(vector)

    outcome = group_and_decide(vectors, threshold)

    labeled_cases: list[TestCase] = []
    accepted: list[int] = []
    if outcome.decision is Decision.ACCEPT and outcome.winning_group is not None:
        winner = outcome.groups[outcome.winning_group]
        accepted = list(winner.members)
        winning_vector = vectors[winner.members[0]]
        labeled_cases = [
            TestCase(input=test_input, expected_output=output, label_origin=LabelOrigin.MUTUAL)
            for test_input, output in zip(inputs, winning_vector)
        ]

    return VerificationReport(
        problem_id=problem_id,
        groups=outcome.groups,
        winning_group=outcome.winning_group,
        agreement_fraction=outcome.agreement_fraction,
        decision=outcome.decision,
        labeled_cases=labeled_cases,
        accepted_solution_indices=accepted,
        threshold=threshold,
        n_solutions=len(solutions),
        n_completed=outcome.n_completed,
        excluded=excluded,
    )


def augment_seed_solutions(
    problem: Problem,
    cases: list[TestCase],
    candidates: list[Solution],
    sandbox: SandboxExecutor,
    limits: Optional[ResourceLimits] = None,
) -> list[Solution]:
    """Keep the candidates that pass every labeled case.

    When nothing passes (the problem is too hard for the sampling model),
    all candidates are returned flagged unverified rather than losing the
    problem outright.
    """
    if any(case.label_origin is not LabelOrigin.ORACLE for case in cases):
        raise VerifyError(f"problem {problem.id}: augmentation needs oracle-labeled cases")
    limits = limits or ResourceLimits()
    inputs = [case.input for case in cases]

    jobs = []
    for candidate in candidates:
        jobs.extend(_jobs_for(candidate, inputs, limits, problem.kind, problem.fn_name))
    results = sandbox.batch_run(jobs)

    kept: list[Solution] = []
    for index, candidate in enumerate(candidates):
        chunk = results[index * len(inputs) : (index + 1) * len(inputs)]
        vector = _apply_run_stats(candidate, chunk)
        if vector is not None and all(
            out == case.expected_output for out, case in zip(vector, cases)
        ):
            kept.append(candidate)
    if kept:
        return kept
    for candidate in candidates:
        candidate.unverified = True
    return list(candidates)
