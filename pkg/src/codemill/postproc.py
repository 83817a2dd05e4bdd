"""Dataset post-processing: acceptance thresholds, fastest-solution selection,
benchmark decontamination, and deterministic export.

The agreement threshold is difficulty-aware: problems rated above the hard
cutoff (and synthetic problems inheriting such a rating from their seed) are
kept at a relaxed 40% agreement instead of the default 60%. Among a problem's
accepted solutions only the one with the lowest total CPU time survives.
Decontamination removes any problem whose statement shares a 16-token window
with an evaluation benchmark statement.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .corpus import Problem, Solution
from .verify import TestCase

DEFAULT_THRESHOLD = 0.60
HARD_THRESHOLD = 0.40
HARD_RATING_CUTOFF = 1600
DEFAULT_NGRAM_N = 16
DEFAULT_TOKENIZER_ID = "lower-punct-ws-v1"


class PostprocError(Exception):
    pass


def threshold_for(
    problem: Problem,
    default: float = DEFAULT_THRESHOLD,
    hard: float = HARD_THRESHOLD,
    rating_cutoff: int = HARD_RATING_CUTOFF,
) -> float:
    """Agreement threshold for a problem: relaxed above the rating cutoff.

    Synthetic problems carry their seed's rating (propagated at synthesis
    time), so hard seeds relax their offspring too. The cutoff is strict:
    exactly at the boundary stays on the default threshold.
    """
    if problem.cf_rating is not None and problem.cf_rating > rating_cutoff:
        return hard
    return default


def select_fastest(problem: Problem, accepted: list[Solution]) -> Solution:
    """Lowest total CPU time wins; ties break on the smaller source hash."""
    if not accepted:
        raise PostprocError(f"problem {problem.id}: no accepted solutions to select from")
    for solution in accepted:
        if solution.cpu_time_total_seconds is None:
            raise PostprocError(
                f"problem {problem.id}: accepted solution lacks cpu_time_total_seconds"
            )
    return min(accepted, key=lambda s: (s.cpu_time_total_seconds, s.source_hash))


# -- n-gram decontamination ---------------------------------------------------

_PUNCT = re.compile(r"[^\w\s]|_")


def tokenize(text: str, tokenizer_id: str = DEFAULT_TOKENIZER_ID) -> list[str]:
    """Lowercase, map punctuation to separators, split on whitespace."""
    if tokenizer_id != DEFAULT_TOKENIZER_ID:
        raise PostprocError(f"unknown tokenizer {tokenizer_id!r}")
    return _PUNCT.sub(" ", text.lower()).split()


def _gram_hash(tokens: Iterable[str]) -> str:
    return hashlib.blake2b("\x1f".join(tokens).encode("utf-8"), digest_size=16).hexdigest()


@dataclass
class NGramIndex:
    n: int
    tokenizer_id: str
    entries: dict[str, list[str]] = field(default_factory=dict)  # gram hash -> doc ids

    def lookup(self, tokens: list[str]) -> Optional[list[str]]:
        return self.entries.get(_gram_hash(tokens))


def build_ngram_index(
    benchmark_docs: Iterable[tuple[str, str]],
    n: int = DEFAULT_NGRAM_N,
    tokenizer_id: str = DEFAULT_TOKENIZER_ID,
) -> NGramIndex:
    """Index every contiguous n-token window of each benchmark document."""
    if n < 1:
        raise PostprocError("n must be >= 1")
    index = NGramIndex(n=n, tokenizer_id=tokenizer_id)
    for doc_id, text in benchmark_docs:
        tokens = tokenize(text, tokenizer_id)
        for i in range(len(tokens) - n + 1):
            key = _gram_hash(tokens[i : i + n])
            ids = index.entries.setdefault(key, [])
            if doc_id not in ids:
                ids.append(doc_id)
    for ids in index.entries.values():
        ids.sort()
    return index


@dataclass
class DecontaminationResult:
    kept: list[Problem]
    removed: list[tuple[str, str, str]]  # (problem_id, benchmark_id, matched gram)


def decontaminate(
    problems: Iterable[Problem],
    index: NGramIndex,
    tokenizer_id: str = DEFAULT_TOKENIZER_ID,
) -> DecontaminationResult:
    """Remove problems sharing any n-token window with an indexed benchmark."""
    if tokenizer_id != index.tokenizer_id:
        raise PostprocError(
            f"index built with tokenizer {index.tokenizer_id!r}, queried with {tokenizer_id!r}"
        )
    kept: list[Problem] = []
    removed: list[tuple[str, str, str]] = []
    for problem in problems:
        tokens = tokenize(problem.statement, tokenizer_id)
        match = None
        for i in range(len(tokens) - index.n + 1):
            window = tokens[i : i + index.n]
            hit = index.lookup(window)
            if hit:
                match = (problem.id, hit[0], " ".join(window))
                break
        if match:
            removed.append(match)
        else:
            kept.append(problem)
    return DecontaminationResult(kept=kept, removed=removed)


# -- export -------------------------------------------------------------------


@dataclass
class VerificationSummary:
    origin: str  # "oracle" | "mutual"
    agreement: float
    threshold: float


@dataclass
class DatasetRecord:
    problem: Problem
    solution: Solution
    test_cases: list[TestCase]
    verification: VerificationSummary
    solution_passed: bool = True


@dataclass
class ExportManifest:
    total: int
    by_source: dict[str, int]
    sha256: str
    path: str

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "by_source": dict(sorted(self.by_source.items())),
            "sha256": self.sha256,
            "path": self.path,
        }


def record_to_json_dict(record: DatasetRecord) -> dict:
    """Fixed field order; this is the exported wire format."""
    problem = record.problem
    return {
        "id": problem.id,
        "source": problem.source.value,
        "seed_id": problem.seed_id,
        "statement": problem.statement,
        "input_format": problem.input_format,
        "output_format": problem.output_format,
        "kind": problem.kind.value,
        "fn_name": problem.fn_name,
        "starter_code": problem.starter_code,
        "solution": record.solution.source_text,
        "solution_origin": record.solution.origin.value,
        "verification": {
            "origin": record.verification.origin,
            "agreement": record.verification.agreement,
            "threshold": record.verification.threshold,
        },
        "tests": [
            {
                "input": case.input.input_text,
                "output": case.expected_output,
                "scale": list(case.input.scale.values),
            }
            for case in record.test_cases
        ],
    }


def export_dataset(records: list[DatasetRecord], path: str | Path) -> ExportManifest:
    """Write records as JSONL; byte-deterministic for identical inputs.

    Every record must satisfy its invariants: a well-formed problem and a
    solution that passed all its tests (or carries the unverified flag from
    the augmentation fallback). Violations abort the export naming the
    record.
    """
    path = Path(path)
    by_source: dict[str, int] = {}
    lines: list[str] = []
    for record in records:
        bad = record.problem.violations()
        if bad:
            raise PostprocError(f"record {record.problem.id}: {'; '.join(bad)}")
        if not record.solution_passed and not record.solution.unverified:
            raise PostprocError(
                f"record {record.problem.id}: solution neither passed its tests "
                "nor carries the unverified flag"
            )
        by_source[record.problem.source.value] = by_source.get(record.problem.source.value, 0) + 1
        lines.append(json.dumps(record_to_json_dict(record), ensure_ascii=False))
    payload = "".join(line + "\n" for line in lines)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload, encoding="utf-8")
    return ExportManifest(
        total=len(records),
        by_source=by_source,
        sha256=hashlib.sha256(payload.encode("utf-8")).hexdigest(),
        path=path.name,
    )
