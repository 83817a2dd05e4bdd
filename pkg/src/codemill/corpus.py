"""Problem corpus handling: ingestion, normalization, dedup, and filtering.

Problems arrive as JSONL records from heterogeneous sources (contest archives,
open datasets, or our own synthesis stage). This module turns them into
validated :class:`Problem` values, removes duplicates by normalized-statement
hash, and drops seed problems that carry no oracle solution.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional


class CorpusError(Exception):
    pass


class EmptyCorpusError(CorpusError):
    pass


class IdCollisionError(CorpusError):
    pass


class ProblemKind(str, Enum):
    STDIO = "stdio"
    FUNCTION = "function"


class Source(str, Enum):
    AIZU = "aizu"
    ATCODER = "atcoder"
    CODECHEF = "codechef"
    CODEWARS = "codewars"
    GEEKSFORGEEKS = "geeksforgeeks"
    HACKEREARTH = "hackerearth"
    HACKERRANK = "hackerrank"
    LEETCODE = "leetcode"
    CODEFORCES = "codeforces"
    IOI = "ioi"
    USACO = "usaco"
    SYNTHETIC = "synthetic"


class SolutionOrigin(str, Enum):
    ORACLE = "oracle"
    MODEL = "model"


@dataclass
class Solution:
    """One program attempting a problem, plus whatever execution stats exist."""

    source_text: str
    origin: SolutionOrigin = SolutionOrigin.MODEL
    runtime_language_tag: str = "python"
    cpu_time_total_seconds: Optional[float] = None
    verdicts: Optional[list[str]] = None
    unverified: bool = False  # set by the seed-augmentation fallback

    @property
    def source_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()


@dataclass
class Problem:
    id: str
    statement: str
    source: Source
    input_format: str = ""
    output_format: str = ""
    kind: ProblemKind = ProblemKind.STDIO
    fn_name: Optional[str] = None
    starter_code: Optional[str] = None
    constraints_text: str = ""
    cf_rating: Optional[int] = None
    oracle_solutions: list[Solution] = field(default_factory=list)
    seed_id: Optional[str] = None

    @property
    def is_synthetic(self) -> bool:
        return self.source is Source.SYNTHETIC

    def violations(self) -> list[str]:
        """Invariant check; empty list means the problem is well-formed."""
        out = []
        if not self.statement or not self.statement.strip():
            out.append("statement is empty")
        if self.kind is ProblemKind.FUNCTION and not self.fn_name:
            out.append("function-kind problem without fn_name")
        if self.is_synthetic and not self.seed_id:
            out.append("synthetic problem without seed_id")
        if self.seed_id and not self.is_synthetic:
            out.append("seed_id on a non-synthetic problem")
        if self.is_synthetic and any(
            s.origin is SolutionOrigin.ORACLE for s in self.oracle_solutions
        ):
            out.append("oracle solution attached to a synthetic problem")
        if any(
            s.cpu_time_total_seconds is not None and s.cpu_time_total_seconds < 0
            for s in self.oracle_solutions
        ):
            out.append("negative cpu_time_total_seconds on a solution")
        return out


def normalize_statement(text: str) -> str:
    """Lowercase, collapse whitespace runs to single spaces, strip the ends."""
    return " ".join(text.lower().split())


def statement_fingerprint(text: str) -> str:
    return hashlib.sha256(normalize_statement(text).encode("utf-8")).hexdigest()


PROBLEMS_SCHEMA_V1 = "problems-v1"

_SAFE_ID = re.compile(r"[A-Za-z0-9._-]+")


@dataclass
class IngestReject:
    line_number: int
    reason: str
    record_id: Optional[str] = None


@dataclass
class IngestResult:
    problems: list[Problem]
    rejects: list[IngestReject]


def _parse_record(record: dict) -> Problem:
    """Build a Problem from one JSONL record, raising ValueError on bad fields."""
    if not isinstance(record, dict):
        raise ValueError("record is not an object")
    statement = record.get("statement")
    if not isinstance(statement, str) or not statement.strip():
        raise ValueError("missing or empty statement")
    raw_source = record.get("source")
    if not isinstance(raw_source, str):
        raise ValueError("missing source")
    try:
        source = Source(raw_source.lower())
    except ValueError:
        raise ValueError(f"unknown source {raw_source!r}")

    kind = ProblemKind(record.get("kind", "stdio"))
    solutions = []
    for entry in record.get("solutions", []):
        code = entry.get("code") if isinstance(entry, dict) else None
        if not isinstance(code, str) or not code:
            raise ValueError("solution entry without code")
        solutions.append(
            Solution(
                source_text=code,
                origin=SolutionOrigin.ORACLE,
                runtime_language_tag=entry.get("language", "python"),
            )
        )

    cf_rating = record.get("cf_rating")
    if cf_rating is not None and not isinstance(cf_rating, int):
        raise ValueError("cf_rating must be an integer")

    record_id = record.get("id") or statement_fingerprint(statement)
    if not isinstance(record_id, str) or not _SAFE_ID.fullmatch(record_id):
        raise ValueError(
            "id must be a non-empty string of letters, digits, '.', '_' or '-' "
            "(ids become file names downstream)"
        )

    problem = Problem(
        id=record_id,
        statement=statement,
        source=source,
        input_format=record.get("input_format", "") or "",
        output_format=record.get("output_format", "") or "",
        kind=kind,
        fn_name=record.get("fn_name"),
        starter_code=record.get("starter_code"),
        constraints_text=record.get("constraints", "") or "",
        cf_rating=cf_rating,
        oracle_solutions=solutions,
        seed_id=record.get("seed_id"),
    )
    bad = problem.violations()
    if bad:
        raise ValueError("; ".join(bad))
    return problem


def ingest_problems(path: str | Path, schema: str = PROBLEMS_SCHEMA_V1) -> IngestResult:
    """Read a problem JSONL file into validated Problems plus a rejects report.

    Malformed records are never dropped silently; each shows up in
    ``rejects`` with its line number and reason. Raises
    :class:`EmptyCorpusError` when no record survives and
    :class:`IdCollisionError` when two records share an id.
    """
    if schema != PROBLEMS_SCHEMA_V1:
        raise CorpusError(f"unknown record schema {schema!r}")
    path = Path(path)
    problems: list[Problem] = []
    rejects: list[IngestReject] = []
    seen: dict[str, Source] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                rejects.append(IngestReject(line_number, f"invalid JSON: {exc.msg}"))
                continue
            try:
                problem = _parse_record(record)
            except ValueError as exc:
                rid = record.get("id") if isinstance(record, dict) else None
                rejects.append(IngestReject(line_number, str(exc), rid))
                continue
            if problem.id in seen:
                raise IdCollisionError(
                    f"duplicate problem id {problem.id!r}: "
                    f"sources {seen[problem.id].value!r} and {problem.source.value!r}"
                )
            seen[problem.id] = problem.source
            problems.append(problem)
    if not problems:
        raise EmptyCorpusError(f"no valid problem records in {path}")
    return IngestResult(problems=problems, rejects=rejects)


def problem_to_record(problem: Problem) -> dict:
    """Serialize to the same JSONL schema ingest reads."""
    return {
        "id": problem.id,
        "statement": problem.statement,
        "source": problem.source.value,
        "input_format": problem.input_format,
        "output_format": problem.output_format,
        "kind": problem.kind.value,
        "fn_name": problem.fn_name,
        "starter_code": problem.starter_code,
        "constraints": problem.constraints_text,
        "cf_rating": problem.cf_rating,
        "solutions": [
            {"code": s.source_text, "language": s.runtime_language_tag}
            for s in problem.oracle_solutions
        ],
        "seed_id": problem.seed_id,
    }


def problem_from_record(record: dict) -> Problem:
    return _parse_record(record)


def solution_to_record(solution: Solution) -> dict:
    return {
        "code": solution.source_text,
        "origin": solution.origin.value,
        "language": solution.runtime_language_tag,
        "cpu_time_total_seconds": solution.cpu_time_total_seconds,
        "verdicts": solution.verdicts,
        "unverified": solution.unverified,
    }


def solution_from_record(record: dict) -> Solution:
    return Solution(
        source_text=record["code"],
        origin=SolutionOrigin(record.get("origin", "model")),
        runtime_language_tag=record.get("language", "python"),
        cpu_time_total_seconds=record.get("cpu_time_total_seconds"),
        verdicts=record.get("verdicts"),
        unverified=bool(record.get("unverified", False)),
    )


@dataclass
class DedupeResult:
    kept: list[Problem]
    dropped: list[tuple[str, str]]  # (id, duplicate_of_id)


def dedupe(problems: Iterable[Problem]) -> DedupeResult:
    """Drop statements that collide after normalization, keeping first seen."""
    kept: list[Problem] = []
    dropped: list[tuple[str, str]] = []
    first_by_fingerprint: dict[str, str] = {}
    for problem in problems:
        fp = statement_fingerprint(problem.statement)
        original = first_by_fingerprint.get(fp)
        if original is None:
            first_by_fingerprint[fp] = problem.id
            kept.append(problem)
        else:
            dropped.append((problem.id, original))
    return DedupeResult(kept=kept, dropped=dropped)


def filter_missing_oracle(problems: Iterable[Problem]) -> list[Problem]:
    """Keep problems with at least one oracle solution.

    Synthetic problems are exempt: they have no oracle by construction and
    get labeled later through mutual verification.
    """
    return [p for p in problems if p.is_synthetic or p.oracle_solutions]


@dataclass
class CorpusStats:
    rows: dict[str, dict[str, int]]
    total: int

    def as_lines(self) -> list[str]:
        lines = [f"{'source':<16} {'original':>9} {'synthetic':>9} {'verified':>9} {'total':>7}"]
        for name in sorted(self.rows):
            row = self.rows[name]
            lines.append(
                f"{name:<16} {row['original']:>9} {row['synthetic']:>9} "
                f"{row['verified']:>9} {row['total']:>7}"
            )
        lines.append(f"{'total':<16} {'':>9} {'':>9} {'':>9} {self.total:>7}")
        return lines


def corpus_stats(
    problems: Iterable[Problem], verified_ids: Optional[set[str]] = None
) -> CorpusStats:
    """Per-source counts split original/synthetic and verified/unverified."""
    verified_ids = verified_ids or set()
    rows: dict[str, dict[str, int]] = {}
    total = 0
    counters: dict[str, Counter] = {}
    for problem in problems:
        total += 1
        counter = counters.setdefault(problem.source.value, Counter())
        counter["synthetic" if problem.is_synthetic else "original"] += 1
        counter["verified" if problem.id in verified_ids else "unverified"] += 1
        counter["total"] += 1
    for name, counter in counters.items():
        rows[name] = {
            "original": counter["original"],
            "synthetic": counter["synthetic"],
            "verified": counter["verified"],
            "unverified": counter["unverified"],
            "total": counter["total"],
        }
    return CorpusStats(rows=rows, total=total)
