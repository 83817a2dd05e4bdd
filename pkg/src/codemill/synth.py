"""Problem synthesis: structured prompts and response parsing.

New problems are synthesized from a seed problem plus one of its oracle
solutions; prompting with the statement alone is refused because it produces
unsolvable problems. The response has a fixed three-part shape (analysis,
new problem, example cases) which :func:`parse_synthesis_response` picks
apart. Two additional prompt builders reproduce the direct-prompting
baselines used for ablations.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

from .corpus import Problem, ProblemKind, Solution, Source
from .templates import fill, load_template

PART1_HEADING = "## Part 1"
PART2_HEADING = "## Part 2"
PART3_HEADING = "## Part 3"


class SynthesisError(Exception):
    pass


class SynthesisParseError(SynthesisError):
    pass


@dataclass
class SynthesizedProblem:
    analysis: str
    knowledge_points: list[str]
    statement: str
    input_format: str
    output_format: str
    example_cases: list[tuple[str, str]]
    seed_id: str = ""
    flags: list[str] = field(default_factory=list)


def build_synthesis_prompt(seed: Problem, oracle: Solution) -> str:
    """Fill the synthesis template with the seed statement and its oracle."""
    if oracle is None or not oracle.source_text.strip():
        raise SynthesisError(
            f"problem {seed.id}: synthesis requires a non-empty oracle solution"
        )
    if seed.oracle_solutions and oracle.source_text not in {
        s.source_text for s in seed.oracle_solutions
    }:
        raise SynthesisError(f"problem {seed.id}: oracle does not belong to this seed")
    if not seed.statement.strip():
        raise SynthesisError(f"problem {seed.id}: empty statement")
    return fill(
        load_template("synthesis"),
        question=seed.statement,
        solution=oracle.source_text,
    )


def build_direct_io_pair_prompt(problem: Problem) -> str:
    """Baseline prompt asking for input-output pairs in one shot."""
    if not problem.statement.strip():
        raise SynthesisError(f"problem {problem.id}: empty statement")
    return fill(load_template("direct_io_pairs"), question=problem.statement)


def build_direct_input_prompt(problem: Problem) -> str:
    """Baseline prompt asking for bare test inputs in one shot."""
    if not problem.statement.strip():
        raise SynthesisError(f"problem {problem.id}: empty statement")
    return fill(load_template("direct_inputs"), question=problem.statement)


def _split_parts(text: str) -> dict[int, str]:
    """Return {part_number: region_text} for the ## Part headings present."""
    marks: list[tuple[int, int, int]] = []  # (offset, end_of_heading_line, part)
    for part, heading in ((1, PART1_HEADING), (2, PART2_HEADING), (3, PART3_HEADING)):
        idx = text.find(heading)
        if idx >= 0:
            line_end = text.find("\n", idx)
            marks.append((idx, len(text) if line_end < 0 else line_end + 1, part))
    marks.sort()
    regions: dict[int, str] = {}
    for i, (_, body_start, part) in enumerate(marks):
        body_end = marks[i + 1][0] if i + 1 < len(marks) else len(text)
        regions[part] = text[body_start:body_end]
    return regions


def _trim_blank_edges(lines: list[str]) -> list[str]:
    start, end = 0, len(lines)
    while start < end and not lines[start].strip():
        start += 1
    while end > start and not lines[end - 1].strip():
        end -= 1
    return lines[start:end]


def _labeled_sections(region: str, labels: list[str]) -> dict[str, str]:
    """Slice a region into the text following each ``Label:`` marker.

    A label owns everything from its colon to the next label (or region end).
    Same-line content and following lines are both kept.
    """
    lines = region.splitlines()
    hits: list[tuple[int, str, str]] = []  # (line index, label, same-line rest)
    for i, line in enumerate(lines):
        stripped = line.strip()
        for label in labels:
            if stripped.lower().startswith(label.lower() + ":"):
                rest = stripped[len(label) + 1 :].lstrip()
                hits.append((i, label, rest))
                break
    sections: dict[str, str] = {}
    for j, (i, label, rest) in enumerate(hits):
        stop = hits[j + 1][0] if j + 1 < len(hits) else len(lines)
        chunk = ([rest] if rest else []) + lines[i + 1 : stop]
        sections[label] = "\n".join(_trim_blank_edges(chunk))
    return sections


def _parse_example_cases(region: str) -> list[tuple[str, str]]:
    lines = region.splitlines()
    cases: list[tuple[str, str]] = []
    current_input: Optional[list[str]] = None
    current_output: Optional[list[str]] = None

    def close_case():
        nonlocal current_input, current_output
        if current_input is not None and current_output is not None:
            cases.append(
                (
                    "\n".join(_trim_blank_edges(current_input)),
                    "\n".join(_trim_blank_edges(current_output)),
                )
            )
        current_input = None
        current_output = None

    for line in lines:
        stripped = line.strip()
        if stripped.lower().startswith("input:"):
            close_case()
            rest = stripped[len("input:") :].lstrip()
            current_input = [rest] if rest else []
        elif stripped.lower().startswith("output:"):
            rest = stripped[len("output:") :].lstrip()
            current_output = [rest] if rest else []
        elif current_output is not None:
            current_output.append(line)
        elif current_input is not None:
            current_input.append(line)
    close_case()
    return cases


def _offending(text: str) -> str:
    return text.strip()[:80]


def parse_synthesis_response(
    text: str, seed_id: str = "", strict: bool = True
) -> SynthesizedProblem:
    """Parse a three-part synthesis response.

    Strict mode raises :class:`SynthesisParseError` whenever a required field
    is missing; lenient mode fills what it can and records what was missing
    in ``flags``.
    """
    regions = _split_parts(text)
    flags: list[str] = []

    if 2 not in regions:
        if strict:
            raise SynthesisParseError(
                f"missing '{PART2_HEADING}' heading near: {_offending(text)!r}"
            )
        flags.append("missing-part-2")

    analysis = ""
    knowledge_points: list[str] = []
    if 1 in regions:
        part1 = regions[1]
        kp = _labeled_sections(part1, ["Knowledge Points"]).get("Knowledge Points", "")
        if kp:
            knowledge_points = [p.strip() for p in kp.replace("\n", " ").split(",") if p.strip()]
        cut = part1.find("Knowledge Points")
        analysis = (part1[:cut] if cut >= 0 else part1).strip()
    else:
        flags.append("missing-part-1")

    statement = input_format = output_format = ""
    if 2 in regions:
        sections = _labeled_sections(
            regions[2], ["Problem Description", "Input Format", "Output Format"]
        )
        statement = sections.get("Problem Description", "")
        input_format = sections.get("Input Format", "")
        output_format = sections.get("Output Format", "")
    for name, value in (
        ("problem-description", statement),
        ("input-format", input_format),
        ("output-format", output_format),
    ):
        if not value:
            if strict:
                raise SynthesisParseError(
                    f"missing {name} in Part 2 near: {_offending(regions.get(2, text))!r}"
                )
            flags.append(f"missing-{name}")

    example_cases: list[tuple[str, str]] = []
    if 3 in regions:
        example_cases = _parse_example_cases(regions[3])
    else:
        flags.append("missing-part-3")
    if len(example_cases) < 2:
        if strict:
            raise SynthesisParseError(
                f"expected two example test cases, found {len(example_cases)} "
                f"near: {_offending(regions.get(3, text))!r}"
            )
        flags.append("fewer-than-two-examples")

    return SynthesizedProblem(
        analysis=analysis,
        knowledge_points=knowledge_points,
        statement=statement,
        input_format=input_format,
        output_format=output_format,
        example_cases=example_cases,
        seed_id=seed_id,
        flags=flags,
    )


def render_synthesis_response(sp: SynthesizedProblem) -> str:
    """Mechanically rebuild a response in the format the prompt mandates.

    Used for round-trip checks and for seeding replay caches in tests.
    """
    lines = [
        "## Part 1: Original Problem and Solution Analysis",
        sp.analysis or "Step 1: analyze the reference solution.",
        f"Knowledge Points: {', '.join(sp.knowledge_points) or 'implementation'}",
        "",
        "## Part 2: New Problem",
        f"Problem Description: {sp.statement}",
        "",
        "Input Format:",
        sp.input_format,
        "",
        "Output Format:",
        sp.output_format,
        "",
        "## Part 3: Example Test Cases",
    ]
    for case_input, case_output in sp.example_cases:
        lines += ["Input:", case_input, "Output:", case_output, ""]
    return "\n".join(lines)


def to_problem(sp: SynthesizedProblem, seed: Problem, sample_index: int = 0) -> Problem:
    """Materialize a parsed synthesis response as a synthetic Problem.

    The seed's difficulty rating is propagated so the relaxed agreement
    threshold for hard problems applies to its offspring too. The embedded
    example cases are carried along but never trusted as labeled tests;
    labeling happens through verification.
    """
    content = f"{seed.id}\x1f{sample_index}\x1f{sp.statement}"
    pid = "syn-" + hashlib.sha256(content.encode("utf-8")).hexdigest()[:16]
    return Problem(
        id=pid,
        statement=sp.statement,
        source=Source.SYNTHETIC,
        input_format=sp.input_format,
        output_format=sp.output_format,
        kind=ProblemKind.STDIO,
        constraints_text=sp.input_format,
        cf_rating=seed.cf_rating,
        seed_id=seed.id,
    )


__all__ = [
    "SynthesizedProblem",
    "SynthesisError",
    "SynthesisParseError",
    "build_synthesis_prompt",
    "build_direct_io_pair_prompt",
    "build_direct_input_prompt",
    "parse_synthesis_response",
    "render_synthesis_response",
    "to_problem",
]
