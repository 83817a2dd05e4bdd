"""Acceptance suite: one test per acceptance criterion, at stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion. Budgets are asserted inside the tests themselves.
"""

import hashlib
import json
import time

import pytest

from codemill.cli import main as cli_main
from codemill.corpus import Problem, Solution, SolutionOrigin, Source
from codemill.inputgen import (
    candidate_scales,
    distinct_decades,
    generate_inputs,
    scale_grid,
)
from codemill.pipeline import read_jsonl
from codemill.postproc import (
    build_ngram_index,
    decontaminate,
    threshold_for,
    tokenize,
)
from codemill.sandbox import ResourceLimits, SandboxExecutor, StdioJob, Verdict
from codemill.verify import Decision, mutual_verify

from worked_examples import (
    MIN_OPERATIONS_EXAMPLE_INPUT,
    MIN_OPERATIONS_EXAMPLE_OUTPUT,
    MIN_OPERATIONS_SOURCE,
    MINIMUM_NUMBER_EXAMPLES,
    MINIMUM_NUMBER_SOURCE,
)
from pipeline_fixture import build_toy_pipeline_fixture
from toolbox import (
    TOY_FAMILIES,
    make_accept_experiment,
    make_control_experiment,
    reference_pairs,
    solutions_from_sources,
)


def passed(name: str):
    print(f"\nACCEPTANCE PASS: {name}")


@pytest.fixture(scope="module")
def sandbox(tmp_path_factory):
    return SandboxExecutor(workers=4, work_root=tmp_path_factory.mktemp("acc-work"))


def test_worked_example_fidelity(sandbox):
    started = time.monotonic()
    limits = ResourceLimits(wall_timeout_seconds=10.0)

    oracle = Solution(MIN_OPERATIONS_SOURCE, SolutionOrigin.ORACLE, "python")
    result = sandbox.run_stdio(oracle, MIN_OPERATIONS_EXAMPLE_INPUT, limits)
    assert result.verdict is Verdict.OK
    from codemill.verify import canonicalize_output

    assert canonicalize_output(result.stdout_text) == MIN_OPERATIONS_EXAMPLE_OUTPUT

    fn_solution = Solution(MINIMUM_NUMBER_SOURCE, SolutionOrigin.ORACLE, "python")
    for digits, expected in MINIMUM_NUMBER_EXAMPLES:
        fn_result = sandbox.run_function(
            fn_solution, "minimum_Number", json.dumps({"s": digits}), limits
        )
        assert fn_result.verdict is Verdict.OK
        assert fn_result.stdout_text == str(expected)

    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"worked examples took {elapsed:.1f}s, budget 5s"
    passed("worked-example fidelity (byte-exact, < 5 s)")


def test_scale_grid_law():
    started = time.monotonic()

    grid = scale_grid(1, 5)
    values = sorted(p.values[0] for p in grid)
    assert values == sorted({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 100, 1000, 10000, 100000})
    assert len(values) == 14

    for e in range(0, 4):
        base_size = len(candidate_scales(e))
        grid2 = scale_grid(2, e, cap=10**6)
        assert len(grid2) == base_size**2

    sampled_a = scale_grid(3, 5, cap=200, rng_seed=123)
    sampled_b = scale_grid(3, 5, cap=200, rng_seed=123)
    assert sampled_a == sampled_b

    elapsed = time.monotonic() - started
    assert elapsed < 1.0
    passed("scale-grid law (14-element set, squared sizes, deterministic sampling)")


def test_mutual_verification_oracle_experiment(sandbox):
    started = time.monotonic()
    limits = ResourceLimits(wall_timeout_seconds=10.0)

    n_problems = 20
    accepted = 0
    for i in range(n_problems):
        family = TOY_FAMILIES[i % len(TOY_FAMILIES)]
        experiment = make_accept_experiment(family, seed=1000 + i, n_inputs=50)
        report = mutual_verify(
            experiment.solutions,
            experiment.inputs,
            0.6,
            sandbox,
            limits,
            min_inputs=50,
            problem_id=f"{experiment.problem_id}-{i}",
        )
        assert report.decision is Decision.ACCEPT, f"problem {i} ({family.name}) rejected"
        labeled = [case.expected_output for case in report.labeled_cases]
        assert labeled == experiment.expected_outputs, (
            f"problem {i} ({family.name}): labeled outputs diverge from brute force"
        )
        accepted += 1

    controls = 0
    for i, family_index in enumerate([0, 5, 10, 11, 12]):
        family = TOY_FAMILIES[family_index]
        experiment = make_control_experiment(family, seed=2000 + i, n_inputs=50)
        report = mutual_verify(
            experiment.solutions,
            experiment.inputs,
            0.6,
            sandbox,
            limits,
            min_inputs=50,
            problem_id=f"{experiment.problem_id}-{i}",
        )
        assert report.decision is Decision.REJECT, (
            f"control {family.name} accepted at {report.agreement_fraction}"
        )
        controls += 1

    elapsed = time.monotonic() - started
    assert elapsed < 600.0, f"experiment took {elapsed:.0f}s, budget 600s"
    passed(
        f"mutual-verification oracle experiment ({accepted} accepts, 100% label "
        f"fidelity, {controls} control rejects, {elapsed:.0f}s)"
    )


def test_input_diversity_property(sandbox):
    started = time.monotonic()
    problem = Problem(id="div", statement="array task", source=Source.ATCODER)
    limits = ResourceLimits(wall_timeout_seconds=30.0)

    total_generated = 0
    total_valid = 0
    for name, pair in reference_pairs().items():
        grid = scale_grid(len(pair.param_names), 5, cap=200, rng_seed=9)
        report = generate_inputs(
            problem, pair, grid, sandbox, limits=limits, rng_seed=9
        )
        total_generated += report.generated
        total_valid += len(report.inputs)
        decades = distinct_decades(report.inputs)
        assert len(decades & set(range(6))) >= 5, f"{name}: decades covered {decades}"

    assert total_generated > 0
    validation_rate = total_valid / total_generated
    assert validation_rate >= 0.95, f"validation rate {validation_rate:.3f} < 0.95"

    elapsed = time.monotonic() - started
    assert elapsed < 120.0, f"diversity check took {elapsed:.0f}s, budget 120s"
    passed(
        f"input diversity ({validation_rate:.0%} validator pass rate, "
        f">=5 decades per fixture, {elapsed:.0f}s)"
    )


def test_sandbox_limits(sandbox):
    loop = Solution("while True: pass", SolutionOrigin.MODEL, "python-lean")
    started = time.monotonic()
    result = sandbox.run_stdio(loop, "", ResourceLimits(wall_timeout_seconds=2.0))
    elapsed = time.monotonic() - started
    assert result.verdict is Verdict.TLE
    assert elapsed < 3.0, f"TLE took {elapsed:.2f}s, budget timeout+1s"

    hog = Solution("x = bytearray(8 << 30)\nprint(len(x))", SolutionOrigin.MODEL, "python-lean")
    hog_result = sandbox.run_stdio(
        hog, "", ResourceLimits(wall_timeout_seconds=10.0, address_space_bytes=1 << 30)
    )
    assert hog_result.verdict in (Verdict.MLE, Verdict.RE)

    deterministic = Solution(
        "import sys\ntokens = sys.stdin.read().split()\nprint('|'.join(sorted(tokens)))",
        SolutionOrigin.MODEL,
        "python-lean",
    )
    limits = ResourceLimits(wall_timeout_seconds=10.0)
    jobs = [StdioJob(deterministic, "gamma beta alpha", limits) for _ in range(100)]
    results = sandbox.batch_run(jobs)
    outputs = {r.stdout_text for r in results}
    assert all(r.verdict is Verdict.OK for r in results)
    assert len(outputs) == 1, "deterministic program must be byte-identical over 100 runs"

    import test_sandbox

    assert test_sandbox.count_descendants() == 0, "descendant processes remain after batch"
    passed("sandbox limits (TLE latency, MLE/RE on memory hog, 0 descendants, 100-run determinism)")


def test_threshold_semantics(sandbox):
    limits = ResourceLimits(wall_timeout_seconds=10.0)
    echo_double = "import sys\nprint(int(sys.stdin.read().split()[0]) * 2)"

    def run_with_group(n_agree: int, threshold: float):
        divergent = [f"import sys\nprint({i} + 10**7)" for i in range(16 - n_agree)]
        solutions = solutions_from_sources([echo_double] * n_agree + divergent)
        from toolbox import graded_inputs

        inputs = graded_inputs(seed=5, count=10, max_decade=1, value_range=(1, 99))
        return mutual_verify(
            solutions, inputs, threshold, sandbox, limits, min_inputs=10
        )

    report_10 = run_with_group(10, 0.6)
    assert report_10.decision is Decision.ACCEPT
    assert report_10.agreement_fraction == 0.625

    report_9 = run_with_group(9, 0.6)
    assert report_9.decision is Decision.REJECT

    hard_problem = Problem(
        id="hard", statement="s", source=Source.CODEFORCES, cf_rating=1700
    )
    hard_threshold = threshold_for(hard_problem)
    assert hard_threshold == 0.40
    report_7 = run_with_group(7, hard_threshold)
    assert report_7.decision is Decision.ACCEPT
    assert report_7.agreement_fraction == 0.4375

    boundary = Problem(id="b", statement="s", source=Source.CODEFORCES, cf_rating=1600)
    assert threshold_for(boundary) == 0.60
    passed("threshold semantics (10/16 accept at 0.6, 9/16 reject, 7/16 accept at 0.4)")


def test_decontamination(tmp_path):
    span16 = " ".join(f"bench{i}" for i in range(16))
    index = build_ngram_index([("benchmark-A", f"context {span16} tail")], n=16)

    planted = Problem(id="planted", statement=f"Solve X. {span16} Print Y.", source=Source.IOI)
    result = decontaminate([planted], index)
    assert result.kept == [] and result.removed[0][0] == "planted"

    span15 = " ".join(f"bench{i}" for i in range(15))
    near = Problem(id="near", statement=f"Solve X. {span15} unrelated tail.", source=Source.IOI)
    result15 = decontaminate([near], index)
    assert result15.kept == [near] and result15.removed == []

    # index equivalence against a quadratic scan over a 100-doc corpus
    import random

    rng = random.Random(7)
    vocab = [f"v{i}" for i in range(30)]
    docs = [(f"d{i}", " ".join(rng.choice(vocab) for _ in range(40))) for i in range(100)]
    n = 8
    corpus_index = build_ngram_index(docs, n=n)
    problems = []
    for i in range(50):
        text = " ".join(rng.choice(vocab) for _ in range(30))
        if i % 4 == 0:
            tokens = docs[rng.randrange(100)][1].split()
            start = rng.randrange(len(tokens) - n + 1)
            text += " " + " ".join(tokens[start : start + n])
        problems.append(Problem(id=f"p{i}", statement=text, source=Source.USACO))
    fast = {pid for pid, _, _ in decontaminate(problems, corpus_index).removed}
    brute = set()
    for problem in problems:
        tokens = tokenize(problem.statement)
        windows = {" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1)}
        for _, doc_text in docs:
            doc_tokens = tokenize(doc_text)
            doc_windows = {
                " ".join(doc_tokens[j : j + n]) for j in range(len(doc_tokens) - n + 1)
            }
            if windows & doc_windows:
                brute.add(problem.id)
                break
    assert fast == brute
    passed("decontamination (16-token removed, 15-token kept, matches brute force on 100 docs)")


def test_end_to_end_determinism(tmp_path):
    started = time.monotonic()
    fixture = build_toy_pipeline_fixture(tmp_path / "fixture", n_seeds=10)

    digests = []
    for run_name in ("run-a", "run-b"):
        run_dir = tmp_path / run_name
        code = cli_main(
            [
                "--config", str(fixture.config_path),
                "--run-dir", str(run_dir),
                "--replay", str(fixture.cache_dir),
                "--seed", "0",
                "pipeline",
                "--problems", str(fixture.problems_path),
                "--benchmarks", str(fixture.benchmarks_path),
            ]
        )
        assert code == 0
        dataset = run_dir / "09-export" / "dataset.jsonl"
        digests.append(hashlib.sha256(dataset.read_bytes()).hexdigest())

    assert digests[0] == digests[1], "export files differ between identical runs"

    rows = read_jsonl(tmp_path / "run-a" / "09-export" / "dataset.jsonl")
    by_id = {row["id"] for row in rows}
    child_of = {child.seed_id: child for child in fixture.children}
    assert child_of["seed-06"].id not in by_id, "contaminated child must be decontaminated"
    assert child_of["seed-08"].id not in by_id, "low-agreement child must be rejected"
    assert child_of["seed-09"].id in by_id, "hard child should pass at the relaxed threshold"
    hard_rows = [row for row in rows if row["id"] == child_of["seed-09"].id]
    assert hard_rows[0]["verification"]["threshold"] == 0.4
    assert hard_rows[0]["verification"]["agreement"] == 0.4375
    unverified_rows = [row for row in rows if row["id"] == "seed-07"]
    assert unverified_rows, "fallback seed must still export its unverified solutions"

    elapsed = time.monotonic() - started
    assert elapsed < 900.0, f"end-to-end determinism took {elapsed:.0f}s, budget 900s"
    passed(f"end-to-end determinism (byte-identical exports, {len(rows)} records, {elapsed:.0f}s)")
