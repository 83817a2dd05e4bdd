import pytest
from hypothesis import given, settings, strategies as st

from codemill.corpus import Problem, Solution, SolutionOrigin, Source
from codemill.inputgen import ScalePoint, TestInput
from codemill.sandbox import ResourceLimits
from codemill.verify import (
    Decision,
    LabelOrigin,
    OracleFailureError,
    TestCase,
    VerifyError,
    augment_seed_solutions,
    canonicalize_output,
    group_and_decide,
    label_with_oracle,
    mutual_verify,
)

from worked_examples import (
    MIN_OPERATIONS_EXAMPLE_INPUT,
    MIN_OPERATIONS_EXAMPLE_OUTPUT,
    MIN_OPERATIONS_SOURCE,
)
from toolbox import (
    TOY_FAMILIES,
    SOLUTION_TAG,
    ground_truth_outputs,
    graded_inputs,
    make_accept_experiment,
    mutant_programs,
    reference_program,
    solutions_from_sources,
)


class TestCanonicalizeOutput:
    def test_trailing_spaces_and_blank_lines(self):
        assert canonicalize_output("4 \n9\n\n") == "4\n9"

    def test_empty(self):
        assert canonicalize_output("") == ""

    def test_crlf(self):
        assert canonicalize_output("a\r\nb") == "a\nb"

    @given(st.text(alphabet="ab \r\n", max_size=60))
    def test_idempotent(self, raw):
        once = canonicalize_output(raw)
        assert canonicalize_output(once) == once

    @given(st.text(max_size=60))
    def test_no_trailing_whitespace_survives(self, raw):
        result = canonicalize_output(raw)
        assert not result.endswith(("\n", " ", "\t", "\r"))
        for line in result.split("\n"):
            assert line == line.rstrip()


class TestGroupAndDecide:
    def test_majority_accepts(self):
        vectors = [("1", "2")] * 10 + [(str(i), "x") for i in range(6)]
        outcome = group_and_decide(vectors, 0.6)
        assert outcome.decision is Decision.ACCEPT
        assert outcome.agreement_fraction == pytest.approx(10 / 16)

    def test_nine_of_sixteen_rejects_at_sixty_percent(self):
        vectors = [("1",)] * 9 + [(f"x{i}",) for i in range(7)]
        outcome = group_and_decide(vectors, 0.6)
        assert outcome.decision is Decision.REJECT

    def test_tie_rejects_even_above_threshold(self):
        vectors = [("a",)] * 4 + [("b",)] * 4
        outcome = group_and_decide(vectors, 0.4)
        assert outcome.decision is Decision.REJECT
        assert outcome.winning_group is None

    def test_crashed_solutions_leave_denominator(self):
        vectors = [("1",)] * 6 + [None] * 10
        outcome = group_and_decide(vectors, 0.6)
        assert outcome.n_completed == 6
        assert outcome.agreement_fraction == 1.0
        assert outcome.decision is Decision.ACCEPT

    def test_all_crashed_rejects_with_empty_groups(self):
        outcome = group_and_decide([None, None], 0.6)
        assert outcome.decision is Decision.REJECT
        assert outcome.groups == []

    @given(
        data=st.lists(
            st.one_of(st.none(), st.tuples(st.sampled_from(["a", "b", "c", "d"]))),
            min_size=1,
            max_size=24,
        ),
        threshold=st.sampled_from([0.4, 0.5, 0.6, 0.75, 1.0]),
        seed=st.integers(min_value=0, max_value=999),
    )
    @settings(max_examples=120, deadline=None)
    def test_permutation_invariance(self, data, threshold, seed):
        import random

        shuffled = list(data)
        random.Random(seed).shuffle(shuffled)
        a = group_and_decide(data, threshold)
        b = group_and_decide(shuffled, threshold)
        assert a.decision == b.decision
        assert a.agreement_fraction == pytest.approx(b.agreement_fraction)
        if a.winning_group is not None:
            assert a.groups[a.winning_group].vector_hash == b.groups[b.winning_group].vector_hash

    @given(
        data=st.lists(
            st.one_of(st.none(), st.tuples(st.sampled_from(["a", "b", "c"]))),
            min_size=1,
            max_size=20,
        ),
        low=st.floats(min_value=0.05, max_value=0.95),
        delta=st.floats(min_value=0.0, max_value=0.5),
    )
    @settings(max_examples=120, deadline=None)
    def test_lowering_threshold_never_flips_accept_to_reject(self, data, low, delta):
        high = min(1.0, low + delta)
        at_high = group_and_decide(data, high)
        at_low = group_and_decide(data, low)
        if at_high.decision is Decision.ACCEPT:
            assert at_low.decision is Decision.ACCEPT

    def test_grouping_matches_bruteforce_pairwise(self):
        vectors = [("1", "2"), ("1", "2"), ("1", "3"), None, ("1", "2"), ("2", "2")]
        outcome = group_and_decide(vectors, 0.5)
        member_sets = [set(g.members) for g in outcome.groups]
        for i, vi in enumerate(vectors):
            for j, vj in enumerate(vectors):
                if vi is None or vj is None or i == j:
                    continue
                same_group = any(i in s and j in s for s in member_sets)
                assert same_group == (vi == vj)


def one_input(text="1\n7\n"):
    return TestInput(input_text=text, scale=ScalePoint((1,)), validated=True)


def toy_inputs(seed=3, count=12):
    return graded_inputs(seed, count=count, max_decade=2, value_range=(1, 200))


class TestLabelWithOracle:
    def test_worked_example(self, executor, quick_limits):
        problem = Problem(
            id="ops",
            statement="min operations",
            source=Source.CODEFORCES,
            oracle_solutions=[
                Solution(MIN_OPERATIONS_SOURCE, SolutionOrigin.ORACLE, SOLUTION_TAG)
            ],
        )
        inputs = [
            TestInput(MIN_OPERATIONS_EXAMPLE_INPUT, ScalePoint((6,)), validated=True)
        ]
        cases = label_with_oracle(problem, inputs, executor, quick_limits)
        assert len(cases) == 1
        assert cases[0].expected_output == MIN_OPERATIONS_EXAMPLE_OUTPUT
        assert cases[0].label_origin is LabelOrigin.ORACLE

    def test_oracle_timeout_quarantines_naming_scale(self, executor):
        problem = Problem(
            id="slow",
            statement="s",
            source=Source.ATCODER,
            oracle_solutions=[Solution("while True: pass", SolutionOrigin.ORACLE, SOLUTION_TAG)],
        )
        limits = ResourceLimits(wall_timeout_seconds=1.0)
        with pytest.raises(OracleFailureError) as err:
            label_with_oracle(problem, [one_input()], executor, limits)
        assert "scale 1" in str(err.value)

    def test_divergent_oracles_cross_check(self, executor, quick_limits):
        problem = Problem(
            id="dd",
            statement="s",
            source=Source.ATCODER,
            oracle_solutions=[
                Solution("print(1)", SolutionOrigin.ORACLE, SOLUTION_TAG),
                Solution("print(2)", SolutionOrigin.ORACLE, SOLUTION_TAG),
            ],
        )
        with pytest.raises(OracleFailureError):
            label_with_oracle(problem, [one_input()], executor, quick_limits, cross_check=True)

    def test_no_oracle_is_error(self, executor):
        problem = Problem(id="n", statement="s", source=Source.SYNTHETIC, seed_id="x")
        with pytest.raises(VerifyError):
            label_with_oracle(problem, [one_input()], executor)


class TestMutualVerify:
    def test_threshold_arithmetic_on_real_runs(self, executor, quick_limits):
        # 10 agreeing programs out of 16 -> accept at 0.6
        agree = "import sys\nprint(int(sys.stdin.read().split()[0]) * 2)"
        solutions = solutions_from_sources(
            [agree] * 10 + [f"import sys\nprint({i} + 1000)" for i in range(6)]
        )
        inputs = toy_inputs()
        report = mutual_verify(
            solutions, inputs, 0.6, executor, quick_limits, min_inputs=len(inputs)
        )
        assert report.decision is Decision.ACCEPT
        assert report.agreement_fraction == pytest.approx(0.625)
        assert sorted(report.accepted_solution_indices) == list(range(10))
        assert len(report.labeled_cases) == len(inputs)

    def test_nine_of_sixteen_rejects(self, executor, quick_limits):
        agree = "import sys\nprint(int(sys.stdin.read().split()[0]) * 2)"
        solutions = solutions_from_sources(
            [agree] * 9 + [f"import sys\nprint({i} + 1000)" for i in range(7)]
        )
        inputs = toy_inputs()
        report = mutual_verify(
            solutions, inputs, 0.6, executor, quick_limits, min_inputs=len(inputs)
        )
        assert report.decision is Decision.REJECT
        assert report.labeled_cases == []

    def test_all_identical_accepts_with_full_agreement(self, executor, quick_limits):
        solutions = solutions_from_sources(["print('same')"] * 16)
        inputs = toy_inputs(count=12)
        report = mutual_verify(
            solutions, inputs, 0.6, executor, quick_limits, min_inputs=10
        )
        assert report.decision is Decision.ACCEPT
        assert report.agreement_fraction == 1.0

    def test_min_inputs_precondition(self, executor, quick_limits):
        solutions = solutions_from_sources(["print(1)"] * 2)
        with pytest.raises(VerifyError):
            mutual_verify(solutions, [one_input()], 0.6, executor, quick_limits, min_inputs=50)

    def test_planted_fault_experiment_small(self, executor, quick_limits):
        experiment = make_accept_experiment(TOY_FAMILIES[0], seed=99, n_inputs=20)
        report = mutual_verify(
            experiment.solutions,
            experiment.inputs,
            0.6,
            executor,
            quick_limits,
            min_inputs=20,
            problem_id=experiment.problem_id,
        )
        assert report.decision is Decision.ACCEPT
        labeled = [case.expected_output for case in report.labeled_cases]
        assert labeled == experiment.expected_outputs

    def test_oracle_consistency(self, executor, quick_limits):
        # A trusted oracle among a majority of equivalent programs labels
        # exactly what direct oracle labeling produces.
        family = TOY_FAMILIES[1]
        inputs = toy_inputs(seed=21, count=12)
        oracle = Solution(reference_program(family), SolutionOrigin.ORACLE, SOLUTION_TAG)
        problem = Problem(
            id="cons", statement="s", source=Source.ATCODER, oracle_solutions=[oracle]
        )
        direct = label_with_oracle(problem, inputs, executor, quick_limits)
        candidates = solutions_from_sources(
            [reference_program(family)] * 9 + mutant_programs(family)[:3]
        )
        candidates.append(Solution(oracle.source_text, SolutionOrigin.ORACLE, SOLUTION_TAG))
        report = mutual_verify(
            candidates, inputs, 0.6, executor, quick_limits, min_inputs=len(inputs)
        )
        assert report.decision is Decision.ACCEPT
        assert [c.expected_output for c in report.labeled_cases] == [
            c.expected_output for c in direct
        ]


class TestAugmentSeedSolutions:
    def _cases(self, family, seed=17, count=10):
        # values must cross 65536 so the wraparound mutant actually diverges
        inputs = graded_inputs(seed, count=count, max_decade=1, value_range=(1, 1000000))
        outputs = ground_truth_outputs(family, inputs)
        return [
            TestCase(input=i, expected_output=o, label_origin=LabelOrigin.ORACLE)
            for i, o in zip(inputs, outputs)
        ]

    def test_passers_kept(self, executor, quick_limits):
        family = TOY_FAMILIES[0]
        cases = self._cases(family)
        problem = Problem(
            id="aug", statement="s", source=Source.ATCODER,
            oracle_solutions=[Solution(reference_program(family), SolutionOrigin.ORACLE, SOLUTION_TAG)],
        )
        candidates = solutions_from_sources(
            [reference_program(family)] * 5 + mutant_programs(family)
        )
        kept = augment_seed_solutions(problem, cases, candidates, executor, quick_limits)
        assert len(kept) == 5
        assert all(not s.unverified for s in kept)

    def test_fifty_nine_of_sixty_excluded(self, executor, quick_limits):
        family = TOY_FAMILIES[0]
        cases = self._cases(family, count=12)
        # candidate correct everywhere except the single-element case
        almost = mutant_programs(family)[3]
        problem = Problem(
            id="aug2", statement="s", source=Source.ATCODER,
            oracle_solutions=[Solution(reference_program(family), SolutionOrigin.ORACLE, SOLUTION_TAG)],
        )
        kept = augment_seed_solutions(
            problem, cases, solutions_from_sources([reference_program(family), almost]),
            executor, quick_limits,
        )
        assert len(kept) == 1

    def test_zero_passers_fallback_flags_unverified(self, executor, quick_limits):
        family = TOY_FAMILIES[0]
        cases = self._cases(family)
        candidates = solutions_from_sources(mutant_programs(family))
        problem = Problem(
            id="aug3", statement="s", source=Source.ATCODER,
            oracle_solutions=[Solution(reference_program(family), SolutionOrigin.ORACLE, SOLUTION_TAG)],
        )
        kept = augment_seed_solutions(problem, cases, candidates, executor, quick_limits)
        assert len(kept) == len(candidates)
        assert all(s.unverified for s in kept)
