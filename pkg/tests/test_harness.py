"""Random-operand generation and the bulk verification harness."""
import numpy as np
import pytest

from carrychain import adder
from carrychain.decode import MalformedOutputError
from carrychain.harness import (
    EvalSpec,
    random_operand,
    report_render,
    run_eval,
    write_records,
)


def test_random_operand_shapes():
    rng = np.random.default_rng(0)
    single = random_operand(1, rng)
    assert len(single) == 1 and single.isdigit()
    fifty = random_operand(50, rng)
    assert len(fifty) == 50
    assert fifty[0] != "0"
    adder.check_digit_string(fifty)


def test_random_operand_leading_digit_is_uniform_over_nonzero():
    rng = np.random.default_rng(1)
    n = 10_000
    counts = np.zeros(10, dtype=int)
    for _ in range(n):
        counts[int(random_operand(5, rng)[0])] += 1
    assert counts[0] == 0
    p = 1.0 / 9.0
    sigma = (n * p * (1 - p)) ** 0.5
    for d in range(1, 10):
        assert abs(counts[d] - n * p) < 5 * sigma, d


def test_spec_validation():
    with pytest.raises(ValueError):
        EvalSpec(num_cases=0)
    with pytest.raises(ValueError):
        EvalSpec(num_cases=1, min_digits=5, max_digits=2)
    with pytest.raises(ValueError):
        EvalSpec(num_cases=1, lengths=(0,))
    with pytest.raises(ValueError):
        run_eval(EvalSpec(num_cases=1))


def test_exact_stub_scores_perfectly_for_any_spec():
    spec = EvalSpec(num_cases=40, min_digits=1, max_digits=200, seed=9)
    report = run_eval(spec, stage_fn=adder.stage_answer)
    assert report.accuracy == 1.0
    assert report.matches == 40
    assert not report.failures
    assert report.wall_time > 0


def test_reports_are_seed_deterministic():
    spec = EvalSpec(num_cases=25, min_digits=1, max_digits=60, seed=4)
    a = run_eval(spec, stage_fn=adder.stage_answer)
    b = run_eval(spec, stage_fn=adder.stage_answer)
    assert [(c.a, c.b, c.predicted) for c in a.cases] == [(c.a, c.b, c.predicted) for c in b.cases]


def test_fixed_length_mode_cycles():
    spec = EvalSpec(num_cases=6, seed=0, lengths=(3, 50))
    report = run_eval(spec, stage_fn=adder.stage_answer)
    assert [c.length for c in report.cases] == [3, 50, 3, 50, 3, 50]
    assert report.per_length() == [(3, 3, 3), (50, 3, 3)]


def test_malformed_output_counts_as_failure_and_run_continues():
    calls = []

    def sometimes_bad(text):
        calls.append(text)
        if len(calls) % 7 == 3:
            raise MalformedOutputError("synthetic failure")
        return adder.stage_answer(text)

    spec = EvalSpec(num_cases=10, min_digits=1, max_digits=4, seed=2)
    report = run_eval(spec, stage_fn=sometimes_bad)
    assert len(report.cases) == 10
    assert 0 < len(report.failures) < 10
    for failure in report.failures:
        assert failure.predicted is None
        assert failure.error
    assert report.matches + len(report.failures) == 10


def test_wrong_digit_stub_is_caught():
    def off_by_one(text):
        value = int(adder.stage_answer(text))
        return str(min(value + 1, 19))

    spec = EvalSpec(num_cases=5, min_digits=2, max_digits=6, seed=3)
    report = run_eval(spec, stage_fn=off_by_one)
    assert report.accuracy < 1.0
    for failure in report.failures:
        if failure.predicted is not None:
            assert failure.predicted != failure.expected
            assert failure.a and failure.b  # full operands retained


def test_report_render_and_records(tmp_path):
    spec = EvalSpec(num_cases=8, min_digits=1, max_digits=30, seed=5)
    report = run_eval(spec, stage_fn=adder.stage_answer)
    text = report_render(report)
    assert "accuracy" in text.splitlines()[0]
    assert "total: 8 cases, 8 matches" in text
    path = tmp_path / "records.tsv"
    write_records(report, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 8
    for line, case in zip(lines, report.cases):
        length, a, b, predicted, expected, match = line.split("\t")
        assert int(length) == case.length
        assert a == case.a and b == case.b
        assert predicted == case.predicted
        assert expected == case.expected
        assert match == "1"


def test_failure_block_includes_both_operands():
    def bad(text):
        return "1"

    spec = EvalSpec(num_cases=2, min_digits=3, max_digits=3, seed=0)
    report = run_eval(spec, stage_fn=bad)
    rendered = report_render(report)
    for case in report.failures:
        assert case.a in rendered
        assert case.b in rendered
        assert case.expected in rendered
