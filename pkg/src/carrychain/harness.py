"""Large-scale correctness evaluation of model additions.

Draws seeded random operand pairs across a digit-length range, verifies every
prediction against exact school addition, and aggregates per-length counts.
Failures keep their full operand strings — the point of the harness is
reproducible counterexamples, however long the numbers are.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adder import add_digit_strings
from .decode import MalformedOutputError, ModelParams, make_model_stage_fn, run_addition


@dataclass(frozen=True)
class EvalSpec:
    num_cases: int
    min_digits: int = 1
    max_digits: int = 1000
    seed: int = 0
    # Fixed-length mode: cases cycle through these lengths instead of sampling.
    lengths: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.num_cases < 1:
            raise ValueError("num_cases must be >= 1")
        if self.min_digits < 1 or self.max_digits < self.min_digits:
            raise ValueError("digit-length range must satisfy 1 <= min <= max")
        if self.lengths is not None and any(n < 1 for n in self.lengths):
            raise ValueError("all fixed lengths must be >= 1")


@dataclass
class CaseResult:
    length: int
    a: str
    b: str
    predicted: str | None
    expected: str
    match: bool
    error: str | None = None


@dataclass
class EvalReport:
    spec: EvalSpec
    cases: list[CaseResult] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def matches(self) -> int:
        return sum(c.match for c in self.cases)

    @property
    def accuracy(self) -> float:
        return self.matches / len(self.cases)

    @property
    def failures(self) -> list[CaseResult]:
        return [c for c in self.cases if not c.match]

    def per_length(self) -> list[tuple[int, int, int]]:
        """(length, cases, matches) rows in increasing length order."""
        buckets: dict[int, list[int]] = {}
        for c in self.cases:
            bucket = buckets.setdefault(c.length, [0, 0])
            bucket[0] += 1
            bucket[1] += c.match
        return [(length, n, ok) for length, (n, ok) in sorted(buckets.items())]


def random_operand(length: int, rng: np.random.Generator) -> str:
    """Uniform random digit string; multi-digit operands get a nonzero lead digit."""
    if length < 1:
        raise ValueError("length must be >= 1")
    digits = rng.integers(0, 10, size=length)
    if length > 1:
        digits[0] = rng.integers(1, 10)
    return (digits + ord("0")).astype(np.uint8).tobytes().decode("ascii")


def run_eval(
    spec: EvalSpec,
    params: ModelParams | None = None,
    stage_fn: Callable[[str], str] | None = None,
    backend: str | None = None,
) -> EvalReport:
    """Evaluate ``spec.num_cases`` additions; deterministic for a fixed seed.

    ``stage_fn`` substitutes for the model when given (e.g. the exact stage
    rule, for harness self-tests); otherwise ``params`` must be provided.
    Malformed model output counts as a failed case and the run continues.
    """
    if stage_fn is None:
        if params is None:
            raise ValueError("run_eval needs params or an explicit stage_fn")
        stage_fn = make_model_stage_fn(params, backend)
    rng = np.random.default_rng(spec.seed)
    report = EvalReport(spec=spec)
    t0 = time.perf_counter()
    for i in range(spec.num_cases):
        if spec.lengths is not None:
            length = int(spec.lengths[i % len(spec.lengths)])
        else:
            length = int(rng.integers(spec.min_digits, spec.max_digits + 1))
        a = random_operand(length, rng)
        b = random_operand(length, rng)
        expected = add_digit_strings(a, b)
        try:
            predicted, _ = run_addition(stage_fn, a, b, keep_trace=False)
        except MalformedOutputError as exc:
            report.cases.append(CaseResult(length, a, b, None, expected, False, str(exc)))
            continue
        report.cases.append(CaseResult(length, a, b, predicted, expected, predicted == expected))
    report.wall_time = time.perf_counter() - t0
    return report


def report_render(report: EvalReport) -> str:
    """Human-readable table: one row per length bucket, failures appended."""
    lines = [f"{'digits':>8} {'cases':>7} {'matches':>8} {'accuracy':>9}"]
    for length, n, ok in report.per_length():
        lines.append(f"{length:>8} {n:>7} {ok:>8} {ok / n:>9.3f}")
    lines.append(
        f"total: {len(report.cases)} cases, {report.matches} matches, "
        f"accuracy {report.accuracy:.6f}, wall time {report.wall_time:.2f}s"
    )
    for c in report.failures:
        lines.append("FAIL")
        lines.append(f"  a        = {c.a}")
        lines.append(f"  b        = {c.b}")
        lines.append(f"  predicted= {c.predicted}")
        lines.append(f"  expected = {c.expected}")
        if c.error:
            lines.append(f"  error    = {c.error}")
    return "\n".join(lines)


def write_records(report: EvalReport, path) -> None:
    """Line-delimited per-case records: length, a, b, predicted, expected, match."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in report.cases:
            fh.write(f"{c.length}\t{c.a}\t{c.b}\t{c.predicted or ''}\t{c.expected}\t{int(c.match)}\n")
