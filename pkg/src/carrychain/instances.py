"""Training-instance construction and sampling.

Two instance shapes exist. First-type: two single digits in, their sum out.
Second-type: a previous stage answer, the carry marker C, and the next one or
two digits in; their sum plus the implied carry out. Inputs pad to 5 tokens,
targets to 3.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from . import vocab
from .vocab import CARRY, END, pad_input, pad_target

FIRST_TYPE = "first"
SECOND_TYPE = "second"

# Two-digit operands bound the previous-stage sum seen in training; 19 only
# ever arises mid-generation on longer numbers.
MAX_TRAIN_PREV_SUM = 18
MAX_PREV_SUM = 19


@dataclass(frozen=True)
class TrainingInstance:
    input_ids: np.ndarray  # (5,) int64, P-padded
    target_ids: np.ndarray  # (3,) int64, P-padded
    kind: Literal["first", "second"]

    @property
    def input_text(self) -> str:
        return vocab.decode(self.input_ids)

    @property
    def target_text(self) -> str:
        return vocab.decode(self.target_ids)


@dataclass(frozen=True)
class MixConfig:
    """Sampling mix: fraction of second-type instances and the operand regime.

    ``uniform_stage_space`` switches second-type sampling from genuine
    two-digit additions (the faithful default, which can never produce a
    previous sum of 19) to uniform draws over the full stage-input space.
    """

    second_type_fraction: float = 0.5
    seed: int = 0
    uniform_stage_space: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.second_type_fraction <= 1.0:
            raise ValueError("second_type_fraction must be a probability")


def make_first_type(d1: int, d2: int) -> TrainingInstance:
    if not (0 <= d1 <= 9 and 0 <= d2 <= 9):
        raise ValueError(f"first-type digits must be in [0, 9], got ({d1}, {d2})")
    input_ids = pad_input(vocab.encode(f"{d1}{d2}"))
    target_ids = pad_target(vocab.encode(f"{d1 + d2}{END}"))
    return TrainingInstance(input_ids, target_ids, FIRST_TYPE)


def make_second_type(prev_sum: int, next_digits: Iterable[int]) -> TrainingInstance:
    if not 0 <= prev_sum <= MAX_PREV_SUM:
        raise ValueError(f"prev_sum must be in [0, {MAX_PREV_SUM}], got {prev_sum}")
    digits = [int(d) for d in next_digits]
    if not 1 <= len(digits) <= 2 or any(not 0 <= d <= 9 for d in digits):
        raise ValueError(f"next_digits must be one or two digits in [0, 9], got {digits}")
    carry = 1 if prev_sum >= 10 else 0
    text = f"{prev_sum}{CARRY}" + "".join(str(d) for d in digits)
    input_ids = pad_input(vocab.encode(text))
    target_ids = pad_target(vocab.encode(f"{sum(digits) + carry}{END}"))
    return TrainingInstance(input_ids, target_ids, SECOND_TYPE)


def sample_instance(mix: MixConfig, rng: np.random.Generator) -> TrainingInstance:
    """One random instance; second-type with probability ``second_type_fraction``."""
    if rng.random() >= mix.second_type_fraction:
        d1, d2 = rng.integers(0, 10, size=2)
        return make_first_type(int(d1), int(d2))
    if mix.uniform_stage_space:
        prev_sum = int(rng.integers(0, MAX_PREV_SUM + 1))
        n_digits = 2 if rng.random() < 100.0 / 110.0 else 1
        return make_second_type(prev_sum, rng.integers(0, 10, size=n_digits))
    # Faithful regime: derive the stage from an actual two-digit addition.
    while True:
        a, b = rng.integers(0, 100, size=2)
        if a >= 10 or b >= 10:
            break
    prev_sum = int(a % 10 + b % 10)
    next_digits = []
    if a >= 10:
        next_digits.append(int(a // 10))
    if b >= 10:
        next_digits.append(int(b // 10))
    return make_second_type(prev_sum, next_digits)


def sample_batch(mix: MixConfig, n: int, rng: np.random.Generator) -> list[TrainingInstance]:
    if n < 1:
        raise ValueError("batch size must be >= 1")
    return [sample_instance(mix, rng) for _ in range(n)]


def batch_arrays(instances: list[TrainingInstance]) -> tuple[np.ndarray, np.ndarray]:
    """Stack instances into (inputs (B, 5), targets (B, 3)) id arrays."""
    inputs = np.stack([inst.input_ids for inst in instances])
    targets = np.stack([inst.target_ids for inst in instances])
    return inputs, targets


def enumerate_stage_space(max_prev_sum: int = MAX_TRAIN_PREV_SUM) -> list[tuple[str, str]]:
    """Every possible stage input paired with its exact target text.

    100 first-type inputs, then for each previous sum 0..max_prev_sum the 10
    one-digit and 100 two-digit continuations. ``max_prev_sum`` 18 covers the
    training-reachable space (2190 entries); 19 the full space (2300).
    """
    if max_prev_sum not in (MAX_TRAIN_PREV_SUM, MAX_PREV_SUM):
        raise ValueError(f"max_prev_sum must be 18 or 19, got {max_prev_sum}")
    space = []
    for d1 in range(10):
        for d2 in range(10):
            space.append((f"{d1}{d2}", f"{d1 + d2}{END}"))
    for s in range(max_prev_sum + 1):
        carry = 1 if s >= 10 else 0
        for d in range(10):
            space.append((f"{s}{CARRY}{d}", f"{d + carry}{END}"))
        for d1 in range(10):
            for d2 in range(10):
                space.append((f"{s}{CARRY}{d1}{d2}", f"{d1 + d2 + carry}{END}"))
    return space


def format_instance_line(inst: TrainingInstance) -> str:
    """One-instance dump line: INPUT<TAB>TARGET<TAB>KIND, with newline escaped."""
    inp = inst.input_text.replace("\n", "\\n")
    tgt = inst.target_text.replace("\n", "\\n")
    return f"{inp}\t{tgt}\t{inst.kind}"


def dump_instances(path, instances: Iterable[TrainingInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(format_instance_line(inst) + "\n")
