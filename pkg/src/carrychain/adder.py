"""Exact, model-free ground truth for long addition.

Three pieces live here: school addition on decimal digit strings, the
decomposition of an addition into right-to-left stages (the same stage
inputs/targets the model is trained on and driven with), and the collation
rule that reassembles stage outputs into the final answer.

Digit strings are plain ``str`` of characters '0'-'9', most significant digit
first, with no leading zero unless the value is exactly "0".
"""
from __future__ import annotations

from .vocab import CARRY, END


class CollationError(ValueError):
    """Stage outputs that cannot be collated into a valid digit string."""


def check_digit_string(s: str, name: str = "operand") -> str:
    """Validate a digit string; returns it unchanged so calls can be inlined."""
    if not isinstance(s, str) or not s:
        raise ValueError(f"{name} must be a non-empty digit string")
    for ch in s:
        if not "0" <= ch <= "9":
            raise ValueError(f"{name} contains invalid character {ch!r}")
    if len(s) > 1 and s[0] == "0":
        raise ValueError(f"{name} has a leading zero: {s[:8]!r}...")
    return s


def add_digit_strings(a: str, b: str) -> str:
    """Exact sum of two digit strings by the right-to-left school algorithm."""
    check_digit_string(a, "a")
    check_digit_string(b, "b")
    ra, rb = a[::-1], b[::-1]
    la, lb = len(ra), len(rb)
    out = []
    carry = 0
    for i in range(max(la, lb)):
        s = carry
        if i < la:
            s += ord(ra[i]) - 48
        if i < lb:
            s += ord(rb[i]) - 48
        carry, d = divmod(s, 10)
        out.append(chr(48 + d))
    if carry:
        out.append("1")
    return "".join(reversed(out))


def stage_chunks(a: str, b: str) -> list[str]:
    """Per-stage digit pairs, least significant stage first.

    Stage k pairs the k-th least-significant digit of ``a`` with that of ``b``;
    a digit is simply omitted once its operand is exhausted, so late chunks of
    unequal-length additions have a single character.
    """
    ra, rb = a[::-1], b[::-1]
    la, lb = len(ra), len(rb)
    chunks = []
    for i in range(max(la, lb)):
        if i < la and i < lb:
            chunks.append(ra[i] + rb[i])
        elif i < la:
            chunks.append(ra[i])
        else:
            chunks.append(rb[i])
    return chunks


def stage_answer(stage_input_text: str) -> str:
    """Exact answer digits (without the trailing S) for any stage-input text.

    First stages are two bare digits. Continuations are the previous stage's
    answer, C, then one or two next digits; two digits before C signal a
    carry of one into this stage, one digit signals none.
    """
    text = stage_input_text
    if CARRY in text:
        prev, _, rest = text.partition(CARRY)
        if not 1 <= len(prev) <= 2 or not prev.isdigit():
            raise ValueError(f"malformed stage input {text!r}: bad prefix before {CARRY!r}")
        if not 1 <= len(rest) <= 2 or not rest.isdigit():
            raise ValueError(f"malformed stage input {text!r}: bad digits after {CARRY!r}")
        carry = 1 if len(prev) == 2 else 0
        return str(sum(ord(c) - 48 for c in rest) + carry)
    if len(text) != 2 or not text.isdigit():
        raise ValueError(f"malformed stage input {text!r}: expected two digits")
    return str((ord(text[0]) - 48) + (ord(text[1]) - 48))


def decompose_stages(a: str, b: str) -> list[tuple[str, str]]:
    """All (stage input text, stage target text) pairs for ``a + b``.

    Targets carry the trailing S; stage k's input embeds stage k-1's target
    digits, so the carry chain is explicit in the texts.
    """
    check_digit_string(a, "a")
    check_digit_string(b, "b")
    stages = []
    prev = ""
    for k, chunk in enumerate(stage_chunks(a, b)):
        if k == 0:
            inp = chunk
            carry = 0
        else:
            inp = prev + CARRY + chunk
            carry = 1 if len(prev) == 2 else 0
        prev = str(sum(ord(c) - 48 for c in chunk) + carry)
        stages.append((inp, prev + END))
    return stages


def collate(stage_outputs: list[str]) -> str:
    """Assemble the final answer from per-stage answer digits.

    Takes all digits of the last stage, then the last digit of each earlier
    stage in reverse stage order. A leading zero in a multi-digit result means
    the stage outputs violated the protocol, so it raises rather than strips.
    """
    if not stage_outputs:
        raise CollationError("empty stage list")
    for o in stage_outputs:
        if not 1 <= len(o) <= 2 or not o.isdigit():
            raise CollationError(f"stage output {o!r} is not one or two digits")
    parts = [stage_outputs[-1]]
    for o in stage_outputs[-2::-1]:
        parts.append(o[-1])
    answer = "".join(parts)
    if len(answer) > 1 and answer[0] == "0":
        raise CollationError(f"collated answer {answer[:8]!r}... has a leading zero")
    return answer


def protocol_answer(a: str, b: str) -> str:
    """``collate`` over the targets of ``decompose_stages`` — the staged route."""
    return collate([target[:-1] for _, target in decompose_stages(a, b)])
