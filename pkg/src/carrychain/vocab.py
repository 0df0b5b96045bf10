"""The fixed 14-symbol vocabulary and the padding rules for stage inputs/targets.

Symbols, in id order: padding P, terminator S, the ten digits, the output-start
newline, and the carry marker C. The mapping is frozen; checkpoints embed it so
a saved model can never be decoded against a drifted table.
"""
from __future__ import annotations

import numpy as np

PAD = "P"
END = "S"
OUTPUT_START = "\n"
CARRY = "C"

SYMBOLS: tuple[str, ...] = (PAD, END) + tuple("0123456789") + (OUTPUT_START, CARRY)
VOCAB_SIZE = len(SYMBOLS)

PAD_ID = 0
END_ID = 1
OUTPUT_START_ID = 12
CARRY_ID = 13
DIGIT_ID_OFFSET = 2  # digit d <-> id d + 2

INPUT_LEN = 5
TARGET_LEN = 3

_ID_OF = {s: i for i, s in enumerate(SYMBOLS)}


class UnknownSymbolError(ValueError):
    """A character outside the 14-symbol vocabulary."""


class OutOfRangeIdError(ValueError):
    """A token id outside [0, 13]."""


class TooLongError(ValueError):
    """An unpadded sequence longer than its fixed padded length."""


def encode(text: str) -> np.ndarray:
    """Map a string over the vocabulary to an int64 id array, one id per character."""
    try:
        return np.array([_ID_OF[ch] for ch in text], dtype=np.int64)
    except KeyError as exc:
        raise UnknownSymbolError(f"character {exc.args[0]!r} is not in the vocabulary") from None


def decode(ids) -> str:
    """Inverse of :func:`encode`; accepts any iterable of integer ids."""
    chars = []
    for i in ids:
        i = int(i)
        if not 0 <= i < VOCAB_SIZE:
            raise OutOfRangeIdError(f"token id {i} is outside [0, {VOCAB_SIZE - 1}]")
        chars.append(SYMBOLS[i])
    return "".join(chars)


def digit_id(d: int) -> int:
    if not 0 <= d <= 9:
        raise ValueError(f"not a decimal digit: {d}")
    return d + DIGIT_ID_OFFSET


def _pad(ids, length: int, role: str) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise ValueError(f"{role} sequence must be a non-empty 1-d id sequence")
    if ids.size > length:
        raise TooLongError(f"{role} sequence of length {ids.size} exceeds the fixed length {length}")
    out = np.full(length, PAD_ID, dtype=np.int64)
    out[: ids.size] = ids
    return out


def pad_input(ids) -> np.ndarray:
    """Append P ids until the input reaches length 5; full inputs pass through."""
    return _pad(ids, INPUT_LEN, "input")


def pad_target(ids) -> np.ndarray:
    """Append P ids until the target reaches length 3; full targets pass through."""
    return _pad(ids, TARGET_LEN, "target")
