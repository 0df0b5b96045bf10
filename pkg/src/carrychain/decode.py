"""Stage-by-stage inference: drive the model right to left over an addition.

Each stage greedy-decodes one sum (two digits plus any chained carry); the
model's own previous output — including its digit count, which is the carry
signal — feeds the next stage's input. The final answer is collated from the
stage outputs exactly as the model-free protocol does.

The inner decode has two interchangeable backends: a jitted kernel (default)
and a pure-numpy path, selected per call or globally via the
``CARRYCHAIN_NO_NUMBA`` environment variable.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels, vocab
from .adder import CollationError, add_digit_strings, check_digit_string, collate, stage_chunks
from .model import ModelParams, forward, sinusoidal_encoding
from .vocab import CARRY, END, END_ID, OUTPUT_START_ID

NUMBA_ENV_FLAG = "CARRYCHAIN_NO_NUMBA"


class MalformedOutputError(RuntimeError):
    """The model produced a stage output the protocol cannot use.

    Signals a model failure, not a crash; carries the partial trace when the
    failure happened mid-addition.
    """

    def __init__(self, message: str, stage_input: str | None = None,
                 trace: "GenerationTrace | None" = None):
        super().__init__(message)
        self.stage_input = stage_input
        self.trace = trace


@dataclass
class StageOutput:
    text: str  # decoded digits, terminator excluded
    terminated: bool


@dataclass
class GenerationTrace:
    stages: list[tuple[str, str]] = field(default_factory=list)  # (input, S-terminated output)
    final_answer: str = ""

    def render(self) -> str:
        lines = [f"{k}) INPUT: {inp} OUTPUTS: {out}" for k, (inp, out) in enumerate(self.stages, 1)]
        lines.append(f"Final answer: {self.final_answer}")
        return "\n".join(lines)


@dataclass
class VerificationReport:
    a: str
    b: str
    predicted: str | None
    expected: str
    match: bool
    error: str | None = None


def numba_available() -> bool:
    return _kernels.HAVE_NUMBA


def default_backend() -> str:
    if os.environ.get(NUMBA_ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on"):
        return "numpy"
    return "numba" if _kernels.HAVE_NUMBA else "numpy"


def _resolve_backend(backend: str | None, params: ModelParams) -> str:
    resolved = backend if backend is not None else default_backend()
    if resolved not in ("numba", "numpy"):
        raise ValueError(f"unknown decode backend {resolved!r}")
    if resolved == "numba" and (not _kernels.HAVE_NUMBA or params.dtype != np.float32):
        resolved = "numpy"  # kernel is float32-only
    return resolved


_PE_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _cached_pe(seq_len: int, d_model: int) -> np.ndarray:
    key = (seq_len, d_model)
    pe = _PE_CACHE.get(key)
    if pe is None:
        pe = sinusoidal_encoding(seq_len, d_model, np.float32)
        _PE_CACHE[key] = pe
    return pe


def _stage_tokens_numba(params: ModelParams, input_ids: np.ndarray) -> np.ndarray:
    cfg = params.config
    tokens, count = _kernels.decode_stage_tokens(
        input_ids,
        _cached_pe(cfg.seq_len, cfg.d_model),
        params.embed,
        params.ln1_g, params.ln1_b, params.wq, params.wk, params.wv, params.wo,
        params.ln2_g, params.ln2_b, params.w1, params.b1, params.w2, params.b2,
        params.lnf_g, params.lnf_b, params.wout,
        cfg.n_heads,
        OUTPUT_START_ID,
        END_ID,
        cfg.output_len,
    )
    return tokens[:count]


def _stage_tokens_numpy(params: ModelParams, input_ids: np.ndarray) -> np.ndarray:
    cfg = params.config
    prefix = [OUTPUT_START_ID]
    out: list[int] = []
    for _ in range(cfg.output_len):
        logits = forward(params, input_ids, np.array(prefix, dtype=np.int64))
        nxt = int(logits[-1].argmax())
        out.append(nxt)
        if nxt == END_ID:
            break
        prefix.append(nxt)
    return np.array(out, dtype=np.int64)


def generate_stage(params: ModelParams, stage_input_text: str, backend: str | None = None) -> StageOutput:
    """Greedy-decode one stage; returns the digits produced before the terminator.

    Raises :class:`MalformedOutputError` when the model emits a non-digit, no
    digits at all, or never terminates within the output budget.
    """
    input_ids = vocab.pad_input(vocab.encode(stage_input_text))
    if _resolve_backend(backend, params) == "numba":
        tokens = _stage_tokens_numba(params, input_ids)
    else:
        tokens = _stage_tokens_numpy(params, input_ids)
    text = vocab.decode(tokens)
    if not text.endswith(END):
        raise MalformedOutputError(
            f"stage {stage_input_text!r}: no terminator within "
            f"{params.config.output_len} tokens (got {text!r})",
            stage_input=stage_input_text,
        )
    digits = text[:-1]
    if not digits or not digits.isdigit():
        raise MalformedOutputError(
            f"stage {stage_input_text!r}: expected digits before the terminator, got {text!r}",
            stage_input=stage_input_text,
        )
    return StageOutput(text=digits, terminated=True)


def make_model_stage_fn(params: ModelParams, backend: str | None = None) -> Callable[[str], str]:
    """Stage function (input text -> answer digits) bound to a model."""
    resolved = _resolve_backend(backend, params)

    def stage_fn(stage_input_text: str) -> str:
        return generate_stage(params, stage_input_text, backend=resolved).text

    return stage_fn


def run_addition(
    stage_fn: Callable[[str], str],
    a: str,
    b: str,
    keep_trace: bool = True,
) -> tuple[str, GenerationTrace | None]:
    """Chain ``stage_fn`` over every digit position of ``a + b`` and collate.

    ``stage_fn`` may be a model (see :func:`make_model_stage_fn`) or the exact
    stage rule (``adder.stage_answer``), which isolates the chaining and
    collation logic from the model.
    """
    check_digit_string(a, "a")
    check_digit_string(b, "b")
    trace = GenerationTrace() if keep_trace else None
    outputs: list[str] = []
    prev = ""
    for k, chunk in enumerate(stage_chunks(a, b)):
        inp = chunk if k == 0 else prev + CARRY + chunk
        try:
            prev = stage_fn(inp)
        except MalformedOutputError as exc:
            exc.trace = trace
            raise
        outputs.append(prev)
        if trace is not None:
            trace.stages.append((inp, prev + END))
    try:
        answer = collate(outputs)
    except CollationError as exc:
        raise MalformedOutputError(f"collation failed: {exc}", trace=trace) from exc
    if trace is not None:
        trace.final_answer = answer
    return answer, trace


def add_with_model(
    params: ModelParams,
    a: str,
    b: str,
    backend: str | None = None,
    keep_trace: bool = True,
) -> tuple[str, GenerationTrace | None]:
    """Model-driven addition; returns the predicted digit string and its trace."""
    return run_addition(make_model_stage_fn(params, backend), a, b, keep_trace=keep_trace)


def verify_addition(params: ModelParams, a: str, b: str, backend: str | None = None) -> VerificationReport:
    """Compare the model's prediction against exact school addition."""
    expected = add_digit_strings(a, b)
    try:
        predicted, _ = add_with_model(params, a, b, backend=backend, keep_trace=False)
    except MalformedOutputError as exc:
        return VerificationReport(a=a, b=b, predicted=None, expected=expected,
                                  match=False, error=str(exc))
    return VerificationReport(a=a, b=b, predicted=predicted, expected=expected,
                              match=predicted == expected)
