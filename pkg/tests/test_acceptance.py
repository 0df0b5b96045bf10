"""Acceptance suite: one test per criterion, each printing a PASS line.

Criteria 2, 3, and 6-9 exercise the converged reference checkpoint from
``conftest.converged_checkpoint`` (training it on first use); the rest are
model-free or use tiny configurations and run in seconds.
"""
from __future__ import annotations

import time

import numpy as np

from carrychain import adder, vocab
from carrychain.cli import EXIT_OK, main
from carrychain.decode import run_addition, verify_addition
from carrychain.harness import EvalSpec, run_eval
from carrychain.instances import enumerate_stage_space
from carrychain.model import (
    ModelConfig,
    _forward,
    forward,
    gradients,
    init_params,
    loss,
    teacher_prefix,
)
from carrychain.training import evaluate_stage_accuracy

from conftest import CHECKPOINT_PATH, EVAL_SEED, TRAINING_SEED

PAPER_X = "89675627969177656514819490691831725109908874980671"
PAPER_Y = "32029996942446258125998499183326035828805968783222"
PAPER_SUM = "121705624911623914640817989875157760938714843763893"

TRACE_65785 = [("55", "10S"), ("10C86", "15S"), ("15C77", "15S"), ("15C58", "14S"), ("14C6", "7S")]
TRACE_9582 = [("21", "3S"), ("3C86", "14S"), ("14C52", "8S"), ("8C99", "18S")]


def _pass(criterion: int, name: str) -> None:
    print(f"ACCEPTANCE {criterion} ({name}): PASS")


def test_criterion_1_protocol_oracle_equivalence(capsys):
    code = main(["oracle-check", "--exhaustive-upto", "1000",
                 "--random-pairs", "10000", "--max-digits", "2000", "--seed", "0"])
    out = capsys.readouterr().out
    assert code == EXIT_OK, out
    assert "0 failures" in out
    with capsys.disabled():
        _pass(1, "protocol-oracle equivalence, 10^6 exhaustive + 10^4 random pairs")


def test_criterion_4_gradient_correctness():
    cfg = ModelConfig(d_model=8, n_heads=2, n_blocks=1, d_ffn=16, dropout_rate=0.0)
    params = init_params(cfg, seed=11, dtype=np.float64)
    rng = np.random.default_rng(17)
    inputs = rng.integers(0, 14, size=(6, 5))
    targets = rng.integers(0, 14, size=(6, 3))
    prefix = teacher_prefix(targets)
    _, grads = gradients(params, inputs, prefix, targets, train_mode=False)

    ids = np.concatenate([inputs, prefix], axis=1)

    def batch_loss() -> float:
        out, _ = _forward(params, ids)
        return loss(out, targets)

    eps = 1e-5
    probe_rng = np.random.default_rng(23)
    probed = 0
    worst = 0.0
    names = [name for name, _ in params.named_arrays()]
    while probed < 200:
        name = names[probed % len(names)]
        flat = getattr(params, name).reshape(-1)
        i = int(probe_rng.integers(flat.size))
        orig = flat[i]
        flat[i] = orig + eps
        lp = batch_loss()
        flat[i] = orig - eps
        lm = batch_loss()
        flat[i] = orig
        fd = (lp - lm) / (2 * eps)
        an = grads[name].reshape(-1)[i]
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        worst = max(worst, rel)
        assert rel < 1e-4, (name, i, fd, an)
        probed += 1
    _pass(4, f"analytic vs central differences on {probed} parameters, worst rel {worst:.2e}")


def test_criterion_5_mask_soundness():
    cfg = ModelConfig(dropout_rate=0.0)
    rng = np.random.default_rng(31)
    trials = 0
    for seed in range(25):
        params = init_params(cfg, seed=seed)
        for _ in range(4):
            inp = rng.integers(0, 14, size=5)
            pre = np.array([vocab.OUTPUT_START_ID, *rng.integers(0, 14, size=2)])
            base = forward(params, inp, pre)
            # (a) logits at output position k ignore prefix positions > k
            for k in (0, 1):
                perturbed = pre.copy()
                perturbed[k + 1:] = rng.integers(0, 14, size=2 - k)
                out = forward(params, inp, perturbed)
                assert np.array_equal(out[: k + 1], base[: k + 1])
            # (b) first-output-position logits ignore all teacher-forced tokens
            alt = np.array([vocab.OUTPUT_START_ID, *rng.integers(0, 14, size=2)])
            out = forward(params, inp, alt)
            assert np.array_equal(out[0], base[0])
            trials += 1
    assert trials >= 100
    _pass(5, f"causality and no-leak perturbations, {trials} trials, exact equality")


def test_criterion_6_training_convergence(converged_checkpoint):
    params, metadata = converged_checkpoint
    assert metadata.seed == TRAINING_SEED
    assert metadata.steps <= 200_000
    assert metadata.stage_accuracy == 1.0
    # Re-verify the artifact rather than trusting its metadata.
    result = evaluate_stage_accuracy(params, enumerate_stage_space(18))
    assert result.total == 2190
    assert result.accuracy == 1.0, result.failures[:10]
    _pass(6, f"seed {TRAINING_SEED} reaches 2190/2190 stage accuracy in {metadata.steps} steps")


def test_criterion_2_paper_trace_fidelity(converged_checkpoint, capsys):
    # Exact-arithmetic stub route.
    for a, b, expected_stages, expected_answer in (
        ("65785", "8765", TRACE_65785, "74550"),
        ("9582", "9261", TRACE_9582, "18843"),
    ):
        answer, trace = run_addition(adder.stage_answer, a, b)
        assert answer == expected_answer
        assert trace.stages == expected_stages

    # Converged-model route, through the CLI trace renderer.
    for a, b, expected_stages, expected_answer in (
        ("65785", "8765", TRACE_65785, "74550"),
        ("9582", "9261", TRACE_9582, "18843"),
    ):
        code = main(["add", "--ckpt", str(CHECKPOINT_PATH), "--a", a, "--b", b, "--trace"])
        out = capsys.readouterr().out
        assert code == EXIT_OK, out
        lines = out.strip().splitlines()
        assert lines[-1] == f"Final answer: {expected_answer}"
        for k, (inp, stage_out) in enumerate(expected_stages, 1):
            assert lines[k - 1] == f"{k}) INPUT: {inp} OUTPUTS: {stage_out}"
    with capsys.disabled():
        _pass(2, "both worked traces reproduced by the stub and the trained model")


def test_criterion_3_fifty_digit_reproduction(converged_checkpoint):
    params, _ = converged_checkpoint
    report = verify_addition(params, PAPER_X, PAPER_Y)
    assert report.match
    assert report.predicted == PAPER_SUM
    _pass(3, "50-digit pair verified with the exact published sum")


def test_criterion_7_length_generalization(converged_checkpoint):
    params, _ = converged_checkpoint
    spec = EvalSpec(num_cases=1000, min_digits=1, max_digits=1000, seed=EVAL_SEED)
    report = run_eval(spec, params)
    failures = [
        f"a={c.a} b={c.b} predicted={c.predicted} expected={c.expected}"
        for c in report.failures
    ]
    assert report.accuracy == 1.0, "\n".join(failures[:5])
    _pass(7, f"1000/1000 additions up to 1000 digits exact (eval seed {EVAL_SEED}, "
             f"{report.wall_time:.0f}s)")


def test_criterion_8_out_of_support_stage_inputs(converged_checkpoint):
    params, _ = converged_checkpoint
    space = enumerate_stage_space(19)
    rows19 = [(inp, tgt) for inp, tgt in space if inp.startswith("19" + vocab.CARRY)]
    assert len(rows19) == 110
    result = evaluate_stage_accuracy(params, rows19)
    assert result.accuracy == 1.0, result.failures
    _pass(8, "110/110 on the 19C inputs never generable from two-digit training")


def test_criterion_9_three_hundred_thousand_digit_spot_check(converged_checkpoint):
    params, _ = converged_checkpoint
    rng = np.random.default_rng(EVAL_SEED)
    from carrychain.harness import random_operand

    a = random_operand(300_000, rng)
    b = random_operand(300_000, rng)
    t0 = time.perf_counter()
    report = verify_addition(params, a, b)
    wall = time.perf_counter() - t0
    assert report.match, (report.error, str(report.predicted)[:80], report.expected[:80])
    _pass(9, f"300000-digit addition exact in {wall:.1f}s")
