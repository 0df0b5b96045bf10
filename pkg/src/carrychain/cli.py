"""Command-line entry point.

Exit codes are the machine contract: 0 success/match, 1 semantic failure
(prediction mismatch, non-convergence, imperfect accuracy), 2 usage error
(bad flags, malformed digit strings).
"""
from __future__ import annotations

import argparse
import sys
import time

from . import adder
from .checkpoint import CheckpointError, CheckpointMetadata, load_checkpoint, save_checkpoint
from .decode import add_with_model
from .harness import EvalSpec, random_operand, report_render, run_eval, write_records
from .instances import MixConfig, enumerate_stage_space
from .model import ModelConfig
from .training import OptimConfig, evaluate_stage_accuracy, train

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carrychain",
        description="Train, run, and verify a tiny transformer that adds "
                    "arbitrarily long integers stage by stage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--steps", type=int, default=200_000, help="max training steps")
    p_train.add_argument("--batch-size", type=int, default=512)
    p_train.add_argument("--lr", type=float, default=5e-4)
    p_train.add_argument("--weight-decay", type=float, default=0.01)
    p_train.add_argument("--second-type-frac", type=float, default=0.5)
    p_train.add_argument("--eval-every", type=int, default=500)

    p_add = sub.add_parser("add", help="add two numbers with a trained model")
    p_add.add_argument("--ckpt", required=True)
    p_add.add_argument("--a", required=True)
    p_add.add_argument("--b", required=True)
    p_add.add_argument("--trace", action="store_true", help="print the per-stage trace")

    p_eval = sub.add_parser("eval", help="verify many random additions against the oracle")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--cases", type=int, required=True)
    p_eval.add_argument("--min-digits", type=int, default=1)
    p_eval.add_argument("--max-digits", type=int, default=1000)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--report", help="also write per-case records to this path")

    p_stage = sub.add_parser("stage-eval", help="exhaustive accuracy over the stage-input space")
    p_stage.add_argument("--ckpt", required=True)
    p_stage.add_argument("--include-19", action="store_true",
                         help="include the 19C inputs that never occur in training data")

    p_oracle = sub.add_parser("oracle-check", help="model-free protocol self-test")
    p_oracle.add_argument("--exhaustive-upto", type=int, default=1000,
                          help="check all ordered operand pairs below this value")
    p_oracle.add_argument("--random-pairs", type=int, default=10_000)
    p_oracle.add_argument("--max-digits", type=int, default=2000)
    p_oracle.add_argument("--seed", type=int, default=0)
    return parser


def _check_operand(value: str, name: str) -> str:
    try:
        return adder.check_digit_string(value, name)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


class _UsageError(Exception):
    pass


def _cmd_train(args) -> int:
    model_config = ModelConfig()
    optim_config = OptimConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        max_steps=args.steps,
        eval_every=args.eval_every,
        seed=args.seed,
    )
    mix_config = MixConfig(second_type_fraction=args.second_type_frac, seed=args.seed)
    result = train(model_config, optim_config, mix_config, log=print)
    metadata = CheckpointMetadata(
        seed=args.seed, steps=result.steps, stage_accuracy=result.final_stage_accuracy
    )
    save_checkpoint(args.out, result.params, metadata)
    status = "converged" if result.converged else "DID NOT CONVERGE"
    print(f"{status}: steps={result.steps} stage_acc={result.final_stage_accuracy:.6f} "
          f"wall={result.wall_time:.1f}s -> {args.out}")
    return EXIT_OK if result.converged else EXIT_FAILURE


def _cmd_add(args) -> int:
    a = _check_operand(args.a, "--a")
    b = _check_operand(args.b, "--b")
    params, _, _ = load_checkpoint(args.ckpt)
    expected = adder.add_digit_strings(a, b)
    try:
        predicted, trace = add_with_model(params, a, b, keep_trace=args.trace)
    except Exception as exc:  # malformed model output is a semantic failure
        print(f"model failed: {exc}")
        print(f"expected : {expected}")
        return EXIT_FAILURE
    if args.trace and trace is not None:
        print(trace.render())
    else:
        print(predicted)
    if predicted == expected:
        return EXIT_OK
    print(f"MISMATCH against oracle: expected {expected}")
    return EXIT_FAILURE


def _cmd_eval(args) -> int:
    params, _, _ = load_checkpoint(args.ckpt)
    spec = EvalSpec(num_cases=args.cases, min_digits=args.min_digits,
                    max_digits=args.max_digits, seed=args.seed)
    report = run_eval(spec, params)
    print(report_render(report))
    if args.report:
        write_records(report, args.report)
    return EXIT_OK if report.accuracy == 1.0 else EXIT_FAILURE


def _cmd_stage_eval(args) -> int:
    params, _, _ = load_checkpoint(args.ckpt)
    space = enumerate_stage_space(19 if args.include_19 else 18)
    result = evaluate_stage_accuracy(params, space)
    print(f"stage accuracy: {result.n_correct}/{result.total} = {result.accuracy:.6f}")
    if args.include_19:
        rows19 = [(i, e) for i, e in space if i.startswith("19C")]
        fails19 = {i for i, _, _ in result.failures}
        ok19 = sum(1 for i, _ in rows19 if i not in fails19)
        print(f"19C inputs (outside training support): {ok19}/{len(rows19)}")
    for inp, expected, got in result.failures:
        print(f"FAIL input={inp!r} expected={expected!r} got={got!r}")
    return EXIT_OK if result.accuracy == 1.0 else EXIT_FAILURE


def _cmd_oracle_check(args) -> int:
    import numpy as np

    failures = 0
    checked = 0
    t0 = time.perf_counter()
    for a_val in range(args.exhaustive_upto):
        a = str(a_val)
        for b_val in range(args.exhaustive_upto):
            b = str(b_val)
            if adder.protocol_answer(a, b) != adder.add_digit_strings(a, b):
                failures += 1
                if failures <= 10:
                    print(f"FAIL exhaustive: {a}+{b}")
            checked += 1
    rng = np.random.default_rng(args.seed)
    for _ in range(args.random_pairs):
        a = random_operand(int(rng.integers(1, args.max_digits + 1)), rng)
        b = random_operand(int(rng.integers(1, args.max_digits + 1)), rng)
        if adder.protocol_answer(a, b) != adder.add_digit_strings(a, b):
            failures += 1
            if failures <= 10:
                print(f"FAIL random: {a}+{b}")
        checked += 1
    wall = time.perf_counter() - t0
    print(f"oracle-check: {checked} pairs, {failures} failures, {wall:.1f}s")
    return EXIT_OK if failures == 0 else EXIT_FAILURE


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    handlers = {
        "train": _cmd_train,
        "add": _cmd_add,
        "eval": _cmd_eval,
        "stage-eval": _cmd_stage_eval,
        "oracle-check": _cmd_oracle_check,
    }
    try:
        return handlers[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
