"""Benchmark the two stage-decode backends: jitted kernel vs pure numpy.

Run:

    python benchmarks/bench_decode.py [--ckpt path] [--stages N] [--digits N]

Without a checkpoint it uses randomly initialized full-architecture weights;
random weights usually decode garbage, so stage throughput is measured on raw
token generation (malformed outputs are fine for timing). The end-to-end
addition benchmark needs a trained checkpoint to run meaningfully and is
skipped otherwise.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from carrychain import vocab
from carrychain.checkpoint import load_checkpoint
from carrychain.decode import (
    MalformedOutputError,
    _stage_tokens_numba,
    _stage_tokens_numpy,
    add_with_model,
    numba_available,
)
from carrychain.harness import random_operand
from carrychain.instances import enumerate_stage_space
from carrychain.model import ModelConfig, init_params


def _stage_inputs(n: int) -> list[np.ndarray]:
    space = enumerate_stage_space(19)
    texts = [inp for inp, _ in space]
    return [vocab.pad_input(vocab.encode(texts[i % len(texts)])) for i in range(n)]


def bench_stage_tokens(params, n_stages: int, repeats: int = 3) -> None:
    inputs = _stage_inputs(n_stages)
    backends = [("numpy", _stage_tokens_numpy)]
    if numba_available() and params.dtype == np.float32:
        _stage_tokens_numba(params, inputs[0])  # JIT warmup, excluded from timing
        backends.insert(0, ("numba", _stage_tokens_numba))
    results = {}
    for name, fn in backends:
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for ids in inputs:
                fn(params, ids)
            times.append(time.perf_counter() - t0)
        best = min(times)
        results[name] = n_stages / best
        print(f"  {name:>6}: {n_stages / best:>9.0f} stages/s "
              f"(best of {repeats}, mean {statistics.mean(times):.3f}s)")
    if "numba" in results:
        print(f"  speedup: x{results['numba'] / results['numpy']:.1f}")


def bench_addition(params, n_digits: int) -> None:
    rng = np.random.default_rng(0)
    a = random_operand(n_digits, rng)
    b = random_operand(n_digits, rng)
    for backend in ("numba", "numpy"):
        if backend == "numba" and not (numba_available() and params.dtype == np.float32):
            continue
        t0 = time.perf_counter()
        try:
            add_with_model(params, a, b, backend=backend, keep_trace=False)
            status = "ok"
        except MalformedOutputError:
            status = "malformed (untrained model?)"
        dt = time.perf_counter() - t0
        print(f"  {backend:>6}: {n_digits}-digit addition in {dt:.2f}s "
              f"({n_digits / dt:.0f} digits/s) [{status}]")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ckpt", help="trained checkpoint (default: random weights)")
    parser.add_argument("--stages", type=int, default=4000, help="stage decodes per backend")
    parser.add_argument("--digits", type=int, default=20_000,
                        help="operand length for the end-to-end benchmark")
    args = parser.parse_args()

    if args.ckpt:
        params, metadata, _ = load_checkpoint(args.ckpt)
        print(f"loaded {args.ckpt} (steps={metadata.steps}, "
              f"stage_acc={metadata.stage_accuracy:.4f})")
    else:
        params = init_params(ModelConfig(), seed=0)
        print("using random weights (pass --ckpt for a trained model)")
    if not numba_available():
        print("numba unavailable: benchmarking the numpy path only")

    print(f"stage decode throughput ({args.stages} stages):")
    bench_stage_tokens(params, args.stages)
    if args.ckpt:
        print(f"end-to-end addition ({args.digits} digits):")
        bench_addition(params, args.digits)


if __name__ == "__main__":
    main()
