"""Training probe: mirrors training.train()'s exact rng/loop discipline but adds
out-of-support diagnostics and periodic checkpoint snapshots. Dev tool only."""
import sys
import time

import numpy as np

from carrychain.checkpoint import CheckpointMetadata, save_checkpoint
from carrychain.instances import MixConfig, batch_arrays, enumerate_stage_space, sample_batch
from carrychain.model import ModelConfig, init_params
from carrychain.training import OptimConfig, OptimState, evaluate_stage_accuracy, train_step

SEED = int(sys.argv[1])
MAX_STEPS = int(sys.argv[2]) if len(sys.argv) > 2 else 60000
EVAL_EVERY = 250
SNAP_EVERY = 5000

model_config = ModelConfig()
optim_config = OptimConfig(seed=SEED, max_steps=MAX_STEPS, eval_every=EVAL_EVERY)
mix_config = MixConfig(second_type_fraction=0.5, seed=SEED)

# identical seeding to training.train()
root = np.random.SeedSequence(SEED)
init_seed, data_seed, dropout_seed = root.spawn(3)
params = init_params(model_config, init_seed)
state = OptimState.zeros_like(params)
data_rng = np.random.default_rng(data_seed)
dropout_rng = np.random.default_rng(dropout_seed)

space18 = enumerate_stage_space(18)
space19 = enumerate_stage_space(19)
rows19 = [(i, t) for i, t in space19 if i.startswith("19C")]

# out-of-training-support inputs: zero digit after C
reachable = set()
for d1 in range(10):
    for d2 in range(10):
        reachable.add(f"{d1}{d2}")
for a in range(100):
    for b in range(100):
        if max(a, b) < 10:
            continue
        s = a % 10 + b % 10
        digits = "".join(str(x // 10) for x in (a, b) if x >= 10)
        reachable.add(f"{s}C{digits}")
in_rows = [(i, t) for i, t in space18 if i in reachable]
out_rows = [(i, t) for i, t in space18 if i not in reachable]
print(f"seed={SEED} in-support={len(in_rows)} out-of-support={len(out_rows)}", flush=True)

streak = 0
t0 = time.perf_counter()
for step in range(1, MAX_STEPS + 1):
    batch = sample_batch(mix_config, optim_config.batch_size, data_rng)
    input_ids, target_ids = batch_arrays(batch)
    loss_value = train_step(params, state, optim_config, input_ids, target_ids, dropout_rng)
    if step % EVAL_EVERY == 0:
        r_all = evaluate_stage_accuracy(params, space18)
        r_in = evaluate_stage_accuracy(params, in_rows)
        r_out = evaluate_stage_accuracy(params, out_rows)
        r_19 = evaluate_stage_accuracy(params, rows19)
        dt = time.perf_counter() - t0
        print(
            f"step={step} loss={loss_value:.6f} acc={r_all.accuracy:.6f} "
            f"fails={len(r_all.failures)} in_fails={len(r_in.failures)} "
            f"out_fails={len(r_out.failures)} c19_fails={len(r_19.failures)} "
            f"wall={dt:.0f}s",
            flush=True,
        )
        if r_all.accuracy == 1.0:
            streak += 1
            if streak >= 3:
                print("CONVERGED", flush=True)
                save_checkpoint(
                    f"/root/pkg/.train-logs/probe-seed{SEED}-converged.ckpt", params,
                    CheckpointMetadata(seed=SEED, steps=step, stage_accuracy=1.0),
                )
                break
        else:
            streak = 0
    if step % SNAP_EVERY == 0:
        save_checkpoint(
            f"/root/pkg/.train-logs/probe-seed{SEED}-step{step}.ckpt", params,
            CheckpointMetadata(seed=SEED, steps=step, stage_accuracy=0.0),
        )
print("DONE", flush=True)
