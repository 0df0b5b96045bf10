"""Shared fixtures, most importantly the converged full-scale checkpoint.

Training the reference configuration takes a while, so the session fixture
caches the result under ``tests/.artifacts/``. Delete that directory (or set
``CARRYCHAIN_FORCE_RETRAIN=1``) to force a fresh training run; the acceptance
suite validates the cached model's stage-space accuracy either way, so a stale
or corrupt cache cannot fake a pass.
"""
from __future__ import annotations

import os
from pathlib import Path

import pytest

from carrychain.checkpoint import CheckpointError, CheckpointMetadata, load_checkpoint, save_checkpoint
from carrychain.instances import MixConfig
from carrychain.model import ModelConfig
from carrychain.training import OptimConfig, train

# The documented training seed: drives parameter init, batch sampling, and
# dropout for the reference run that the acceptance criteria pin.
TRAINING_SEED = 0

# The documented evaluation seed for the 1000-addition generalization run.
EVAL_SEED = 2024

ARTIFACTS_DIR = Path(__file__).parent / ".artifacts"
CHECKPOINT_PATH = ARTIFACTS_DIR / f"converged-seed{TRAINING_SEED}.ckpt"


def reference_configs() -> tuple[ModelConfig, OptimConfig, MixConfig]:
    model_config = ModelConfig()  # the reference architecture and dropout
    optim_config = OptimConfig(seed=TRAINING_SEED)  # reference lr/decay/batch
    mix_config = MixConfig(second_type_fraction=0.5, seed=TRAINING_SEED)
    return model_config, optim_config, mix_config


@pytest.fixture(scope="session")
def converged_checkpoint():
    """Parameters trained to convergence with the documented seed.

    Returns (params, metadata). Reuses the on-disk artifact when present and
    converged; otherwise trains from scratch (minutes on a desktop CPU).
    """
    force = os.environ.get("CARRYCHAIN_FORCE_RETRAIN", "") == "1"
    if CHECKPOINT_PATH.exists() and not force:
        try:
            params, metadata, _ = load_checkpoint(CHECKPOINT_PATH)
            if metadata.stage_accuracy == 1.0 and metadata.seed == TRAINING_SEED:
                return params, metadata
        except CheckpointError:
            pass  # fall through to retraining

    model_config, optim_config, mix_config = reference_configs()
    result = train(model_config, optim_config, mix_config, log=print)
    metadata = CheckpointMetadata(
        seed=TRAINING_SEED,
        steps=result.steps,
        stage_accuracy=result.final_stage_accuracy,
    )
    ARTIFACTS_DIR.mkdir(exist_ok=True)
    save_checkpoint(CHECKPOINT_PATH, result.params, metadata)
    if not result.converged:
        pytest.fail(
            f"training with seed {TRAINING_SEED} did not reach 100% stage accuracy "
            f"within {optim_config.max_steps} steps "
            f"(final accuracy {result.final_stage_accuracy:.6f})"
        )
    return result.params, metadata
