"""carrychain: a tiny decoder-only transformer that adds arbitrarily long
integers stage by stage, trained only on two-digit examples.

The staged protocol feeds each stage's output (whose digit count carries the
carry signal) into the next stage's input; collating the stage outputs yields
the full sum. Everything the model does is checked against an exact
arbitrary-precision school-addition oracle.
"""
from .adder import add_digit_strings, collate, decompose_stages, stage_answer
from .decode import add_with_model, generate_stage, verify_addition
from .harness import EvalSpec, run_eval
from .instances import MixConfig, enumerate_stage_space
from .model import ModelConfig, ModelParams, init_params
from .training import OptimConfig, evaluate_stage_accuracy, train

__all__ = [
    "add_digit_strings", "collate", "decompose_stages", "stage_answer",
    "add_with_model", "generate_stage", "verify_addition",
    "EvalSpec", "run_eval",
    "MixConfig", "enumerate_stage_space",
    "ModelConfig", "ModelParams", "init_params",
    "OptimConfig", "evaluate_stage_accuracy", "train",
]

__version__ = "0.1.0"
