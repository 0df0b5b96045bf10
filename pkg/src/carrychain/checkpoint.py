"""Self-describing binary checkpoints.

Layout, all little-endian:

* magic ``CCAT``, format version u32.
* model config as eight u32 scalars: vocab_size, d_model, n_heads, n_blocks,
  d_ffn, input_len, output_len, dropout rate in microunits (rate * 1e6,
  rounded — keeps the header all-u32 while round-tripping to six decimals).
* vocabulary: 14 length-prefixed (u32) UTF-8 symbol strings, in id order.
* metadata: seed u64, trained steps u64, final stage accuracy f64.
* parameter blocks in canonical order, each: name length u32 + name bytes,
  rank u32, dims u32 each, payload float32 row-major.
* optimizer-state presence flag u8; when 1: Adam step u64, then for each
  parameter its first- and second-moment blocks in the same block format
  (named ``adam_m.<name>`` / ``adam_v.<name>``).

Loading rejects wrong magic, version, or vocabulary; saving rejects
non-finite values. Parameters round-trip bit-exactly (float32).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from . import vocab
from .model import PARAM_NAMES, ModelConfig, ModelParams, param_shapes
from .training import OptimState

MAGIC = b"CCAT"
FORMAT_VERSION = 1
_DROPOUT_SCALE = 1_000_000


class CheckpointError(ValueError):
    """Unreadable, truncated, or incompatible checkpoint data."""


@dataclass(frozen=True)
class CheckpointMetadata:
    seed: int = 0
    steps: int = 0
    stage_accuracy: float = 0.0


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def _write_block(fh: BinaryIO, name: str, arr: np.ndarray) -> None:
    payload = np.ascontiguousarray(arr, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise CheckpointError(f"refusing to serialize non-finite values in {name!r}")
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", payload.ndim))
    fh.write(struct.pack(f"<{payload.ndim}I", *payload.shape))
    fh.write(payload.tobytes())


def _read_block(fh: BinaryIO, expected_name: str, expected_shape: tuple[int, ...]) -> np.ndarray:
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "block name length"))
    name = _read_exact(fh, name_len, "block name").decode("utf-8")
    if name != expected_name:
        raise CheckpointError(f"expected parameter block {expected_name!r}, found {name!r}")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"{name} rank"))
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, f"{name} dims"))
    if dims != expected_shape:
        raise CheckpointError(f"block {name!r} has shape {dims}, expected {expected_shape}")
    count = int(np.prod(dims)) if dims else 1
    raw = _read_exact(fh, 4 * count, f"{name} payload")
    return np.frombuffer(raw, dtype="<f4").reshape(dims).copy()


def save_checkpoint(
    path,
    params: ModelParams,
    metadata: CheckpointMetadata,
    optim_state: OptimState | None = None,
) -> None:
    cfg = params.config
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack(
            "<8I",
            cfg.vocab_size, cfg.d_model, cfg.n_heads, cfg.n_blocks,
            cfg.d_ffn, cfg.input_len, cfg.output_len,
            round(cfg.dropout_rate * _DROPOUT_SCALE),
        ))
        for symbol in vocab.SYMBOLS:
            encoded = symbol.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
        fh.write(struct.pack("<QQd", metadata.seed, metadata.steps, metadata.stage_accuracy))
        for name, arr in params.named_arrays():
            _write_block(fh, name, arr)
        if optim_state is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            fh.write(struct.pack("<Q", optim_state.step))
            for name in PARAM_NAMES:
                _write_block(fh, f"adam_m.{name}", optim_state.m[name])
                _write_block(fh, f"adam_v.{name}", optim_state.v[name])


def load_checkpoint(path) -> tuple[ModelParams, CheckpointMetadata, OptimState | None]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointError("bad magic: not a carrychain checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} (this build reads {FORMAT_VERSION})"
            )
        scalars = struct.unpack("<8I", _read_exact(fh, 32, "config"))
        cfg = ModelConfig(
            vocab_size=scalars[0], d_model=scalars[1], n_heads=scalars[2],
            n_blocks=scalars[3], d_ffn=scalars[4], input_len=scalars[5],
            output_len=scalars[6], dropout_rate=scalars[7] / _DROPOUT_SCALE,
        )
        symbols = []
        for _ in range(cfg.vocab_size):
            (n,) = struct.unpack("<I", _read_exact(fh, 4, "vocab entry length"))
            symbols.append(_read_exact(fh, n, "vocab entry").decode("utf-8"))
        if tuple(symbols) != vocab.SYMBOLS:
            raise CheckpointError("checkpoint vocabulary does not match this build's token table")
        seed, steps, acc = struct.unpack("<QQd", _read_exact(fh, 24, "metadata"))
        metadata = CheckpointMetadata(seed=seed, steps=steps, stage_accuracy=acc)

        shapes = param_shapes(cfg)
        arrays = {name: _read_block(fh, name, shapes[name]) for name in PARAM_NAMES}
        params = ModelParams(config=cfg, **arrays)

        (has_optim,) = struct.unpack("<B", _read_exact(fh, 1, "optimizer flag"))
        optim_state = None
        if has_optim:
            (adam_step,) = struct.unpack("<Q", _read_exact(fh, 8, "optimizer step"))
            m = {}
            v = {}
            for name in PARAM_NAMES:
                m[name] = _read_block(fh, f"adam_m.{name}", shapes[name])
                v[name] = _read_block(fh, f"adam_v.{name}", shapes[name])
            optim_state = OptimState(m=m, v=v, step=adam_step)
        return params, metadata, optim_state
