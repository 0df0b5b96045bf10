"""The decoder-only transformer: parameters, masked forward pass, loss, gradients.

The model consumes the concatenation of a 5-token stage input and an
output prefix that always starts with the newline token. Input positions
attend only to each other (they are given, so no causal order applies among
them and they must not see the output); output positions attend to the whole
input block plus their own causal past. Everything is plain numpy so the
backward pass below is the exact analytic gradient of ``loss ∘ forward``.

Per-block weights are stacked along a leading block axis, which keeps the
parameter set a flat list of named arrays for the optimizer, the checkpoint
format, and the jitted decode kernel alike.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .vocab import OUTPUT_START_ID, VOCAB_SIZE

LAYERNORM_EPS = 1e-5
_MASKED_SCORE = -1e30  # representable in float32; exp underflows to exactly 0


class BadPrefixError(ValueError):
    """Output prefix that does not start with the newline token."""


class NonFiniteLossError(FloatingPointError):
    """Loss or logits went non-finite during a training step."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    d_model: int = 64
    n_heads: int = 2
    n_blocks: int = 2
    d_ffn: int = 256
    dropout_rate: float = 0.2
    input_len: int = 5
    output_len: int = 3

    @property
    def seq_len(self) -> int:
        return self.input_len + self.output_len

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even for the sinusoidal encoding")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


# Canonical parameter order; the checkpoint format and optimizer state follow it.
PARAM_NAMES: tuple[str, ...] = (
    "embed",
    "ln1_g", "ln1_b", "wq", "wk", "wv", "wo",
    "ln2_g", "ln2_b", "w1", "b1", "w2", "b2",
    "lnf_g", "lnf_b", "wout",
)

# Normalization scales/offsets are exempt from weight decay.
NORM_PARAM_NAMES = frozenset({"ln1_g", "ln1_b", "ln2_g", "ln2_b", "lnf_g", "lnf_b"})


@dataclass
class ModelParams:
    config: ModelConfig
    embed: np.ndarray   # (V, D)
    ln1_g: np.ndarray   # (L, D)
    ln1_b: np.ndarray   # (L, D)
    wq: np.ndarray      # (L, D, D)
    wk: np.ndarray      # (L, D, D)
    wv: np.ndarray      # (L, D, D)
    wo: np.ndarray      # (L, D, D)
    ln2_g: np.ndarray   # (L, D)
    ln2_b: np.ndarray   # (L, D)
    w1: np.ndarray      # (L, D, F)
    b1: np.ndarray      # (L, F)
    w2: np.ndarray      # (L, F, D)
    b2: np.ndarray      # (L, D)
    lnf_g: np.ndarray   # (D,)
    lnf_b: np.ndarray   # (D,)
    wout: np.ndarray    # (D, V)

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    @property
    def dtype(self) -> np.dtype:
        return self.embed.dtype

    def copy(self) -> "ModelParams":
        return replace(self, **{name: arr.copy() for name, arr in self.named_arrays()})

    def astype(self, dtype) -> "ModelParams":
        return replace(self, **{name: arr.astype(dtype) for name, arr in self.named_arrays()})

    def num_parameters(self) -> int:
        return sum(arr.size for _, arr in self.named_arrays())


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    v, d, f, nl = config.vocab_size, config.d_model, config.d_ffn, config.n_blocks
    return {
        "embed": (v, d),
        "ln1_g": (nl, d), "ln1_b": (nl, d),
        "wq": (nl, d, d), "wk": (nl, d, d), "wv": (nl, d, d), "wo": (nl, d, d),
        "ln2_g": (nl, d), "ln2_b": (nl, d),
        "w1": (nl, d, f), "b1": (nl, f), "w2": (nl, f, d), "b2": (nl, d),
        "lnf_g": (d,), "lnf_b": (d,),
        "wout": (d, v),
    }


def init_params(config: ModelConfig, seed, dtype=np.float32) -> ModelParams:
    """Fresh parameters: weights ~ N(0, 1/d_model), norms at identity, biases zero."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / math.sqrt(config.d_model)
    shapes = param_shapes(config)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        if name in ("embed", "wq", "wk", "wv", "wo", "w1", "w2", "wout"):
            arrays[name] = rng.normal(0.0, scale, size=shape).astype(dtype)
        elif name in ("ln1_g", "ln2_g", "lnf_g"):
            arrays[name] = np.ones(shape, dtype=dtype)
        else:  # norm offsets and FFN biases
            arrays[name] = np.zeros(shape, dtype=dtype)
    return ModelParams(config=config, **arrays)


def sinusoidal_encoding(n_positions: int, d_model: int, dtype=np.float32) -> np.ndarray:
    """Fixed sin/cos position table over absolute positions 0..n_positions-1."""
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    freqs = 10000.0 ** (-np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    angles = pos * freqs
    pe = np.empty((n_positions, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe.astype(dtype)


def build_mask(input_len: int, prefix_len: int) -> np.ndarray:
    """Boolean (T, T) attention mask, True where query i may attend to key j.

    Input rows see the full input block and nothing else; output rows see the
    input block plus output positions up to and including their own.
    """
    if prefix_len < 1:
        raise ValueError("prefix_len must be >= 1")
    t = input_len + prefix_len
    j = np.arange(t)
    i = j[:, None]
    return (j[None, :] < input_len) | ((i >= input_len) & (j[None, :] <= i))


def _layernorm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    d = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    xhat = x - mu
    var = np.einsum("...d,...d->...", xhat, xhat)[..., None] / d
    inv = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    xhat *= inv
    out = xhat * g
    out += b
    return out, (xhat, inv)


def _layernorm_backward(dout: np.ndarray, g: np.ndarray, cache):
    xhat, inv = cache
    d = dout.shape[-1]
    flat_d, flat_x = dout.reshape(-1, d), xhat.reshape(-1, d)
    dg = np.einsum("nd,nd->d", flat_d, flat_x)
    db = flat_d.sum(axis=0)
    dxhat = dout * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = np.einsum("...d,...d->...", dxhat, xhat)[..., None] / d
    dxhat -= m1
    dxhat -= xhat * m2
    dxhat *= inv
    return dxhat, dg, db


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_inplace(x: np.ndarray) -> np.ndarray:
    x -= x.max(axis=-1, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=-1, keepdims=True)
    return x


def _dropout_mask(shape, rate: float, rng: np.random.Generator, dtype) -> np.ndarray:
    # Inverted dropout: the kept entries already carry the 1/(1-rate) scale.
    draw_dtype = np.float32 if dtype == np.float32 else np.float64
    keep = rng.random(shape, dtype=draw_dtype) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _forward(
    params: ModelParams,
    ids: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    want_cache: bool = False,
):
    """Batched forward over concatenated sequences ``ids`` (B, T).

    Returns logits for the output positions, (B, T - input_len, V), plus the
    intermediate cache when requested by the backward pass.
    """
    cfg = params.config
    dtype = params.dtype
    b, t = ids.shape
    prefix_len = t - cfg.input_len
    if not 1 <= prefix_len <= cfg.output_len:
        raise ValueError(f"sequence length {t} implies prefix length {prefix_len}, "
                         f"expected 1..{cfg.output_len} past the {cfg.input_len}-token input")
    drop = cfg.dropout_rate if train_mode else 0.0
    if drop > 0.0 and rng is None:
        raise ValueError("train_mode with dropout requires an rng")

    pe = sinusoidal_encoding(t, cfg.d_model, dtype)
    emb_scale = dtype.type(math.sqrt(cfg.d_model))
    x = params.embed[ids] * emb_scale + pe
    visible = build_mask(cfg.input_len, prefix_len)
    scale = dtype.type(1.0 / math.sqrt(cfg.head_dim))
    bt, d, nh, dh = b * t, cfg.d_model, cfg.n_heads, cfg.head_dim

    # Weight products run as flat (B*T, ·) GEMMs: numpy's batched 3-d matmul
    # path is several times slower for these shapes.
    def split(m2):  # (B*T, D) -> (B, H, T, dh)
        return m2.reshape(b, t, nh, dh).transpose(0, 2, 1, 3)

    blocks = []
    for l in range(cfg.n_blocks):
        u, ln1_cache = _layernorm(x, params.ln1_g[l], params.ln1_b[l])
        u2 = u.reshape(bt, d)
        q = split(u2 @ params.wq[l])
        k = split(u2 @ params.wk[l])
        v = split(u2 @ params.wv[l])
        scores = q @ k.transpose(0, 1, 3, 2)
        scores *= scale
        scores[:, :, ~visible] = dtype.type(_MASKED_SCORE)
        probs = _softmax_inplace(scores)
        if drop > 0.0:
            attn_mask = _dropout_mask(probs.shape, drop, rng, dtype)
            attn = probs * attn_mask
        else:
            attn_mask = None
            attn = probs
        ctx = _merge_heads(attn @ v)
        x_attn = (ctx.reshape(bt, d) @ params.wo[l]).reshape(b, t, d)
        x_attn += x

        w, ln2_cache = _layernorm(x_attn, params.ln2_g[l], params.ln2_b[l])
        h = w.reshape(bt, d) @ params.w1[l]
        h += params.b1[l]
        relu_mask = h > 0.0
        np.maximum(h, 0.0, out=h)
        if drop > 0.0:
            ffn_mask = _dropout_mask(h.shape, drop, rng, dtype)
            h *= ffn_mask
        else:
            ffn_mask = None
        x = (h @ params.w2[l]).reshape(b, t, d)
        x += params.b2[l]
        x += x_attn

        if want_cache:
            blocks.append({
                "u": u, "ln1": ln1_cache, "q": q, "k": k, "v": v,
                "probs": probs, "attn_mask": attn_mask, "attn": attn, "ctx": ctx,
                "x_attn": x_attn, "w": w, "ln2": ln2_cache, "relu_mask": relu_mask,
                "ffn_mask": ffn_mask, "h_drop": h,
            })

    y, lnf_cache = _layernorm(x, params.lnf_g, params.lnf_b)
    logits = (y.reshape(bt, d) @ params.wout).reshape(b, t, cfg.vocab_size)
    out_logits = logits[:, cfg.input_len:, :]
    if not want_cache:
        return out_logits, None
    cache = {"ids": ids, "emb_scale": emb_scale, "blocks": blocks, "y": y, "lnf": lnf_cache}
    return out_logits, cache


def _check_prefix(prefix_ids: np.ndarray) -> None:
    first = prefix_ids[..., 0]
    if np.any(first != OUTPUT_START_ID):
        raise BadPrefixError("output prefix must start with the newline token")


def forward(
    params: ModelParams,
    input_ids: np.ndarray,
    prefix_ids: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Logits for a single sequence: (prefix_len, vocab) given a 5-token input."""
    input_ids = np.asarray(input_ids, dtype=np.int64)
    prefix_ids = np.asarray(prefix_ids, dtype=np.int64)
    if input_ids.shape != (params.config.input_len,):
        raise ValueError(f"input must have exactly {params.config.input_len} tokens")
    _check_prefix(prefix_ids)
    ids = np.concatenate([input_ids, prefix_ids])[None, :]
    out, _ = _forward(params, ids, train_mode=train_mode, rng=rng)
    return out[0]


def loss(logits: np.ndarray, target_ids: np.ndarray) -> float:
    """Mean token-level cross-entropy, padding positions included."""
    logits = np.asarray(logits)
    target_ids = np.asarray(target_ids, dtype=np.int64)
    if logits.shape[:-1] != target_ids.shape:
        raise ValueError(f"logits shape {logits.shape} does not match targets {target_ids.shape}")
    m = logits.max(axis=-1)
    lse = m + np.log(np.exp(logits - m[..., None]).sum(axis=-1))
    picked = np.take_along_axis(logits, target_ids[..., None], axis=-1)[..., 0]
    return float((lse - picked).mean())


def teacher_prefix(target_ids: np.ndarray) -> np.ndarray:
    """Teacher-forcing prefix: newline, then the target shifted right by one."""
    target_ids = np.asarray(target_ids, dtype=np.int64)
    start = np.full(target_ids.shape[:-1] + (1,), OUTPUT_START_ID, dtype=np.int64)
    return np.concatenate([start, target_ids[..., :-1]], axis=-1)


def gradients(
    params: ModelParams,
    input_ids: np.ndarray,
    prefix_ids: np.ndarray,
    target_ids: np.ndarray,
    train_mode: bool = True,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Exact gradients of the mean batch loss for every parameter.

    One forward pass samples any dropout masks; the backward pass reuses the
    same masks, so the returned gradients differentiate exactly the loss that
    is returned.
    """
    cfg = params.config
    input_ids = np.atleast_2d(np.asarray(input_ids, dtype=np.int64))
    prefix_ids = np.atleast_2d(np.asarray(prefix_ids, dtype=np.int64))
    target_ids = np.atleast_2d(np.asarray(target_ids, dtype=np.int64))
    _check_prefix(prefix_ids)
    if prefix_ids.shape != target_ids.shape:
        raise ValueError("prefix and target shapes must match for teacher forcing")
    ids = np.concatenate([input_ids, prefix_ids], axis=1)
    bsz, t = ids.shape
    n_pos = target_ids.shape[1]

    out_logits, cache = _forward(params, ids, train_mode=train_mode, rng=rng, want_cache=True)
    loss_value = loss(out_logits, target_ids)
    if not np.isfinite(loss_value):
        raise NonFiniteLossError(f"non-finite loss: {loss_value}")

    grads = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
    d, nh, dh = cfg.d_model, cfg.n_heads, cfg.head_dim
    bt = bsz * t

    # Cross-entropy backward: (softmax - onehot) / (B * positions).
    dout = _softmax(out_logits)
    np.put_along_axis(dout, target_ids[..., None], np.take_along_axis(dout, target_ids[..., None], -1) - 1.0, -1)
    dout /= params.dtype.type(bsz * n_pos)
    dlogits = np.zeros((bsz, t, cfg.vocab_size), dtype=params.dtype)
    dlogits[:, cfg.input_len:, :] = dout
    dlogits2 = dlogits.reshape(bt, cfg.vocab_size)

    grads["wout"] = cache["y"].reshape(bt, d).T @ dlogits2
    dy = (dlogits2 @ params.wout.T).reshape(bsz, t, d)
    dx, grads["lnf_g"], grads["lnf_b"] = _layernorm_backward(dy, params.lnf_g, cache["lnf"])

    for l in range(cfg.n_blocks - 1, -1, -1):
        blk = cache["blocks"][l]
        # FFN sublayer: x = x_attn + dropout(relu(w @ w1 + b1)) @ w2 + b2
        df2 = dx.reshape(bt, d)
        grads["b2"][l] = df2.sum(axis=0)
        grads["w2"][l] = blk["h_drop"].T @ df2
        dpre = df2 @ params.w2[l].T
        if blk["ffn_mask"] is not None:
            dpre *= blk["ffn_mask"]
        dpre *= blk["relu_mask"]
        grads["b1"][l] = dpre.sum(axis=0)
        grads["w1"][l] = blk["w"].reshape(bt, d).T @ dpre
        dw = (dpre @ params.w1[l].T).reshape(bsz, t, d)
        dx_attn, grads["ln2_g"][l], grads["ln2_b"][l] = _layernorm_backward(dw, params.ln2_g[l], blk["ln2"])
        dx = dx + dx_attn

        # Attention sublayer: x_attn = x + merge(attn @ v) @ wo
        dao2 = dx.reshape(bt, d)
        grads["wo"][l] = blk["ctx"].reshape(bt, d).T @ dao2
        dctx = (dao2 @ params.wo[l].T).reshape(bsz, t, nh, dh).transpose(0, 2, 1, 3)
        dattn = dctx @ blk["v"].transpose(0, 1, 3, 2)
        dv = blk["attn"].transpose(0, 1, 3, 2) @ dctx
        if blk["attn_mask"] is not None:
            dattn *= blk["attn_mask"]
        probs = blk["probs"]
        # softmax backward, in place on dattn
        dattn -= np.einsum("bhij,bhij->bhi", dattn, probs)[..., None]
        dattn *= probs
        dattn *= params.dtype.type(1.0 / math.sqrt(dh))
        dq = dattn @ blk["k"]
        dk = dattn.transpose(0, 1, 3, 2) @ blk["q"]
        dq2 = _merge_heads(dq).reshape(bt, d)
        dk2 = _merge_heads(dk).reshape(bt, d)
        dv2 = _merge_heads(dv).reshape(bt, d)
        u2 = blk["u"].reshape(bt, d)
        grads["wq"][l] = u2.T @ dq2
        grads["wk"][l] = u2.T @ dk2
        grads["wv"][l] = u2.T @ dv2
        du = dq2 @ params.wq[l].T
        du += dk2 @ params.wk[l].T
        du += dv2 @ params.wv[l].T
        dx_res, grads["ln1_g"][l], grads["ln1_b"][l] = _layernorm_backward(
            du.reshape(bsz, t, d), params.ln1_g[l], blk["ln1"]
        )
        dx = dx + dx_res

    # Scatter-add into embedding rows as a one-hot GEMM (much faster than add.at).
    dx *= cache["emb_scale"]
    onehot = np.zeros((bt, cfg.vocab_size), dtype=params.dtype)
    onehot[np.arange(bt), ids.reshape(-1)] = 1.0
    grads["embed"] = onehot.T @ dx.reshape(bt, d)
    return loss_value, grads
