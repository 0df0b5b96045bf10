"""Jitted greedy stage decoder — the hot loop behind long additions.

A million-digit-scale addition runs one tiny forward pass per generated token,
which is pure per-call overhead for numpy. This kernel runs the whole
generate-until-terminator loop for one stage in compiled code. Float32 only;
other dtypes take the numpy path in :mod:`carrychain.decode`.
"""
from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency, but stay runnable
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        raise RuntimeError("numba is not available")


if HAVE_NUMBA:

    @njit(cache=True)
    def _layer_norm(x, g, b):
        n, d = x.shape
        out = np.empty((n, d), np.float32)
        for i in range(n):
            mu = np.float32(0.0)
            for c in range(d):
                mu += x[i, c]
            mu /= d
            var = np.float32(0.0)
            for c in range(d):
                diff = x[i, c] - mu
                var += diff * diff
            var /= d
            inv = np.float32(1.0) / np.sqrt(var + np.float32(1e-5))
            for c in range(d):
                out[i, c] = (x[i, c] - mu) * inv * g[c] + b[c]
        return out

    @njit(cache=True)
    def decode_stage_tokens(
        input_ids,
        pe,
        embed,
        ln1_g, ln1_b, wq, wk, wv, wo,
        ln2_g, ln2_b, w1, b1, w2, b2,
        lnf_g, lnf_b, wout,
        n_heads,
        start_id,
        end_id,
        max_new,
    ):
        """Greedy-decode up to ``max_new`` tokens after the start token.

        Returns (tokens, count); decoding stops once the terminator id is
        emitted. Attention visibility is the contiguous range [0, input_len-1]
        for input rows and [0, i] for output rows, which is exactly the
        prefix-visible mask.
        """
        in_len = input_ids.shape[0]
        d = embed.shape[1]
        n_blocks = wq.shape[0]
        dh = d // n_heads
        emb_scale = np.float32(math.sqrt(d))
        score_scale = np.float32(1.0 / math.sqrt(dh))

        seq = np.empty(in_len + max_new, np.int64)
        for i in range(in_len):
            seq[i] = input_ids[i]
        seq[in_len] = start_id
        out = np.zeros(max_new, np.int64)
        count = 0

        for step in range(max_new):
            length = in_len + 1 + step
            x = np.empty((length, d), np.float32)
            for i in range(length):
                tok = seq[i]
                for c in range(d):
                    x[i, c] = embed[tok, c] * emb_scale + pe[i, c]

            for blk in range(n_blocks):
                u = _layer_norm(x, ln1_g[blk], ln1_b[blk])
                q = np.dot(u, wq[blk])
                k = np.dot(u, wk[blk])
                v = np.dot(u, wv[blk])
                ctx = np.empty((length, d), np.float32)
                scores = np.empty(length, np.float32)
                for h in range(n_heads):
                    off = h * dh
                    for i in range(length):
                        visible = in_len - 1 if i < in_len else i
                        hi = np.float32(-1e30)
                        for j in range(visible + 1):
                            s = np.float32(0.0)
                            for c in range(dh):
                                s += q[i, off + c] * k[j, off + c]
                            s *= score_scale
                            scores[j] = s
                            if s > hi:
                                hi = s
                        z = np.float32(0.0)
                        for j in range(visible + 1):
                            e = np.exp(scores[j] - hi)
                            scores[j] = e
                            z += e
                        for c in range(dh):
                            acc = np.float32(0.0)
                            for j in range(visible + 1):
                                acc += scores[j] * v[j, off + c]
                            ctx[i, off + c] = acc / z
                x = x + np.dot(ctx, wo[blk])

                w = _layer_norm(x, ln2_g[blk], ln2_b[blk])
                hid = np.dot(w, w1[blk])
                f = hid.shape[1]
                for i in range(length):
                    for c in range(f):
                        val = hid[i, c] + b1[blk, c]
                        hid[i, c] = val if val > 0.0 else np.float32(0.0)
                ff = np.dot(hid, w2[blk])
                for i in range(length):
                    for c in range(d):
                        x[i, c] += ff[i, c] + b2[blk, c]

            y = _layer_norm(x, lnf_g, lnf_b)
            best_id = 0
            best_val = np.float32(-np.inf)
            for t in range(wout.shape[1]):
                s = np.float32(0.0)
                for c in range(d):
                    s += y[length - 1, c] * wout[c, t]
                if s > best_val:
                    best_val = s
                    best_id = t
            out[step] = best_id
            count += 1
            if best_id == end_id:
                break
            if step + 1 < max_new:
                seq[in_len + 1 + step] = best_id
        return out, count
