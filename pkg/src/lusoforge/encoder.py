"""Transformer encoder with disentangled content/position attention.

Attention scores are the sum of three per-head terms,

    A[i,j] = Qc_i · Kc_j  +  Qc_i · Kr_{bucket(i,j)}  +  Kc_j · Qr_{bucket(j,i)}

scaled by 1/sqrt(3 * d_head) because three dot products contribute. Qr and
Kr come from projecting a shared relative-position table P through the SAME
Wq/Wk used for content (no bias on the position path, so a zeroed table
contributes exactly nothing and the layer degrades to standard attention).

The first layer adds a 1-D convolution over the input embeddings to its
attention output before the residual. Masked-token prediction runs the final
hidden states through decoding layers whose query stream carries absolute
position embeddings, then projects onto the (tied) input embedding table.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from lusoforge import autodiff as ad
from lusoforge.autodiff import Tensor
from lusoforge.errors import ShapeError

NEG_BIAS = -1e9  # finite stand-in for -inf; keeps softmax NaN-free


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 4
    hidden_size: int = 128
    num_heads: int = 4
    ffn_size: int = 512
    vocab_size: int = 8192
    max_seq_len: int = 128
    relative_window: int = 32
    dropout_rate: float = 0.1
    emd_layers: int = 1
    conv_kernel_size: int = 3
    num_segments: int = 2
    layer_norm_eps: float = 1e-7

    def __post_init__(self):
        if self.hidden_size % self.num_heads != 0:
            raise ShapeError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        if self.relative_window < 1:
            raise ValueError("relative_window must be >= 1")
        if self.emd_layers < 1:
            raise ValueError("emd_layers must be >= 1")
        if self.conv_kernel_size % 2 != 1:
            raise ValueError("conv_kernel_size must be odd")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads


PRESETS: dict[str, EncoderConfig] = {
    "micro": EncoderConfig(
        num_layers=2, hidden_size=64, num_heads=4, ffn_size=256,
        vocab_size=256, max_seq_len=64, relative_window=16,
    ),
    "tiny": EncoderConfig(
        num_layers=4, hidden_size=128, num_heads=4, ffn_size=512,
        vocab_size=8192, max_seq_len=128, relative_window=32,
    ),
    # construction-only documentation of the reference scale; never trained here
    "xlarge": EncoderConfig(
        num_layers=24, hidden_size=1536, num_heads=24, ffn_size=6144,
        vocab_size=128000, max_seq_len=512, relative_window=256,
    ),
}


def preset(name: str, **overrides) -> EncoderConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    cfg = PRESETS[name]
    return replace(cfg, **overrides) if overrides else cfg


def relative_bucket(i: int, j: int, k: int) -> int:
    """Bucket index in [0, 2k) for query position i attending key position j."""
    d = i - j
    if d <= -k:
        return 0
    if d >= k:
        return 2 * k - 1
    return d + k


def bucket_matrix(seq_len: int, k: int) -> np.ndarray:
    """bucket_matrix[i, j] == relative_bucket(i, j, k), vectorized."""
    d = np.arange(seq_len)[:, None] - np.arange(seq_len)[None, :]
    return (np.clip(d, -k, k - 1) + k).astype(np.int64)


# ---------------------------------------------------------------------------
# parameters


def init_params(config: EncoderConfig, rng: np.random.Generator, dtype=np.float32) -> "OrderedDict[str, Tensor]":
    """Fresh parameter dict: normal(0, 0.02) matrices, zero biases, unit gains."""
    h, f = config.hidden_size, config.ffn_size
    p: OrderedDict[str, Tensor] = OrderedDict()

    def mat(name, shape):
        p[name] = Tensor(rng.normal(0.0, 0.02, size=shape), requires_grad=True, dtype=dtype)

    def zeros(name, shape):
        p[name] = Tensor(np.zeros(shape), requires_grad=True, dtype=dtype)

    def ones(name, shape):
        p[name] = Tensor(np.ones(shape), requires_grad=True, dtype=dtype)

    mat("embed.tokens", (config.vocab_size, h))
    mat("embed.segments", (config.num_segments, h))
    ones("embed.ln.gain", (h,))
    zeros("embed.ln.bias", (h,))
    mat("relpos.table", (2 * config.relative_window, h))
    mat("abspos.table", (config.max_seq_len, h))
    mat("conv.kernel", (config.conv_kernel_size, h, h))
    zeros("conv.bias", (h,))

    def block(prefix: str):
        for name in ("wq", "wk", "wv", "wo"):
            mat(f"{prefix}.attn.{name}", (h, h))
        for name in ("bq", "bk", "bv", "bo"):
            zeros(f"{prefix}.attn.{name}", (h,))
        ones(f"{prefix}.attn.ln.gain", (h,))
        zeros(f"{prefix}.attn.ln.bias", (h,))
        mat(f"{prefix}.ffn.w1", (h, f))
        zeros(f"{prefix}.ffn.b1", (f,))
        mat(f"{prefix}.ffn.w2", (f, h))
        zeros(f"{prefix}.ffn.b2", (h,))
        ones(f"{prefix}.ffn.ln.gain", (h,))
        zeros(f"{prefix}.ffn.ln.bias", (h,))

    for i in range(config.num_layers):
        block(f"layer{i}")
    for j in range(config.emd_layers):
        block(f"emd{j}")
    return p


# ---------------------------------------------------------------------------
# attention


def _split_heads(x: Tensor, num_heads: int) -> Tensor:
    b, s, h = x.shape
    return ad.transpose(ad.reshape(x, (b, s, num_heads, h // num_heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, nh, s, dh = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (b, s, nh * dh))


def _apply_mask(scores: Tensor, attn_mask: np.ndarray) -> Tensor:
    """Replace masked-column scores with NEG_BIAS instead of adding it:
    softmax is shift-invariant, so a purely additive bias would leave a
    fully-masked row attending by its raw content scores. Replacement makes
    that degenerate row exactly uniform (the documented fallback) and zeroes
    gradient flow into masked columns."""
    dtype = scores.data.dtype
    keep = attn_mask[:, None, None, :].astype(dtype)
    bias = ((1.0 - attn_mask[:, None, None, :]) * NEG_BIAS).astype(dtype)
    return ad.add(ad.mul(scores, Tensor(keep)), Tensor(bias))


def disentangled_scores(
    H: Tensor,
    P: Tensor,
    params: dict[str, Tensor],
    prefix: str,
    num_heads: int,
) -> tuple[Tensor, Tensor, Tensor]:
    """The three per-head score terms (c2c, c2p, p2c), unscaled.

    Shapes: H [B,S,h], P [2k,h]; each returned term is [B,heads,S,S].
    """
    b, s, h = H.shape
    two_k = P.shape[0]
    k = two_k // 2
    wq, bq = params[f"{prefix}.attn.wq"], params[f"{prefix}.attn.bq"]
    wk, bk = params[f"{prefix}.attn.wk"], params[f"{prefix}.attn.bk"]

    Q = _split_heads(ad.add(ad.matmul(H, wq), bq), num_heads)   # [B,nh,S,dh]
    K = _split_heads(ad.add(ad.matmul(H, wk), bk), num_heads)
    # position path shares Wq/Wk but takes no bias
    dh = h // num_heads
    Qr = ad.transpose(ad.reshape(ad.matmul(P, wq), (two_k, num_heads, dh)), (1, 0, 2))  # [nh,2k,dh]
    Kr = ad.transpose(ad.reshape(ad.matmul(P, wk), (two_k, num_heads, dh)), (1, 0, 2))

    buckets = bucket_matrix(s, k)

    c2c = ad.matmul(Q, ad.swap_last2(K))                        # [B,nh,S,S]
    # c2p: score[i,j] = Q_i . Kr_{bucket(i,j)}
    qkr = ad.matmul(Q, ad.swap_last2(ad.reshape(Kr, (1,) + Kr.shape)))  # [B,nh,S,2k]
    c2p = ad.gather_last(qkr, buckets)
    # p2c: score[i,j] = K_j . Qr_{bucket(j,i)}; gather per key row then flip
    kqr = ad.matmul(K, ad.swap_last2(ad.reshape(Qr, (1,) + Qr.shape)))  # [B,nh,S,2k]
    p2c = ad.swap_last2(ad.gather_last(kqr, buckets))
    return c2c, c2p, p2c


def disentangled_attention(
    H: Tensor,
    P: Tensor,
    attn_mask: np.ndarray,
    params: dict[str, Tensor],
    prefix: str,
    num_heads: int,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Multi-head disentangled attention.

    Returns (context [B,S,h] with heads merged, A [B,heads,S,S]) where A is
    the masked pre-softmax score tensor. Rows whose every key is masked fall
    back to a uniform average of V (every score replaced by the same finite
    floor), which is the documented degenerate behavior rather than an error.
    """
    b, s, h = H.shape
    dh = h // num_heads
    c2c, c2p, p2c = disentangled_scores(H, P, params, prefix, num_heads)
    scores = ad.scale(ad.add(ad.add(c2c, c2p), p2c), 1.0 / np.sqrt(3.0 * dh))
    A = _apply_mask(scores, attn_mask)
    probs = ad.softmax(A, axis=-1)
    probs = ad.dropout(probs, dropout_rate, rng)
    wv, bv = params[f"{prefix}.attn.wv"], params[f"{prefix}.attn.bv"]
    V = _split_heads(ad.add(ad.matmul(H, wv), bv), num_heads)
    ctx = _merge_heads(ad.matmul(probs, V))
    return ctx, A


def standard_attention(
    q_input: Tensor,
    kv_input: Tensor,
    attn_mask: np.ndarray,
    params: dict[str, Tensor],
    prefix: str,
    num_heads: int,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Content-only attention at temperature sqrt(d_head); query and key/value
    streams may differ (the decoding layers feed position-augmented queries)."""
    b, s, h = kv_input.shape
    dh = h // num_heads
    wq, bq = params[f"{prefix}.attn.wq"], params[f"{prefix}.attn.bq"]
    wk, bk = params[f"{prefix}.attn.wk"], params[f"{prefix}.attn.bk"]
    wv, bv = params[f"{prefix}.attn.wv"], params[f"{prefix}.attn.bv"]
    Q = _split_heads(ad.add(ad.matmul(q_input, wq), bq), num_heads)
    K = _split_heads(ad.add(ad.matmul(kv_input, wk), bk), num_heads)
    V = _split_heads(ad.add(ad.matmul(kv_input, wv), bv), num_heads)
    A = _apply_mask(ad.scale(ad.matmul(Q, ad.swap_last2(K)), 1.0 / np.sqrt(dh)), attn_mask)
    probs = ad.dropout(ad.softmax(A, axis=-1), dropout_rate, rng)
    return _merge_heads(ad.matmul(probs, V))


# ---------------------------------------------------------------------------
# blocks


def _ffn_sublayer(x: Tensor, params, prefix, eps, dropout_rate, rng) -> Tensor:
    inner = ad.gelu(ad.add(ad.matmul(x, params[f"{prefix}.ffn.w1"]), params[f"{prefix}.ffn.b1"]))
    out = ad.add(ad.matmul(inner, params[f"{prefix}.ffn.w2"]), params[f"{prefix}.ffn.b2"])
    out = ad.dropout(out, dropout_rate, rng)
    return ad.layer_norm(ad.add(x, out),
                         params[f"{prefix}.ffn.ln.gain"], params[f"{prefix}.ffn.ln.bias"], eps)


def _finish_attn_sublayer(residual: Tensor, raw: Tensor, params, prefix, eps, dropout_rate, rng) -> Tensor:
    out = ad.add(ad.matmul(raw, params[f"{prefix}.attn.wo"]), params[f"{prefix}.attn.bo"])
    out = ad.dropout(out, dropout_rate, rng)
    return ad.layer_norm(ad.add(residual, out),
                         params[f"{prefix}.attn.ln.gain"], params[f"{prefix}.attn.ln.bias"], eps)


def conv1d_same(x: Tensor, attn_mask: np.ndarray, kernel: Tensor, bias: Tensor) -> Tensor:
    """'Same'-padded 1-D convolution over the sequence axis.

    Padding positions are zeroed on the input so that a padded batch and its
    unpadded counterpart produce identical outputs at real positions.
    """
    ksize = kernel.shape[0]
    center = ksize // 2
    masked = ad.mul(x, Tensor(attn_mask[:, :, None].astype(x.data.dtype)))
    acc = None
    for j in range(ksize):
        term = ad.matmul(ad.shift_seq(masked, center - j), ad.take(kernel, j, 0))
        acc = term if acc is None else ad.add(acc, term)
    return ad.add(acc, bias)


def encoder_forward(
    params: dict[str, Tensor],
    config: EncoderConfig,
    ids: np.ndarray,
    segments: np.ndarray | None = None,
    attn_mask: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> list[Tensor]:
    """Run the full encoder stack; rng=None disables every dropout.

    Returns the list of hidden states: [embeddings, layer 1, ..., layer L],
    all shaped [B, S, hidden]. The last entry is the encoder output.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ShapeError(f"ids must be [batch, seq], got {ids.shape}")
    b, s = ids.shape
    if s > config.max_seq_len:
        raise ShapeError(f"sequence length {s} exceeds max_seq_len {config.max_seq_len}")
    if segments is None:
        segments = np.zeros_like(ids)
    if attn_mask is None:
        attn_mask = np.ones((b, s), dtype=np.float32)
    attn_mask = np.asarray(attn_mask, dtype=np.float32)

    drop = config.dropout_rate
    emb = ad.add(ad.embedding(params["embed.tokens"], ids),
                 ad.embedding(params["embed.segments"], np.asarray(segments, dtype=np.int64)))
    emb = ad.layer_norm(emb, params["embed.ln.gain"], params["embed.ln.bias"], config.layer_norm_eps)
    emb = ad.dropout(emb, drop, rng)

    hidden = [emb]
    P = params["relpos.table"]
    h = emb
    for i in range(config.num_layers):
        prefix = f"layer{i}"
        ctx, _ = disentangled_attention(h, P, attn_mask, params, prefix,
                                        config.num_heads, drop, rng)
        raw = ctx
        if i == 0:
            conv = conv1d_same(h, attn_mask, params["conv.kernel"], params["conv.bias"])
            # summed with the attention context ahead of the shared output
            # projection's residual/norm; wo applies to the attention path only
            att = ad.add(ad.matmul(raw, params[f"{prefix}.attn.wo"]), params[f"{prefix}.attn.bo"])
            merged = ad.add(att, conv)
            merged = ad.dropout(merged, drop, rng)
            h = ad.layer_norm(ad.add(h, merged),
                              params[f"{prefix}.attn.ln.gain"], params[f"{prefix}.attn.ln.bias"],
                              config.layer_norm_eps)
        else:
            h = _finish_attn_sublayer(h, raw, params, prefix, config.layer_norm_eps, drop, rng)
        h = _ffn_sublayer(h, params, prefix, config.layer_norm_eps, drop, rng)
        hidden.append(h)
    return hidden


def enhanced_mask_decode(
    params: dict[str, Tensor],
    config: EncoderConfig,
    all_hidden: Sequence[Tensor],
    attn_mask: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Decoding layers whose Query carries absolute positions, then a
    vocabulary projection tied to the input embedding table.

    Returns MLM logits [B, S, vocab_size].
    """
    h = all_hidden[-1]
    b, s, _ = h.shape
    if attn_mask is None:
        attn_mask = np.ones((b, s), dtype=np.float32)
    drop = config.dropout_rate
    pos = ad.narrow(params["abspos.table"], 0, 0, s)
    for j in range(config.emd_layers):
        prefix = f"emd{j}"
        q_in = ad.add(h, pos)
        raw = standard_attention(q_in, h, attn_mask, params, prefix,
                                 config.num_heads, drop, rng)
        h = _finish_attn_sublayer(h, raw, params, prefix, config.layer_norm_eps, drop, rng)
        h = _ffn_sublayer(h, params, prefix, config.layer_norm_eps, drop, rng)
    # tied output projection: literally the embedding table, transposed in-graph
    return ad.matmul(h, ad.swap_last2(ad.reshape(params["embed.tokens"],
                                                 (1,) + params["embed.tokens"].shape)))


class DisentangledEncoder:
    """Config + parameters + the two forward entry points, bundled."""

    def __init__(self, config: EncoderConfig, params: dict[str, Tensor] | None = None,
                 seed: int = 0):
        self.config = config
        if params is None:
            params = init_params(config, np.random.default_rng(seed))
        self.params = params

    def forward(self, ids, segments=None, attn_mask=None, rng=None) -> list[Tensor]:
        return encoder_forward(self.params, self.config, ids, segments, attn_mask, rng)

    def mlm_logits(self, ids, segments=None, attn_mask=None, rng=None) -> Tensor:
        hidden = self.forward(ids, segments, attn_mask, rng)
        return enhanced_mask_decode(self.params, self.config, hidden, attn_mask, rng)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())
