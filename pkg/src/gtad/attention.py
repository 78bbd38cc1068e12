"""Attention variants: scaled dot-product heads, learned global alignment,
and a lightweight local convolution, mixed branch-wise along the embedding.

The global branch owns a trained m x m alignment table whose top-left
n x n block weights the values of any length-n sequence; its weights are
independent of the input tokens. Branch-wise mixing splits the embedding
columns into (dot-product | global | local-conv) and concatenates the
branch outputs back to full width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, concat, dropout, matmul, reshape, softmax, swapaxes

NEG_INF = -1e30  # additive mask value; finite so float64 stays NaN-free


@dataclass
class AttentionParams:
    """Multi-head projections; h heads of width d/h each."""

    d: int
    h: int
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor

    def params(self) -> list[Tensor]:
        return [self.w_q, self.w_k, self.w_v, self.w_o]


@dataclass
class GlobalAttentionParams:
    """Learned alignment S plus value/output projections."""

    d: int
    s: Tensor  # [m, m]
    w_v: Tensor  # [d, d]
    w_o: Tensor  # [d, d]

    @property
    def m(self) -> int:
        return self.s.shape[0]

    def params(self) -> list[Tensor]:
        return [self.s, self.w_v, self.w_o]


@dataclass
class BranchConfig:
    d1: int  # dot-product branch width
    d2: int  # global branch width
    dc: int  # local convolution branch width

    @property
    def d(self) -> int:
        return self.d1 + self.d2 + self.dc

    @staticmethod
    def split(d: int, h: int = 1) -> "BranchConfig":
        """Near-even three-way split; remainder columns go to the dot-product
        branch, whose width is then rounded up to a multiple of the head count."""
        base = d // 3
        d1 = base + d - 3 * base
        d1 = min(-(-d1 // h) * h, d)
        rest = d - d1
        d2 = rest - rest // 2
        return BranchConfig(d1=d1, d2=d2, dc=rest // 2)


@dataclass
class BranchParams:
    cfg: BranchConfig
    heads: AttentionParams | None
    glob: GlobalAttentionParams | None
    conv_kernel: Tensor | None  # [3] logits, softmax-normalized on use

    def params(self) -> list[Tensor]:
        out = []
        if self.heads is not None:
            out += self.heads.params()
        if self.glob is not None:
            out += self.glob.params()
        if self.conv_kernel is not None:
            out.append(self.conv_kernel)
        return out


def _uniform(gen: np.random.Generator, rows: int, cols: int) -> Tensor:
    s = np.sqrt(1.0 / rows)
    return Tensor(gen.uniform(-s, s, (rows, cols)), requires_grad=True)


def make_attention_params(d: int, h: int, gen: np.random.Generator) -> AttentionParams:
    if d % h != 0:
        raise ShapeError(f"head count {h} does not divide width {d}")
    return AttentionParams(d, h, _uniform(gen, d, d), _uniform(gen, d, d),
                           _uniform(gen, d, d), _uniform(gen, d, d))


def make_global_params(d: int, m: int, gen: np.random.Generator,
                       s_std: float = 0.02) -> GlobalAttentionParams:
    s = Tensor(gen.normal(0.0, s_std, (m, m)), requires_grad=True)
    return GlobalAttentionParams(d, s, _uniform(gen, d, d), _uniform(gen, d, d))


def make_branch_params(d: int, h: int, m: int, gen: np.random.Generator,
                       cfg: BranchConfig | None = None) -> BranchParams:
    cfg = cfg or BranchConfig.split(d, h)
    if cfg.d != d:
        raise ShapeError(f"branch widths {cfg} do not sum to {d}")
    heads = make_attention_params(cfg.d1, h, gen) if cfg.d1 else None
    glob = make_global_params(cfg.d2, m, gen) if cfg.d2 else None
    kernel = Tensor(np.zeros(3), requires_grad=True) if cfg.dc else None
    return BranchParams(cfg, heads, glob, kernel)


def causal_mask(n: int) -> np.ndarray:
    """Additive mask: position t may attend to positions <= t."""
    return np.triu(np.full((n, n), NEG_INF), k=1)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         mask: np.ndarray | None = None,
                         drop: tuple[float, np.random.Generator] | None = None) -> Tensor:
    """Softmax(Q K^T / sqrt(d_k)) V over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query width {q.shape[-1]} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key length {k.shape[-2]} != value length {v.shape[-2]}")
    scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    if mask is not None:
        scores = scores + Tensor(mask)
    weights = softmax(scores, axis=-1)
    if drop is not None:
        weights = dropout(weights, drop[0], drop[1])
    return matmul(weights, v)


def _split_heads(x: Tensor, h: int) -> Tensor:
    n, d = x.shape[-2], x.shape[-1]
    x = reshape(x, x.shape[:-1] + (h, d // h))  # [..., n, h, dk]
    return swapaxes(x, -3, -2)  # [..., h, n, dk]


def _merge_heads(x: Tensor) -> Tensor:
    x = swapaxes(x, -3, -2)  # [..., n, h, dk]
    return reshape(x, x.shape[:-2] + (x.shape[-2] * x.shape[-1],))


def multi_head(x: Tensor, p: AttentionParams,
               mask: np.ndarray | None = None,
               memory: Tensor | None = None,
               drop: tuple[float, np.random.Generator] | None = None) -> Tensor:
    """Multi-head attention; memory supplies keys/values for cross-attention."""
    if x.shape[-1] != p.d:
        raise ShapeError(f"input width {x.shape[-1]} != attention width {p.d}")
    src = memory if memory is not None else x
    q = _split_heads(matmul(x, p.w_q), p.h)
    k = _split_heads(matmul(src, p.w_k), p.h)
    v = _split_heads(matmul(src, p.w_v), p.h)
    out = scaled_dot_attention(q, k, v, mask=mask, drop=drop)
    return matmul(_merge_heads(out), p.w_o)


def global_attention(x: Tensor, p: GlobalAttentionParams,
                     mask: np.ndarray | None = None,
                     drop: tuple[float, np.random.Generator] | None = None) -> Tensor:
    """Softmax(S) V with input-independent weights; only values are projected."""
    n = x.shape[-2]
    if n > p.m:
        raise ShapeError(f"sequence length {n} exceeds alignment size {p.m}")
    block = p.s[0:n, 0:n]
    if mask is not None:
        block = block + Tensor(mask)
    weights = softmax(block, axis=-1)
    if drop is not None:
        weights = dropout(weights, drop[0], drop[1])
    v = matmul(x, p.w_v)
    return matmul(matmul(weights, v), p.w_o)


def local_conv_branch(x: Tensor, kernel_logits: Tensor, causal: bool = False) -> Tensor:
    """Depthwise width-3 sliding mix with a softmax-normalized shared kernel.

    Window offsets are (-1, 0, +1), or (-2, -1, 0) when causal. At sequence
    edges the kernel is renormalized over the in-range taps, so a (0, 1, 0)
    kernel is an exact identity and constant inputs pass through unchanged.
    """
    n = x.shape[-2]
    w = softmax(kernel_logits, axis=-1)
    offsets = (-2, -1, 0) if causal else (-1, 0, 1)

    def shifted(off: int) -> Tensor:
        if off == 0:
            return x
        take = max(n - abs(off), 0)
        pad = Tensor(np.zeros(x.shape[:-2] + (n - take, x.shape[-1])))
        if off < 0:  # contribution of x[t+off] at t: pad front
            return concat([pad, x[..., :take, :]], axis=-2)
        return concat([x[..., off:off + take, :], pad], axis=-2)

    def valid(off: int) -> np.ndarray:
        v = np.ones((n, 1))
        if off < 0:
            v[: min(-off, n)] = 0.0
        elif off > 0:
            v[max(n - off, 0):] = 0.0
        return v

    num = None
    den = None
    for k, off in enumerate(offsets):
        wk = reshape(w[k:k + 1], (1, 1))
        term = wk * shifted(off)
        scale = wk * Tensor(valid(off))
        num = term if num is None else num + term
        den = scale if den is None else den + scale
    return num / den


def branch_mix(x: Tensor, bp: BranchParams,
               mask: np.ndarray | None = None,
               causal: bool = False,
               drop: tuple[float, np.random.Generator] | None = None) -> Tensor:
    """Split columns into (dot | global | conv) branches and re-concatenate."""
    cfg = bp.cfg
    if x.shape[-1] != cfg.d:
        raise ShapeError(f"input width {x.shape[-1]} != branch widths {cfg.d}")
    outs = []
    if cfg.d1:
        outs.append(multi_head(x[..., 0:cfg.d1], bp.heads, mask=mask, drop=drop))
    if cfg.d2:
        outs.append(global_attention(x[..., cfg.d1:cfg.d1 + cfg.d2], bp.glob,
                                     mask=mask, drop=drop))
    if cfg.dc:
        outs.append(local_conv_branch(x[..., cfg.d1 + cfg.d2:], bp.conv_kernel,
                                      causal=causal))
    return outs[0] if len(outs) == 1 else concat(outs, axis=-1)


def complexity_report(attention_type: str, n: int, d: int, h: int, m: int,
                      d1: int, d2: int) -> tuple[int, int]:
    """Parameter and mult-add counts per attention module, evaluated literally."""
    if attention_type == "scaled_dot":
        return 4 * d * d, 4 * n * d * d + 2 * n * n * d
    if attention_type == "global":
        return m * m * h + 2 * d * d, 2 * n * d * d + n * n * d
    if attention_type == "branch":
        params = 4 * d1 * d1 + m * m * h + 2 * d2 * d2
        mult_adds = 4 * n * d1 * d1 + n * n * d1 + 2 * n * d2 * d2 + n * n * d
        return params, mult_adds
    raise ValueError(f"unknown attention type {attention_type!r}")
