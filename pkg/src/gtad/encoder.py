"""Hierarchical context encoding: dilated convolutions interleaved with graph conv.

Level k applies an unpadded dilated convolution (rate 2^(k-1), kernel 2)
along time for every node, then a residual influence-propagation pass
across nodes at each retained timestep. Each level shortens the series
by (kernel-1) * rate, so the stack's receptive field doubles per level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .graphconv import MessageMLP, ip_conv, make_message_mlp
from .policy import AdjacencySample
from .tensor import Tensor, matmul, reshape, swapaxes, transpose


@dataclass
class EncoderConfig:
    levels: int = 3
    kernel: int = 2
    d_model: int = 128

    @property
    def dilations(self) -> tuple[int, ...]:
        return tuple(2**k for k in range(self.levels))

    @property
    def channels(self) -> tuple[int, ...]:
        base = max(1, self.d_model // 4)
        return tuple(base * 2**k for k in range(self.levels))

    def output_length(self, n: int) -> int:
        out = n - (self.kernel - 1) * sum(self.dilations)
        if out < 1:
            raise ShapeError(f"window of length {n} shorter than receptive field "
                             f"{(self.kernel - 1) * sum(self.dilations) + 1}")
        return out


@dataclass
class EncoderWeights:
    num_nodes: int
    cfg: EncoderConfig
    conv_w: list[Tensor] = field(default_factory=list)  # per level [C_out, C_in, K]
    conv_b: list[Tensor] = field(default_factory=list)  # per level [C_out, 1]
    mlps: list[MessageMLP] = field(default_factory=list)
    node_proj: Tensor | None = None  # [C_last, d_model]
    node_proj_b: Tensor | None = None
    fuse_w: Tensor | None = None  # [M * d_model, d_model]
    fuse_b: Tensor | None = None

    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.conv_w, self.conv_b):
            out += [w, b]
        for mlp in self.mlps:
            out += mlp.params()
        out += [self.node_proj, self.node_proj_b, self.fuse_w, self.fuse_b]
        return out


def make_encoder(num_nodes: int, cfg: EncoderConfig, gen: np.random.Generator) -> EncoderWeights:
    enc = EncoderWeights(num_nodes, cfg)
    c_in = 1
    for c_out in cfg.channels:
        s = np.sqrt(1.0 / (c_in * cfg.kernel))
        enc.conv_w.append(Tensor(gen.uniform(-s, s, (c_out, c_in, cfg.kernel)),
                                 requires_grad=True))
        enc.conv_b.append(Tensor(np.zeros(c_out), requires_grad=True))
        enc.mlps.append(make_message_mlp(c_out, gen))
        c_in = c_out
    d = cfg.d_model
    s = np.sqrt(1.0 / c_in)
    enc.node_proj = Tensor(gen.uniform(-s, s, (c_in, d)), requires_grad=True)
    enc.node_proj_b = Tensor(np.zeros(d), requires_grad=True)
    s = np.sqrt(1.0 / (num_nodes * d))
    enc.fuse_w = Tensor(gen.uniform(-s, s, (num_nodes * d, d)), requires_grad=True)
    enc.fuse_b = Tensor(np.zeros(d), requires_grad=True)
    return enc


def _conv_time_major(h: Tensor, w: Tensor, dilation: int) -> Tensor:
    """Dilated conv along the T axis of [..., T, M, C_in]; w is [C_out, C_in, K]."""
    k = w.shape[-1]
    t_out = h.shape[-3] - (k - 1) * dilation
    acc = None
    for kk in range(k):
        lo = kk * dilation
        term = matmul(h[..., lo:lo + t_out, :, :], transpose(w[:, :, kk]))
        acc = term if acc is None else acc + term
    return acc


def _encode_time_major(window: Tensor, weights: EncoderWeights,
                       adj: AdjacencySample | Tensor) -> Tensor:
    """Shared pipeline body producing [..., T', M, d_model]."""
    m = weights.num_nodes
    if window.shape[-2] != m:
        raise ShapeError(f"window has {window.shape[-2]} nodes, encoder expects {m}")
    cfg = weights.cfg
    cfg.output_length(window.shape[-1])  # validates receptive field
    h = swapaxes(window, -1, -2)  # [..., n, M]
    h = reshape(h, h.shape + (1,))  # one input channel per node
    for level in range(cfg.levels):
        h = _conv_time_major(h, weights.conv_w[level], cfg.dilations[level])
        h = h + weights.conv_b[level]
        h = h + ip_conv(h, adj, weights.mlps[level])
    return matmul(h, weights.node_proj) + weights.node_proj_b


def encode_window(window: Tensor, weights: EncoderWeights,
                  adj: AdjacencySample | Tensor) -> Tensor:
    """Encode [..., M, n] raw sensor windows into [..., M, T', d_model] embeddings."""
    return swapaxes(_encode_time_major(window, weights, adj), -3, -2)


def encode_tokens(window: Tensor, weights: EncoderWeights,
                  adj: AdjacencySample | Tensor) -> Tensor:
    """Encode and fuse in one pass: [..., M, n] windows to [..., T', d_model] tokens."""
    emb = _encode_time_major(window, weights, adj)  # [..., T', M, d]
    flat = reshape(emb, emb.shape[:-2] + (weights.num_nodes * weights.cfg.d_model,))
    return matmul(flat, weights.fuse_w) + weights.fuse_b


def fuse_tokens(emb: Tensor, weights: EncoderWeights) -> Tensor:
    """Flatten node embeddings per timestep into one token: [..., T', d_model]."""
    m = weights.num_nodes
    d = weights.cfg.d_model
    tm = swapaxes(emb, -3, -2)  # [..., T', M, d]
    flat = reshape(tm, tm.shape[:-2] + (m * d,))
    return matmul(flat, weights.fuse_w) + weights.fuse_b


def sinusoid_table(length: int, d: int) -> np.ndarray:
    """Fixed sin/cos positional signals, values in [-1, 1]."""
    pos = np.arange(length)[:, None].astype(np.float64)
    idx = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (idx // 2)) / d)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table


def positional_encode(x: Tensor) -> Tensor:
    """Add fixed sinusoidal position signals along the second-to-last axis."""
    t, d = x.shape[-2], x.shape[-1]
    return x + Tensor(sinusoid_table(t, d))
