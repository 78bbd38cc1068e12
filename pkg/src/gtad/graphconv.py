"""Influence-propagation graph convolution.

A node's update aggregates learned messages from its in-neighbors,
weighted by the sampled adjacency. Each message sees the receiver's
embedding, the sender-receiver difference (propagation delay signal),
and the sender-receiver sum (scale benchmark), concatenated and pushed
through a small MLP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .policy import AdjacencySample
from .tensor import Tensor, _from_op, concat, matmul, relu, reshape, tsum


@dataclass
class MessageMLP:
    """Two-layer perceptron mapping a 3*T concatenation back to T."""

    w1: Tensor  # [3T, H]
    b1: Tensor  # [H]
    w2: Tensor  # [H, T]
    b2: Tensor  # [T]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[1]

    def params(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]


def make_message_mlp(embed_dim: int, gen: np.random.Generator,
                     hidden: int | None = None) -> MessageMLP:
    """Uniform +-sqrt(1/fan_in) init; hidden width defaults to embed_dim."""
    h = hidden or embed_dim
    s1 = np.sqrt(1.0 / (3 * embed_dim))
    s2 = np.sqrt(1.0 / h)
    return MessageMLP(
        w1=Tensor(gen.uniform(-s1, s1, (3 * embed_dim, h)), requires_grad=True),
        b1=Tensor(np.zeros(h), requires_grad=True),
        w2=Tensor(gen.uniform(-s2, s2, (h, embed_dim)), requires_grad=True),
        b2=Tensor(np.zeros(embed_dim), requires_grad=True),
    )


def _mlp_apply(x: Tensor, mlp: MessageMLP) -> Tensor:
    h = relu(matmul(x, mlp.w1) + mlp.b1)
    return matmul(h, mlp.w2) + mlp.b2


def ip_message(x_i: Tensor, x_j: Tensor, mlp: MessageMLP) -> Tensor:
    """Message sent from node j to node i: MLP(x_i || x_j - x_i || x_i + x_j)."""
    if x_i.shape != x_j.shape:
        raise ShapeError(f"embedding length mismatch: {x_i.shape} vs {x_j.shape}")
    vector_case = x_i.ndim == 1
    if vector_case:
        x_i = reshape(x_i, (1, x_i.shape[0]))
        x_j = reshape(x_j, (1, x_j.shape[0]))
    cat = concat([x_i, x_j - x_i, x_i + x_j], axis=-1)
    out = _mlp_apply(cat, mlp)
    if vector_case:
        out = reshape(out, (out.shape[-1],))
    return out


def _pair_relu_aggregate(hi: Tensor, hj: Tensor, weights: Tensor) -> Tensor:
    """out[..., i, :] = sum_j weights[j, i] * relu(hi[..., i, :] + hj[..., j, :]).

    Fused kernel for the hot path: one [..., M, M, H] hidden tensor is
    materialized and retained for the backward pass, nothing larger, and
    the j-contractions run as batched matrix products.
    """
    m, hdim = hi.shape[-2], hi.shape[-1]
    hid = np.maximum(hi.data[..., :, None, :] + hj.data[..., None, :, :], 0.0)
    w_t = np.ascontiguousarray(weights.data.T)  # w_t[i, j] = weight of edge j -> i
    w_rows = w_t[:, None, :]  # [M, 1, M] broadcasts over leading batch dims
    out = np.matmul(w_rows, hid)[..., 0, :]  # contract j per destination row

    def bwd(g):
        mask = np.sign(hid)  # hid >= 0, so this is the relu indicator
        # dL/dhi factors: sum_j w[i,j] * mask[..., i, j, :] via the same GEMM
        g_hi = np.matmul(w_rows, mask)[..., 0, :] * g
        # dL/dhj needs mask * g broadcast over j before contracting over i
        mg = mask * g[..., :, None, :]
        g_hj = np.einsum("...ijh,ij->...jh", mg, w_t, optimize=True)
        g_w = np.einsum("bijh,bih->ij",
                        hid.reshape(-1, m, m, hdim), g.reshape(-1, m, hdim),
                        optimize=True).T
        return g_hi, g_hj, np.ascontiguousarray(g_w)

    return _from_op(out, (hi, hj, weights), bwd)


def ip_conv(nodes: Tensor, adj: AdjacencySample | Tensor, mlp: MessageMLP) -> Tensor:
    """Aggregate in-neighbor messages: out_i = sum_j adj[j, i] * message(x_i, x_j).

    nodes is [..., M, T]; leading axes are batch. The first MLP layer is
    applied in factored form (one projection per endpoint), the pairwise
    relu-and-sum runs as a fused kernel, and the second layer is applied
    after aggregation, which is exact because the weighted sum commutes
    with the linear output layer. Results match the literal per-pair
    ip_message evaluation to rounding.
    """
    weights = adj.weights if isinstance(adj, AdjacencySample) else adj
    m = nodes.shape[-2]
    if weights.shape != (m, m):
        raise ShapeError(f"adjacency {weights.shape} does not match {m} nodes")
    t = nodes.shape[-1]
    if mlp.w1.shape[0] != 3 * t:
        raise ShapeError(f"message MLP expects width {mlp.w1.shape[0] // 3}, nodes have {t}")

    # MLP(x_i || x_j - x_i || x_i + x_j) has first layer
    #   (Wa - Wb + Wc) x_i + (Wb + Wc) x_j + b1
    wa, wb, wc = mlp.w1[0:t, :], mlp.w1[t:2 * t, :], mlp.w1[2 * t:3 * t, :]
    hi = matmul(nodes, wa - wb + wc) + mlp.b1  # [..., M, H]
    hj = matmul(nodes, wb + wc)  # [..., M, H]
    agg = _pair_relu_aggregate(hi, hj, weights)
    # sum_j w_ji * (relu_ij @ W2 + b2) == agg @ W2 + indegree_i * b2
    indegree = reshape(tsum(weights, axis=0), (m, 1))
    return matmul(agg, mlp.w2) + indegree * mlp.b2


def ip_conv_reference(nodes: Tensor, adj: AdjacencySample | Tensor, mlp: MessageMLP) -> Tensor:
    """Literal per-pair aggregation; the oracle ip_conv is checked against."""
    weights = adj.weights if isinstance(adj, AdjacencySample) else adj
    if nodes.ndim != 2:
        raise ShapeError("reference path handles a single [M, T] embedding matrix")
    m = nodes.shape[0]
    rows = []
    for i in range(m):
        acc = None
        for j in range(m):
            w = weights[j:j + 1, i:i + 1]
            term = w * reshape(ip_message(nodes[i, :], nodes[j, :], mlp), (1, nodes.shape[1]))
            acc = term if acc is None else acc + term
        rows.append(acc)
    return concat(rows, axis=0)
