"""Learnable directed-connection policy over sensor nodes.

Each ordered pair (i, j) carries a two-way categorical (off/on) whose
on-probability pi1 is the chance that information flows from node i to
node j. Training draws relaxed samples by perturbing log-probabilities
with Gumbel noise and tempering with a softmax; evaluation thresholds
pi1 directly. Straight-through sampling feeds a discrete 0/1 graph
forward while gradients follow the relaxed sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, log_softmax, softmax, straight_through

GUMBEL_EPS = 1e-12


@dataclass
class ConnectionPolicy:
    """M x M x 2 table of unnormalized connection logits (diagonal unused)."""

    num_nodes: int
    logits: Tensor  # [M, M, 2], channel 0 = off, channel 1 = on

    def log_probs(self) -> Tensor:
        """Normalized (log pi0, log pi1) per pair; exp sums to 1 along the channel."""
        return log_softmax(self.logits, axis=-1)

    def pi1(self) -> np.ndarray:
        """Current on-probabilities as a plain array (no gradient)."""
        return softmax(self.logits.detach(), axis=-1).data[:, :, 1]


@dataclass
class PolicySample:
    """One relaxed draw: noise g, simplex sample z, and its temperature."""

    gumbel: Tensor  # [M, M, 2], never requires grad
    soft: Tensor  # [M, M, 2], rows on the 2-simplex
    temperature: float


@dataclass
class AdjacencySample:
    """Directed adjacency; weights[i, j] is the strength of edge i -> j."""

    weights: Tensor  # [M, M], zero diagonal
    hard: bool


def init_complete_graph(num_nodes: int, p_init: float = 0.9) -> ConnectionPolicy:
    """Start with every off-diagonal pair on with probability p_init."""
    if num_nodes < 2:
        raise ShapeError("graph learning needs at least 2 nodes")
    logits = np.empty((num_nodes, num_nodes, 2))
    logits[:, :, 0] = np.log(1.0 - p_init)
    logits[:, :, 1] = np.log(p_init)
    return ConnectionPolicy(num_nodes, Tensor(logits, requires_grad=True))


def sample_gumbel(gen: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    """i.i.d. standard Gumbel via inverse transform g = -log(-log u)."""
    u = np.clip(gen.random(shape), GUMBEL_EPS, 1.0 - GUMBEL_EPS)
    return Tensor(-np.log(-np.log(u)))


def gumbel_softmax_sample(
    policy: ConnectionPolicy, temperature: float, gen: np.random.Generator
) -> PolicySample:
    """Relaxed per-pair connection sample; gradients reach the logits only."""
    if temperature <= 0.0:
        raise ShapeError("temperature must be positive")
    g = sample_gumbel(gen, policy.logits.shape)
    z = softmax((policy.log_probs() + g) / temperature, axis=-1)
    return PolicySample(gumbel=g, soft=z, temperature=temperature)


def _offdiag_mask(m: int) -> np.ndarray:
    return 1.0 - np.eye(m)


def hard_sample(sample: PolicySample) -> AdjacencySample:
    """Project the relaxed sample to a 0/1 graph, straight-through backward.

    The forward value is the channel argmax (the exact Gumbel-Max draw,
    since softmax preserves the argmax at any temperature); the backward
    value is the relaxed sample's on-channel.
    """
    m = sample.soft.shape[0]
    onehot = (sample.soft.data[:, :, 1] > sample.soft.data[:, :, 0]).astype(np.float64)
    st = straight_through(sample.soft[:, :, 1], onehot)
    weights = st * Tensor(_offdiag_mask(m))
    return AdjacencySample(weights=weights, hard=True)


def soft_adjacency(sample: PolicySample) -> AdjacencySample:
    """Relaxed adjacency (on-channel weights), zero diagonal."""
    m = sample.soft.shape[0]
    return AdjacencySample(weights=sample.soft[:, :, 1] * Tensor(_offdiag_mask(m)), hard=False)


def sparsity_loss(policy: ConnectionPolicy) -> Tensor:
    """Sum of log pi1 over ordered off-diagonal pairs; minimizing prunes edges."""
    mask = Tensor(_offdiag_mask(policy.num_nodes))
    return (policy.log_probs()[:, :, 1] * mask).sum()


def extract_adjacency(policy: ConnectionPolicy, threshold: float = 0.5) -> AdjacencySample:
    """Deterministic evaluation-time graph: edge i -> j iff pi1 > threshold."""
    pi1 = policy.pi1()
    weights = (pi1 > threshold).astype(np.float64) * _offdiag_mask(policy.num_nodes)
    return AdjacencySample(weights=Tensor(weights), hard=True)


def complete_adjacency(num_nodes: int) -> AdjacencySample:
    """All-ones off-diagonal graph used during warm-up training."""
    return AdjacencySample(weights=Tensor(_offdiag_mask(num_nodes)), hard=True)


def edge_count(policy: ConnectionPolicy, threshold: float = 0.5) -> int:
    pi1 = policy.pi1() * _offdiag_mask(policy.num_nodes)
    return int((pi1 > threshold).sum())


def temperature_schedule(epoch: int, start: float = 1.0, decay: float = 0.9,
                         floor: float = 0.1) -> float:
    """Exponential anneal from start toward floor; epoch 0 returns start."""
    return max(floor, start * decay**epoch)


def export_edge_list(policy: ConnectionPolicy, path: str | Path, threshold: float = 0.5) -> int:
    """Write retained edges as 'src,dst,pi1' lines sorted by (src, dst)."""
    pi1 = policy.pi1()
    lines = []
    for i in range(policy.num_nodes):
        for j in range(policy.num_nodes):
            if i != j and pi1[i, j] > threshold:
                lines.append(f"{i},{j},{pi1[i, j]:.6f}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
    return len(lines)
