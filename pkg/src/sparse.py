"""
Sparse token selection
---------
Tokens are scored, the top k are gathered in their original order, the
Mamba block runs on the compact sequence and the outputs are scattered back:

    out = M^T Mamba(M x)

with M the k x L 0/1 selection matrix. Index choice is a hard routing
decision; the selected scores enter the branch through a straight-through
gate (value exactly 1) so the scorer still receives gradients.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError
from .log_config import LOGGER
from .nn import Linear, Module
from .ssm import MambaBlock
from .tensor import (
    Tensor,
    as_tensor,
    broadcast_to,
    clamp_min,
    gather,
    reshape,
    scatter,
    softmax,
    sqrt,
    straight_through_gate,
    tensor_sum,
)

FILL_MODES = ("zero", "residual")


@dataclass
class TokenScores:
    """Importance score per token, [L] or [S, L]"""

    gamma: Tensor

    @property
    def source_len(self) -> int:
        return self.gamma.shape[-1]


@dataclass
class SelectionMask:
    """Selected token positions, strictly increasing along the last axis"""

    source_len: int
    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        k = self.indices.shape[-1] if self.indices.ndim else 0
        if not 1 <= k <= self.source_len:
            raise ContractError(f"Selection of {k} tokens out of {self.source_len} is out of range.")
        if np.any(np.diff(self.indices, axis=-1) <= 0):
            raise ContractError("Selected token indices must be strictly increasing.")
        if self.indices.min() < 0 or self.indices.max() >= self.source_len:
            raise ContractError(f"Selected indices fall outside [0, {self.source_len}).")

    @property
    def k(self) -> int:
        return self.indices.shape[-1]

    @classmethod
    def full(cls, source_len: int) -> "SelectionMask":
        return cls(source_len, np.arange(source_len))

    def as_matrix(self) -> np.ndarray:
        """k x L (or S x k x L) 0/1 matrix M"""
        rows = self.indices.reshape(-1, self.k)
        matrix = np.zeros((len(rows), self.k, self.source_len))
        for row, chosen in zip(matrix, rows):
            row[np.arange(self.k), chosen] = 1.0
        return matrix.reshape(self.indices.shape + (self.source_len,))


def default_budget(token_count: int, fraction: float) -> int:
    return max(1, math.ceil(token_count * fraction))


class AttentionScorer(Module):
    """
    gamma_i = mean over heads h and keys j of q_{h,i} . k_{h,j} / sqrt(d_k).

    The mean over keys is taken before the dot product, so scoring costs
    O(L) rather than O(L^2).
    """

    def __init__(self, features: int, heads: int, d_k: int, rng: np.random.Generator, dtype="float64"):
        super().__init__()
        if d_k < 1 or heads < 1:
            raise ConfigurationError(f"Scorer needs heads >= 1 and d_k >= 1, got {heads} / {d_k}.")
        self.heads = heads
        self.d_k = d_k
        self.query = Linear(features, heads * d_k, rng, bias=False, dtype=dtype)
        self.key = Linear(features, heads * d_k, rng, bias=False, dtype=dtype)

    def forward(self, tokens: Tensor) -> TokenScores:
        squeeze = tokens.ndim == 2
        if squeeze:
            tokens = reshape(tokens, (1,) + tokens.shape)
        queries = self.query(tokens)
        keys = tensor_sum(self.key(tokens), axis=1, keepdims=True) * (1.0 / tokens.shape[1])
        logits = queries * broadcast_to(keys, queries.shape)
        gamma = tensor_sum(logits, axis=-1) * (1.0 / (self.heads * math.sqrt(self.d_k)))
        return TokenScores(reshape(gamma, gamma.shape[1:]) if squeeze else gamma)


def scaled_logit_means(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """
    Scores from explicit per-head projections, the literal double sum.

    Args:
        queries, keys (np.ndarray): [L, heads, d_k].

    Returns:
        np.ndarray: [L] mean of the scaled logits over heads and keys.
    """
    queries, keys = np.asarray(queries, dtype=np.float64), np.asarray(keys, dtype=np.float64)
    if queries.shape != keys.shape or queries.ndim != 3:
        raise DimensionError(f"Queries {queries.shape} and keys {keys.shape} must both be [L, heads, d_k].")
    d_k = queries.shape[2]
    if d_k == 0:
        raise ConfigurationError("Key width d_k must be positive.")
    logits = np.einsum("ihd,jhd->hij", queries, keys) / np.sqrt(d_k)
    return logits.mean(axis=(0, 2))


def attention_scores(tokens: Tensor, scorer: AttentionScorer) -> TokenScores:
    return scorer(tokens)


def cosine_center_scores(spatial: Tensor, center_index: Optional[int] = None) -> TokenScores:
    """
    Softmax over tokens of the cosine similarity to the center token.

    Args:
        spatial (Tensor): [HW, d] or [B, HW, d] spatial tokens.
        center_index (int): position of the center token; defaults to HW // 2,
            the row-major center of an odd square patch.
    """
    squeeze = spatial.ndim == 2
    if squeeze:
        spatial = reshape(spatial, (1,) + spatial.shape)
    count = spatial.shape[1]
    center_index = count // 2 if center_index is None else center_index
    if not 0 <= center_index < count:
        raise ContractError(f"Center index {center_index} outside [0, {count}).")

    squared_norms = tensor_sum(spatial * spatial, axis=-1)
    if np.any(squared_norms.data < 1e-24):
        LOGGER.warning("Zero-norm spatial token found; clamping its norm to 1e-12.")
    norms = sqrt(clamp_min(squared_norms, 1e-24))
    center = gather(spatial, np.array([center_index]), axis=1)
    dots = tensor_sum(spatial * broadcast_to(center, spatial.shape), axis=-1)
    center_norm = gather(norms, np.array([center_index]), axis=1)
    cosine = dots / (norms * broadcast_to(center_norm, norms.shape))
    gamma = softmax(cosine, axis=-1)
    return TokenScores(reshape(gamma, gamma.shape[1:]) if squeeze else gamma)


def topk_mask(scores, k: int) -> SelectionMask:
    """Positions of the k largest scores (ties to the lower index), ascending"""
    gamma = scores.gamma.data if isinstance(scores, TokenScores) else np.asarray(scores)
    source_len = gamma.shape[-1]
    if not 1 <= k <= source_len:
        raise ContractError(f"k={k} out of range for {source_len} tokens.")
    order = np.argsort(-gamma, axis=-1, kind="stable")[..., :k]
    return SelectionMask(source_len, np.sort(order, axis=-1))


def sparse_branch(
    tokens: Tensor,
    mask: SelectionMask,
    block: MambaBlock,
    scores: Optional[TokenScores] = None,
    fill: str = "zero",
) -> Tensor:
    """
    Gather the selected tokens, run `block` on them and scatter the outputs
    back to their positions. Unselected rows are zero, or the input tokens
    with fill="residual".
    """
    if fill not in FILL_MODES:
        raise ConfigurationError(f"Unknown fill mode {fill!r}. Allowed values: {FILL_MODES}.")
    if tokens.ndim not in (2, 3):
        raise DimensionError(f"Branch tokens must be [L, feat] or [S, L, feat], got {tokens.shape}.")
    axis = tokens.ndim - 2
    if mask.source_len != tokens.shape[axis]:
        raise ContractError(f"Mask over {mask.source_len} tokens applied to {tokens.shape[axis]} tokens.")
    if mask.indices.ndim > 1 and mask.indices.shape[:-1] != tokens.shape[:axis]:
        raise ContractError(f"Per-row mask {mask.indices.shape} does not match tokens {tokens.shape}.")

    selected = gather(tokens, mask.indices, axis)
    if scores is not None:
        gate = straight_through_gate(gather(scores.gamma, mask.indices, axis))
        selected = selected * broadcast_to(reshape(gate, gate.shape + (1,)), selected.shape)
    out = scatter(block(selected), mask.indices, mask.source_len, axis)
    if fill == "residual":
        keep = np.ones(tokens.shape[: axis + 1], dtype=tokens.dtype)
        np.put_along_axis(keep, np.broadcast_to(mask.indices, keep.shape[:axis] + (mask.k,)), 0.0, axis=axis)
        out = out + tokens * as_tensor(np.broadcast_to(keep[..., None], tokens.shape), like=tokens)
    return out
