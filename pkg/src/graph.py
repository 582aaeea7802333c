"""
Mini-batch graph stream
---------
Nodes are the samples of one batch. Edges are RBF similarities of their
center-pixel vectors; propagation uses the symmetric normalized adjacency
with self-loops, and each layer is BN(L H W + b).
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import ConfigurationError, ContractError, DimensionError
from .log_config import LOGGER
from .nn import BatchNorm1d, Module, ModuleList, Parameter, fan_in_uniform
from .tensor import Tensor, as_tensor, matmul, relu, resolve_dtype

SELF_LOOP_MODES = ("add", "clamp")


@dataclass
class GraphBatch:
    """Adjacency products of one mini-batch"""

    A: np.ndarray
    A_tilde: np.ndarray
    D_tilde: np.ndarray
    L: np.ndarray
    sigma: float

    @property
    def size(self) -> int:
        return self.A.shape[0]


def center_pixel_vector(cube: np.ndarray) -> np.ndarray:
    """
    Flattened time-major (t outer, band inner) features of the center pixel.

    Args:
        cube (np.ndarray): [H, W, T, C0] sample cube with odd H and W.

    Returns:
        np.ndarray: vector of length T * C0.
    """
    cube = np.asarray(cube)
    if cube.ndim != 4:
        raise DimensionError(f"Sample cube must be [H, W, T, C0], got shape {cube.shape}.")
    height, width = cube.shape[:2]
    if height % 2 == 0 or width % 2 == 0:
        raise ContractError(f"Patch {height}x{width} has no unique center pixel; H and W must be odd.")
    return cube[height // 2, width // 2].reshape(-1)


def center_pixel_vectors(cubes: np.ndarray) -> np.ndarray:
    """Center vectors of a [B, H, W, T, C0] batch as a [B, T*C0] matrix"""
    cubes = np.asarray(cubes)
    if cubes.ndim != 5:
        raise DimensionError(f"Batch must be [B, H, W, T, C0], got shape {cubes.shape}.")
    if len(cubes) == 0:
        raise ContractError("Cannot take center vectors of an empty batch.")
    return np.stack([center_pixel_vector(cube) for cube in cubes])


def rbf_adjacency(vectors: np.ndarray, sigma: Optional[float] = None):
    """
    A_ij = exp(-||x_i - x_j||^2 / sigma^2).

    Args:
        vectors (np.ndarray): [B, F] node features, B >= 2.
        sigma (float): kernel width. None picks sigma^2 as the median pairwise
            squared distance of the batch.

    Returns:
        (A, sigma): symmetric adjacency with unit diagonal and the width used.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise ContractError(f"RBF adjacency needs a [B, F] matrix with B >= 2, got {vectors.shape}.")
    squared = pdist(vectors, metric="sqeuclidean")
    if sigma is None:
        sigma_sq = float(np.median(squared))
        if not sigma_sq > 0:
            LOGGER.warning("All center vectors in the batch coincide; using sigma = 1.")
            sigma_sq = 1.0
    elif sigma <= 0:
        raise ConfigurationError(f"RBF width sigma must be > 0, got {sigma}.")
    else:
        sigma_sq = float(sigma) ** 2
    adjacency = np.exp(-squareform(squared) / sigma_sq)
    return adjacency, float(np.sqrt(sigma_sq))


def normalize_adjacency(A: np.ndarray, self_loop: str = "add", sigma: float = float("nan")) -> GraphBatch:
    """Self-loops, degrees and L = D^-1/2 (A + I) D^-1/2"""
    if self_loop not in SELF_LOOP_MODES:
        raise ConfigurationError(f"Unknown self-loop mode {self_loop!r}. Allowed values: {SELF_LOOP_MODES}.")
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"Adjacency must be square, got {A.shape}.")
    if self_loop == "add":
        A_tilde = A + np.eye(len(A))
    else:
        A_tilde = A.copy()
        np.fill_diagonal(A_tilde, 1.0)
    degree = A_tilde.sum(axis=1)
    if np.any(degree <= 0):
        raise ContractError(f"Degenerate degree in rows {np.flatnonzero(degree <= 0).tolist()}.")
    inv_sqrt = 1.0 / np.sqrt(degree)
    L = inv_sqrt[:, None] * A_tilde * inv_sqrt[None, :]
    L = 0.5 * (L + L.T)
    return GraphBatch(A=A, A_tilde=A_tilde, D_tilde=np.diag(degree), L=L, sigma=sigma)


def identity_graph(size: int) -> GraphBatch:
    """Graph whose propagation is the identity (graph ablation)"""
    eye = np.eye(size)
    return GraphBatch(A=eye, A_tilde=eye, D_tilde=eye, L=eye, sigma=float("nan"))


class CenterStandardizer(Module):
    """Per-feature standardization of center vectors with training-set statistics"""

    def __init__(self, features: int, raw: bool = False):
        super().__init__()
        self.raw = raw
        self.register_buffer("mean", np.zeros(features))
        self.register_buffer("std", np.ones(features))

    def fit(self, vectors: np.ndarray) -> "CenterStandardizer":
        vectors = np.asarray(vectors, dtype=np.float64)
        std = vectors.std(axis=0)
        self.mean = vectors.mean(axis=0)
        self.std = np.where(std > 1e-12, std, 1.0)
        return self

    def forward(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.asarray(vectors, dtype=np.float64)
        if self.raw:
            return vectors
        return (vectors - self.mean) / self.std


def build_graph(
    cubes: np.ndarray,
    standardizer: Optional[CenterStandardizer] = None,
    sigma: Optional[float] = None,
    self_loop: str = "add",
) -> GraphBatch:
    """Graph of one [B, H, W, T, C0] batch; a single sample gives L = [[1]]"""
    vectors = center_pixel_vectors(cubes)
    if standardizer is not None:
        vectors = standardizer(vectors)
    if len(vectors) == 1:
        single = normalize_adjacency(np.ones((1, 1)), self_loop, sigma=float("nan"))
        return replace(single, L=np.ones((1, 1)))
    adjacency, width = rbf_adjacency(vectors, sigma)
    return normalize_adjacency(adjacency, self_loop, sigma=width)


class GcnLayer(Module):
    """H' = BN(L H W + b)"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype="float64"):
        super().__init__()
        dtype = resolve_dtype(dtype)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(fan_in_uniform(rng, (in_features, out_features), in_features, dtype), dtype)
        self.bias = Parameter(np.zeros(out_features), dtype)
        self.bn = BatchNorm1d(out_features, dtype=dtype)

    def forward(self, h: Tensor, propagation: Tensor) -> Tensor:
        if h.ndim != 2 or h.shape[1] != self.in_features:
            raise DimensionError(f"GCN layer expects [B, {self.in_features}] features, got {h.shape}.")
        if propagation.shape != (h.shape[0], h.shape[0]):
            raise DimensionError(f"Propagation matrix {propagation.shape} does not match batch {h.shape[0]}.")
        return self.bn(matmul(propagation, matmul(h, self.weight)) + self.bias)


def gcn_forward(h: Tensor, graph: GraphBatch, layer: GcnLayer, training: bool) -> Tensor:
    layer.train(training)
    return layer(h, as_tensor(graph.L.astype(h.dtype), like=h))


class GraphStream(Module):
    """
    Stacked GCN layers over the flattened cubes of a batch, ReLU between
    layers. With `use_graph` off the propagation is the identity, which
    leaves a plain MLP with batch normalization.
    """

    def __init__(
        self,
        in_features: int,
        hidden: int,
        depth: int,
        rng: np.random.Generator,
        use_graph: bool = True,
        dtype="float64",
    ):
        super().__init__()
        if depth < 1 or hidden < 1:
            raise ConfigurationError(f"GCN depth and width must be positive, got {depth} / {hidden}.")
        widths = [in_features] + [hidden] * depth
        self.use_graph = use_graph
        self.out_features = hidden
        self.layers = ModuleList(
            GcnLayer(f_in, f_out, rng, dtype) for f_in, f_out in zip(widths[:-1], widths[1:])
        )

    def forward(self, flat: Tensor, graph: Optional[GraphBatch] = None) -> Tensor:
        if not self.use_graph or graph is None:
            graph = identity_graph(flat.shape[0])
        propagation = as_tensor(graph.L.astype(flat.dtype), like=flat)
        h = flat
        for position, layer in enumerate(self.layers):
            if position:
                h = relu(h)
            h = layer(h, propagation)
        return h


def flatten_cubes(cubes: np.ndarray, dtype=np.float64) -> Tensor:
    """H^(0): each cube flattened row-major over (h, w, t, band)"""
    cubes = np.asarray(cubes)
    return as_tensor(cubes.reshape(len(cubes), -1).astype(dtype))

