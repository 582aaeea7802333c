"""Disentangled spectral, temporal and spatial token sets of a mini-batch"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DimensionError
from .graph import GraphBatch
from .nn import GroupedConv1d, Linear, Module
from .tensor import Tensor, as_tensor, reshape, transpose

TOKEN_KINDS = ("spectral", "temporal", "spatial")


@dataclass
class MiniBatch:
    """Cubes [B, H, W, T, C0], center-pixel labels [B] and the batch graph"""

    cubes: np.ndarray
    labels: Optional[np.ndarray] = None
    graph: Optional[GraphBatch] = None

    def __post_init__(self):
        if np.ndim(self.cubes) != 5:
            raise DimensionError(f"Mini-batch cubes must be [B, H, W, T, C0], got {np.shape(self.cubes)}.")
        if self.labels is not None and len(self.labels) != len(self.cubes):
            raise DimensionError(f"{len(self.labels)} labels for {len(self.cubes)} cubes.")

    @property
    def size(self) -> int:
        return int(np.shape(self.cubes)[0])

    def tensor(self, dtype=np.float64) -> Tensor:
        return as_tensor(np.asarray(self.cubes, dtype=dtype))


@dataclass
class TokenSet:
    """
    kind spectral: [B*H*W, C, T]; temporal: [B*H*W, T, C]; spatial: [B, H*W, d].
    The token axis is 1, the per-token features are the last axis.
    """

    kind: str
    data: Tensor

    def __post_init__(self):
        if self.kind not in TOKEN_KINDS:
            raise ConfigurationError(f"Unknown token kind {self.kind!r}. Allowed values: {TOKEN_KINDS}.")

    @property
    def num_tokens(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def _check_cubes(cubes: Tensor, steps: int, bands: int) -> None:
    if cubes.ndim != 5 or cubes.shape[3:] != (steps, bands):
        raise ConfigurationError(
            f"Cubes of shape {cubes.shape} do not match T={steps}, C0={bands} on axes 3 and 4."
        )


class SpectralTokenizer(Module):
    """Pointwise stem with one convolution group per time step: C0 bands -> C channels"""

    def __init__(self, steps: int, bands: int, channels: int, rng: np.random.Generator, dtype="float64"):
        super().__init__()
        self.steps, self.bands, self.channels = steps, bands, channels
        self.stem = GroupedConv1d(steps * bands, steps * channels, 1, steps, rng, dtype=dtype)

    def forward(self, cubes: Tensor) -> TokenSet:
        _check_cubes(cubes, self.steps, self.bands)
        pixels = cubes.shape[0] * cubes.shape[1] * cubes.shape[2]
        out = self.stem(reshape(cubes, (pixels, self.steps * self.bands, 1)))
        out = reshape(out, (pixels, self.steps, self.channels))
        return TokenSet("spectral", transpose(out, (0, 2, 1)))


class TemporalTokenizer(Module):
    """Projection of the C0 bands of each time step to C features, shared across steps"""

    def __init__(self, steps: int, bands: int, channels: int, rng: np.random.Generator, dtype="float64"):
        super().__init__()
        self.steps, self.bands = steps, bands
        self.proj = Linear(bands, channels, rng, dtype=dtype)

    def forward(self, cubes: Tensor) -> TokenSet:
        _check_cubes(cubes, self.steps, self.bands)
        pixels = cubes.shape[0] * cubes.shape[1] * cubes.shape[2]
        return TokenSet("temporal", self.proj(reshape(cubes, (pixels, self.steps, self.bands))))


class SpatialTokenizer(Module):
    """Each pixel's T*C0 series projected to d; tokens in row-major (h, w) order"""

    def __init__(self, steps: int, bands: int, width: int, rng: np.random.Generator, dtype="float64"):
        super().__init__()
        self.steps, self.bands = steps, bands
        self.proj = Linear(steps * bands, width, rng, dtype=dtype)

    def forward(self, cubes: Tensor) -> TokenSet:
        _check_cubes(cubes, self.steps, self.bands)
        batch, height, width = cubes.shape[:3]
        flat = reshape(cubes, (batch, height * width, self.steps * self.bands))
        return TokenSet("spatial", self.proj(flat))


def spectral_tokenize(batch: MiniBatch, tokenizer: SpectralTokenizer) -> TokenSet:
    return tokenizer(batch.tensor(tokenizer.stem.weight.dtype))


def temporal_tokenize(batch: MiniBatch, tokenizer: TemporalTokenizer) -> TokenSet:
    return tokenizer(batch.tensor(tokenizer.proj.weight.dtype))


def spatial_tokenize(batch: MiniBatch, tokenizer: SpatialTokenizer) -> TokenSet:
    return tokenizer(batch.tensor(tokenizer.proj.weight.dtype))
