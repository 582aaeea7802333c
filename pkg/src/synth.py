"""
Synthetic MODIS-like benchmark
---------
Each class draws a double-logistic phenology per reflectance band:

    v(t) = baseline + direction * amplitude * (expit(s_up (t - up)) - expit(s_down (t - down)))

Inter-class gaps in timing, amplitude and baseline shrink linearly as
`subtlety` goes to 1. NDVI and EVI are derived from the noisy red, NIR and
blue bands. Every sample uses its own generator seeded with (seed, patch_id).
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import expit

from .dataset_io import Dataset
from .errors import ConfigurationError
from .graph import center_pixel_vectors
from .schemas import DatasetManifest

BAND_NAMES = ["B01", "B02", "B03", "B07", "NDVI", "EVI"]
SPECIES = [
    "Subalpine-fir",
    "Tamarack",
    "Engelmann-spruce",
    "White-spruce",
    "Black-spruce",
    "Jack-pine",
    "Lodgepole-pine",
    "Balsam-poplar",
    "Trembling-aspen",
]

# red, NIR, blue, MIR: (baseline, amplitude, direction)
REFLECTANCE_PROFILES = [(0.10, 0.05, -1.0), (0.22, 0.24, 1.0), (0.05, 0.02, -1.0), (0.16, 0.07, -1.0)]
NOMINAL_RANGE = (-0.2, 1.0)


def default_class_names(classes: int) -> List[str]:
    if classes <= len(SPECIES):
        return SPECIES[:classes]
    return [f"class_{k}" for k in range(classes)]


@dataclass
class ClassSignature:
    """Double-logistic parameters per reflectance band (arrays of length 4)"""

    baseline: np.ndarray
    amplitude: np.ndarray
    direction: np.ndarray
    green_up: float
    senescence: float
    slope_up: float
    slope_down: float
    texture_scale: float = 1.5

    def curves(self, steps: int, shift: float = 0.0) -> np.ndarray:
        """[T, 4] reflectance series"""
        t = np.arange(steps, dtype=np.float64)[:, None] - shift
        season = expit(self.slope_up * (t - self.green_up)) - expit(self.slope_down * (t - self.senescence))
        return self.baseline + self.direction * self.amplitude * season


def make_signatures(classes: int, steps: int, subtlety: float, rng: np.random.Generator) -> List[ClassSignature]:
    """Class signatures whose gaps scale with (1 - 0.95 * subtlety)"""
    if classes < 2:
        raise ConfigurationError(f"Need at least 2 classes, got {classes}.")
    if not 0.0 <= subtlety <= 1.0:
        raise ConfigurationError(f"subtlety must lie in [0, 1], got {subtlety}.")
    scale = 1.0 - 0.95 * subtlety
    position = np.linspace(-0.5, 0.5, classes)
    timing = rng.permutation(position)
    amplitude_gap = rng.uniform(-0.5, 0.5, size=(classes, 4))
    baseline_gap = rng.uniform(-0.5, 0.5, size=(classes, 4))
    profiles = np.array(REFLECTANCE_PROFILES)

    signatures = []
    for k in range(classes):
        signatures.append(
            ClassSignature(
                baseline=profiles[:, 0] + scale * 0.03 * baseline_gap[k],
                amplitude=profiles[:, 1] * (1.0 + scale * 0.6 * amplitude_gap[k]),
                direction=profiles[:, 2],
                green_up=steps * (0.30 + scale * 0.25 * position[k]),
                senescence=steps * (0.72 + scale * 0.20 * timing[k]),
                slope_up=0.9 + scale * 0.4 * position[k],
                slope_down=0.7,
            )
        )
    return signatures


def _derive_indices(reflectance: np.ndarray, rng: np.random.Generator, noise: float) -> np.ndarray:
    red, nir, blue = reflectance[..., 0], reflectance[..., 1], reflectance[..., 2]
    ndvi = (nir - red) / np.maximum(nir + red, 1e-3)
    evi = 2.5 * (nir - red) / np.maximum(nir + 6.0 * red - 7.5 * blue + 1.0, 1e-3)
    indices = np.stack([ndvi, evi], axis=-1)
    return indices + rng.normal(0.0, 0.5 * noise, size=indices.shape)


def render_patch(
    pixel_classes: np.ndarray,
    signatures: List[ClassSignature],
    steps: int,
    rng: np.random.Generator,
    noise: float = 0.02,
) -> np.ndarray:
    """
    Cube [H, W, T, 6] for a map of per-pixel classes.

    Noise drives the timing jitter of the sample, a smooth spatial texture on
    the amplitude and time-correlated pixel noise; noise = 0 gives the exact
    class curves.
    """
    height, width = pixel_classes.shape
    shift = rng.normal(0.0, 10.0 * noise)
    curves = np.stack([signature.curves(steps, shift) for signature in signatures])
    reflectance = curves[pixel_classes]
    scale = signatures[0].texture_scale
    texture = gaussian_filter(rng.normal(size=(height, width)), sigma=scale)
    texture = texture / max(float(np.abs(texture).max()), 1e-12) * 2.5 * noise
    baseline = np.stack([signatures[k].baseline for k in range(len(signatures))])[pixel_classes]
    reflectance = baseline[:, :, None, :] + (reflectance - baseline[:, :, None, :]) * (1.0 + texture[:, :, None, None])
    pixel_noise = gaussian_filter(rng.normal(size=reflectance.shape), sigma=(0, 0, 1.0, 0))
    reflectance = reflectance + noise * pixel_noise
    cube = np.concatenate([reflectance, _derive_indices(reflectance, rng, noise)], axis=-1)
    return np.clip(cube, *NOMINAL_RANGE)


def _patch_classes(label: int, classes: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Center class, with a neighbouring class over a half-plane in half the patches"""
    pixel_classes = np.full((size, size), label, dtype=np.int64)
    if rng.random() < 0.5:
        neighbour = (label + rng.integers(1, classes)) % classes
        angle = rng.uniform(0.0, 2.0 * np.pi)
        offset = rng.uniform(1.0, max(size / 2.0, 1.0))
        rows, cols = np.mgrid[:size, :size] - size // 2
        pixel_classes[rows * np.cos(angle) + cols * np.sin(angle) > offset] = neighbour
    return pixel_classes


def _manifest(classes, samples, size, steps, seed, subtlety, class_names, **extra) -> DatasetManifest:
    return DatasetManifest(
        H=size,
        W=size,
        T=steps,
        C0=len(BAND_NAMES),
        K=classes,
        n_samples=samples,
        class_names=list(class_names or default_class_names(classes)),
        band_names=list(BAND_NAMES),
        seed=seed,
        subtlety=subtlety,
        **extra,
    )


def generate_synthetic(
    classes: int,
    samples: int,
    subtlety: float,
    seed: int = 0,
    size: int = 13,
    steps: int = 23,
    noise: float = 0.02,
    class_names: Optional[List[str]] = None,
) -> Dataset:
    """
    Balanced synthetic dataset of `samples` patches.

    Args:
        classes (int): number of classes K >= 2.
        samples (int): number of patches.
        subtlety (float): 0 = well separated classes, 1 = nearly identical.
        seed (int): master seed; patch i uses the stream (seed, i).
        size (int): odd patch side.
        steps (int): time steps T.
        noise (float): pixel noise level; 0 disables every random perturbation.

    Returns:
        Dataset: cubes float32 [samples, size, size, steps, 6] and labels.
    """
    if samples < 1:
        raise ConfigurationError(f"Need at least one sample, got {samples}.")
    if size % 2 == 0:
        raise ConfigurationError(f"Patch size must be odd, got {size}.")
    if noise < 0:
        raise ConfigurationError(f"noise cannot be negative, got {noise}.")
    master = np.random.default_rng(seed)
    signatures = make_signatures(classes, steps, subtlety, master)
    labels = master.permutation(np.arange(samples) % classes)

    cubes = np.empty((samples, size, size, steps, len(BAND_NAMES)), dtype=np.float32)
    for patch_id, label in enumerate(labels):
        rng = np.random.default_rng([seed, patch_id])
        pixel_classes = _patch_classes(int(label), classes, size, rng)
        cubes[patch_id] = render_patch(pixel_classes, signatures, steps, rng, noise)

    manifest = _manifest(classes, samples, size, steps, seed, subtlety, class_names)
    return Dataset(cubes=cubes, labels=labels.astype(np.int64), manifest=manifest)


def generate_grid(
    classes: int,
    rows: int,
    cols: int,
    subtlety: float,
    seed: int = 0,
    size: int = 13,
    steps: int = 23,
    noise: float = 0.02,
    class_names: Optional[List[str]] = None,
) -> Dataset:
    """
    Scene of rows x cols cells with contiguous class regions (nearest of K
    random region seeds). Each cell is one patch; its pixels take the class
    of the neighbouring cell they reach into.
    """
    if rows < 1 or cols < 1:
        raise ConfigurationError(f"Grid must have positive dimensions, got {rows}x{cols}.")
    if size % 2 == 0:
        raise ConfigurationError(f"Patch size must be odd, got {size}.")
    master = np.random.default_rng(seed)
    signatures = make_signatures(classes, steps, subtlety, master)
    centers = master.uniform((0, 0), (rows, cols), size=(classes, 2))
    grid_r, grid_c = np.mgrid[:rows, :cols]
    distances = (grid_r[..., None] - centers[:, 0]) ** 2 + (grid_c[..., None] - centers[:, 1]) ** 2
    grid_labels = np.argmin(distances, axis=-1).astype(np.int64)

    offsets = np.rint((np.arange(size) - size // 2) / (size / 2.0)).astype(np.int64)
    cubes = np.empty((rows * cols, size, size, steps, len(BAND_NAMES)), dtype=np.float32)
    for patch_id, (r, c) in enumerate(np.ndindex(rows, cols)):
        rng = np.random.default_rng([seed, patch_id])
        pixel_rows = np.clip(r + offsets, 0, rows - 1)
        pixel_cols = np.clip(c + offsets, 0, cols - 1)
        pixel_classes = grid_labels[np.ix_(pixel_rows, pixel_cols)]
        cubes[patch_id] = render_patch(pixel_classes, signatures, steps, rng, noise)

    manifest = _manifest(
        classes, rows * cols, size, steps, seed, subtlety, class_names,
        grid=[rows, cols], grid_file="grid_labels.u32",
    )
    return Dataset(cubes=cubes, labels=grid_labels.reshape(-1), manifest=manifest, grid_labels=grid_labels)


def nearest_centroid_accuracy(
    train_cubes: np.ndarray,
    train_labels: np.ndarray,
    test_cubes: np.ndarray,
    test_labels: np.ndarray,
) -> float:
    """Accuracy in [0, 1] of a nearest-class-centroid rule on center-pixel vectors"""
    train_vectors = center_pixel_vectors(train_cubes).astype(np.float64)
    test_vectors = center_pixel_vectors(test_cubes).astype(np.float64)
    train_labels = np.asarray(train_labels)
    classes = np.unique(train_labels)
    centroids = np.stack([train_vectors[train_labels == k].mean(axis=0) for k in classes])
    distances = ((test_vectors[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    predicted = classes[np.argmin(distances, axis=1)]
    return float(np.mean(predicted == np.asarray(test_labels)))
