"""
Dataset container
---------
A dataset is a directory holding

- manifest.yaml : `DatasetManifest` (dims, class and band names, seed, files)
- cubes.f32     : little-endian float32, row-major [N, H, W, T, C0], sample-major
- labels.u32    : little-endian uint32 center-pixel labels [N]
- grid_labels.u32 (optional): dense [rows, cols] label raster of a scene grid,
  one patch per cell in row-major cell order
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import yaml
from pydantic import ValidationError

from .errors import CorruptDatasetError, DataError, DatasetIOError, VersionError
from .log_config import LOGGER
from .schemas import DatasetManifest

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.yaml"


@dataclass
class Split:
    """Disjoint sample indices; test is the remainder"""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"train": self.train, "val": self.val, "test": self.test}


@dataclass
class Dataset:
    """Cubes [N, H, W, T, C0] (float32), labels [N] and the manifest"""

    cubes: np.ndarray
    labels: np.ndarray
    manifest: DatasetManifest
    grid_labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def class_names(self):
        return self.manifest.class_names

    @property
    def is_grid(self) -> bool:
        return self.grid_labels is not None


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    """Write the container; files are overwritten in place"""
    path = Path(path)
    manifest = dataset.manifest
    if dataset.cubes.shape != (len(dataset),) + manifest.cube_shape or len(dataset) != manifest.n_samples:
        raise CorruptDatasetError(
            f"Cubes {dataset.cubes.shape} do not match the manifest ({manifest.n_samples}, {manifest.cube_shape})."
        )
    try:
        path.mkdir(parents=True, exist_ok=True)
        (path / MANIFEST_NAME).write_text(yaml.safe_dump(json.loads(manifest.json()), sort_keys=False), encoding="utf-8")
        np.ascontiguousarray(dataset.cubes, dtype="<f4").tofile(path / manifest.tensor_file)
        np.ascontiguousarray(dataset.labels, dtype="<u4").tofile(path / manifest.label_file)
        if dataset.grid_labels is not None:
            np.ascontiguousarray(dataset.grid_labels, dtype="<u4").tofile(path / manifest.grid_file)
    except OSError as os_error:
        raise DatasetIOError(f"Could not write dataset to {path}: {os_error}") from os_error
    LOGGER.info("Wrote dataset of %s samples to %s", len(dataset), path)
    return path


def read_manifest(path: Union[str, Path]) -> DatasetManifest:
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetIOError(f"No dataset manifest at {manifest_path}.")
    try:
        raw = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as yaml_error:
        raise CorruptDatasetError(f"Unreadable manifest {manifest_path}: {yaml_error}") from yaml_error
    if not isinstance(raw, dict):
        raise CorruptDatasetError(f"Manifest {manifest_path} is not a mapping.")
    if raw.get("version", FORMAT_VERSION) != FORMAT_VERSION:
        raise VersionError(f"Dataset format version {raw.get('version')} is not supported (expected {FORMAT_VERSION}).")
    try:
        return DatasetManifest(**raw)
    except ValidationError as validation_error:
        raise CorruptDatasetError(f"Invalid manifest {manifest_path}: {validation_error}") from validation_error


def _read_array(file_path: Path, dtype: str, count: int) -> np.ndarray:
    if not file_path.is_file():
        raise DatasetIOError(f"Missing data file {file_path}.")
    expected = count * np.dtype(dtype).itemsize
    actual = file_path.stat().st_size
    if actual != expected:
        raise CorruptDatasetError(f"{file_path.name}: expected {expected} bytes, found {actual}.")
    return np.fromfile(file_path, dtype=dtype)


def read_dataset(path: Union[str, Path]) -> Dataset:
    """Read and check a container written by `write_dataset`"""
    path = Path(path)
    manifest = read_manifest(path)
    shape = (manifest.n_samples,) + manifest.cube_shape
    cubes = _read_array(path / manifest.tensor_file, manifest.tensor_dtype, int(np.prod(shape)))
    labels = _read_array(path / manifest.label_file, manifest.label_dtype, manifest.n_samples)
    if labels.size and labels.max() >= manifest.K:
        raise CorruptDatasetError(f"Labels reach {labels.max()} but the manifest declares K={manifest.K}.")

    grid_labels = None
    if manifest.grid is not None:
        rows, cols = manifest.grid
        if rows * cols != manifest.n_samples or not manifest.grid_file:
            raise CorruptDatasetError(f"Grid {rows}x{cols} does not hold {manifest.n_samples} patches.")
        grid_labels = _read_array(path / manifest.grid_file, manifest.label_dtype, rows * cols)
        grid_labels = grid_labels.astype(np.int64).reshape(rows, cols)

    return Dataset(
        cubes=cubes.astype(np.float32).reshape(shape),
        labels=labels.astype(np.int64),
        manifest=manifest,
        grid_labels=grid_labels,
    )


def _largest_remainder(total: int, counts: np.ndarray) -> np.ndarray:
    """Integer quotas proportional to `counts` summing to `total`"""
    exact = total * counts / counts.sum()
    quotas = np.floor(exact).astype(np.int64)
    remainder = exact - quotas
    for k in np.argsort(-remainder, kind="stable")[: total - quotas.sum()]:
        quotas[k] += 1
    return quotas


def split(labels: Sequence[int], train_n: int, val_n: int, seed: int = 0) -> Split:
    """
    Seeded train / val / test indices, stratified by class where the quotas
    fit. Test is the remainder. Each list is returned sorted.
    """
    labels = np.asarray(labels, dtype=np.int64)
    total = len(labels)
    if train_n < 0 or val_n < 0 or train_n + val_n > total:
        raise DataError(f"Cannot take {train_n} + {val_n} samples out of {total}.")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    train_quota = _largest_remainder(train_n, counts) if total else counts
    val_quota = _largest_remainder(val_n, counts) if total else counts

    if np.all(train_quota + val_quota <= counts):
        parts = {"train": [], "val": [], "test": []}
        for cls, n_train, n_val in zip(classes, train_quota, val_quota):
            members = rng.permutation(np.flatnonzero(labels == cls))
            parts["train"].append(members[:n_train])
            parts["val"].append(members[n_train:n_train + n_val])
            parts["test"].append(members[n_train + n_val:])
        train_idx, val_idx, test_idx = (
            np.concatenate(parts[name]) if parts[name] else np.zeros(0, dtype=np.int64)
            for name in ("train", "val", "test")
        )
    else:
        LOGGER.warning("Stratified split of %s/%s is infeasible; falling back to an unstratified split.", train_n, val_n)
        order = rng.permutation(total)
        train_idx, val_idx, test_idx = order[:train_n], order[train_n:train_n + val_n], order[train_n + val_n:]

    return Split(train=np.sort(train_idx), val=np.sort(val_idx), test=np.sort(test_idx))
