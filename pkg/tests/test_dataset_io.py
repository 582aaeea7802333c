# pylint: disable=missing-function-docstring,missing-module-docstring
import logging

import numpy as np
import pytest
import yaml

from src.dataset_io import read_dataset, read_manifest, split, write_dataset
from src.errors import CorruptDatasetError, DataError, DatasetIOError, VersionError
from src.synth import generate_grid, generate_synthetic


@pytest.fixture
def stored(tmp_path):
    dataset = generate_synthetic(3, 9, 0.5, seed=1, size=3, steps=4)
    return dataset, write_dataset(dataset, tmp_path / "data")


def test_write_then_read(stored):
    dataset, path = stored
    loaded = read_dataset(path)
    np.testing.assert_array_equal(loaded.cubes, dataset.cubes)
    np.testing.assert_array_equal(loaded.labels, dataset.labels)
    assert loaded.manifest == dataset.manifest
    assert not loaded.is_grid


def test_file_sizes_follow_the_layout(stored):
    dataset, path = stored
    assert (path / "cubes.f32").stat().st_size == dataset.cubes.size * 4
    assert (path / "labels.u32").stat().st_size == 9 * 4


def test_grid_labels_are_stored(tmp_path):
    dataset = generate_grid(3, 2, 3, 0.5, size=3, steps=4)
    loaded = read_dataset(write_dataset(dataset, tmp_path / "grid"))
    np.testing.assert_array_equal(loaded.grid_labels, dataset.grid_labels)


def test_truncated_cubes_are_corrupt(stored):
    _, path = stored
    data = (path / "cubes.f32").read_bytes()
    (path / "cubes.f32").write_bytes(data[:-4])
    with pytest.raises(CorruptDatasetError, match="expected"):
        read_dataset(path)


def test_label_beyond_k_is_corrupt(stored):
    _, path = stored
    labels = np.fromfile(path / "labels.u32", dtype="<u4")
    labels[0] = 7
    labels.tofile(path / "labels.u32")
    with pytest.raises(CorruptDatasetError):
        read_dataset(path)


def test_unknown_version(stored):
    _, path = stored
    raw = yaml.safe_load((path / "manifest.yaml").read_text())
    raw["version"] = 2
    (path / "manifest.yaml").write_text(yaml.safe_dump(raw))
    with pytest.raises(VersionError):
        read_manifest(path)


def test_missing_directory(tmp_path):
    with pytest.raises(DatasetIOError):
        read_dataset(tmp_path / "absent")


def test_manifest_must_agree_with_class_names(stored):
    _, path = stored
    raw = yaml.safe_load((path / "manifest.yaml").read_text())
    raw["class_names"] = raw["class_names"][:2]
    (path / "manifest.yaml").write_text(yaml.safe_dump(raw))
    with pytest.raises(CorruptDatasetError):
        read_manifest(path)


def test_split_is_disjoint_stratified_and_seeded():
    labels = np.repeat([0, 1, 2], [30, 20, 10])
    first = split(labels, 30, 12, seed=4)
    assert (len(first.train), len(first.val), len(first.test)) == (30, 12, 18)
    union = np.concatenate([first.train, first.val, first.test])
    np.testing.assert_array_equal(np.sort(union), np.arange(60))
    np.testing.assert_array_equal(np.bincount(labels[first.train]), [15, 10, 5])
    np.testing.assert_array_equal(first.train, np.sort(first.train))
    second = split(labels, 30, 12, seed=4)
    np.testing.assert_array_equal(first.val, second.val)


def test_split_too_large():
    with pytest.raises(DataError):
        split([0, 1, 0], 2, 2)


def test_unstratifiable_split_falls_back(caplog):
    labels = np.array([0] * 9 + [1])
    with caplog.at_level(logging.WARNING, logger="gds_mamba_logger"):
        indices = split(labels, 5, 5, seed=0)
    assert len(indices.train) == 5 and len(indices.val) == 5 and len(indices.test) == 0
    assert "infeasible" in caplog.text
