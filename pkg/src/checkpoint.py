"""
Checkpoint directory
---------
- manifest.yaml : `CheckpointManifest` (model config, class names, split
  recipe, seed, and the name -> (offset, shape) index, offsets in elements)
- params.f32    : every parameter and buffer, raveled row-major and
  concatenated in index order as little-endian float32
"""
import json
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import ValidationError

from .errors import CorruptDatasetError, DatasetIOError, VersionError
from .log_config import LOGGER
from .model import GDSMamba
from .schemas import CheckpointManifest, ParameterEntry

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.yaml"


def save_checkpoint(
    model: GDSMamba,
    path: Union[str, Path],
    class_names: Sequence[str],
    seed: int = 0,
    dataset: Optional[str] = None,
    split: Optional[Dict[str, int]] = None,
    best_epoch: Optional[int] = None,
) -> Path:
    path = Path(path)
    state = model.state_dict()
    index, offset = {}, 0
    for name, array in state.items():
        index[name] = ParameterEntry(offset=offset, shape=list(array.shape))
        offset += array.size
    manifest = CheckpointManifest(
        model=model.config,
        class_names=list(class_names),
        index=index,
        seed=seed,
        dataset=dataset,
        split=split,
        best_epoch=best_epoch,
    )
    buffer = np.concatenate([array.ravel() for array in state.values()]).astype("<f4")
    try:
        path.mkdir(parents=True, exist_ok=True)
        (path / MANIFEST_NAME).write_text(yaml.safe_dump(json.loads(manifest.json()), sort_keys=False), encoding="utf-8")
        buffer.tofile(path / manifest.buffer_file)
    except OSError as os_error:
        raise DatasetIOError(f"Could not write checkpoint to {path}: {os_error}") from os_error
    LOGGER.info("Saved checkpoint with %s values to %s", buffer.size, path)
    return path


def read_checkpoint_manifest(path: Union[str, Path]) -> CheckpointManifest:
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetIOError(f"No checkpoint manifest at {manifest_path}.")
    try:
        raw = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as yaml_error:
        raise CorruptDatasetError(f"Unreadable checkpoint manifest {manifest_path}: {yaml_error}") from yaml_error
    if not isinstance(raw, dict):
        raise CorruptDatasetError(f"Checkpoint manifest {manifest_path} is not a mapping.")
    if raw.get("version", FORMAT_VERSION) != FORMAT_VERSION:
        raise VersionError(f"Checkpoint format version {raw.get('version')} is not supported.")
    try:
        return CheckpointManifest(**raw)
    except ValidationError as validation_error:
        raise CorruptDatasetError(f"Invalid checkpoint manifest: {validation_error}") from validation_error


def load_checkpoint(path: Union[str, Path]) -> Tuple[GDSMamba, CheckpointManifest]:
    """Rebuild the model from its config and load every stored array"""
    path = Path(path)
    manifest = read_checkpoint_manifest(path)
    buffer_path = path / manifest.buffer_file
    if not buffer_path.is_file():
        raise DatasetIOError(f"Missing parameter buffer {buffer_path}.")
    expected = sum(int(np.prod(entry.shape)) for entry in manifest.index.values())
    actual = buffer_path.stat().st_size
    if actual != expected * 4:
        raise CorruptDatasetError(f"{buffer_path.name}: expected {expected * 4} bytes, found {actual}.")
    buffer = np.fromfile(buffer_path, dtype=manifest.buffer_dtype)
    state = {
        name: buffer[entry.offset:entry.offset + int(np.prod(entry.shape))].reshape(entry.shape)
        for name, entry in manifest.index.items()
    }
    model = GDSMamba(manifest.model)
    model.load_state_dict(state)
    model.eval()
    return model, manifest
