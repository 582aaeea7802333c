"""Class palettes, binary PPM rasters and legend files for classification maps"""
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DatasetIOError

RGB = Tuple[int, int, int]

SPECIES_COLOURS: Dict[str, RGB] = {
    "Subalpine-fir": (0, 0, 255),
    "Tamarack": (255, 128, 128),
    "Engelmann-spruce": (255, 255, 128),
    "White-spruce": (255, 128, 255),
    "Black-spruce": (128, 255, 255),
    "Jack-pine": (0, 64, 0),
    "Lodgepole-pine": (128, 128, 64),
    "Balsam-poplar": (128, 64, 0),
    "Trembling-aspen": (0, 128, 64),
}

# table2 is the boreal-plains palette, where Trembling-aspen is olive
PALETTES: Dict[str, Dict[str, RGB]] = {
    "table1": SPECIES_COLOURS,
    "table2": {**SPECIES_COLOURS, "Trembling-aspen": (64, 128, 0)},
}


def palette_for(class_names: Sequence[str], variant: str = "table1") -> List[RGB]:
    """Colour per class; names outside the species table get evenly spaced hues"""
    if variant not in PALETTES:
        raise ConfigurationError(f"Unknown palette {variant!r}. Allowed values: {', '.join(PALETTES)}.")
    table = PALETTES[variant]
    colours = []
    for k, name in enumerate(class_names):
        if name in table:
            colours.append(table[name])
        else:
            hue = k / max(len(class_names), 1)
            rgb = np.clip(np.abs(np.mod(hue * 6 + np.array([0, 4, 2]), 6) - 3) - 1, 0, 1)
            colours.append(tuple(int(round(255 * c)) for c in rgb))
    return colours


def colourize(class_map: np.ndarray, colours: Sequence[RGB]) -> np.ndarray:
    """[rows, cols] class indices -> [rows, cols, 3] uint8 image"""
    class_map = np.asarray(class_map, dtype=np.int64)
    if class_map.ndim != 2:
        raise ConfigurationError(f"Class map must be 2-d, got shape {class_map.shape}.")
    if class_map.size and (class_map.min() < 0 or class_map.max() >= len(colours)):
        raise ConfigurationError(f"Class map holds indices outside [0, {len(colours)}).")
    return np.asarray(colours, dtype=np.uint8)[class_map]


def write_ppm(image: np.ndarray, path: Union[str, Path]) -> Path:
    """Binary P6 with maxval 255"""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    rows, cols = image.shape[:2]
    path = Path(path)
    try:
        with open(path, "wb") as ppm_file:
            ppm_file.write(f"P6\n{cols} {rows}\n255\n".encode("ascii"))
            ppm_file.write(image.tobytes())
    except OSError as os_error:
        raise DatasetIOError(f"Could not write raster {path}: {os_error}") from os_error
    return path


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, position = [], 0
    while len(fields) < 4:
        while data[position:position + 1].isspace():
            position += 1
        start = position
        while not data[position:position + 1].isspace():
            position += 1
        fields.append(data[start:position].decode("ascii"))
    if fields[0] != "P6":
        raise DatasetIOError(f"{path} is not a binary PPM.")
    cols, rows = int(fields[1]), int(fields[2])
    pixels = np.frombuffer(data[position + 1:], dtype=np.uint8)
    return pixels.reshape(rows, cols, 3)


def legend_text(class_names: Sequence[str], colours: Sequence[RGB]) -> str:
    lines = ["index\tclass\tR\tG\tB"]
    for k, (name, (red, green, blue)) in enumerate(zip(class_names, colours)):
        lines.append(f"{k}\t{name}\t{red}\t{green}\t{blue}")
    return "\n".join(lines) + "\n"


def write_legend(class_names: Sequence[str], colours: Sequence[RGB], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(legend_text(class_names, colours), encoding="utf-8")
    return path
