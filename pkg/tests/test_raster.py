# pylint: disable=missing-function-docstring,missing-module-docstring
import numpy as np
import pytest

from src.errors import ConfigurationError
from src.raster import colourize, legend_text, palette_for, read_ppm, write_legend, write_ppm


def test_species_colours():
    assert palette_for(["Subalpine-fir", "Jack-pine", "Trembling-aspen"]) == [(0, 0, 255), (0, 64, 0), (0, 128, 64)]
    assert palette_for(["Trembling-aspen"], "table2") == [(64, 128, 0)]


def test_unknown_names_get_distinct_colours():
    colours = palette_for(["x", "y", "z"])
    assert len(set(colours)) == 3
    assert all(0 <= channel <= 255 for colour in colours for channel in colour)


def test_unknown_palette():
    with pytest.raises(ConfigurationError):
        palette_for(["Tamarack"], "table3")


def test_colourize_and_ppm(tmp_path):
    class_map = np.array([[0, 1, 1], [1, 0, 0]])
    image = colourize(class_map, [(0, 0, 255), (255, 128, 128)])
    assert image.shape == (2, 3, 3) and image.dtype == np.uint8
    path = write_ppm(image, tmp_path / "map.ppm")
    assert path.read_bytes().startswith(b"P6\n3 2\n255\n")
    np.testing.assert_array_equal(read_ppm(path), image)


def test_colourize_rejects_bad_maps():
    with pytest.raises(ConfigurationError):
        colourize(np.array([0, 1]), [(0, 0, 0), (1, 1, 1)])
    with pytest.raises(ConfigurationError):
        colourize(np.array([[0, 2]]), [(0, 0, 0), (1, 1, 1)])


def test_legend(tmp_path):
    text = legend_text(["Tamarack"], [(255, 128, 128)])
    assert text == "index\tclass\tR\tG\tB\n0\tTamarack\t255\t128\t128\n"
    assert write_legend(["Tamarack"], [(255, 128, 128)], tmp_path / "legend.txt").read_text() == text
