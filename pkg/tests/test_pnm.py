import numpy as np
import pytest

from scanmix.labels import LabelMap
from scanmix.pnm import (
    encode_pgm,
    encode_ppm,
    heatmap_to_rgb,
    labels_to_rgb,
    range_to_gray,
)
from scanmix.synth import default_label_map


def test_pgm_header_and_payload():
    gray = np.arange(6, dtype=np.uint8).reshape(2, 3)
    data = encode_pgm(gray)
    assert data == b"P5\n3 2\n255\n" + bytes(range(6))


def test_ppm_header_and_payload():
    rgb = np.zeros((1, 2, 3), np.uint8)
    rgb[0, 1] = (10, 20, 30)
    assert encode_ppm(rgb) == b"P6\n2 1\n255\n" + bytes([0, 0, 0, 10, 20, 30])


def test_shape_validation():
    with pytest.raises(ValueError):
        encode_pgm(np.zeros((2, 2, 3), np.uint8))
    with pytest.raises(ValueError):
        encode_ppm(np.zeros((2, 2), np.uint8))


def test_range_to_gray_scaling_and_empty():
    ranges = np.array([[-1.0, 0.0, 25.0, 50.0, 80.0]])
    gray = range_to_gray(ranges, max_range=50.0)
    np.testing.assert_array_equal(gray, [[0, 0, 128, 255, 255]])


def test_labels_to_rgb_uses_map_palette():
    lm = default_label_map()
    labels = np.array([[0, 1], [2, 1]])
    rgb = labels_to_rgb(labels, lm)
    np.testing.assert_array_equal(rgb[0, 0], lm.color(0))
    np.testing.assert_array_equal(rgb[0, 1], lm.color(1))
    np.testing.assert_array_equal(rgb[1, 0], lm.color(2))


def test_heatmap_normalizes_per_column():
    m = np.array([[1.0, 0.0], [2.0, 0.0]])
    rgb = heatmap_to_rgb(m)
    assert rgb[1, 0, 0] == 255  # column max -> full red
    assert rgb[0, 0, 0] == 128  # half of column max
    assert tuple(rgb[0, 1]) == (0, 0, 255)  # empty column stays cold


def test_label_map_color_cycles():
    lm = LabelMap({i: i for i in range(40)}, {}, ignored_id=0)
    assert lm.color(0) == (0, 0, 0)
    assert lm.color(1) == lm.color(1 + 15)  # palette period
