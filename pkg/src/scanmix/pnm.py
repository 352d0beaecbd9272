"""Byte-exact PGM/PPM encoders and the renderers built on them.

Netpbm binary formats (P5 graymap, P6 pixmap) keep goldens diffable
without an image-library dependency.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .labels import LabelMap


def encode_pgm(gray: np.ndarray) -> bytes:
    gray = np.asarray(gray, np.uint8)
    if gray.ndim != 2:
        raise ValueError("PGM wants a 2D array")
    header = f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode()
    return header + gray.tobytes()


def encode_ppm(rgb: np.ndarray) -> bytes:
    rgb = np.asarray(rgb, np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("PPM wants an (h, w, 3) array")
    header = f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode()
    return header + rgb.tobytes()


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(gray))


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(rgb))


def range_to_gray(ranges: np.ndarray, max_range: float) -> np.ndarray:
    """Normalize a range channel to uint8; empty pixels (range < 0) to 0."""
    r = np.asarray(ranges, np.float64)
    scaled = np.clip(r / max_range, 0.0, 1.0) * 255.0
    return np.where(r >= 0, np.round(scaled), 0).astype(np.uint8)


def labels_to_rgb(labels: np.ndarray, label_map: LabelMap) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((*labels.shape, 3), np.uint8)
    for cid in np.unique(labels):
        out[labels == cid] = label_map.color(int(cid))
    return out


def heatmap_to_rgb(matrix: np.ndarray) -> np.ndarray:
    """Blue-to-red heat colors for a matrix normalized per column.

    Each column (class) is scaled by its own maximum, mirroring per-class
    area-likelihood heatmaps: bright rows show where a class concentrates.
    """
    m = np.asarray(matrix, np.float64)
    col_max = m.max(axis=0, keepdims=True)
    norm = np.divide(m, col_max, out=np.zeros_like(m), where=col_max > 0)
    r = np.round(255 * norm).astype(np.uint8)
    b = np.round(255 * (1.0 - norm)).astype(np.uint8)
    g = np.round(64 * np.sin(np.pi * norm)).astype(np.uint8)
    return np.stack([r, g, b], axis=-1)


ERROR_CORRECT_BEV = (60, 170, 70)     # green
ERROR_CORRECT_RV = (160, 160, 160)    # gray
ERROR_WRONG = (200, 40, 40)           # red


def error_rgb_from_masks(correct: np.ndarray, wrong: np.ndarray, correct_color) -> np.ndarray:
    out = np.zeros((*correct.shape, 3), np.uint8)
    out[correct] = correct_color
    out[wrong] = ERROR_WRONG
    return out
