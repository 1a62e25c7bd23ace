"""Rank-based attention maps for the final image representation.

Regions are ranked by inner product with the image representation; rank r
(1 = most correlated) scores ``lam * (k - r)**2``, and every pixel sums the
scores of the boxes covering it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_LAMBDA = 50.0


@dataclass
class AttentionMap:
    scores: np.ndarray  # height x width

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def height(self) -> int:
        return self.scores.shape[0]


def region_rank_scores(V_star, image_repr, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    V = np.asarray(getattr(V_star, "values", V_star), dtype=np.float64)
    I = np.asarray(getattr(image_repr, "values", image_repr), dtype=np.float64)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    k = V.shape[0]
    corr = V @ I
    order = np.argsort(-corr, kind="stable")
    ranks = np.empty(k, dtype=np.int64)
    ranks[order] = np.arange(1, k + 1)
    return lam * (k - ranks).astype(np.float64) ** 2


def _clamped(box, width: int, height: int) -> tuple[int, int, int, int]:
    x, y, w, h = (float(v) for v in box)
    x0 = int(np.clip(np.floor(x), 0, width))
    y0 = int(np.clip(np.floor(y), 0, height))
    x1 = int(np.clip(np.floor(x + w), 0, width))
    y1 = int(np.clip(np.floor(y + h), 0, height))
    return x0, y0, x1, y1


def render_heatmap(boxes, scores, width: int, height: int) -> AttentionMap:
    """Per-pixel sum of the scores of every box covering the pixel.

    A box ``(x, y, w, h)`` covers columns ``[x, x+w)`` and rows ``[y, y+h)``
    (floored to whole pixels), clamped to the canvas.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"canvas must be positive, got {width}x{height}")
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if len(boxes) != len(scores):
        raise ValueError("need one score per box")
    if np.any(scores < 0):
        raise ValueError("scores must be non-negative")
    grid = np.zeros((height, width))
    for box, s in zip(boxes, scores):
        x0, y0, x1, y1 = _clamped(box, width, height)
        grid[y0:y1, x0:x1] += s
    return AttentionMap(grid)


def graymap_bytes(amap: AttentionMap) -> bytes:
    """Binary P5 image, linear to 0..255 by the map maximum, round half up."""
    grid = amap.scores
    peak = grid.max() if grid.size else 0.0
    if peak > 0:
        pixels = np.floor(255.0 * grid / peak + 0.5).astype(np.uint8)
    else:
        pixels = np.zeros(grid.shape, dtype=np.uint8)
    header = f"P5\n{amap.width} {amap.height}\n255\n".encode("ascii")
    return header + pixels.tobytes(order="C")


def write_graymap(amap: AttentionMap, path) -> Path:
    path = Path(path)
    path.write_bytes(graymap_bytes(amap))
    return path


def read_graymap(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary graymap")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
