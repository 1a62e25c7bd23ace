"""Region embedding and relationship reasoning over a fully-connected graph.

All functions accept either one image (``k x D``) or a batch of images with
the same region count (``B x k x D``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


@dataclass
class RegionSet:
    """Raw detector output for one image: features, boxes and confidences.

    ``boxes`` rows are ``(x, y, width, height)`` in pixels.
    """

    features: np.ndarray
    boxes: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.confidences = np.asarray(self.confidences, dtype=np.float64).reshape(-1)
        k = self.features.shape[0]
        if self.features.ndim != 2 or k < 1:
            raise ValueError("features must be a non-empty k x F matrix")
        if self.boxes.shape[0] != k or self.confidences.shape[0] != k:
            raise ValueError("boxes and confidences must have one entry per region")
        if np.any(self.boxes[:, 2:] <= 0):
            raise ValueError("box width and height must be positive")
        if np.any((self.confidences < 0) | (self.confidences > 1)):
            raise ValueError("confidences must lie in [0, 1]")

    @property
    def k(self) -> int:
        return self.features.shape[0]


@dataclass
class GcnLayerParams:
    W_phi: Tensor
    W_psi: Tensor
    W_g: Tensor
    W_res: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {"W_phi": self.W_phi, "W_psi": self.W_psi, "W_g": self.W_g, "W_res": self.W_res}


def uniform_init(rng: np.random.Generator, shape, fan: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_gcn_layer(rng: np.random.Generator, D: int) -> GcnLayerParams:
    return GcnLayerParams(*(uniform_init(rng, (D, D), D) for _ in range(4)))


def embed_regions(features, W_f: Tensor, b_f: Tensor) -> Tensor:
    """v_i = f_i W_f + b_f for every region row."""
    features = T.as_tensor(features)
    if features.shape[-1] != W_f.shape[0]:
        raise ShapeError(
            f"region features have F={features.shape[-1]} but W_f expects {W_f.shape[0]}"
        )
    return T.matmul(features, W_f) + b_f


def pairwise_affinity(V: Tensor, params: GcnLayerParams) -> Tensor:
    """R[i, j] = (v_i W_phi) . (v_j W_psi); not symmetric in general."""
    if V.shape[-2] < 1:
        raise ShapeError("need at least one region")
    phi = T.matmul(V, params.W_phi)
    psi = T.matmul(V, params.W_psi)
    return T.matmul(phi, T.transpose(psi))


def gcn_layer(V: Tensor, params: GcnLayerParams) -> Tensor:
    """Residual graph convolution: normalize(R) V W_g W_res + V."""
    R = T.row_normalize(pairwise_affinity(V, params))
    agg = T.matmul(T.matmul(R, V), params.W_g)
    return T.matmul(agg, params.W_res) + V


def relationship_reason(V: Tensor, layers: list[GcnLayerParams]) -> Tensor:
    for layer in layers:
        V = gcn_layer(V, layer)
    return V
