"""Hinge triplet loss with in-batch hardest negatives, and the joint loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


def similarity(i, c) -> Tensor:
    """Inner product of an image and a caption representation."""
    i, c = T.as_tensor(i), T.as_tensor(c)
    if i.shape != c.shape:
        raise ShapeError(f"similarity needs equal shapes, got {i.shape} and {c.shape}")
    return T.dot(i, c)


def hardest_negatives(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(caption index per image, image index per caption), excluding the diagonal.

    ``argmax`` returns the first maximum, so ties go to the lowest index.
    """
    masked = S.astype(np.float64, copy=True)
    np.fill_diagonal(masked, -np.inf)
    return masked.argmax(axis=1), masked.argmax(axis=0)


def matching_loss_from_scores(S: Tensor, alpha: float = 0.2) -> Tensor:
    """Summed hinge terms of a ``B x B`` score matrix whose diagonal holds positives."""
    if alpha < 0:
        raise ValueError("margin must be non-negative")
    B = S.shape[0]
    if S.shape != (B, B):
        raise ShapeError(f"score matrix must be square, got {S.shape}")
    if B == 1:
        return T.mul(T.sum(S), 0.0)
    c_hat, i_hat = hardest_negatives(S.values)
    idx = np.arange(B)
    pos = S[idx, idx]
    cost_c = T.relu(alpha - pos + S[idx, c_hat])
    cost_i = T.relu(alpha - pos + S[i_hat, idx])
    return T.sum(cost_c) + T.sum(cost_i)


def matching_loss(images: Tensor, captions: Tensor, alpha: float = 0.2, normalize=False) -> Tensor:
    """Triplet ranking loss over a batch of paired ``B x D`` representations."""
    images, captions = T.as_tensor(images), T.as_tensor(captions)
    if images.shape != captions.shape or images.ndim != 2 or images.shape[0] < 1:
        raise ShapeError(f"paired batches must match: {images.shape} vs {captions.shape}")
    if normalize:
        images, captions = T.l2_normalize(images), T.l2_normalize(captions)
    return matching_loss_from_scores(T.matmul(images, T.transpose(captions)), alpha)


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class LossBreakdown:
    L_M: float
    L_G: float
    L: float


def joint_loss(l_m, l_g):
    """L = L_M + L_G.

    Plain floats give a :class:`LossBreakdown`; tensors give the summed
    tensor (still on the tape) so it can be differentiated.
    """
    vm = l_m.item() if isinstance(l_m, Tensor) else float(l_m)
    vg = l_g.item() if isinstance(l_g, Tensor) else float(l_g)
    for name, v in (("L_M", vm), ("L_G", vg)):
        if not np.isfinite(v) or v < 0:
            raise ContractError(f"{name} must be finite and non-negative, got {v}")
    if isinstance(l_m, Tensor) or isinstance(l_g, Tensor):
        return T.add(l_m, l_g)
    return LossBreakdown(vm, vg, vm + vg)
