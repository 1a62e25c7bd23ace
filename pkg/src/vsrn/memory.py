"""Gated memory reasoning over an ordered region sequence.

The memory starts at zero and is updated once per region; the memory after
the last region is the image representation.  The same cell is reused by the
caption encoder and the decoder with their own parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .region import uniform_init
from .tensor import ShapeError, Tensor

ORDERINGS = ("confidence", "bboxsize", "random")


class OrderingError(ValueError):
    pass


@dataclass
class GruCellParams:
    """Input maps W_* are ``in_dim x D``; recurrent maps U_* are ``D x D``."""

    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_m: Tensor
    U_m: Tensor
    b_m: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @property
    def dim(self) -> int:
        return self.U_z.shape[0]


def init_gru(rng: np.random.Generator, in_dim: int, D: int) -> GruCellParams:
    parts = {}
    for gate in ("z", "r", "m"):
        parts[f"W_{gate}"] = uniform_init(rng, (in_dim, D), D)
        parts[f"U_{gate}"] = uniform_init(rng, (D, D), D)
        parts[f"b_{gate}"] = Tensor(np.zeros(D), requires_grad=True)
    return GruCellParams(**parts)


def gru_gates(v: Tensor, m: Tensor, p: GruCellParams):
    """Return (z, r, candidate, new memory) for one step."""
    if v.shape[-1] != p.W_z.shape[0] or m.shape[-1] != p.dim:
        raise ShapeError(
            f"gru_step got input {v.shape} / memory {m.shape} for cell "
            f"{p.W_z.shape[0]} -> {p.dim}"
        )
    z = T.sigmoid(T.matmul(v, p.W_z) + T.matmul(m, p.U_z) + p.b_z)
    r = T.sigmoid(T.matmul(v, p.W_r) + T.matmul(m, p.U_r) + p.b_r)
    cand = T.tanh(T.matmul(v, p.W_m) + T.matmul(r * m, p.U_m) + p.b_m)
    new = (1.0 - z) * m + z * cand
    return z, r, cand, new


def gru_step(v: Tensor, m: Tensor, params: GruCellParams) -> Tensor:
    return gru_gates(T.as_tensor(v), T.as_tensor(m), params)[3]


def _check_order(order: np.ndarray, k: int) -> np.ndarray:
    order = np.asarray(order)
    if order.shape[-1] != k or not np.issubdtype(order.dtype, np.integer):
        raise OrderingError(f"order must list {k} integer region indices")
    rows = order.reshape(-1, k)
    expected = np.arange(k)
    for row in rows:
        if not np.array_equal(np.sort(row), expected):
            raise OrderingError(f"{row.tolist()} is not a permutation of 0..{k - 1}")
    return order


def global_semantic_reason(V_star: Tensor, order, params: GruCellParams) -> Tensor:
    """Run the memory cell over the regions in ``order``; return the final memory.

    ``V_star`` is ``k x D`` with ``order`` of length k, or ``B x k x D`` with
    a ``B x k`` array of per-image orders.
    """
    k = V_star.shape[-2]
    if k < 1:
        raise OrderingError("need at least one region")
    order = _check_order(order, k)
    batched = V_star.ndim == 3
    if batched and order.shape != (V_star.shape[0], k):
        raise OrderingError(f"batched order must have shape {(V_star.shape[0], k)}")
    lead = V_star.shape[:-2]
    m = Tensor(np.zeros(lead + (params.dim,)))
    rows = np.arange(V_star.shape[0]) if batched else None
    for i in range(k):
        v = V_star[rows, order[:, i]] if batched else V_star[int(order[i])]
        m = gru_step(v, m, params)
    return m


def order_regions(regions, strategy: str = "confidence", seed: int | None = None) -> np.ndarray:
    """Visiting order for the memory cell.

    ``confidence`` and ``bboxsize`` sort descending by detection confidence or
    box area; ``random`` is a seeded shuffle.  Ties keep ascending index.
    """
    strategy = strategy.lower()
    k = regions.k
    if strategy == "confidence":
        key = regions.confidences
    elif strategy == "bboxsize":
        key = regions.boxes[:, 2] * regions.boxes[:, 3]
    elif strategy == "random":
        return np.random.default_rng(seed).permutation(k)
    else:
        raise OrderingError(f"unknown ordering {strategy!r}; choose from {ORDERINGS}")
    return np.argsort(-key, kind="stable")
