"""Bidirectional Recall@K, fold averaging and score-average ensembling."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from statistics import mean
from typing import Sequence

import numpy as np

from .tensor import ShapeError

DIRECTIONS = ("caption_retrieval", "image_retrieval")
KS = (1, 5, 10)


@dataclass
class SimilarityMatrix:
    """Scores of every image (rows) against every caption (columns).

    Caption ``j`` belongs to image ``j // captions_per_image``.
    """

    s: np.ndarray
    captions_per_image: int = 1

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.s.ndim != 2 or self.captions_per_image < 1:
            raise ShapeError("similarity matrix must be 2-D with captions_per_image >= 1")
        if self.s.shape[1] != self.s.shape[0] * self.captions_per_image:
            raise ShapeError(
                f"{self.s.shape[0]} images need {self.s.shape[0] * self.captions_per_image} "
                f"captions, got {self.s.shape[1]}"
            )
        if not np.all(np.isfinite(self.s)):
            raise ValueError("similarity matrix contains non-finite values")

    @property
    def n_images(self) -> int:
        return self.s.shape[0]

    def fold(self, start: int, stop: int) -> "SimilarityMatrix":
        c = self.captions_per_image
        return SimilarityMatrix(self.s[start:stop, start * c : stop * c], c)


@dataclass
class RetrievalReport:
    caption_r1: float
    caption_r5: float
    caption_r10: float
    image_r1: float
    image_r5: float
    image_r10: float

    @property
    def rsum(self) -> float:
        return (
            self.caption_r1 + self.caption_r5 + self.caption_r10
            + self.image_r1 + self.image_r5 + self.image_r10
        )

    def items(self) -> list[tuple[str, float]]:
        out = [(f.name, getattr(self, f.name)) for f in fields(self)]
        return out + [("rsum", self.rsum)]

    def to_text(self) -> str:
        return "".join(f"{name}\t{value:.4f}\n" for name, value in self.items())

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RetrievalReport":
        values = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            name, value = line.split("\t")
            values[name] = float(value)
        values.pop("rsum", None)
        return cls(**values)


def similarity_matrix(images, captions, captions_per_image: int = 1) -> SimilarityMatrix:
    """Inner product of every image representation with every caption one."""
    imgs = np.array([np.asarray(getattr(x, "values", x), dtype=np.float64) for x in images])
    caps = np.array([np.asarray(getattr(x, "values", x), dtype=np.float64) for x in captions])
    if len(imgs) == 0 or len(caps) == 0:
        raise ValueError("need at least one image and one caption")
    if imgs.ndim != 2 or caps.ndim != 2 or imgs.shape[1] != caps.shape[1]:
        raise ShapeError(f"representation dims differ: {imgs.shape} vs {caps.shape}")
    return SimilarityMatrix(imgs @ caps.T, captions_per_image)


def _ranking(scores: np.ndarray) -> np.ndarray:
    # descending score, ties by ascending candidate index
    return np.argsort(-scores, axis=-1, kind="stable")


def best_ranks(sim: SimilarityMatrix, direction: str) -> np.ndarray:
    """0-based rank of the best ground-truth candidate for every query."""
    c = sim.captions_per_image
    if direction == "caption_retrieval":
        order = _ranking(sim.s)
        owner = order // c
        hits = owner == np.arange(sim.n_images)[:, None]
    elif direction == "image_retrieval":
        order = _ranking(sim.s.T)
        hits = order == (np.arange(sim.s.shape[1]) // c)[:, None]
    else:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    return hits.argmax(axis=1)


def recall_at_k(sim: SimilarityMatrix, k: int, direction: str) -> float:
    """Fraction of queries whose ground truth is among the top ``k`` candidates."""
    n_candidates = sim.s.shape[1] if direction == "caption_retrieval" else sim.s.shape[0]
    if not 1 <= k <= n_candidates:
        raise ValueError(f"k={k} outside 1..{n_candidates}")
    return float(np.mean(best_ranks(sim, direction) < k))


def evaluate(sim: SimilarityMatrix) -> RetrievalReport:
    """R@1/5/10 in both directions; K is capped at the candidate count."""
    n_caps, n_imgs = sim.s.shape[1], sim.s.shape[0]
    values = {}
    for direction, prefix, n in (
        ("caption_retrieval", "caption", n_caps),
        ("image_retrieval", "image", n_imgs),
    ):
        ranks = best_ranks(sim, direction)
        for k in KS:
            values[f"{prefix}_r{k}"] = float(np.mean(ranks < min(k, n)))
    return RetrievalReport(**values)


def fold_average(reports: Sequence[RetrievalReport]) -> RetrievalReport:
    if not reports:
        raise ValueError("need at least one report to average")
    # statistics.mean works in exact rationals, so identical folds average to themselves
    names = [f.name for f in fields(RetrievalReport)]
    return RetrievalReport(**{n: float(mean(getattr(r, n) for r in reports)) for n in names})


def evaluate_folds(sim: SimilarityMatrix, n_folds: int = 5) -> tuple[RetrievalReport, list]:
    """Split the images into contiguous equal folds, evaluate each, average."""
    n = sim.n_images
    if n_folds < 1 or n % n_folds:
        raise ValueError(f"{n} images do not split into {n_folds} equal folds")
    size = n // n_folds
    reports = [evaluate(sim.fold(i * size, (i + 1) * size)) for i in range(n_folds)]
    return fold_average(reports), reports


def ensemble_scores(mats: Sequence[SimilarityMatrix]) -> SimilarityMatrix:
    if not mats:
        raise ValueError("need at least one similarity matrix")
    first = mats[0]
    for m in mats[1:]:
        if m.s.shape != first.s.shape or m.captions_per_image != first.captions_per_image:
            raise ShapeError(f"cannot ensemble {m.s.shape} with {first.s.shape}")
    return SimilarityMatrix(np.mean([m.s for m in mats], axis=0), first.captions_per_image)
