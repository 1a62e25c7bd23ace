"""Synthetic paired corpus and its binary file format.

Every item draws a distinct set of concepts.  Each region is a noisy copy
of one of the item's concept prototypes, and the caption names the
concepts in random order, so image ``i`` matches caption ``i``.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .region import RegionSet
from .text import Vocabulary

SPLITS = ("train", "val", "test")
CORPUS_MAGIC = b"VSRC"
CORPUS_VERSION = 1

CONCEPT_NAMES = (
    "dog cat horse bird car bus train boat person child tree grass sky road "
    "table chair cup plate pizza cake ball kite umbrella bench clock phone "
    "laptop book bed sofa window door"
).split()


class FormatError(ValueError):
    pass


class CorruptionError(ValueError):
    pass


@dataclass
class SyntheticCorpus:
    regions: list[RegionSet]
    captions: list[list[list[int]]]  # per item, one or more id lists
    splits: np.ndarray  # 0 train, 1 val, 2 test
    vocab: Vocabulary
    canvas: tuple[int, int] = (64, 64)

    def __len__(self) -> int:
        return len(self.regions)

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.splits == SPLITS.index(split))

    @property
    def captions_per_image(self) -> int:
        counts = {len(c) for c in self.captions}
        if len(counts) != 1:
            raise ValueError("items carry different numbers of captions")
        return counts.pop()

    @property
    def feature_dim(self) -> int:
        return self.regions[0].features.shape[1]

    def stacked(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """features (B x k x F), boxes, confidences for the given items."""
        sel = [self.regions[i] for i in idx]
        if len({r.k for r in sel}) != 1:
            raise ValueError("batched items must have the same region count")
        return (
            np.stack([r.features for r in sel]),
            np.stack([r.boxes for r in sel]),
            np.stack([r.confidences for r in sel]),
        )

    def concept_sets(self) -> list[frozenset[str]]:
        return [frozenset(self.vocab.decode(c[0]).split()) for c in self.captions]


def _concept_names(n: int) -> list[str]:
    if n <= len(CONCEPT_NAMES):
        return list(CONCEPT_NAMES[:n])
    return [f"concept{i}" for i in range(n)]


def generate_synthetic_corpus(
    n_items: int,
    n_concepts: int,
    k_regions: int,
    F: int,
    seed: int,
    *,
    split_sizes: tuple[int, int, int] | None = None,
    concepts_per_item: int = 3,
    captions_per_item: int = 1,
    noise: float = 0.1,
    canvas: tuple[int, int] = (64, 64),
) -> SyntheticCorpus:
    if n_concepts < 2 or k_regions < 1 or F < 1 or n_items < 1:
        raise ValueError("need n_concepts >= 2, k_regions >= 1, F >= 1, n_items >= 1")
    s = concepts_per_item
    if not 1 <= s <= min(n_concepts, k_regions):
        raise ValueError("concepts_per_item must lie in 1..min(n_concepts, k_regions)")
    if n_items > math.comb(n_concepts, s):
        raise ValueError(f"only {math.comb(n_concepts, s)} distinct concept sets exist")
    if split_sizes is None:
        n_val = n_test = n_items // 5
        split_sizes = (n_items - n_val - n_test, n_val, n_test)
    if sum(split_sizes) != n_items or min(split_sizes) < 0:
        raise ValueError("split sizes must be non-negative and sum to n_items")
    W, H = canvas

    rng = np.random.default_rng(seed)
    names = _concept_names(n_concepts)
    prototypes = rng.normal(size=(n_concepts, F)) / np.sqrt(F)

    seen: set[tuple[int, ...]] = set()
    regions, caption_texts = [], []
    while len(regions) < n_items:
        chosen = tuple(sorted(rng.choice(n_concepts, size=s, replace=False).tolist()))
        if chosen in seen:
            continue
        seen.add(chosen)
        assign = np.concatenate([chosen, rng.choice(chosen, size=k_regions - s)])
        assign = rng.permutation(assign)
        feats = prototypes[assign] + noise * rng.normal(size=(k_regions, F))
        w = rng.integers(8, max(9, W * 5 // 8), size=k_regions, endpoint=True)
        h = rng.integers(8, max(9, H * 5 // 8), size=k_regions, endpoint=True)
        w, h = np.minimum(w, W), np.minimum(h, H)
        x = rng.integers(0, W - w, endpoint=True)
        y = rng.integers(0, H - h, endpoint=True)
        boxes = np.stack([x, y, w, h], axis=1).astype(np.float64)
        conf = rng.uniform(0.3, 1.0, size=k_regions)
        regions.append(RegionSet(feats, boxes, conf))
        caption_texts.append(
            [" ".join(names[c] for c in rng.permutation(chosen)) for _ in range(captions_per_item)]
        )

    splits = np.repeat(np.arange(3), split_sizes)
    vocab = Vocabulary.build(t for texts, sp in zip(caption_texts, splits) if sp == 0 for t in texts)
    captions = [[vocab.encode(t) for t in texts] for texts in caption_texts]
    return SyntheticCorpus(regions, captions, splits, vocab, (W, H))


def concept_overlap_probability(n_concepts: int, concepts_per_item: int) -> float:
    """Chance that two distinct uniformly drawn concept sets share a concept."""
    total = math.comb(n_concepts, concepts_per_item)
    disjoint = math.comb(n_concepts - concepts_per_item, concepts_per_item)
    return 1.0 - disjoint / (total - 1)


# ----------------------------------------------------------------------
# binary format (little endian, crc32 trailer)
# ----------------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data, self.pos, self.what = data, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError(f"{self.what}: truncated at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, n: int = 1) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def check_envelope(data: bytes, magic: bytes, version: int, what: str) -> _Reader:
    """Validate magic, version and crc32 trailer; return a reader over the body."""
    if len(data) < len(magic) + 8:
        raise CorruptionError(f"{what}: file too short ({len(data)} bytes)")
    if data[: len(magic)] != magic:
        raise FormatError(f"{what}: bad magic {data[:len(magic)]!r}")
    (found,) = struct.unpack("<I", data[len(magic) : len(magic) + 4])
    if found != version:
        raise FormatError(f"{what}: unsupported format version {found}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptionError(f"{what}: checksum mismatch")
    reader = _Reader(body, what)
    reader.pos = len(magic) + 4
    return reader


def seal(parts: list[bytes]) -> bytes:
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def corpus_bytes(corpus: SyntheticCorpus) -> bytes:
    parts = [CORPUS_MAGIC, struct.pack("<IIII", CORPUS_VERSION, *corpus.canvas, len(corpus))]
    for reg, caps, split in zip(corpus.regions, corpus.captions, corpus.splits):
        k, F = reg.features.shape
        parts.append(struct.pack("<III", int(split), k, F))
        parts.append(reg.features.astype("<f8").tobytes())
        parts.append(reg.boxes.astype("<f8").tobytes())
        parts.append(reg.confidences.astype("<f8").tobytes())
        parts.append(struct.pack("<I", len(caps)))
        for ids in caps:
            parts.append(struct.pack(f"<I{len(ids)}I", len(ids), *ids))
    return seal(parts)


def vocab_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".vocab")


def save_corpus(corpus: SyntheticCorpus, path) -> Path:
    path = Path(path)
    path.write_bytes(corpus_bytes(corpus))
    corpus.vocab.save(vocab_path(path))
    return path


def load_corpus(path) -> SyntheticCorpus:
    path = Path(path)
    r = check_envelope(path.read_bytes(), CORPUS_MAGIC, CORPUS_VERSION, str(path))
    W, H, n = r.u32(), r.u32(), r.u32()
    regions, captions, splits = [], [], []
    for _ in range(n):
        split, k, F = r.u32(), r.u32(), r.u32()
        feats = r.f64(k * F).reshape(k, F)
        boxes = r.f64(k * 4).reshape(k, 4)
        conf = r.f64(k)
        caps = []
        for _ in range(r.u32()):
            length = r.u32()
            caps.append(list(struct.unpack(f"<{length}I", r.take(4 * length))))
        regions.append(RegionSet(feats, boxes, conf))
        captions.append(caps)
        splits.append(split)
    if r.pos != len(r.data):
        raise CorruptionError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return SyntheticCorpus(
        regions, captions, np.array(splits, dtype=np.int64), Vocabulary.load(vocab_path(path)), (W, H)
    )
