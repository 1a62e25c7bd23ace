"""Caption side: vocabulary, GRU sentence encoder and attention decoder.

Captions in a batch are right-padded with PAD; padded steps leave the
recurrent state untouched and contribute nothing to the generation loss.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .memory import GruCellParams, gru_step, init_gru
from .region import uniform_init
from .tensor import ShapeError, Tensor

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    @classmethod
    def build(cls, texts: Iterable[str], min_freq: int = 1) -> "Vocabulary":
        counts = Counter(tok for text in texts for tok in tokenize(text))
        return cls(sorted(t for t, c in counts.items() if c >= min_freq))

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(tok, UNK) for tok in tokenize(text)]

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.itos[i] for i in ids)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[:4]) != RESERVED:
            raise ValueError(f"{path}: vocabulary must start with {RESERVED}")
        return cls(lines[4:])


@dataclass
class TextEncoderParams:
    embed: Tensor
    encoder: GruCellParams
    decoder: GruCellParams
    W_out: Tensor
    b_out: Tensor

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    def tensors(self) -> dict[str, Tensor]:
        out = {"embed": self.embed, "W_out": self.W_out, "b_out": self.b_out}
        out.update({f"enc.{k}": v for k, v in self.encoder.tensors().items()})
        out.update({f"dec.{k}": v for k, v in self.decoder.tensors().items()})
        return out


def init_text(rng: np.random.Generator, vocab_size: int, D: int, word_dim: int = 300):
    return TextEncoderParams(
        embed=uniform_init(rng, (vocab_size, word_dim), word_dim),
        encoder=init_gru(rng, word_dim, D),
        decoder=init_gru(rng, word_dim + D, D),
        W_out=uniform_init(rng, (D, vocab_size), D),
        b_out=Tensor(np.zeros(vocab_size), requires_grad=True),
    )


def pad_batch(captions: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id lists with PAD; returns (ids B x L, lengths)."""
    lengths = np.array([len(c) for c in captions], dtype=np.intp)
    if len(captions) == 0 or np.any(lengths < 1):
        raise ValueError("captions must be non-empty")
    ids = np.full((len(captions), lengths.max()), PAD, dtype=np.intp)
    for i, c in enumerate(captions):
        ids[i, : len(c)] = c
    return ids, lengths


def _check_ids(ids: np.ndarray, params: TextEncoderParams) -> np.ndarray:
    # out-of-range ids fall back to UNK
    ids = np.asarray(ids, dtype=np.intp)
    return np.where((ids >= 0) & (ids < params.vocab_size), ids, UNK)


def _masked(new: Tensor, old: Tensor, mask: np.ndarray) -> Tensor:
    if mask.all():
        return new
    keep = mask[:, None].astype(np.float64)
    return new * keep + old * (1.0 - keep)


def encode_captions(captions: Sequence[Sequence[int]], params: TextEncoderParams) -> Tensor:
    """Final encoder state for each caption, ``B x D``."""
    ids, lengths = pad_batch(captions)
    ids = _check_ids(ids, params)
    B, L = ids.shape
    h = Tensor(np.zeros((B, params.encoder.dim)))
    for t in range(L):
        x = T.embedding(params.embed, ids[:, t])
        h = _masked(gru_step(x, h, params.encoder), h, t < lengths)
    return h


def encode_caption(tokens: Sequence[int], params: TextEncoderParams) -> Tensor:
    if len(tokens) == 0:
        raise ValueError("cannot encode an empty caption")
    return encode_captions([tokens], params)[0]


def sequence_nll(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Summed negative log-softmax probability of ``targets``.

    ``logits`` is ``B x L x V``; ``targets`` is ``B x L``.  Returns the mean
    over the batch of the per-sequence sums.
    """
    B, L, _ = logits.shape
    logp = T.log_softmax(logits, axis=-1)
    bi, ti = np.meshgrid(np.arange(B), np.arange(L), indexing="ij")
    picked = logp[bi, ti, np.asarray(targets, dtype=np.intp)]
    if mask is not None:
        picked = picked * mask.astype(np.float64)
    return T.mul(T.sum(picked), -1.0 / B)


def decoder_logits(V_star: Tensor, captions, params: TextEncoderParams, return_attention=False):
    """Teacher-forced decoder pass.

    Step t consumes the embedding of the previous target word (BOS first)
    concatenated with a dot-product attention read of ``V_star`` keyed by the
    previous decoder state.  Returns logits ``B x (L+1) x V``, the target
    ids (captions followed by EOS) and the step mask.
    """
    if V_star.ndim == 2:
        V_star = T.reshape(V_star, (1,) + V_star.shape)
    ids, lengths = pad_batch(captions)
    ids = _check_ids(ids, params)
    B, L = ids.shape
    if V_star.shape[0] != B:
        raise ShapeError(f"{V_star.shape[0]} region sets for {B} captions")
    if V_star.shape[-1] != params.decoder.dim:
        raise ShapeError(f"region dim {V_star.shape[-1]} != decoder dim {params.decoder.dim}")
    inputs = np.concatenate([np.full((B, 1), BOS, dtype=np.intp), ids], axis=1)
    targets = np.concatenate([ids, np.full((B, 1), PAD, dtype=np.intp)], axis=1)
    targets[np.arange(B), lengths] = EOS
    mask = np.arange(L + 1)[None, :] <= lengths[:, None]

    h = Tensor(np.zeros((B, params.decoder.dim)))
    steps, weights = [], []
    for t in range(L + 1):
        scores = T.matmul(V_star, T.reshape(h, (B, -1, 1)))
        att = T.softmax(T.reshape(scores, (B, 1, -1)), axis=-1)
        ctx = T.reshape(T.matmul(att, V_star), (B, -1))
        x = T.concat([T.embedding(params.embed, inputs[:, t]), ctx], axis=-1)
        h = _masked(gru_step(x, h, params.decoder), h, mask[:, t])
        steps.append(T.reshape(T.matmul(h, params.W_out) + params.b_out, (B, 1, -1)))
        weights.append(att.values.reshape(B, -1))
    logits = T.concat(steps, axis=1)
    if return_attention:
        return logits, targets, mask, np.stack(weights, axis=1)
    return logits, targets, mask


def generation_loss(V_star: Tensor, captions, params: TextEncoderParams) -> Tensor:
    """Teacher-forced negative log-likelihood, summed over steps, mean over batch.

    A single caption (list of ints) is accepted with a ``k x D`` region matrix.
    """
    if len(captions) > 0 and np.isscalar(captions[0]):
        captions = [captions]
    logits, targets, mask = decoder_logits(V_star, captions, params)
    return sequence_nll(logits, targets, mask)
