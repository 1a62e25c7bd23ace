"""Mini-batch training with Adam, a step learning-rate schedule and
snapshot selection by validation recall sum."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .checkpoint import Checkpoint
from .config import TrainConfig
from .corpus import SyntheticCorpus
from .model import VSRN
from .retrieval import RetrievalReport, evaluate, similarity_matrix
from .tensor import Tape, Tensor, backward

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class Adam:
    def __init__(self, params: list[Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.values = p.values - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad = p.grad * scale
    return total


@dataclass
class EpochLog:
    epoch: int
    lr: float
    L_M: float
    L_G: float
    val_rsum: float
    train_caption_r1: float
    train_image_r1: float
    seconds: float

    HEADER = "epoch\tlr\tL_M\tL_G\tval_rsum\ttrain_caption_r1\ttrain_image_r1\tseconds"

    def to_line(self) -> str:
        return (
            f"{self.epoch}\t{self.lr!r}\t{self.L_M:.6f}\t{self.L_G:.6f}\t{self.val_rsum:.4f}\t"
            f"{self.train_caption_r1:.4f}\t{self.train_image_r1:.4f}\t{self.seconds:.2f}"
        )


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    model: VSRN
    history: list[EpochLog] = field(default_factory=list)

    @property
    def reached_train_r1(self) -> int | None:
        """First epoch with train R@1 = 1.0 in both directions, if any."""
        for e in self.history:
            if e.train_caption_r1 == 1.0 and e.train_image_r1 == 1.0:
                return e.epoch
        return None

    def log_text(self) -> str:
        return EpochLog.HEADER + "\n" + "".join(e.to_line() + "\n" for e in self.history)


def split_report(model: VSRN, corpus: SyntheticCorpus, split: str) -> RetrievalReport:
    idx = corpus.indices(split)
    imgs, caps = model.embed_split(corpus, idx)
    return evaluate(similarity_matrix(imgs, caps, corpus.captions_per_image))


def train(
    config: TrainConfig,
    corpus: SyntheticCorpus,
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> TrainResult:
    if config.F != corpus.feature_dim:
        raise TrainingError(f"config F={config.F} but corpus features have {corpus.feature_dim}")
    train_idx, val_idx = corpus.indices("train"), corpus.indices("val")
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise TrainingError("corpus needs non-empty train and val splits")

    model = VSRN.init(config, len(corpus.vocab))
    params = model.parameters()
    opt = Adam(params)
    rng = np.random.default_rng(config.seed)
    orders = model.region_orders(corpus.regions, np.arange(len(corpus)))
    cpi = corpus.captions_per_image

    history: list[EpochLog] = []
    best: Checkpoint | None = None
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        lr = config.lr_at(epoch)
        perm = rng.permutation(train_idx)
        sums = np.zeros(2)
        n_batches = 0
        for b, lo in enumerate(range(0, len(perm), config.batch_size)):
            batch = perm[lo : lo + config.batch_size]
            feats, _, _ = corpus.stacked(batch)
            pick = rng.integers(cpi, size=len(batch)) if cpi > 1 else np.zeros(len(batch), int)
            caps = [corpus.captions[i][j] for i, j in zip(batch, pick)]
            model.zero_grad()
            with Tape() as tape:
                l_m, l_g = model.losses(feats, orders[batch], caps)
                loss = l_m if l_g is None else l_m + l_g
            lg_val = 0.0 if l_g is None else l_g.item()
            if not np.isfinite(loss.item()):
                raise TrainingError(
                    f"non-finite loss {loss.item()} at epoch {epoch}, batch {b} "
                    f"(L_M={l_m.item()}, L_G={lg_val})"
                )
            backward(loss, tape)
            clip_grad_norm(params, config.grad_clip)
            opt.step(lr)
            sums += (l_m.item(), lg_val)
            n_batches += 1

        val = split_report(model, corpus, "val")
        tr = split_report(model, corpus, "train")
        entry = EpochLog(
            epoch, lr, sums[0] / n_batches, sums[1] / n_batches, val.rsum,
            tr.caption_r1, tr.image_r1, time.perf_counter() - start,
        )
        history.append(entry)
        log.info(entry.to_line())
        if on_epoch is not None:
            on_epoch(entry)
        # strict comparison keeps the earliest epoch on ties
        if best is None or val.rsum > best.val_rsum:
            best = Checkpoint(config.to_text(), model.state_dict(), epoch, val.rsum)
        if config.stop_at_train_r1 and tr.caption_r1 == 1.0 and tr.image_r1 == 1.0:
            break
    last = Checkpoint(config.to_text(), model.state_dict(), history[-1].epoch, history[-1].val_rsum)
    return TrainResult(best, last, model, history)


def model_from_checkpoint(ckpt: Checkpoint) -> VSRN:
    config = TrainConfig.from_text(ckpt.config_text)
    return VSRN.from_state(config, ckpt.params)
