"""The full matching model: region embedding, relationship reasoning,
gated memory reasoning on the image side and a GRU encoder plus attention
decoder on the caption side."""

from __future__ import annotations

import numpy as np

from .config import TrainConfig
from .corpus import SyntheticCorpus
from .memory import GruCellParams, global_semantic_reason, init_gru, order_regions
from .objectives import matching_loss
from .region import (
    GcnLayerParams,
    RegionSet,
    embed_regions,
    init_gcn_layer,
    relationship_reason,
    uniform_init,
)
from .tensor import Tensor
from .text import TextEncoderParams, encode_captions, generation_loss, init_text


class VSRN:
    def __init__(
        self,
        config: TrainConfig,
        W_f: Tensor,
        b_f: Tensor,
        layers: list[GcnLayerParams],
        gsr: GruCellParams,
        text: TextEncoderParams,
    ):
        self.config = config
        self.W_f, self.b_f = W_f, b_f
        self.layers = layers
        self.gsr = gsr
        self.text = text

    @classmethod
    def init(cls, config: TrainConfig, vocab_size: int) -> "VSRN":
        rng = np.random.default_rng(config.seed)
        D = config.D
        return cls(
            config,
            W_f=uniform_init(rng, (config.F, D), D),
            b_f=Tensor(np.zeros(D), requires_grad=True),
            layers=[init_gcn_layer(rng, D) for _ in range(config.rrr_layers)],
            gsr=init_gru(rng, D, D),
            text=init_text(rng, vocab_size, D, config.word_dim),
        )

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"img.W_f": self.W_f, "img.b_f": self.b_f}
        for i, layer in enumerate(self.layers):
            out.update({f"rrr.{i}.{k}": v for k, v in layer.tensors().items()})
        out.update({f"gsr.{k}": v for k, v in self.gsr.tensors().items()})
        out.update({f"txt.{k}": v for k, v in self.text.tensors().items()})
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def decoder_parameters(self) -> list[Tensor]:
        names = self.named_parameters()
        return [v for k, v in names.items() if k.startswith(("txt.dec.", "txt.W_out", "txt.b_out"))]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        mine = self.named_parameters()
        if set(mine) != set(state):
            missing = sorted(set(mine) - set(state))
            extra = sorted(set(state) - set(mine))
            raise KeyError(f"parameter mismatch; missing {missing}, unexpected {extra}")
        for k, t in mine.items():
            if state[k].shape != t.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {t.shape}")
            t.values = np.array(state[k], dtype=np.float64)
            t.zero_grad()

    @classmethod
    def from_state(cls, config: TrainConfig, state: dict[str, np.ndarray]) -> "VSRN":
        model = cls.init(config, state["txt.embed"].shape[0])
        model.load_state_dict(state)
        return model

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- forward ----------------------------------------------------------

    def region_orders(self, regions: list[RegionSet], item_ids) -> np.ndarray:
        strategy = self.config.ordering
        return np.stack(
            [
                order_regions(r, strategy, seed=[self.config.seed, int(i)])
                for r, i in zip(regions, item_ids)
            ]
        )

    def image_forward(self, features, orders) -> tuple[Tensor, Tensor]:
        """Relationship-enhanced regions and final memory for a batch of images."""
        V = embed_regions(features, self.W_f, self.b_f)
        V_star = relationship_reason(V, self.layers)
        return V_star, global_semantic_reason(V_star, orders, self.gsr)

    def caption_forward(self, captions) -> Tensor:
        return encode_captions(captions, self.text)

    def losses(self, features, orders, captions) -> tuple[Tensor, Tensor | None]:
        V_star, images = self.image_forward(features, orders)
        caps = self.caption_forward(captions)
        l_m = matching_loss(
            images, caps, self.config.margin, normalize=self.config.normalize_embeddings
        )
        l_g = generation_loss(V_star, captions, self.text) if self.config.use_generation_loss else None
        return l_m, l_g

    # -- evaluation -------------------------------------------------------

    def embed_split(self, corpus: SyntheticCorpus, idx, chunk: int = 256):
        """Image and caption representations (numpy) for items ``idx``.

        Captions are flattened item-major, so caption ``j`` belongs to image
        ``j // captions_per_image``.
        """
        idx = np.asarray(idx)
        imgs, caps = [], []
        for start in range(0, len(idx), chunk):
            part = idx[start : start + chunk]
            feats, _, _ = corpus.stacked(part)
            orders = self.region_orders([corpus.regions[i] for i in part], part)
            imgs.append(self.image_forward(feats, orders)[1].values)
            flat = [c for i in part for c in corpus.captions[i]]
            caps.append(self.caption_forward(flat).values)
        imgs, caps = np.concatenate(imgs), np.concatenate(caps)
        if self.config.normalize_embeddings:
            imgs = imgs / np.linalg.norm(imgs, axis=1, keepdims=True).clip(1e-12)
            caps = caps / np.linalg.norm(caps, axis=1, keepdims=True).clip(1e-12)
        return imgs, caps
