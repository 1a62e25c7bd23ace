import numpy as np
import pytest

from vsrn.config import TrainConfig
from vsrn.model import VSRN


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def toy_model(seed=0, **kw):
    """D=8, k=5, |vocab|=12 sized model used by the gradient checks."""
    cfg = dict(D=8, F=6, word_dim=8, rrr_layers=4, batch_size=4, seed=seed)
    cfg.update(kw)
    return VSRN.init(TrainConfig(**cfg), 12)


def toy_batch(rng, B=4, k=5, F=6):
    feats = rng.normal(size=(B, k, F))
    orders = np.stack([rng.permutation(k) for _ in range(B)])
    caps = [[4, 5, 6], [7, 8], [9, 10, 11, 4], [5]][:B]
    return feats, orders, caps
