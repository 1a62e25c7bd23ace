import numpy as np
import pytest

from vsrn.config import TrainConfig
from vsrn.corpus import generate_synthetic_corpus
from vsrn.model import VSRN
from vsrn.tensor import Tape, Tensor, backward
from vsrn.train import (
    Adam,
    TrainingError,
    clip_grad_norm,
    model_from_checkpoint,
    split_report,
    train,
)


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic_corpus(20, 8, 4, 10, 5, split_sizes=(12, 4, 4))


def cfg(**kw):
    base = dict(D=8, F=10, word_dim=8, rrr_layers=1, batch_size=4, epochs=3, decay_epoch=2, seed=1)
    base.update(kw)
    return TrainConfig(**base)


class TestAdam:
    def test_first_step_moves_by_lr_times_sign(self):
        p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        p.grad = np.array([0.5, -4.0, 1e-3])
        Adam([p]).step(0.1)
        # bias-corrected first step is lr * g / (|g| + eps)
        expected = np.array([1.0, -2.0, 3.0]) - 0.1 * p.grad / (np.abs(p.grad) + 1e-8)
        np.testing.assert_allclose(p.values, expected, rtol=1e-12)

    def test_zero_lr_is_identity(self):
        p = Tensor(np.array([0.25, 7.0]), requires_grad=True)
        p.grad = np.array([3.0, -1.0])
        before = p.values.tobytes()
        Adam([p]).step(0.0)
        assert p.values.tobytes() == before


class TestClip:
    def test_scales_to_max_norm(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        b = Tensor(np.zeros(1), requires_grad=True)
        a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
        assert clip_grad_norm([a, b], 2.0) == 5.0
        np.testing.assert_allclose(np.concatenate([a.grad, b.grad]), [1.2, 0.0, 1.6])

    def test_small_norm_untouched(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        a.grad = np.array([0.3, 0.4])
        clip_grad_norm([a], 2.0)
        np.testing.assert_array_equal(a.grad, [0.3, 0.4])


class TestTrain:
    def test_zero_learning_rate_leaves_parameters_bitwise(self, corpus):
        c = cfg(lr_initial=0.0, lr_decayed=0.0)
        result = train(c, corpus)
        init = VSRN.init(c, len(corpus.vocab)).state_dict()
        for name, arr in result.last.params.items():
            assert arr.tobytes() == init[name].tobytes(), name

    def test_ties_keep_earliest_epoch(self, corpus):
        result = train(cfg(lr_initial=0.0, lr_decayed=0.0), corpus)
        assert len({e.val_rsum for e in result.history}) == 1
        assert result.best.epoch == 1 and result.last.epoch == 3

    def test_logged_lr_follows_schedule(self, corpus):
        result = train(cfg(epochs=4, decay_epoch=2), corpus)
        assert [e.lr for e in result.history] == [0.0002, 0.0002, 0.00002, 0.00002]

    def test_reproducible(self, corpus):
        a, b = train(cfg(), corpus), train(cfg(), corpus)
        strip = lambda r: [(e.L_M, e.L_G, e.val_rsum) for e in r.history]  # noqa: E731
        assert strip(a) == strip(b)
        assert all(a.last.params[k].tobytes() == b.last.params[k].tobytes() for k in a.last.params)

    def test_best_checkpoint_matches_logged_rsum(self, corpus):
        result = train(cfg(epochs=4), corpus)
        best = max(result.history, key=lambda e: e.val_rsum)
        assert result.best.epoch == min(
            e.epoch for e in result.history if e.val_rsum == best.val_rsum
        )
        model = model_from_checkpoint(result.best)
        assert split_report(model, corpus, "val").rsum == result.best.val_rsum

    def test_generation_loss_off(self, corpus):
        result = train(cfg(use_generation_loss=False), corpus)
        assert all(e.L_G == 0.0 for e in result.history)
        assert all(e.L_M > 0.0 for e in result.history[:1])

    def test_generation_loss_off_gives_no_decoder_gradient(self, rng):
        c = cfg(use_generation_loss=False, F=6)
        model = VSRN.init(c, 12)
        feats = rng.normal(size=(3, 5, 6))
        orders = np.tile(np.arange(5), (3, 1))
        with Tape() as tape:
            l_m, l_g = model.losses(feats, orders, [[4, 5], [6], [7, 8, 9]])
        assert l_g is None
        backward(l_m, tape)
        for p in model.decoder_parameters():
            assert not np.any(p.grad)
        assert any(np.any(p.grad) for p in model.parameters())

    def test_single_pair_batch_has_no_matching_loss(self, rng):
        model = VSRN.init(cfg(F=6), 12)
        l_m, l_g = model.losses(rng.normal(size=(1, 5, 6)), np.arange(5)[None], [[4, 5, 6]])
        assert l_m.item() == 0.0 and l_g.item() > 0.0

    def test_stop_at_train_r1(self, corpus):
        result = train(cfg(epochs=400, lr_initial=0.01, decay_epoch=400, stop_at_train_r1=True), corpus)
        assert result.reached_train_r1 == result.history[-1].epoch

    def test_non_finite_loss_names_epoch_and_batch(self, corpus):
        broken = generate_synthetic_corpus(20, 8, 4, 10, 5, split_sizes=(12, 4, 4))
        for i in broken.indices("train"):
            broken.regions[i].features[0, 0] = np.nan
        with pytest.raises(TrainingError, match=r"epoch 1, batch 0"):
            train(cfg(), broken)

    def test_rejects_feature_width_mismatch(self, corpus):
        with pytest.raises(TrainingError, match="F=11"):
            train(cfg(F=11), corpus)

    def test_log_text_is_tab_separated(self, corpus):
        result = train(cfg(epochs=2), corpus)
        lines = result.log_text().splitlines()
        assert lines[0].split("\t")[0] == "epoch" and len(lines) == 3
        assert all(len(line.split("\t")) == 8 for line in lines)
