import numpy as np
import pytest

from vsrn import tensor as T
from vsrn.gradcheck import grad_check
from vsrn.memory import (
    GruCellParams,
    OrderingError,
    global_semantic_reason,
    gru_gates,
    gru_step,
    init_gru,
    order_regions,
)
from vsrn.region import RegionSet
from vsrn.tensor import ShapeError, Tensor


def zero_cell(D, in_dim=None):
    in_dim = in_dim or D
    parts = {}
    for g in "zrm":
        parts[f"W_{g}"] = Tensor(np.zeros((in_dim, D)))
        parts[f"U_{g}"] = Tensor(np.zeros((D, D)))
        parts[f"b_{g}"] = Tensor(np.zeros(D))
    return GruCellParams(**parts)


def scalar_oracle(v, m, p):
    """Gate formulas written out one output unit at a time."""
    sig = lambda a: 1.0 / (1.0 + np.exp(-a))  # noqa: E731
    W = {n: getattr(p, n).values for n in p.__dataclass_fields__}
    D = len(m)
    z = [sig(sum(v[a] * W["W_z"][a, d] for a in range(len(v)))
             + sum(m[a] * W["U_z"][a, d] for a in range(D)) + W["b_z"][d]) for d in range(D)]
    r = [sig(sum(v[a] * W["W_r"][a, d] for a in range(len(v)))
             + sum(m[a] * W["U_r"][a, d] for a in range(D)) + W["b_r"][d]) for d in range(D)]
    cand = [np.tanh(sum(v[a] * W["W_m"][a, d] for a in range(len(v)))
                    + sum(r[a] * m[a] * W["U_m"][a, d] for a in range(D)) + W["b_m"][d])
            for d in range(D)]
    return np.array([(1 - z[d]) * m[d] + z[d] * cand[d] for d in range(D)])


class TestGruStep:
    def test_zero_parameters_halve_memory(self):
        z, r, cand, new = gru_gates(Tensor([1.0]), Tensor([0.4]), zero_cell(1))
        assert (z.values[0], r.values[0], cand.values[0]) == (0.5, 0.5, 0.0)
        assert new.values[0] == pytest.approx(0.2, abs=1e-16)

    def test_origin_is_fixed_point(self, rng):
        p = init_gru(rng, 4, 4)
        p.W_m = Tensor(np.zeros((4, 4)))
        out = gru_step(Tensor(rng.normal(size=4)), Tensor(np.zeros(4)), p)
        assert not out.values.any()

    def test_scalar_oracle(self, rng):
        p = init_gru(rng, 4, 4)
        for name in ("b_z", "b_r", "b_m"):
            getattr(p, name).values = rng.normal(size=4)
        v, m = rng.normal(size=4), rng.uniform(-0.9, 0.9, size=4)
        out = gru_step(Tensor(v), Tensor(m), p).values
        np.testing.assert_allclose(out, scalar_oracle(v, m, p), rtol=0, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            gru_step(Tensor(np.ones(3)), Tensor(np.zeros(4)), init_gru(rng, 4, 4))


class TestGlobalReasoning:
    def test_single_region(self, rng):
        p = init_gru(rng, 3, 3)
        V = rng.normal(size=(1, 3))
        out = global_semantic_reason(Tensor(V), [0], p).values
        np.testing.assert_array_equal(out, gru_step(Tensor(V[0]), Tensor(np.zeros(3)), p).values)

    def test_zero_parameters(self, rng):
        out = global_semantic_reason(Tensor(rng.normal(size=(5, 3))), np.arange(5), zero_cell(3))
        assert not out.values.any()

    def test_unrolled_fold(self, rng):
        p = init_gru(rng, 4, 4)
        V = rng.normal(size=(6, 4))
        order = rng.permutation(6)
        m = np.zeros(4)
        for i in order:
            m = scalar_oracle(V[i], m, p)
        out = global_semantic_reason(Tensor(V), order, p).values
        np.testing.assert_allclose(out, m, rtol=0, atol=1e-12)

    def test_batched_orders(self, rng):
        p = init_gru(rng, 4, 4)
        V = rng.normal(size=(3, 5, 4))
        orders = np.stack([rng.permutation(5) for _ in range(3)])
        out = global_semantic_reason(Tensor(V), orders, p).values
        for b in range(3):
            single = global_semantic_reason(Tensor(V[b]), orders[b], p).values
            np.testing.assert_allclose(out[b], single, atol=1e-14)

    @pytest.mark.parametrize("order", [[0, 0, 1], [0, 1], [0, 1, 3], [0.0, 1.0, 2.0]])
    def test_invalid_order(self, rng, order):
        with pytest.raises(OrderingError):
            global_semantic_reason(Tensor(rng.normal(size=(3, 2))), np.array(order), init_gru(rng, 2, 2))

    def test_grad_check(self, rng):
        p = init_gru(rng, 8, 8)
        V = Tensor(rng.normal(size=(5, 8)), requires_grad=True)
        order = rng.permutation(5)
        w = rng.normal(size=8)
        params = [V, *p.tensors().values()]
        assert grad_check(lambda: T.dot(global_semantic_reason(V, order, p), w), params) < 1e-4

    def test_bounds(self, rng):
        for _ in range(50):
            p = init_gru(rng, 4, 4)
            for t in p.tensors().values():
                t.values = rng.normal(size=t.shape)
            m = Tensor(np.zeros(4))
            for v in rng.normal(size=(8, 4)):
                z, r, _, m = gru_gates(Tensor(v), m, p)
                assert np.all((z.values > 0) & (z.values < 1))
                assert np.all((r.values > 0) & (r.values < 1))
                assert np.all(np.abs(m.values) < 1)


def regions(conf=None, boxes=None, k=3):
    conf = np.full(k, 0.5) if conf is None else np.asarray(conf)
    boxes = np.tile([0, 0, 1, 1], (len(conf), 1)) if boxes is None else boxes
    return RegionSet(np.zeros((len(conf), 2)), boxes, conf)


class TestOrdering:
    def test_confidence(self):
        assert order_regions(regions([0.2, 0.9, 0.5]), "confidence").tolist() == [1, 2, 0]

    def test_ties_are_stable(self):
        assert order_regions(regions([0.4] * 4), "confidence").tolist() == [0, 1, 2, 3]

    def test_ascending_confidences_reverse(self):
        assert order_regions(regions(np.linspace(0, 1, 9)), "confidence").tolist() == list(range(8, -1, -1))

    def test_bbox_size_uses_area(self):
        boxes = np.array([[0, 0, 2, 2], [0, 0, 1, 5], [0, 0, 3, 1], [0, 0, 4, 1]])
        assert order_regions(regions(boxes=boxes, conf=[0.1] * 4), "BboxSize").tolist() == [1, 0, 3, 2]

    def test_random_is_seeded_permutation(self):
        r = regions(k=36)
        a = order_regions(r, "random", seed=11)
        b = order_regions(r, "random", seed=11)
        assert np.array_equal(a, b)
        assert sorted(a.tolist()) == list(range(36))
        assert not np.array_equal(a, order_regions(r, "random", seed=12))

    def test_unknown(self):
        with pytest.raises(OrderingError):
            order_regions(regions(), "saliency")
