import numpy as np
import pytest

from vsrn import tensor as T
from vsrn.gradcheck import grad_check
from vsrn.region import (
    GcnLayerParams,
    RegionSet,
    embed_regions,
    gcn_layer,
    init_gcn_layer,
    pairwise_affinity,
    relationship_reason,
)
from vsrn.tensor import ShapeError, Tensor


def layer(D, rng=None, **fixed):
    rng = rng or np.random.default_rng(0)
    mats = {n: rng.uniform(-0.5, 0.5, size=(D, D)) for n in ("W_phi", "W_psi", "W_g", "W_res")}
    mats.update(fixed)
    return GcnLayerParams(**{n: Tensor(v, requires_grad=True) for n, v in mats.items()})


def softmax_rows(R):
    out = np.empty_like(R)
    for i, row in enumerate(R):
        e = np.exp(row - row.max())
        out[i] = e / e.sum()
    return out


class TestRegionSet:
    def test_validation(self):
        RegionSet(np.ones((2, 3)), [[0, 0, 1, 1], [1, 1, 2, 2]], [0.1, 1.0])
        with pytest.raises(ValueError):
            RegionSet(np.ones((2, 3)), [[0, 0, 0, 1], [1, 1, 2, 2]], [0.1, 1.0])
        with pytest.raises(ValueError):
            RegionSet(np.ones((2, 3)), [[0, 0, 1, 1], [1, 1, 2, 2]], [0.1, 1.5])
        with pytest.raises(ValueError):
            RegionSet(np.ones((0, 3)), np.zeros((0, 4)), [])


class TestEmbed:
    def test_identity(self, rng):
        f = rng.normal(size=(5, 4))
        out = embed_regions(f, Tensor(np.eye(4)), Tensor(np.zeros(4)))
        np.testing.assert_array_equal(out.values, f)

    def test_constant(self, rng):
        c = np.array([1.5, -2.0])
        out = embed_regions(rng.normal(size=(3, 4)), Tensor(np.zeros((4, 2))), Tensor(c))
        np.testing.assert_array_equal(out.values, np.tile(c, (3, 1)))

    def test_matches_loop_oracle(self, rng):
        f, W, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=2)
        expected = np.array(
            [[sum(f[i, a] * W[a, d] for a in range(4)) + b[d] for d in range(2)] for i in range(3)]
        )
        out = embed_regions(f, Tensor(W), Tensor(b)).values
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_feature_mismatch(self):
        with pytest.raises(ShapeError):
            embed_regions(np.ones((3, 5)), Tensor(np.ones((4, 2))), Tensor(np.zeros(2)))


class TestAffinity:
    def test_orthonormal(self):
        p = layer(2, W_phi=np.eye(2), W_psi=np.eye(2))
        R = pairwise_affinity(Tensor([[1.0, 0.0], [0.0, 1.0]]), p).values
        np.testing.assert_array_equal(R, [[1, 0], [0, 1]])

    def test_zero_embedding(self, rng):
        p = layer(3, W_phi=np.zeros((3, 3)))
        assert not pairwise_affinity(Tensor(rng.normal(size=(4, 3))), p).values.any()

    def test_double_loop_oracle(self, rng):
        V = rng.normal(size=(5, 3))
        p = layer(3, rng)
        phi, psi = p.W_phi.values, p.W_psi.values
        expected = np.zeros((5, 5))
        for i in range(5):
            for j in range(5):
                a = [sum(V[i, c] * phi[c, d] for c in range(3)) for d in range(3)]
                b = [sum(V[j, c] * psi[c, d] for c in range(3)) for d in range(3)]
                expected[i, j] = sum(x * y for x, y in zip(a, b))
        np.testing.assert_allclose(pairwise_affinity(Tensor(V), p).values, expected, atol=1e-12)


class TestGcnLayer:
    def test_zero_residual_weight_is_identity(self, rng):
        V = rng.normal(size=(6, 4))
        out = gcn_layer(Tensor(V), layer(4, rng, W_res=np.zeros((4, 4)))).values
        assert out.tobytes() == V.tobytes()

    def test_uniform_affinity_example(self):
        # zero affinity embeddings give a constant R, i.e. 0.5 everywhere after normalization
        p = layer(2, W_phi=np.zeros((2, 2)), W_psi=np.zeros((2, 2)), W_g=np.eye(2), W_res=np.eye(2))
        out = gcn_layer(Tensor([[2.0, 0.0], [0.0, 2.0]]), p).values
        np.testing.assert_allclose(out, [[3, 1], [1, 3]], atol=1e-15)

    def test_straight_line_oracle(self, rng):
        V = rng.normal(size=(5, 4))
        p = layer(4, rng)
        R = (V @ p.W_phi.values) @ (V @ p.W_psi.values).T
        expected = softmax_rows(R) @ V @ p.W_g.values @ p.W_res.values + V
        np.testing.assert_allclose(gcn_layer(Tensor(V), p).values, expected, rtol=0, atol=1e-12)

    def test_batched_equals_per_image(self, rng):
        V = rng.normal(size=(3, 5, 4))
        p = layer(4, rng)
        batched = gcn_layer(Tensor(V), p).values
        for b in range(3):
            np.testing.assert_allclose(batched[b], gcn_layer(Tensor(V[b]), p).values, atol=1e-14)

    def test_permutation_equivariance(self, rng):
        for _ in range(20):
            V = rng.normal(size=(7, 4))
            p = layer(4, rng)
            perm = rng.permutation(7)
            a = gcn_layer(Tensor(V[perm]), p).values
            b = gcn_layer(Tensor(V), p).values[perm]
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)

    def test_grad_check(self, rng):
        V = Tensor(rng.normal(size=(5, 8)), requires_grad=True)
        p = init_gcn_layer(rng, 8)
        w = rng.normal(size=(5, 8))
        params = [V, *p.tensors().values()]
        assert grad_check(lambda: T.sum(gcn_layer(V, p) * w), params) < 1e-4


class TestRelationshipReason:
    def test_empty_stack(self, rng):
        V = Tensor(rng.normal(size=(4, 3)))
        assert relationship_reason(V, []) is V

    def test_zero_residual_stack(self, rng):
        V = rng.normal(size=(4, 3))
        layers = [layer(3, rng, W_res=np.zeros((3, 3))) for _ in range(2)]
        assert relationship_reason(Tensor(V), layers).values.tobytes() == V.tobytes()

    def test_unrolled(self, rng):
        V = Tensor(rng.normal(size=(5, 6)))
        layers = [init_gcn_layer(rng, 6) for _ in range(4)]
        manual = V
        for p in layers:
            manual = gcn_layer(manual, p)
        np.testing.assert_allclose(
            relationship_reason(V, layers).values, manual.values, rtol=0, atol=1e-12
        )
