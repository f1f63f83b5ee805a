import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cotrain.errors import ConfigError, ShapeError
from cotrain.losses import cot_loss, cross_entropy, dif_loss, entropy, sup_loss, total_loss
from cotrain.nn_core import Tensor

from oracles import entropy_nats, jsd_nats

LN2 = math.log(2)


def _prob_batches(rows=st.integers(1, 6), classes=st.integers(2, 5)):
    @st.composite
    def build(draw):
        n, c = draw(rows), draw(classes)
        raw = draw(arrays(np.float64, (2, n, c), elements=st.floats(0.0, 1.0)))
        raw = raw + 1e-3
        return raw[0] / raw[0].sum(-1, keepdims=True), raw[1] / raw[1].sum(-1, keepdims=True)

    return build()


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert cross_entropy([1, 0, 0], [1, 0, 0]).item() <= 1e-6

    def test_half(self):
        assert abs(cross_entropy([1, 0], [0.5, 0.5]).item() - LN2) < 1e-9

    def test_confident_wrong(self):
        assert abs(cross_entropy([0, 1], [0.9, 0.1]).item() - 2.302585) < 1e-6

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            cross_entropy([1, 0], [0.2, 0.3, 0.5])

    def test_target_gets_no_gradient(self):
        t = Tensor([0.3, 0.7], requires_grad=True)
        p = Tensor([0.6, 0.4], requires_grad=True)
        cross_entropy(t, p).backward()
        assert t.grad is None
        assert np.allclose(p.grad, [-0.3 / 0.6, -0.7 / 0.4])

    @settings(max_examples=50, deadline=None)
    @given(_prob_batches())
    def test_gibbs(self, pq):
        t, p = pq
        ce = cross_entropy(t, p).data
        h = entropy(t).data
        assert np.all(ce >= h - 1e-9)


class TestEntropy:
    def test_deterministic(self):
        assert entropy([1, 0]).item() == 0

    def test_uniform_ten(self):
        assert abs(entropy(np.full(10, 0.1)).item() - math.log(10)) < 1e-12

    def test_half(self):
        assert abs(entropy([0.5, 0.5]).item() - LN2) < 1e-12


class TestCotLoss:
    def test_identical_zero(self, rng):
        p = rng.dirichlet(np.ones(4), size=8)
        assert abs(cot_loss(p, p).item()) <= 1e-12

    def test_opposite_one_hot(self):
        assert abs(cot_loss([[1, 0]], [[0, 1]]).item() - LN2) < 1e-12

    def test_hand_value(self):
        # H(.5,.5) - H(.8,.2) = 0.693147 - 0.500402
        assert abs(cot_loss([[0.8, 0.2]], [[0.2, 0.8]]).item() - 0.192745) < 1e-6

    def test_batch_mean(self, rng):
        p, q = rng.dirichlet(np.ones(3), size=5), rng.dirichlet(np.ones(3), size=5)
        expected = np.mean([jsd_nats(a, b) for a, b in zip(p, q)])
        assert abs(cot_loss(p, q).item() - expected) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cot_loss(np.full((2, 2), 0.5), np.full((3, 2), 0.5))

    def test_gradient_reaches_both(self):
        p1 = Tensor([[0.7, 0.3]], requires_grad=True)
        p2 = Tensor([[0.2, 0.8]], requires_grad=True)
        cot_loss(p1, p2).backward()
        assert np.any(p1.grad != 0) and np.any(p2.grad != 0)

    @settings(max_examples=80, deadline=None)
    @given(_prob_batches())
    def test_symmetry_and_range(self, pq):
        p, q = pq
        a, b = cot_loss(p, q).item(), cot_loss(q, p).item()
        assert a == b
        assert 0 <= a <= LN2 + 1e-9
        assert abs(cot_loss(p, p).item()) <= 1e-12


class TestDifLoss:
    def test_perfect_resistance(self):
        p1 = np.array([[1.0, 0.0], [0.0, 1.0]])
        p2 = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert dif_loss(p1, p2, p2, p1).item() == 0

    def test_symmetric_halves(self):
        val = dif_loss([[1, 0]], [[0.5, 0.5]], [[1, 0]], [[0.5, 0.5]]).item()
        assert abs(val - 2 * LN2) < 1e-12

    def test_normalised_by_rows(self, rng):
        p = rng.dirichlet(np.ones(3), size=(4, 6))
        total = sum(
            -(p[0][k] * np.log(p[3][k])).sum() - (p[2][k] * np.log(p[1][k])).sum() for k in range(6)
        )
        assert abs(dif_loss(p[0], p[1], p[2], p[3]).item() - total / 6) < 1e-12

    def test_gradient_flow_contract(self):
        t1 = Tensor([[0.6, 0.4]], requires_grad=True)
        t2 = Tensor([[0.3, 0.7]], requires_grad=True)
        a1 = Tensor([[0.5, 0.5]], requires_grad=True)
        a2 = Tensor([[0.9, 0.1]], requires_grad=True)
        base = dif_loss(t1, a1, t2, a2)
        base.backward()
        assert t1.grad is None and t2.grad is None
        assert np.any(a1.grad != 0) and np.any(a2.grad != 0)
        moved = dif_loss([[0.7, 0.3]], [[0.5, 0.5]], [[0.3, 0.7]], [[0.9, 0.1]])
        assert moved.item() != pytest.approx(float(base.data), abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dif_loss(np.full((2, 2), 0.5), np.full((2, 2), 0.5), np.full((3, 2), 0.5), np.full((2, 2), 0.5))

    @settings(max_examples=50, deadline=None)
    @given(_prob_batches(), _prob_batches())
    def test_nonnegative(self, a, b):
        if a[0].shape != b[0].shape:
            return
        assert dif_loss(a[0], a[1], b[0], b[1]).item() >= 0


class TestSupAndTotal:
    def test_sup_divides_by_given_b(self):
        probs = np.array([[0.5, 0.5], [0.25, 0.75]])
        val = sup_loss(probs, [0, 1], batch_size=4).item()
        assert abs(val - (LN2 - math.log(0.75)) / 4) < 1e-12

    def test_supervised_only_mode(self):
        assert total_loss(0.7, 0.3, 0.2, 0.0, 0.0) == 0.7

    def test_paper_weights(self):
        assert abs(total_loss(1.0, 0.5, 0.2, 10.0, 0.5) - 6.1) < 1e-12

    def test_zero_terms(self):
        assert total_loss(1.25, 0.0, 0.0, 10.0, 0.5) == 1.25

    def test_negative_lambda(self):
        with pytest.raises(ConfigError):
            total_loss(1.0, 0.1, 0.1, -1.0, 0.5)
        with pytest.raises(ConfigError):
            total_loss(1.0, 0.1, 0.1, 1.0, -0.5)
