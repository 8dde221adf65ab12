from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from delrec.autodiff import Tape, Var
from delrec.readout import (ReadoutConfig, cross_entropy, mean_firing_rate, pool_logits, predict,
                            softmax_over_time, spike_penalty)


class TestSoftmaxOverTime:
    def test_uniform(self):
        scores = softmax_over_time(np.zeros((7, 2, 4))).value
        np.testing.assert_allclose(scores, 7 / 4)

    def test_saturation(self):
        v = np.zeros((5, 1, 3))
        v[..., 0] = 100.0
        np.testing.assert_allclose(softmax_over_time(v).value[0], [5.0, 0.0, 0.0], atol=1e-30)

    def test_no_overflow(self):
        assert np.all(np.isfinite(softmax_over_time(np.full((3, 1, 2), 1e4)).value))

    @settings(max_examples=50)
    @given(arrays(np.float64, (6, 2, 5), elements=st.floats(-20, 20)),
           arrays(np.float64, (6, 2, 1), elements=st.floats(-50, 50)))
    def test_total_and_shift_invariance(self, v, shift):
        scores = softmax_over_time(v).value
        np.testing.assert_allclose(scores.sum(axis=-1), 6.0, rtol=1e-12)
        np.testing.assert_allclose(softmax_over_time(v + shift).value, scores, atol=1e-10)


class TestCrossEntropy:
    def test_one_hot(self):
        assert float(cross_entropy(np.array([[1.0, 0.0]]), [0]).value) == 0.0

    def test_uniform(self):
        assert float(cross_entropy(np.full((3, 5), 0.2), [0, 1, 4]).value) == pytest.approx(math.log(5))

    def test_hand_computed_batch(self):
        probs = np.array([[0.7, 0.2, 0.1], [0.25, 0.25, 0.5]])
        expected = -(math.log(0.2) + math.log(0.5)) / 2  # labels 1, 2
        assert float(cross_entropy(probs, [1, 2]).value) == pytest.approx(expected, rel=1e-14)

    def test_logits(self):
        logits = np.array([[1.0, 2.0, 0.5]])
        p = np.exp(logits[0, 1]) / np.exp(logits).sum()
        assert float(cross_entropy(logits, [1], from_logits=True).value) == pytest.approx(-math.log(p))

    def test_non_finite(self):
        with pytest.raises(FloatingPointError):
            cross_entropy(np.array([[np.inf, 1.0]]), [0])

    def test_logit_gradient(self):
        logits = Var(np.array([[1.0, 2.0, 0.5]]), requires_grad=True)
        with Tape() as tape:
            loss = cross_entropy(logits, [0], from_logits=True)
        tape.backward(loss)
        sm = np.exp(logits.value) / np.exp(logits.value).sum()
        np.testing.assert_allclose(logits.grad, sm - np.array([[1.0, 0.0, 0.0]]))


class TestSpikePenalty:
    def test_silent(self):
        assert float(spike_penalty(np.zeros((4, 2, 3))).value) == 0.0

    def test_all_ones(self):
        assert float(spike_penalty(np.ones((4, 2, 3))).value) == 0.5

    def test_ten_percent(self):
        s = (np.random.default_rng(0).random((100, 20, 50)) < 0.1).astype(float)
        pen = float(spike_penalty(s).value)
        assert pen == pytest.approx(s.sum() / (2 * s.size), rel=1e-12)
        assert abs(pen - 0.05) < 0.002

    def test_penalty_is_half_firing_rate(self):
        rng = np.random.default_rng(1)
        layers = [(rng.random((10, 3, n)) < 0.2).astype(float) for n in (4, 7)]
        assert mean_firing_rate(layers) == pytest.approx(2 * float(spike_penalty(layers).value), rel=1e-12)

    def test_lambda_gradient_is_penalty(self):
        s = (np.random.default_rng(2).random((5, 2, 3)) < 0.5).astype(float)
        lam = Var(0.3, requires_grad=True)
        with Tape() as tape:
            loss = cross_entropy(np.full((2, 2), 0.5), [0, 1]) + lam * spike_penalty(s)
        tape.backward(loss)
        assert float(lam.grad) == float(spike_penalty(s).value)


def test_pooling_and_predict():
    logits = np.arange(24, dtype=float).reshape(4, 2, 3)
    np.testing.assert_allclose(pool_logits(logits, "mean").value, logits.mean(axis=0))
    np.testing.assert_allclose(pool_logits(logits, "sum").value, logits.sum(axis=0))
    np.testing.assert_allclose(pool_logits(logits, "last").value, logits[-1])
    np.testing.assert_array_equal(predict(np.array([[0.1, 0.9], [2.0, 1.0]])), [1, 0])


@pytest.mark.parametrize("kwargs", [{"kind": "svm"}, {"n_classes": 1}, {"lambda_spike": -1.0},
                                    {"pool": "max"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ReadoutConfig(**kwargs)
