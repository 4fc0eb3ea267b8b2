"""Unit tests for the training objectives."""
import numpy as np
import pytest

from autograd import Tape, Tensor, backward
from errors import DimensionError, RangeError
from losses import default_step_mask, masked_binary_cross_entropy, softmax, softmax_cross_entropy


class TestSoftmax:
    """Test cases for the numpy softmax."""

    def test_uniform_scores(self):
        """Test that equal scores give equal probabilities."""
        np.testing.assert_allclose(softmax(np.zeros(6)), np.full(6, 1.0 / 6.0))

    def test_large_scores_stable(self):
        """Test that huge scores do not overflow."""
        p = softmax(np.array([1000.0, 1000.0, -1000.0]))
        np.testing.assert_allclose(p, [0.5, 0.5, 0.0])


class TestSoftmaxCrossEntropy:
    """Test cases for the categorical cross-entropy."""

    def test_uniform_scores_give_ln6(self):
        """Test that all-equal scores cost ln 6 whatever the label."""
        loss = softmax_cross_entropy(Tensor(np.zeros((3, 6))), [0, 3, 5])
        assert loss.item() == pytest.approx(np.log(6.0))

    def test_gradient_is_p_minus_onehot(self):
        """Test the fused gradient (softmax - onehot) / batch."""
        scores = Tensor(np.array([[1.0, 2.0, 0.5, 0.0, -1.0, 0.3]]), requires_grad=True)
        with Tape() as tape:
            loss = softmax_cross_entropy(scores, [1])
        backward(loss, tape)
        expected = softmax(scores.data)
        expected[0, 1] -= 1.0
        np.testing.assert_allclose(scores.grad, expected)

    def test_label_out_of_range(self):
        """Test that a label of 6 raises RangeError."""
        with pytest.raises(RangeError):
            softmax_cross_entropy(Tensor(np.zeros((1, 6))), [6])

    def test_batch_mismatch(self):
        """Test that a label count different from the batch raises."""
        with pytest.raises(DimensionError):
            softmax_cross_entropy(Tensor(np.zeros((2, 6))), [0])


class TestMaskedBCE:
    """Test cases for the masked binary cross-entropy."""

    def test_default_mask_zeroes_first_two_steps(self):
        """Test the default mask layout."""
        mask = default_step_mask(36)
        assert mask[:2].tolist() == [0.0, 0.0]
        assert mask[2:].sum() == 34

    def test_masked_steps_do_not_change_loss(self, rng):
        """Test that beliefs and targets at steps 1-2 have no effect on the loss."""
        beliefs = rng.uniform(0.05, 0.95, size=36)
        targets = (rng.random(36) < 0.2).astype(float)
        base = masked_binary_cross_entropy(Tensor(beliefs), targets).item()
        beliefs[:2] = [0.999, 0.001]
        targets[:2] = [0.0, 1.0]
        assert masked_binary_cross_entropy(Tensor(beliefs), targets).item() == base

    def test_masked_steps_get_zero_gradient(self, rng):
        """Test that no gradient reaches the masked steps."""
        beliefs = Tensor(rng.uniform(0.1, 0.9, size=(2, 36)), requires_grad=True)
        with Tape() as tape:
            loss = masked_binary_cross_entropy(beliefs, np.zeros((2, 36)))
        backward(loss, tape)
        assert np.all(beliefs.grad[:, :2] == 0.0)
        assert np.all(beliefs.grad[:, 2:] > 0.0)

    def test_average_over_unmasked_steps(self):
        """Test the value for constant beliefs: -ln(1 - p)."""
        loss = masked_binary_cross_entropy(Tensor(np.full(36, 0.25)), np.zeros(36))
        assert loss.item() == pytest.approx(-np.log(0.75))

    def test_extremes_are_clamped(self):
        """Test that beliefs of exactly 0 and 1 stay finite."""
        loss = masked_binary_cross_entropy(Tensor(np.array([0.5, 0.5, 0.0, 1.0])), np.array([0, 0, 1.0, 0]))
        assert np.isfinite(loss.item())
        assert loss.item() == pytest.approx(-np.log(1e-7), rel=1e-6)

    def test_empty_mask_rejected(self):
        """Test that an all-zero mask raises RangeError."""
        with pytest.raises(RangeError):
            masked_binary_cross_entropy(Tensor(np.full(4, 0.5)), np.zeros(4), mask=np.zeros(4))

    def test_target_shape_checked(self):
        """Test that mismatched targets raise DimensionError."""
        with pytest.raises(DimensionError):
            masked_binary_cross_entropy(Tensor(np.full(36, 0.5)), np.zeros(35))
