"""
Training objectives: categorical cross-entropy over the six frame scores and the
step-masked binary cross-entropy of the saccadic readout.
"""
from typing import Optional

import numpy as np

from autograd import Function, Tensor
from errors import DimensionError, RangeError

BCE_CLAMP = 1e-7

# Steps 1-2 of a stream cannot yet contain a distinguishable oddity.
MASKED_LEADING_STEPS = 2


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax over `axis`."""
    shifted = scores - scores.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=axis, keepdims=True)


class _SoftmaxCrossEntropy(Function):
    def forward(self, scores, labels):
        self.labels = labels
        shifted = scores - scores.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_z
        self.probs = np.exp(log_probs)
        rows = np.arange(scores.shape[0])
        return np.asarray(-log_probs[rows, labels].mean(), dtype=scores.dtype)

    def backward(self, grad):
        batch = self.probs.shape[0]
        onehot = np.zeros_like(self.probs)
        onehot[np.arange(batch), self.labels] = 1.0
        return (grad * (self.probs - onehot) / batch,)


def softmax_cross_entropy(scores: Tensor, labels) -> Tensor:
    """
    Mean categorical cross-entropy of softmax(scores) against integer labels.

    Args:
        scores: Tensor [batch, classes].
        labels: Integer label per row, each in [0, classes).

    Raises:
        DimensionError: If scores is not 2-D or the label count differs from the batch.
        RangeError: If any label is out of range.
    """
    if scores.ndim != 2:
        raise DimensionError('rank', 2, scores.ndim, context='softmax_cross_entropy')
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (scores.shape[0],):
        raise DimensionError('batch', scores.shape[0], labels.shape, context='softmax_cross_entropy')
    classes = scores.shape[1]
    bad = (labels < 0) | (labels >= classes)
    if bad.any():
        raise RangeError('label', int(labels[bad][0]), 0, classes - 1)
    return _SoftmaxCrossEntropy.apply(scores, labels=labels)


def default_step_mask(steps: int, masked: int = MASKED_LEADING_STEPS, dtype=np.float64) -> np.ndarray:
    """Mask with zeros at the first `masked` steps and ones elsewhere."""
    mask = np.ones(steps, dtype=dtype)
    mask[:masked] = 0.0
    return mask


class _MaskedBCE(Function):
    def forward(self, beliefs, targets, mask):
        self.targets = targets
        self.mask = np.broadcast_to(mask, beliefs.shape)
        self.denominator = self.mask.sum()
        self.clamped = np.clip(beliefs, BCE_CLAMP, 1.0 - BCE_CLAMP)
        self.inside = (beliefs >= BCE_CLAMP) & (beliefs <= 1.0 - BCE_CLAMP)
        p = self.clamped
        elementwise = -(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p))
        return np.asarray((self.mask * elementwise).sum() / self.denominator, dtype=beliefs.dtype)

    def backward(self, grad):
        p = self.clamped
        local = (p - self.targets) / (p * (1.0 - p))
        return (grad * self.mask * local * self.inside / self.denominator,)


def masked_binary_cross_entropy(beliefs: Tensor, targets, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Binary cross-entropy averaged over the unmasked steps.

    loss = sum_t mask_t * BCE(belief_t, target_t) / sum_t mask_t, with beliefs
    clamped to [1e-7, 1 - 1e-7]. A [batch, steps] input shares the mask across
    the batch, which equals averaging the per-sample losses.

    Args:
        beliefs: Tensor [steps] or [batch, steps] of probabilities.
        targets: 0/1 values with the same shape as beliefs.
        mask: 0/1 per step; defaults to zeros at the first two steps.

    Raises:
        RangeError: If the mask has no nonzero entry.
    """
    steps = beliefs.shape[-1]
    if mask is None:
        mask = default_step_mask(steps, dtype=beliefs.dtype)
    mask = np.asarray(mask, dtype=beliefs.dtype)
    targets = np.asarray(targets, dtype=beliefs.dtype)
    if mask.shape[-1] != steps:
        raise DimensionError('steps', steps, mask.shape[-1], context='masked_binary_cross_entropy')
    if targets.shape != beliefs.shape:
        raise DimensionError('targets', beliefs.shape, targets.shape, context='masked_binary_cross_entropy')
    if not np.any(mask):
        raise RangeError('mask sum', 0, 1, steps)
    return _MaskedBCE.apply(beliefs, targets=targets, mask=mask)
