"""
Finite-difference verification of analytic gradients.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np

from autograd import Tape, Tensor, backward
from errors import ConfigurationError
from layers import (BatchNormParams, activation, batchnorm_forward, conv2d_forward, dense_forward, dropout_forward,
                    maxpool_forward)
from losses import masked_binary_cross_entropy, softmax_cross_entropy
from oren import OReN
from recurrent import LSTMLayer, SNULayer
from vision import TINY_LAYOUT

DEFAULT_EPS = 1e-5
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradCheckReport:
    """Relative error per checked block."""
    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def worst(self) -> str:
        """Name of the block with the largest error."""
        return max(self.errors, key=self.errors.get) if self.errors else ''


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a|| + ||n||, 1e-12)."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(diff / scale)


def gradient_check(fragment: Callable[[np.random.Generator], Tensor], blocks: Mapping[str, Tensor],
                   seed: int = 0, eps: float = DEFAULT_EPS,
                   tolerance: float = DEFAULT_TOLERANCE) -> GradCheckReport:
    """
    Compares backward() against central differences for every tensor in `blocks`.

    The fragment output is reduced to a scalar with fixed random weights, so
    every output element contributes. The fragment receives a fresh generator
    seeded with `seed` on every evaluation, which freezes dropout masks.

    Args:
        fragment: Builds the output from the blocks; must be pure given the generator.
        blocks: Name -> tensor with requires_grad (parameters and/or inputs), 64-bit.
        seed: Seed for the generator passed to the fragment.
        eps: Finite-difference step.
        tolerance: Pass threshold on the relative error.

    Returns:
        GradCheckReport with one relative error per block.
    """
    reference = fragment(np.random.default_rng(seed)).data
    weights = np.random.default_rng(seed + 1).standard_normal(reference.shape)

    def objective() -> float:
        return float((fragment(np.random.default_rng(seed)).data * weights).sum())

    for tensor in blocks.values():
        tensor.zero_grad()
    with Tape() as tape:
        loss = (fragment(np.random.default_rng(seed)) * Tensor(weights, dtype=reference.dtype)).sum()
    backward(loss, tape)

    report = GradCheckReport(tolerance=tolerance)
    for name, tensor in blocks.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        original = tensor.data
        work = original.copy()
        tensor.data = work
        numeric = np.zeros_like(work)
        for index in np.ndindex(work.shape):
            saved = work[index]
            work[index] = saved + eps
            plus = objective()
            work[index] = saved - eps
            minus = objective()
            work[index] = saved
            numeric[index] = (plus - minus) / (2.0 * eps)
        tensor.data = original
        report.errors[name] = relative_error(analytic, numeric)
    return report


def _block(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


def standard_checks(seed: int = 0, eps: float = DEFAULT_EPS, tolerance: float = DEFAULT_TOLERANCE,
                    include: Optional[Sequence[str]] = None) -> Dict[str, GradCheckReport]:
    """
    Runs the built-in suite: every differentiable layer op, both losses,
    5-step unrolls of the recurrent units and a tiny OReN from frames to loss,
    all at float64.

    Args:
        seed: Seed for block values, dropout masks and the reduction weights.
        include: Optional subset of suite names.

    Returns:
        Suite name -> GradCheckReport.
    """
    rng = np.random.default_rng(seed)
    suite = {}

    x, w, b = _block(rng, 3, 4), _block(rng, 4, 5), _block(rng, 5)
    suite['dense'] = (lambda g: dense_forward(x, w, b), {'x': x, 'weight': w, 'bias': b})

    image, kernel, bias = _block(rng, 2, 7, 7, 2), _block(rng, 5, 5, 2, 3, scale=0.3), _block(rng, 3)
    suite['conv2d'] = (lambda g: conv2d_forward(image, kernel, bias), {'x': image, 'kernel': kernel, 'bias': bias})

    bn_x, gamma, beta = _block(rng, 4, 3, 3, 2), _block(rng, 2), _block(rng, 2)
    params = BatchNormParams(gamma, beta, np.zeros(2), np.ones(2))
    suite['batchnorm'] = (lambda g: batchnorm_forward(bn_x, params, training=True),
                          {'x': bn_x, 'gamma': gamma, 'beta': beta})

    pooled = _block(rng, 2, 5, 5, 2)
    suite['maxpool'] = (lambda g: maxpool_forward(pooled), {'x': pooled})

    dropped = _block(rng, 3, 6)
    suite['dropout'] = (lambda g: dropout_forward(dropped, 0.3, True, g), {'x': dropped})

    for kind in ('relu', 'sigmoid', 'tanh'):
        a = _block(rng, 4, 5)
        suite[kind] = ((lambda t, k: lambda g: activation(t, k))(a, kind), {'x': a})

    scores = _block(rng, 4, 6)
    labels = rng.integers(0, 6, size=4)
    suite['softmax_cross_entropy'] = (lambda g: softmax_cross_entropy(scores, labels), {'scores': scores})

    logits = _block(rng, 3, 36)
    targets = (rng.random((3, 36)) < 0.2).astype(np.float64)
    suite['masked_bce'] = (lambda g: masked_binary_cross_entropy(activation(logits, 'sigmoid'), targets),
                           {'logits': logits})

    snu = SNULayer(3, 4, rng, output='sigmoid', recurrent=True, dtype=np.float64)
    seq = _block(rng, 2, 5, 3)
    suite['ssnu_r_unroll'] = (lambda g: snu.run(seq)[0], {'x': seq, 'W': snu.W, 'H': snu.H})

    lstm = LSTMLayer(3, 4, rng, dtype=np.float64)
    lstm_seq = _block(rng, 2, 5, 3)
    suite['lstm_unroll'] = (lambda g: lstm.run(lstm_seq)[0],
                            {'x': lstm_seq, 'W': lstm.W, 'U': lstm.U, 'bias': lstm.bias})

    oren = OReN(4, rng, input_size=16, channels=2, layout=TINY_LAYOUT, dropout_rate=0.3, dtype=np.float64)
    frames = Tensor(rng.uniform(0.0, 1.0, size=(2, 6, 16, 16, 1)), dtype=np.float64)
    oddities = rng.integers(0, 6, size=2)
    suite['oren'] = (lambda g: softmax_cross_entropy(oren(frames, g), oddities),
                     {'conv0': oren.vision.convs[0].kernel, 'g0_bias': oren.g[0].bias,
                      'g3_weight': oren.g[-1].weight, 'f_out_weight': oren.f[-1].weight})

    names = list(include) if include else list(suite)
    unknown = [name for name in names if name not in suite]
    if unknown:
        raise ConfigurationError(f"unknown gradient checks {unknown}; choose from {sorted(suite)}")
    return {name: gradient_check(suite[name][0], suite[name][1], seed, eps, tolerance) for name in names}
