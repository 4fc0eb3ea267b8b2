"""
The Adam optimizer: a pure update over named arrays and a wrapper that
applies it to model parameters in place of their data.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from errors import DimensionError
from layers import Parameter


@dataclass
class AdamState:
    """Per-parameter moment estimates, the step counter and hyperparameters."""
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, Optional[np.ndarray]],
              state: AdamState) -> Dict[str, np.ndarray]:
    """
    One bias-corrected Adam update.

    Parameters whose gradient is None are returned unchanged and their moments
    are left alone.

    Args:
        params: Name -> current values.
        grads: Name -> gradient (same shape) or None.
        state: Moments and step counter, updated in place.

    Returns:
        Name -> new values (fresh arrays; inputs are not modified).
    """
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    updated = {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            updated[name] = value
            continue
        if grad.shape != value.shape:
            raise DimensionError(name, value.shape, grad.shape, context='adam')
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = (value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(value.dtype)
    return updated


class Adam:
    """Adam over the trainable parameters of a model, keyed by parameter name."""

    def __init__(self, params: Mapping[str, Parameter], learning_rate: float = 1e-3,
                 betas=(0.9, 0.999), epsilon: float = 1e-8):
        self.params = dict(params)
        self.state = AdamState(learning_rate=learning_rate, beta1=betas[0], beta2=betas[1], epsilon=epsilon)

    def step(self) -> None:
        """Applies one update from the gradients currently stored on the parameters."""
        values = {name: p.data for name, p in self.params.items()}
        grads = {name: p.grad for name, p in self.params.items()}
        for name, value in adam_step(values, grads, self.state).items():
            self.params[name].data = value

    def zero_grad(self) -> None:
        for parameter in self.params.values():
            parameter.zero_grad()
