"""
Recurrent units for the saccadic network: the SNU family and an LSTM baseline.

Every layer works on whole sequences in two phases: `input_projection` maps all
steps through the input weights at once, then `step` advances the state one
time step from the projected drive. `snu_step`/`lstm_step` combine both for a
single step.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from autograd import Tensor
from errors import DimensionError, RangeError
from layers import Module, Parameter, activation, glorot_uniform

RECURRENT_KINDS = ('snn', 'snn_r', 'ssnu', 'ssnu_r', 'lstm')

SURROGATE_KINDS = ('triangular', 'fast_sigmoid')


@dataclass(frozen=True)
class SurrogateSpec:
    """
    Pseudo-derivative substituted for the step function in the backward pass.

    triangular:   max(0, 1 - |z| / width)
    fast_sigmoid: 1 / (1 + |z| / width)^2
    """
    kind: str = 'triangular'
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise RangeError('surrogate', self.kind, SURROGATE_KINDS[0], SURROGATE_KINDS[-1])
        if self.width <= 0:
            raise RangeError('surrogate width', self.width, '>0', 'inf')

    def derivative(self, z: np.ndarray) -> np.ndarray:
        scaled = np.abs(z) / self.width
        if self.kind == 'triangular':
            return np.maximum(0.0, 1.0 - scaled).astype(z.dtype)
        return (1.0 / (1.0 + scaled) ** 2).astype(z.dtype)


@dataclass
class SNUState:
    """Membrane potential `s` (V_m) and previous output `y`, both [batch, N]."""
    s: Tensor
    y: Tensor


@dataclass
class LSTMState:
    cell: Tensor
    hidden: Tensor


def _zeros(batch: int, n: int, dtype) -> Tensor:
    return Tensor(np.zeros((batch, n), dtype=dtype))


def reset_state(state):
    """Returns a zeroed state of the same kind and shape."""
    if isinstance(state, SNUState):
        return SNUState(s=_zeros(*state.s.shape, state.s.dtype), y=_zeros(*state.y.shape, state.y.dtype))
    if isinstance(state, LSTMState):
        return LSTMState(cell=_zeros(*state.cell.shape, state.cell.dtype),
                         hidden=_zeros(*state.hidden.shape, state.hidden.dtype))
    raise TypeError(f"not a recurrent state: {type(state).__name__}")


class RecurrentLayer(Module):
    """Shared sequence driver for the SNU and LSTM layers."""

    width: int
    d_in: int

    def initial_state(self, batch: int, dtype=None):
        raise NotImplementedError

    def input_projection(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def step(self, state, drive_t: Tensor):
        raise NotImplementedError

    @staticmethod
    def potential(state) -> np.ndarray:
        raise NotImplementedError

    def _check_input(self, x: Tensor) -> None:
        if x.shape[-1] != self.d_in:
            raise DimensionError('d_in', self.d_in, x.shape[-1], context=type(self).__name__)

    def run(self, x_seq: Tensor, state=None) -> Tuple[Tensor, np.ndarray]:
        """
        Runs the layer over a whole sequence starting from `state` (zeros if None).

        Args:
            x_seq: Inputs [batch, steps, d_in].

        Returns:
            (outputs [batch, steps, N], potentials [batch, steps, N] as a plain array)
        """
        self._check_input(x_seq)
        batch, steps = x_seq.shape[:2]
        if state is None:
            state = self.initial_state(batch, x_seq.dtype)
        drive = self.input_projection(x_seq)
        outputs: List[Tensor] = []
        potentials = np.zeros((batch, steps, self.width), dtype=x_seq.dtype)
        for t in range(steps):
            y, state = self.step(state, drive[:, t])
            outputs.append(y)
            potentials[:, t] = self.potential(state)
        return Tensor.stack(outputs, axis=1), potentials


class SNULayer(RecurrentLayer):
    """
    A layer of spiking neural units.

        s_t = W x_t + H y_{t-1} + lambda * s_{t-1} * (1 - y_{t-1})
        y_t = h(s_t + b)

    The input activation g is the identity. H exists only for recurrent ("-R")
    variants. h is the step function (SNN) or the sigmoid (sSNU). lambda is a
    fixed hyperparameter; b is fixed at its initial value unless `train_bias`.
    """

    def __init__(self, d_in: int, width: int, rng: np.random.Generator, output: str = 'sigmoid',
                 recurrent: bool = False, leak: float = 0.8, bias_init: float = -1.0,
                 surrogate: Optional[SurrogateSpec] = None, train_bias: bool = False, dtype=np.float32):
        if output not in ('step', 'sigmoid'):
            raise RangeError('output activation', output, 'step', 'sigmoid')
        if not 0.0 <= leak <= 1.0:
            raise RangeError('leak', leak, 0.0, 1.0)
        self.d_in = d_in
        self.width = width
        self.output = output
        self.leak = leak
        self.surrogate = surrogate or SurrogateSpec()
        self.W = Parameter(glorot_uniform((d_in, width), rng, dtype))
        self.H = Parameter(glorot_uniform((width, width), rng, dtype)) if recurrent else None
        self.b = Parameter(np.full(width, bias_init, dtype=dtype), trainable=train_bias)

    @property
    def recurrent(self) -> bool:
        return self.H is not None

    def initial_state(self, batch: int, dtype=None) -> SNUState:
        dtype = dtype or self.W.dtype
        return SNUState(s=_zeros(batch, self.width, dtype), y=_zeros(batch, self.width, dtype))

    def input_projection(self, x: Tensor) -> Tensor:
        return x @ self.W

    def step(self, state: SNUState, drive_t: Tensor) -> Tuple[Tensor, SNUState]:
        s = drive_t + self.leak * state.s * (1.0 - state.y)
        if self.H is not None:
            s = s + state.y @ self.H
        y = activation(s + self.b, self.output, self.surrogate)
        return y, SNUState(s=s, y=y)

    @staticmethod
    def potential(state: SNUState) -> np.ndarray:
        return state.s.data


class LSTMLayer(RecurrentLayer):
    """
    Standard LSTM layer; gates are packed [input, forget, candidate, output].

    The forget-gate bias starts at +1.
    """

    def __init__(self, d_in: int, width: int, rng: np.random.Generator, dtype=np.float32):
        self.d_in = d_in
        self.width = width
        self.W = Parameter(glorot_uniform((d_in, 4 * width), rng, dtype))
        self.U = Parameter(glorot_uniform((width, 4 * width), rng, dtype))
        bias = np.zeros(4 * width, dtype=dtype)
        bias[width:2 * width] = 1.0
        self.bias = Parameter(bias)

    def initial_state(self, batch: int, dtype=None) -> LSTMState:
        dtype = dtype or self.W.dtype
        return LSTMState(cell=_zeros(batch, self.width, dtype), hidden=_zeros(batch, self.width, dtype))

    def input_projection(self, x: Tensor) -> Tensor:
        return x @ self.W + self.bias

    def step(self, state: LSTMState, drive_t: Tensor) -> Tuple[Tensor, LSTMState]:
        n = self.width
        z = drive_t + state.hidden @ self.U
        i = activation(z[:, :n], 'sigmoid')
        f = activation(z[:, n:2 * n], 'sigmoid')
        g = activation(z[:, 2 * n:3 * n], 'tanh')
        o = activation(z[:, 3 * n:], 'sigmoid')
        cell = f * state.cell + i * g
        hidden = o * activation(cell, 'tanh')
        return hidden, LSTMState(cell=cell, hidden=hidden)

    @staticmethod
    def potential(state: LSTMState) -> np.ndarray:
        return state.cell.data


def _as_batch(layer: RecurrentLayer, x_t) -> Tensor:
    x_t = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t, dtype=layer.W.dtype))
    if x_t.ndim == 1:
        x_t = x_t.reshape(1, -1)
    layer._check_input(x_t)
    return x_t


def snu_step(layer: SNULayer, state: SNUState, x_t) -> Tuple[Tensor, SNUState]:
    """
    Advances an SNU layer by one step.

    Args:
        layer: The layer.
        state: State from the previous step (or a fresh one).
        x_t: Input [d_in] or [batch, d_in].

    Returns:
        (y_t [batch, N], new state)

    Raises:
        DimensionError: If x_t or the state width does not match the layer.
    """
    x_t = _as_batch(layer, x_t)
    if state.s.shape[-1] != layer.width:
        raise DimensionError('N', layer.width, state.s.shape[-1], context='snu_step')
    return layer.step(state, layer.input_projection(x_t))


def lstm_step(layer: LSTMLayer, state: LSTMState, x_t) -> Tuple[Tensor, LSTMState]:
    """Advances an LSTM layer by one step; returns (hidden, new state)."""
    x_t = _as_batch(layer, x_t)
    if state.hidden.shape[-1] != layer.width:
        raise DimensionError('N', layer.width, state.hidden.shape[-1], context='lstm_step')
    return layer.step(state, layer.input_projection(x_t))


def make_recurrent_layer(kind: str, d_in: int, width: int, rng: np.random.Generator,
                         leak: float = 0.8, bias_init: float = -1.0,
                         surrogate: Optional[SurrogateSpec] = None, dtype=np.float32) -> RecurrentLayer:
    """
    Builds one recurrent layer by model kind.

    snn/snn_r use the step output, ssnu/ssnu_r the sigmoid; "_r" adds H.
    """
    if kind == 'lstm':
        return LSTMLayer(d_in, width, rng, dtype=dtype)
    if kind not in RECURRENT_KINDS:
        raise RangeError('recurrent kind', kind, RECURRENT_KINDS[0], RECURRENT_KINDS[-1])
    output = 'step' if kind.startswith('snn') else 'sigmoid'
    return SNULayer(d_in, width, rng, output=output, recurrent=kind.endswith('_r'),
                    leak=leak, bias_init=bias_init, surrogate=surrogate, dtype=dtype)
