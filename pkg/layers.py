"""
Layer operations used by both reasoning models, and the Module/Parameter containers.

Tensors are laid out channels-last: images are [batch, height, width, channels].
"""
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from autograd import Function, Tensor
from errors import DimensionError, RangeError

KERNEL_SIZE = 5

ACTIVATIONS = ('relu', 'sigmoid', 'step', 'identity', 'tanh')


class Parameter(Tensor):
    """A trainable leaf tensor owned by a Module."""

    def __init__(self, data, trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.trainable = trainable

    def assign(self, values: np.ndarray) -> None:
        """Replaces the stored values with a new array of the same shape."""
        values = np.asarray(values, dtype=self.data.dtype)
        if values.shape != self.data.shape:
            raise DimensionError('parameter', self.data.shape, values.shape, context='assign')
        self.data = values


class Module:
    """
    Minimal container that discovers Parameters, buffers and sub-modules from its attributes.

    Names are dotted attribute paths (e.g. `vision.conv1.kernel`) in attribute
    definition order, so a module reused in several places appears once.
    """

    training = True

    def named_modules(self, prefix: str = '') -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_modules(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_modules(f"{prefix}{name}.{i}.")

    def parameters(self) -> Dict[str, Parameter]:
        """Returns every Parameter (trainable or fixed), each exactly once."""
        found: Dict[str, Parameter] = {}
        seen = set()
        for prefix, module in self.named_modules():
            for name, value in vars(module).items():
                if isinstance(value, Parameter) and id(value) not in seen:
                    seen.add(id(value))
                    found[f"{prefix}{name}"] = value
        return found

    def trainable_parameters(self) -> Dict[str, Parameter]:
        return {name: p for name, p in self.parameters().items() if p.trainable}

    def buffers(self) -> Dict[str, np.ndarray]:
        """Returns non-trainable state arrays (batch-norm moving statistics)."""
        found = {}
        for prefix, module in self.named_modules():
            for name, value in getattr(module, '_buffers', {}).items():
                found[f"{prefix}{name}"] = value
        return found

    def parameter_count(self) -> int:
        """Counts trainable scalars, batch-norm gamma/beta included."""
        return int(sum(p.size for p in self.trainable_parameters().values()))

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for parameter in self.parameters().values():
            parameter.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies parameters and buffers into a flat name -> array mapping."""
        state = {name: p.data.copy() for name, p in self.parameters().items()}
        state.update({name: b.copy() for name, b in self.buffers().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Restores parameters and buffers saved by `state_dict`."""
        for name, parameter in self.parameters().items():
            if name in state:
                parameter.assign(state[name])
        for prefix, module in self.named_modules():
            for name in getattr(module, '_buffers', {}):
                key = f"{prefix}{name}"
                if key in state:
                    module._buffers[name] = np.asarray(state[key], dtype=module._buffers[name].dtype).copy()


def glorot_uniform(shape: Tuple[int, ...], rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """
    Glorot/Xavier uniform initialization.

    For convolution kernels [kh, kw, c_in, c_out] the receptive field size
    multiplies both fan-in and fan-out.
    """
    if len(shape) == 2:
        fan_in, fan_out = shape
    else:
        receptive = int(np.prod(shape[:-2]))
        fan_in, fan_out = shape[-2] * receptive, shape[-1] * receptive
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class _Conv2D(Function):
    """Valid (unpadded) stride-1 convolution, computed as a sum of shifted matrix products."""

    def forward(self, x, kernel, bias):
        kh, kw = kernel.shape[:2]
        self.out_h = x.shape[1] - kh + 1
        self.out_w = x.shape[2] - kw + 1
        out = np.zeros((x.shape[0], self.out_h, self.out_w, kernel.shape[3]), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                window = x[:, i:i + self.out_h, j:j + self.out_w, :]
                out += np.tensordot(window, kernel[i, j], axes=([3], [0]))
        return out + bias

    def backward(self, grad):
        x, kernel, _ = (t.data for t in self.inputs)
        kh, kw = kernel.shape[:2]
        grad_x = np.zeros_like(x)
        grad_kernel = np.zeros_like(kernel)
        for i in range(kh):
            for j in range(kw):
                window = x[:, i:i + self.out_h, j:j + self.out_w, :]
                grad_kernel[i, j] = np.tensordot(window, grad, axes=([0, 1, 2], [0, 1, 2]))
                grad_x[:, i:i + self.out_h, j:j + self.out_w, :] += np.tensordot(grad, kernel[i, j], axes=([3], [1]))
        return grad_x, grad_kernel, grad.sum(axis=(0, 1, 2))


def conv2d_forward(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """
    Valid 5x5 convolution with stride 1.

    Args:
        x: Input [batch, h, w, c_in].
        kernel: Weights [5, 5, c_in, c_out].
        bias: Bias [c_out].

    Returns:
        Output [batch, h-4, w-4, c_out].

    Raises:
        DimensionError: Naming the first offending axis.
    """
    if x.ndim != 4:
        raise DimensionError('rank', 4, x.ndim, context='conv2d')
    if kernel.ndim != 4 or kernel.shape[:2] != (KERNEL_SIZE, KERNEL_SIZE):
        raise DimensionError('kernel', f"{KERNEL_SIZE}x{KERNEL_SIZE}", kernel.shape[:2], context='conv2d')
    if x.shape[1] < KERNEL_SIZE:
        raise DimensionError('h', f">={KERNEL_SIZE}", x.shape[1], context='conv2d')
    if x.shape[2] < KERNEL_SIZE:
        raise DimensionError('w', f">={KERNEL_SIZE}", x.shape[2], context='conv2d')
    if kernel.shape[2] != x.shape[3]:
        raise DimensionError('c_in', x.shape[3], kernel.shape[2], context='conv2d')
    if bias.shape != (kernel.shape[3],):
        raise DimensionError('c_out', kernel.shape[3], bias.shape, context='conv2d')
    return _Conv2D.apply(x, kernel, bias)


class _BatchNormTrain(Function):
    """Normalization by batch statistics, differentiable through mean and variance."""

    def forward(self, x, gamma, beta, mean, var, eps):
        self.axes = tuple(range(x.ndim - 1))
        self.count = x.size // x.shape[-1]
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = (x - mean) * self.inv_std
        return gamma * self.x_hat + beta

    def backward(self, grad):
        gamma = self.inputs[1].data
        grad_x_hat = grad * gamma
        grad_x = (self.inv_std / self.count) * (
            self.count * grad_x_hat
            - grad_x_hat.sum(axis=self.axes)
            - self.x_hat * (grad_x_hat * self.x_hat).sum(axis=self.axes)
        )
        return grad_x, (grad * self.x_hat).sum(axis=self.axes), grad.sum(axis=self.axes)


class BatchNormParams:
    """Per-channel gamma/beta and moving statistics for one batch-norm site."""

    def __init__(self, gamma: Parameter, beta: Parameter, moving_mean: np.ndarray,
                 moving_var: np.ndarray, momentum: float = 0.99, eps: float = 1e-3):
        self.gamma = gamma
        self.beta = beta
        self.moving_mean = moving_mean
        self.moving_var = moving_var
        self.momentum = momentum
        self.eps = eps


def batchnorm_forward(x: Tensor, params: BatchNormParams, training: bool) -> Tensor:
    """
    Batch normalization over every axis except the last (channel) axis.

    Training mode normalizes with batch statistics and updates the moving
    averages in `params`; inference mode uses the moving averages.
    """
    channels = x.shape[-1]
    if params.gamma.shape != (channels,):
        raise DimensionError('channels', channels, params.gamma.shape, context='batchnorm')

    if not training:
        scale = params.gamma * Tensor(1.0 / np.sqrt(params.moving_var + params.eps), dtype=x.dtype)
        shift = params.beta - scale * Tensor(params.moving_mean, dtype=x.dtype)
        return x * scale + shift

    if x.size == 0:
        raise DimensionError('batch', '>0', x.shape[0], context='batchnorm')

    axes = tuple(range(x.ndim - 1))
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    params.moving_mean[...] = params.momentum * params.moving_mean + (1.0 - params.momentum) * mean
    params.moving_var[...] = params.momentum * params.moving_var + (1.0 - params.momentum) * var
    return _BatchNormTrain.apply(x, params.gamma, params.beta, mean=mean, var=var, eps=params.eps)


class _MaxPool2x2(Function):
    """2x2 max pooling with stride 2; odd borders are padded with zeros."""

    def forward(self, x):
        batch, h, w, c = x.shape
        self.in_shape = x.shape
        pad_h, pad_w = h % 2, w % 2
        if pad_h or pad_w:
            x = np.pad(x, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)))
        self.out_h, self.out_w = x.shape[1] // 2, x.shape[2] // 2
        windows = x.reshape(batch, self.out_h, 2, self.out_w, 2, c).transpose(0, 1, 3, 5, 2, 4)
        windows = windows.reshape(batch, self.out_h, self.out_w, c, 4)
        self.argmax = windows.argmax(axis=-1)
        return np.take_along_axis(windows, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        batch, h, w, c = self.in_shape
        routed = np.zeros(grad.shape + (4,), dtype=grad.dtype)
        np.put_along_axis(routed, self.argmax[..., None], grad[..., None], axis=-1)
        routed = routed.reshape(batch, self.out_h, self.out_w, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        routed = routed.reshape(batch, self.out_h * 2, self.out_w * 2, c)
        return (routed[:, :h, :w, :],)


def maxpool_forward(x: Tensor) -> Tensor:
    """2x2/stride-2 max pooling; output spatial size is ceil(dim / 2)."""
    if x.ndim != 4:
        raise DimensionError('rank', 4, x.ndim, context='maxpool')
    return _MaxPool2x2.apply(x)


def dropout_forward(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """
    Inverted dropout.

    Training zeroes each element with probability `rate` and scales survivors by
    1/(1-rate); inference and rate 0 return the input unchanged.
    """
    if not 0.0 <= rate < 1.0:
        raise RangeError('rate', rate, 0.0, '<1.0')
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * Tensor(keep)


def dense_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    Affine map `x @ weight + bias`.

    Raises:
        DimensionError: If the inner dimensions or the bias length disagree.
    """
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError('d_in', weight.shape[0], x.shape[-1], context='dense')
    if bias.shape != (weight.shape[1],):
        raise DimensionError('d_out', weight.shape[1], bias.shape, context='dense')
    return x @ weight + bias


class _ReLU(Function):
    def forward(self, a):
        return np.maximum(a, 0)

    def backward(self, grad):
        return (grad * (self.inputs[0].data > 0),)


class _Sigmoid(Function):
    def forward(self, a):
        self.result = 0.5 * (1.0 + np.tanh(0.5 * a))
        return self.result

    def backward(self, grad):
        return (grad * self.result * (1.0 - self.result),)


class _Tanh(Function):
    def forward(self, a):
        self.result = np.tanh(a)
        return self.result

    def backward(self, grad):
        return (grad * (1.0 - self.result * self.result),)


class _Step(Function):
    """Heaviside step (1 iff z > 0) whose backward pass uses a surrogate derivative."""

    def forward(self, a, surrogate):
        self.surrogate = surrogate
        return (a > 0).astype(a.dtype)

    def backward(self, grad):
        return (grad * self.surrogate.derivative(self.inputs[0].data),)


def activation(x: Tensor, kind: str, surrogate=None) -> Tensor:
    """
    Elementwise activation.

    Args:
        x: Input tensor.
        kind: One of relu, sigmoid, step, identity, tanh.
        surrogate: Pseudo-derivative used by `step` in the backward pass; any
            object with a `derivative(z)` method. Defaults to the triangular one.
    """
    if kind == 'relu':
        return _ReLU.apply(x)
    if kind == 'sigmoid':
        return _Sigmoid.apply(x)
    if kind == 'tanh':
        return _Tanh.apply(x)
    if kind == 'identity':
        return x
    if kind == 'step':
        if surrogate is None:
            from recurrent import SurrogateSpec
            surrogate = SurrogateSpec()
        return _Step.apply(x, surrogate=surrogate)
    raise RangeError('activation', kind, ACTIVATIONS[0], ACTIVATIONS[-1])


class Conv2D(Module):
    """5x5 valid convolution layer with Glorot-uniform kernel and zero bias."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, dtype=np.float32):
        self.kernel = Parameter(glorot_uniform((KERNEL_SIZE, KERNEL_SIZE, c_in, c_out), rng, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_forward(x, self.kernel, self.bias)


class BatchNorm(Module):
    """Batch normalization with momentum 0.99 and epsilon 1e-3."""

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.99, eps: float = 1e-3):
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self._buffers = {
            'moving_mean': np.zeros(channels, dtype=dtype),
            'moving_var': np.ones(channels, dtype=dtype),
        }
        self.momentum = momentum
        self.eps = eps

    @property
    def params(self) -> BatchNormParams:
        return BatchNormParams(self.gamma, self.beta, self._buffers['moving_mean'],
                               self._buffers['moving_var'], self.momentum, self.eps)

    def __call__(self, x: Tensor) -> Tensor:
        return batchnorm_forward(x, self.params, self.training)


class Dense(Module):
    """Fully connected layer with Glorot-uniform weight and zero bias."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = Parameter(glorot_uniform((d_in, d_out), rng, dtype))
        self.bias = Parameter(np.zeros(d_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(x, self.weight, self.bias)
