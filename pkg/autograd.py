"""
Reverse-mode automatic differentiation over dense numpy arrays.

Operations executed while a `Tape` is active are recorded in execution order,
which is already a topological order, so `backward` simply walks the record in
reverse. Outside a tape nothing is recorded (inference mode).
"""
import threading
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DimensionError, NumericError

_local = threading.local()

ArrayLike = Union[np.ndarray, float, int, Sequence]


def _tape_stack() -> List["Tape"]:
    """Returns the per-thread stack of active tapes."""
    if not hasattr(_local, 'stack'):
        _local.stack = []
    return _local.stack


def current_tape() -> Optional["Tape"]:
    """Returns the innermost tape active on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """
    Ordered record of the operations executed on this thread while active.

    A tape belongs to one thread; tapes are never shared between workers.
    """

    def __init__(self, check_finite: bool = False):
        """
        Args:
            check_finite: Raise NumericError as soon as a forward value or a
                gradient contains NaN or Inf.
        """
        self.records: List["Function"] = []
        self.check_finite = check_finite

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def record(self, function: "Function") -> None:
        """Appends an executed operation."""
        self.records.append(function)

    def __len__(self) -> int:
        return len(self.records)


def unbroadcast(grad: np.ndarray, to_shape: Tuple[int, ...]) -> np.ndarray:
    """
    Sums out broadcast dimensions so `grad` matches `to_shape`.

    Args:
        grad: Gradient with the broadcast (output) shape.
        to_shape: Shape of the operand that was broadcast.

    Returns:
        Gradient reduced to `to_shape`.
    """
    if grad.shape == to_shape:
        return grad
    while grad.ndim > len(to_shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(to_shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(to_shape)


def _check_finite(array: np.ndarray, what: str) -> None:
    """Raises NumericError when `array` holds NaN or Inf."""
    if not np.all(np.isfinite(array)):
        raise NumericError(f"non-finite values in {what}")


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which maps the
    gradient of the output to one gradient (or None) per input.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.output: Optional["Tensor"] = None

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs) -> "Tensor":
        """
        Runs the forward pass and records the operation on the active tape.

        Args:
            *inputs: Input tensors.
            **kwargs: Non-differentiable arguments forwarded to `forward`.

        Returns:
            The output tensor.
        """
        function = cls(*inputs)
        out_data = function.forward(*(t.data for t in inputs), **kwargs)
        tape = current_tape()
        requires_grad = tape is not None and any(t.requires_grad for t in inputs)

        out = Tensor(out_data, requires_grad=requires_grad)
        if tape is not None and tape.check_finite:
            _check_finite(out.data, f"{cls.__name__} forward")
        if requires_grad:
            out._creator = function
            function.output = out
            tape.record(function)
        return out


class Tensor:
    """
    An n-dimensional real array participating in reverse-mode autodiff.

    The array is treated as immutable once produced; optimizers replace `data`
    wholesale instead of writing into it.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        """
        Args:
            data: Values; integer input is promoted to float64.
            requires_grad: Whether backward should compute a gradient for this tensor.
            dtype: Optional float dtype to cast to.
        """
        array = np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._creator: Optional[Function] = None
        self._retain_grad = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        """True when the tensor was not produced by a recorded operation."""
        return self._creator is None

    def retain_grad(self) -> "Tensor":
        """Asks backward to also store the gradient of this intermediate tensor."""
        self._retain_grad = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        """Adds `grad` into the stored gradient."""
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + grad

    def _lift(self, other) -> "Tensor":
        """Wraps constants as non-differentiable tensors of the same dtype."""
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other) -> "Tensor":
        return Add.apply(self, self._lift(other))

    def __radd__(self, other) -> "Tensor":
        return Add.apply(self._lift(other), self)

    def __sub__(self, other) -> "Tensor":
        return Sub.apply(self, self._lift(other))

    def __rsub__(self, other) -> "Tensor":
        return Sub.apply(self._lift(other), self)

    def __mul__(self, other) -> "Tensor":
        return Mul.apply(self, self._lift(other))

    def __rmul__(self, other) -> "Tensor":
        return Mul.apply(self._lift(other), self)

    def __truediv__(self, other) -> "Tensor":
        return Div.apply(self, self._lift(other))

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __matmul__(self, other) -> "Tensor":
        return MatMul.apply(self, self._lift(other))

    def __getitem__(self, index) -> "Tensor":
        return GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes or None)

    def broadcast_to(self, shape) -> "Tensor":
        return BroadcastTo.apply(self, shape=tuple(shape))

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    @staticmethod
    def concat(tensors: Sequence["Tensor"], axis: int = 0) -> "Tensor":
        return Concat.apply(*tensors, axis=axis)

    @staticmethod
    def stack(tensors: Sequence["Tensor"], axis: int = 0) -> "Tensor":
        return Stack.apply(*tensors, axis=axis)


def backward(loss: Tensor, tape: Tape) -> None:
    """
    Propagates gradients from a scalar loss through the recorded operations.

    Leaf tensors with `requires_grad` (and intermediates that called
    `retain_grad`) receive their gradient added to `.grad`, so repeated calls
    without `zero_grad` accumulate.

    Args:
        loss: Scalar tensor produced while `tape` was active.
        tape: The tape the loss was recorded on.

    Raises:
        DimensionError: If the loss is not a scalar.
    """
    if loss.size != 1:
        raise DimensionError('loss', 'scalar', loss.shape, context='backward')

    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        if loss.requires_grad:
            loss._accumulate(seed)
        return

    pending = {id(loss): seed}
    for function in reversed(tape.records):
        grad = pending.pop(id(function.output), None)
        if grad is None:
            continue
        if function.output._retain_grad:
            function.output._accumulate(grad)

        input_grads = function.backward(grad)
        for tensor, input_grad in zip(function.inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            input_grad = unbroadcast(np.asarray(input_grad, dtype=tensor.dtype), tensor.shape)
            if tape.check_finite:
                _check_finite(input_grad, f"{type(function).__name__} backward")
            if tensor.is_leaf:
                tensor._accumulate(input_grad)
            elif id(tensor) in pending:
                pending[id(tensor)] = pending[id(tensor)] + input_grad
            else:
                pending[id(tensor)] = input_grad


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = (t.data for t in self.inputs)
        return grad * b, grad * a


class Div(Function):
    def forward(self, a, b):
        return a / b

    def backward(self, grad):
        a, b = (t.data for t in self.inputs)
        return grad / b, -grad * a / (b * b)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class MatMul(Function):
    """Matrix product of `a[..., k]` with a 2-D `b[k, n]` (or two 2-D matrices)."""

    def forward(self, a, b):
        if b.ndim != 2 or a.shape[-1] != b.shape[0]:
            raise DimensionError('inner', a.shape[-1], b.shape[0] if b.ndim else b.shape, context='matmul')
        return a @ b

    def backward(self, grad):
        a, b = (t.data for t in self.inputs)
        grad_a = grad @ b.T
        grad_b = a.reshape(-1, a.shape[-1]).T @ grad.reshape(-1, grad.shape[-1])
        return grad_a, grad_b


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.axis = axis
        self.keepdims = keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        shape = self.inputs[0].shape
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, shape),)


class Reshape(Function):
    def forward(self, a, shape):
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Function):
    def forward(self, a, axes=None):
        self.axes = axes
        return np.transpose(a, axes)

    def backward(self, grad):
        if self.axes is None:
            return (np.transpose(grad),)
        return (np.transpose(grad, np.argsort(self.axes)),)


class BroadcastTo(Function):
    def forward(self, a, shape):
        return np.broadcast_to(a, shape)

    def backward(self, grad):
        # unbroadcast in backward() reduces to the input shape
        return (grad,)


class GetItem(Function):
    def forward(self, a, index):
        self.index = index
        return np.array(a[index], copy=True)

    def backward(self, grad):
        full = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        parts = self.index if isinstance(self.index, tuple) else (self.index,)
        if any(isinstance(part, (np.ndarray, list)) for part in parts):
            np.add.at(full, self.index, grad)
        else:
            full[self.index] = grad
        return (full,)


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


class Stack(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        return np.stack(arrays, axis=axis)

    def backward(self, grad):
        count = grad.shape[self.axis]
        return tuple(np.take(grad, i, axis=self.axis) for i in range(count))


class Exp(Function):
    def forward(self, a):
        self.result = np.exp(a)
        return self.result

    def backward(self, grad):
        return (grad * self.result,)


class Log(Function):
    def forward(self, a):
        return np.log(a)

    def backward(self, grad):
        return (grad / self.inputs[0].data,)
