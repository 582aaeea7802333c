"""
Tensor engine
---------
Dense row-major tensors over numpy buffers with reverse-mode differentiation.

Every differentiable operation appends one `TapeNode` to the tape of the
calling thread, so recording order is a topological order. `backward` walks
that tape once, newest node first, and hands each `requires_grad` leaf its
gradient.

Shapes only broadcast by leading-batch expansion (the shorter shape must be
a suffix of the longer one); anything else needs an explicit `broadcast_to`
or `reshape`.
"""
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .errors import (
    BatchSizeError,
    ConfigurationError,
    ContractError,
    DimensionError,
    NumericalError,
)

Shape = Tuple[int, ...]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

PRECISIONS = {"float32": np.float32, "float64": np.float64}

_thread_state = threading.local()


def resolve_dtype(precision: Union[str, np.dtype, type]) -> np.dtype:
    """Map a precision name ("float32" / "float64") or dtype to a numpy dtype"""
    if isinstance(precision, str):
        if precision not in PRECISIONS:
            raise ConfigurationError(
                f"Unknown precision {precision!r}. Allowed values: float32 or float64."
            )
        return np.dtype(PRECISIONS[precision])
    dtype = np.dtype(precision)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigurationError(f"Unsupported tensor dtype {dtype}.")
    return dtype


def _check_finite(array: np.ndarray, op_name: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"Non-finite values produced by {op_name}.")


class TapeNode:
    """One recorded operation: its output, inputs and backward closure"""

    __slots__ = ("index", "generation", "tape", "op_name", "output", "parents", "backward_fn")

    def __init__(self, index, generation, tape, op_name, output, parents, backward_fn):
        self.index = index
        self.generation = generation
        self.tape = tape
        self.op_name = op_name
        self.output = output
        self.parents = parents
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of differentiable operations for one thread"""

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.generation = 0
        self.consumed = False

    def __len__(self):
        return len(self.nodes)

    def reset(self) -> None:
        """Drop every record; tensors recorded before stay usable as constants"""
        self.nodes = []
        self.generation += 1
        self.consumed = False

    def record(self, output: "Tensor", parents: Sequence["Tensor"], backward_fn, op_name):
        if self.consumed:
            self.reset()
        node = TapeNode(
            len(self.nodes), self.generation, self, op_name, output, tuple(parents), backward_fn
        )
        self.nodes.append(node)
        output._node = node

    def owns(self, node: Optional[TapeNode]) -> bool:
        return node is not None and node.tape is self and node.generation == self.generation


def _state():
    if not hasattr(_thread_state, "tape"):
        _thread_state.tape = Tape()
        _thread_state.grad_enabled = True
    return _thread_state


def current_tape() -> Tape:
    """The tape operations of the calling thread are recorded on"""
    return _state().tape


def reset_tape() -> None:
    """Start a fresh recording on the calling thread's tape"""
    _state().tape.reset()


@contextmanager
def no_grad():
    """Evaluate operations without recording them"""
    state = _state()
    previous = state.grad_enabled
    state.grad_enabled = False
    try:
        yield
    finally:
        state.grad_enabled = previous


def is_grad_enabled() -> bool:
    return _state().grad_enabled


class Tensor:
    """A dense tensor: shape, row-major buffer and a requires_grad flag"""

    __array_priority__ = 100

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        dtype: Union[str, np.dtype, type] = np.float64,
        name: Optional[str] = None,
    ):
        array = np.array(data, dtype=resolve_dtype(dtype), order="C")
        _check_finite(array, "tensor construction")
        array.setflags(write=False)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional[TapeNode] = None

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "Tensor":
        tensor = cls.__new__(cls)
        array = np.array(array, order="C")
        array.setflags(write=False)
        tensor.data = array
        tensor.requires_grad = False
        tensor.grad = None
        tensor.name = None
        tensor._node = None
        return tensor

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Shape:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}.")
        return float(self.data.reshape(-1)[0])

    def linear_index(self, multi_index: Sequence[int]) -> int:
        return ravel_index(multi_index, self.shape)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


TensorLike = Union[Tensor, np.ndarray, float, int]


def as_tensor(value: TensorLike, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants as non-differentiable tensors (no copy for Tensors); float arrays keep their dtype"""
    if isinstance(value, Tensor):
        return value
    if like is not None:
        dtype = like.dtype
    elif isinstance(value, np.ndarray) and value.dtype.kind == "f":
        dtype = value.dtype
    else:
        dtype = np.float64
    return Tensor._wrap(np.asarray(value, dtype=dtype))


def record_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op_name: str):
    """Build an op output and record it when any parent requires a gradient"""
    data = np.asarray(data)
    _check_finite(data, op_name)
    out = Tensor._wrap(data)
    state = _state()
    if state.grad_enabled and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        state.tape.record(out, parents, backward_fn, op_name)
    return out


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """
    Reverse-mode pass from a scalar loss.

    Args:
        loss (Tensor): 0-d tensor produced by recorded operations.

    Returns:
        Dict[Tensor, np.ndarray]: gradient of the loss for every requires_grad
        leaf reached; the same arrays are accumulated into `leaf.grad`.
    """
    if loss.ndim != 0:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}.")
    node = loss._node
    if node is None:
        raise ContractError("backward() called on a loss with no recorded operations.")
    tape = node.tape
    if tape.consumed or not tape.owns(node):
        raise ContractError("backward() already ran on this tape; call reset_tape() first.")

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaf_grads: Dict[Tensor, np.ndarray] = {}
    for record in reversed(tape.nodes[: node.index + 1]):
        grad_out = pending.pop(id(record.output), None)
        if grad_out is None:
            continue
        for parent, grad in zip(record.parents, record.backward_fn(grad_out)):
            if grad is None or not parent.requires_grad:
                continue
            if tape.owns(parent._node):
                key = id(parent)
                pending[key] = grad if key not in pending else pending[key] + grad
            else:
                leaf_grads[parent] = grad if parent not in leaf_grads else leaf_grads[parent] + grad
    tape.consumed = True

    for leaf, grad in leaf_grads.items():
        grad = np.asarray(grad, dtype=leaf.dtype).reshape(leaf.shape)
        leaf_grads[leaf] = grad
        leaf.grad = grad if leaf.grad is None else leaf.grad + grad
    return leaf_grads


# Row-major indexing


def ravel_index(multi_index: Sequence[int], shape: Shape) -> int:
    """Row-major linear index: sum of i_j * stride_j"""
    return int(np.ravel_multi_index(tuple(int(i) for i in multi_index), shape))


def unravel_index(index: int, shape: Shape) -> Tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(int(index), shape))


def row_major_strides(shape: Shape) -> Tuple[int, ...]:
    """Element strides of a contiguous row-major buffer"""
    strides = []
    step = 1
    for dim in reversed(shape):
        strides.append(step)
        step *= dim
    return tuple(reversed(strides))


# Broadcasting helpers


def _leading_shape(a: Shape, b: Shape, op_name: str) -> Shape:
    longer, shorter = (a, b) if len(a) >= len(b) else (b, a)
    if longer[len(longer) - len(shorter):] != shorter:
        raise DimensionError(
            f"{op_name}: shapes {a} and {b} only broadcast by leading-batch expansion."
        )
    return longer


def _unbroadcast(grad: np.ndarray, shape: Shape) -> np.ndarray:
    """Sum a gradient back onto `shape` (leading axes and size-1 axes)"""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if squeeze:
        grad = grad.sum(axis=squeeze, keepdims=True)
    return grad


def _binary(a: TensorLike, b: TensorLike) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# Elementwise arithmetic


def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _binary(a, b)
    _leading_shape(a.shape, b.shape, "add")

    def _backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return record_op(a.data + b.data, (a, b), _backward, "add")


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _binary(a, b)
    _leading_shape(a.shape, b.shape, "sub")

    def _backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return record_op(a.data - b.data, (a, b), _backward, "sub")


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _binary(a, b)
    _leading_shape(a.shape, b.shape, "mul")

    def _backward(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return record_op(a.data * b.data, (a, b), _backward, "mul")


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _binary(a, b)
    _leading_shape(a.shape, b.shape, "div")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def _backward(grad):
        return (
            _unbroadcast(grad / b.data, a.shape),
            _unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
        )

    return record_op(out, (a, b), _backward, "div")


def neg(x: Tensor) -> Tensor:
    return record_op(-x.data, (x,), lambda grad: (-grad,), "neg")


def power(x: Tensor, exponent: float) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x.data**exponent

    def _backward(grad):
        return (grad * exponent * x.data ** (exponent - 1),)

    return record_op(out, (x,), _backward, "power")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return record_op(out, (x,), lambda grad: (grad * out,), "exp")


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return record_op(out, (x,), lambda grad: (grad / x.data,), "log")


def sqrt(x: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)
    return record_op(out, (x,), lambda grad: (grad * 0.5 / out,), "sqrt")


def clamp_min(x: Tensor, floor: float) -> Tensor:
    out = np.maximum(x.data, floor)
    return record_op(out, (x,), lambda grad: (grad * (x.data > floor),), "clamp_min")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return record_op(out, (x,), lambda grad: (grad * (x.data > 0),), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = special.expit(x.data)
    return record_op(out, (x,), lambda grad: (grad * out * (1 - out),), "sigmoid")


def silu(x: Tensor) -> Tensor:
    gate = special.expit(x.data)

    def _backward(grad):
        return (grad * gate * (1 + x.data * (1 - gate)),)

    return record_op(x.data * gate, (x,), _backward, "silu")


def softplus(x: Tensor) -> Tensor:
    out = np.logaddexp(0, x.data)
    return record_op(out, (x,), lambda grad: (grad * special.expit(x.data),), "softplus")


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor._wrap(x.data)


def straight_through_gate(x: Tensor) -> Tensor:
    """Exact ones in the forward pass; the incoming gradient flows to `x` unchanged"""
    return record_op(np.ones_like(x.data), (x,), lambda grad: (grad,), "straight_through_gate")


# Reductions


def _normalize_axes(axis, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, (int, np.integer)) else tuple(axis)
    if any(not -ndim <= int(a) < ndim for a in axes):
        raise DimensionError(f"Axis {axis} invalid for a {ndim}-d tensor.")
    return tuple(sorted({int(a) % ndim for a in axes}))


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes, keepdims=keepdims)

    def _backward(grad):
        if axes is not None and not keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, x.shape),)

    return record_op(out, (x,), _backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = x.size if axes is None else int(np.prod([x.shape[i] for i in axes]))
    if count == 0:
        raise DimensionError(f"mean over an empty axis of shape {x.shape}.")
    return tensor_sum(x, axes, keepdims) * (1.0 / count)


# Shape operations


def reshape(x: Tensor, shape: Shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as shape_error:
        raise DimensionError(f"Cannot reshape {x.shape} into {tuple(shape)}.") from shape_error
    return record_op(out, (x,), lambda grad: (grad.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.transpose(x.data, axes)
    return record_op(out, (x,), lambda grad: (np.transpose(grad, inverse),), "transpose")


def broadcast_to(x: Tensor, shape: Shape) -> Tensor:
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError as shape_error:
        raise DimensionError(f"Cannot broadcast {x.shape} to {tuple(shape)}.") from shape_error
    return record_op(out, (x,), lambda grad: (_unbroadcast(grad, x.shape),), "broadcast_to")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor.")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as shape_error:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"Cannot concatenate shapes {shapes} on axis {axis}.") from shape_error
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(grad):
        return tuple(np.split(grad, bounds, axis=axis))

    return record_op(out, tuple(tensors), _backward, "concat")


def _expand_indices(indices: np.ndarray, shape: Shape, axis: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    trailing = (1,) * (len(shape) - axis - 1)
    if indices.ndim == 1:
        expanded = indices.reshape((1,) * axis + indices.shape + trailing)
    elif indices.shape[:-1] == tuple(shape[:axis]):
        expanded = indices.reshape(indices.shape + trailing)
    else:
        raise DimensionError(
            f"Index array of shape {indices.shape} does not match tensor shape {shape} at axis {axis}."
        )
    target = tuple(shape[:axis]) + (indices.shape[-1],) + tuple(shape[axis + 1:])
    return np.broadcast_to(expanded, target)


def gather(x: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Select positions along `axis`; indices are shared (1-d) or per leading row"""
    axis = axis % x.ndim
    expanded = _expand_indices(indices, x.shape, axis)
    out = np.take_along_axis(x.data, expanded, axis=axis)

    def _backward(grad):
        full = np.zeros(x.shape, dtype=grad.dtype)
        np.put_along_axis(full, expanded, grad, axis=axis)
        return (full,)

    return record_op(out, (x,), _backward, "gather")


def narrow(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice [start, stop) along `axis`"""
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"Slice [{start}, {stop}) out of range for axis {axis} of {x.shape}.")
    return gather(x, np.arange(start, stop), axis)


def scatter(values: Tensor, indices: np.ndarray, length: int, axis: int) -> Tensor:
    """Place `values` at `indices` of a zero tensor with `length` positions on `axis`"""
    axis = axis % values.ndim
    shape = values.shape[:axis] + (length,) + values.shape[axis + 1:]
    expanded = _expand_indices(indices, shape, axis)
    if expanded.shape != values.shape:
        raise DimensionError(f"scatter: values {values.shape} do not match indices {expanded.shape}.")
    out = np.zeros(shape, dtype=values.dtype)
    np.put_along_axis(out, expanded, values.data, axis=axis)

    def _backward(grad):
        return (np.take_along_axis(grad, expanded, axis=axis),)

    return record_op(out, (values,), _backward, "scatter")


# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes; `a` may carry extra leading batch
    axes when `b` is 2-d, otherwise the leading axes must agree.
    """
    a, b = _binary(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}.")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch axes differ: {a.shape} x {b.shape}.")
    out = np.matmul(a.data, b.data)

    def _backward(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            grad_b = a.data.reshape(-1, a.shape[-1]).T @ grad.reshape(-1, b.shape[-1])
        else:
            grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), grad_b

    return record_op(out, (a, b), _backward, "matmul")


def _softmax_array(data: np.ndarray, axis: int) -> np.ndarray:
    shifted = data - np.max(data, axis=axis, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axes(axis, max(x.ndim, 1))[0]
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"softmax over an empty axis {axis} of shape {x.shape}.")
    out = _softmax_array(x.data, axis)

    def _backward(grad):
        return (out * (grad - np.sum(grad * out, axis=axis, keepdims=True)),)

    return record_op(out, (x,), _backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axes(axis, max(x.ndim, 1))[0]
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"log_softmax over an empty axis {axis} of shape {x.shape}.")
    out = x.data - special.logsumexp(x.data, axis=axis, keepdims=True)

    def _backward(grad):
        return (grad - np.exp(out) * np.sum(grad, axis=axis, keepdims=True),)

    return record_op(out, (x,), _backward, "log_softmax")


def grouped_conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    groups: int = 1,
    padding: str = "same",
) -> Tensor:
    """
    Grouped 1-d convolution (cross-correlation) with zero padding.

    Args:
        x (Tensor): input of shape [batch, groups*c_in, length].
        weight (Tensor): kernels of shape [groups*c_out, c_in, width].
        bias (Tensor): optional [groups*c_out] bias.
        groups (int): number of independent channel groups.
        padding (str): "same" (odd width, symmetric) or "causal" (left only).

    Returns:
        Tensor: output of shape [batch, groups*c_out, length]; output group g
        only reads input group g.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise DimensionError(f"grouped_conv1d expects 3-d input and weight, got {x.shape}, {weight.shape}.")
    batch, channels, length = x.shape
    if groups < 1 or channels % groups or weight.shape[0] % groups:
        raise ConfigurationError(
            f"Channel counts {channels} -> {weight.shape[0]} are not divisible by groups={groups}."
        )
    c_in, c_out, width = channels // groups, weight.shape[0] // groups, weight.shape[2]
    if weight.shape[1] != c_in:
        raise DimensionError(f"Kernel shape {weight.shape} expects {weight.shape[1]} inputs per group, got {c_in}.")
    if padding == "same":
        if width % 2 == 0:
            raise ConfigurationError(f"'same' padding needs an odd kernel width, got {width}.")
        left = (width - 1) // 2
    elif padding == "causal":
        left = width - 1
    else:
        raise ConfigurationError(f"Unknown padding {padding!r}. Allowed values: same or causal.")

    padded = np.pad(x.data, ((0, 0), (0, 0), (left, width - 1 - left)))
    windows = sliding_window_view(padded, width, axis=2).reshape(batch, groups, c_in, length, width)
    kernels = weight.data.reshape(groups, c_out, c_in, width)
    out = np.einsum("ngclk,gock->ngol", windows, kernels).reshape(batch, groups * c_out, length)
    parents = (x, weight)
    if bias is not None:
        out = out + bias.data[None, :, None]
        parents = (x, weight, bias)

    def _backward(grad):
        grad5 = grad.reshape(batch, groups, c_out, length)
        grad_weight = np.einsum("ngol,ngclk->gock", grad5, windows).reshape(weight.shape)
        grad_windows = np.einsum("ngol,gock->ngclk", grad5, kernels).reshape(batch, channels, length, width)
        grad_padded = np.zeros(padded.shape, dtype=grad.dtype)
        for k in range(width):
            grad_padded[:, :, k:k + length] += grad_windows[..., k]
        grads = [grad_padded[:, :, left:left + length], grad_weight]
        if bias is not None:
            grads.append(grad.sum(axis=(0, 2)))
        return grads

    return record_op(out, parents, _backward, "grouped_conv1d")


@dataclass
class BatchNormState:
    """Running statistics of one batch-normalisation layer"""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5


def batch_norm(
    x: Tensor,
    state: BatchNormState,
    weight: Tensor,
    bias: Tensor,
    training: bool,
) -> Tensor:
    """
    Batch normalisation over the leading axis of a [B, features] tensor.

    Training mode normalises by the biased batch variance and moves the
    running statistics (unbiased variance) by `momentum`; eval mode uses the
    running statistics only.
    """
    if x.ndim != 2:
        raise DimensionError(f"batch_norm expects [B, features], got {x.shape}.")
    if training:
        batch = x.shape[0]
        if batch < 2:
            raise BatchSizeError(f"Training-mode batch normalisation needs B >= 2, got B={batch}.")
        batch_mean = mean(x, axis=0)
        centered = x - batch_mean
        batch_var = mean(centered * centered, axis=0)
        normalized = centered / sqrt(batch_var + state.eps)
        state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * batch_mean.data
        state.running_var = (1 - state.momentum) * state.running_var + state.momentum * (
            batch_var.data * batch / (batch - 1)
        )
    else:
        running_mean = as_tensor(state.running_mean.astype(x.dtype), like=x)
        scale = as_tensor(1.0 / np.sqrt(state.running_var.astype(x.dtype) + state.eps), like=x)
        normalized = (x - running_mean) * scale
    return normalized * weight + bias
