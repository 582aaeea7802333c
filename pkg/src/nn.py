"""Parameters, modules and the basic layers built on the tensor engine"""
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import (
    BatchNormState,
    Tensor,
    _check_finite,
    batch_norm,
    grouped_conv1d,
    matmul,
    resolve_dtype,
)


class Parameter(Tensor):
    """A trainable leaf tensor"""

    def __init__(self, data, dtype=np.float64, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)

    def assign(self, values: np.ndarray) -> None:
        """Replace the buffer (same shape) after an optimizer step or a load"""
        array = np.array(values, dtype=self.dtype).reshape(self.shape)
        _check_finite(array, f"assign to {self.name or 'parameter'}")
        array.setflags(write=False)
        self.data = array


class Module:
    """Container that registers parameters, buffers and child modules in order"""

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif name in self._buffers:
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def register_buffer(self, name: str, array: np.ndarray) -> None:
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, child in self._modules.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, array in self._buffers.items():
            yield prefix + name, array
        for name, child in self._modules.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def num_parameters(self) -> int:
        return sum(param.size for param in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._modules.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of every parameter and buffer, keyed by dotted path"""
        state = OrderedDict()
        for name, param in self.named_parameters():
            state[name] = np.array(param.data)
        for name, array in self.named_buffers():
            state[name] = np.array(array)
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.state_dict())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ConfigurationError(
                f"State does not match the model. Missing: {missing}; unexpected: {unexpected}."
            )
        for name, value in state.items():
            if tuple(np.shape(value)) != own[name].shape:
                raise DimensionError(
                    f"Shape of {name} differs: stored {np.shape(value)}, model {own[name].shape}."
                )
        for name, param in self.named_parameters():
            param.assign(state[name])
        self._load_buffers(state)

    def _load_buffers(self, state: Dict[str, np.ndarray], prefix: str = "") -> None:
        for name, array in list(self._buffers.items()):
            setattr(self, name, np.array(state[prefix + name], dtype=array.dtype))
        for name, child in self._modules.items():
            child._load_buffers(state, f"{prefix}{name}.")


class ModuleList(Module):
    """Ordered list of child modules registered as "0", "1", ..."""

    def __init__(self, modules=()):
        super().__init__()
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._modules)), module)

    def __iter__(self):
        return iter(self._modules.values())

    def __len__(self):
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return list(self._modules.values())[index]


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    """y = x W + b over the last axis; W is [in_features, out_features]"""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        dtype="float64",
    ):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ConfigurationError(f"Linear widths must be positive, got {in_features} -> {out_features}.")
        dtype = resolve_dtype(dtype)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(fan_in_uniform(rng, (in_features, out_features), in_features, dtype), dtype)
        self.bias = Parameter(np.zeros(out_features), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"Linear layer expects {self.in_features} input features, got shape {x.shape}."
            )
        out = matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class GroupedConv1d(Module):
    """Grouped 1-d convolution layer over [batch, channels, length] inputs"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        width: int,
        groups: int,
        rng: np.random.Generator,
        padding: str = "same",
        bias: bool = True,
        dtype="float64",
    ):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ConfigurationError(
                f"Channels {in_channels} -> {out_channels} are not divisible by groups={groups}."
            )
        dtype = resolve_dtype(dtype)
        fan_in = (in_channels // groups) * width
        self.groups = groups
        self.padding = padding
        self.weight = Parameter(
            fan_in_uniform(rng, (out_channels, in_channels // groups, width), fan_in, dtype), dtype
        )
        self.bias = Parameter(np.zeros(out_channels), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return grouped_conv1d(x, self.weight, self.bias, self.groups, self.padding)


class BatchNorm1d(Module):
    """Batch normalisation with affine scale/shift and running statistics"""

    def __init__(self, features: int, momentum: float = 0.1, eps: float = 1e-5, dtype="float64"):
        super().__init__()
        dtype = resolve_dtype(dtype)
        self.momentum = momentum
        self.eps = eps
        self.weight = Parameter(np.ones(features), dtype)
        self.bias = Parameter(np.zeros(features), dtype)
        self.register_buffer("running_mean", np.zeros(features, dtype=dtype))
        self.register_buffer("running_var", np.ones(features, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        state = BatchNormState(self.running_mean, self.running_var, self.momentum, self.eps)
        out = batch_norm(x, state, self.weight, self.bias, self.training)
        self.running_mean = state.running_mean
        self.running_var = state.running_var
        return out
