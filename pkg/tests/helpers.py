# pylint: disable=missing-module-docstring
from typing import Callable, Sequence

import numpy as np

from src.schemas import ModelConfig
from src.tensor import Tensor, backward, no_grad, reset_tape

STEP = 1e-6


def numerical_gradient(value_fn: Callable[[np.ndarray], float], array: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of a scalar function of one array"""
    array = np.array(array, dtype=np.float64)
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + h
        upper = value_fn(array)
        array[index] = original - h
        lower = value_fn(array)
        array[index] = original
        grad[index] = (upper - lower) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(loss_fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], tol: float = 1e-4) -> None:
    """Compare backward() with central differences for every input of `loss_fn`"""
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    reset_tape()
    tensors = [Tensor(x, requires_grad=True) for x in inputs]
    grads = backward(loss_fn(*tensors))

    for position, x in enumerate(inputs):

        def value(array, position=position):
            args = [Tensor(a) for a in inputs]
            args[position] = Tensor(array)
            with no_grad():
                return loss_fn(*args).item()

        analytic = grads.get(tensors[position], np.zeros_like(x))
        numeric = numerical_gradient(value, x)
        error = relative_error(analytic, numeric)
        assert error < tol, f"input {position}: relative error {error:.3e}"


def weighted_sum(x: Tensor, seed: int = 0) -> Tensor:
    """Scalar reduction with distinct weights per element"""
    weights = np.random.default_rng(seed).normal(size=x.shape)
    return (x * Tensor(weights)).sum()


def tiny_config(**changes) -> ModelConfig:
    """H = W = 3, T = 4, C0 = 2, K = 3 in float64"""
    values = dict(
        H=3, W=3, T=4, C0=2, K=3, C=4, d=8, state_size=4, heads=2, d_k=4,
        gcn_width=8, fusion_width=8, precision="float64", seed=0,
    )
    values.update(changes)
    return ModelConfig(**values)
