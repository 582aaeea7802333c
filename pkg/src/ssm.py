"""
Selective state-space core
---------
The selective scan behind every branch of the model and the Mamba block that
wraps it.

Per channel d and state slot n the recurrence is

    h_t = exp(delta_t * A) * h_{t-1} + (delta_t * B_t) * u_t,   h_0 = 0
    y_t = <C_t, h_t> + D * u_t

with delta_t, B_t, C_t projected from the input (selectivity). Two kernels
compute the states: a step-by-step loop and a Hillis-Steele associative scan
over (A_bar, B_bar u) pairs. The scan is one tape operation whose backward
pass runs the adjoint recurrence with the same kernel.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError
from .nn import GroupedConv1d, Linear, Module, ModuleList, Parameter
from .tensor import (
    Tensor,
    exp,
    narrow,
    neg,
    record_op,
    reshape,
    resolve_dtype,
    silu,
    softplus,
    transpose,
)

SCAN_MODES = ("sequential", "parallel")


@dataclass
class ScanState:
    """Hidden states of every step, [S, L, channels, N]"""

    h: np.ndarray


def discretize(A: np.ndarray, B: np.ndarray, delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Simplified zero-order hold.

    Args:
        A (np.ndarray): [..., D, N] diagonal state matrix entries.
        B (np.ndarray): [..., N] input matrix for the step.
        delta (np.ndarray): [..., D] positive step sizes.

    Returns:
        (A_bar, B_bar): exp(delta * A) and delta * B, both [..., D, N].
    """
    delta = np.asarray(delta)
    if np.any(delta <= 0):
        raise ContractError("discretize needs delta > 0 elementwise.")
    A_bar = np.exp(delta[..., None] * A)
    B_bar = delta[..., None] * np.asarray(B)[..., None, :]
    return A_bar, B_bar


def scan_combine(left: Tuple[np.ndarray, np.ndarray], right: Tuple[np.ndarray, np.ndarray]):
    """Compose two affine steps h -> a h + b, `left` applied first"""
    a_left, b_left = left
    a_right, b_right = right
    return a_right * a_left, a_right * b_left + b_right


def sequential_scan(a: np.ndarray, b: np.ndarray, axis: int = 1) -> np.ndarray:
    """h_t = a_t h_{t-1} + b_t from h_0 = 0, one step at a time"""
    a = np.moveaxis(a, axis, 0)
    b = np.moveaxis(b, axis, 0)
    h = np.empty_like(b)
    state = np.zeros_like(b[0])
    for t in range(b.shape[0]):
        state = a[t] * state + b[t]
        h[t] = state
    return np.moveaxis(h, 0, axis)


def associative_scan(a: np.ndarray, b: np.ndarray, axis: int = 1) -> np.ndarray:
    """Inclusive scan of `scan_combine` in log2(L) doubling rounds"""
    a = np.array(np.moveaxis(a, axis, 0))
    b = np.array(np.moveaxis(b, axis, 0))
    length = b.shape[0]
    offset = 1
    while offset < length:
        a[offset:], b[offset:] = scan_combine((a[:-offset], b[:-offset]), (a[offset:], b[offset:]))
        offset *= 2
    return np.moveaxis(b, 0, axis)


def scan_forward(u, delta, A, B, C, D, mode: str = "sequential") -> Tuple[np.ndarray, ScanState]:
    """
    Selective scan on raw arrays.

    Args:
        u, delta: [S, L, Dc] inputs and step sizes.
        A: [Dc, N] (non-positive entries). B, C: [S, L, N]. D: [Dc].
        mode (str): "sequential" or "parallel".

    Returns:
        (y [S, L, Dc], ScanState)
    """
    if mode == "sequential":
        samples, length, channels = u.shape
        h = np.empty((samples, length, channels, A.shape[1]), dtype=u.dtype)
        state = np.zeros((samples, channels, A.shape[1]), dtype=u.dtype)
        for t in range(length):
            A_bar, B_bar = discretize(A, B[:, t], delta[:, t])
            state = A_bar * state + B_bar * u[:, t, :, None]
            h[:, t] = state
    else:
        A_bar, B_bar = discretize(A, B, delta)
        h = associative_scan(A_bar, B_bar * u[..., None], axis=1)
    y = np.einsum("sldn,sln->sld", h, C) + u * D
    return y, ScanState(h)


def scan_backward(grad_y, u, delta, A, B, C, D, state: ScanState, mode: str = "sequential"):
    """Adjoint of `scan_forward`: gradients for (u, delta, A, B, C, D)"""
    h = state.h
    grad_D = np.sum(grad_y * u, axis=(0, 1))
    grad_C = np.einsum("sld,sldn->sln", grad_y, h)
    h_prev = np.concatenate([np.zeros_like(h[:, :1]), h[:, :-1]], axis=1)

    if mode == "sequential":
        grad_u = grad_y * D
        grad_delta = np.empty_like(delta)
        grad_A = np.zeros_like(A)
        grad_B = np.empty_like(B)
        adjoint = np.zeros_like(h[:, 0])
        A_bar_next = None
        for t in reversed(range(u.shape[1])):
            adjoint = grad_y[:, t, :, None] * C[:, t, None, :] + (
                A_bar_next * adjoint if A_bar_next is not None else 0.0
            )
            A_bar = np.exp(delta[:, t, :, None] * A)
            grad_exponent = adjoint * h_prev[:, t] * A_bar
            through_B = np.einsum("sdn,sn->sd", adjoint, B[:, t])
            grad_A += np.einsum("sdn,sd->dn", grad_exponent, delta[:, t])
            grad_delta[:, t] = np.einsum("sdn,dn->sd", grad_exponent, A) + through_B * u[:, t]
            grad_u[:, t] += through_B * delta[:, t]
            grad_B[:, t] = np.einsum("sdn,sd->sn", adjoint, delta[:, t] * u[:, t])
            A_bar_next = A_bar
        return grad_u, grad_delta, grad_A, grad_B, grad_C, grad_D

    A_bar = np.exp(delta[..., None] * A)
    carry = np.concatenate([A_bar[:, 1:], np.zeros_like(A_bar[:, :1])], axis=1)
    direct = grad_y[..., None] * C[:, :, None, :]
    adjoint = associative_scan(carry[:, ::-1], direct[:, ::-1], axis=1)[:, ::-1]
    grad_exponent = adjoint * h_prev * A_bar
    through_B = np.einsum("sldn,sln->sld", adjoint, B)
    grad_u = grad_y * D + through_B * delta
    grad_delta = np.einsum("sldn,dn->sld", grad_exponent, A) + through_B * u
    grad_A = np.einsum("sldn,sld->dn", grad_exponent, delta)
    grad_B = np.einsum("sldn,sld->sln", adjoint, delta * u)
    return grad_u, grad_delta, grad_A, grad_B, grad_C, grad_D


def selective_scan(
    u: Tensor,
    delta: Tensor,
    A: Tensor,
    B: Tensor,
    C: Tensor,
    D: Tensor,
    mode: str = "sequential",
) -> Tensor:
    """Differentiable selective scan over [S, L, channels] sequences"""
    if mode not in SCAN_MODES:
        raise ConfigurationError(f"Unknown scan mode {mode!r}. Allowed values: {SCAN_MODES}.")
    if u.ndim != 3 or delta.shape != u.shape:
        raise DimensionError(f"Scan input {u.shape} and step sizes {delta.shape} must be [S, L, channels].")
    samples, length, channels = u.shape
    if length < 1:
        raise ContractError("Selective scan needs a sequence of length >= 1.")
    if A.shape[0] != channels or D.shape != (channels,):
        raise DimensionError(f"A {A.shape} / D {D.shape} do not match {channels} channels.")
    if B.shape != (samples, length, A.shape[1]) or C.shape != B.shape:
        raise DimensionError(f"B {B.shape} / C {C.shape} must be [{samples}, {length}, {A.shape[1]}].")

    arrays = (u.data, delta.data, A.data, B.data, C.data, D.data)
    y, state = scan_forward(*arrays, mode=mode)

    def _backward(grad):
        return scan_backward(grad, *arrays, state=state, mode=mode)

    return record_op(y, (u, delta, A, B, C, D), _backward, f"selective_scan[{mode}]")


def inverse_softplus(values: np.ndarray) -> np.ndarray:
    return values + np.log(-np.expm1(-values))


class SelectiveSSM(Module):
    """
    Input-dependent SSM parameters for `channels` independent channels:
    diagonal A = -exp(A_log) (S4D-real init -(1..N)), delta/B/C projections
    and the D skip.
    """

    def __init__(
        self,
        channels: int,
        state_size: int,
        dt_rank: int,
        rng: np.random.Generator,
        dt_min: float = 1e-3,
        dt_max: float = 1e-1,
        dtype="float64",
    ):
        super().__init__()
        dtype = resolve_dtype(dtype)
        self.channels = channels
        self.state_size = state_size
        self.dt_rank = dt_rank
        self.x_proj = Linear(channels, dt_rank + 2 * state_size, rng, bias=False, dtype=dtype)
        self.dt_proj = Linear(dt_rank, channels, rng, dtype=dtype)
        self.dt_proj.weight.assign(rng.uniform(-1, 1, (dt_rank, channels)) * dt_rank**-0.5)
        step = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), channels))
        self.dt_proj.bias.assign(inverse_softplus(np.maximum(step, 1e-4)))
        self.A_log = Parameter(np.log(np.tile(np.arange(1, state_size + 1), (channels, 1))), dtype)
        self.D = Parameter(np.ones(channels), dtype)

    def A(self) -> Tensor:
        return neg(exp(self.A_log))

    def forward(self, x: Tensor, mode: str = "sequential") -> Tensor:
        if x.shape[-1] != self.channels:
            raise ConfigurationError(f"SSM built for {self.channels} channels, got input {x.shape}.")
        squeeze = x.ndim == 2
        if squeeze:
            x = reshape(x, (1,) + x.shape)
        projected = self.x_proj(x)
        rank, size = self.dt_rank, self.state_size
        delta = softplus(self.dt_proj(narrow(projected, 0, rank)))
        B = narrow(projected, rank, rank + size)
        C = narrow(projected, rank + size, rank + 2 * size)
        y = selective_scan(x, delta, self.A(), B, C, self.D, mode)
        return reshape(y, y.shape[1:]) if squeeze else y


def selective_scan_sequential(x: Tensor, ssm: SelectiveSSM) -> Tensor:
    return ssm(x, mode="sequential")


def selective_scan_parallel(x: Tensor, ssm: SelectiveSSM) -> Tensor:
    return ssm(x, mode="parallel")


class MambaBlock(Module):
    """
    in_proj -> (causal depthwise conv -> SiLU -> selective SSM) * SiLU(gate)
    -> out_proj, plus the residual input.
    """

    def __init__(
        self,
        d_model: int,
        rng: np.random.Generator,
        state_size: int = 16,
        expand: int = 2,
        conv_width: int = 4,
        dt_rank: Optional[int] = None,
        scan_mode: str = "sequential",
        dtype="float64",
    ):
        super().__init__()
        if d_model < 1 or state_size < 1 or expand < 1:
            raise ConfigurationError("Mamba d_model, state size and expansion must be positive.")
        if scan_mode not in SCAN_MODES:
            raise ConfigurationError(f"Unknown scan mode {scan_mode!r}. Allowed values: {SCAN_MODES}.")
        self.d_model = d_model
        self.d_inner = expand * d_model
        self.dt_rank = dt_rank or math.ceil(d_model / 16)
        self.scan_mode = scan_mode
        self.in_proj = Linear(d_model, 2 * self.d_inner, rng, dtype=dtype)
        self.conv = (
            GroupedConv1d(
                self.d_inner, self.d_inner, conv_width, self.d_inner, rng, padding="causal", dtype=dtype
            )
            if conv_width
            else None
        )
        self.ssm = SelectiveSSM(self.d_inner, state_size, self.dt_rank, rng, dtype=dtype)
        self.out_proj = Linear(self.d_inner, d_model, rng, dtype=dtype)

    def forward(self, tokens: Tensor, mode: Optional[str] = None) -> Tensor:
        if tokens.shape[-1] != self.d_model:
            raise ConfigurationError(
                f"Mamba block built for d_model={self.d_model}, got tokens of shape {tokens.shape}."
            )
        squeeze = tokens.ndim == 2
        if squeeze:
            tokens = reshape(tokens, (1,) + tokens.shape)
        projected = self.in_proj(tokens)
        x = narrow(projected, 0, self.d_inner)
        gate = narrow(projected, self.d_inner, 2 * self.d_inner)
        if self.conv is not None:
            x = transpose(self.conv(transpose(x, (0, 2, 1))), (0, 2, 1))
        y = self.ssm(silu(x), mode or self.scan_mode) * silu(gate)
        out = self.out_proj(y) + tokens
        return reshape(out, out.shape[1:]) if squeeze else out


def mamba_block(tokens: Tensor, block: MambaBlock) -> Tensor:
    return block(tokens)


class MambaStack(Module):
    """`depth` Mamba blocks applied in sequence"""

    def __init__(self, d_model: int, depth: int, rng: np.random.Generator, **block_options):
        super().__init__()
        if depth < 1:
            raise ConfigurationError(f"Mamba depth must be >= 1, got {depth}.")
        self.d_model = d_model
        self.blocks = ModuleList(MambaBlock(d_model, rng, **block_options) for _ in range(depth))

    def forward(self, tokens: Tensor, mode: Optional[str] = None) -> Tensor:
        for block in self.blocks:
            tokens = block(tokens, mode)
        return tokens
