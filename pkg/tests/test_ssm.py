# pylint: disable=missing-function-docstring,missing-module-docstring
import time

import numpy as np
import pytest

from src.errors import ConfigurationError, ContractError, DimensionError
from src.ssm import (
    MambaBlock,
    MambaStack,
    SelectiveSSM,
    associative_scan,
    discretize,
    inverse_softplus,
    mamba_block,
    scan_combine,
    scan_forward,
    selective_scan,
    selective_scan_parallel,
    selective_scan_sequential,
    sequential_scan,
)
from src.tensor import Tensor, backward, reset_tape

from .helpers import check_gradients, weighted_sum


def random_scan_inputs(rng, samples, length, channels, state):
    u = rng.normal(size=(samples, length, channels))
    delta = rng.uniform(0.01, 0.5, size=(samples, length, channels))
    A = -rng.uniform(0.5, 2.0, size=(channels, state))
    B = rng.normal(size=(samples, length, state))
    C = rng.normal(size=(samples, length, state))
    D = rng.normal(size=channels)
    return u, delta, A, B, C, D


def setup_function():
    reset_tape()


def test_discretize_zero_order_hold():
    A = np.array([[-1.0, -2.0]])
    A_bar, B_bar = discretize(A, np.array([0.5, 1.5]), np.array([0.1]))
    np.testing.assert_allclose(A_bar, np.exp([[-0.1, -0.2]]))
    np.testing.assert_allclose(B_bar, [[0.05, 0.15]])


def test_discretize_rejects_non_positive_steps():
    with pytest.raises(ContractError):
        discretize(np.array([[-1.0]]), np.array([1.0]), np.array([0.0]))


def test_scan_combine_is_associative():
    rng = np.random.default_rng(1)
    x, y, z = [(rng.normal(size=3), rng.normal(size=3)) for _ in range(3)]
    left = scan_combine(scan_combine(x, y), z)
    right = scan_combine(x, scan_combine(y, z))
    np.testing.assert_allclose(left, right, atol=1e-14)


def test_associative_scan_matches_loop():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(0, 1, size=(2, 13, 3)), rng.normal(size=(2, 13, 3))
    np.testing.assert_allclose(associative_scan(a, b), sequential_scan(a, b), atol=1e-12)


def test_scan_modes_agree_on_random_configs():
    rng = np.random.default_rng(3)
    started = time.perf_counter()
    for _ in range(100):
        length = int(rng.integers(1, 65))
        inputs = random_scan_inputs(rng, 2, length, int(rng.integers(1, 4)), int(rng.integers(1, 5)))
        sequential, _ = scan_forward(*inputs, mode="sequential")
        parallel, _ = scan_forward(*inputs, mode="parallel")
        assert np.abs(sequential - parallel).max() < 1e-10
    assert time.perf_counter() - started < 5.0


def test_length_one_modes_are_bitwise_equal():
    inputs = random_scan_inputs(np.random.default_rng(4), 3, 1, 2, 3)
    sequential, _ = scan_forward(*inputs, mode="sequential")
    parallel, _ = scan_forward(*inputs, mode="parallel")
    np.testing.assert_array_equal(sequential, parallel)


def test_zero_input_gives_zero_output():
    u, delta, A, B, C, D = random_scan_inputs(np.random.default_rng(5), 1, 6, 2, 3)
    y, state = scan_forward(np.zeros_like(u), delta, A, B, C, D)
    np.testing.assert_array_equal(y, 0.0)
    np.testing.assert_array_equal(state.h, 0.0)


def test_single_channel_worked_example():
    # h1 = 0.5 * 1, h2 = e^-0.5 * 0.5 + 0.5 * 2
    u = np.array([[[1.0], [2.0]]])
    delta = np.full_like(u, 0.5)
    y, _ = scan_forward(u, delta, np.array([[-1.0]]), np.ones((1, 2, 1)), np.ones((1, 2, 1)), np.zeros(1))
    np.testing.assert_allclose(y[0, :, 0], [0.5, np.exp(-0.5) * 0.5 + 1.0])


def test_causality():
    inputs = list(random_scan_inputs(np.random.default_rng(6), 1, 8, 2, 3))
    base, _ = scan_forward(*inputs)
    inputs[0] = inputs[0].copy()
    inputs[0][0, 5] += 3.0
    changed, _ = scan_forward(*inputs)
    np.testing.assert_array_equal(base[0, :5], changed[0, :5])


@pytest.mark.parametrize("mode", ["sequential", "parallel"])
def test_selective_scan_gradients(mode):
    inputs = random_scan_inputs(np.random.default_rng(8), 2, 5, 2, 3)
    check_gradients(lambda *args: weighted_sum(selective_scan(*args, mode=mode)), inputs)


def test_backward_modes_agree():
    inputs = random_scan_inputs(np.random.default_rng(9), 2, 17, 3, 4)
    grads = {}
    for mode in ("sequential", "parallel"):
        reset_tape()
        tensors = [Tensor(x, requires_grad=True) for x in inputs]
        result = backward(weighted_sum(selective_scan(*tensors, mode=mode)))
        grads[mode] = [result[t] for t in tensors]
    for sequential, parallel in zip(grads["sequential"], grads["parallel"]):
        np.testing.assert_allclose(sequential, parallel, atol=1e-10)


def test_selective_scan_shape_checks():
    u, delta, A, B, C, D = (Tensor(x) for x in random_scan_inputs(np.random.default_rng(10), 1, 4, 2, 3))
    with pytest.raises(DimensionError):
        selective_scan(u, delta, A, Tensor(np.zeros((1, 4, 2))), C, D)
    with pytest.raises(ConfigurationError):
        selective_scan(u, delta, A, B, C, D, mode="fft")


def test_inverse_softplus_round_trip():
    values = np.array([1e-3, 0.05, 0.1])
    np.testing.assert_allclose(np.logaddexp(0, inverse_softplus(values)), values)


def test_selective_ssm_initialisation_and_modes():
    ssm = SelectiveSSM(4, 3, 1, np.random.default_rng(0))
    np.testing.assert_allclose(ssm.A().data, -np.tile([1.0, 2.0, 3.0], (4, 1)))
    step = np.logaddexp(0, ssm.dt_proj.bias.data)
    assert np.all((step >= 1e-3 - 1e-12) & (step <= 1e-1 + 1e-12))
    x = Tensor(np.random.default_rng(1).normal(size=(2, 9, 4)))
    np.testing.assert_allclose(
        selective_scan_sequential(x, ssm).data, selective_scan_parallel(x, ssm).data, atol=1e-10
    )


def test_mamba_block_preserves_shape_and_is_causal():
    block = MambaBlock(8, np.random.default_rng(0), state_size=4)
    assert block.dt_rank == 1
    tokens = np.random.default_rng(1).normal(size=(6, 8))
    base = mamba_block(Tensor(tokens), block).data
    assert base.shape == (6, 8)
    tokens[4] += 1.0
    changed = mamba_block(Tensor(tokens), block).data
    np.testing.assert_allclose(base[:4], changed[:4], atol=0)


def test_mamba_block_rejects_wrong_width():
    block = MambaBlock(8, np.random.default_rng(0), state_size=4)
    with pytest.raises(ConfigurationError):
        block(Tensor(np.zeros((3, 5))))


def test_mamba_block_gradients():
    block = MambaBlock(4, np.random.default_rng(0), state_size=2, expand=2)
    tokens = np.random.default_rng(2).normal(size=(2, 5, 4))
    check_gradients(lambda t: weighted_sum(block(t)), [tokens])

    reset_tape()
    backward(weighted_sum(block(Tensor(tokens))))
    assert all(param.grad is not None for param in block.parameters())


def test_mamba_stack_depth():
    stack = MambaStack(4, 2, np.random.default_rng(0), state_size=2)
    assert len(stack.blocks) == 2
    assert stack(Tensor(np.ones((3, 4)))).shape == (3, 4)
    with pytest.raises(ConfigurationError):
        MambaStack(4, 0, np.random.default_rng(0))


def test_discretized_decay_stays_inside_the_unit_interval():
    rng = np.random.default_rng(12)
    A = -np.exp(rng.uniform(-3.0, 3.0, size=(5, 4)))
    delta = np.logaddexp(0, rng.normal(-3.0, 2.0, size=(7, 5)))
    A_bar, _ = discretize(A, rng.normal(size=(7, 4)), delta)
    assert np.all(A_bar > 0.0) and np.all(A_bar < 1.0)


def test_hidden_state_respects_the_geometric_bound():
    rng = np.random.default_rng(13)
    length, channels, state = 40, 3, 4
    u = np.broadcast_to(rng.normal(size=channels), (1, length, channels)).copy()
    delta = np.broadcast_to(rng.uniform(0.05, 0.5, size=channels), (1, length, channels)).copy()
    A = -rng.uniform(0.5, 2.0, size=(channels, state))
    B = np.broadcast_to(rng.normal(size=state), (1, length, state)).copy()
    C = rng.normal(size=(1, length, state))
    _, scanned = scan_forward(u, delta, A, B, C, np.zeros(channels))
    A_bar, B_bar = discretize(A, B[0, 0], delta[0, 0])
    bound = np.abs(B_bar * u[0, 0][:, None]).max() / (1.0 - A_bar.max())
    assert np.abs(scanned.h).max() <= bound + 1e-12
