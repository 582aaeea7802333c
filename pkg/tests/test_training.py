# pylint: disable=missing-function-docstring,missing-module-docstring
import json
import math

import numpy as np
import pytest

from src.dataset_io import Split, split
from src.errors import DataError, NumericalError
from src.model import GDSMamba
from src.nn import Parameter
from src.schemas import RunConfig, TrainConfig
from src.synth import generate_synthetic
from src.tensor import Tensor, backward, reset_tape
from src.training import (
    AdamOptimizer,
    AdamState,
    adam_step,
    class_weights,
    evaluate,
    fit_dataset,
    model_config_for,
    predict,
    train,
    weighted_cross_entropy,
)

from .helpers import check_gradients, tiny_config


def setup_function():
    reset_tape()


def tiny_dataset(samples=40, seed=0):
    return generate_synthetic(3, samples, 0.2, seed=seed, size=3, steps=4)


def tiny_model():
    # synthetic cubes carry six bands
    return GDSMamba(tiny_config(C0=6))


def test_cross_entropy_of_uniform_logits_is_ln2():
    loss = weighted_cross_entropy(Tensor(np.zeros((3, 2))), [0, 1, 1])
    assert loss.item() == pytest.approx(math.log(2), abs=1e-15)


def test_cross_entropy_gradients_with_weights():
    logits = np.random.default_rng(0).normal(size=(4, 3))
    weights = np.array([0.5, 2.0, 1.0])
    check_gradients(lambda x: weighted_cross_entropy(x, [0, 2, 1, 1], weights), [logits])


def test_cross_entropy_rejects_bad_targets():
    with pytest.raises(DataError):
        weighted_cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(DataError):
        weighted_cross_entropy(Tensor(np.zeros((2, 3))), [0])


def test_uniform_weights_match_unweighted_loss():
    logits = Tensor(np.random.default_rng(1).normal(size=(5, 3)))
    targets = [0, 1, 2, 2, 1]
    assert (
        weighted_cross_entropy(logits, targets, np.ones(3)).item()
        == weighted_cross_entropy(logits, targets).item()
    )


def test_inverse_class_weights():
    weights = class_weights([0, 0, 0, 1], 3)
    np.testing.assert_allclose(weights[:2], [0.5, 1.5])
    assert weights[2] == 1.0
    np.testing.assert_array_equal(class_weights([0, 1], 3, "uniform"), np.ones(3))


def test_adam_first_step_trace():
    state = AdamState(np.zeros(2), np.zeros(2))
    updated = adam_step(np.array([1.0, -1.0]), np.array([0.5, -2.0]), state, lr=0.1, eps=0.0)
    np.testing.assert_allclose(updated, [0.9, -0.9])
    assert state.t == 1
    np.testing.assert_allclose(state.m, [0.05, -0.2])
    np.testing.assert_allclose(state.v, [0.00025, 0.004])


def test_adam_two_step_trace():
    state = AdamState(np.zeros(1), np.zeros(1))
    first = adam_step(np.array([1.0]), np.array([0.5]), state, lr=0.1, eps=0.0)
    second = adam_step(first, np.array([0.25]), state, lr=0.1, eps=0.0)
    # m2 = 0.9 * 0.05 + 0.1 * 0.25, v2 = 0.999 * 0.00025 + 0.001 * 0.0625
    m_hat = 0.07 / (1 - 0.9**2)
    v_hat = 0.00031225 / (1 - 0.999**2)
    np.testing.assert_allclose(first, [0.9])
    np.testing.assert_allclose(second, [0.9 - 0.1 * m_hat / math.sqrt(v_hat)], rtol=1e-12)
    assert state.t == 2
    np.testing.assert_allclose(state.m, [0.07])
    np.testing.assert_allclose(state.v, [0.00031225])


def test_decoupled_and_coupled_weight_decay():
    param, grad = np.array([2.0]), np.array([0.0])
    decoupled = adam_step(param, grad, AdamState(np.zeros(1), np.zeros(1)), lr=0.1, weight_decay=0.5)
    np.testing.assert_allclose(decoupled, [2.0 - 0.1 * 0.5 * 2.0])
    coupled = adam_step(param, grad, AdamState(np.zeros(1), np.zeros(1)), lr=0.1, weight_decay=0.5, coupled=True)
    np.testing.assert_allclose(coupled, [2.0 - 0.1], rtol=1e-6)


def test_optimizer_skips_parameters_without_gradient():
    used, unused = Parameter([1.0, 2.0]), Parameter([3.0])
    optimizer = AdamOptimizer([("used", used), ("unused", unused)], lr=0.1, weight_decay=0.0)
    backward((used * used).sum())
    optimizer.step()
    np.testing.assert_allclose(used.data, [0.9, 1.9])
    np.testing.assert_array_equal(unused.data, [3.0])
    optimizer.zero_grad()
    assert used.grad is None


def test_training_records_history_and_restores_best(tmp_path):
    dataset = tiny_dataset()
    indices = split(dataset.labels, 24, 8, seed=0)
    model = tiny_model()
    config = TrainConfig(max_epochs=4, patience=2, batch_size=8)
    history_path = tmp_path / "history.jsonl"
    result = train(model, dataset.cubes, dataset.labels, indices, config, history_path)

    lines = [json.loads(line) for line in history_path.read_text().splitlines()]
    assert [line["epoch"] for line in lines] == list(range(1, len(result.history) + 1))
    val_oa = [record.val_oa for record in result.history]
    assert result.best_epoch == int(np.argmax(val_oa)) + 1
    assert result.best_val_oa == max(val_oa)
    report = evaluate(model, dataset.cubes, dataset.labels, indices.val, 8)
    assert report.oa == pytest.approx(result.best_val_oa)


def test_early_stopping_respects_patience():
    dataset = tiny_dataset()
    indices = split(dataset.labels, 24, 8, seed=0)
    config = TrainConfig(max_epochs=6, patience=1, batch_size=8)
    result = train(tiny_model(), dataset.cubes, dataset.labels, indices, config)
    flags = [record.best for record in result.history]
    assert flags[0]
    if len(flags) < config.max_epochs:
        assert len(flags) == result.best_epoch + config.patience
        assert not any(flags[result.best_epoch:])
    assert flags[result.best_epoch - 1]


def test_zero_learning_rate_keeps_parameters():
    dataset = tiny_dataset()
    indices = split(dataset.labels, 24, 8, seed=0)
    model = tiny_model()
    before = {name: np.array(param.data) for name, param in model.named_parameters()}
    train(model, dataset.cubes, dataset.labels, indices, TrainConfig(lr=0.0, max_epochs=2, batch_size=8))
    for name, param in model.named_parameters():
        np.testing.assert_array_equal(param.data, before[name], err_msg=name)


def test_zero_learning_rate_gives_a_constant_validation_trajectory():
    dataset = tiny_dataset()
    indices = split(dataset.labels, 24, 8, seed=0)
    config = TrainConfig(lr=0.0, max_epochs=3, patience=5, batch_size=8)
    result = train(tiny_model(), dataset.cubes, dataset.labels, indices, config)
    val_oa = [record.val_oa for record in result.history]
    assert len(val_oa) == 3
    assert val_oa == [val_oa[0]] * 3
    assert result.best_epoch == 1
    assert [record.best for record in result.history] == [True, False, False]


def test_patience_beyond_the_epoch_budget_runs_every_epoch():
    dataset = tiny_dataset()
    indices = split(dataset.labels, 24, 8, seed=0)
    config = TrainConfig(max_epochs=3, patience=10, batch_size=8)
    result = train(tiny_model(), dataset.cubes, dataset.labels, indices, config)
    assert [record.epoch for record in result.history] == [1, 2, 3]


def test_uniform_weighting_matches_balanced_inverse_weighting(tmp_path):
    dataset = tiny_dataset()
    by_class = [np.flatnonzero(dataset.labels == k) for k in range(3)]
    indices = Split(
        train=np.concatenate([members[:8] for members in by_class]),
        val=np.concatenate([members[8:12] for members in by_class]),
        test=np.zeros(0, dtype=np.int64),
    )
    np.testing.assert_array_equal(class_weights(dataset.labels[indices.train], 3), np.ones(3))
    states = []
    for mode in ("inverse", "uniform"):
        model = tiny_model()
        config = TrainConfig(max_epochs=2, batch_size=8, class_weights=mode)
        train(model, dataset.cubes, dataset.labels, indices, config, tmp_path / f"{mode}.jsonl")
        states.append(model.state_dict())
    assert (tmp_path / "inverse.jsonl").read_bytes() == (tmp_path / "uniform.jsonl").read_bytes()
    for name in states[0]:
        np.testing.assert_array_equal(states[0][name], states[1][name], err_msg=name)


def test_seeded_runs_are_bitwise_identical(tmp_path):
    dataset = tiny_dataset()
    indices = split(dataset.labels, 24, 8, seed=0)
    config = TrainConfig(max_epochs=2, batch_size=8)
    paths = [tmp_path / "first.jsonl", tmp_path / "second.jsonl"]
    states = []
    for path in paths:
        model = tiny_model()
        train(model, dataset.cubes, dataset.labels, indices, config, path)
        states.append(model.state_dict())
    assert paths[0].read_bytes() == paths[1].read_bytes()
    for name in states[0]:
        np.testing.assert_array_equal(states[0][name], states[1][name])


def test_divergent_training_reports_the_epoch():
    dataset = tiny_dataset()
    indices = split(dataset.labels, 24, 8, seed=0)
    with pytest.raises(NumericalError) as raised:
        train(tiny_model(), dataset.cubes, dataset.labels, indices, TrainConfig(lr=1e30, max_epochs=5, batch_size=8))
    assert raised.value.epoch is not None


def test_empty_split_is_rejected():
    dataset = tiny_dataset()
    with pytest.raises(DataError):
        evaluate(tiny_model(), dataset.cubes, dataset.labels, np.array([], dtype=int))


def test_prediction_is_independent_of_threads():
    dataset = tiny_dataset()
    model = tiny_model()
    model.fit_standardizer(dataset.cubes)
    single = predict(model, dataset.cubes, batch_size=7, threads=1)
    threaded = predict(model, dataset.cubes, batch_size=7, threads=4)
    np.testing.assert_array_equal(single, threaded)


def test_fit_dataset_takes_dimensions_from_the_manifest():
    dataset = tiny_dataset()
    run_config = RunConfig(
        model=tiny_config(),
        train=TrainConfig(max_epochs=1, batch_size=8),
        data={"train_n": 24, "val_n": 8},
    )
    assert model_config_for(run_config.model, dataset.manifest).C0 == 6
    model, result, indices = fit_dataset(run_config, dataset, "wo-graph")
    assert not model.config.use_graph
    assert len(result.history) == 1
    assert len(indices.train) == 24 and len(indices.val) == 8 and len(indices.test) == 8
