# pylint: disable=missing-function-docstring,missing-module-docstring
import time

import numpy as np
import pytest

from src.ablation import ablate
from src.dataset_io import Split, split
from src.model import GDSMamba
from src.schemas import VARIANTS, ModelConfig, RunConfig, TrainConfig
from src.synth import generate_synthetic
from src.training import evaluate, fit_dataset, model_config_for, train

from .helpers import tiny_config

pytestmark = pytest.mark.slow


def test_overfit_tiny_set():
    dataset = generate_synthetic(4, 200, 0.5, seed=0, size=3, steps=8)
    everything = np.arange(len(dataset))
    indices = Split(train=everything, val=everything, test=np.zeros(0, dtype=np.int64))
    model = GDSMamba(model_config_for(tiny_config(), dataset.manifest))
    started = time.perf_counter()
    result = train(
        model, dataset.cubes, dataset.labels, indices,
        TrainConfig(lr=5e-3, weight_decay=0.0, max_epochs=300, patience=300, batch_size=32),
    )
    assert result.best_val_oa == 100.0
    assert evaluate(model, dataset.cubes, dataset.labels, everything).oa == 100.0
    assert time.perf_counter() - started < 300


def test_synthetic_benchmark_and_temporal_ablation():
    dataset = generate_synthetic(4, 4500, 0.8, seed=0)
    run_config = RunConfig(
        model=ModelConfig(K=4),
        train=TrainConfig(max_epochs=100, patience=20),
        data={"train_n": 2000, "val_n": 500},
    )
    full, _, indices = fit_dataset(run_config, dataset, "full")
    full_oa = evaluate(full, dataset.cubes, dataset.labels, indices.test[:2000]).oa
    assert full_oa >= 90.0
    without_temporal, _, _ = fit_dataset(run_config, dataset, "wo-temporal")
    assert full_oa >= evaluate(without_temporal, dataset.cubes, dataset.labels, indices.test[:2000]).oa


def test_every_variant_runs_on_the_tiny_config():
    dataset = generate_synthetic(4, 120, 0.5, seed=1, size=5, steps=8)
    run_config = RunConfig(
        model=tiny_config(), train=TrainConfig(max_epochs=5, batch_size=16), data={"train_n": 60, "val_n": 30}
    )
    started = time.perf_counter()
    rows = ablate(run_config, list(VARIANTS), {"bench": dataset})
    assert [row.variant for row in rows] == list(VARIANTS)
    assert time.perf_counter() - started < 600


def test_split_recipe_of_the_benchmark():
    labels = generate_synthetic(4, 4500, 0.8, seed=0, size=3, steps=4).labels
    indices = split(labels, 2000, 500, seed=0)
    assert (len(indices.train), len(indices.val), len(indices.test)) == (2000, 500, 2000)
