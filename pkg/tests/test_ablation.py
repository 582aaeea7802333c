# pylint: disable=missing-function-docstring,missing-module-docstring
import numpy as np
import pytest

from src.ablation import AblationRow, ablate, format_ablation_table
from src.data_persistence import repo
from src.data_persistence.database import make_session_factory
from src.db_setup import setup_db
from src.errors import ConfigurationError
from src.schemas import MetricsReport, RunConfig, TrainConfig
from src.synth import generate_synthetic

from .helpers import tiny_config


def tiny_run_config():
    return RunConfig(model=tiny_config(), train=TrainConfig(max_epochs=1, batch_size=8), data={"train_n": 18, "val_n": 6})


def report(oa, kappa):
    return MetricsReport(
        confusion=[[1]], per_class=[oa], oa=oa, aa=oa, kappa=kappa, class_names=["a"], excluded=[]
    )


def test_ablation_records_every_variant(tmp_path):
    dataset = generate_synthetic(3, 30, 0.2, seed=0, size=3, steps=4)
    session = make_session_factory(setup_db(f"sqlite:///{tmp_path / 'runs.db'}"))()
    rows = ablate(tiny_run_config(), ["full", "w/o Graph", "wo_spatial"], {"bench": dataset}, session)
    assert [row.variant for row in rows] == ["full", "wo-graph", "wo-spatial"]
    assert rows[0].params == rows[1].params > rows[2].params
    stored = repo.get_all_runs(session)
    assert [run.variant for run in stored] == ["full", "wo-graph", "wo-spatial"]
    assert all(0.0 <= run.oa <= 100.0 for run in stored)
    session.close()


def test_unknown_variant_fails_before_training():
    with pytest.raises(ConfigurationError):
        ablate(tiny_run_config(), ["full", "w/o colour"], {"bench": None})


def test_table_layout():
    rows = [
        AblationRow("full", "ds", report(91.234, 88.5), 10, 3, 2),
        AblationRow("wo-graph", "ds", report(85.0, 80.0), 10, 3, 1),
    ]
    lines = format_ablation_table(rows).splitlines()
    assert lines[0] == "Variant   ds OA(%)  ds Kappa(%)"
    assert lines[1] == "full         91.23        88.50"
    assert lines[2] == "wo-graph     85.00        80.00"
    assert len({len(line) for line in lines}) == 1


def test_table_marks_missing_cells():
    rows = [
        AblationRow("full", "a", report(90.0, 80.0), 1, 1, 1),
        AblationRow("full", "b", report(70.0, 60.0), 1, 1, 1),
        AblationRow("wo-graph", "a", report(50.0, 40.0), 1, 1, 1),
    ]
    text = format_ablation_table(rows)
    assert text.splitlines()[2].rstrip().endswith("-")
    assert np.isclose(float(text.splitlines()[1].split()[3]), 70.0)
