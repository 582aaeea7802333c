# pylint: disable=missing-function-docstring,missing-module-docstring
import numpy as np
import pytest
from pydantic import ValidationError

from src.complexity import count_complexity, count_linear
from src.model import GDSMamba
from src.nn import Linear
from src.schemas import VARIANTS, ComplexityRow, ModelConfig

from .helpers import tiny_config


def test_linear_closed_form():
    assert count_linear(10, 4) == (44, 40)
    assert count_linear(10, 4, n_tokens=7) == (44, 280)
    assert count_linear(10, 4, bias=False) == (40, 40)


def test_linear_counts_match_the_layer():
    layer = Linear(10, 4, np.random.default_rng(0))
    assert layer.num_parameters() == count_linear(10, 4)[0]


def test_default_config_is_near_target():
    report = count_complexity(ModelConfig())
    assert 1.0e6 <= report.total.params <= 1.6e6


def test_flops_are_twice_macs_and_rows_sum_to_total():
    report = count_complexity(ModelConfig())
    for row in report.rows + [report.total]:
        assert row.flops == 2 * row.macs
    assert sum(row.params for row in report.rows) == report.total.params
    assert sum(row.macs for row in report.rows) == report.total.macs


@pytest.mark.parametrize("variant", list(VARIANTS))
def test_parameter_counts_match_built_models(variant):
    config = tiny_config().with_variant(variant)
    assert count_complexity(config).total.params == GDSMamba(config).num_parameters()


def test_sparsity_reduces_macs_not_params():
    config = tiny_config()
    sparse, dense = count_complexity(config), count_complexity(config.with_variant("wo-sparsity"))
    assert sparse.total.params == dense.total.params
    assert sparse.total.macs < dense.total.macs


def test_row_rejects_inconsistent_flops():
    with pytest.raises(ValidationError):
        ComplexityRow(module="head", params=1, macs=2, flops=3)
