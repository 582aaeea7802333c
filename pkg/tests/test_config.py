# pylint: disable=missing-function-docstring,missing-module-docstring
import pytest

from src.config import dump_run_config, load_run_config, merge_entries, parse_override
from src.errors import ConfigurationError, DatasetIOError
from src.schemas import RunConfig


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# benchmark run\nseed = 3\nthreads = 2\nmodel.C = 12\ntrain.lr = 0.01\ndata.dataset = ./bench\n")
    return path


def test_defaults_without_file():
    assert load_run_config() == RunConfig()


def test_file_values_are_typed(config_file):
    config = load_run_config(config_file)
    assert config.model.C == 12
    assert config.train.lr == 0.01
    assert config.threads == 2
    assert config.data.dataset_paths() == ["./bench"]


def test_top_level_seed_feeds_every_section(config_file):
    config = load_run_config(config_file, ["train.seed=9"])
    assert config.seed == 3
    assert config.model.seed == 3 and config.data.seed == 3
    assert config.train.seed == 9


def test_overrides_apply_in_order(config_file):
    config = load_run_config(config_file, ["model.C=20", "model.C=24", "model.k_F=none"])
    assert config.model.C == 24
    assert config.model.k_F is None


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigurationError, match="Unknown config key"):
        load_run_config(overrides=["model.colour=red"])
    with pytest.raises(ConfigurationError, match="Unknown config key"):
        load_run_config(overrides=["optimizer.lr=1"])


def test_invalid_values_become_configuration_errors():
    with pytest.raises(ConfigurationError, match="Invalid configuration"):
        load_run_config(overrides=["model.H=12"])
    with pytest.raises(ConfigurationError):
        load_run_config(overrides=["train.batch_size=1"])


def test_malformed_override():
    with pytest.raises(ConfigurationError):
        parse_override("model.C")
    assert parse_override("data.dataset = a=b") == ("data.dataset", "a=b")


def test_top_level_key_needs_a_value():
    with pytest.raises(ConfigurationError):
        merge_entries({"threads": ""})


def test_missing_config_file(tmp_path):
    with pytest.raises(DatasetIOError):
        load_run_config(tmp_path / "absent.env")


def test_dump_reads_back_equal(config_file, tmp_path):
    config = load_run_config(config_file, ["model.sigma=0.5", "model.sparse=false"])
    dumped = tmp_path / "dumped.env"
    dumped.write_text(dump_run_config(config))
    assert load_run_config(dumped) == config
