import json

import pytest

from synthtx.config import (
    FULL_REPLICATES,
    FULL_SIZES,
    THREADS_VARIABLE,
    KernelSettings,
    RunConfig,
    SieveSettings,
    SimulationSettings,
    worker_count,
)
from synthtx.errors import ConfigError
from synthtx.estimator import Method


def test_defaults():
    config = RunConfig()

    assert config.method_enum is Method.SIEVE
    assert config.alpha == 0.05
    assert config.kernel.lam == 0.01
    assert (config.sieve.weight_order, config.sieve.weight_knots) == (3, 0)
    assert (config.sieve.regression_order, config.sieve.regression_knots) == (3, 2)
    assert config.simulation.sizes == (500,)


def test_from_dict_nested():
    config = RunConfig.from_dict(
        {
            "method": "pool",
            "kernel": {"bandwidth_x": 0.5, "bandwidth_y": 2.0, "bandwidth_rule": "fixed"},
            "simulation": {"sizes": [100, 200], "methods": ["sieve"]},
        }
    )

    assert config.method_enum is Method.POOL
    assert config.kernel.bandwidth_x == 0.5
    assert config.simulation.sizes == (100, 200)
    assert config.simulation.methods == ("sieve",)


@pytest.mark.parametrize(
    "data",
    [
        {"unknown": 1},
        {"kernel": {"bandwidth": 1.0}},
        {"sieve": {"knots": 3}},
        {"simulation": "fast"},
        {"method": "magic"},
        {"alpha": 1.5},
        {"kernel": {"bandwidth_rule": "fixed"}},
        {"kernel": {"lam": 0.0}},
        {"sieve": {"weight_order": 0}},
        {"simulation": {"replicates": 0}},
        {"simulation": {"methods": ["best"]}},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_from_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 42, "sieve": {"pointwise_simplex": True}}))
    config = RunConfig.from_json(path)

    assert config.seed == 42
    assert config.sieve.pointwise_simplex


def test_from_json_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        RunConfig.from_json(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.from_json(broken)

    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.from_json(listed)


def test_dict_round_trip():
    config = RunConfig(
        method="uniform",
        seed=3,
        asinh_columns=("y",),
        kernel=KernelSettings(lam=0.1),
        sieve=SieveSettings(weight_knots=1, ridge=1e-6),
        simulation=SimulationSettings(replicates=4, sizes=(100,), exchangeable=True),
    )

    assert RunConfig.from_dict(json.loads(config.as_json())) == config


def test_from_report(tmp_path):
    config = RunConfig(seed=11, method="pool")
    path = tmp_path / "report.txt"
    path.write_text(f"method=pool\ntheta_hat=1\nconfig={config.as_json()}\n")

    assert RunConfig.from_report(path) == config

    empty = tmp_path / "empty.txt"
    empty.write_text("method=pool\n")
    with pytest.raises(ConfigError):
        RunConfig.from_report(empty)


def test_overrides():
    config = RunConfig().with_overrides(method="uniform", alpha=None, seed=9)

    assert config.method == "uniform"
    assert config.alpha == 0.05
    assert config.seed == 9


def test_full_scale_override():
    base = RunConfig(simulation=SimulationSettings(methods=("sieve",), workers=2))
    config = base.with_overrides(full_scale=True)

    assert config.simulation.sizes == FULL_SIZES
    assert config.simulation.replicates == FULL_REPLICATES
    assert config.simulation.n_source_treated == 4000
    assert config.simulation.methods == ("sieve",)
    assert config.simulation.workers == 2


def test_worker_count_honors_environment(monkeypatch):
    settings = SimulationSettings(workers=8)

    monkeypatch.delenv(THREADS_VARIABLE, raising=False)
    assert worker_count(settings) == 8

    monkeypatch.setenv(THREADS_VARIABLE, "3")
    assert worker_count(settings) == 3

    monkeypatch.setenv(THREADS_VARIABLE, "many")
    with pytest.raises(ConfigError):
        worker_count(settings)
