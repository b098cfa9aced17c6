#!/usr/bin/env python3
"""
Tests for configuration layering: defaults, JSON file, environment and flags.
"""

import json
import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from scenario_config import WORKERS_ENV, ScenarioConfig, load_config, resolve_config
from sim_errors import ConfigError


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)


def write_json(tmp_path, data) -> str:
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(data))
    return str(path)


class TestScenarioConfig:
    def test_defaults(self):
        config = ScenarioConfig()
        assert config.params.Gamma == pytest.approx(0.5)
        assert config.params.gamma == pytest.approx(2.0)
        assert config.dt == pytest.approx(1e-3)
        assert config.t_max == pytest.approx(3.0)

    def test_derived_quantities_scale_with_tau(self):
        config = ScenarioConfig(tau=2.0, dt_divisor=100)
        assert config.params.Gamma == pytest.approx(0.25)
        assert config.dt == pytest.approx(0.02)
        assert config.t_max == pytest.approx(6.0)

    @pytest.mark.parametrize("kwargs", [dict(tau=0.0), dict(n_paths=0), dict(dt_divisor=2.5), dict(workers=True),
                                        dict(master_seed=-1), dict(t_max_tau=0.0), dict(gamma_tau=-1.0),
                                        dict(phi=float("inf"))])
    def test_invalid_values(self, kwargs):
        with pytest.raises(ConfigError):
            ScenarioConfig(**kwargs)

    def test_header_leaves_out_execution_fields(self):
        a = ScenarioConfig(workers=1, output_path="a.csv", timestamp=True)
        b = ScenarioConfig(workers=4, output_path="b.csv", timestamp=False)
        assert a.header() == b.header()
        header = json.loads(a.header())
        assert header["master_seed"] == 42
        assert "workers" not in header

    def test_coarse_grid_warning(self, caplog):
        ScenarioConfig(dt_divisor=50).warn_if_coarse()
        assert "dt_divisor=50" in caplog.text


class TestLoadConfig:
    def test_reads_known_fields(self, tmp_path):
        assert load_config(write_json(tmp_path, {"n_paths": 10, "phi": 1.0})) == {"n_paths": 10, "phi": 1.0}

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="bogus"):
            load_config(write_json(tmp_path, {"bogus": 1}))

    def test_not_an_object(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_json(tmp_path, [1, 2]))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{n_paths: 3")
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestResolveConfig:
    def test_layering_order(self, tmp_path, monkeypatch):
        path = write_json(tmp_path, {"n_paths": 10, "workers": 2, "phi": 1.0})
        monkeypatch.setenv(WORKERS_ENV, "3")
        config = resolve_config(path, {"phi": 0.5, "n_paths": None})
        assert config.n_paths == 10
        assert config.workers == 3
        assert config.phi == 0.5

    def test_flag_beats_environment(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert resolve_config(None, {"workers": 6}).workers == 6

    def test_bad_environment_value(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "many")
        with pytest.raises(ConfigError):
            resolve_config()

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            resolve_config(None, {"paths": 5})

    def test_wrong_type_in_file(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve_config(write_json(tmp_path, {"n_paths": "many"}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            resolve_config(str(tmp_path / "absent.json"))
