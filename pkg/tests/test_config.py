import json

import pytest
from pydantic import ValidationError

from quasi2d.config import Config, RegimesParams, RunConfig, load_run_config
from quasi2d.errors import InputError


def write(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(path)


def test_env_defaults():
    env = Config.from_env()
    assert env.jobs == 1
    assert env.seed == 0
    assert env.ledger


def test_env_overrides(monkeypatch):
    monkeypatch.setenv("QUASI2D_SEED", "11")
    monkeypatch.setenv("QUASI2D_LEDGER", "false")
    monkeypatch.setenv("QUASI2D_LOG_LEVEL", "debug")
    env = Config.from_env()
    assert env.seed == 11
    assert not env.ledger
    assert env.log_level == "DEBUG"


def test_bad_env_number(monkeypatch):
    monkeypatch.setenv("QUASI2D_JOBS", "many")
    with pytest.raises(ValueError):
        Config.from_env()


def test_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("QUASI2D_SEED", "3")
    monkeypatch.setenv("QUASI2D_OUTPUT_DIR", "env_out")
    env = Config.from_env()
    assert load_run_config("scatter", env).seed == 3

    path = write(tmp_path, {"command": "scatter", "seed": 5, "output_dir": "file_out"})
    cfg = load_run_config("scatter", env, path)
    assert (cfg.seed, cfg.output_dir) == (5, "file_out")

    cfg = load_run_config("scatter", env, path, output_dir="cli_out", seed=9)
    assert (cfg.seed, cfg.output_dir) == (9, "cli_out")


def test_parameters_are_validated(tmp_path):
    env = Config.from_env()
    path = write(tmp_path, {"parameters": {"V0": 3.0, "dr": 1e-3}})
    cfg = load_run_config("scatter", env, path)
    assert cfg.params().V0 == 3.0
    assert cfg.resolved()["parameters"]["mu_list"] == [1e-1, 1e-2, 1e-3, 1e-4]

    with pytest.raises(ValidationError):
        load_run_config("scatter", env, write(tmp_path, {"parameters": {"V0": 1, "bogus": 1}}))
    with pytest.raises(ValidationError):
        load_run_config("scatter", env, write(tmp_path, {"parameters": {"R": -1.0}}))


def test_unknown_top_level_key(tmp_path):
    with pytest.raises(InputError):
        load_run_config("scatter", Config.from_env(), write(tmp_path, {"command": "scatter",
                                                                       "extra": 1}))


@pytest.mark.parametrize("doc", ["", "  \n", "{}", "[1, 2]"])
def test_empty_documents(tmp_path, doc):
    with pytest.raises(InputError):
        load_run_config("scatter", Config.from_env(), write(tmp_path, doc))


def test_malformed_json(tmp_path):
    with pytest.raises(json.JSONDecodeError):
        load_run_config("scatter", Config.from_env(), write(tmp_path, "{not json"))


def test_command_mismatch(tmp_path):
    with pytest.raises(InputError):
        load_run_config("regimes", Config.from_env(), write(tmp_path, {"command": "scatter"}))


def test_regimes_params_validation():
    with pytest.raises(ValidationError):
        RegimesParams(Theta=8.0)
    with pytest.raises(ValidationError):
        RegimesParams(N_min=100.0, N_max=10.0)
    assert RegimesParams(Theta=8.0, Gamma=3.0, beta=1 / 3).Gamma == 3.0


def test_run_config_rejects_unknown_command():
    with pytest.raises(ValidationError):
        RunConfig(command="plot")
