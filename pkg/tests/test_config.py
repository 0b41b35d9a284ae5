import os
from dataclasses import replace

import pytest

from phi4sqe.config import default_config, default_grid, emit_config, parse_config, thread_count
from phi4sqe.errors import ConfigError
from phi4sqe.estimators import ExponentSet


def test_defaults_only_document():
    assert parse_config("") == default_config()
    assert parse_config("[model]\n[run]\n") == default_config()


def test_default_grid_follows_cutoff():
    config = parse_config("[model]\nN = 1\n")
    assert (config.params.grid.K, config.params.grid.M) == (8, 33)
    assert config.params.grid.cubic_safe


def test_values_parsed():
    config = parse_config("""
[model]
N = 2
lambda = 0.25
m0 = 1.5
T = 0.5
dt = 0.005
seed = 42

[run]
ensemble = 8
snapshot_every = 5
burn_in_T = 3.0
output_dir = results/n2
""")
    assert config.params.N == 2 and config.params.lam == 0.25 and config.params.m0 == 1.5
    assert config.params.steps == 100
    assert config.ensemble == 8 and config.snapshot_every == 5 and config.burn_in_T == 3.0
    assert config.output_dir == "results/n2"


def test_exponent_constraint_reported():
    with pytest.raises(ConfigError, match="2ε < γ"):
        parse_config("[exponents]\neps = 0.02\ngamma = 0.03\n")


def test_round_trip():
    config = parse_config("[model]\nN = 1\nlambda = 0.3\ndt = 0.02\n[exponents]\nalpha = 0.3\n[tightness]\nruns = a, b\n")
    config = replace(config, burn_in_T=2.5, mode="tightness-report")
    assert parse_config(emit_config(config)) == config
    assert parse_config(emit_config(default_config())) == default_config()
    assert config.runs == ("a", "b")
    assert config.exponents == ExponentSet(alpha=0.3)


@pytest.mark.parametrize("text, fragment", [
    ("[simulation]\nN = 1\n", "unknown section"),
    ("[model]\nN = one\n", "invalid value for 'N'"),
    ("[model]\nlambda = 2\nlambda0 = 1\n", "λ0"),
    ("[model]\ngrid_K = 4\ngrid_M = 6\n", "aliasing"),
    ("[run]\nensemble = 0\n", "ensemble"),
    ("[run]\nmode = train\n", "mode"),
    ("N = 1\n", "malformed"),
])
def test_invalid_documents(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_default_grid_rejects_aliasing():
    with pytest.raises(ConfigError):
        default_grid(0, K=4, M=5)


def test_thread_count(monkeypatch):
    monkeypatch.delenv("PHI4_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("PHI4_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("PHI4_THREADS", "many")
    with pytest.raises(ConfigError):
        thread_count()


def test_readme_example_parses():
    with open(os.path.join(os.path.dirname(__file__), "..", "README.md"), "r", encoding="utf-8") as f:
        readme = f.read()
    block = readme.split("```ini\n", 1)[1].split("```", 1)[0]
    config = parse_config(block)
    assert config.params.N == 1 and config.params.lam == 0.1
    assert (config.params.grid.K, config.params.grid.M) == (8, 33)
    assert config.ensemble == 32 and config.burn_in_T is None
    assert config.output_dir == "out/n1"
    assert config.runs == ("out/n0", "out/n1", "out/n2")


def test_inline_comments_stripped():
    config = parse_config("[model]\nN = 2 ; cutoff\nlambda = 0.2  ; coupling\n")
    assert config.params.N == 2 and config.params.lam == 0.2
