"""Run configuration: an INI document with [model], [exponents], [run] and [tightness] sections.

Every key is optional. `grid_K = 0` selects K = 2^(N+2) and `grid_M = 0` selects the
alias-free M = 4K+1; `burn_in_T = auto` selects 10/m0^2.
"""

import configparser
import os
from dataclasses import dataclass, field, fields

from phi4sqe.errors import ConfigError, GridError
from phi4sqe.estimators import MIN_ENSEMBLE, RED_FLAG_FACTOR, ExponentSet
from phi4sqe.renorm import PCN_BETA, PCN_STEPS, ModelParams
from phi4sqe.torus import make_grid


MODES = ["simulate", "renorm-table", "tightness-report", "selfcheck"]
THREADS_ENV = "PHI4_THREADS"

# Model defaults
DEFAULT_N = 0
DEFAULT_M0 = 1.0
DEFAULT_LAMBDA = 0.1
DEFAULT_LAMBDA0 = 1.0
DEFAULT_T = 1.0
DEFAULT_DT = 0.01
DEFAULT_SEED = 0


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    exponents: ExponentSet = field(default_factory=ExponentSet)
    ensemble: int = 1
    snapshot_every: int = 10
    burn_in_T: float = None  # None selects 10/m0^2
    pcn_steps: int = PCN_STEPS
    pcn_beta: float = PCN_BETA
    output_dir: str = "out"
    mode: str = "simulate"
    # tightness-report inputs
    runs: tuple = ()
    red_flag_factor: float = RED_FLAG_FACTOR
    min_ensemble: int = MIN_ENSEMBLE

    def __post_init__(self):
        if self.ensemble < 1:
            raise ConfigError(f"ensemble must be >= 1, got {self.ensemble}")
        if self.snapshot_every < 1:
            raise ConfigError(f"snapshot_every must be >= 1, got {self.snapshot_every}")
        if self.burn_in_T is not None and self.burn_in_T < 0:
            raise ConfigError(f"burn_in_T must be >= 0, got {self.burn_in_T}")
        if self.pcn_steps < 0:
            raise ConfigError(f"pcn_steps must be >= 0, got {self.pcn_steps}")
        if not 0 < self.pcn_beta < 1:
            raise ConfigError(f"pcn_beta must lie in (0, 1), got {self.pcn_beta}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.red_flag_factor <= 1:
            raise ConfigError(f"red_flag_factor must exceed 1, got {self.red_flag_factor}")


def default_grid(N, K=0, M=0):
    K = K or 2 ** (N + 2)
    M = M or 4 * K + 1
    try:
        return make_grid(K, M)
    except GridError as e:
        raise ConfigError(str(e)) from e


def default_config(**overrides):
    params = ModelParams(N=DEFAULT_N, m0=DEFAULT_M0, lam=DEFAULT_LAMBDA, lam0=DEFAULT_LAMBDA0, T=DEFAULT_T,
                         dt=DEFAULT_DT, seed=DEFAULT_SEED, grid=default_grid(DEFAULT_N))
    return RunConfig(params=params, **overrides)


def _get(section, key, convert, default):
    if key not in section:
        return default
    raw = section[key].strip()
    try:
        return convert(raw)
    except ValueError as e:
        raise ConfigError(f"invalid value for '{key}': '{raw}'") from e


def _optional_float(raw):
    return None if raw.lower() == "auto" else float(raw)


def _path_list(raw):
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def config_parser():
    return configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))


def parse_config(text):
    parser = config_parser()
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    known = {"model", "exponents", "run", "tightness"}
    for name in parser.sections():
        if name not in known:
            raise ConfigError(f"unknown section [{name}]")

    model = parser["model"] if parser.has_section("model") else {}
    N = _get(model, "N", int, DEFAULT_N)
    if N < 0:
        raise ConfigError(f"N must be >= 0, got {N}")
    grid = default_grid(N, _get(model, "grid_K", int, 0), _get(model, "grid_M", int, 0))
    params = ModelParams(
        N=N,
        m0=_get(model, "m0", float, DEFAULT_M0),
        lam=_get(model, "lambda", float, DEFAULT_LAMBDA),
        lam0=_get(model, "lambda0", float, DEFAULT_LAMBDA0),
        T=_get(model, "T", float, DEFAULT_T),
        dt=_get(model, "dt", float, DEFAULT_DT),
        seed=_get(model, "seed", int, DEFAULT_SEED),
        grid=grid,
    )

    section = parser["exponents"] if parser.has_section("exponents") else {}
    defaults = ExponentSet()
    exponents = ExponentSet(**{f.name: _get(section, f.name, float, getattr(defaults, f.name))
                               for f in fields(ExponentSet)})

    run = parser["run"] if parser.has_section("run") else {}
    tightness = parser["tightness"] if parser.has_section("tightness") else {}
    return RunConfig(
        params=params,
        exponents=exponents,
        ensemble=_get(run, "ensemble", int, 1),
        snapshot_every=_get(run, "snapshot_every", int, 10),
        burn_in_T=_get(run, "burn_in_T", _optional_float, None),
        pcn_steps=_get(run, "pcn_steps", int, PCN_STEPS),
        pcn_beta=_get(run, "pcn_beta", float, PCN_BETA),
        output_dir=_get(run, "output_dir", str, "out"),
        mode=_get(run, "mode", str, "simulate"),
        runs=_get(tightness, "runs", _path_list, ()),
        red_flag_factor=_get(tightness, "red_flag_factor", float, RED_FLAG_FACTOR),
        min_ensemble=_get(tightness, "min_ensemble", int, MIN_ENSEMBLE),
    )


def emit_config(config):
    p, ex = config.params, config.exponents
    lines = [
        "[model]",
        f"N = {p.N}",
        f"m0 = {p.m0!r}",
        f"lambda = {p.lam!r}",
        f"lambda0 = {p.lam0!r}",
        f"T = {p.T!r}",
        f"dt = {p.dt!r}",
        f"seed = {p.seed}",
        f"grid_K = {p.grid.K}",
        f"grid_M = {p.grid.M}",
        "",
        "[exponents]",
    ]
    lines += [f"{f.name} = {getattr(ex, f.name)!r}" for f in fields(ExponentSet)]
    lines += [
        "",
        "[run]",
        f"ensemble = {config.ensemble}",
        f"snapshot_every = {config.snapshot_every}",
        f"burn_in_T = {'auto' if config.burn_in_T is None else repr(config.burn_in_T)}",
        f"pcn_steps = {config.pcn_steps}",
        f"pcn_beta = {config.pcn_beta!r}",
        f"output_dir = {config.output_dir}",
        f"mode = {config.mode}",
        "",
        "[tightness]",
        f"runs = {', '.join(config.runs)}",
        f"red_flag_factor = {config.red_flag_factor!r}",
        f"min_ensemble = {config.min_ensemble}",
    ]
    return "\n".join(lines) + "\n"


def thread_count():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got '{raw}'") from e
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {threads}")
    return threads
