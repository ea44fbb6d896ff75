"""Run configuration: flat ``key = value`` text with ``#`` comments.

Lists are comma separated.  Every key is optional except ``experiment``;
unknown keys and invalid values raise :class:`ConfigError` naming the line and
the key.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from .errors import ConfigError
from .kernel import DEFAULT_K_CAP, DEFAULT_MASS_TOL
from .obstacle import OBSTACLE_FAMILIES
from .step_law import SLOPE_MARGIN, law_from_name

EXPERIMENTS = ("ld_correction", "tails", "variance", "covariance", "alpha_p", "free_field")
THREADS_ENV = "OBSTACLE_WALK_THREADS"


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    law: str = "uniform3"
    obstacle_family: str = "quadratic"
    obstacle_param: float = 0.5
    n_grid: tuple[int, ...] = (512, 1024, 2048, 4096, 8192)
    n: int = 8192
    k: int | None = None
    lambda_min: float = 2.0
    lambda_max: float | None = None
    lambda_count: int = 9
    pair_i: int | None = None
    pair_separations: tuple[int, ...] | None = None
    k_cap: float = DEFAULT_K_CAP
    mass_tol: float = DEFAULT_MASS_TOL
    slope_margin: float = SLOPE_MARGIN
    tolerance: float | None = None
    p_grid: tuple[float, ...] = (1.5, 2.0, 3.0)
    gaussian_n_grid: tuple[int, ...] = (256, 512, 1024, 2048, 4096)
    gaussian_method: str = "transfer"
    beta: float = 1.0
    dx: float = 0.1
    sweeps: int = 20000
    burn_in: int = 1000
    thin: int | None = None
    coupling_factor: float = 1e-3
    tail_budget: int = 1_000_000
    free_field_n: int = 24
    seed: int = 0
    output_dir: str = "out"
    threads: int = 1


def _pos_float(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError("must be a positive number")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise ValueError("must be a non-negative integer")
    return v


def _list_of(parse: Callable) -> Callable:
    def inner(text: str) -> tuple:
        items = [s.strip() for s in text.split(",") if s.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(parse(s) for s in items)

    return inner


def _choice(options) -> Callable:
    def inner(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text

    return inner


def _law(text: str) -> str:
    law_from_name(text)
    return text


def _p_value(text: str) -> float:
    v = float(text)
    if not v >= 1:
        raise ValueError("p must be >= 1")
    return v


#: config key -> (RunConfig field, parser)
KEYS: dict[str, tuple[str, Callable]] = {
    "experiment": ("experiment", _choice(EXPERIMENTS)),
    "law": ("law", _law),
    "obstacle.family": ("obstacle_family", _choice(tuple(k for k in OBSTACLE_FAMILIES if k != "p"))),
    "obstacle.param": ("obstacle_param", _pos_float),
    "n_grid": ("n_grid", _list_of(_pos_int)),
    "obstacle.n": ("n", _pos_int),
    "k": ("k", _pos_int),
    "lambda.min": ("lambda_min", _pos_float),
    "lambda.max": ("lambda_max", _pos_float),
    "lambda.count": ("lambda_count", _pos_int),
    "pairs.i": ("pair_i", _pos_int),
    "pairs.separations": ("pair_separations", _list_of(_pos_int)),
    "kernel.k_cap": ("k_cap", _pos_float),
    "kernel.mass_tol": ("mass_tol", _pos_float),
    "slope_margin": ("slope_margin", _pos_float),
    "fit.tolerance": ("tolerance", _pos_float),
    "gaussian.p_grid": ("p_grid", _list_of(_p_value)),
    "gaussian.n_grid": ("gaussian_n_grid", _list_of(_pos_int)),
    "gaussian.method": ("gaussian_method", _choice(("transfer", "gibbs"))),
    "gaussian.beta": ("beta", _pos_float),
    "gaussian.dx": ("dx", _pos_float),
    "gibbs.sweeps": ("sweeps", _pos_int),
    "gibbs.burn_in": ("burn_in", _nonneg_int),
    "gibbs.thin": ("thin", _pos_int),
    "gibbs.coupling_factor": ("coupling_factor", _pos_float),
    "gaussian.tail_budget": ("tail_budget", _pos_int),
    "free_field.n": ("free_field_n", _pos_int),
    "seed": ("seed", _nonneg_int),
    "output_dir": ("output_dir", str),
    "threads": ("threads", _pos_int),
}


def parse_config_text(text: str) -> RunConfig:
    values: dict = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError("unknown key", line=lineno, key=key)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", line=lineno, key=key)
        if not value:
            raise ConfigError("missing value", line=lineno, key=key)
        name, parse = KEYS[key]
        try:
            values[name] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"invalid value {value!r}: {exc}", line=lineno, key=key) from None
        seen[key] = lineno
    if "experiment" not in values:
        raise ConfigError("required key missing", key="experiment")
    cfg = RunConfig(**values)
    if cfg.lambda_max is not None and cfg.lambda_max <= cfg.lambda_min:
        raise ConfigError("must exceed lambda.min", line=seen.get("lambda.max"), key="lambda.max")
    if cfg.k is not None and cfg.k >= cfg.n:
        raise ConfigError("must be below obstacle.n", line=seen.get("k"), key="k")
    return cfg


def parse_config(path: str | os.PathLike) -> RunConfig:
    """Read and validate a config file; ``OBSTACLE_WALK_THREADS`` overrides ``threads``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} not found")
    cfg = parse_config_text(path.read_text())
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cfg = replace(cfg, threads=_pos_int(env))
        except ValueError as exc:
            raise ConfigError(f"invalid {THREADS_ENV}={env!r}: {exc}") from None
    return cfg


__all__ = ["EXPERIMENTS", "KEYS", "RunConfig", "THREADS_ENV", "parse_config", "parse_config_text"]
