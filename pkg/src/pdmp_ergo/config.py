"""Strict flat key=value run configuration.

One experiment is one flat parameter set; the parser rejects unknown keys
and reports the offending key and line, so a config file pins a run
exactly.  ``serialize`` emits a canonical form whose reparse equals the
original config.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

__all__ = ["RunConfig", "ConfigError", "parse_config", "parse_config_text", "serialize"]

EXPERIMENTS = ("simulate", "certify", "verify", "inequality")
MODELS = ("tcp_constant", "tcp_linear", "tcp_increasing", "storage", "twisted_tcp_linear")
DEFAULT_FUNCTIONS = ("x", "x^2", "exp(-x)", "sin(x)", "sin(3x)", "log1p(x)", "x*exp(-x)")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    model: str
    experiment: str = "simulate"
    rate: float = 1.0
    delta: float = 0.5
    lambda_star: float = 1.0
    rate_slope: float = 1.0
    kappa: Optional[float] = None
    u_scale: float = 1.0
    seed: int = 0
    n_outer: int = 10_000
    n_inner: int = 200
    chain_length: int = 100_000
    burn_in: int = 1000
    thinning: int = 1
    time_grid: tuple = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    functions: tuple = DEFAULT_FUNCTIONS
    workers: int = 1
    out_dir: str = "runs"

    def kappa_value(self) -> float:
        """Log-rate Lipschitz constant; for the affine rate family the slope
        over the floor unless set explicitly."""
        if self.kappa is not None:
            return self.kappa
        return self.rate_slope / self.lambda_star


# key name in the file -> (attribute, parser, validator, description)
def _pos_int(key):
    def parse(tok):
        try:
            v = int(tok)
        except ValueError:
            raise ConfigError(f"{key} must be an integer")
        if v <= 0:
            raise ConfigError(f"{key} must be positive")
        return v
    return parse


def _nonneg_int(key):
    def parse(tok):
        try:
            v = int(tok)
        except ValueError:
            raise ConfigError(f"{key} must be an integer")
        if v < 0:
            raise ConfigError(f"{key} must be nonnegative")
        return v
    return parse


def _pos_float(key):
    def parse(tok):
        try:
            v = float(tok)
        except ValueError:
            raise ConfigError(f"{key} must be a number")
        if not v > 0:
            raise ConfigError(f"{key} must be positive")
        return v
    return parse


def _delta(tok):
    try:
        v = float(tok)
    except ValueError:
        raise ConfigError("delta must be a number")
    if not 0.0 <= v < 1.0:
        raise ConfigError("delta must lie in [0,1)")
    return v


def _choice(key, choices):
    def parse(tok):
        if tok not in choices:
            raise ConfigError(f"{key} must be one of {', '.join(choices)}")
        return tok
    return parse


def _time_grid(tok):
    try:
        grid = tuple(float(p) for p in tok.split(",") if p.strip() != "")
    except ValueError:
        raise ConfigError("time_grid must be a comma-separated list of numbers")
    if len(grid) < 1:
        raise ConfigError("time_grid must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("time_grid must be strictly increasing")
    if grid[0] < 0:
        raise ConfigError("time_grid must be nonnegative")
    return grid


def _functions(tok):
    labels = tuple(p.strip() for p in tok.split(",") if p.strip() != "")
    if not labels:
        raise ConfigError("functions must name at least one test function")
    unknown = [lab for lab in labels if lab not in DEFAULT_FUNCTIONS]
    if unknown:
        raise ConfigError(
            f"unknown test function {unknown[0]!r}; known: {', '.join(DEFAULT_FUNCTIONS)}")
    return labels


def _seed(tok):
    try:
        v = int(tok)
    except ValueError:
        raise ConfigError("seed must be an integer")
    if v < 0:
        raise ConfigError("seed must be nonnegative")
    return v


def _kappa(tok):
    try:
        v = float(tok)
    except ValueError:
        raise ConfigError("kappa must be a number")
    if v < 0:
        raise ConfigError("kappa must be nonnegative")
    return v


_KEYS = {
    "experiment": ("experiment", _choice("experiment", EXPERIMENTS)),
    "model": ("model", _choice("model", MODELS)),
    "lambda": ("rate", _pos_float("lambda")),
    "delta": ("delta", _delta),
    "lambda_star": ("lambda_star", _pos_float("lambda_star")),
    "rate_slope": ("rate_slope", _pos_float("rate_slope")),
    "kappa": ("kappa", _kappa),
    "u_scale": ("u_scale", _pos_float("u_scale")),
    "seed": ("seed", _seed),
    "n_outer": ("n_outer", _pos_int("n_outer")),
    "n_inner": ("n_inner", _pos_int("n_inner")),
    "chain_length": ("chain_length", _pos_int("chain_length")),
    "burn_in": ("burn_in", _nonneg_int("burn_in")),
    "thinning": ("thinning", _pos_int("thinning")),
    "time_grid": ("time_grid", _time_grid),
    "functions": ("functions", _functions),
    "workers": ("workers", _pos_int("workers")),
    "out_dir": ("out_dir", lambda tok: tok),
}


def parse_config_text(text: str, origin: str = "<config>") -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, tok = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        attr, parser = _KEYS[key]
        if attr in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        try:
            values[attr] = parser(tok)
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{lineno}: {exc}") from None
    if "model" not in values:
        raise ConfigError(f"{origin}: missing required key 'model'")
    return RunConfig(**values)


def parse_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config_text(text, origin=str(path))


def serialize(config: RunConfig) -> str:
    """Canonical text form; reparsing gives back an equal config."""
    lines = [
        f"experiment = {config.experiment}",
        f"model = {config.model}",
        f"lambda = {config.rate:.17g}",
        f"delta = {config.delta:.17g}",
        f"lambda_star = {config.lambda_star:.17g}",
        f"rate_slope = {config.rate_slope:.17g}",
    ]
    if config.kappa is not None:
        lines.append(f"kappa = {config.kappa:.17g}")
    lines += [
        f"u_scale = {config.u_scale:.17g}",
        f"seed = {config.seed}",
        f"n_outer = {config.n_outer}",
        f"n_inner = {config.n_inner}",
        f"chain_length = {config.chain_length}",
        f"burn_in = {config.burn_in}",
        f"thinning = {config.thinning}",
        "time_grid = " + ",".join(f"{t:.17g}" for t in config.time_grid),
        "functions = " + ",".join(config.functions),
        f"workers = {config.workers}",
        f"out_dir = {config.out_dir}",
    ]
    return "\n".join(lines) + "\n"


def with_overrides(config: RunConfig, **kwargs) -> RunConfig:
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    return replace(config, **kwargs)
