"""Flat ``key = value`` configuration files for experiment runs.

One setting per line; ``#`` starts a comment; blank lines are ignored.
List values are comma separated. Unknown keys are an error so that a typo
cannot silently fall back to a default.

Keys and defaults::

    s_sizes           = 1000, 2000, 4000   # population sizes |S| to sweep
    hidden_sizes      = 0, 10, 40, 160, 640, 1280   # 0 = single-layer perceptron
    arms              = baseline, coplay_only, combined
    split_fractions   = 0.8, 0.1, 0.1      # train, validation, test
    epochs            = 5
    batch_size        = 32
    learning_rate     = 0.001              # Adam step size
    beta1             = 0.9
    beta2             = 0.999
    epsilon           = 1e-07
    subsample_fraction = 0.09              # share of rows loaded by ingest
    min_matches       = 100                # players with fewer rows are dropped
    min_rows          = 10                 # members of S with fewer rows are skipped
    first_match_gap   = 2592000            # arrival gap of a player's first match, seconds
    epoch_timestamp   = 1420070400         # game_date origin (2015-01-01 UTC)
    seed              = 0
    workers           = 1                  # overridden by STRATDETECT_WORKERS
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import ConfigError
from .experiment import ExperimentConfig

_LIST_INT = {"s_sizes", "hidden_sizes"}
_LIST_STR = {"arms"}
_LIST_FLOAT = {"split_fractions"}
_INT = {"epochs", "batch_size", "min_matches", "min_rows", "first_match_gap", "epoch_timestamp",
        "seed", "workers"}
_FLOAT = {"learning_rate", "beta1", "beta2", "epsilon", "subsample_fraction"}

KEYS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))


def _convert(key: str, raw: str, where: str):
    try:
        if key in _LIST_INT:
            return [int(x) for x in raw.split(",") if x.strip()]
        if key in _LIST_FLOAT:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if key in _LIST_STR:
            return [x.strip() for x in raw.split(",") if x.strip()]
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: bad value {raw!r} for {key}") from None
    raise ConfigError(f"{where}: unknown key {key!r}")


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse config text into a dict of typed overrides."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{where}: {key} given twice")
        out[key] = _convert(key, raw, where)
    return out


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    values = {}
    if path is not None:
        p = Path(path)
        values = parse_config(p.read_text(), str(p))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
