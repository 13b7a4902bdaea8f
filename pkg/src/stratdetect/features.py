"""Per-arm feature encoding fitted on a training split.

Column layout before constant-column removal::

    hero one-hot (training vocabulary) | hour one-hot (24) | day one-hot (7)
    | game_date | arrival_gap | co-play (|S|)

The baseline arm uses everything but the co-play block, ``coplay_only`` uses
only the co-play block and ``combined`` uses all of it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .ingest import PopulationS
from .records import PlayerRow

ARMS = ("baseline", "coplay_only", "combined")
ARM_ALIASES = {"coplay": "coplay_only", "co-play": "coplay_only"}
NUMERIC = ("game_date", "arrival_gap")
CONST_VAR_TOL = 1e-12
STD_FLOOR = 1e-6


def canonical_arm(name: str) -> str:
    name = ARM_ALIASES.get(name, name)
    if name not in ARMS:
        raise ConfigError(f"unknown arm {name!r}; expected one of {ARMS}")
    return name


def uses_state(arm: str) -> bool:
    return arm in ("baseline", "combined")


def uses_coplay(arm: str) -> bool:
    return arm in ("coplay_only", "combined")


@dataclass
class FeatureSchema:
    arm: str
    blocks: list[tuple[str, str, int]]
    hero_vocab: list[str] = field(default_factory=list)
    numeric_stats: dict[str, tuple[float, float]] = field(default_factory=dict)
    dropped_columns: list[int] = field(default_factory=list)
    s_members: list[str] = field(default_factory=list)

    @property
    def raw_width(self) -> int:
        return sum(w for _, _, w in self.blocks)

    @property
    def width(self) -> int:
        return self.raw_width - len(self.dropped_columns)

    def block_offset(self, name: str) -> int:
        off = 0
        for n, _, w in self.blocks:
            if n == name:
                return off
            off += w
        raise KeyError(name)

    def kept_columns(self) -> np.ndarray:
        keep = np.ones(self.raw_width, dtype=bool)
        keep[self.dropped_columns] = False
        return np.flatnonzero(keep)

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "blocks": [list(b) for b in self.blocks],
            "hero_vocab": list(self.hero_vocab),
            "numeric_stats": {k: list(v) for k, v in self.numeric_stats.items()},
            "dropped_columns": list(self.dropped_columns),
            "s_members": list(self.s_members),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            arm=d["arm"],
            blocks=[tuple(b) for b in d["blocks"]],
            hero_vocab=list(d["hero_vocab"]),
            numeric_stats={k: tuple(v) for k, v in d["numeric_stats"].items()},
            dropped_columns=list(d["dropped_columns"]),
            s_members=list(d["s_members"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: int


def _raw_matrix(rows: Sequence[PlayerRow], coplay: np.ndarray | None, schema: FeatureSchema) -> np.ndarray:
    n = len(rows)
    parts = []
    if uses_state(schema.arm):
        vocab = {h: i for i, h in enumerate(schema.hero_vocab)}
        hero = np.zeros((n, len(vocab)))
        hour = np.zeros((n, 24))
        day = np.zeros((n, 7))
        num = np.zeros((n, 2))
        for i, r in enumerate(rows):
            if r.hour_of_day is None or r.arrival_gap is None:
                raise ConfigError(f"row {r.player_id}/{r.match_id} has no time fields")
            j = vocab.get(r.hero)
            if j is not None:
                hero[i, j] = 1.0
            hour[i, r.hour_of_day] = 1.0
            day[i, r.day_of_week] = 1.0
            num[i, 0] = r.game_date
            num[i, 1] = r.arrival_gap
        parts += [hero, hour, day, num]
    if uses_coplay(schema.arm):
        if coplay is None:
            raise ConfigError(f"arm {schema.arm} needs co-play vectors")
        coplay = np.asarray(coplay, dtype=float).reshape(n, -1)
        if coplay.shape[1] != len(schema.s_members):
            raise ConfigError(f"co-play width {coplay.shape[1]} != |S|={len(schema.s_members)}")
        parts.append(coplay)
    return np.hstack(parts) if parts else np.zeros((n, 0))


def _normalize(raw: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    out = raw.copy()
    if uses_state(schema.arm):
        off = schema.block_offset("game_date")
        for k, name in enumerate(NUMERIC):
            mean, var = schema.numeric_stats[name]
            out[:, off + k] = (raw[:, off + k] - mean) / max(np.sqrt(var), STD_FLOOR)
    return out[:, schema.kept_columns()]


def fit_schema(
    training_rows: Sequence[PlayerRow],
    arm: str,
    s: PopulationS | None = None,
    coplay: np.ndarray | None = None,
) -> FeatureSchema:
    """Fit vocabularies, z-score statistics and the constant-column set on training rows only."""
    arm = canonical_arm(arm)
    if not training_rows:
        raise ConfigError("cannot fit a feature schema on an empty training set")
    blocks: list[tuple[str, str, int]] = []
    vocab: list[str] = []
    if uses_state(arm):
        vocab = sorted({r.hero for r in training_rows})
        blocks += [("hero", "one_hot", len(vocab)), ("hour", "one_hot", 24), ("day", "one_hot", 7),
                   ("game_date", "numeric", 1), ("arrival_gap", "numeric", 1)]
    members: list[str] = []
    if uses_coplay(arm):
        if s is None:
            raise ConfigError(f"arm {arm} requires the population S")
        members = list(s.members)
        blocks.append(("coplay", "coplay", s.size))
    schema = FeatureSchema(arm=arm, blocks=blocks, hero_vocab=vocab, s_members=members)
    raw = _raw_matrix(training_rows, coplay, schema)
    if uses_state(arm):
        off = schema.block_offset("game_date")
        for k, name in enumerate(NUMERIC):
            col = raw[:, off + k]
            schema.numeric_stats[name] = (float(col.mean()), float(col.var()))
    var = raw.var(axis=0) if len(raw) else np.zeros(raw.shape[1])
    schema.dropped_columns = np.flatnonzero(var < CONST_VAR_TOL).tolist()
    return schema


def encode_rows(
    rows: Sequence[PlayerRow], coplay: np.ndarray | None, schema: FeatureSchema
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``encode``: returns the (n, width) input matrix and the label vector."""
    raw = _raw_matrix(rows, coplay, schema)
    y = np.array([r.mode for r in rows], dtype=np.int64)
    return _normalize(raw, schema), y


def encode(row: PlayerRow, cv: np.ndarray | None, schema: FeatureSchema) -> FeatureVector:
    X, y = encode_rows([row], None if cv is None else np.asarray(cv)[None, :], schema)
    return FeatureVector(X[0], int(y[0]))
