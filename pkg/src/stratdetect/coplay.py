"""Historical co-play features.

For a focal player and each member q of the population S, the feature is the
fraction of the focal player's *earlier* matches in which q was a teammate.
The current match never contributes to its own vector.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import OrderingError
from .ingest import PopulationS
from .records import PlayerRow, chrono_key


@dataclass(frozen=True)
class CoplayState:
    player_id: str
    prior_matches: int = 0
    teammate_counts: Mapping[str, int] = field(default_factory=lambda: MappingProxyType({}))
    last_key: tuple[int, str] | None = None


def coplay_before(state: CoplayState, s: PopulationS) -> np.ndarray:
    """Co-play vector aligned to ``s.members``; all zeros before any history."""
    out = np.zeros(s.size)
    if state.prior_matches == 0:
        return out
    idx = s.index()
    for pid, c in state.teammate_counts.items():
        j = idx.get(pid)
        if j is not None:
            out[j] = c / state.prior_matches
    return out


def advance(state: CoplayState, row: PlayerRow, s: PopulationS) -> CoplayState:
    """Fold one more match into the state."""
    if row.player_id != state.player_id:
        raise OrderingError(f"row for {row.player_id} fed to state of {state.player_id}")
    key = chrono_key(row)
    if state.last_key is not None and key <= state.last_key:
        raise OrderingError(
            f"player {row.player_id}: match {row.match_id} at {row.timestamp} is not after "
            f"match {state.last_key[1]} at {state.last_key[0]}"
        )
    counts = dict(state.teammate_counts)
    for q in row.teammates:
        if q in s:
            counts[q] = counts.get(q, 0) + 1
    return CoplayState(row.player_id, state.prior_matches + 1, MappingProxyType(counts), key)


def coplay_matrix(history: Sequence[PlayerRow], s: PopulationS) -> np.ndarray:
    """Co-play vectors for every row of one player's chronological history.

    Row i of the result uses matches 0..i-1 only. Same values as folding
    ``advance`` and calling ``coplay_before`` at each step, computed with a
    single counts array.
    """
    n = len(history)
    out = np.zeros((n, s.size))
    if n == 0:
        return out
    idx = s.index()
    counts = np.zeros(s.size)
    prev = None
    for i, row in enumerate(history):
        key = chrono_key(row)
        if prev is not None and key <= prev:
            raise OrderingError(
                f"player {row.player_id}: match {row.match_id} is out of chronological order"
            )
        prev = key
        if i:
            out[i] = counts / i
        for q in row.teammates:
            j = idx.get(q)
            if j is not None:
                counts[j] += 1
    return out


# -- cache file ---------------------------------------------------------------
# CSV with columns player_id,match_id,s_size,pairs where pairs is a
# ';'-separated list of "index:value" for the nonzero entries, value written
# with repr() so it round-trips exactly.

CACHE_COLUMNS = ["player_id", "match_id", "s_size", "pairs"]


def write_cache(path: str | Path, entries: Iterable[tuple[str, str, np.ndarray]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CACHE_COLUMNS)
        for pid, mid, vec in entries:
            nz = np.flatnonzero(vec)
            pairs = ";".join(f"{j}:{float(vec[j])!r}" for j in nz)
            w.writerow([pid, mid, len(vec), pairs])


def read_cache(path: str | Path) -> dict[tuple[str, str], np.ndarray]:
    out = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            vec = np.zeros(int(rec["s_size"]))
            if rec["pairs"]:
                for item in rec["pairs"].split(";"):
                    j, v = item.split(":")
                    vec[int(j)] = float(v)
            out[(rec["player_id"], rec["match_id"])] = vec
    return out
