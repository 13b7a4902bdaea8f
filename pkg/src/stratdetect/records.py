"""Match and per-player row data model, plus the on-disk match table.

A match file (CSV or JSON lines) has one record per match with the columns::

    match_id,timestamp,region,mode,p1..p10,team1..team10,hero1..hero10

``timestamp`` is integer UTC seconds, ``mode`` one of the six configured mode
labels, ``team<k>`` is ``A`` or ``B`` and ``hero<k>`` is a free-form hero name.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import OrderingError, SchemaError

N_MODES = 6
SLOTS_PER_MATCH = 10
TEAM_SIZE = 5
TEAMS = ("A", "B")

DEFAULT_MODE_LABELS = tuple(f"M{i}" for i in range(N_MODES))
FIRST_MATCH_GAP = 30 * 86400
DEFAULT_EPOCH = int(dt.datetime(2015, 1, 1, tzinfo=dt.timezone.utc).timestamp())

MATCH_COLUMNS = (
    ["match_id", "timestamp", "region", "mode"]
    + [f"p{k}" for k in range(1, SLOTS_PER_MATCH + 1)]
    + [f"team{k}" for k in range(1, SLOTS_PER_MATCH + 1)]
    + [f"hero{k}" for k in range(1, SLOTS_PER_MATCH + 1)]
)


class ModeSet:
    """The closed set of six game-mode labels; rows carry the integer index."""

    def __init__(self, labels: Sequence[str] = DEFAULT_MODE_LABELS):
        labels = tuple(str(x) for x in labels)
        if len(labels) != N_MODES or len(set(labels)) != N_MODES:
            raise SchemaError(f"expected {N_MODES} distinct mode labels, got {labels!r}")
        self.labels = labels
        self._index = {lab: i for i, lab in enumerate(labels)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise SchemaError(f"unknown game mode {label!r}") from None

    def label(self, index: int) -> str:
        return self.labels[index]

    def __len__(self) -> int:
        return N_MODES

    def __eq__(self, other) -> bool:
        return isinstance(other, ModeSet) and other.labels == self.labels

    def __repr__(self) -> str:
        return f"ModeSet({list(self.labels)!r})"


class Slot(NamedTuple):
    player_id: str
    team: str
    hero: str


@dataclass(frozen=True)
class MatchRecord:
    match_id: str
    timestamp: int
    region: str
    mode: int
    slots: tuple[Slot, ...]

    def validate(self) -> None:
        if len(self.slots) != SLOTS_PER_MATCH:
            raise SchemaError(
                f"match {self.match_id}: expected {SLOTS_PER_MATCH} slots, got {len(self.slots)}"
            )
        for team in TEAMS:
            n = sum(s.team == team for s in self.slots)
            if n != TEAM_SIZE:
                raise SchemaError(f"match {self.match_id}: team {team} has {n} players")
        ids = [s.player_id for s in self.slots]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"match {self.match_id}: duplicate player id")
        if not 0 <= self.mode < N_MODES:
            raise SchemaError(f"match {self.match_id}: mode index {self.mode} out of range")


@dataclass(frozen=True)
class PlayerRow:
    """One (player, match) observation. Time fields are filled by a later pass."""

    player_id: str
    match_id: str
    timestamp: int
    region: str
    mode: int
    hero: str
    teammates: frozenset[str]
    hour_of_day: int | None = None
    day_of_week: int | None = None
    game_date: int | None = None
    arrival_gap: int | None = field(default=None)


def explode_match(m: MatchRecord) -> list[PlayerRow]:
    """Split a match into its ten per-player rows."""
    m.validate()
    rows = []
    for slot in m.slots:
        mates = frozenset(
            s.player_id for s in m.slots if s.team == slot.team and s.player_id != slot.player_id
        )
        rows.append(
            PlayerRow(
                player_id=slot.player_id,
                match_id=m.match_id,
                timestamp=m.timestamp,
                region=m.region,
                mode=m.mode,
                hero=slot.hero,
                teammates=mates,
            )
        )
    return rows


def derive_time_fields(
    row: PlayerRow,
    prev_timestamp: int | None,
    *,
    epoch: int = DEFAULT_EPOCH,
    first_gap: int = FIRST_MATCH_GAP,
) -> PlayerRow:
    """Fill hour/day/date (UTC, Sunday = 0) and the gap since the previous match."""
    if prev_timestamp is not None and row.timestamp < prev_timestamp:
        raise OrderingError(
            f"player {row.player_id}: match {row.match_id} at {row.timestamp} "
            f"precedes previous match at {prev_timestamp}"
        )
    t = dt.datetime.fromtimestamp(row.timestamp, tz=dt.timezone.utc)
    gap = first_gap if prev_timestamp is None else row.timestamp - prev_timestamp
    return replace(
        row,
        hour_of_day=t.hour,
        day_of_week=(t.weekday() + 1) % 7,
        game_date=(row.timestamp - epoch) // 86400,
        arrival_gap=gap,
    )


def chrono_key(row: PlayerRow) -> tuple[int, str]:
    return (row.timestamp, row.match_id)


def group_by_player(rows: Iterable[PlayerRow]) -> dict[str, list[PlayerRow]]:
    """Group rows per player, each list sorted chronologically (ties by match_id)."""
    out: dict[str, list[PlayerRow]] = defaultdict(list)
    for r in rows:
        out[r.player_id].append(r)
    for lst in out.values():
        lst.sort(key=chrono_key)
    return dict(out)


def with_time_fields(
    history: Sequence[PlayerRow], *, epoch: int = DEFAULT_EPOCH, first_gap: int = FIRST_MATCH_GAP
) -> list[PlayerRow]:
    """Run ``derive_time_fields`` along one player's chronologically sorted history."""
    out = []
    prev = None
    for r in history:
        out.append(derive_time_fields(r, prev, epoch=epoch, first_gap=first_gap))
        prev = r.timestamp
    return out


# -- match table I/O ---------------------------------------------------------


def _match_from_flat(rec: dict, modes: ModeSet) -> MatchRecord:
    try:
        mid = str(rec["match_id"])
        slots = tuple(
            Slot(str(rec[f"p{k}"]), str(rec[f"team{k}"]), str(rec[f"hero{k}"]))
            for k in range(1, SLOTS_PER_MATCH + 1)
        )
        m = MatchRecord(
            match_id=mid,
            timestamp=int(rec["timestamp"]),
            region=str(rec["region"]),
            mode=modes.index(str(rec["mode"])),
            slots=slots,
        )
    except KeyError as exc:
        raise SchemaError(f"match {rec.get('match_id', '?')}: missing column {exc}") from None
    except ValueError as exc:
        raise SchemaError(f"match {rec.get('match_id', '?')}: {exc}") from None
    m.validate()
    return m


def _match_to_flat(m: MatchRecord, modes: ModeSet) -> dict:
    rec = {"match_id": m.match_id, "timestamp": m.timestamp, "region": m.region,
           "mode": modes.label(m.mode)}
    for k, s in enumerate(m.slots, 1):
        rec[f"p{k}"] = s.player_id
        rec[f"team{k}"] = s.team
        rec[f"hero{k}"] = s.hero
    return {c: rec[c] for c in MATCH_COLUMNS}


def iter_matches(path: str | Path, modes: ModeSet | None = None) -> Iterator[MatchRecord]:
    """Stream matches from a ``.csv`` or ``.jsonl`` file."""
    modes = modes or ModeSet()
    path = Path(path)
    with open(path, newline="") as fh:
        if path.suffix == ".jsonl":
            for line in fh:
                if line.strip():
                    yield _match_from_flat(json.loads(line), modes)
        else:
            for rec in csv.DictReader(fh):
                yield _match_from_flat(rec, modes)


def read_matches(path: str | Path, modes: ModeSet | None = None) -> list[MatchRecord]:
    return list(iter_matches(path, modes))


def write_matches(path: str | Path, matches: Iterable[MatchRecord], modes: ModeSet | None = None) -> None:
    modes = modes or ModeSet()
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if path.suffix == ".jsonl":
            for m in matches:
                fh.write(json.dumps(_match_to_flat(m, modes)) + "\n")
        else:
            w = csv.DictWriter(fh, fieldnames=MATCH_COLUMNS, lineterminator="\n")
            w.writeheader()
            for m in matches:
                w.writerow(_match_to_flat(m, modes))


# -- per-player row table I/O (ingest output) -------------------------------

ROW_COLUMNS = ["player_id", "match_id", "timestamp", "region", "mode", "hero", "teammates"]


def write_rows(path: str | Path, rows: Iterable[PlayerRow], modes: ModeSet | None = None) -> int:
    modes = modes or ModeSet()
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for r in rows:
            w.writerow([r.player_id, r.match_id, r.timestamp, r.region, modes.label(r.mode),
                        r.hero, ";".join(sorted(r.teammates))])
            n += 1
    return n


def read_rows(path: str | Path, modes: ModeSet | None = None) -> list[PlayerRow]:
    modes = modes or ModeSet()
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            mates = frozenset(rec["teammates"].split(";")) if rec["teammates"] else frozenset()
            if len(mates) != TEAM_SIZE - 1:
                raise SchemaError(f"match {rec['match_id']}: row for {rec['player_id']} "
                                  f"has {len(mates)} teammates")
            out.append(PlayerRow(
                player_id=rec["player_id"], match_id=rec["match_id"],
                timestamp=int(rec["timestamp"]), region=rec["region"],
                mode=modes.index(rec["mode"]), hero=rec["hero"], teammates=mates,
            ))
    return out
