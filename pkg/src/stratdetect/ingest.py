"""Population filters, top-|S| selection and deterministic file subsampling."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .records import ModeSet, PlayerRow, explode_match, iter_matches, write_rows

log = logging.getLogger(__name__)

MATCH_FILE_SUFFIXES = (".csv", ".jsonl")


@dataclass(frozen=True)
class PopulationFilter:
    min_matches: int = 100
    region: str | None = None  # None: most populous region in the data

    def __post_init__(self):
        if self.min_matches < 1:
            raise ConfigError("min_matches must be >= 1")


@dataclass(frozen=True)
class PopulationS:
    members: tuple[str, ...]
    _set: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "_set", frozenset(self.members))

    @property
    def size(self) -> int:
        return len(self.members)

    def index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.members)}

    def __contains__(self, pid) -> bool:
        return pid in self._set


def most_populous_region(rows: Iterable[PlayerRow]) -> str:
    counts = Counter(r.region for r in rows)
    if not counts:
        raise ConfigError("no rows to infer a region from")
    # ties: alphabetical
    return min(counts, key=lambda reg: (-counts[reg], reg))


def filter_rows(rows: Iterable[PlayerRow], f: PopulationFilter) -> list[PlayerRow]:
    """Keep rows in the chosen region whose player has at least ``min_matches`` of them.

    Counting is done within the region so that the filter is idempotent.
    """
    rows = list(rows)
    if not rows:
        return []
    region = f.region if f.region is not None else most_populous_region(rows)
    in_region = [r for r in rows if r.region == region]
    counts = Counter(r.player_id for r in in_region)
    return [r for r in in_region if counts[r.player_id] >= f.min_matches]


def match_counts(rows: Iterable[PlayerRow]) -> Counter:
    return Counter(r.player_id for r in rows)


def select_top_s(rows: Iterable[PlayerRow], size: int) -> PopulationS:
    """The ``size`` players with the most rows; ties go to the smaller player id."""
    return select_top_s_from_counts(match_counts(rows), size)


def select_top_s_from_counts(counts: Mapping[str, int], size: int) -> PopulationS:
    if size < 1 or size > len(counts):
        raise ConfigError(f"|S|={size} but only {len(counts)} distinct players are available")
    ranked = sorted(counts, key=lambda p: (-counts[p], p))
    return PopulationS(tuple(ranked[:size]))


def subsample(
    files: Sequence, fraction: float, seed: int, sizes: Sequence[float] | None = None
) -> list:
    """Pick a seeded subset of ``files`` holding roughly ``fraction`` of the row mass.

    Files are visited in a seeded random order and taken until the running mass
    is closest to the target; the result keeps the input order.
    """
    if not 0 < fraction <= 1:
        raise ConfigError(f"subsample fraction must be in (0, 1], got {fraction}")
    files = list(files)
    if fraction == 1.0 or not files:
        return files
    w = np.ones(len(files)) if sizes is None else np.asarray(sizes, dtype=float)
    target = fraction * w.sum()
    order = np.random.default_rng(seed).permutation(len(files))
    cum = np.cumsum(w[order])
    k = int(np.argmin(np.abs(cum - target))) + 1
    chosen = set(order[:k].tolist())
    return [f for i, f in enumerate(files) if i in chosen]


def list_match_files(input_dir: str | Path) -> list[Path]:
    p = Path(input_dir)
    if p.is_file():
        return [p]
    files = sorted(x for x in p.iterdir() if x.suffix in MATCH_FILE_SUFFIXES and x.is_file()
                   and not x.name.startswith("rows"))
    if not files:
        raise ConfigError(f"no match files (*.csv, *.jsonl) in {p}")
    return files


def _count_records(path: Path) -> int:
    with open(path) as fh:
        n = sum(1 for line in fh if line.strip())
    return n - 1 if path.suffix == ".csv" else n


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def player_block(player_id: str, n_blocks: int) -> int:
    h = hashlib.sha256(player_id.encode()).digest()
    return int.from_bytes(h[:8], "little") % n_blocks


def write_counts(path: str | Path, counts: Mapping[str, int]) -> None:
    with open(path, "w") as fh:
        fh.write("player_id,n_matches\n")
        for pid in sorted(counts, key=lambda p: (-counts[p], p)):
            fh.write(f"{pid},{counts[pid]}\n")


def read_counts(path: str | Path) -> dict[str, int]:
    out = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            pid, n = line.rstrip("\n").split(",")
            out[pid] = int(n)
    return out


def run_ingest(
    input_dir: str | Path,
    out_dir: str | Path,
    *,
    region: str | None = None,
    min_matches: int = 100,
    fraction: float = 0.09,
    seed: int = 0,
    n_blocks: int = 100,
    modes: ModeSet | None = None,
) -> dict:
    """Reorganise match files into per-player rows, filter, and load a seeded fraction.

    Rows are bucketed into ``n_blocks`` blocks by a hash of the player id, so a
    loaded player always comes with their complete history. ``counts.csv``
    lists match counts for every player passing the filter (the population S
    is drawn from it); ``rows.csv`` holds only the rows of the selected blocks.
    Re-running with unchanged inputs and parameters is a no-op.
    """
    t0 = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = list_match_files(input_dir)
    params = {"region": region, "min_matches": min_matches, "fraction": fraction,
              "seed": seed, "n_blocks": n_blocks, "modes": list((modes or ModeSet()).labels)}
    digests = {f.name: file_digest(f) for f in files}
    previous = load_if_current(out / "manifest.json", params, digests, ("rows.csv", "counts.csv"))
    if previous is not None:
        log.info("ingest: outputs in %s are current, nothing to do", out)
        return previous

    rows: list[PlayerRow] = []
    n_matches = 0
    for f in files:
        for m in iter_matches(f, modes):
            rows.extend(explode_match(m))
            n_matches += 1
    filt = PopulationFilter(min_matches=min_matches, region=region)
    used_region = filt.region if filt.region is not None else (most_populous_region(rows) if rows else None)
    kept = filter_rows(rows, PopulationFilter(min_matches, used_region))
    counts = match_counts(kept)

    block_rows = Counter(player_block(r.player_id, n_blocks) for r in kept)
    blocks = list(range(n_blocks))
    chosen = set(subsample(blocks, fraction, seed, [block_rows.get(b, 0) for b in blocks]))
    loaded = [r for r in kept if player_block(r.player_id, n_blocks) in chosen]
    loaded.sort(key=lambda r: (r.player_id, r.timestamp, r.match_id))

    n_written = write_rows(out / "rows.csv", loaded, modes)
    write_counts(out / "counts.csv", counts)
    manifest = {
        "stage": "ingest",
        "input": str(input_dir),
        "params": params,
        "input_digests": digests,
        "region_used": used_region,
        "fraction_realized": (n_written / len(kept)) if kept else 0.0,
        "blocks_selected": sorted(chosen),
        "matches_read": n_matches,
        "rows_read": len(rows),
        "rows_after_filter": len(kept),
        "players_after_filter": len(counts),
        "rows_loaded": n_written,
        "players_loaded": len(match_counts(loaded)),
        "output_digests": {name: file_digest(out / name) for name in ("rows.csv", "counts.csv")},
        "seconds": round(time.perf_counter() - t0, 3),
    }
    write_json_atomic(out / "manifest.json", manifest)
    log.info("ingest: %d of %d filtered rows loaded (%d players)", n_written, len(kept),
             manifest["players_loaded"])
    return manifest


def load_if_current(manifest_path: Path, params: dict, digests: dict, outputs: Sequence[str]) -> dict | None:
    """The stored manifest if it was produced from the same inputs and its outputs are intact."""
    if not manifest_path.exists():
        return None
    try:
        old = json.loads(manifest_path.read_text())
    except json.JSONDecodeError:
        return None
    if old.get("params") != params or old.get("input_digests") != digests:
        return None
    stored = old.get("output_digests", {})
    for name in outputs:
        path = manifest_path.parent / name
        if not path.exists() or stored.get(name) != file_digest(path):
            return None
    return old


def write_json_atomic(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)
