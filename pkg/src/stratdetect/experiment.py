"""Per-player training protocol and the arm / |S| / hidden-size sweep."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import mlp
from .coplay import coplay_matrix
from .errors import ConfigError
from .features import ARMS, canonical_arm, encode_rows, fit_schema, uses_coplay
from .ingest import PopulationS, file_digest, select_top_s_from_counts
from .records import DEFAULT_EPOCH, FIRST_MATCH_GAP, PlayerRow, group_by_player, with_time_fields

log = logging.getLogger(__name__)

WORKERS_ENV = "STRATDETECT_WORKERS"


@dataclass
class ExperimentConfig:
    s_sizes: list[int] = field(default_factory=lambda: [1000, 2000, 4000])
    hidden_sizes: list[int] = field(default_factory=lambda: [0, 10, 40, 160, 640, 1280])
    arms: list[str] = field(default_factory=lambda: list(ARMS))
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    subsample_fraction: float = 0.09
    min_matches: int = 100
    min_rows: int = 10
    first_match_gap: int = FIRST_MATCH_GAP
    epoch_timestamp: int = DEFAULT_EPOCH
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.arms = [canonical_arm(a) for a in self.arms]
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        if len(self.split_fractions) != 3 or min(self.split_fractions) <= 0:
            raise ConfigError(f"split fractions must be three positive numbers: {self.split_fractions}")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(self.split_fractions)}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if any(h < 0 for h in self.hidden_sizes) or any(s < 1 for s in self.s_sizes):
            raise ConfigError("hidden sizes must be >= 0 and |S| sizes >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d


@dataclass
class ArmResult:
    arm: str
    s_size: int
    hidden_size: int
    per_player: list[tuple[str, float, int]] = field(default_factory=list)

    @property
    def models_trained(self) -> int:
        return len(self.per_player)

    def accuracies(self) -> np.ndarray:
        return np.array([a for _, a, _ in self.per_player])


@dataclass
class PlayerData:
    """One player's chronological history plus co-play vectors and split."""

    player_id: str
    rows: list[PlayerRow]
    coplay: np.ndarray
    split: tuple[np.ndarray, np.ndarray, np.ndarray]
    seed: int


def player_seed(global_seed: int, player_id: str) -> int:
    h = hashlib.sha256(f"{global_seed}:{player_id}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def split_sizes(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    """Floor the train and validation shares; the remainder goes to test."""
    n_train = math.floor(n * fractions[0] + 1e-9)
    n_val = math.floor(n * fractions[1] + 1e-9)
    return n_train, n_val, n - n_train - n_val


def split_indices(n: int, fractions: Sequence[float], seed: int):
    perm = np.random.default_rng(seed).permutation(n)
    a, b, _ = split_sizes(n, fractions)
    return perm[:a], perm[a:a + b], perm[a + b:]


def split(rows: Sequence[PlayerRow], fractions: Sequence[float], seed: int):
    """Seeded shuffle then train/val/test partition. Temporal order is ignored on purpose."""
    tr, va, te = split_indices(len(rows), fractions, seed)
    return [rows[i] for i in tr], [rows[i] for i in va], [rows[i] for i in te]


def prepare_players(
    rows: Sequence[PlayerRow], s: PopulationS, config: ExperimentConfig,
    coplay_cache: Mapping[tuple[str, str], np.ndarray] | None = None,
) -> tuple[dict[str, PlayerData], dict[str, str]]:
    """Histories, co-play vectors and splits for members of S present in ``rows``.

    Returns (players, skipped) where ``skipped`` maps player id to a reason.
    With ``coplay_cache`` (keyed by (player_id, match_id)) vectors are taken
    from the cache instead of being recounted.
    """
    by_player = group_by_player(r for r in rows if r.player_id in s)
    players: dict[str, PlayerData] = {}
    skipped: dict[str, str] = {}
    for pid in sorted(by_player):
        hist = with_time_fields(by_player[pid], epoch=config.epoch_timestamp,
                                first_gap=config.first_match_gap)
        if len(hist) < config.min_rows:
            skipped[pid] = f"only {len(hist)} rows (< {config.min_rows})"
            log.warning("skipping %s: %s", pid, skipped[pid])
            continue
        seed = player_seed(config.seed, pid)
        if not any(uses_coplay(a) for a in config.arms):
            cp = np.zeros((len(hist), 0))
        elif coplay_cache is not None:
            cp = _from_cache(hist, s, coplay_cache)
        else:
            cp = coplay_matrix(hist, s)
        players[pid] = PlayerData(pid, hist, cp, split_indices(len(hist), config.split_fractions, seed), seed)
    return players, skipped


def _from_cache(hist, s: PopulationS, cache) -> np.ndarray:
    out = np.empty((len(hist), s.size))
    for i, r in enumerate(hist):
        vec = cache.get((r.player_id, r.match_id))
        if vec is None:
            raise ConfigError(f"co-play cache has no entry for player {r.player_id}, match {r.match_id}")
        if len(vec) != s.size:
            raise ConfigError(f"co-play cache entry for {r.player_id}/{r.match_id} has width "
                              f"{len(vec)}, expected |S|={s.size}")
        out[i] = vec
    return out


@dataclass
class TrainOutcome:
    player_id: str
    test_accuracy: float
    n_test: int
    val_accuracy: list[float]
    schema: dict
    fit_rows: list[str] | None = None  # match ids seen by schema fitting and training


def train_one(
    pd: PlayerData,
    arm: str,
    hidden_size: int,
    config: ExperimentConfig,
    s: PopulationS | None = None,
    *,
    audit: bool = False,
    checkpoint: str | Path | None = None,
) -> TrainOutcome:
    """Fit the schema on the training split, train a fresh model, score the test split."""
    arm = canonical_arm(arm)
    tr, va, te = pd.split
    take = lambda idx: [pd.rows[i] for i in idx]  # noqa: E731
    cp = pd.coplay if uses_coplay(arm) else None
    sub = (lambda idx: cp[idx]) if cp is not None else (lambda idx: None)

    train_rows = take(tr)
    schema = fit_schema(train_rows, arm, s, sub(tr))
    X_tr, y_tr = encode_rows(train_rows, sub(tr), schema)
    X_va, y_va = encode_rows(take(va), sub(va), schema)
    X_te, y_te = encode_rows(take(te), sub(te), schema)

    # same init seed across arms; only the input columns differ
    model = mlp.init(schema.width, hidden_size, pd.seed ^ hidden_size)
    opt = mlp.AdamState(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    val_hist: list[float] = []

    def on_epoch(epoch, m, loss):
        if len(y_va):
            val_hist.append(mlp.accuracy(m, X_va, y_va))
            log.debug("%s %s h=%d epoch %d loss %.4f val %.3f", pd.player_id, arm, hidden_size,
                      epoch + 1, loss, val_hist[-1])

    mlp.train(model, X_tr, y_tr, epochs=config.epochs, batch_size=config.batch_size,
              optimizer=opt, on_epoch=on_epoch)
    acc = mlp.accuracy(model, X_te, y_te)
    if checkpoint is not None:
        mlp.save_checkpoint(checkpoint, model, schema.digest())
    fit_ids = [r.match_id for r in train_rows] if audit else None
    return TrainOutcome(pd.player_id, acc, len(y_te), val_hist, schema.to_dict(), fit_ids)


def _job(args):
    pd, arm, hidden, config, s = args
    out = train_one(pd, arm, hidden, config, s)
    return arm, hidden, out.player_id, out.test_accuracy, out.n_test


def worker_count(config: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return max(1, config.workers)


def run_arms_for_s(
    players: Mapping[str, PlayerData], s: PopulationS, config: ExperimentConfig
) -> list[ArmResult]:
    """Train every (arm, hidden size, player) combination for one population S."""
    jobs = [(players[pid], arm, h, config, s)
            for arm in config.arms for h in config.hidden_sizes for pid in sorted(players)]
    n_workers = worker_count(config)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outs = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * n_workers))))
    else:
        outs = [_job(j) for j in jobs]
    results = {(arm, h): ArmResult(arm, s.size, h) for arm in config.arms for h in config.hidden_sizes}
    for arm, h, pid, acc, n_test in outs:
        results[(arm, h)].per_player.append((pid, acc, n_test))
    for r in results.values():
        r.per_player.sort()
    return [results[(arm, h)] for arm in config.arms for h in config.hidden_sizes]


def run_arm(
    arm: str, s_size: int, hidden_size: int, config: ExperimentConfig,
    rows: Sequence[PlayerRow], counts: Mapping[str, int],
) -> ArmResult:
    """One arm at one (|S|, hidden size) over every member of S present in ``rows``."""
    s = select_top_s_from_counts(counts, s_size)
    cfg = ExperimentConfig(**{**config.to_dict(), "arms": [arm], "hidden_sizes": [hidden_size]})
    players, _ = prepare_players(rows, s, cfg)
    if not players:
        raise ConfigError(f"no member of S (|S|={s_size}) has enough rows in the loaded data")
    return run_arms_for_s(players, s, cfg)[0]


def run_experiment(
    rows: Sequence[PlayerRow], counts: Mapping[str, int], config: ExperimentConfig
) -> tuple[list[ArmResult], dict]:
    """The full sweep; returns results and a manifest of realised counts."""
    results: list[ArmResult] = []
    manifest: dict = {"config": config.to_dict(), "populations": {}, "phases": {}}
    for s_size in config.s_sizes:
        t0 = time.perf_counter()
        s = select_top_s_from_counts(counts, s_size)
        players, skipped = prepare_players(rows, s, config)
        if not players:
            raise ConfigError(f"no member of S (|S|={s_size}) has enough rows in the loaded data")
        t1 = time.perf_counter()
        res = run_arms_for_s(players, s, config)
        results += res
        manifest["populations"][str(s_size)] = {
            "members_present": len(players) + len(skipped),
            "models_trained": {f"{r.arm}/h{r.hidden_size}": r.models_trained for r in res},
            "skipped": skipped,
            "rows_used": int(sum(len(p.rows) for p in players.values())),
        }
        manifest["phases"][str(s_size)] = {"prepare_s": round(t1 - t0, 3),
                                           "train_s": round(time.perf_counter() - t1, 3)}
        log.info("|S|=%d: %d players trained, %d skipped", s_size, len(players), len(skipped))
    return results, manifest


# -- results files -----------------------------------------------------------------

def result_filename(r: ArmResult) -> str:
    return f"{r.arm}_s{r.s_size}_h{r.hidden_size}.csv"


def write_results(out_dir: str | Path, results: Sequence[ArmResult]) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for r in results:
        name = result_filename(r)
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["player_id", "accuracy", "n_test"])
            for pid, acc, n in r.per_player:
                w.writerow([pid, repr(float(acc)), n])
        names.append(name)
    return names


def read_results(run_dir: str | Path) -> list[ArmResult]:
    """Load every per-arm results CSV listed in the run manifest."""
    run = Path(run_dir)
    manifest = json.loads((run / "manifest.json").read_text())
    out = []
    for entry in manifest["results"]:
        r = ArmResult(entry["arm"], entry["s_size"], entry["hidden_size"])
        with open(run / entry["file"], newline="") as fh:
            for rec in csv.DictReader(fh):
                r.per_player.append((rec["player_id"], float(rec["accuracy"]), int(rec["n_test"])))
        out.append(r)
    return out


def run_dir_is_current(run: Path, fingerprint: dict) -> bool:
    mpath = run / "manifest.json"
    if not mpath.exists():
        return False
    try:
        old = json.loads(mpath.read_text())
    except json.JSONDecodeError:
        return False
    if old.get("fingerprint") != fingerprint:
        return False
    for entry in old.get("results", []):
        p = run / entry["file"]
        if not p.exists() or file_digest(p) != entry.get("digest"):
            return False
    return bool(old.get("results"))
