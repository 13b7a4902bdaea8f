"""Small builders shared by the test modules."""

import datetime as dt

import numpy as np

from stratdetect.records import MatchRecord, PlayerRow, Slot

T0 = int(dt.datetime(2016, 3, 2, 14, 0, tzinfo=dt.timezone.utc).timestamp())  # a Wednesday


def make_match(mid, players, ts=T0, mode=0, region="NA", heroes=None):
    """Ten players; the first five are team A."""
    heroes = heroes or [f"h{k}" for k in range(10)]
    slots = tuple(Slot(p, "A" if k < 5 else "B", heroes[k]) for k, p in enumerate(players))
    return MatchRecord(mid, ts, region, mode, slots)


def random_history(rng, n, pool, player="me", start=T0, tie_prob=0.1):
    """One player's rows with random teammates from ``pool`` and occasional equal timestamps."""
    rows = []
    t = start
    for i in range(n):
        if i and rng.random() >= tie_prob:
            t += int(rng.integers(60, 86400))
        mates = frozenset(rng.choice(pool, size=4, replace=False).tolist())
        rows.append(PlayerRow(player, f"m{i:05d}", t, "NA", int(rng.integers(6)),
                              f"h{int(rng.integers(5))}", mates))
    return rows


def brute_coplay(history, members):
    """Recount from scratch: fraction of strictly earlier matches with each member as a teammate."""
    out = np.zeros((len(history), len(members)))
    for i in range(len(history)):
        if i == 0:
            continue
        for j, q in enumerate(members):
            out[i, j] = sum(q in history[k].teammates for k in range(i)) / i
    return out
