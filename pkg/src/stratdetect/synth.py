"""Synthetic match traces with known strategic structure.

Time runs in hourly rounds. In each round an agent is active with its own
probability and, when acting alone, draws a mode from its base preference
tilted by hour of day and day of week. Strategic agents belong to friend
groups that start partying at a group-specific round; a party session lasts a
geometric number of rounds, the session leader proposes its own favourite mode
for the current hour/day and members who dislike it too much leave for that
round. Matchmaking packs parties first, then solo players queued for the same
mode, into 5-player teams; unfilled slots take single-use filler ids.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .records import (
    N_MODES,
    TEAM_SIZE,
    MatchRecord,
    ModeSet,
    Slot,
    write_matches,
)

log = logging.getLogger(__name__)

DEFAULT_START = int(dt.datetime(2016, 1, 4, tzinfo=dt.timezone.utc).timestamp())
ROUND_SECONDS = 3600


@dataclass
class SynthConfig:
    n_players: int = 200
    matches_per_player: float = 500.0
    strategic_fraction: float = 0.3
    max_party_size: int = 5
    seed: int = 0
    hero_count: int = 20
    mode_count: int = N_MODES
    n_rounds: int = 2000
    activity_spread: float = 0.8
    top_mode_boost: float = 2.0
    pref_noise: float = 0.1
    hour_tilt: float = 0.4
    weekend_tilt: float = 0.0
    hero_concentration: float = 0.3
    dissent_threshold: float = 0.0
    session_mean_rounds: float = 24.0
    solo_share: float = 0.0
    partner_affinity: float = 1.0
    leader_dominance: float = 1.0
    strategic_activity: float = 2.5
    n_eras: int = 6
    pool_size: int = 10
    min_real_per_match: int = 1
    region: str = "NA"
    start_timestamp: int = DEFAULT_START
    mode_labels: tuple[str, ...] = tuple(f"M{i}" for i in range(N_MODES))

    def __post_init__(self):
        if self.n_players < 10:
            raise ConfigError("need at least 10 players")
        if not 2 <= self.max_party_size <= TEAM_SIZE:
            raise ConfigError(f"max_party_size must be in [2, {TEAM_SIZE}]")
        if self.mode_count != N_MODES:
            raise ConfigError(f"mode_count must be {N_MODES}")
        if not 0 <= self.strategic_fraction <= 1 or not 0 <= self.dissent_threshold <= 1:
            raise ConfigError("strategic_fraction and dissent_threshold must be in [0, 1]")
        if not 0 <= self.leader_dominance <= 1:
            raise ConfigError("leader_dominance must be in [0, 1]")
        if self.matches_per_player > self.n_rounds:
            raise ConfigError("matches_per_player cannot exceed n_rounds (one match per round)")
        if self.strategic_activity <= 0:
            raise ConfigError("strategic_activity must be positive")
        if self.n_eras < 1 or self.pool_size < 2:
            raise ConfigError("n_eras must be >= 1 and pool_size >= 2")
        self.mode_labels = tuple(self.mode_labels)


@dataclass
class AgentProfile:
    player_id: str
    strategic: bool
    base_preference: np.ndarray
    hour_tilt: np.ndarray  # (24, 6) additive log-preference
    day_tilt: np.ndarray  # (7, 6)
    hero_habits: np.ndarray
    activity: float
    party_affinity: dict[str, float] = field(default_factory=dict)
    dissent_threshold: float = 0.0

    def preference(self, hour: int, day: int) -> np.ndarray:
        logits = np.log(self.base_preference) + self.hour_tilt[hour] + self.day_tilt[day]
        e = np.exp(logits - logits.max())
        return e / e.sum()


@dataclass
class GroundTruth:
    strategic: dict[str, bool]
    groups: list[dict]
    sessions: list[dict]
    match_parties: dict[str, list[list[str]]]
    skipped_matches: int = 0

    def to_dict(self) -> dict:
        return {
            "strategic": self.strategic,
            "groups": self.groups,
            "sessions": self.sessions,
            "match_parties": self.match_parties,
            "skipped_matches": self.skipped_matches,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(d["strategic"], d["groups"], d["sessions"], d["match_parties"],
                   d.get("skipped_matches", 0))


def coordinate(party: Sequence[AgentProfile], proposal_mode: int) -> tuple[list[AgentProfile], int]:
    """Single proposal round; ``party[0]`` is the leader who made the proposal.

    A member stays iff its base preference for the proposal is at least
    ``dissent_threshold`` times its favourite mode's preference.
    """
    stayers = [party[0]]
    for a in party[1:]:
        bp = a.base_preference
        if bp[proposal_mode] >= a.dissent_threshold * bp.max():
            stayers.append(a)
    return stayers, proposal_mode


# -- population -------------------------------------------------------------------

def _make_agents(cfg: SynthConfig, rng: np.random.Generator) -> tuple[list[AgentProfile], list[dict]]:
    n = cfg.n_players
    width = len(str(n - 1))
    ids = [f"p{i:0{width}d}" for i in range(n)]
    base_rate = cfg.matches_per_player / cfg.n_rounds
    hours = np.arange(24)
    agents = []
    for pid in ids:
        logits = rng.normal(0.0, cfg.pref_noise, N_MODES)
        logits[rng.integers(N_MODES)] += cfg.top_mode_boost
        pref = np.exp(logits - logits.max())
        pref /= pref.sum()
        phase = rng.uniform(0, 24)
        direction = rng.normal(0.0, 1.0, N_MODES)
        hour_tilt = cfg.hour_tilt * np.cos(2 * np.pi * (hours - phase) / 24)[:, None] * direction[None, :]
        weekend = np.array([1.0, 0, 0, 0, 0, 0, 1.0])  # Sunday = 0
        day_tilt = cfg.weekend_tilt * weekend[:, None] * rng.normal(0.0, 1.0, N_MODES)[None, :]
        heroes = rng.dirichlet(np.full(cfg.hero_count, cfg.hero_concentration))
        activity = float(np.clip(base_rate * rng.lognormal(0.0, cfg.activity_spread)
                                 / np.exp(cfg.activity_spread ** 2 / 2), 0.01, 0.95))
        agents.append(AgentProfile(pid, False, pref, hour_tilt, day_tilt, heroes, activity))

    n_strat = int(round(cfg.strategic_fraction * n))
    strat = sorted(rng.choice(n, size=n_strat, replace=False).tolist()) if n_strat else []
    for i in strat:
        agents[i].strategic = True
        agents[i].dissent_threshold = cfg.dissent_threshold
    if strat and cfg.strategic_activity != 1.0:
        # people with a standing friend group play more; rescale so the population
        # mean volume stays at matches_per_player
        act = np.array([a.activity for a in agents])
        act[strat] *= cfg.strategic_activity
        act *= base_rate / act.mean()
        for a, v in zip(agents, act):
            a.activity = float(np.clip(v, 0.01, 0.95))
    # friends have similar play volume: friendship pools are cut from the activity ranking
    ranked = sorted(strat, key=lambda i: (-agents[i].activity, i))
    pools = [ranked[k:k + cfg.pool_size] for k in range(0, len(ranked), cfg.pool_size)]
    if len(pools) > 1 and len(pools[-1]) < 2:
        pools[-2].extend(pools.pop())
    bounds = np.linspace(0, cfg.n_rounds, cfg.n_eras + 1).astype(int)

    groups = []
    for era in range(1, cfg.n_eras):
        start, end = int(bounds[era]), int(bounds[era + 1]) - 1
        for pool in pools:
            order = rng.permutation(pool).tolist()
            for members in _partition(order, cfg.max_party_size, rng):
                k = len(members)
                lead = int(rng.integers(k))
                weights = [(1.0 - cfg.leader_dominance) + (cfg.leader_dominance * k if j == lead else 0.0)
                           for j in range(k)]
                for ai in members:
                    for b in members:
                        if b != ai:
                            agents[ai].party_affinity[agents[b].player_id] = cfg.partner_affinity
                # occupancy o = r*L / (1 + r*L) chosen so that session play replaces the
                # (1 - solo_share) part of the members' usual volume
                act = float(np.mean([agents[i].activity for i in members]))
                occ = min(0.95, act * (1.0 - cfg.solo_share) / cfg.partner_affinity)
                rate = occ / (cfg.session_mean_rounds * (1.0 - occ))
                groups.append({"members": [agents[i].player_id for i in members], "era": era,
                               "start_round": start, "end_round": end,
                               "leader_weights": weights, "session_rate": rate})
    return agents, groups


def _partition(order: list[int], max_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Cut ``order`` into consecutive groups of 2..max_size members."""
    out = []
    pos, remaining = 0, len(order)
    while remaining >= 2:
        k = min(int(rng.integers(2, max_size + 1)), remaining)
        if remaining - k == 1:
            k = k - 1 if k > 2 else k + 1
        out.append(order[pos:pos + k])
        pos += k
        remaining -= k
    return out


# -- matchmaking ------------------------------------------------------------------

def _pack_teams(units: list[list[int]]) -> list[list[int]]:
    """First-fit decreasing: parties are placed before solo players."""
    teams: list[list[int]] = []
    for u in sorted(units, key=len, reverse=True):
        for t in teams:
            if len(t) + len(u) <= TEAM_SIZE:
                t.extend(u)
                break
        else:
            teams.append(list(u))
    return teams


@dataclass
class _Session:
    group: int
    members: list[int]
    leader: int
    end_round: int
    index: int


def generate(cfg: SynthConfig) -> tuple[list[MatchRecord], GroundTruth, list[AgentProfile]]:
    """Simulate ``cfg.n_rounds`` rounds; returns chronologically ordered matches."""
    rng = np.random.default_rng(cfg.seed)
    agents, groups = _make_agents(cfg, rng)
    n = len(agents)
    hero_cdf = np.cumsum(np.stack([a.hero_habits for a in agents]), axis=1)
    pref_cdf = np.empty((n, 24, 7, N_MODES))
    for i, a in enumerate(agents):
        for h in range(24):
            for d in range(7):
                pref_cdf[i, h, d] = np.cumsum(a.preference(h, d))
    activity = np.array([a.activity for a in agents])
    index_of = {a.player_id: i for i, a in enumerate(agents)}
    group_members = [[index_of[p] for p in g["members"]] for g in groups]

    matches: list[MatchRecord] = []
    sessions_log: list[dict] = []
    match_parties: dict[str, list[list[str]]] = {}
    active_sessions: dict[int, _Session] = {}
    skipped = 0
    n_filler = 0
    mid_width = 8

    for rnd in range(cfg.n_rounds):
        t0 = cfg.start_timestamp + rnd * ROUND_SECONDS
        when = dt.datetime.fromtimestamp(t0, tz=dt.timezone.utc)
        hour, day = when.hour, (when.weekday() + 1) % 7

        # sessions: end expired ones, maybe start new ones
        for g in [g for g, ss in active_sessions.items() if ss.end_round < rnd]:
            del active_sessions[g]
        live = [g for g in range(len(groups))
                if groups[g]["start_round"] <= rnd <= groups[g]["end_round"]]
        for g in live:
            if g in active_sessions or rng.random() >= groups[g]["session_rate"]:
                continue
            members = group_members[g]
            initiator = members[int(rng.integers(len(members)))]
            party = [initiator] + [m for m in members if m != initiator
                                   and rng.random() < agents[initiator].party_affinity[agents[m].player_id]]
            if len(party) < 2:
                continue
            w = np.array([groups[g]["leader_weights"][members.index(m)] for m in party])
            leader = party[int(rng.choice(len(party), p=w / w.sum()))]
            length = int(rng.geometric(1.0 / cfg.session_mean_rounds))
            end = min(rnd + length - 1, groups[g]["end_round"])
            active_sessions[g] = _Session(g, party, leader, end, len(sessions_log))
            sessions_log.append({"group": g, "start_round": rnd, "end_round": end,
                                 "party": [agents[m].player_id for m in party],
                                 "leader": agents[leader].player_id})

        # session members all play this round; outside sessions an agent with a
        # live friend group plays solo at a reduced rate
        rate = activity.copy()
        for g in live:
            rate[group_members[g]] *= cfg.solo_share
        active = rng.random(n) < rate
        units_by_mode: dict[int, list[list[int]]] = {m: [] for m in range(N_MODES)}
        party_units: list[tuple[int, list[int]]] = []
        for sess in active_sessions.values():
            active[sess.members] = True
            proposal = int(np.argmax(agents[sess.leader].preference(hour, day)))
            others = [agents[m] for m in sess.members if m != sess.leader]
            stayers, mode = coordinate([agents[sess.leader]] + others, proposal)
            if len(stayers) < 2:
                continue  # everyone left: all play solo this round
            stay_idx = [index_of[a.player_id] for a in stayers]
            active[stay_idx] = False
            units_by_mode[mode].append(stay_idx)
            party_units.append((mode, stay_idx))
        solos = np.flatnonzero(active)
        u = rng.random(len(solos))
        modes = (u[:, None] > pref_cdf[solos, hour, day]).sum(axis=1)
        modes = np.minimum(modes, N_MODES - 1)
        for i, m in zip(solos.tolist(), modes.tolist()):
            units_by_mode[m].append([i])

        for mode in range(N_MODES):
            units = units_by_mode[mode]
            if not units:
                continue
            order = rng.permutation(len(units))
            teams = _pack_teams([units[k] for k in order])
            if len(teams) % 2:
                teams.append([])
            for k in range(0, len(teams), 2):
                pair = (teams[k], teams[k + 1])
                if sum(len(t) for t in pair) < cfg.min_real_per_match:
                    skipped += 1
                    log.debug("round %d mode %d: match skipped, too few players", rnd, mode)
                    continue
                mid = f"m{len(matches):0{mid_width}d}"
                slots = []
                for team_label, team in zip("AB", pair):
                    for i in team:
                        hero = int(min(np.searchsorted(hero_cdf[i], rng.random(), side="right"),
                                       cfg.hero_count - 1))
                        slots.append(Slot(agents[i].player_id, team_label, f"h{hero:02d}"))
                    for _ in range(TEAM_SIZE - len(team)):
                        slots.append(Slot(f"f{n_filler:07d}", team_label,
                                          f"h{int(rng.integers(cfg.hero_count)):02d}"))
                        n_filler += 1
                ts = t0 + int(rng.integers(ROUND_SECONDS))
                matches.append(MatchRecord(mid, ts, cfg.region, mode, tuple(slots)))
                rosters = [[agents[i].player_id for i in pu] for md, pu in party_units
                           if md == mode and pu[0] in pair[0] + pair[1]]
                if rosters:
                    match_parties[mid] = rosters

    matches.sort(key=lambda m: (m.timestamp, m.match_id))
    truth = GroundTruth(
        strategic={a.player_id: a.strategic for a in agents},
        groups=groups,
        sessions=sessions_log,
        match_parties=match_parties,
        skipped_matches=skipped,
    )
    if skipped:
        log.info("synth: %d matches skipped for lack of players", skipped)
    return matches, truth, agents


def write_synth(out_dir: str | Path, cfg: SynthConfig, *, shards: int = 1) -> dict:
    """Generate and write ``matches.csv`` (or ``matches-XXX.csv`` shards) and ``ground_truth.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matches, truth, _ = generate(cfg)
    modes = ModeSet(cfg.mode_labels)
    if shards <= 1:
        write_matches(out / "matches.csv", matches, modes)
    else:
        per = -(-len(matches) // shards)
        for k in range(shards):
            write_matches(out / f"matches-{k:03d}.csv", matches[k * per:(k + 1) * per], modes)
    gt = truth.to_dict()
    gt["config"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(cfg).items()}
    (out / "ground_truth.json").write_text(json.dumps(gt, sort_keys=True) + "\n")
    return {"matches": len(matches), "strategic": sum(truth.strategic.values()),
            "sessions": len(truth.sessions), "skipped_matches": truth.skipped_matches}
