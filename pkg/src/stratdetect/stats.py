"""Aggregation of per-network accuracies: means, 95% intervals, z-tests, deltas."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AggregationError

Z_CRIT = 1.96


@dataclass(frozen=True)
class SummaryRow:
    s_size: int
    hidden_size: int
    arm: str
    mean_accuracy: float
    ci_halfwidth: float
    n: int

    @property
    def se(self) -> float:
        return self.ci_halfwidth / Z_CRIT


@dataclass(frozen=True)
class Comparison:
    arm_a: str
    arm_b: str
    z: float
    significant: bool
    paired_deltas: tuple[float, ...] | None = None

    @property
    def better(self) -> bool:
        """Significant with arm_b ahead."""
        return self.significant and self.z > 0


def summarize_values(values: Sequence[float], *, s_size: int = 0, hidden_size: int = 0,
                     arm: str = "") -> SummaryRow:
    a = np.asarray(values, dtype=float)
    if len(a) < 2:
        raise AggregationError(f"need at least 2 accuracies to summarise {arm!r}, got {len(a)}")
    sd = float(a.std(ddof=1))
    return SummaryRow(s_size, hidden_size, arm, float(a.mean()), Z_CRIT * sd / math.sqrt(len(a)), len(a))


def summarize(result) -> SummaryRow:
    """Mean and normal-approximation 95% half-width of an ArmResult's accuracies."""
    return summarize_values([acc for _, acc, _ in result.per_player], s_size=result.s_size,
                            hidden_size=result.hidden_size, arm=result.arm)


def z_test(a: SummaryRow, b: SummaryRow) -> Comparison:
    """Unpooled two-sample z statistic for mean_b - mean_a, two-tailed at 0.05."""
    if a.n < 2 or b.n < 2:
        raise AggregationError("z-test needs n >= 2 on both sides")
    se = math.sqrt(a.se ** 2 + b.se ** 2)
    diff = b.mean_accuracy - a.mean_accuracy
    if se == 0.0:
        z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        z = diff / se
    return Comparison(a.arm, b.arm, z, abs(z) > Z_CRIT)


def paired_deltas(a, b) -> list[tuple[str, float]]:
    """Per-player accuracy_b - accuracy_a, sorted by player id."""
    acc_a = {pid: acc for pid, acc, _ in a.per_player}
    acc_b = {pid: acc for pid, acc, _ in b.per_player}
    if set(acc_a) != set(acc_b):
        raise AggregationError("paired deltas need identical player sets")
    return [(pid, acc_b[pid] - acc_a[pid]) for pid in sorted(acc_a)]


def paired_z(deltas: Sequence[float]) -> float:
    d = np.asarray(deltas, dtype=float)
    if len(d) < 2:
        raise AggregationError("paired z needs n >= 2")
    sd = d.std(ddof=1)
    if sd <= 1e-12 * max(1.0, abs(d.mean())):  # identical deltas up to rounding
        return 0.0 if d.mean() == 0 else math.copysign(math.inf, d.mean())
    return float(d.mean() / (sd / math.sqrt(len(d))))


def two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value (pct=0 gives the min)."""
    v = sorted(values)
    if not v:
        raise AggregationError("percentile of an empty list")
    if not 0 <= pct <= 100:
        raise ValueError("pct must be in [0, 100]")
    rank = max(1, math.ceil(round(pct / 100 * len(v), 9)))
    return v[rank - 1]


def quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    return nearest_rank(values, 25), nearest_rank(values, 50), nearest_rank(values, 75)


def histogram(deltas: Sequence[float], bin_width: float) -> list[tuple[float, int]]:
    """Counts in half-open bins [k*w, (k+1)*w), contiguous from the lowest to the highest bin used."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    d = np.asarray(deltas, dtype=float)
    if len(d) == 0:
        return []
    # rounding keeps values that sit on a bin edge (e.g. 0.06 / 0.02) in the upper bin
    k = np.floor(np.round(d / bin_width, 9)).astype(np.int64)
    lo, hi = int(k.min()), int(k.max())
    counts = np.bincount(k - lo, minlength=hi - lo + 1)
    return [(round((lo + i) * bin_width, 12), int(c)) for i, c in enumerate(counts)]
