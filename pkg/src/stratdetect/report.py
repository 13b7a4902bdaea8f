"""Tables and figures from finished runs.

``summary.csv`` has one row per (|S|, hidden size) with each arm's mean
accuracy and 95% half-width, plus a marker column per non-baseline arm that is
``*`` when that arm is significantly better than the baseline. Numbers are
written with a fixed number of decimals so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AggregationError
from .experiment import ArmResult
from .features import ARMS
from .stats import Z_CRIT, histogram, paired_deltas, paired_z, quartiles, summarize, two_sided_p, z_test

log = logging.getLogger(__name__)

BASELINE = "baseline"
DEFAULT_BIN_WIDTH = 0.02
TEST_NAME = "unpooled two-sample z (se = halfwidth / 1.96), two-tailed"


def _fmt(x: float, nd: int = 6) -> str:
    if not np.isfinite(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.{nd}f}"
    return "0." + "0" * nd if s == "-0." + "0" * nd else s


def _index(results: Sequence[ArmResult]) -> dict[tuple[str, int, int], ArmResult]:
    idx = {}
    for r in results:
        key = (r.arm, r.s_size, r.hidden_size)
        if key in idx:
            raise AggregationError(f"duplicate result for {key}")
        idx[key] = r
    return idx


def _arms_present(results: Sequence[ArmResult]) -> list[str]:
    present = {r.arm for r in results}
    return [a for a in ARMS if a in present]


def comparison_rows(results: Sequence[ArmResult]) -> list[dict]:
    """Every non-baseline arm against the baseline at each (|S|, hidden size)."""
    idx = _index(results)
    rows = []
    for (arm, s_size, hidden), res in sorted(idx.items(), key=lambda kv: (kv[0][1], kv[0][2], ARMS.index(kv[0][0]))):
        if arm == BASELINE or (BASELINE, s_size, hidden) not in idx:
            continue
        base = idx[(BASELINE, s_size, hidden)]
        sa, sb = summarize(base), summarize(res)
        cmp = z_test(sa, sb)
        deltas = [d for _, d in paired_deltas(base, res)]
        q25, q50, q75 = quartiles(deltas)
        rows.append({
            "s_size": s_size, "hidden_size": hidden, "arm_a": BASELINE, "arm_b": arm,
            "n_a": sa.n, "n_b": sb.n,
            "mean_a": sa.mean_accuracy, "mean_b": sb.mean_accuracy,
            "z": cmp.z, "p_value": two_sided_p(cmp.z), "significant": cmp.significant,
            "better": cmp.better, "paired_z": paired_z(deltas),
            "delta_p25": q25, "delta_p50": q50, "delta_p75": q75,
        })
    return rows


def write_summary(path: str | Path, results: Sequence[ArmResult]) -> None:
    idx = _index(results)
    arms = _arms_present(results)
    cells = sorted({(s, h) for _, s, h in idx})
    marked = [a for a in arms if a != BASELINE and BASELINE in arms]
    header = ["s_size", "models_trained", "hidden_size"]
    for a in arms:
        header += [f"{a}_mean", f"{a}_ci"]
    header += [f"{a}_better" for a in marked]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s_size, hidden in cells:
            summaries = {a: summarize(idx[(a, s_size, hidden)]) for a in arms if (a, s_size, hidden) in idx}
            trained = max(sm.n for sm in summaries.values())
            row = [s_size, trained, hidden]
            for a in arms:
                sm = summaries.get(a)
                row += [_fmt(sm.mean_accuracy), _fmt(sm.ci_halfwidth)] if sm else ["", ""]
            for a in marked:
                if a in summaries and BASELINE in summaries:
                    row.append("*" if z_test(summaries[BASELINE], summaries[a]).better else "")
                else:
                    row.append("")
            w.writerow(row)


def write_comparisons(path: str | Path, rows: Sequence[dict]) -> None:
    cols = ["s_size", "hidden_size", "arm_a", "arm_b", "n_a", "n_b", "mean_a", "mean_b", "z",
            "p_value", "significant", "better", "paired_z", "delta_p25", "delta_p50", "delta_p75", "test"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            out = []
            for c in cols:
                v = TEST_NAME if c == "test" else r[c]
                if isinstance(v, bool):
                    v = "1" if v else "0"
                elif isinstance(v, float):
                    v = _fmt(v)
                out.append(v)
            w.writerow(out)


def pick_histogram_cell(results: Sequence[ArmResult], s_size: int | None = None,
                        hidden_size: int | None = None) -> tuple[int, int]:
    """Default cell for the delta histogram: the largest |S| and 40 hidden units if present."""
    cells = {(r.s_size, r.hidden_size) for r in results if r.arm == BASELINE} & \
            {(r.s_size, r.hidden_size) for r in results if r.arm == "combined"}
    if not cells:
        raise AggregationError("histogram needs baseline and combined results for the same cell")
    if s_size is None:
        s_size = max(s for s, _ in cells)
    hiddens = sorted(h for s, h in cells if s == s_size)
    if not hiddens:
        raise AggregationError(f"no baseline/combined pair at |S|={s_size}")
    if hidden_size is None:
        hidden_size = 40 if 40 in hiddens else hiddens[0]
    if (s_size, hidden_size) not in cells:
        raise AggregationError(f"no baseline/combined pair at |S|={s_size}, hidden {hidden_size}")
    return s_size, hidden_size


def write_histogram(path: str | Path, bins: Sequence[tuple[float, int]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lower", "count"])
        for lower, count in bins:
            w.writerow([_fmt(lower), count])


# -- figures -------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


_PNG_META = {"Software": None}


def plot_histogram(path: str | Path, bins: Sequence[tuple[float, int]], bin_width: float,
                   title: str) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    lows = [b for b, _ in bins]
    ax.bar(lows, [c for _, c in bins], width=bin_width, align="edge", color="0.35", edgecolor="white")
    ax.axvline(0.0, color="k", lw=0.8, ls=":")
    ax.set_xlabel("combined accuracy - baseline accuracy")
    ax.set_ylabel("networks")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_accuracy_vs_hidden(path: str | Path, results: Sequence[ArmResult]) -> None:
    plt = _pyplot()
    idx = _index(results)
    s_sizes = sorted({s for _, s, _ in idx})
    arms = _arms_present(results)
    fig, axes = plt.subplots(1, len(s_sizes), figsize=(4.0 * len(s_sizes), 3.4), squeeze=False, sharey=True)
    for ax, s_size in zip(axes[0], s_sizes):
        for k, arm in enumerate(arms):
            hs = sorted(h for a, s, h in idx if a == arm and s == s_size)
            if not hs:
                continue
            sms = [summarize(idx[(arm, s_size, h)]) for h in hs]
            x = np.arange(len(hs)) + (k - (len(arms) - 1) / 2) * 0.08
            ax.errorbar(x, [m.mean_accuracy for m in sms], yerr=[m.ci_halfwidth for m in sms],
                        marker="o", ms=4, capsize=2, lw=1, label=arm)
            ax.set_xticks(np.arange(len(hs)))
            ax.set_xticklabels([str(h) for h in hs])
        ax.set_title(f"|S| = {s_size}", fontsize=10)
        ax.set_xlabel("hidden units")
    axes[0][0].set_ylabel(f"mean test accuracy (±{Z_CRIT} se)")
    axes[0][-1].legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def build_report(results: Sequence[ArmResult], out_dir: str | Path, *, bin_width: float = DEFAULT_BIN_WIDTH,
                 hist_s: int | None = None, hist_hidden: int | None = None, figures: bool = True) -> dict:
    """Write summary.csv, comparisons.csv, histogram.csv and (optionally) PNG figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_summary(out / "summary.csv", results)
    comps = comparison_rows(results)
    write_comparisons(out / "comparisons.csv", comps)
    written = ["summary.csv", "comparisons.csv"]

    info: dict = {"files": written}
    try:
        s_size, hidden = pick_histogram_cell(results, hist_s, hist_hidden)
    except AggregationError as exc:
        if hist_s is not None or hist_hidden is not None:
            raise
        log.warning("no histogram: %s", exc)
        return info
    idx = _index(results)
    deltas = [d for _, d in paired_deltas(idx[(BASELINE, s_size, hidden)], idx[("combined", s_size, hidden)])]
    bins = histogram(deltas, bin_width)
    write_histogram(out / "histogram.csv", bins)
    written.append("histogram.csv")
    info["histogram_cell"] = {"s_size": s_size, "hidden_size": hidden, "bin_width": bin_width}
    if figures:
        plot_histogram(out / "histogram.png", bins, bin_width,
                       f"|S| = {s_size}, {hidden} hidden units, n = {len(deltas)}")
        plot_accuracy_vs_hidden(out / "accuracy_vs_hidden.png", results)
        written += ["histogram.png", "accuracy_vs_hidden.png"]
    return info
