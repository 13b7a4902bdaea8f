"""Acceptance checks, one test per criterion.

Each test prints a single ``CRITERION <n> PASS|FAIL: ...`` line (run with
``pytest -s tests/test_acceptance.py`` to see them) and then asserts. The
synthetic detection checks (5-7) train a few thousand small networks and take
a few minutes on one core.
"""

import math
import random

import numpy as np
import pytest

from stratdetect import mlp
from stratdetect.cli import main
from stratdetect.coplay import coplay_matrix
from stratdetect.experiment import ExperimentConfig, prepare_players, run_arms_for_s
from stratdetect.ingest import PopulationFilter, PopulationS, filter_rows, match_counts, select_top_s_from_counts
from stratdetect.records import explode_match
from stratdetect.stats import SummaryRow, paired_deltas, summarize, summarize_values, z_test
from stratdetect.synth import SynthConfig, generate

from helpers import brute_coplay, random_history
from table1 import COMBINED_MARKED, COPLAY_MARKED, ROWS
from test_mlp import max_rel_error


def verdict(n, ok, detail):
    print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


# -- synthetic detection runs (criteria 5-7) ---------------------------------------

S_SIZE = 50
DETECT = dict(n_players=200, strategic_fraction=0.3, matches_per_player=500)


def detection_run(seed, strategic_fraction=0.3, hidden_sizes=(40,)):
    """synth -> filter -> top-|S| -> baseline and combined arms, all loaded (no subsampling)."""
    cfg = SynthConfig(seed=seed, **{**DETECT, "strategic_fraction": strategic_fraction})
    matches, truth, _ = generate(cfg)
    rows = filter_rows((r for m in matches for r in explode_match(m)), PopulationFilter(100, cfg.region))
    s = select_top_s_from_counts(match_counts(rows), S_SIZE)
    ec = ExperimentConfig(s_sizes=[S_SIZE], hidden_sizes=list(hidden_sizes), arms=["baseline", "combined"],
                          seed=seed)
    players, _ = prepare_players(rows, s, ec)
    results = {(r.arm, r.hidden_size): r for r in run_arms_for_s(players, s, ec)}
    out = {}
    for h in hidden_sizes:
        b, c = results[("baseline", h)], results[("combined", h)]
        sb, sc = summarize(b), summarize(c)
        deltas = paired_deltas(b, c)
        strat = [d for p, d in deltas if truth.strategic[p]]
        indep = [d for p, d in deltas if not truth.strategic[p]]
        out[h] = {"baseline": sb.mean_accuracy, "combined": sc.mean_accuracy, "cmp": z_test(sb, sc),
                  "strategic": strat, "independent": indep}
    return out


# -- criteria ----------------------------------------------------------------------

def test_criterion_1_table1_significance():
    wrong = []
    for s_size, n, hidden, base, coplay, combined in ROWS:
        b = SummaryRow(s_size, hidden, "baseline", *base, n)
        for arm, cell, marked in (("combined", combined, COMBINED_MARKED), ("coplay_only", coplay, COPLAY_MARKED)):
            got = z_test(b, SummaryRow(s_size, hidden, arm, *cell, n)).better
            if got != ((s_size, hidden) in marked):
                wrong.append((arm, s_size, hidden))
    ok = verdict(1, not wrong, f"36 Table 1 markings, {36 - len(wrong)} reproduced"
                 + (f"; mismatches {wrong}" if wrong else ""))
    assert ok


def test_criterion_2_gradients():
    worst = 0.0
    for case in range(20):
        rng = np.random.default_rng(1000 + case)
        d = int(rng.integers(1, 11))
        model = mlp.init(d, [0, 4, 8][case % 3], seed=case)
        for k in model.params:
            model.params[k] += rng.normal(0, 0.1, model.params[k].shape)
        X = rng.normal(size=(6, d))
        y = rng.integers(0, 6, size=6)
        worst = max(worst, max_rel_error(model, X, y))
    ok = verdict(2, worst < 1e-4, f"20 models, max relative error {worst:.2e} (limit 1e-4)")
    assert ok


def test_criterion_3_optimizer_and_loss():
    # hand trace for one weight, lr 0.001, betas 0.9/0.999, eps 1e-7
    def trace(w, gs):
        m = v = 0.0
        for t, g in enumerate(gs, 1):
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            w -= 0.001 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-7)
        return w

    errs = []
    for gs in ([0.5], [0.5, -0.2]):
        model = mlp.init(1, 0, seed=0, output_dim=1)
        model.params["W2"][:] = 1.0
        state = mlp.AdamState()
        for g in gs:
            mlp.adam_step(model, {"W2": np.array([[g]]), "b2": np.zeros(1)}, state)
        errs.append(abs(model.params["W2"][0, 0] - trace(1.0, gs)))

    zero = mlp.init(3, 2, seed=0)
    for k in zero.params:
        zero.params[k][:] = 0.0
    loss, _ = mlp.loss_and_grad(zero, np.ones((4, 3)), np.array([0, 1, 2, 5]))
    rows = mlp.softmax(np.random.default_rng(0).normal(0, 20, size=(200, 6))).sum(axis=1)
    ok = verdict(3, max(errs) < 1e-10 and abs(loss - math.log(6)) < 1e-9 and np.all(np.abs(rows - 1) < 1e-9),
                 f"Adam 1/2-step error {max(errs):.1e}, uniform loss - ln 6 = {loss - math.log(6):.1e}, "
                 f"softmax row error {np.max(np.abs(rows - 1)):.1e}")
    assert ok


def test_criterion_4_coplay_oracle():
    rng = np.random.default_rng(4)
    bad = 0
    for _ in range(100):
        s_size = int(rng.integers(1, 51))
        pool = [f"q{k}" for k in range(s_size + 10)]
        members = tuple(rng.choice(pool, s_size, replace=False).tolist())
        hist = random_history(rng, int(rng.integers(1, 201)), pool)
        bad += not np.array_equal(coplay_matrix(hist, PopulationS(members)), brute_coplay(hist, members))
    ok = verdict(4, bad == 0, f"100 random histories, {100 - bad} exact at every prefix")
    assert ok


@pytest.mark.slow
def test_criterion_5_detection_power():
    runs = [detection_run(seed)[40] for seed in range(10)]
    sig = sum(r["cmp"].better for r in runs)
    medians = sum(np.median(r["strategic"]) > np.median(r["independent"]) for r in runs)
    zs = ", ".join(f"{r['cmp'].z:.2f}" for r in runs)
    ok = verdict(5, sig >= 8 and medians >= 9,
                 f"combined significantly better in {sig}/10 (need 8), strategic median delta above "
                 f"independent in {medians}/10 (need 9); z = [{zs}]")
    assert ok


@pytest.mark.slow
def test_criterion_6_null_calibration():
    runs = [detection_run(seed, strategic_fraction=0.0)[40] for seed in range(20)]
    sig = sum(r["cmp"].significant for r in runs)
    ok = verdict(6, sig <= 3, f"significant in {sig}/20 null runs (limit 3); "
                 f"max |z| {max(abs(r['cmp'].z) for r in runs):.2f}")
    assert ok


@pytest.mark.slow
def test_criterion_7_table1_shape():
    hidden = (0, 10, 40, 160, 640, 1280)
    res = detection_run(0, hidden_sizes=hidden)
    ge = [h for h in hidden if res[h]["combined"] >= res[h]["baseline"]]
    up_b = res[40]["baseline"] > res[10]["baseline"]
    up_c = res[40]["combined"] > res[10]["combined"]
    table = "; ".join(f"h{h} {res[h]['baseline']:.3f}/{res[h]['combined']:.3f}" for h in hidden)
    ok = verdict(7, len(ge) == len(hidden) and up_b and up_c,
                 f"combined >= baseline at {len(ge)}/{len(hidden)} sizes, 10->40 gain baseline {up_b} "
                 f"combined {up_c}; baseline/combined {table}")
    assert ok


def test_criterion_8_determinism(tmp_path):
    def pipeline(root):
        assert main(["synth", "--players", "60", "--matches", "200", "--rounds", "800", "--seed", "5",
                     "--out", str(root / "syn")]) == 0
        assert main(["ingest", "--input", str(root / "syn"), "--out", str(root / "ing"),
                     "--min-matches", "100", "--fraction", "1.0"]) == 0
        assert main(["run", "--data", str(root / "ing"), "--out", str(root / "run"), "--s-sizes", "10",
                     "--hidden", "0,10"]) == 0
        assert main(["report", "--run", str(root / "run"), "--no-figures"]) == 0
        return [(root / "run" / f).read_bytes() for f in ("summary.csv", "histogram.csv")]

    a, b = pipeline(tmp_path / "a"), pipeline(tmp_path / "b")
    ok = verdict(8, a == b, "summary.csv and histogram.csv byte-identical across two full pipeline runs"
                 if a == b else "outputs differ between identical runs")
    assert ok


def test_criterion_9_null_rate():
    rng = random.Random(9)
    hits = 0
    for _ in range(200):
        a = [rng.uniform(0.4, 0.9) for _ in range(50)]
        b = [rng.uniform(0.4, 0.9) for _ in range(50)]
        hits += z_test(summarize_values(a), summarize_values(b)).significant
    rate = hits / 200
    ok = verdict(9, abs(rate - 0.05) <= 0.03, f"significance rate {rate:.3f} over 200 null pairs (0.05 ± 0.03)")
    assert ok
