"""Command line entry point: ``stratdetect {synth,ingest,features,run,report}``.

Exit codes: 0 on success, 1 for data/config errors (the message names the
offending match, player or key), 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import dump_config, load_config
from .coplay import coplay_matrix, read_cache, write_cache
from .errors import StratDetectError
from .experiment import (
    ArmResult,
    ExperimentConfig,
    prepare_players,
    read_results,
    result_filename,
    run_arms_for_s,
    run_dir_is_current,
    write_results,
)
from .features import canonical_arm
from .ingest import (
    file_digest,
    load_if_current,
    read_counts,
    run_ingest,
    select_top_s_from_counts,
    write_json_atomic,
)
from .records import ModeSet, group_by_player, read_rows, with_time_fields
from .report import DEFAULT_BIN_WIDTH, TEST_NAME, build_report
from .synth import SynthConfig, write_synth

log = logging.getLogger("stratdetect")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _modes(args) -> ModeSet | None:
    return ModeSet(tuple(args.modes)) if getattr(args, "modes", None) else None


# -- subcommands -------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SynthConfig(n_players=args.players, strategic_fraction=args.strategic_frac,
                      matches_per_player=args.matches, seed=args.seed,
                      dissent_threshold=args.dissent, n_rounds=args.rounds)
    info = write_synth(args.out, cfg, shards=args.shards)
    print(f"wrote {info['matches']} matches to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    m = run_ingest(args.input, args.out, region=args.region, min_matches=args.min_matches,
                   fraction=args.fraction, seed=args.seed, n_blocks=args.blocks, modes=_modes(args))
    print(f"{m['rows_loaded']} rows for {m['players_loaded']} players loaded "
          f"({m['players_after_filter']} players pass the filter) -> {args.out}")
    return 0


def _features_path(out: Path, s_size: int) -> Path:
    return out / f"coplay_s{s_size}.csv"


def cmd_features(args) -> int:
    data, out = Path(args.data), Path(args.out or args.data)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {name: file_digest(data / name) for name in ("rows.csv", "counts.csv")}
    names = [_features_path(out, s).name for s in args.s_sizes]
    params = {"s_sizes": args.s_sizes}
    if load_if_current(out / "features_manifest.json", params, inputs, names) is not None:
        print(f"co-play caches in {out} are current")
        return 0
    rows = read_rows(data / "rows.csv", _modes(args))
    counts = read_counts(data / "counts.csv")
    by_player = group_by_player(rows)
    for s_size in args.s_sizes:
        s = select_top_s_from_counts(counts, s_size)
        entries = []
        for pid in sorted(p for p in by_player if p in s):
            hist = with_time_fields(by_player[pid])
            cp = coplay_matrix(hist, s)
            entries.extend((pid, r.match_id, cp[i]) for i, r in enumerate(hist))
        write_cache(_features_path(out, s_size), entries)
        log.info("|S|=%d: %d co-play vectors", s_size, len(entries))
    write_json_atomic(out / "features_manifest.json", {
        "stage": "features", "params": params, "input_digests": inputs,
        "output_digests": {n: file_digest(out / n) for n in names},
    })
    print(f"wrote {', '.join(names)} to {out}")
    return 0


def _run_config(args) -> ExperimentConfig:
    overrides = {"s_sizes": args.s_sizes, "hidden_sizes": args.hidden, "epochs": args.epochs,
                 "seed": args.seed, "workers": args.workers, "batch_size": args.batch_size}
    if args.arms is not None:
        overrides["arms"] = [canonical_arm(a) for a in args.arms]
    return load_config(args.config, **overrides)


def cmd_run(args) -> int:
    t_start = time.perf_counter()
    config = _run_config(args)
    data, out = Path(args.data), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {name: file_digest(data / name) for name in ("rows.csv", "counts.csv")}
    # the worker count does not change results, so it is left out of the fingerprint
    fingerprint = {"config": {k: v for k, v in config.to_dict().items() if k != "workers"},
                   "input_digests": inputs}
    if run_dir_is_current(out, fingerprint):
        print(f"results in {out} are current, nothing to do")
        return 0

    # results already on disk from an interrupted run with the same fingerprint
    progress_path = out / "progress.json"
    done: dict[str, dict] = {}
    if progress_path.exists():
        prev = json.loads(progress_path.read_text())
        if prev.get("fingerprint") == fingerprint:
            done = {e["file"]: e for e in prev["results"]
                    if (out / e["file"]).exists() and file_digest(out / e["file"]) == e["digest"]}

    rows = read_rows(data / "rows.csv", _modes(args))
    counts = read_counts(data / "counts.csv")
    (out / "config.txt").write_text(dump_config(config))
    manifest: dict = {"stage": "run", "version": __version__, "fingerprint": fingerprint,
                      "config": config.to_dict(), "input": str(data), "input_digests": inputs,
                      "test": TEST_NAME, "populations": {}, "phases": {}, "results": []}
    entries: list[dict] = []
    for s_size in config.s_sizes:
        t0 = time.perf_counter()
        s = select_top_s_from_counts(counts, s_size)
        cache = None
        if args.features:
            cache = read_cache(_features_path(Path(args.features), s_size))
        players, skipped = prepare_players(rows, s, config, coplay_cache=cache)
        if len(players) < 2:
            raise StratDetectError(f"|S|={s_size}: only {len(players)} member(s) of S have enough "
                                   f"loaded rows; need at least 2 to compare arms")
        t1 = time.perf_counter()
        todo = [(a, h) for a in config.arms for h in config.hidden_sizes
                if result_filename(ArmResult(a, s_size, h)) not in done]
        for arm, hidden in todo:
            sub = ExperimentConfig(**{**config.to_dict(), "arms": [arm], "hidden_sizes": [hidden]})
            res = run_arms_for_s(players, s, sub)[0]
            name = write_results(out, [res])[0]
            done[name] = {"arm": arm, "s_size": s_size, "hidden_size": hidden, "file": name,
                          "digest": file_digest(out / name), "models_trained": res.models_trained}
            write_json_atomic(progress_path, {"fingerprint": fingerprint, "results": list(done.values())})
            log.info("%s |S|=%d h=%d: %d models", arm, s_size, hidden, res.models_trained)
        for arm in config.arms:
            for hidden in config.hidden_sizes:
                entries.append(done[result_filename(ArmResult(arm, s_size, hidden))])
        manifest["populations"][str(s_size)] = {
            "members_present": len(players) + len(skipped),
            "models_trained": len(players),
            "skipped": skipped,
            "rows_used": int(sum(len(p.rows) for p in players.values())),
        }
        manifest["phases"][str(s_size)] = {"prepare_s": round(t1 - t0, 3),
                                           "train_s": round(time.perf_counter() - t1, 3)}
    manifest["results"] = entries
    manifest["seconds"] = round(time.perf_counter() - t_start, 3)
    write_json_atomic(out / "manifest.json", manifest)
    progress_path.unlink(missing_ok=True)
    print(f"wrote {len(entries)} result files to {out}")
    return 0


def cmd_report(args) -> int:
    results = read_results(args.run)
    out = args.out or args.run
    info = build_report(results, out, bin_width=args.bin_width, hist_s=args.hist_s,
                        hist_hidden=args.hist_hidden, figures=not args.no_figures)
    print(f"wrote {', '.join(info['files'])} to {out}")
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stratdetect",
                                description="Detect strategic game-mode choice from match histories.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    sp = sub.add_parser("synth", help="generate synthetic matches with ground truth")
    sp.add_argument("--players", type=int, default=200)
    sp.add_argument("--strategic-frac", type=float, default=0.3)
    sp.add_argument("--matches", type=float, default=500.0, help="mean matches per player")
    sp.add_argument("--dissent", type=float, default=SynthConfig.dissent_threshold)
    sp.add_argument("--rounds", type=int, default=SynthConfig.n_rounds, help="hourly rounds to simulate")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--shards", type=int, default=1, help="split matches.csv into this many files")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("ingest", help="filter, explode and subsample match files")
    sp.add_argument("--input", required=True, help="match file or directory of *.csv / *.jsonl")
    sp.add_argument("--out", required=True)
    sp.add_argument("--region", default=None, help="default: most populous region")
    sp.add_argument("--min-matches", type=int, default=100)
    sp.add_argument("--fraction", type=float, default=0.09)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--blocks", type=int, default=100, help="player hash blocks used for subsampling")
    sp.add_argument("--modes", type=_str_list, default=None, help="six comma-separated mode labels")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("features", help="write co-play caches for each |S|")
    sp.add_argument("--data", required=True, help="ingest output directory")
    sp.add_argument("--s-sizes", type=_int_list, required=True)
    sp.add_argument("--out", default=None, help="default: the data directory")
    sp.add_argument("--modes", type=_str_list, default=None)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("run", help="train per-player networks for every arm / |S| / hidden size")
    sp.add_argument("--data", required=True, help="ingest output directory")
    sp.add_argument("--out", required=True)
    sp.add_argument("--config", default=None, help="key = value config file")
    sp.add_argument("--arms", type=_str_list, default=None)
    sp.add_argument("--s-sizes", type=_int_list, default=None)
    sp.add_argument("--hidden", type=_int_list, default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--features", default=None, help="directory with co-play caches to reuse")
    sp.add_argument("--modes", type=_str_list, default=None)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="summary tables, z-tests, histogram and figures")
    sp.add_argument("--run", required=True, help="run output directory")
    sp.add_argument("--out", default=None, help="default: the run directory")
    sp.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH)
    sp.add_argument("--hist-s", type=int, default=None)
    sp.add_argument("--hist-hidden", type=int, default=None)
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StratDetectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
