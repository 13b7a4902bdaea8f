import json

import pytest

from stratdetect.cli import main
from stratdetect.records import write_matches

from helpers import make_match


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert main(["run", "--bogus"]) == 2


def test_unknown_subcommand():
    assert main(["frobnicate"]) == 2


def test_bad_match_is_data_error(tmp_path, capsys):
    src = tmp_path / "in"
    src.mkdir()
    write_matches(src / "m.csv", [make_match("m-bad", [f"p{k}" for k in range(10)])])
    text = (src / "m.csv").read_text().splitlines()
    text[1] = text[1].replace("p9", "p0")
    (src / "m.csv").write_text("\n".join(text) + "\n")
    assert main(["ingest", "--input", str(src), "--out", str(tmp_path / "o"), "--min-matches", "1"]) == 1
    assert "m-bad" in capsys.readouterr().err


def test_bad_config_is_data_error(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("hidden = 3\n")
    (tmp_path / "d").mkdir()
    for name in ("rows.csv", "counts.csv"):
        (tmp_path / "d" / name).write_text("x\n")
    assert main(["run", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "r"),
                 "--config", str(tmp_path / "c.cfg")]) == 1
    assert "hidden" in capsys.readouterr().err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    syn, ing, run = root / "syn", root / "ing", root / "run"
    assert main(["synth", "--players", "40", "--matches", "150", "--rounds", "600", "--seed", "3",
                 "--out", str(syn)]) == 0
    assert main(["ingest", "--input", str(syn), "--out", str(ing), "--min-matches", "50",
                 "--fraction", "1.0"]) == 0
    assert main(["features", "--data", str(ing), "--s-sizes", "8"]) == 0
    assert main(["run", "--data", str(ing), "--out", str(run), "--s-sizes", "8", "--hidden", "0,10",
                 "--features", str(ing)]) == 0
    assert main(["report", "--run", str(run)]) == 0
    return root


def test_pipeline_outputs(pipeline):
    run = pipeline / "run"
    manifest = json.loads((run / "manifest.json").read_text())
    assert len(manifest["results"]) == 6
    assert manifest["config"]["split_fractions"] == [0.8, 0.1, 0.1]
    assert manifest["populations"]["8"]["models_trained"] == 8
    for name in ("summary.csv", "comparisons.csv", "histogram.csv", "histogram.png", "accuracy_vs_hidden.png"):
        assert (run / name).exists()
    lines = (run / "summary.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("s_size,models_trained,hidden_size")


def test_rerun_is_noop(pipeline, capsys):
    run = pipeline / "run"
    stamp = (run / "manifest.json").stat().st_mtime_ns
    assert main(["run", "--data", str(pipeline / "ing"), "--out", str(run), "--s-sizes", "8",
                 "--hidden", "0,10", "--features", str(pipeline / "ing")]) == 0
    assert "nothing to do" in capsys.readouterr().out
    assert (run / "manifest.json").stat().st_mtime_ns == stamp
    assert main(["features", "--data", str(pipeline / "ing"), "--s-sizes", "8"]) == 0
    assert "current" in capsys.readouterr().out


def test_cache_and_recount_agree(pipeline, tmp_path):
    other = tmp_path / "run2"
    assert main(["run", "--data", str(pipeline / "ing"), "--out", str(other), "--s-sizes", "8",
                 "--hidden", "0,10"]) == 0
    for f in json.loads((pipeline / "run" / "manifest.json").read_text())["results"]:
        assert (other / f["file"]).read_bytes() == (pipeline / "run" / f["file"]).read_bytes()


def test_resume_after_interruption(pipeline, tmp_path):
    run = tmp_path / "resume"
    args = ["run", "--data", str(pipeline / "ing"), "--out", str(run), "--s-sizes", "8", "--hidden", "0,10"]
    assert main(args) == 0
    manifest = json.loads((run / "manifest.json").read_text())
    # pretend the run stopped after the first two result files
    progress = {"fingerprint": manifest["fingerprint"], "results": manifest["results"][:2]}
    (run / "progress.json").write_text(json.dumps(progress))
    (run / "manifest.json").unlink()
    first = run / manifest["results"][0]["file"]
    stamp = first.stat().st_mtime_ns
    assert main(args) == 0
    assert first.stat().st_mtime_ns == stamp
    assert json.loads((run / "manifest.json").read_text())["results"] == manifest["results"]
    assert not (run / "progress.json").exists()
