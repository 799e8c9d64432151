import csv

import numpy as np
import pytest

from nai.cli import ConfigError, RunConfig, main, parse_sweep, read_config
from nai.data import save_bundle, synth_sbm
from nai.classifiers import ClassifierStack

FAST = ["--k", "3", "--epochs", "15", "--patience", "5", "--lr", "0.02", "--gate-epochs", "10",
        "--gate-patience", "5", "--batch-size", "50"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "sbm.naib"
    save_bundle(synth_sbm(3, 40, 0.15, 0.01, 6, 1.5, 0), data)
    cfg = root / "run.cfg"
    cfg.write_text(f"data = {data}\nout = {root / 'out'}  # artifacts\nseed = 3\n")
    for cmd in ("precompute", "train-teacher", "distill", "train-gates"):
        assert main([cmd, "--config", str(cfg), *FAST]) == 0
    return root, cfg


def _art(root, stage, name):
    return (root / "out" / stage / name).read_bytes()


def test_artifacts_exist(run_dir):
    root, _ = run_dir
    for stage, name in [("precompute", "features.nai"), ("train-teacher", "stack.nai"),
                        ("distill", "stack.nai"), ("distill", "attention.nai"),
                        ("train-gates", "gates.nai")]:
        assert (root / "out" / stage / name).exists()
    stack = ClassifierStack.load(root / "out" / "distill" / "stack.nai")
    assert stack.complete() and stack.k == 3


def test_rerun_is_identical(run_dir):
    root, cfg = run_dir
    for cmd, stage in [("train-teacher", "train-teacher"), ("distill", "distill"),
                       ("train-gates", "train-gates")]:
        before = _art(root, stage, "gates.nai" if stage == "train-gates" else "stack.nai")
        assert main([cmd, "--config", str(cfg), *FAST]) == 0
        after = _art(root, stage, "gates.nai" if stage == "train-gates" else "stack.nai")
        assert before == after


def test_infer_and_predictions(run_dir):
    root, cfg = run_dir
    assert main(["infer", "--config", str(cfg), *FAST, "--policy", "gate"]) == 0
    rows = list(csv.DictReader(open(root / "out" / "infer" / "predictions.csv")))
    assert rows and set(rows[0]) == {"node_id", "exit_depth", "predicted_class", "max_prob"}
    assert all(1 <= int(r["exit_depth"]) <= 3 for r in rows)
    metrics = list(csv.reader(open(root / "out" / "infer" / "metrics.csv")))
    assert metrics[0] == ["method", "acc", "mmacs", "fp_mmacs", "time_ms", "fp_time_ms"]


def test_bench_sweep_writes_pareto(run_dir):
    root, cfg = run_dir
    assert main(["bench", "--config", str(cfg), *FAST, "--policy", "distance",
                 "--ts-sweep", "0:2:0.5", "--table1-mode"]) == 0
    lines = (root / "out" / "bench" / "pareto.csv").read_text().splitlines()
    assert lines[0] == "t_s,acc,fp_mmacs"
    assert [float(l.split(",")[0]) for l in lines[1:]] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert (root / "out" / "bench" / "table.txt").exists()


def test_no_multi_scale_arm(run_dir, tmp_path):
    root, cfg = run_dir
    out = tmp_path / "arm"
    (out / "train-teacher").mkdir(parents=True)
    (out / "train-teacher" / "stack.nai").write_bytes(_art(root, "train-teacher", "stack.nai"))
    assert main(["distill", "--config", str(cfg), *FAST, "--out", str(out), "--no-multi-scale"]) == 0
    stack = ClassifierStack.load(out / "distill" / "stack.nai")
    assert stack.complete()
    assert (out / "distill" / "stack.nai").read_bytes() != _art(root, "distill", "stack.nai")


def test_missing_upstream_artifact(tmp_path, run_dir):
    root, cfg = run_dir
    assert main(["distill", "--config", str(cfg), *FAST, "--out", str(tmp_path / "empty")]) == 2
    assert main(["infer", "--data", str(tmp_path / "nope.naib"), "--out", str(tmp_path)]) == 2


def test_field_level_errors(caplog):
    with pytest.raises(ConfigError, match="gamma"):
        RunConfig(data="x", gamma=2.0).validate()
    with pytest.raises(ConfigError, match="t_min/t_max"):
        RunConfig(data="x", k=3, t_min=2, t_max=1).validate()
    with pytest.raises(ConfigError, match="mode"):
        RunConfig(mode="gcn").validate()
    assert main(["infer", "--data", "x", "--lam-single", "3"]) == 2
    assert "lam_single" in caplog.text


def test_config_file_errors(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("bogus = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        read_config(p)
    p.write_text("k = seven\n")
    with pytest.raises(ConfigError, match="k"):
        read_config(p)
    p.write_text("just words\n")
    with pytest.raises(ConfigError):
        read_config(p)
    p.write_text("batch-size = 64\n")
    assert read_config(p) == {"batch_size": 64}


def test_sweep_parse():
    assert np.allclose(parse_sweep("0:0.3:0.1"), [0, 0.1, 0.2, 0.3])
    with pytest.raises(ConfigError):
        parse_sweep("0:1")
    with pytest.raises(ConfigError):
        parse_sweep("1:0:0.1")


def test_defaults_follow_flickr_column():
    cfg = RunConfig()
    assert (cfg.k, cfg.lr, cfg.wd, cfg.dropout) == (7, 0.001, 0.0, 0.3)
    assert (cfg.t_single, cfg.lam_single, cfg.t_multi, cfg.lam_multi) == (1.2, 0.6, 1.9, 0.8)
    assert cfg.batch_size == 500


def test_verify_subcommand(tmp_path):
    assert main(["verify", "--out", str(tmp_path), "--suite", "full_graph", "--suite", "stationary"]) == 0
    text = (tmp_path / "verify" / "report.txt").read_text()
    assert text.count("PASS") == 2


def test_verify_nonzero_on_failure(tmp_path, monkeypatch):
    from nai import verify
    monkeypatch.setitem(verify.SUITES, "full_graph",
                        lambda: verify.CheckResult("full_graph", False, "forced"))
    assert main(["verify", "--out", str(tmp_path), "--suite", "full_graph"]) == 1
