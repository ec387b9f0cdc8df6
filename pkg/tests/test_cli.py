import json

import pytest
from click.testing import CliRunner

from hwstcl.cli import main

FAST = ["--profile", "desk", "--folds", "2", "--repeats", "1", "--stage1-epochs", "1",
        "--stage2-epochs", "2", "--set", "model.hidden=4", "--set", "model.embed_dim=4",
        "--set", "model.gru_hidden=4", "--set", "model.cheb_hidden=4"]


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohort")
    r = run("synth", "--seed", 7, "--n-subjects", 8, "--rois", 5, "--out", out)
    assert r.exit_code == 0, r.output
    return out


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--seed", 7, "--n-subjects", 4, "--rois", 4, "--out", tmp_path / name).exit_code == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_binary(tmp_path):
    r = run("synth", "--seed", 1, "--n-subjects", 4, "--rois", 4, "--binary", "--out", tmp_path)
    assert r.exit_code == 0
    assert (tmp_path / "cohort.hwst").read_bytes()[:4] == b"HWST"


def test_graphs_writes_csvs_and_sidecar(cohort, tmp_path):
    r = run("graphs", "--cohort", cohort, "--T", 4, "--out", tmp_path)
    assert r.exit_code == 0, r.output
    side = json.loads((tmp_path / "graphs.json").read_text())
    assert side["T"] == 4 and side["S"] == 60 and side["tau"] == 0.44
    assert side["d"] == len(side["bin_freqs_hz"])
    assert (tmp_path / "sub-0000" / "adjacency_t04.csv").is_file()
    assert (tmp_path / "sub-0000" / "features_t01.csv").is_file()


def test_train_eval_saliency_round(cohort, tmp_path):
    r = run("train", "--cohort", cohort, *FAST, "--out", tmp_path / "run")
    assert r.exit_code == 0, r.output
    assert set(json.loads(r.output.strip().splitlines()[-1])) == {"acc", "sen", "spec", "f1", "auc"}
    ck = tmp_path / "run" / "checkpoints" / "r00_f00.hwst"
    r = run("eval", "--checkpoint", ck, "--cohort", cohort)
    assert r.exit_code == 0, r.output
    assert "acc" in json.loads(r.output)
    r = run("saliency", "--run-dir", tmp_path / "run", "--out", tmp_path / "sal", "--top-rois", 3)
    assert r.exit_code == 0, r.output
    assert len(json.loads(r.output)["top_rois"]) == 3
    assert (tmp_path / "sal" / "top_edges.csv").is_file()


def test_train_reproduces_metrics(cohort, tmp_path):
    for name in ("a", "b"):
        assert run("train", "--cohort", cohort, *FAST, "--out", tmp_path / name).exit_code == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    # the recorded config replays the same run
    r = run("train", "--config", tmp_path / "a" / "config.json", "--out", tmp_path / "c")
    assert r.exit_code == 0, r.output
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "c" / "metrics.csv").read_bytes()


def test_train_lambda_zero(cohort, tmp_path):
    r = run("train", "--cohort", cohort, *FAST, "--lambda-hw", 0, "--no-pretrain", "--out", tmp_path)
    assert r.exit_code == 0, r.output
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["train"]["lambda_hw"] == 0 and cfg["train"]["pretrain"] is False
    log = (tmp_path / "logs" / "stage2_r00_f00.csv").read_text().splitlines()
    header = log[0].split(",")
    assert all(float(row.split(",")[header.index("l_hwcl")]) == 0.0 for row in log[1:])
    assert (tmp_path / "logs" / "stage1_r00_f00.csv").read_text() == ""


def test_pretrain_then_train(cohort, tmp_path):
    r = run("pretrain", "--cohort", cohort, *FAST, "--out", tmp_path / "pre")
    assert r.exit_code == 0, r.output
    ck = tmp_path / "pre" / "pretrained.hwst"
    assert (tmp_path / "pre" / "logs" / "stage1.csv").is_file()
    r = run("train", "--cohort", cohort, *FAST, "--pretrained", ck, "--out", tmp_path / "run")
    assert r.exit_code == 0, r.output
    # stage-1 checkpoints cannot be evaluated
    r = CliRunner().invoke(main, ["eval", "--checkpoint", str(ck), "--cohort", str(cohort)])
    assert r.exit_code == 2
    assert "stage-2" in r.output


def test_eval_without_checkpoint_names_field():
    r = CliRunner().invoke(main, ["eval"])
    assert r.exit_code == 2
    assert "checkpoint" in r.output


def test_invalid_config_names_field(cohort):
    r = CliRunner().invoke(main, ["train", "--cohort", str(cohort), "--tau", "1.5"])
    assert r.exit_code == 2
    assert "graph.tau" in r.output
    r = CliRunner().invoke(main, ["train", "--cohort", str(cohort), "--set", "model.width=3"])
    assert r.exit_code == 2
    assert "model.width" in r.output


def test_missing_cohort_and_unknown_flag(tmp_path):
    r = CliRunner().invoke(main, ["train"])
    assert r.exit_code == 2 and "paths.cohort" in r.output
    r = CliRunner().invoke(main, ["train", "--cohort", str(tmp_path / "nope")])
    assert r.exit_code == 2 and "does not exist" in r.output
    r = CliRunner().invoke(main, ["train", "--frobnicate"])
    assert r.exit_code == 2


def test_sweep_rows(cohort, tmp_path):
    r = run("sweep", "--param", "tau", "--grid", "0,0.99", "--cohort", cohort, *FAST,
            "--out", tmp_path)
    assert r.exit_code == 0, r.output
    lines = (tmp_path / "sweep_tau.csv").read_text().splitlines()
    assert lines[0] == "param,value,acc_mean,acc_std,f1_mean,f1_std,auc_mean,auc_std,mean_edges"
    assert len(lines) == 3
    edges = [float(line.split(",")[-1]) for line in lines[1:]]
    assert edges[0] > edges[1]


def test_schema_flag():
    r = run("--schema")
    assert r.exit_code == 0
    assert "properties" in json.loads(r.output)
