import numpy as np
import pytest

from hwstcl.config import desk_profile
from hwstcl.experiments import (SWEEP_COLUMNS, ablation_configs, build_graphs, cv_saliency,
                                mean_edge_count, run_cv, sweep)
from hwstcl.signal_io import synth_cohort


@pytest.fixture(scope="module")
def cohort():
    return synth_cohort(2, 8, 5, 240, effect_strength=0.8)


@pytest.fixture(scope="module")
def base():
    return desk_profile(**{"train.folds": 2, "train.stage1.epochs": 1, "train.stage2.epochs": 2,
                           "model.hidden": 4, "model.cheb_hidden": 4, "model.embed_dim": 4,
                           "model.gru_hidden": 4, "window.T": 4})


def test_single_point_sweep_equals_plain_run(cohort, base):
    rows = sweep("lambda_hw", [0.1], cohort, base, workers=1)
    res = run_cv(cohort, base, workers=1)
    assert len(rows) == 1
    assert list(rows[0]) == list(SWEEP_COLUMNS)
    assert rows[0]["acc_mean"] == res.summary["acc"]["mean"]
    assert rows[0]["auc_std"] == res.summary["auc"]["std"]


def test_sweep_row_count_and_edge_order(cohort, base):
    rows = sweep("tau", [0.0, 0.5, 0.99], cohort, base, workers=1)
    assert [r["value"] for r in rows] == [0.0, 0.5, 0.99]
    edges = [r["mean_edges"] for r in rows]
    assert edges[0] > edges[1] > edges[2]


def test_sweep_over_window_count(cohort, base):
    rows = sweep("T", [2, 4], cohort, base, workers=1)
    assert len(rows) == 2


def test_sweep_errors(cohort, base):
    with pytest.raises(ValueError):
        sweep("tau", [], cohort, base)
    with pytest.raises(ValueError):
        sweep("hidden", [1], cohort, base)


def test_mean_edge_count(cohort, base):
    g = build_graphs(cohort, base)
    manual = np.mean([np.count_nonzero(s.A) / 2 / s.T for s in g.subjects])
    assert mean_edge_count(g) == manual


def test_ablation_variants(base):
    v = ablation_configs(base)
    assert set(v) == {"full", "prior_bypass", "decoupled", "no_hwcl"}
    assert v["prior_bypass"].graph.use_distance_prior is False
    assert v["decoupled"].model.joint_temporal is False
    assert v["no_hwcl"].train.lambda_hw == 0 and v["no_hwcl"].train.pretrain is False
    assert v["full"] == base


def test_cv_saliency_uses_test_splits(cohort, base):
    g = build_graphs(cohort, base)
    res = run_cv(g, base, workers=1)
    rep = cv_saliency(res, g, base)
    assert rep.n_subjects == len(g)
    assert rep.edge_scores.shape == (5, 5)
