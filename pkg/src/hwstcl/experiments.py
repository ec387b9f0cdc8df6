"""Config-driven runs: graph building, cross-validation, sweeps and ablations."""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .config import RunConfig
from .connectivity import CohortGraphs, build_cohort_graphs
from .model import HWSTCLModel, ModelConfig
from .saliency import saliency_pairs
from .signal_io import Cohort
from .training import CVResult, cross_validate

log = logging.getLogger(__name__)

SWEEP_PARAMS = {"T": "window.T", "tau": "graph.tau", "lambda_hw": "train.lambda_hw"}
SWEEP_COLUMNS = ("param", "value", "acc_mean", "acc_std", "f1_mean", "f1_std",
                 "auc_mean", "auc_std", "mean_edges")


def build_graphs(cohort: Cohort, cfg: RunConfig) -> CohortGraphs:
    return build_cohort_graphs(cohort, cfg.window_config(), cfg.graph_config())


def mean_edge_count(graphs: CohortGraphs) -> float:
    """Average number of undirected edges per window graph."""
    counts = [np.count_nonzero(s.A) / 2.0 / s.T for s in graphs.subjects]
    return float(np.mean(counts))


def run_cv(cohort_or_graphs, cfg: RunConfig, workers: int | None = None) -> CVResult:
    graphs = cohort_or_graphs
    if isinstance(graphs, Cohort):
        graphs = build_graphs(graphs, cfg)
    return cross_validate(graphs, cfg.model_config_(), cfg.hwcl_config(), cfg.train_config(),
                          workers=workers)


def sweep(param: str, grid: Sequence, cohort: Cohort, base: RunConfig,
          workers: int | None = None) -> list[dict]:
    """One full cross-validation per grid value of ``param``; the rest of ``base`` is fixed."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    rows = []
    graphs = None
    for value in grid:
        cfg = base.with_overrides({SWEEP_PARAMS[param]: value})
        # graphs only depend on windowing and graph settings
        if graphs is None or param != "lambda_hw":
            graphs = build_graphs(cohort, cfg)
        res = run_cv(graphs, cfg, workers)
        s = res.summary
        rows.append({"param": param, "value": value,
                     "acc_mean": s["acc"]["mean"], "acc_std": s["acc"]["std"],
                     "f1_mean": s["f1"]["mean"], "f1_std": s["f1"]["std"],
                     "auc_mean": s["auc"]["mean"], "auc_std": s["auc"]["std"],
                     "mean_edges": mean_edge_count(graphs)})
        log.info("sweep %s=%s acc=%.3f", param, value, s["acc"]["mean"])
    return rows


def ablation_configs(base: RunConfig) -> dict[str, RunConfig]:
    """The full model and its three single-component removals."""
    return {
        "full": base,
        "prior_bypass": base.with_overrides({"graph.use_distance_prior": False}),
        "decoupled": base.with_overrides({"model.joint_temporal": False}),
        "no_hwcl": base.with_overrides({"train.lambda_hw": 0.0, "train.pretrain": False}),
    }


def fold_models(result: CVResult, graphs: CohortGraphs, repeat: int | None = None):
    """``(model, test subjects)`` pairs rebuilt from a CV result (last repeat by default)."""
    cfg = dict(result.model_config)
    d_in = cfg.pop("d_in")
    mcfg = ModelConfig(**cfg)
    repeat = max(f.repeat for f in result.folds) if repeat is None else repeat
    by_id = {s.subject_id: s for s in graphs.subjects}
    pairs = []
    for f in result.folds:
        if f.repeat != repeat:
            continue
        m = HWSTCLModel(d_in, mcfg, np.random.default_rng(0))
        m.load_state_dict(f.state)
        m.trained_stage = 2
        pairs.append((m, [by_id[i] for i in f.test_ids]))
    return pairs


def cv_saliency(result: CVResult, graphs: CohortGraphs, cfg: RunConfig):
    """Saliency of each final-repeat fold model on its own test split, averaged."""
    sc = cfg.saliency
    return saliency_pairs(fold_models(result, graphs), top_edges=sc.top_edges,
                          top_rois=sc.top_rois, absolute=sc.absolute,
                          correct_only=sc.correct_only)
