"""Two-stage optimisation, evaluation, and the cross-validation harness."""
from __future__ import annotations

import copy
import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .connectivity import CohortGraphs, SubjectGraphs
from .hwcl import HwclConfig
from .metrics import METRICS, MetricsReport, compute_metrics, summarize
from .model import HWSTCLModel, ModelConfig
from .optim import AdamW, clip_grad_norm
from .readout import bce

log = logging.getLogger(__name__)


@dataclass
class StageConfig:
    lr: float
    weight_decay: float
    epochs: int
    batch_size: int = 16
    clip_norm: float | None = 5.0  # global gradient-norm cap; None disables


@dataclass
class TrainConfig:
    stage1: StageConfig = field(default_factory=lambda: StageConfig(9e-4, 6e-6, 40, 16))
    stage2: StageConfig = field(default_factory=lambda: StageConfig(2e-3, 4e-5, 120, 16))
    lambda_hw: float = 0.1
    pretrain: bool = True
    pretrain_scope: str = "fold"  # "fold" (train split only) or "global"
    seed: int = 0
    folds: int = 10
    repeats: int = 10
    threshold: float = 0.5


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _subjects(data) -> list[SubjectGraphs]:
    return list(data.subjects) if isinstance(data, CohortGraphs) else list(data)


def cohort_hwcl(model: HWSTCLModel, data, hwcl_cfg: HwclConfig, batch_size: int = 64) -> float:
    """Subject-averaged contrastive loss over a whole cohort (no gradients)."""
    subjects = _subjects(data)
    total = 0.0
    with ad.no_grad():
        for i in range(0, len(subjects), batch_size):
            chunk = subjects[i:i + batch_size]
            batch = model.make_batch(chunk)
            loss, _, _ = model.contrastive(model.encode(batch), batch, hwcl_cfg)
            total += loss.item() * len(chunk)
    return total / len(subjects)


def pretrain_stage1(data, model: HWSTCLModel, hwcl_cfg: HwclConfig, stage: StageConfig,
                    rng: np.random.Generator) -> list[dict]:
    """Optimise encoder and kernel on the contrastive loss alone; returns per-epoch logs."""
    subjects = _subjects(data)
    if not subjects:
        raise ValueError("cannot pretrain on an empty cohort")
    opt = AdamW(model.encoder_parameters(), stage.lr, stage.weight_decay)
    logs = []
    for epoch in range(1, stage.epochs + 1):
        sums = np.zeros(3)
        for idx in _batches(len(subjects), stage.batch_size, rng):
            batch = model.make_batch([subjects[i] for i in idx])
            total, pos, neg = model.contrastive(model.encode(batch), batch, hwcl_cfg)
            opt.zero_grad()
            total.backward()
            if stage.clip_norm:
                clip_grad_norm(opt.params, stage.clip_norm)
            opt.step()
            sums += len(idx) * np.array([pos.item(), neg.item(), total.item()])
        sums /= len(subjects)
        logs.append({"epoch": epoch, "l_pos": sums[0], "l_neg": sums[1], "total": sums[2],
                     "alpha": model.kernel.alpha, "beta": model.kernel.beta})
    model.trained_stage = max(getattr(model, "trained_stage", 0), 1)
    return logs


def stage2_loss(model: HWSTCLModel, batch, hwcl_cfg: HwclConfig, lambda_hw: float,
                rng: np.random.Generator | None = None, training: bool = True):
    """``(total, classification, contrastive)``; the contrastive term is None when lambda_hw is 0."""
    Z = model.encode(batch)
    probs = ad.sigmoid(model.logits(Z, batch, training=training, rng=rng))
    l_cls = bce(probs, batch.labels)
    if lambda_hw == 0.0:
        return l_cls, l_cls, None
    l_hw, _, _ = model.contrastive(Z, batch, hwcl_cfg)
    return ad.add(l_cls, ad.mul(lambda_hw, l_hw)), l_cls, l_hw


def train_stage2(data, model: HWSTCLModel, hwcl_cfg: HwclConfig, tcfg: TrainConfig,
                 rng: np.random.Generator, dropout_rng: np.random.Generator) -> list[dict]:
    """Jointly refine encoder, kernel and readout; returns per-step logs."""
    subjects = _subjects(data)
    stage = tcfg.stage2
    opt = AdamW(model.parameters(), stage.lr, stage.weight_decay)
    logs = []
    step = 0
    for epoch in range(1, stage.epochs + 1):
        for idx in _batches(len(subjects), stage.batch_size, rng):
            batch = model.make_batch([subjects[i] for i in idx])
            total, l_cls, l_hw = stage2_loss(model, batch, hwcl_cfg, tcfg.lambda_hw, dropout_rng)
            opt.zero_grad()
            total.backward()
            if stage.clip_norm:
                clip_grad_norm(opt.params, stage.clip_norm)
            opt.step()
            step += 1
            logs.append({"epoch": epoch, "step": step, "l_cls": l_cls.item(),
                         "l_hwcl": l_hw.item() if l_hw is not None else 0.0,
                         "lambda_hw": tcfg.lambda_hw, "total": total.item()})
    model.trained_stage = 2
    return logs


def evaluate(model: HWSTCLModel, data, threshold: float = 0.5) -> MetricsReport:
    subjects = _subjects(data)
    if not subjects:
        raise ValueError("evaluation needs at least one subject")
    probs = model.predict_proba(subjects)
    return compute_metrics(probs, [s.label for s in subjects], threshold)


def stratified_folds(labels, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Partition subject indices into ``k`` class-balanced test folds."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("need at least 2 folds")
    if labels.size < k:
        raise ValueError(f"cohort of {labels.size} subjects is smaller than folds={k}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("both classes must be present for cross-validation")
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in classes])
    assign = np.empty(labels.size, dtype=np.int64)
    assign[order] = np.arange(labels.size) % k
    return [np.flatnonzero(assign == f) for f in range(k)]


def seed_streams(seed: int, repeat: int, fold: int):
    ss = np.random.SeedSequence([seed, repeat, fold])
    return [np.random.default_rng(s) for s in ss.spawn(4)]


@dataclass
class FoldResult:
    repeat: int
    fold: int
    report: MetricsReport
    state: dict
    stage1_log: list[dict]
    stage2_log: list[dict]
    test_ids: list[str] = field(default_factory=list)


def fit_model(train: Sequence[SubjectGraphs], d_in: int, mcfg: ModelConfig, hwcl_cfg: HwclConfig,
              tcfg: TrainConfig, seed_key: tuple[int, int, int],
              pretrained: dict | None = None) -> tuple[HWSTCLModel, list[dict], list[dict]]:
    init_rng, pre_rng, shuf_rng, drop_rng = seed_streams(*seed_key)
    model = HWSTCLModel(d_in, mcfg, init_rng)
    model.trained_stage = 0
    s1 = []
    if pretrained is not None:
        model.load_state_dict(pretrained, strict=False)
        model.trained_stage = 1
    elif tcfg.pretrain:
        s1 = pretrain_stage1(train, model, hwcl_cfg, tcfg.stage1, pre_rng)
    s2 = train_stage2(train, model, hwcl_cfg, tcfg, shuf_rng, drop_rng)
    return model, s1, s2


def _run_fold(args) -> FoldResult:
    graphs, train_idx, test_idx, mcfg, hwcl_cfg, tcfg, repeat, fold, pretrained = args
    train = [graphs.subjects[i] for i in train_idx]
    test = [graphs.subjects[i] for i in test_idx]
    model, s1, s2 = fit_model(train, graphs.d, mcfg, hwcl_cfg, tcfg, (tcfg.seed, repeat, fold),
                              pretrained)
    report = evaluate(model, test, tcfg.threshold)
    log.info("repeat %d fold %d acc=%.3f auc=%.3f", repeat, fold, report.acc, report.auc)
    return FoldResult(repeat, fold, report, model.state_dict(), s1, s2,
                      [s.subject_id for s in test])


def worker_count() -> int:
    env = os.environ.get("HWSTCL_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, cap)


@dataclass
class CVResult:
    folds: list[FoldResult]
    summary: dict
    model_config: dict

    @property
    def reports(self) -> list[MetricsReport]:
        return [f.report for f in self.folds]


def cross_validate(graphs: CohortGraphs, mcfg: ModelConfig, hwcl_cfg: HwclConfig,
                   tcfg: TrainConfig, workers: int | None = None,
                   pretrained: dict | None = None) -> CVResult:
    """Stratified subject-level k-fold CV repeated ``tcfg.repeats`` times.

    Fold assignment and weight initialisation are reseeded from
    ``(seed, repeat)`` and ``(seed, repeat, fold)`` respectively. A
    ``pretrained`` encoder state, when given, replaces stage 1 in every fold.
    """
    labels = graphs.labels
    if np.unique(labels).size < 2:
        raise ValueError("both classes must be present for cross-validation")
    jobs = []
    for r in range(tcfg.repeats):
        fold_rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, r, 10_000]))
        folds = stratified_folds(labels, tcfg.folds, fold_rng)
        shared = pretrained
        if shared is None and tcfg.pretrain and tcfg.pretrain_scope == "global":
            init_rng, pre_rng, _, _ = seed_streams(tcfg.seed, r, 999_999)
            base = HWSTCLModel(graphs.d, mcfg, init_rng)
            pretrain_stage1(graphs, base, hwcl_cfg, tcfg.stage1, pre_rng)
            # only encoder + kernel carry over; each fold starts its readout fresh
            shared = {k: v.data.copy() for k, v in base.encoder_parameters().items()}
        for f, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(len(labels)), test_idx)
            jobs.append((graphs, train_idx, test_idx, mcfg, hwcl_cfg, tcfg, r, f, shared))
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    model_cfg = {"d_in": graphs.d, **copy.deepcopy(vars(mcfg))}
    return CVResult(results, summarize([r.report for r in results]), model_cfg)


# -- persistence ----------------------------------------------------------


def save_model(path, state: dict, model_config: dict, stage: int) -> None:
    """Write ``path`` (tensor container) and ``path.json`` (architecture + stage)."""
    path = Path(path)
    blob = dict(state)
    blob["meta.stage"] = np.array(float(stage))
    checkpoint.save(path, blob)
    Path(str(path) + ".json").write_text(json.dumps(model_config, indent=2, sort_keys=True) + "\n")


def load_model(path) -> HWSTCLModel:
    path = Path(path)
    cfg = json.loads(Path(str(path) + ".json").read_text())
    d_in = cfg.pop("d_in")
    model = HWSTCLModel(d_in, ModelConfig(**cfg), np.random.default_rng(0))
    blob = checkpoint.load(path)
    stage = int(blob.pop("meta.stage", np.array(0.0)))
    model.load_state_dict(blob)
    model.trained_stage = stage
    return model


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])


def write_cv_run(run_dir, result: CVResult, config: dict) -> None:
    """Write config.json, metrics.csv, summary.json, folds.json, checkpoints/ and logs/."""
    run = Path(run_dir)
    (run / "checkpoints").mkdir(parents=True, exist_ok=True)
    (run / "logs").mkdir(exist_ok=True)
    (run / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    rows = [{"repeat": f.repeat, "fold": f.fold, **f.report.as_row()} for f in result.folds]
    write_csv(run / "metrics.csv", rows)
    (run / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    folds = [{"repeat": f.repeat, "fold": f.fold, "test_ids": f.test_ids} for f in result.folds]
    (run / "folds.json").write_text(json.dumps(folds, indent=2) + "\n")
    for f in result.folds:
        tag = f"r{f.repeat:02d}_f{f.fold:02d}"
        save_model(run / "checkpoints" / f"{tag}.hwst", f.state, result.model_config, 2)
        write_csv(run / "logs" / f"stage1_{tag}.csv", f.stage1_log)
        write_csv(run / "logs" / f"stage2_{tag}.csv", f.stage2_log)


__all__ = [
    "StageConfig", "TrainConfig", "pretrain_stage1", "train_stage2", "stage2_loss", "evaluate",
    "stratified_folds", "cross_validate", "fit_model", "save_model", "load_model",
    "write_cv_run", "write_csv", "cohort_hwcl", "CVResult", "FoldResult", "METRICS",
]
