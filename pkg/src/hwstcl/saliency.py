"""Gradient saliency of the classifier logit over window adjacency entries."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .connectivity import CohortGraphs, SubjectGraphs
from .training import write_csv


class UntrainedModelError(RuntimeError):
    pass


@dataclass
class SaliencyReport:
    edge_scores: np.ndarray  # (N, N), symmetric, nonnegative, zero diagonal
    roi_scores: np.ndarray  # (N,), row sums of edge_scores
    top_edges: list[tuple[int, int, float]]
    top_rois: list[tuple[int, float]]
    n_subjects: int

    def edge_rows(self) -> list[dict]:
        return [{"rank": r + 1, "roi_i": i, "roi_j": j, "score": s}
                for r, (i, j, s) in enumerate(self.top_edges)]

    def roi_rows(self) -> list[dict]:
        return [{"rank": r + 1, "roi": i, "score": s} for r, (i, s) in enumerate(self.top_rois)]


def rank_edges(S: np.ndarray, k: int) -> list[tuple[int, int, float]]:
    """Upper-triangle edges by score descending, ties broken by (i, j)."""
    i, j = np.triu_indices(S.shape[0], k=1)
    order = np.lexsort((j, i, -S[i, j]))[:k]
    return [(int(i[o]), int(j[o]), float(S[i[o], j[o]])) for o in order]


def rank_rois(scores: np.ndarray, k: int) -> list[tuple[int, float]]:
    idx = np.arange(scores.size)
    order = np.lexsort((idx, -scores))[:k]
    return [(int(o), float(scores[o])) for o in order]


def _edge_gradients(model, subjects: Sequence[SubjectGraphs], absolute: bool):
    """Per-subject (N, N) window sums of d logit / d A_t[i, j], plus the logits."""
    batch = model.make_batch(subjects, full_pattern=True)
    op = batch.op
    leaf = Tensor(op.spatial_values.data.copy(), requires_grad=True)
    op.spatial_values = leaf
    logits = model.logits(model.encode(batch), batch, training=False)
    (g,) = ad.grad(ad.sum(logits), [leaf])
    if absolute:
        g = np.abs(g)
    b, t, i, j = op.spatial_index
    out = np.zeros((op.B, op.N, op.N))
    np.add.at(out, (b, i, j), g)
    return out, logits.data


def _model_scores(model, subjects, absolute: bool, correct_only: bool, batch_size: int):
    N, T = subjects[0].N, subjects[0].T
    acc = np.zeros((N, N))
    used = 0
    for s in range(0, len(subjects), batch_size):
        chunk = subjects[s:s + batch_size]
        grads, logits = _edge_gradients(model, chunk, absolute)
        keep = np.ones(len(chunk), dtype=bool)
        if correct_only:
            keep = (logits > 0).astype(int) == np.array([c.label for c in chunk])
        acc += grads[keep].sum(axis=0)
        used += int(keep.sum())
    return acc / (used * T) if used else None


def saliency_pairs(pairs, *, top_edges: int = 15, top_rois: int = 10, absolute: bool = True,
                   correct_only: bool = False, batch_size: int = 32) -> SaliencyReport:
    """Saliency averaged over ``(model, subjects)`` pairs, e.g. fold models on their test splits.

    Each pair contributes the mean over its subjects and windows of
    |d logit / d A_t[i, j]|. With ``absolute=False`` signed gradients are
    averaged and the magnitude taken at the end. ``correct_only`` keeps only
    subjects the pair's model classifies correctly.
    """
    pairs = [(m, list(d.subjects) if isinstance(d, CohortGraphs) else list(d)) for m, d in pairs]
    if not pairs:
        raise ValueError("saliency needs at least one model")
    if any(not subs for _, subs in pairs):
        raise ValueError("saliency needs at least one subject per model")
    for m, _ in pairs:
        if getattr(m, "trained_stage", 0) < 2:
            raise UntrainedModelError(
                "model has no stage-2 training record; load a trained checkpoint first")
    N = pairs[0][1][0].N
    per_model = [sc for sc in (_model_scores(m, subs, absolute, correct_only, batch_size)
                               for m, subs in pairs) if sc is not None]
    S = np.mean(per_model, axis=0) if per_model else np.zeros((N, N))
    S = np.abs(S)
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 0.0)
    roi = S.sum(axis=1)
    n_subjects = len({s.subject_id for _, subs in pairs for s in subs})
    return SaliencyReport(S, roi, rank_edges(S, top_edges), rank_rois(roi, top_rois), n_subjects)


def saliency(models, data, **kwargs) -> SaliencyReport:
    """Saliency of one model, or the average of several, over the same subjects."""
    models = list(models) if isinstance(models, (list, tuple)) else [models]
    return saliency_pairs([(m, data) for m in models], **kwargs)


def hit_rate(report: SaliencyReport, planted: Sequence[int], k: int | None = None) -> float:
    """Fraction of ``planted`` ROIs among the top ``k`` (default ``len(planted)``) ROIs."""
    planted = set(int(p) for p in planted)
    if not planted:
        raise ValueError("planted ROI set is empty")
    k = len(planted) if k is None else k
    top = {i for i, _ in rank_rois(report.roi_scores, k)}
    return len(top & planted) / len(planted)


def write_report(report: SaliencyReport, out_dir) -> None:
    """Write edge_scores.csv (full matrix), top_edges.csv and top_rois.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = report.edge_scores.shape[0]
    write_csv(out / "edge_scores.csv",
              [{"roi_i": i, "roi_j": j, "score": float(report.edge_scores[i, j])}
               for i in range(n) for j in range(n)])
    write_csv(out / "top_edges.csv", report.edge_rows())
    write_csv(out / "top_rois.csv", report.roi_rows())
