"""Binary classification metrics with explicit undefined-value handling."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

METRICS = ("acc", "sen", "spec", "f1", "auc")


@dataclass
class MetricsReport:
    acc: float
    sen: float
    spec: float
    f1: float
    auc: float
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0
    scores: list[float] = field(default_factory=list, repr=False)
    labels: list[int] = field(default_factory=list, repr=False)

    def as_row(self) -> dict:
        d = asdict(self)
        d.pop("scores")
        d.pop("labels")
        return d


def _ratio(num: float, den: float) -> float:
    return num / den if den else math.nan


def auc_score(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def compute_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if scores.size == 0:
        raise ValueError("no scores to evaluate")
    pred = (scores >= threshold).astype(int)
    tp = int(((pred == 1) & (labels == 1)).sum())
    fn = int(((pred == 0) & (labels == 1)).sum())
    tn = int(((pred == 0) & (labels == 0)).sum())
    fp = int(((pred == 1) & (labels == 0)).sum())
    return MetricsReport(
        acc=(tp + tn) / labels.size,
        sen=_ratio(tp, tp + fn),
        spec=_ratio(tn, tn + fp),
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        auc=auc_score(scores, labels),
        tp=tp, fn=fn, tn=tn, fp=fp,
        scores=scores.tolist(), labels=labels.tolist(),
    )


def summarize(reports: list[MetricsReport]) -> dict[str, dict[str, float]]:
    """Mean and sample standard deviation of each metric, ignoring undefined values."""
    out = {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports], dtype=np.float64)
        vals = vals[~np.isnan(vals)]
        out[m] = {
            "mean": float(vals.mean()) if vals.size else math.nan,
            "std": float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else math.nan),
            "n": int(vals.size),
        }
    return out
