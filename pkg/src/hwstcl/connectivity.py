"""Reliability-refined per-window adjacency construction.

Pipeline per window: Pearson correlation, Fisher-z, off-diagonal min-max
scaling, threshold, then elementwise attenuation by a centroid-distance
kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_io import BoldSeries, CentroidTable, Cohort, WindowConfig, common_window_length, window_split
from .spectral import EPS_FFT, NodeFeatureMatrix, node_features

RHO_CLAMP = 1.0 - 1e-7
EPS_MINMAX = 1e-8


@dataclass
class GraphBuildConfig:
    tau: float = 0.44
    eps_minmax: float = EPS_MINMAX
    rho_clamp: float = RHO_CLAMP
    eps_fft: float = EPS_FFT
    use_distance_prior: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.tau < 1.0:
            raise ValueError(f"tau must lie in [0, 1), got {self.tau}")
        if not 0.0 < self.rho_clamp < 1.0:
            raise ValueError(f"rho_clamp must lie in (0, 1), got {self.rho_clamp}")


@dataclass
class DistancePrior:
    D: np.ndarray
    sigma_mm: float

    @classmethod
    def bypass(cls, n: int) -> "DistancePrior":
        """All-ones prior (the infinite-scale limit)."""
        return cls(np.ones((n, n)), float("inf"))


@dataclass
class WindowGraph:
    X_t: NodeFeatureMatrix
    A_t: np.ndarray
    window_index: int  # 1-based


@dataclass
class SubjectGraphs:
    """Stacked window graphs of one subject: X (T, N, d) and A (T, N, N)."""

    subject_id: str
    label: int
    X: np.ndarray
    A: np.ndarray

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]


def pearson_matrix(segment) -> np.ndarray:
    """ROI-by-ROI Pearson correlation of an S x N segment.

    A zero-variance column correlates 0 with every other column.
    """
    x = np.asarray(segment, dtype=np.float64)
    S = x.shape[0]
    if S < 3:
        raise ValueError(f"Pearson correlation needs at least 3 samples, got {S}")
    xc = x - x.mean(axis=0)
    norms = np.sqrt((xc * xc).sum(axis=0))
    scale = np.abs(x).max(axis=0) * np.sqrt(S)
    flat = norms <= 1e-12 * np.maximum(scale, np.finfo(float).tiny)
    safe = np.where(flat, 1.0, norms)
    z = xc / safe
    z[:, flat] = 0.0
    rho = np.clip(z.T @ z, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return rho


def fisher_z(rho, rho_clamp: float = RHO_CLAMP) -> np.ndarray:
    r = np.clip(np.asarray(rho, dtype=np.float64), -rho_clamp, rho_clamp)
    return np.arctanh(r)


def _offdiag(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def window_minmax(c, eps_minmax: float = EPS_MINMAX) -> np.ndarray:
    """Min-max scale the off-diagonal entries; the diagonal is set to 0."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    if n < 2:
        raise ValueError("need at least 2 ROIs")
    off = _offdiag(n)
    vals = c[off]
    cmin, cmax = vals.min(), vals.max()
    out = np.zeros_like(c)
    out[off] = (vals - cmin) / (cmax - cmin + eps_minmax)
    return out


def sparsify(c_tilde, tau: float) -> np.ndarray:
    c_tilde = np.asarray(c_tilde, dtype=np.float64)
    out = np.where(c_tilde >= tau, c_tilde, 0.0)
    np.fill_diagonal(out, 0.0)
    return out


def distance_prior(centroids: CentroidTable) -> DistancePrior:
    r = centroids.coords
    n = r.shape[0]
    if n < 2:
        raise ValueError("need at least 2 centroids")
    d = np.sqrt(((r[:, None, :] - r[None, :, :]) ** 2).sum(axis=-1))
    sigma = float(np.median(d[np.triu_indices(n, k=1)]))
    if sigma <= 0.0:
        raise ValueError("median centroid distance is zero; centroids are degenerate")
    return DistancePrior(np.exp(-d / sigma), sigma)


def window_adjacency(segment, prior: DistancePrior | None, gcfg: GraphBuildConfig) -> np.ndarray:
    c = fisher_z(pearson_matrix(segment), gcfg.rho_clamp)
    a_hat = sparsify(window_minmax(c, gcfg.eps_minmax), gcfg.tau)
    if prior is None or not gcfg.use_distance_prior:
        return a_hat
    return a_hat * prior.D


def build_window_graphs(b: BoldSeries, prior: DistancePrior | None, cfg: WindowConfig,
                        gcfg: GraphBuildConfig) -> list[WindowGraph]:
    out = []
    for t, seg in enumerate(window_split(b, cfg), start=1):
        feats = node_features(seg, cfg, b.tr_seconds, gcfg.eps_fft)
        out.append(WindowGraph(feats, window_adjacency(seg, prior, gcfg), t))
    return out


def stack_graphs(b: BoldSeries, graphs: list[WindowGraph]) -> SubjectGraphs:
    X = np.stack([g.X_t.X for g in graphs])
    A = np.stack([g.A_t for g in graphs])
    return SubjectGraphs(b.subject_id, b.label, X, A)


@dataclass
class CohortGraphs:
    subjects: list[SubjectGraphs]
    S: int
    bin_freqs_hz: np.ndarray
    sigma_mm: float

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=np.int64)

    @property
    def d(self) -> int:
        return int(self.bin_freqs_hz.size)

    def subset(self, index) -> "CohortGraphs":
        return CohortGraphs([self.subjects[i] for i in index], self.S, self.bin_freqs_hz,
                            self.sigma_mm)


def build_cohort_graphs(cohort: Cohort, wcfg: WindowConfig, gcfg: GraphBuildConfig) -> CohortGraphs:
    """Window graphs for every subject using a cohort-common window length."""
    gcfg.validate()
    S = wcfg.S if wcfg.S is not None else common_window_length(cohort, wcfg.T)
    cfg = WindowConfig(wcfg.T, S, wcfg.band_low_hz, wcfg.band_high_hz)
    cfg.validate(cohort.subjects[0].tr_seconds)
    prior = distance_prior(cohort.centroids) if gcfg.use_distance_prior else None
    subjects, freqs = [], None
    for b in cohort.subjects:
        graphs = build_window_graphs(b, prior, cfg, gcfg)
        freqs = graphs[0].X_t.bin_freqs_hz
        subjects.append(stack_graphs(b, graphs))
    sigma = prior.sigma_mm if prior is not None else float("inf")
    return CohortGraphs(subjects, S, freqs, sigma)
