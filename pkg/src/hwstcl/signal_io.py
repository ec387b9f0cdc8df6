"""Cohort ingestion, windowing, and synthetic cohort generation."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint

log = logging.getLogger(__name__)

DEFAULT_TR = 2.0
DEFAULT_MIN_TIMEPOINTS = 230


class CohortError(ValueError):
    pass


class ShortScanError(CohortError):
    pass


class RoiMismatchError(CohortError):
    pass


@dataclass
class BoldSeries:
    subject_id: str
    label: int
    signal: np.ndarray  # (M, N)
    tr_seconds: float = DEFAULT_TR

    def __post_init__(self):
        self.signal = np.ascontiguousarray(self.signal, dtype=np.float64)
        if self.signal.ndim != 2 or self.signal.shape[1] < 2:
            raise CohortError(f"{self.subject_id}: signal must be M x N with N >= 2")
        if self.label not in (0, 1):
            raise CohortError(f"{self.subject_id}: label must be 0 or 1, got {self.label!r}")
        if not self.tr_seconds > 0:
            raise CohortError(f"{self.subject_id}: tr_seconds must be positive")

    @property
    def n_timepoints(self) -> int:
        return self.signal.shape[0]

    @property
    def n_rois(self) -> int:
        return self.signal.shape[1]


@dataclass
class CentroidTable:
    coords: np.ndarray  # (N, 3) MNI mm

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise CohortError(f"centroids must be N x 3, got {self.coords.shape}")

    @property
    def n_rois(self) -> int:
        return self.coords.shape[0]


@dataclass
class WindowConfig:
    """Non-overlapping windowing and the retained frequency band.

    ``S`` is the points per window; when ``None`` it is derived from the
    shortest scan in a cohort via :func:`common_window_length`.
    """

    T: int = 8
    S: int | None = None
    band_low_hz: float = 0.01
    band_high_hz: float = 0.10

    def validate(self, tr_seconds: float) -> None:
        if self.T < 1:
            raise CohortError("T must be a positive integer")
        if self.S is not None and self.S < 1:
            raise CohortError("S must be a positive integer")
        nyquist = 0.5 / tr_seconds
        if not 0 < self.band_low_hz < self.band_high_hz <= nyquist + 1e-12:
            raise CohortError(
                f"band [{self.band_low_hz}, {self.band_high_hz}] Hz must satisfy "
                f"0 < low < high <= Nyquist ({nyquist:g} Hz)"
            )


@dataclass
class Cohort:
    subjects: list[BoldSeries]
    centroids: CentroidTable
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=np.int64)

    @property
    def n_rois(self) -> int:
        return self.centroids.n_rois

    def subset(self, index: Sequence[int]) -> "Cohort":
        return Cohort([self.subjects[i] for i in index], self.centroids, dict(self.meta))


def validate_cohort(subjects: Sequence[BoldSeries], centroids: CentroidTable,
                    min_timepoints: int = DEFAULT_MIN_TIMEPOINTS,
                    on_short: str = "error") -> list[BoldSeries]:
    kept = []
    for s in subjects:
        if s.n_rois != centroids.n_rois:
            raise RoiMismatchError(
                f"{s.subject_id}: {s.n_rois} ROIs but centroid table has {centroids.n_rois} rows"
            )
        if s.n_timepoints < min_timepoints:
            msg = (f"{s.subject_id}: {s.n_timepoints} time points is fewer than "
                   f"min_timepoints={min_timepoints}")
            if on_short == "error":
                raise ShortScanError(msg)
            log.warning("excluding %s", msg)
            continue
        kept.append(s)
    if not kept:
        raise CohortError("cohort is empty after validation")
    return kept


# -- file formats -------------------------------------------------------


def _read_numeric_csv(path: Path, width: int | None = None) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise CohortError(f"{path}:{lineno}: non-numeric value") from None
            if rows and len(vals) != len(rows[0]):
                raise CohortError(
                    f"{path}:{lineno}: ragged row ({len(vals)} columns, expected {len(rows[0])})"
                )
            rows.append(vals)
    if not rows:
        raise CohortError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    if width is not None and arr.shape[1] != width:
        raise CohortError(f"{path}: expected {width} columns, got {arr.shape[1]}")
    return arr


def read_labels(path) -> list[tuple[str, int]]:
    out = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            if len(rec) != 2:
                raise CohortError(f"{path}:{lineno}: expected subject_id,label")
            sid, lab = rec[0].strip(), rec[1].strip()
            if lineno == 1 and sid == "subject_id":
                continue
            if lab not in ("0", "1"):
                raise CohortError(f"{path}:{lineno}: label must be 0 or 1, got {lab!r}")
            out.append((sid, int(lab)))
    return out


def read_centroids(path) -> CentroidTable:
    return CentroidTable(_read_numeric_csv(Path(path), width=3))


def load_cohort(signals_path, centroids_path, labels_path, *, tr_seconds: float = DEFAULT_TR,
                min_timepoints: int = DEFAULT_MIN_TIMEPOINTS, on_short: str = "error") -> Cohort:
    """Load per-subject signal CSVs (``<subject_id>.csv`` in a directory) or a
    ``.hwst`` cohort binary, plus centroids and labels."""
    signals_path = Path(signals_path)
    centroids = read_centroids(centroids_path)
    labels = read_labels(labels_path)
    if signals_path.is_file():
        blob = checkpoint.load(signals_path)
        signals = {k[len("signal/"):]: v for k, v in blob.items() if k.startswith("signal/")}
        if "tr_seconds" in blob:
            tr_seconds = float(blob["tr_seconds"])
    else:
        signals = None
    subjects = []
    for sid, lab in labels:
        if signals is not None:
            if sid not in signals:
                raise CohortError(f"subject {sid} missing from {signals_path}")
            sig = signals[sid]
        else:
            f = signals_path / f"{sid}.csv"
            if not f.exists():
                raise CohortError(f"signal file not found: {f}")
            sig = _read_numeric_csv(f)
        subjects.append(BoldSeries(sid, lab, sig, tr_seconds))
    subjects = validate_cohort(subjects, centroids, min_timepoints, on_short)
    return Cohort(subjects, centroids)


def load_manifest(path, *, min_timepoints: int = DEFAULT_MIN_TIMEPOINTS,
                  on_short: str = "error") -> Cohort:
    """Load a cohort described by a JSON manifest.

    Keys: ``tr_seconds``, ``centroids`` (CSV path), ``subjects`` (list of
    ``{subject_id, file, label}``) and an optional free-form ``meta``.
    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    if path.suffix == ".hwst":
        return load_cohort_binary(path, min_timepoints=min_timepoints, on_short=on_short)
    spec = json.loads(path.read_text())
    root = path.parent
    tr = float(spec.get("tr_seconds", DEFAULT_TR))
    centroids = read_centroids(root / spec["centroids"])
    subjects = []
    for rec in spec["subjects"]:
        lab = rec["label"]
        if lab not in (0, 1):
            raise CohortError(f"{rec['subject_id']}: label must be 0 or 1, got {lab!r}")
        sig = _read_numeric_csv(root / rec["file"])
        subjects.append(BoldSeries(rec["subject_id"], int(lab), sig, tr))
    subjects = validate_cohort(subjects, centroids, min_timepoints, on_short)
    return Cohort(subjects, centroids, dict(spec.get("meta", {})))


def write_cohort(cohort: Cohort, out_dir) -> Path:
    """Write per-subject CSVs, centroids.csv, labels.csv and manifest.json."""
    out = Path(out_dir)
    (out / "signals").mkdir(parents=True, exist_ok=True)
    tr = cohort.subjects[0].tr_seconds
    recs = []
    for s in cohort.subjects:
        fname = f"signals/{s.subject_id}.csv"
        np.savetxt(out / fname, s.signal, delimiter=",", fmt="%.17g")
        recs.append({"subject_id": s.subject_id, "file": fname, "label": s.label})
    np.savetxt(out / "centroids.csv", cohort.centroids.coords, delimiter=",", fmt="%.17g",
               header="x,y,z", comments="")
    with open(out / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label"])
        for s in cohort.subjects:
            w.writerow([s.subject_id, s.label])
    manifest = {"tr_seconds": tr, "centroids": "centroids.csv", "subjects": recs,
                "meta": cohort.meta}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out / "manifest.json"


def save_cohort_binary(cohort: Cohort, path) -> None:
    blob = {f"signal/{s.subject_id}": s.signal for s in cohort.subjects}
    blob["tr_seconds"] = np.array(cohort.subjects[0].tr_seconds)
    blob["labels"] = cohort.labels.astype(np.float64)
    blob["centroids"] = cohort.centroids.coords
    # meta travels as UTF-8 JSON bytes stored one per float
    blob["meta_json"] = np.frombuffer(json.dumps(cohort.meta).encode(), dtype=np.uint8).astype(np.float64)
    checkpoint.save(path, blob)


def load_cohort_binary(path, *, min_timepoints: int = DEFAULT_MIN_TIMEPOINTS,
                       on_short: str = "error") -> Cohort:
    blob = checkpoint.load(path)
    tr = float(blob["tr_seconds"])
    ids = [k[len("signal/"):] for k in blob if k.startswith("signal/")]
    labels = blob["labels"].astype(int)
    subjects = [BoldSeries(sid, int(lab), blob[f"signal/{sid}"], tr) for sid, lab in zip(ids, labels)]
    centroids = CentroidTable(blob["centroids"])
    meta = {}
    if "meta_json" in blob:
        meta = json.loads(blob["meta_json"].astype(np.uint8).tobytes().decode())
    return Cohort(validate_cohort(subjects, centroids, min_timepoints, on_short), centroids, meta)


# -- windowing ----------------------------------------------------------


def common_window_length(cohort: Cohort | Sequence[BoldSeries], T: int) -> int:
    subjects = cohort.subjects if isinstance(cohort, Cohort) else cohort
    m_common = min(s.n_timepoints for s in subjects)
    S = m_common // T
    if S < 1:
        raise CohortError(f"T={T} exceeds the shortest scan ({m_common} points)")
    return S


def window_split(b: BoldSeries, cfg: WindowConfig) -> list[np.ndarray]:
    """Split into ``cfg.T`` consecutive S x N segments; trailing points are dropped."""
    S = cfg.S if cfg.S is not None else b.n_timepoints // cfg.T
    if S < 1 or cfg.T * S > b.n_timepoints:
        raise CohortError(
            f"{b.subject_id}: T*S = {cfg.T}*{S} exceeds {b.n_timepoints} time points"
        )
    return [b.signal[t * S:(t + 1) * S] for t in range(cfg.T)]


# -- synthetic cohorts --------------------------------------------------


def _band_limited(rng: np.random.Generator, M: int, k: int, tr: float,
                  low: float = 0.01, high: float = 0.10) -> np.ndarray:
    """``k`` unit-variance series of length M with power only in [low, high] Hz."""
    white = rng.standard_normal((M, k))
    spec = np.fft.rfft(white, axis=0)
    freqs = np.fft.rfftfreq(M, d=tr)
    spec[(freqs < low) | (freqs > high)] = 0.0
    out = np.fft.irfft(spec, n=M, axis=0)
    out -= out.mean(axis=0)
    return out / out.std(axis=0)


def synth_cohort(seed: int, n_subjects: int, N: int, M: int, tr_seconds: float = DEFAULT_TR,
                 effect_strength: float = 0.5, *, n_sources: int = 4,
                 n_planted: int | None = None, mixing_scale: float = 0.2,
                 own_scale: float = 0.35, white_scale: float = 0.15) -> Cohort:
    """Generate a balanced labeled cohort with a planted dynamic-connectivity effect.

    Every ROI mixes a few cohort-wide band-limited latent sources with
    ROI-specific band-limited and white noise. Class-1 subjects additionally
    receive one shared band-limited source in a spatially compact set of
    ``n_planted`` ROIs during the second half of the scan, scaled by
    ``effect_strength``. The planted ROIs are recorded in ``meta``.
    """
    if n_subjects < 2 or n_subjects % 2:
        raise CohortError("n_subjects must be a positive even number")
    if N < 2 or M < 2:
        raise CohortError("N and M must be at least 2")
    if effect_strength < 0:
        raise CohortError("effect_strength must be nonnegative")
    rng = np.random.default_rng(seed)
    n_planted = max(2, N // 4) if n_planted is None else n_planted
    coords = rng.uniform(-1.0, 1.0, size=(N, 3)) * np.array([70.0, 100.0, 60.0])
    centre = int(rng.integers(N))
    dist = np.linalg.norm(coords - coords[centre], axis=1)
    planted = np.sort(np.argsort(dist, kind="stable")[:n_planted])
    mixing = rng.standard_normal((N, n_sources)) * mixing_scale
    half = np.zeros(M)
    half[M // 2:] = 1.0

    subjects = []
    for i in range(n_subjects):
        label = i % 2
        srng = np.random.default_rng([seed, i])
        sources = _band_limited(srng, M, n_sources, tr_seconds)
        own = _band_limited(srng, M, N, tr_seconds)
        jitter = srng.standard_normal((N, n_sources)) * 0.1
        x = sources @ (mixing + jitter).T + own_scale * own + white_scale * srng.standard_normal((M, N))
        shared = _band_limited(srng, M, 1, tr_seconds)[:, 0]
        if label == 1 and effect_strength > 0:
            x[:, planted] += (effect_strength * half * shared)[:, None]
        subjects.append(BoldSeries(f"sub-{i:04d}", label, x, tr_seconds))
    meta = {"seed": seed, "effect_strength": effect_strength,
            "planted_rois": [int(p) for p in planted], "planted_half": "second"}
    return Cohort(subjects, CentroidTable(coords), meta)


def planted_connectivity_gap(cohort: Cohort, rois: Sequence[int] | None = None) -> float:
    """Class-1 minus class-0 mean whole-scan Pearson correlation among ``rois``."""
    rois = list(cohort.meta["planted_rois"] if rois is None else rois)
    iu = np.triu_indices(len(rois), k=1)
    means = {0: [], 1: []}
    for s in cohort.subjects:
        r = np.corrcoef(s.signal[:, rois], rowvar=False)
        means[s.label].append(r[iu].mean())
    return float(np.mean(means[1]) - np.mean(means[0]))
