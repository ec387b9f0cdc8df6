"""Band-limited log-magnitude spectral node descriptors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_io import WindowConfig

EPS_FFT = 1e-8
_BAND_TOL = 1e-12


class EmptyBandError(ValueError):
    pass


@dataclass
class NodeFeatureMatrix:
    X: np.ndarray  # (N, d)
    bin_freqs_hz: np.ndarray  # (d,)

    @property
    def d(self) -> int:
        return self.X.shape[1]


def dft_one_sided(x, tr_seconds: float) -> tuple[np.ndarray, np.ndarray]:
    """Magnitudes of the one-sided DFT along axis 0 and their frequencies in Hz.

    Works on a length-S vector or an S x N block (one column per series).
    """
    x = np.asarray(x, dtype=np.float64)
    S = x.shape[0]
    if S < 2:
        raise ValueError(f"need at least 2 samples for a spectrum, got {S}")
    mags = np.abs(np.fft.rfft(x, axis=0))
    freqs = np.arange(S // 2 + 1) / (S * tr_seconds)
    return mags, freqs


def band_bins(S: int, tr_seconds: float, cfg: WindowConfig) -> tuple[np.ndarray, np.ndarray]:
    """Indices and frequencies of the one-sided bins inside the closed band."""
    freqs = np.arange(S // 2 + 1) / (S * tr_seconds)
    keep = (freqs >= cfg.band_low_hz - _BAND_TOL) & (freqs <= cfg.band_high_hz + _BAND_TOL)
    keep &= freqs > 0
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        raise EmptyBandError(
            f"no frequency bin in [{cfg.band_low_hz}, {cfg.band_high_hz}] Hz for S={S}, "
            f"TR={tr_seconds}s (resolution {1 / (S * tr_seconds):.4g} Hz); "
            "use fewer windows (smaller T) or widen the band"
        )
    return idx, freqs[idx]


def node_features(segment, cfg: WindowConfig, tr_seconds: float,
                  eps_fft: float = EPS_FFT) -> NodeFeatureMatrix:
    """``log(|F{x_i}|(f_k) + eps)`` for each ROI column and each in-band bin."""
    segment = np.asarray(segment, dtype=np.float64)
    idx, freqs = band_bins(segment.shape[0], tr_seconds, cfg)
    mags, _ = dft_one_sided(segment, tr_seconds)
    return NodeFeatureMatrix(np.log(mags[idx].T + eps_fft), freqs)
