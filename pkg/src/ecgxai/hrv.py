"""R-peak detection, RR intervals, and the 17 quantitative HRV features.

Feature definitions are pinned here so every consumer agrees:

  bpm        60000 / mean(RR)
  mean_nn    mean(RR)
  sdsd       std(diff(RR)), n-1 denominator
  sdnn       std(RR), n-1 denominator
  rmssd      sqrt(mean(diff(RR)^2))
  cvsd       rmssd / mean_nn
  cvnn       sdnn / mean_nn
  median_nn  median(RR)
  mad_nn     1.4826 * median(|RR - median(RR)|)
  mcv_nn     mad_nn / median_nn
  iqr_nn     p75(RR) - p25(RR), linear-interpolation percentiles
  sdrmssd    sdnn / rmssd (0 when rmssd is 0)
  prc20_nn   20th percentile of RR
  prc80_nn   80th percentile of RR
  min_nn     min(RR)
  max_nn     max(RR)
  hti        |RR| / max bin count, 7.8125 ms bins anchored at 0

RR intervals are in milliseconds throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientBeatsError

HTI_BIN_MS = 7.8125
MAD_SCALE = 1.4826
REFRACTORY_S = 0.2

FEATURE_NAMES = (
    "bpm", "mean_nn", "sdsd", "sdnn", "rmssd", "cvsd", "cvnn", "median_nn",
    "mad_nn", "mcv_nn", "iqr_nn", "sdrmssd", "prc20_nn", "prc80_nn",
    "min_nn", "max_nn", "hti",
)
N_FEATURES = len(FEATURE_NAMES)


def _moving_sum(x: np.ndarray, window: int) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(len(x))
    return c[idx + 1] - c[np.maximum(0, idx - window + 1)]


def detect_rpeaks(signal: np.ndarray, fs: int) -> np.ndarray:
    """Locate R peaks with a derivative-square-integrate detector.

    The detection function is the moving integral of the squared central
    derivative; contiguous regions above an adaptive threshold become
    detection windows, and the returned index is the maximum of the input
    signal inside each window. A 200 ms refractory period keeps the larger
    of two competing peaks.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if len(signal) < 2 * fs:
        raise ValueError(f"need at least {2 * fs} samples at {fs} Hz, got {len(signal)}")

    deriv = np.zeros_like(signal)
    deriv[1:-1] = (signal[2:] - signal[:-2]) * 0.5
    energy = deriv * deriv
    window = max(int(round(0.15 * fs)), 1)
    integ = _moving_sum(energy, window)

    # Percentile-based threshold resists a single outlier beat.
    thr = 0.3 * np.percentile(integ, 98)
    above = integ > thr
    if thr <= 0 or not above.any():
        raise InsufficientBeatsError("no QRS energy above threshold")

    padded = np.concatenate([[False], above, [False]])
    flips = np.flatnonzero(padded[1:] != padded[:-1])
    starts, ends = flips[0::2], flips[1::2]

    # The integral lags the QRS by about half a window; widen leftwards.
    back = window // 2
    peaks = []
    for s, e in zip(starts, ends):
        lo = max(0, s - back)
        peaks.append(lo + int(np.argmax(signal[lo:e])))

    refractory = int(round(REFRACTORY_S * fs))
    kept: list[int] = []
    for p in peaks:
        if kept and p - kept[-1] < refractory:
            if signal[p] > signal[kept[-1]]:
                kept[-1] = p
        else:
            kept.append(p)

    if len(kept) < 2:
        raise InsufficientBeatsError(f"found {len(kept)} peak(s), need at least 2")
    return np.asarray(kept, dtype=np.int64)


def rr_from_peaks(peaks: np.ndarray, fs: int) -> np.ndarray:
    """Successive peak distances in milliseconds."""
    peaks = np.asarray(peaks)
    if len(peaks) < 2:
        raise InsufficientBeatsError(f"need at least 2 peaks, got {len(peaks)}")
    return np.diff(peaks).astype(np.float64) * (1000.0 / fs)


def hti(rr_ms: np.ndarray) -> float:
    """Triangular index: count over tallest histogram bin (7.8125 ms, from 0)."""
    bins = np.floor(np.asarray(rr_ms) / HTI_BIN_MS).astype(np.int64)
    _, counts = np.unique(bins, return_counts=True)
    return len(rr_ms) / counts.max()


def compute_features(rr_ms: np.ndarray) -> dict[str, float]:
    """All 17 features keyed by FEATURE_NAMES order."""
    rr = np.asarray(rr_ms, dtype=np.float64)
    if len(rr) < 3:
        raise InsufficientBeatsError(f"need at least 3 intervals, got {len(rr)}")
    if np.any(rr <= 0):
        raise ValueError("RR intervals must be positive")
    d = np.diff(rr)
    mean_nn = float(np.mean(rr))
    sdnn = float(np.std(rr, ddof=1))
    rmssd = float(np.sqrt(np.mean(d * d)))
    median_nn = float(np.median(rr))
    mad_nn = MAD_SCALE * float(np.median(np.abs(rr - median_nn)))
    return {
        "bpm": 60000.0 / mean_nn,
        "mean_nn": mean_nn,
        "sdsd": float(np.std(d, ddof=1)),
        "sdnn": sdnn,
        "rmssd": rmssd,
        "cvsd": rmssd / mean_nn,
        "cvnn": sdnn / mean_nn,
        "median_nn": median_nn,
        "mad_nn": mad_nn,
        "mcv_nn": mad_nn / median_nn,
        "iqr_nn": float(np.percentile(rr, 75) - np.percentile(rr, 25)),
        "sdrmssd": sdnn / rmssd if rmssd > 0 else 0.0,
        "prc20_nn": float(np.percentile(rr, 20)),
        "prc80_nn": float(np.percentile(rr, 80)),
        "min_nn": float(np.min(rr)),
        "max_nn": float(np.max(rr)),
        "hti": hti(rr),
    }


def features_as_vector(features: dict[str, float]) -> np.ndarray:
    return np.array([features[n] for n in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension z-score fitted on training-fold features only."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64)
        out = np.zeros_like(vec)
        ok = self.std > 0
        out[ok] = (vec[ok] - self.mean[ok]) / self.std[ok]
        return out


def fit_feature_scaler(train_vectors: list[np.ndarray] | np.ndarray) -> FeatureScaler:
    x = np.asarray(train_vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 training feature vectors")
    return FeatureScaler(mean=x.mean(axis=0), std=x.std(axis=0))
