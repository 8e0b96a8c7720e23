"""Baseline wander removal and amplitude normalization.

The baseline estimate is a cascade of three median filters with widths of
0.2, 0.6 and 1.2 seconds (each filter applied to the previous filter's
output); subtracting it from the input keeps the high-frequency detail.
After denoising, values are min-max normalized to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .records import EcgRecord


@dataclass(frozen=True)
class PreprocessConfig:
    filter_widths_seconds: tuple[float, ...] = (0.2, 0.6, 1.2)
    normalize_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        widths = self.filter_widths_seconds
        if any(w <= 0 for w in widths) or any(a >= b for a, b in zip(widths, widths[1:])):
            raise ValueError(f"filter widths must be positive and strictly increasing: {widths}")


def width_in_samples(width_s: float, fs: int) -> int:
    """Seconds to an odd sample count: round(width * fs), +1 if even."""
    w = round(width_s * fs)
    if w % 2 == 0:
        w += 1
    return max(w, 1)


def median_filter(signal: np.ndarray, width: int) -> np.ndarray:
    """Centered running median with edge-replication padding.

    `width` must be odd and no longer than the signal.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if width % 2 == 0:
        raise ValueError(f"median filter width must be odd, got {width}")
    if not 1 <= width <= len(signal):
        raise ValueError(f"width {width} outside [1, {len(signal)}]")
    half = width // 2
    padded = np.pad(signal, half, mode="edge")
    windows = sliding_window_view(padded, width)
    return np.median(windows, axis=1)


def estimate_baseline(signal: np.ndarray, widths: tuple[int, ...]) -> np.ndarray:
    """Cascade the median filters; the final output is the baseline estimate."""
    out = np.asarray(signal, dtype=np.float64)
    for w in widths:
        out = median_filter(out, w)
    return out


def remove_baseline(record: EcgRecord, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Return record.samples minus the cascaded median-filter baseline."""
    widths = tuple(width_in_samples(w, record.sampling_rate) for w in cfg.filter_widths_seconds)
    if max(widths) > record.length:
        raise ValueError(
            f"signal of {record.length} samples shorter than largest filter width {max(widths)}"
        )
    baseline = estimate_baseline(record.samples, widths)
    return record.samples - baseline


def minmax_normalize(signal: np.ndarray, out_range: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Affine map of [min, max] onto out_range; a constant signal maps to lo."""
    signal = np.asarray(signal, dtype=np.float64)
    lo, hi = out_range
    smin, smax = signal.min(), signal.max()
    if smax == smin:
        return np.full_like(signal, lo)
    return lo + (signal - smin) * ((hi - lo) / (smax - smin))


def preprocess(record: EcgRecord, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Full chain: baseline removal, then min-max normalization."""
    return minmax_normalize(remove_baseline(record, cfg), cfg.normalize_range)
