"""Ground-truth attention masks derived from RR-interval variability.

A recording is split into ``n_segments`` equal windows. Each RR interval
gets a deviation score (distance from the mean interval), rescaled into
[mask_alpha, 1] for intervals at or above the mean deviation and 0 below
it. The score is planted at the interval's midpoint sample, and each
window takes the maximum score of the markers that fall inside it.

Records whose rhythm is perfectly regular (or where peak detection fails)
produce an all-zero mask; downstream losses treat those as unsupervised.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientBeatsError
from .hrv import detect_rpeaks, rr_from_peaks
from .records import EcgRecord

DEFAULT_MASK_ALPHA = 0.8
DEFAULT_N_SEGMENTS = 20


@dataclass(frozen=True)
class GtCam:
    """Per-segment attention targets, each value in {0} or [mask_alpha, 1]."""

    values: np.ndarray
    mask_alpha: float = DEFAULT_MASK_ALPHA
    dropped_markers: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    @property
    def n_segments(self) -> int:
        return len(self.values)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


def rr_deviation(rr_ms: np.ndarray, signed: bool = False) -> np.ndarray:
    """Distance of each interval from the mean interval.

    The signed variant keeps the raw difference; the default takes its
    absolute value so slow and fast anomalies score alike.
    """
    rr = np.asarray(rr_ms, dtype=np.float64)
    if len(rr) < 2:
        raise InsufficientBeatsError(f"need at least 2 intervals, got {len(rr)}")
    d = rr - rr.mean()
    return d if signed else np.abs(d)


def interval_values(d: np.ndarray, mask_alpha: float = DEFAULT_MASK_ALPHA) -> np.ndarray:
    """Rescale deviations into attention values.

    Intervals deviating at least as much as the average map linearly onto
    [mask_alpha, 1]; the rest map to 0. When every deviation is equal
    there is nothing to single out and the result is all zeros.
    """
    d = np.asarray(d, dtype=np.float64)
    if len(d) == 0:
        raise ValueError("empty deviation sequence")
    if not 0.0 < mask_alpha < 1.0:
        raise ValueError(f"mask_alpha must be in (0, 1), got {mask_alpha}")
    m = d.mean()
    big = d.max()
    v = np.zeros_like(d)
    if big == m:
        return v
    sel = d >= m
    v[sel] = mask_alpha + (1.0 - mask_alpha) * (d[sel] - m) / (big - m)
    return v


def marker_positions(peaks: np.ndarray, rr_ms: np.ndarray, fs: int) -> np.ndarray:
    """Midpoint sample of each interval: peak + half the RR span."""
    peaks = np.asarray(peaks)
    rr = np.asarray(rr_ms, dtype=np.float64)
    if len(rr) != len(peaks) - 1:
        raise ValueError(f"expected {len(peaks) - 1} intervals for {len(peaks)} peaks, got {len(rr)}")
    half = np.array([round(r * fs / 2000.0) for r in rr], dtype=np.int64)
    return peaks[:-1] + half


def build_mask(
    markers: np.ndarray,
    values: np.ndarray,
    signal_len: int,
    n_segments: int = DEFAULT_N_SEGMENTS,
    mask_alpha: float = DEFAULT_MASK_ALPHA,
) -> GtCam:
    """Assign each marker's value to its segment, max-aggregating collisions."""
    markers = np.asarray(markers)
    values = np.asarray(values, dtype=np.float64)
    if len(markers) != len(values):
        raise ValueError("markers and values must pair up")
    if signal_len % n_segments != 0:
        raise ValueError(f"signal length {signal_len} not divisible into {n_segments} segments")
    seg_len = signal_len // n_segments

    inside = (markers >= 0) & (markers < signal_len)
    dropped = int(len(markers) - inside.sum())
    if dropped:
        warnings.warn(f"dropped {dropped} marker(s) outside the signal", stacklevel=2)

    out = np.zeros(n_segments, dtype=np.float64)
    for pos, val in zip(markers[inside] // seg_len, values[inside]):
        if val > out[pos]:
            out[pos] = val
    return GtCam(values=out, mask_alpha=mask_alpha, dropped_markers=dropped)


def generate_gt_cam(
    record: EcgRecord,
    n_segments: int = DEFAULT_N_SEGMENTS,
    mask_alpha: float = DEFAULT_MASK_ALPHA,
    signed_deviation: bool = False,
) -> GtCam:
    """Full pipeline from raw samples to the per-segment mask.

    Raises InsufficientBeatsError when peak detection cannot find enough
    beats; use gt_cam_or_zero when a silent fallback is wanted.
    """
    peaks = detect_rpeaks(record.samples, record.sampling_rate)
    rr = rr_from_peaks(peaks, record.sampling_rate)
    d = rr_deviation(rr, signed=signed_deviation)
    v = interval_values(d, mask_alpha=mask_alpha)
    markers = marker_positions(peaks, rr, record.sampling_rate)
    return build_mask(markers, v, record.length, n_segments, mask_alpha)


def gt_cam_or_zero(
    record: EcgRecord,
    n_segments: int = DEFAULT_N_SEGMENTS,
    mask_alpha: float = DEFAULT_MASK_ALPHA,
) -> GtCam:
    """Like generate_gt_cam, but undetectable rhythms yield an all-zero mask."""
    try:
        return generate_gt_cam(record, n_segments=n_segments, mask_alpha=mask_alpha)
    except InsufficientBeatsError:
        return GtCam(values=np.zeros(n_segments), mask_alpha=mask_alpha)
