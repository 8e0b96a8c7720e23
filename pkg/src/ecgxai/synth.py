"""Synthetic single-lead corpus with planted rhythm anomalies.

Each record is a 10-second, 32 Hz trace of Gaussian R spikes on a quiet
baseline, beating regularly except for one deliberately stretched
beat-to-beat interval. The class label encodes where that long interval
sits: class 0 plants it in the left part of the recording, class 1 in the
right (further classes alternate zones). The stretched interval dominates
the RR-deviation mask, so the ground-truth attention target points at the
planted region.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import (
    ClassLabel,
    EcgRecord,
    Manifest,
    ManifestEntry,
    label_order,
    load_record,
    save_manifest,
    write_record,
)

SYNTH_FS = 32
SYNTH_LENGTH = 320

# The planted interval's midpoint must land inside the class zone,
# expressed as fractions of the record length.
_ZONES = ((0.10, 0.40), (0.60, 0.90))


@dataclass(frozen=True)
class SynthRecord:
    samples: np.ndarray
    peaks: np.ndarray
    anomaly_interval: int
    label_idx: int


def generate_record(rng: np.random.Generator, label_idx: int,
                    fs: int = SYNTH_FS, length: int = SYNTH_LENGTH) -> SynthRecord:
    """One trace: regular beats, one long interval planted in the class zone."""
    zone_lo, zone_hi = _ZONES[label_idx % len(_ZONES)]
    while True:
        base = rng.uniform(22.0, 27.0)
        offset = rng.uniform(3.0, 3.0 + base)
        intervals = base + rng.normal(0.0, 0.3, size=2 * length // int(base))
        positions = offset + np.concatenate([[0.0], np.cumsum(intervals)])
        positions = positions[positions < length - 3.0]
        if len(positions) < 9:
            continue
        mids = (positions[:-1] + positions[1:]) / 2.0
        in_zone = np.flatnonzero((mids >= zone_lo * length) & (mids <= zone_hi * length))
        if len(in_zone) == 0:
            continue
        k = int(in_zone[rng.integers(len(in_zone))])
        stretch = rng.uniform(1.6, 1.9)
        grow = (stretch - 1.0) * (positions[k + 1] - positions[k])
        positions[k + 1 :] += grow
        positions = positions[positions < length - 3.0]
        if len(positions) < k + 2 or len(positions) < 8:
            continue
        mid_k = (positions[k] + positions[k + 1]) / 2.0
        if not zone_lo * length <= mid_k <= zone_hi * length:
            continue
        peaks = np.round(positions).astype(np.int64)
        if np.any(np.diff(peaks) < 10) or peaks[0] < 2:
            continue
        break

    t = np.arange(length, dtype=np.float64)
    sig = np.zeros(length)
    for p in peaks:
        sig += np.exp(-0.5 * ((t - p) / 1.3) ** 2)        # R spike
        sig += 0.15 * np.exp(-0.5 * ((t - p - 5) / 2.5) ** 2)  # small trailing wave
    sig += rng.normal(0.0, 0.01, size=length)
    return SynthRecord(samples=sig, peaks=peaks, anomaly_interval=k, label_idx=label_idx)


def generate_corpus(
    out_dir: str | Path,
    n: int = 200,
    n_classes: int = 2,
    seed: int = 0,
    fs: int = SYNTH_FS,
    length: int = SYNTH_LENGTH,
) -> Manifest:
    """Write n records (classes dealt round-robin) plus a manifest.

    Byte-identical output for identical arguments: one generator seeded
    from `seed` drives every record in order.
    """
    if not 2 <= n_classes <= len(ClassLabel):
        raise ValueError(f"n_classes must be in [2, {len(ClassLabel)}], got {n_classes}")
    out_dir = Path(out_dir)
    (out_dir / "records").mkdir(parents=True, exist_ok=True)
    labels = label_order("all")[:n_classes]
    rng = np.random.default_rng([seed, 0x57E9])
    entries = []
    for i in range(n):
        label_idx = i % n_classes
        syn = generate_record(rng, label_idx, fs=fs, length=length)
        rec_id = f"syn{i:04d}"
        rel = f"records/{rec_id}.f32"
        record = EcgRecord(id=rec_id, sampling_rate=fs, samples=syn.samples, label=labels[label_idx])
        write_record(record, out_dir / rel)
        entries.append(ManifestEntry(id=rec_id, path=rel, label=labels[label_idx]))
    manifest = Manifest(entries=tuple(entries), root=out_dir)
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest


def load_corpus(manifest: Manifest, fs: int = SYNTH_FS, length: int = SYNTH_LENGTH) -> list[EcgRecord]:
    return [load_record(manifest, e, fs, expected_length=length) for e in manifest.entries]
