"""Labeled single-lead ECG records: data model, manifest I/O, fold assignment.

Storage layout is deliberately plain: one raw little-endian float32 file per
record (no header, length implied by file size) plus a UTF-8 manifest with
one header line ``id,path,label,fold``. Paths are relative to the manifest's
directory. The ``fold`` column may be empty before folds are assigned.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, IntegrityError, ManifestParseError


class ClassLabel(Enum):
    SR = "SR"
    SB = "SB"
    ST = "ST"
    SA = "SA"
    AF_AFIB = "AF_AFIB"
    AT_SVT = "AT_SVT"


# Label sets fixed per dataset profile. The Ningbo AT+SVT class is dropped
# for its 15-sample support; Chapman has no SA recordings.
PROFILES: dict[str, frozenset[ClassLabel]] = {
    "all": frozenset(ClassLabel),
    "chapman": frozenset(ClassLabel) - {ClassLabel.SA},
    "ningbo": frozenset(ClassLabel) - {ClassLabel.AT_SVT},
}


def label_order(profile: str = "all") -> tuple[ClassLabel, ...]:
    """The profile's labels in declaration order; defines class indices."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown dataset profile {profile!r}; choose from {sorted(PROFILES)}")
    allowed = PROFILES[profile]
    return tuple(label for label in ClassLabel if label in allowed)


def label_index_map(profile: str = "all") -> dict[ClassLabel, int]:
    """Contiguous class index per label under the given profile."""
    return {label: i for i, label in enumerate(label_order(profile))}


@dataclass(frozen=True)
class EcgRecord:
    """One labeled single-lead recording."""

    id: str
    sampling_rate: int
    samples: np.ndarray
    label: ClassLabel

    def __post_init__(self):
        if self.sampling_rate <= 0:
            raise ValueError(f"sampling_rate must be positive, got {self.sampling_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))

    @property
    def length(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return self.length / self.sampling_rate


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    label: ClassLabel
    fold: int | None = None


@dataclass(frozen=True)
class Manifest:
    """Validated list of manifest entries plus the directory they resolve against."""

    entries: tuple[ManifestEntry, ...]
    root: Path

    def __len__(self) -> int:
        return len(self.entries)

    def labels_present(self) -> list[ClassLabel]:
        seen = {e.label for e in self.entries}
        return [c for c in ClassLabel if c in seen]

    def fold_of(self, fold: int) -> list[ManifestEntry]:
        return [e for e in self.entries if e.fold == fold]

    def except_fold(self, fold: int) -> list[ManifestEntry]:
        return [e for e in self.entries if e.fold != fold]


MANIFEST_HEADER = "id,path,label,fold"


def load_manifest(path: str | Path, profile: str = "all", check_files: bool = True) -> Manifest:
    """Parse and validate a manifest file.

    Raises ManifestParseError naming the offending line for malformed rows,
    IntegrityError for duplicate ids or missing sample files.
    """
    path = Path(path)
    allowed = PROFILES.get(profile)
    if allowed is None:
        raise ConfigError(f"unknown dataset profile {profile!r}; choose from {sorted(PROFILES)}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise ManifestParseError(f"{path}:1: expected header {MANIFEST_HEADER!r}")

    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cols = raw.split(",")
        if len(cols) != 4:
            raise ManifestParseError(f"{path}:{lineno}: expected 4 columns, got {len(cols)}")
        rid, rel, label_tok, fold_tok = (c.strip() for c in cols)
        if not rid or not rel:
            raise ManifestParseError(f"{path}:{lineno}: empty id or path")
        try:
            label = ClassLabel(label_tok)
        except ValueError:
            raise ManifestParseError(f"{path}:{lineno}: unknown label {label_tok!r}") from None
        if label not in allowed:
            raise ManifestParseError(
                f"{path}:{lineno}: label {label_tok!r} not in profile {profile!r}"
            )
        if fold_tok == "":
            fold = None
        else:
            try:
                fold = int(fold_tok)
            except ValueError:
                raise ManifestParseError(f"{path}:{lineno}: bad fold {fold_tok!r}") from None
            if fold < 0:
                raise ManifestParseError(f"{path}:{lineno}: negative fold {fold}")
        if rid in seen:
            raise IntegrityError(f"{path}:{lineno}: duplicate record id {rid!r}")
        seen.add(rid)
        entries.append(ManifestEntry(rid, rel, label, fold))

    manifest = Manifest(tuple(entries), path.parent)
    if check_files:
        for e in manifest.entries:
            f = manifest.root / e.path
            if not f.is_file():
                raise IntegrityError(f"sample file missing for {e.id!r}: {f}")
    return manifest


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    rows = [MANIFEST_HEADER]
    for e in manifest.entries:
        fold = "" if e.fold is None else str(e.fold)
        rows.append(f"{e.id},{e.path},{e.label.value},{fold}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_record(record: EcgRecord, path: str | Path) -> None:
    """Write samples as headerless little-endian float32."""
    np.asarray(record.samples, dtype="<f4").tofile(path)


def load_record(
    manifest: Manifest,
    entry: ManifestEntry,
    sampling_rate: int,
    expected_length: int | None = None,
) -> EcgRecord:
    """Decode one record's sample file.

    The manifest carries no sampling rate or length; both are dataset-level
    properties supplied by the caller. A declared length is enforced against
    the file size so truncated files fail loudly.
    """
    f = manifest.root / entry.path
    try:
        raw = f.read_bytes()
    except OSError as exc:
        raise IntegrityError(f"cannot read sample file for {entry.id!r}: {exc}") from exc
    if len(raw) % 4 != 0:
        raise IntegrityError(f"{f}: size {len(raw)} is not a multiple of 4 bytes")
    samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if expected_length is not None and len(samples) != expected_length:
        raise IntegrityError(
            f"{f}: expected {expected_length} samples, file holds {len(samples)}"
        )
    return EcgRecord(id=entry.id, sampling_rate=sampling_rate, samples=samples, label=entry.label)


def assign_folds(manifest: Manifest, k: int, seed: int) -> Manifest:
    """Stratified fold assignment, deterministic for a fixed seed.

    Seed derivation (mirrored by the reference shuffle oracle in the test
    suite): for each label present, taken in ClassLabel declaration order,
    that label's entries are collected in manifest order, shuffled with
    ``np.random.default_rng([seed, label_position])`` where label_position
    is the index of the label within ClassLabel, and dealt round-robin so
    entry i of the shuffle lands in fold ``i % k``.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    by_label: dict[ClassLabel, list[int]] = {}
    for i, e in enumerate(manifest.entries):
        by_label.setdefault(e.label, []).append(i)
    for label, idxs in by_label.items():
        if len(idxs) < k:
            raise ConfigError(
                f"class {label.value} has {len(idxs)} records, fewer than k={k}"
            )
    folds: dict[int, int] = {}
    for pos, label in enumerate(ClassLabel):
        idxs = by_label.get(label)
        if not idxs:
            continue
        rng = np.random.default_rng([seed, pos])
        order = rng.permutation(len(idxs))
        for j, which in enumerate(order):
            folds[idxs[which]] = j % k
    entries = tuple(replace(e, fold=folds[i]) for i, e in enumerate(manifest.entries))
    return Manifest(entries, manifest.root)
