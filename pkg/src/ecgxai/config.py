"""Flat key/value run configuration shared by the command-line tools.

A config file holds one `key = value` pair per line (# comments allowed).
Only known keys parse; anything else is rejected by name. Values start
from the preset's defaults, file entries override those, and command-line
flags override the file. The fully resolved pairs are written verbatim
into every run directory.
"""

from __future__ import annotations

import hashlib
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError
from .losses import LossWeights
from .model import ModelConfig
from .preprocess import PreprocessConfig
from .train import TrainConfig, paper_schedule, constant_schedule


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_pair(s: str) -> tuple[int, int]:
    parts = [int(p) for p in s.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two integers, got {s!r}")
    return parts[0], parts[1]


def _parse_float_triple(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in s.split(","))


# key -> (parser, description)
KNOWN_KEYS: dict[str, tuple] = {
    "preset": (str, "paper or desk"),
    "seed": (int, "master seed"),
    "n_classes": (int, "number of classes"),
    "manifest": (str, "manifest path"),
    "profile": (str, "label profile: all, chapman, ningbo"),
    "sampling_rate": (int, "record sampling rate in Hz"),
    "record_length": (int, "expected samples per record (0 = unchecked)"),
    "folds": (int, "cross-validation fold count"),
    "checkpoint": (str, "checkpoint path for evaluate/explain/export"),
    "epochs": (int, "training epochs"),
    "batch_size": (int, "records per optimization step"),
    "lr": (float, "initial/constant learning rate"),
    "w_base": (float, "base cross-entropy weight"),
    "w_feature": (float, "feature cross-entropy weight"),
    "w_joint": (float, "joint cross-entropy weight"),
    "w_ncc": (float, "attention-guidance weight"),
    "n_blocks": (int, "residual block count"),
    "base_channels": (int, "channels of the first block group"),
    "channel_doubling_every": (int, "blocks between channel doublings"),
    "kernel": (int, "branch convolution kernel size"),
    "subsample_every_other_block": (_parse_bool, "halve time on even blocks only"),
    "attention_heads": (int, "attention head count"),
    "embed_dim": (int, "final channel width"),
    "dropout_rate": (float, "block dropout rate"),
    "input_len": (int, "padded model input length"),
    "n_segments": (int, "final sequence length / mask segments"),
    "feature_hidden": (_parse_int_pair, "feature branch hidden sizes, e.g. 64,32"),
    "median_widths": (_parse_float_triple, "baseline median widths in seconds"),
}

_PRESETS = ("paper", "desk")


class RunConfig:
    """Resolved configuration; raw string pairs are kept for verbatim copies."""

    def __init__(self, pairs: dict[str, str] | None = None):
        self.raw: dict[str, str] = {}
        self.values: dict[str, object] = {}
        if pairs:
            for key, value in pairs.items():
                self.set(key, value)

    def set(self, key: str, value: str) -> None:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        parser = KNOWN_KEYS[key][0]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
        if key == "preset" and parsed not in _PRESETS:
            raise ConfigError(f"preset must be one of {_PRESETS}, got {parsed!r}")
        self.raw[key] = str(value)
        self.values[key] = parsed

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def preset(self) -> str:
        return str(self.get("preset", "desk"))

    @property
    def seed(self) -> int:
        return int(self.get("seed", 0))

    @property
    def sampling_rate(self) -> int:
        return int(self.get("sampling_rate", 500 if self.preset == "paper" else 32))

    @property
    def record_length(self) -> int | None:
        v = self.get("record_length")
        if v is None:
            return 5000 if self.preset == "paper" else 320
        return None if v == 0 else int(v)

    def model_config(self) -> ModelConfig:
        n_classes = int(self.get("n_classes", 2))
        base = ModelConfig.paper(n_classes) if self.preset == "paper" else ModelConfig.desk(n_classes)
        overrides = {}
        for key in ("n_blocks", "base_channels", "channel_doubling_every", "kernel",
                    "subsample_every_other_block", "attention_heads", "embed_dim",
                    "dropout_rate", "input_len", "n_segments", "feature_hidden"):
            if key in self.values:
                overrides[key] = self.values[key]
        return replace(base, **overrides) if overrides else base

    def train_config(self) -> TrainConfig:
        weights = LossWeights(
            w_base=float(self.get("w_base", 2.0)),
            w_feature=float(self.get("w_feature", 1.0)),
            w_joint=float(self.get("w_joint", 1.0)),
            w_ncc=float(self.get("w_ncc", 0.2)),
        )
        if self.preset == "paper":
            epochs = int(self.get("epochs", 200))
            lr = float(self.get("lr", 2e-4))
            cfg = TrainConfig(batch_size=int(self.get("batch_size", 4)), epochs=epochs,
                              seed=self.seed, weights=weights,
                              schedule=paper_schedule(epochs, lr_initial=lr), preset="paper")
        else:
            epochs = int(self.get("epochs", 40))
            lr = float(self.get("lr", 1e-3))
            cfg = TrainConfig(batch_size=int(self.get("batch_size", 16)), epochs=epochs,
                              seed=self.seed, weights=weights,
                              schedule=constant_schedule(epochs, lr), preset="desk")
        return cfg

    def preprocess_config(self) -> PreprocessConfig:
        widths = self.get("median_widths")
        return PreprocessConfig(filter_widths_seconds=tuple(widths)) if widths else PreprocessConfig()

    def resolved_text(self) -> str:
        lines = [f"{key} = {self.raw[key]}" for key in sorted(self.raw)]
        return "\n".join(lines) + "\n" if lines else ""

    def config_hash(self) -> str:
        return hashlib.sha256(self.resolved_text().encode("utf-8")).hexdigest()[:10]


def load_config(path: str | Path) -> RunConfig:
    """Parse a config file, rejecting unknown keys with their line number."""
    cfg = RunConfig()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        try:
            cfg.set(key.strip(), value.strip())
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return cfg
