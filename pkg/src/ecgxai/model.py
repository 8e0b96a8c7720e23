"""The classification network: residual multiresolution blocks with an
attention head, plus the train-time feature branch and joint head.

The base path stacks blocks whose three chained same-padded convolutions
emulate receptive fields of 16, 31, and 46 samples. Channel width starts
at base_channels and doubles every channel_doubling_every blocks; blocks
on the subsampling schedule halve the time axis, ending at n_segments
steps. Multi-head attention runs over that final sequence, global average
pooling collapses it, and a dense layer scores the classes.

A second, much smaller branch embeds the per-record quantitative feature
vector through two hidden dense layers; the joint head concatenates its
second hidden activation with the pooled base embedding. Both extra heads
exist to shape training; base-path inference never touches them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import layers as L
from .engine import tensor as T
from .engine.tensor import Tensor
from .errors import ConfigError, ShapeError
from .hrv import N_FEATURES


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters with two named presets.

    subsample_every_other_block: when true, even-numbered blocks (2, 4, ...)
    halve the time axis; when false every block does. input_len must equal
    n_segments * 2^(number of subsampling blocks).
    """

    n_classes: int
    n_blocks: int = 16
    base_channels: int = 32
    channel_doubling_every: int = 4
    kernel: int = 16
    subsample_every_other_block: bool = True
    attention_heads: int = 8
    embed_dim: int = 256
    dropout_rate: float = 0.2
    input_len: int = 5120
    n_segments: int = 20
    feature_hidden: tuple[int, int] = (64, 32)
    n_features: int = N_FEATURES
    preset: str = "paper"

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_blocks < 1 or self.base_channels < 4:
            raise ConfigError("n_blocks must be >= 1 and base_channels >= 4")
        if self.embed_dim % self.attention_heads != 0:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by {self.attention_heads} heads")
        if self.block_channels()[-1] != self.embed_dim:
            raise ConfigError(
                f"final block channels {self.block_channels()[-1]} must equal embed_dim {self.embed_dim}")
        halvings = sum(self.subsample_schedule())
        if self.input_len != self.n_segments * 2 ** halvings:
            raise ConfigError(
                f"input_len {self.input_len} != n_segments {self.n_segments} * 2^{halvings}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def block_channels(self) -> list[int]:
        return [self.base_channels * 2 ** (i // self.channel_doubling_every) for i in range(self.n_blocks)]

    def subsample_schedule(self) -> list[bool]:
        """Per-block flag; block numbering is 1-based for the alternation rule."""
        if self.subsample_every_other_block:
            return [(i + 1) % 2 == 0 for i in range(self.n_blocks)]
        return [True] * self.n_blocks

    @classmethod
    def paper(cls, n_classes: int) -> "ModelConfig":
        return cls(n_classes=n_classes, preset="paper")

    @classmethod
    def desk(cls, n_classes: int = 2) -> "ModelConfig":
        """Laptop-scale preset: 4 blocks of 8 channels, every block halving 320 -> 20."""
        return cls(
            n_classes=n_classes,
            n_blocks=4,
            base_channels=8,
            subsample_every_other_block=False,
            attention_heads=2,
            embed_dim=8,
            input_len=320,
            preset="desk",
        )


@dataclass
class ForwardOutputs:
    """Everything one forward pass produces; feature fields stay None in base-only mode."""

    logits_base: Tensor
    feat_map: Tensor
    gap_embed: Tensor
    logits_feat: Tensor | None = None
    hidden_h2: Tensor | None = None
    logits_joint: Tensor | None = None


class MultiresBlock(L.Module):
    """Three chained convolutions concatenated, mixed depthwise, plus shortcut.

    Branch widths are C/4, C/4, C/2 of the output channel count, remainder
    to the last branch. Subsampling applies stride 2 on the first branch
    conv and window-2 max pooling on the shortcut. The shortcut gains a
    1x1 projection whenever channels or length change.
    """

    def __init__(self, c_in: int, c_out: int, kernel: int, subsample: bool,
                 dropout_rate: float, rng: np.random.Generator):
        wa = c_out // 4
        wb = c_out // 4
        wc = c_out - wa - wb
        if min(wa, wb, wc) < 1:
            raise ConfigError(f"c_out {c_out} too small to split into three branches")
        self.subsample = subsample
        self.conv_a = L.Conv1d(c_in, wa, kernel, stride=2 if subsample else 1, rng=rng)
        self.conv_b = L.Conv1d(wa, wb, kernel, rng=rng)
        self.conv_c = L.Conv1d(wb, wc, kernel, rng=rng)
        self.mixer = L.DepthwiseConv1d(c_out, 3, rng=rng)
        self.norm = L.BatchNorm1d(c_out)
        self.drop = L.Dropout(dropout_rate)
        self.project = L.Conv1d(c_in, c_out, 1, rng=rng) if (subsample or c_in != c_out) else None

    def branches(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        a = self.conv_a.forward(x)
        b = self.conv_b.forward(a)
        c = self.conv_c.forward(b)
        return a, b, c

    def forward(self, x: Tensor, mode: str, rng: np.random.Generator | None) -> Tensor:
        a, b, c = self.branches(x)
        main = T.concat([a, b, c], axis=1)
        main = self.mixer.forward(main)
        main = self.norm.forward(main, mode)
        main = T.relu(main)
        main = self.drop.forward(main, mode, rng)
        short = x
        if self.subsample:
            short = T.maxpool1d(short)
        if self.project is not None:
            short = self.project.forward(short)
        return main + short


class ExgNet(L.Module):
    """Full network; construction is deterministic for a given seed."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        rng = np.random.default_rng([seed, 0x6E65])
        self.config = config
        channels = config.block_channels()
        schedule = config.subsample_schedule()
        blocks = []
        c_in = 1
        for c_out, sub in zip(channels, schedule):
            blocks.append(MultiresBlock(c_in, c_out, config.kernel, sub, config.dropout_rate, rng))
            c_in = c_out
        self.blocks = blocks
        self.attention = L.MultiHeadAttention(config.embed_dim, config.attention_heads, rng=rng)
        self.classifier = L.Dense(config.embed_dim, config.n_classes, rng=rng)
        h1, h2 = config.feature_hidden
        self.feat_dense1 = L.Dense(config.n_features, h1, rng=rng)
        self.feat_dense2 = L.Dense(h1, h2, rng=rng)
        self.feat_dense3 = L.Dense(h2, config.n_classes, rng=rng)
        self.joint_dense = L.Dense(config.embed_dim + h2, config.n_classes, rng=rng)

    # -- the three paths ----------------------------------------------------

    def feature_map(self, x: Tensor, mode: str = "eval", rng: np.random.Generator | None = None) -> Tensor:
        """Run the block stack: [B, 1, input_len] -> [B, embed_dim, n_segments]."""
        cfg = self.config
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != cfg.input_len:
            raise ShapeError(f"expected input [B, 1, {cfg.input_len}], got {x.shape}")
        h = x
        for blk in self.blocks:
            h = blk.forward(h, mode, rng)
        return h

    def head(self, feat_map: Tensor) -> tuple[Tensor, Tensor]:
        """Attention + pooling + class scores; identical arithmetic in both modes."""
        seq = feat_map.transpose((0, 2, 1))
        att = self.attention.forward(seq)
        gap_embed = T.tmean(att, axis=1)
        return self.classifier.forward(gap_embed), gap_embed

    def feature_branch(self, features: Tensor) -> tuple[Tensor, Tensor]:
        if features.ndim != 2 or features.shape[1] != self.config.n_features:
            raise ShapeError(f"expected features [B, {self.config.n_features}], got {features.shape}")
        h1 = T.relu(self.feat_dense1.forward(features))
        h2 = T.relu(self.feat_dense2.forward(h1))
        return self.feat_dense3.forward(h2), h2

    def joint_head(self, gap_embed: Tensor, hidden_h2: Tensor) -> Tensor:
        return self.joint_dense.forward(T.concat([gap_embed, hidden_h2], axis=1))

    def forward(self, x: Tensor, features: Tensor | None = None, mode: str = "eval",
                rng: np.random.Generator | None = None) -> ForwardOutputs:
        feat_map = self.feature_map(x, mode, rng)
        logits_base, gap_embed = self.head(feat_map)
        out = ForwardOutputs(logits_base=logits_base, feat_map=feat_map, gap_embed=gap_embed)
        if features is not None:
            out.logits_feat, out.hidden_h2 = self.feature_branch(features)
            out.logits_joint = self.joint_head(gap_embed, out.hidden_h2)
        return out

    def param_count(self) -> int:
        return sum(t.data.size for t in self.params().values())


def pad_to_input_len(samples: np.ndarray, input_len: int) -> np.ndarray:
    """Right-pad with zeros up to input_len; longer signals are rejected."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) > input_len:
        raise ShapeError(f"signal of {len(samples)} samples exceeds input_len {input_len}")
    if len(samples) == input_len:
        return samples
    return np.concatenate([samples, np.zeros(input_len - len(samples))])
