"""Network architecture: configs, receptive fields, shapes, determinism."""

from __future__ import annotations

import numpy as np
import pytest

from ecgxai.engine.tensor import Tensor
from ecgxai.errors import ConfigError, ShapeError
from ecgxai.model import ExgNet, ModelConfig, MultiresBlock, pad_to_input_len


def test_paper_config_channel_plan():
    cfg = ModelConfig.paper(n_classes=6)
    assert cfg.n_blocks == 16
    assert cfg.block_channels() == [32] * 4 + [64] * 4 + [128] * 4 + [256] * 4
    schedule = cfg.subsample_schedule()
    assert sum(schedule) == 8
    assert schedule == [False, True] * 8   # blocks 2, 4, ... halve
    assert cfg.input_len == 20 * 2 ** 8 == 5120
    assert cfg.embed_dim == 256


def test_desk_config_plan():
    cfg = ModelConfig.desk()
    assert cfg.block_channels() == [8, 8, 8, 8]
    assert cfg.subsample_schedule() == [True] * 4
    assert cfg.input_len == 20 * 2 ** 4 == 320
    assert cfg.embed_dim == 8
    assert cfg.attention_heads == 2


def test_config_validation():
    with pytest.raises(ConfigError, match="embed_dim"):
        ModelConfig.desk().__class__(n_classes=2, n_blocks=4, base_channels=8,
                                     subsample_every_other_block=False, attention_heads=3,
                                     embed_dim=8, input_len=320)
    with pytest.raises(ConfigError, match="input_len"):
        ModelConfig(n_classes=2, n_blocks=4, base_channels=8,
                    subsample_every_other_block=False, attention_heads=2,
                    embed_dim=8, input_len=640)
    with pytest.raises(ConfigError, match="final block"):
        ModelConfig(n_classes=2, n_blocks=4, base_channels=8,
                    subsample_every_other_block=False, attention_heads=2,
                    embed_dim=16, input_len=320)
    with pytest.raises(ConfigError):
        ModelConfig(n_classes=1)


def test_branch_receptive_fields_are_16_31_46():
    rng = np.random.default_rng(0)
    block = MultiresBlock(c_in=1, c_out=8, kernel=16, subsample=False,
                          dropout_rate=0.0, rng=rng)
    length, center = 100, 50
    for branch_idx, expected in ((0, 16), (1, 31), (2, 46)):
        x = Tensor(np.zeros((1, 1, length)), requires_grad=True)
        out = block.branches(x)[branch_idx]
        pick = np.zeros(out.shape)
        pick[0, 0, center] = 1.0   # gradient of one output sample at the center
        (out * Tensor(pick)).sum().backward()
        support = np.flatnonzero(x.grad[0, 0])
        assert len(support) == expected
        assert support[-1] - support[0] + 1 == expected  # contiguous


def test_zeroed_main_path_leaves_identity_shortcut():
    rng = np.random.default_rng(1)
    block = MultiresBlock(c_in=4, c_out=4, kernel=5, subsample=False,
                          dropout_rate=0.0, rng=rng)
    assert block.project is None
    for conv in (block.conv_a, block.conv_b, block.conv_c):
        conv.w.data[...] = 0.0
        conv.b.data[...] = 0.0
    block.mixer.w.data[...] = 0.0
    block.mixer.b.data[...] = 0.0
    x = np.random.default_rng(2).normal(size=(2, 4, 12))
    y = block.forward(Tensor(x), mode="eval", rng=None)
    np.testing.assert_allclose(y.data, x, atol=1e-12)


def test_block_projects_shortcut_on_channel_or_length_change():
    rng = np.random.default_rng(3)
    assert MultiresBlock(4, 8, 5, False, 0.0, rng).project is not None   # channels change
    assert MultiresBlock(4, 4, 5, True, 0.0, rng).project is not None    # length changes
    assert MultiresBlock(4, 4, 5, False, 0.0, rng).project is None


def test_block_subsampling_halves_length():
    rng = np.random.default_rng(4)
    block = MultiresBlock(2, 8, 16, True, 0.0, rng)
    y = block.forward(Tensor(np.random.default_rng(5).normal(size=(3, 2, 64))), "eval", None)
    assert y.shape == (3, 8, 32)


def test_desk_forward_shapes():
    model = ExgNet(ModelConfig.desk(), seed=0)
    x = Tensor(np.random.default_rng(6).normal(size=(3, 1, 320)))
    feats = Tensor(np.random.default_rng(7).normal(size=(3, 17)))
    out = model.forward(x, feats, mode="eval")
    assert out.feat_map.shape == (3, 8, 20)
    assert out.logits_base.shape == (3, 2)
    assert out.gap_embed.shape == (3, 8)
    assert out.logits_feat.shape == (3, 2)
    assert out.hidden_h2.shape == (3, 32)
    assert out.logits_joint.shape == (3, 2)


def test_base_only_forward_skips_feature_heads():
    model = ExgNet(ModelConfig.desk(), seed=0)
    out = model.forward(Tensor(np.zeros((1, 1, 320))), mode="eval")
    assert out.logits_feat is None and out.hidden_h2 is None and out.logits_joint is None


def test_forward_input_validation():
    model = ExgNet(ModelConfig.desk(), seed=0)
    with pytest.raises(ShapeError):
        model.feature_map(Tensor(np.zeros((1, 2, 320))))
    with pytest.raises(ShapeError):
        model.feature_map(Tensor(np.zeros((1, 1, 300))))
    with pytest.raises(ShapeError):
        model.feature_branch(Tensor(np.zeros((1, 5))))


def test_construction_is_seed_deterministic():
    a = ExgNet(ModelConfig.desk(), seed=42)
    b = ExgNet(ModelConfig.desk(), seed=42)
    c = ExgNet(ModelConfig.desk(), seed=43)
    sa, sb, sc = a.state(), b.state(), c.state()
    assert set(sa) == set(sb) == set(sc)
    for name in sa:
        np.testing.assert_array_equal(sa[name], sb[name])
    assert any(not np.array_equal(sa[n], sc[n]) for n in sa)


def test_desk_param_count_regression():
    model = ExgNet(ModelConfig.desk(), seed=0)
    assert model.param_count() == 5710


def test_param_and_buffer_naming():
    model = ExgNet(ModelConfig.desk(), seed=0)
    params = model.params()
    assert "blocks.0.conv_a.w" in params
    assert "blocks.3.norm.gamma" in params
    assert "attention.wq.w" in params
    assert "classifier.b" in params
    assert "joint_dense.w" in params
    buffers = model.buffers()
    assert "blocks.0.norm.running_mean" in buffers
    assert "blocks.3.norm.running_var" in buffers


def test_state_roundtrip_preserves_forward():
    rng = np.random.default_rng(8)
    model = ExgNet(ModelConfig.desk(), seed=1)
    x = Tensor(rng.normal(size=(2, 1, 320)))
    before = model.forward(x, mode="eval").logits_base.data.copy()
    snapshot = {k: v.copy() for k, v in model.state().items()}

    other = ExgNet(ModelConfig.desk(), seed=99)
    other.load_state(snapshot)
    after = other.forward(x, mode="eval").logits_base.data
    np.testing.assert_array_equal(before, after)


def test_eval_forward_is_deterministic_and_train_dropout_is_not_identity():
    rng = np.random.default_rng(9)
    model = ExgNet(ModelConfig.desk(), seed=2)
    x = Tensor(rng.normal(size=(2, 1, 320)))
    a = model.forward(x, mode="eval").logits_base.data
    b = model.forward(x, mode="eval").logits_base.data
    np.testing.assert_array_equal(a, b)
    c = model.forward(x, mode="train", rng=np.random.default_rng(0)).logits_base.data
    assert not np.allclose(a, c)


def test_pad_to_input_len():
    x = np.arange(5.0)
    padded = pad_to_input_len(x, 8)
    np.testing.assert_array_equal(padded, [0, 1, 2, 3, 4, 0, 0, 0])
    np.testing.assert_array_equal(pad_to_input_len(x, 5), x)
    with pytest.raises(ShapeError):
        pad_to_input_len(np.zeros(10), 8)
