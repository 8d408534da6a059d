"""Discriminator token layout, attention oracle, output range and gradients."""

import numpy as np
import pytest
from scipy.special import erf

from srtransgan.autodiff import Rng, Tensor, ops
from srtransgan.discriminator import Discriminator, DiscriminatorConfig, SelfAttentionBlock
from srtransgan.errors import ConfigError, DimensionError

from conftest import module_grad_error, tiny_discriminator_config, unit_gain


def np_layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def mhsa_block_reference(blk: SelfAttentionBlock, h):
    """Loop-per-head transcription of the pre-norm block."""
    lin = lambda layer, x: x @ layer.weight.data + layer.bias.data  # noqa: E731
    n, t, d = h.shape
    dh = d // blk.heads
    y = np_layer_norm(h, blk.norm1.weight.data, blk.norm1.bias.data)
    q, k, v = lin(blk.q, y), lin(blk.k, y), lin(blk.v, y)
    out = np.zeros_like(h)
    for b in range(n):
        for head in range(blk.heads):
            sl = slice(head * dh, (head + 1) * dh)
            s = q[b, :, sl] @ k[b, :, sl].T / np.sqrt(dh)
            a = np.exp(s - s.max(-1, keepdims=True))
            a /= a.sum(-1, keepdims=True)
            out[b, :, sl] = a @ v[b, :, sl]
    r = h + lin(blk.proj, out)
    z = lin(blk.fc1, np_layer_norm(r, blk.norm2.weight.data, blk.norm2.bias.data))
    return r + lin(blk.fc2, 0.5 * z * (1 + erf(z / np.sqrt(2))))


def test_default_geometry_has_225_patches():
    cfg = DiscriminatorConfig()
    assert cfg.num_patches == 225
    assert cfg.patch_dim == 16 * 16 * 6
    d = Discriminator(tiny_discriminator_config(image_size=32, patch_size=8, stride_h=4, stride_w=4), Rng(0))
    x = Tensor(np.zeros((2, 6, 32, 32), dtype=np.float32))
    tokens = d.embed(d.patches(x))
    assert tokens.shape == (2, 7 * 7 + 1, 16)


def test_embedding_rows():
    d = Discriminator(tiny_discriminator_config(), Rng(0))
    r = np.random.default_rng(0)
    d.pos_embed.data[...] = r.normal(size=d.pos_embed.shape)
    x = Tensor(r.random((1, 6, 16, 16)).astype(np.float32))
    p = d.patches(x)
    e = d.embed(p).data[0]
    np.testing.assert_allclose(e[0], d.class_token.data[0] + d.pos_embed.data[0], rtol=1e-6)
    np.testing.assert_allclose(e[1:], p.data[0] @ d.patch_embed.weight.data + d.pos_embed.data[1:], rtol=1e-5, atol=1e-6)


def test_zero_dropout_and_eval_mode_are_identity():
    cfg = tiny_discriminator_config(dropout_rate=0.5)
    d = Discriminator(cfg, Rng(0)).eval()
    x = Tensor(np.random.default_rng(1).random((1, 6, 16, 16)).astype(np.float32))
    a = d.embed(d.patches(x)).data
    b = d.embed(d.patches(x)).data
    np.testing.assert_array_equal(a, b)
    d.train()
    assert not np.array_equal(d.embed(d.patches(x)).data, a)


def test_mhsa_block_matches_reference(f64):
    blk = SelfAttentionBlock(8, 2, 4.0, Rng(0))
    r = np.random.default_rng(2)
    for p in blk.parameters():
        p.data[...] = r.normal(size=p.shape) * 0.5
    h = r.normal(size=(1, 5, 8))
    np.testing.assert_allclose(blk(Tensor(h)).data, mhsa_block_reference(blk, h), rtol=1e-10, atol=1e-10)


def test_zero_query_key_weights_give_uniform_attention(f64):
    blk = SelfAttentionBlock(8, 2, 4.0, Rng(0))
    for layer in (blk.q, blk.k):
        layer.weight.data[...] = 0.0
    blk(Tensor(np.random.default_rng(3).normal(size=(2, 6, 8))))
    np.testing.assert_allclose(blk._last_attention, np.full((2, 2, 6, 6), 1 / 6), rtol=1e-14)


def test_attention_rows_sum_to_one(f64):
    blk = unit_gain(SelfAttentionBlock(8, 4, 2.0, Rng(0)), 4)
    blk(Tensor(np.random.default_rng(4).normal(size=(3, 7, 8)) * 3))
    a = blk._last_attention
    assert (a >= 0).all()
    np.testing.assert_allclose(a.sum(-1), 1.0, rtol=1e-12)


def test_output_is_a_probability():
    d = Discriminator(tiny_discriminator_config(), Rng(0))
    r = np.random.default_rng(5)
    img = Tensor(r.random((4, 3, 16, 16)).astype(np.float32))
    cond = Tensor(r.random((4, 3, 16, 16)).astype(np.float32))
    p = d(img, cond).data
    assert p.shape == (4, 1)
    assert ((p > 0) & (p < 1)).all()


def test_zero_head_gives_one_half():
    d = Discriminator(tiny_discriminator_config(), Rng(0))
    d.head.fill_(0.0)
    x = Tensor(np.random.default_rng(6).random((2, 3, 16, 16)).astype(np.float32))
    np.testing.assert_array_equal(d(x, x).data, np.full((2, 1), 0.5, dtype=np.float32))


def test_input_shape_errors():
    d = Discriminator(tiny_discriminator_config(), Rng(0))
    with pytest.raises(DimensionError):
        d(np.zeros((1, 3, 16, 16)), np.zeros((1, 3, 8, 8)))
    with pytest.raises(DimensionError, match="16"):
        d(np.zeros((1, 3, 8, 8)), np.zeros((1, 3, 8, 8)))


def test_config_validation():
    with pytest.raises(ConfigError):
        DiscriminatorConfig(image_size=16, patch_size=32)
    with pytest.raises(ConfigError):
        DiscriminatorConfig(image_size=16, patch_size=8, stride_h=3)
    with pytest.raises(ConfigError):
        DiscriminatorConfig(embed_dim=10, heads=3)
    with pytest.raises(ConfigError):
        DiscriminatorConfig(dropout_rate=1.0)


def test_key_bias_gradient_is_zero(f64):
    # q.(k + b) shifts every logit in a row by q.b, which softmax ignores
    blk = unit_gain(SelfAttentionBlock(8, 2, 2.0, Rng(0)), 7)
    x = Tensor(np.random.default_rng(8).normal(size=(1, 5, 8)), requires_grad=True)
    ops.sum(ops.mul(blk(x), Tensor(np.random.default_rng(9).normal(size=(1, 5, 8))))).backward()
    assert np.abs(blk.k.bias.grad).max() < 1e-13


def test_grad_attention_block(f64):
    blk = unit_gain(SelfAttentionBlock(8, 2, 2.0, Rng(0)), 7)
    assert module_grad_error(blk, (1, 5, 8), 8, exclude=("k.bias",)) < 1e-4


def test_grad_tiny_discriminator(f64):
    d = unit_gain(Discriminator(tiny_discriminator_config(), Rng(0)), 9)
    r = np.random.default_rng(10)
    cond = Tensor(r.random((1, 3, 16, 16)))
    err = module_grad_error(d, (1, 3, 16, 16), 11, call=lambda x: d.logits(x, cond), exclude=("k.bias",))
    assert err < 1e-4
