"""Colour map, normalisation and the input-gradient map."""

import numpy as np
import pytest

from srtransgan.autodiff import Rng
from srtransgan.errors import DimensionError, PreconditionError
from srtransgan.generator import Generator
from srtransgan.io.resample import resize_matrix
from srtransgan.saliency import input_gradient, normalize_map, render_colormap, saliency_map

from conftest import tiny_generator_config


def test_colormap_endpoints_and_midpoint():
    out = render_colormap(np.array([[0.0, 0.5, 1.0]]))
    np.testing.assert_array_equal(out[0], [[0, 0, 255], [0, 255, 0], [255, 0, 0]])
    np.testing.assert_array_equal(render_colormap(np.array([[0.25]]))[0, 0], [0, 128, 128])


def test_colormap_rejects_out_of_range():
    for bad in (-0.01, 1.01, np.nan):
        with pytest.raises(PreconditionError):
            render_colormap(np.array([[bad]]))


def test_normalize_map():
    raw = np.array([[2.0, 4.0], [3.0, 6.0]])
    v = normalize_map(raw)
    assert v.min() == 0.0 and v.max() == 1.0
    np.testing.assert_allclose(v, [[0, 0.5], [0.25, 1]])
    assert not normalize_map(np.full((3, 3), 7.0)).any()


def zero_generator_oracle(lr, hr):
    """Gradient of mean|R lr C^T - hr| through the bicubic skip alone, written with explicit matrices."""
    c, h, w = lr.shape
    hp, wp = h + (-h) % 8, w + (-w) % 8
    # edge padding as matrices, then keep the rows of the upscale that land in the image
    ph = np.eye(h)[np.minimum(np.arange(hp), h - 1)]
    pw = np.eye(w)[np.minimum(np.arange(wp), w - 1)]
    rows = resize_matrix(hp, 2 * hp)[:2 * h] @ ph
    cols = resize_matrix(wp, 2 * wp)[:2 * w] @ pw
    lr64 = lr.astype(np.float64)
    sr = np.stack([rows @ lr64[k] @ cols.T for k in range(c)])
    g = np.sign(sr - hr) / sr.size
    return np.stack([rows.T @ g[k] @ cols for k in range(c)])


@pytest.mark.parametrize("size", [8, 10])
def test_zero_generator_bicubic_adjoint(size):
    gen = Generator(tiny_generator_config(), Rng(0)).fill_(0.0)
    r = np.random.default_rng(size)
    lr = r.random((3, size, size)).astype(np.float32)
    hr = r.random((3, 2 * size, 2 * size)).astype(np.float32)
    grad = input_gradient(gen, lr, hr)
    expected = zero_generator_oracle(lr, hr)
    np.testing.assert_allclose(grad, expected, rtol=1e-4, atol=1e-9)
    sal = saliency_map(gen, lr, hr)
    np.testing.assert_allclose(sal.raw, np.abs(expected).max(axis=0), rtol=1e-4, atol=1e-9)


def test_map_invariants_and_state_restored():
    gen = Generator(tiny_generator_config(), Rng(1))
    gen.train()
    r = np.random.default_rng(2)
    lr = r.random((3, 8, 16)).astype(np.float32)
    hr = r.random((3, 16, 32)).astype(np.float32)
    sal = saliency_map(gen, lr, hr)
    assert sal.shape == (8, 16, 1)
    assert sal.values.min() == 0.0 and sal.values.max() == 1.0
    assert sal.colored.shape == (8, 16, 3) and sal.colored.dtype == np.uint8
    np.testing.assert_array_equal(sal.colored[..., 2][sal.values[..., 0] == 0], 255)
    assert gen.training
    assert all(p.requires_grad for p in gen.parameters())
    assert all(p.grad is None for p in gen.parameters())


def test_identically_zero_gradient_gives_zero_map():
    gen = Generator(tiny_generator_config(), Rng(0)).fill_(0.0)
    lr = np.full((3, 8, 8), 0.5, dtype=np.float32)
    hr = np.full((3, 16, 16), 0.5, dtype=np.float32)  # sr == hr exactly, sign(0) = 0
    sal = saliency_map(gen, lr, hr)
    assert not sal.raw.any() and not sal.values.any()


def test_extent_mismatch():
    gen = Generator(tiny_generator_config(), Rng(0))
    with pytest.raises(DimensionError):
        saliency_map(gen, np.zeros((3, 8, 8)), np.zeros((3, 16, 18)))
