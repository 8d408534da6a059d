"""The eight acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured numbers;
the lines are repeated in the terminal summary (see ``conftest.py``).
"""

import time
import zlib

import numpy as np
import pytest

from srtransgan.autodiff import Rng, Tensor, default_dtype, no_grad
from srtransgan.cli import main
from srtransgan.discriminator import Discriminator, DiscriminatorConfig, SelfAttentionBlock
from srtransgan.errors import DecodeError
from srtransgan.generator import (
    ChannelAttention,
    Downsample,
    GatedFeedForward,
    Generator,
    GeneratorConfig,
    ReduceChannels,
    TransformerBlock,
    Upsample,
)
from srtransgan.io.checkpoint import ChecksumError, file_digest, load_checkpoint, save_checkpoint
from srtransgan.io.dataset import make_pair
from srtransgan.io.images import load_image, load_pgm, quantize, save_image
from srtransgan.io.resample import downscale, upscale
from srtransgan.metrics import psnr, ssim
from srtransgan.saliency import saliency_map
from srtransgan.training.losses import adversarial_loss_d, reconstruction_loss
from srtransgan.training.optim import Adam
from srtransgan.training.trainer import (
    TrainConfig,
    Trainer,
    load_generator,
    read_log,
    stack_batch,
    train_loop,
)

import conftest
from conftest import fd_error, module_grad_error, tiny_discriminator_config, tiny_generator_config, unit_gain, weighted_sum
from test_metrics import ssim_reference
from test_ops import CASES

GRAD_TOL = 1e-4


def verdict(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title} | {detail}"
    conftest.ACCEPTANCE[n] = line
    print(line)
    assert ok, line


# ------------------------------------------------------------ 1


def op_error(name):
    with default_dtype(np.float64):
        r = np.random.default_rng(zlib.crc32(name.encode()))
        arrays, fn = CASES[name](r)
        inputs = [Tensor(a, requires_grad=True) for a in arrays]
        probe = np.random.default_rng(7).normal(size=fn(*inputs).shape)
        return fd_error(lambda: weighted_sum(fn(*inputs), probe), inputs)


def block_errors():
    with default_dtype(np.float64):
        gen = unit_gain(Generator(tiny_generator_config(), Rng(0)), 3)
        disc = unit_gain(Discriminator(tiny_discriminator_config(), Rng(0)), 9)
        cond = Tensor(np.random.default_rng(10).random((1, 3, 16, 16)))
        mdta_raw = unit_gain(ChannelAttention(4, 2, Rng(0), normalize_qk=False), 11)
        mdta_raw.temperature.data[...] /= 16
        # key biases shift every attention logit of a row equally, so their gradient is exactly zero
        no_kb = ("k.bias",)
        return {
            "mdta_block": module_grad_error(unit_gain(ChannelAttention(4, 2, Rng(0)), 11), (1, 4, 4, 4), 12),
            "mdta_block_unnormalised": module_grad_error(mdta_raw, (1, 4, 4, 4), 13),
            "gdfn_block": module_grad_error(unit_gain(GatedFeedForward(4, 2.66, Rng(0)), 13), (1, 4, 4, 4), 14),
            "generator_transformer_block": module_grad_error(
                unit_gain(TransformerBlock(4, 1, tiny_generator_config(), Rng(0)), 15), (1, 4, 8, 8), 16),
            "mhsa_transformer_block": module_grad_error(
                unit_gain(SelfAttentionBlock(8, 2, 2.0, Rng(0)), 7), (1, 5, 8), 8, exclude=no_kb),
            "downsample": module_grad_error(unit_gain(Downsample(4, Rng(1)), 1), (1, 4, 6, 6), 17),
            "upsample": module_grad_error(unit_gain(Upsample(8, Rng(2)), 2), (1, 8, 3, 3), 18),
            "reduce_channels": module_grad_error(unit_gain(ReduceChannels(8, Rng(3)), 3), (1, 8, 3, 3), 19),
            "tiny_generator": module_grad_error(gen, (1, 3, 8, 8), 20, call=lambda x: gen.forward(x, clamp=False)),
            "tiny_discriminator": module_grad_error(disc, (1, 3, 16, 16), 11,
                                                    call=lambda x: disc.logits(x, cond), exclude=no_kb),
        }


def test_criterion_1_gradient_suite():
    start = time.perf_counter()
    errors = {f"op:{name}": op_error(name) for name in sorted(CASES)}
    errors.update(block_errors())
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    failing = sorted(k for k, v in errors.items() if not v < GRAD_TOL)
    ok = not failing and elapsed < 300
    verdict(1, "finite-difference gradient suite", ok,
            f"{len(errors)} checks, worst {worst} = {errors[worst]:.2e} (< {GRAD_TOL:g}), "
            f"{elapsed:.1f}s (< 300s){'' if not failing else ', failing: ' + ', '.join(failing)}")


# ------------------------------------------------------------ 2

EXPECTED_STAGES = {
    "F0": (1, 8, 8, 8), "F1": (1, 8, 8, 8), "F2": (1, 16, 4, 4), "F3": (1, 32, 2, 2), "F4": (1, 64, 1, 1),
    "F5": (1, 32, 2, 2), "F6": (1, 16, 4, 4), "F7": (1, 8, 8, 8), "F8": (1, 4, 16, 16), "F9": (1, 4, 16, 16),
    "SR": (1, 3, 16, 16),
}


def test_criterion_2_shape_ledger():
    gen = Generator(tiny_generator_config(), Rng(0))
    gen(Tensor(np.random.default_rng(0).random((1, 3, 8, 8)).astype(np.float32)))
    stages = dict(gen.stages)
    four = gen.generate_4x(Tensor(np.zeros((1, 3, 8, 8), dtype=np.float32))).shape
    ok = stages == EXPECTED_STAGES and four == (1, 3, 32, 32)
    verdict(2, "stage shape ledger", ok,
            f"F4={stages.get('F4')} F8={stages.get('F8')} SR={stages.get('SR')} 4x={four}")


# ------------------------------------------------------------ 3


def test_criterion_3_residual_identity(tmp_path):
    gen = Generator(tiny_generator_config(), Rng(0)).fill_(0.0)
    lr = np.random.default_rng(3).random((1, 3, 8, 8)).astype(np.float32)
    exact = np.array_equal(gen.forward(Tensor(lr), clamp=False).data, upscale(lr, 2).data)
    exact4 = np.array_equal(gen.generate_4x(Tensor(lr), clamp=False).data, upscale(upscale(lr, 2), 2).data)

    t = Trainer(tiny_generator_config(), tiny_discriminator_config(), TrainConfig(lr_crop=8))
    t.gen.fill_(0.0)
    save_checkpoint(t.checkpoint(), tmp_path / "zero.srtg")
    save_image(np.random.default_rng(4).random((3, 24, 20)), tmp_path / "in.png")
    code = main(["infer", "--ckpt", str(tmp_path / "zero.srtg"), str(tmp_path / "in.png"), str(tmp_path / "out.png")])
    sr = quantize(load_image(tmp_path / "out.png")).astype(int)
    ref = quantize(upscale(load_image(tmp_path / "in.png"), 2).data).astype(int)
    steps = int(np.abs(sr - ref).max())
    ok = exact and exact4 and code == 0 and steps <= 1
    verdict(3, "zero branch reproduces bicubic", ok,
            f"bit-exact 2x={exact} 4x={exact4}, CLI max diff {steps} quantization step(s)")


# ------------------------------------------------------------ 4


def overfit_pair():
    yy, xx = np.mgrid[0:64, 0:64] / 64
    hr = np.stack([0.5 + 0.3 * np.sin(2 * np.pi * (3 * xx + yy)),
                   0.5 + 0.3 * np.cos(2 * np.pi * 4 * yy * xx),
                   (xx > 0.5) * 0.6 + 0.2]).astype(np.float32)
    return make_pair(hr, 2)


def overfit_trainer(seed=0):
    return Trainer(GeneratorConfig(base_channels=8, stacks=[1, 1, 1, 1]),
                   DiscriminatorConfig(image_size=64, patch_size=16, embed_dim=32, depth=2, heads=4),
                   TrainConfig(lambda_adv=0.0, lr_crop=None, seed=seed))


@pytest.mark.slow
def test_criterion_4_overfit():
    pair = overfit_pair()
    t = overfit_trainer()
    lr, hr = stack_batch([pair])
    start = time.perf_counter()
    first = t.train_step(lr, hr).g_rec_loss
    for _ in range(499):
        t.train_step(lr, hr)
    elapsed = time.perf_counter() - start
    with no_grad():
        final = float(reconstruction_loss(hr, t.gen.forward(lr, clamp=False)).data)
        sr = t.gen.eval().forward(lr).data[0]
    drop = 1 - final / first
    sr_psnr = psnr(sr, pair.hr)
    bic_psnr = psnr(np.clip(upscale(pair.lr, 2).data, 0, 1), pair.hr)
    ok = drop >= 0.9 and sr_psnr > bic_psnr and elapsed < 600
    verdict(4, "overfit one pair in 500 steps", ok,
            f"L_rec {first:.4f} -> {final:.4f} (drop {100 * drop:.1f}% >= 90%), "
            f"PSNR {sr_psnr:.2f} dB vs bicubic {bic_psnr:.2f} dB, {elapsed:.0f}s")


# ------------------------------------------------------------ 5


def smooth_scene(r, n=64):
    yy, xx = np.mgrid[0:n, 0:n] / n
    channels = []
    for _ in range(3):
        v = 0.5
        for a in r.uniform(0, np.pi, 3):
            fx, fy = r.uniform(0.5, 4, 2)
            v = v + r.uniform(0.05, 0.2) * np.sin(2 * np.pi * (fx * xx * np.cos(a) + fy * yy * np.sin(a)) + r.uniform(0, 6))
        channels.append(v)
    return np.clip(np.stack(channels), 0, 1)


def test_criterion_5_discriminator_separates_noise():
    r = np.random.default_rng(0)
    scenes = [smooth_scene(r) for _ in range(8)]
    cfg = DiscriminatorConfig(image_size=32, patch_size=8, stride_h=4, stride_w=4, embed_dim=32, depth=2, heads=4)
    d = Discriminator(cfg, Rng(0))
    opt = Adam(dict(d.named_parameters()), lr=2e-4)

    def batch(n):
        crops = []
        for _ in range(n):
            y, x = r.integers(0, 33, 2)
            crops.append(scenes[r.integers(len(scenes))][:, y:y + 32, x:x + 32])
        real = np.stack(crops).astype(np.float32)
        cond = upscale(downscale(real, 2), 2).data
        return real, r.uniform(0, 1, real.shape).astype(np.float32), cond

    for _ in range(200):
        real, noise, cond = batch(4)
        opt.zero_grad()
        adversarial_loss_d(d.logits(real, cond), d.logits(noise, cond)).backward()
        opt.step()
    d.eval()
    real, noise, cond = batch(64)
    with no_grad():
        pr, pn = d(real, cond).data, d(noise, cond).data
        extreme = d(np.ones_like(real), np.zeros_like(cond)).data
    probs = np.concatenate([pr, pn, extreme]).ravel()
    in_range = bool(((probs > 0) & (probs < 1)).all())
    acc = ((pr > 0.5).sum() + (pn < 0.5).sum()) / (len(pr) + len(pn))
    ok = acc >= 0.95 and in_range
    verdict(5, "tiny discriminator: real crops vs uniform noise", ok,
            f"accuracy {100 * acc:.1f}% (>= 95%) after 200 steps, outputs in (0,1): {in_range} "
            f"[{probs.min():.3f}, {probs.max():.3f}]")


# ------------------------------------------------------------ 6


def test_criterion_6_metric_oracles():
    base = np.random.default_rng(0).uniform(0, 0.9, (3, 16, 16))
    p = psnr(base, base + 0.1)
    psnr_ok = abs(p - 20.0) < 1e-9
    r = np.random.default_rng(1)
    worst = 0.0
    identical = True
    for _ in range(20):
        a = r.random((16, 16))
        b = np.clip(a + r.uniform(0.05, 0.5) * r.normal(size=a.shape), 0, 1)
        worst = max(worst, abs(ssim(a, b) - ssim_reference(a, b)))
        identical &= ssim(a, a) == 1.0
    ok = psnr_ok and worst < 1e-6 and identical
    verdict(6, "metric oracles", ok,
            f"PSNR(uniform 0.1) = {p:.12f} dB, SSIM max |diff| vs reference {worst:.1e} over 20 pairs, "
            f"SSIM(a, a) == 1.0: {identical}")


# ------------------------------------------------------------ 7


def flat_checker_pair():
    yy, xx = np.mgrid[0:64, 0:64]
    checker = ((yy // 2 + xx // 2) % 2) * 0.6 + 0.2
    hr = np.where(xx < 32, 0.5, checker)
    return make_pair(np.stack([hr] * 3).astype(np.float32), 2)


@pytest.mark.slow
def test_criterion_7_saliency(tmp_path):
    pair = flat_checker_pair()
    t = overfit_trainer()
    lr, hr = stack_batch([pair])
    for _ in range(500):
        t.train_step(lr, hr)
    sal = saliency_map(t.gen, pair.lr, pair.hr)
    v = sal.values
    flat, textured = float(v[:, :16].mean()), float(v[:, 16:].mean())

    # and through the CLI: the written 16-bit map keeps the contract
    save_checkpoint(t.checkpoint(), tmp_path / "trained.srtg")
    save_image(pair.lr, tmp_path / "lr.png")
    save_image(pair.hr, tmp_path / "hr.png")
    code = main(["saliency", "--ckpt", str(tmp_path / "trained.srtg"), str(tmp_path / "lr.png"),
                 str(tmp_path / "hr.png"), str(tmp_path / "map.png")])
    raw = load_pgm(tmp_path / "map_raw.pgm") if code == 0 else np.zeros(1)
    ok = (v.shape == (32, 32, 1) and v.min() == 0.0 and v.max() == 1.0 and textured > flat
          and code == 0 and raw.min() == 0.0 and raw.max() == 1.0 and raw[:, 16:].mean() > raw[:, :16].mean())
    verdict(7, "saliency map contract", ok,
            f"shape {v.shape}, min {v.min():g} max {v.max():g}, mean textured {textured:.3f} > flat {flat:.3f}, "
            f"CLI exit {code}")


# ------------------------------------------------------------ 8


def tiny_run(out, seed):
    r = np.random.default_rng(0)
    pairs = [make_pair(r.random((3, 32, 32)).astype(np.float32), 2, f"p{i}") for i in range(3)]
    trainer = Trainer(tiny_generator_config(), tiny_discriminator_config(),
                      TrainConfig(seed=seed, lr_crop=8, steps=20, checkpoint_every=10, learning_rate=1e-3))
    return train_loop(pairs, trainer, out)


def test_criterion_8_determinism_and_persistence(tmp_path):
    a, b = tiny_run(tmp_path / "a", 11), tiny_run(tmp_path / "b", 11)
    logs_equal = (tmp_path / "a" / "train_log.tsv").read_bytes() == (tmp_path / "b" / "train_log.tsv").read_bytes()
    n_records = len(read_log(tmp_path / "a" / "train_log.tsv"))
    hashes_equal = file_digest(a) == file_digest(b)

    ckpt = load_checkpoint(a)
    save_checkpoint(ckpt, tmp_path / "again.srtg")
    resaved = file_digest(tmp_path / "again.srtg") == file_digest(a)
    x = np.random.default_rng(5).random((1, 3, 8, 8)).astype(np.float32)
    g1, g2 = load_generator(a), load_generator(tmp_path / "again.srtg")
    forward_equal = np.array_equal(g1.forward(x).data, g2.forward(x).data)
    t = Trainer.from_checkpoint(ckpt)
    d1 = Discriminator(t.disc.config, Rng(0))
    d1.load_state_dict(ckpt.subset("discriminator."))
    img = np.random.default_rng(6).random((1, 3, 16, 16)).astype(np.float32)
    disc_equal = np.array_equal(d1.eval()(img, img).data, t.disc.eval()(img, img).data)

    buf = bytearray(a.read_bytes())
    rejected = 0
    for pos in (50, len(buf) // 2, len(buf) - 9):
        bad = bytearray(buf)
        bad[pos] ^= 0x10
        (tmp_path / "bad.srtg").write_bytes(bytes(bad))
        try:
            load_checkpoint(tmp_path / "bad.srtg")
        except ChecksumError:
            rejected += 1
        except DecodeError:
            pass
    ok = logs_equal and n_records == 20 and hashes_equal and resaved and forward_equal and disc_equal and rejected == 3
    verdict(8, "determinism and checkpoint persistence", ok,
            f"20-step logs identical: {logs_equal} ({n_records} rows), checkpoint hashes equal: {hashes_equal}, "
            f"round trip byte-identical: {resaved}, forward bit-exact G/D: {forward_equal}/{disc_equal}, "
            f"corruptions rejected by checksum: {rejected}/3")
