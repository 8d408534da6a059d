"""Transformer encoder-decoder generator producing a 2x super-resolved image.

Pipeline for ``levels = 4`` (feature width ``C``, input ``H x W``)::

    F0 = embed(LR)                                   C,   H,   W
    F1 = E1(F0)                                      C,   H,   W
    F2 = E2(down F1)                                 2C,  H/2, W/2
    F3 = E3(down F2)                                 4C,  H/4, W/4
    F4 = E4(down F3)                                 8C,  H/8, W/8
    F5 = D4(R(up F4 ++ F3))                          4C,  H/4, W/4
    F6 = D3(R(up F5 ++ R(up F3 ++ F2)))              2C,  H/2, W/2
    F7 = D2(R(up F6 ++ R(up F2 ++ F1)))              C,   H,   W
    F8 = D1(R(up F1 ++ up F7))                       C/2, 2H,  2W
    F9 = refine(F8)                                  C/2, 2H,  2W
    SR = conv3x3(F9) + bicubic(LR, 2x)               3,   2H,  2W

``++`` is channel concatenation, ``R`` a 1x1 convolution halving channels,
``down``/``up`` a 3x3 convolution followed by pixel (un)shuffle. Other level
counts follow the same recurrence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.rng import Rng
from .autodiff.tensor import Tensor, as_tensor, no_grad
from .errors import ConfigError, DimensionError, PreconditionError
from .io.resample import upscale
from .nn import Conv2d, DepthwiseConv2d, LayerNorm, Module, parameter


@dataclass
class GeneratorConfig:
    levels: int = 4
    stacks: list[int] = field(default_factory=lambda: [4, 6, 6, 8])
    base_channels: int = 48
    heads: list[int] = field(default_factory=lambda: [1, 2, 4, 8])
    kernel_size: int = 3
    refinement_stacks: int = 4
    ffn_expansion: float = 2.66
    normalize_qk: bool = True

    def __post_init__(self):
        self.stacks = [int(s) for s in self.stacks]
        self.heads = [int(h) for h in self.heads]
        self.validate()

    def validate(self) -> None:
        c = self.base_channels
        if self.levels < 2:
            raise ConfigError("generator.levels must be >= 2")
        if len(self.stacks) != self.levels or len(self.heads) != self.levels:
            raise ConfigError(f"generator.stacks and generator.heads need {self.levels} entries")
        if any(s < 1 for s in self.stacks) or self.refinement_stacks < 1:
            raise ConfigError("transformer stack counts must be >= 1")
        if c < 2 or c % 2:
            raise ConfigError(f"generator.base_channels must be even, got {c}")
        if (c // 2) % self.heads[0]:
            raise ConfigError(f"C/2 = {c // 2} not divisible by heads[0] = {self.heads[0]}")
        for i, h in enumerate(self.heads):
            if (c * 2 ** i) % h:
                raise ConfigError(f"level {i + 1} width {c * 2 ** i} not divisible by {h} heads")
        if self.kernel_size % 2 == 0:
            raise ConfigError("generator.kernel_size must be odd")

    @property
    def multiple(self) -> int:
        """Input extents must be divisible by this."""
        return 2 ** (self.levels - 1)

    def width(self, level: int) -> int:
        return self.base_channels * 2 ** (level - 1)

    def to_dict(self) -> dict:
        return asdict(self)


class ChannelAttention(Module):
    """Multi-head attention across channels with depthwise-conv projections.

    Q, K, V come from a 1x1 convolution followed by a depthwise 3x3
    convolution. Each head attends over its ``C / heads`` channels, giving a
    ``(C/heads) x (C/heads)`` attention map scaled by a learnable per-head
    temperature.
    """

    def __init__(self, dim: int, heads: int, rng: Rng, k: int = 3, normalize_qk: bool = True):
        if dim % heads:
            raise DimensionError(f"{dim} channels not divisible by {heads} heads")
        self.heads = heads
        self.normalize_qk = normalize_qk
        self.norm = LayerNorm(dim, axis=1)
        self.qkv = Conv2d(dim, 3 * dim, 1, rng, init="normal")
        self.qkv_dw = DepthwiseConv2d(3 * dim, k, rng)
        self.temperature = parameter(np.ones(heads))
        self.project_out = Conv2d(dim, dim, 1, rng, init="normal")
        self._last_attention = None

    def attention(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if c % self.heads:
            raise DimensionError(f"{c} channels not divisible by {self.heads} heads")
        qkv = self.qkv_dw(self.qkv(self.norm(x)))
        q, k, v = (ops.reshape(t, (n, self.heads, c // self.heads, h * w)) for t in ops.split(qkv, [c, c, c], axis=1))
        if self.normalize_qk:
            q = ops.l2_normalize_lastdim(q)
            k = ops.l2_normalize_lastdim(k)
        logits = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2)))
        attn = ops.softmax_lastdim(ops.mul_along_axis(logits, self.temperature, axis=1))
        self._last_attention = attn.data
        out = ops.matmul(attn, v)
        return self.project_out(ops.reshape(out, (n, c, h, w)))

    def forward(self, x: Tensor) -> Tensor:
        return ops.add(x, self.attention(x))


class GatedFeedForward(Module):
    """Gated depthwise-conv feed-forward: ``x + W_out(gelu(path1) * path2)``.

    Both paths are a 1x1 convolution then a depthwise 3x3 convolution applied
    to the layer-normalised input; they are computed jointly and split.
    """

    def __init__(self, dim: int, expansion: float, rng: Rng, k: int = 3):
        self.hidden = int(dim * expansion)
        self.norm = LayerNorm(dim, axis=1)
        self.project_in = Conv2d(dim, 2 * self.hidden, 1, rng, init="normal")
        self.dw = DepthwiseConv2d(2 * self.hidden, k, rng)
        self.project_out = Conv2d(self.hidden, dim, 1, rng, init="normal")

    def gating(self, x: Tensor) -> Tensor:
        y = self.dw(self.project_in(self.norm(x)))
        gate, value = ops.split(y, [self.hidden, self.hidden], axis=1)
        return ops.mul(ops.gelu(gate), value)

    def forward(self, x: Tensor) -> Tensor:
        return ops.add(x, self.project_out(self.gating(x)))


class TransformerBlock(Module):
    def __init__(self, dim: int, heads: int, cfg: GeneratorConfig, rng: Rng):
        self.attn = ChannelAttention(dim, heads, rng, cfg.kernel_size, cfg.normalize_qk)
        self.ffn = GatedFeedForward(dim, cfg.ffn_expansion, rng, cfg.kernel_size)

    def forward(self, x: Tensor) -> Tensor:
        return self.ffn(self.attn(x))


class TransformerStack(Module):
    def __init__(self, dim: int, count: int, heads: int, cfg: GeneratorConfig, rng: Rng):
        if count < 1:
            raise ConfigError("transformer stack count must be >= 1")
        self.blocks = [TransformerBlock(dim, heads, cfg, rng) for _ in range(count)]

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class Downsample(Module):
    """Half resolution, double channels: conv ``C -> C/2`` then pixel-unshuffle."""

    def __init__(self, dim: int, rng: Rng, k: int = 3):
        if dim % 2:
            raise DimensionError(f"downsample needs even channels, got {dim}")
        self.conv = Conv2d(dim, dim // 2, k, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise DimensionError(f"downsample needs even spatial extents, got {x.shape[2:]}")
        return ops.pixel_unshuffle(self.conv(x), 2)


class Upsample(Module):
    """Double resolution, half channels: conv ``C -> 2C`` then pixel-shuffle."""

    def __init__(self, dim: int, rng: Rng, k: int = 3):
        if dim % 2:
            raise DimensionError(f"upsample needs even channels, got {dim}")
        self.conv = Conv2d(dim, 2 * dim, k, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] % 2:
            raise DimensionError(f"upsample needs even channels, got {x.shape[1]}")
        return ops.pixel_shuffle(self.conv(x), 2)


class ReduceChannels(Module):
    """1x1 convolution mapping ``2C -> C``."""

    def __init__(self, dim_in: int, rng: Rng):
        if dim_in % 2:
            raise DimensionError(f"channel reduction needs even channels, got {dim_in}")
        self.conv = Conv2d(dim_in, dim_in // 2, 1, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] % 2:
            raise DimensionError(f"channel reduction needs even channels, got {x.shape[1]}")
        return self.conv(x)


class Generator(Module):
    """The 2x super-resolution network; apply twice with :meth:`generate_4x`."""

    def __init__(self, cfg: GeneratorConfig | None = None, rng: Rng | None = None):
        cfg = cfg or GeneratorConfig()
        rng = rng or Rng(0)
        self._cfg = cfg
        l, k = cfg.levels, cfg.kernel_size
        c = cfg.base_channels
        w = cfg.width

        self.embed = Conv2d(3, c, k, rng)
        self.encoders = [TransformerStack(w(i), cfg.stacks[i - 1], cfg.heads[i - 1], cfg, rng) for i in range(1, l + 1)]
        self.downs = [Downsample(w(i), rng, k) for i in range(1, l)]

        # deepest decoder: up(F_l) ++ F_{l-1}
        self.up_deep = Upsample(w(l), rng, k)
        self.reduce_deep = ReduceChannels(2 * w(l - 1), rng)
        self.dec_deep = TransformerStack(w(l - 1), cfg.stacks[l - 2], cfg.heads[l - 2], cfg, rng)

        # middle decoders for levels l-1 .. 2, each producing width w(j-1)
        self.mid_up_dec = []
        self.mid_up_enc = []
        self.mid_reduce_skip = []
        self.mid_reduce = []
        self.mid_dec = []
        for j in range(l - 1, 1, -1):
            self.mid_up_dec.append(Upsample(w(j), rng, k))
            self.mid_up_enc.append(Upsample(w(j), rng, k))
            self.mid_reduce_skip.append(ReduceChannels(2 * w(j - 1), rng))
            self.mid_reduce.append(ReduceChannels(2 * w(j - 1), rng))
            self.mid_dec.append(TransformerStack(w(j - 1), cfg.stacks[j - 2], cfg.heads[j - 2], cfg, rng))

        # super-resolution decoder: up(F_1) ++ up(F_last)
        self.up_f1 = Upsample(c, rng, k)
        self.up_last = Upsample(c, rng, k)
        self.reduce_sr = ReduceChannels(c, rng)
        self.dec_sr = TransformerStack(c // 2, cfg.stacks[0], cfg.heads[0], cfg, rng)

        self.refine = TransformerStack(c // 2, cfg.refinement_stacks, cfg.heads[0], cfg, rng)
        self.output = Conv2d(c // 2, 3, k, rng)
        self.stages: dict[str, tuple[int, ...]] = {}

    @property
    def config(self) -> GeneratorConfig:
        return self._cfg

    def check_input(self, lr: Tensor) -> None:
        if lr.ndim != 4 or lr.shape[1] != 3:
            raise PreconditionError(f"generator input must be (N, 3, H, W), got {lr.shape}")
        m = self._cfg.multiple
        for axis, extent in (("height", lr.shape[2]), ("width", lr.shape[3])):
            if extent % m:
                raise PreconditionError(f"input {axis} {extent} is not divisible by {m}")

    def features(self, lr: Tensor) -> Tensor:
        """Run everything up to the output convolution and return F9."""
        lr = as_tensor(lr)
        self.check_input(lr)
        cfg = self._cfg
        l = cfg.levels
        stages = {}
        x = self.embed(lr)
        stages["F0"] = x.shape
        enc = []
        for i in range(l):
            if i > 0:
                x = self.downs[i - 1](x)
            x = self.encoders[i](x)
            enc.append(x)
            stages[f"F{i + 1}"] = x.shape

        d = self.dec_deep(self.reduce_deep(ops.concat_channels([self.up_deep(enc[l - 1]), enc[l - 2]])))
        stages[f"F{l + 1}"] = d.shape
        for idx, j in enumerate(range(l - 1, 1, -1)):
            skip = self.mid_reduce_skip[idx](ops.concat_channels([self.mid_up_enc[idx](enc[j - 1]), enc[j - 2]]))
            d = self.mid_dec[idx](self.mid_reduce[idx](ops.concat_channels([self.mid_up_dec[idx](d), skip])))
            stages[f"F{l + 1 + idx + 1}"] = d.shape

        f_sr = self.dec_sr(self.reduce_sr(ops.concat_channels([self.up_f1(enc[0]), self.up_last(d)])))
        stages[f"F{2 * l}"] = f_sr.shape
        f_ref = self.refine(f_sr)
        stages[f"F{2 * l + 1}"] = f_ref.shape
        self.stages = stages
        return f_ref

    def forward(self, lr, clamp: bool | None = None) -> Tensor:
        """2x super-resolution of ``lr``; output clamped to [0, 1] unless training."""
        lr = as_tensor(lr)
        residual = self.output(self.features(lr))
        sr = ops.add(residual, upscale(lr, 2))
        self.stages["SR"] = sr.shape
        if clamp is None:
            clamp = not self.training
        return ops.clamp(sr, 0.0, 1.0) if clamp else sr

    def generate_4x(self, lr, clamp: bool | None = None) -> Tensor:
        """Apply the 2x network twice with the same parameters."""
        return self.forward(self.forward(lr, clamp=False), clamp=clamp)

    def upscale_image(self, lr, scale: int) -> Tensor:
        if scale == 2:
            return self.forward(lr)
        if scale == 4:
            return self.generate_4x(lr)
        raise PreconditionError(f"scale must be 2 or 4, got {scale}")


def super_resolve(gen: Generator, lr: np.ndarray, scale: int) -> np.ndarray:
    """Inference on one ``(3, H, W)`` image of any size.

    The input is edge-padded up to the generator's size multiple, upscaled,
    and the output cropped to exactly ``scale * H x scale * W``. Edge padding
    leaves the bicubic skip path identical to resizing the unpadded image.
    """
    if scale not in (2, 4):
        raise PreconditionError(f"scale must be 2 or 4, got {scale}")
    lr = np.asarray(lr)
    _, h, w = lr.shape
    m = gen.config.multiple
    ph, pw = (-h) % m, (-w) % m
    padded = np.pad(lr, ((0, 0), (0, ph), (0, pw)), mode="edge") if ph or pw else lr
    was_training = gen.training
    gen.eval()
    try:
        with no_grad():
            sr = gen.upscale_image(Tensor(padded[None].astype(gen.embed.weight.dtype)), scale).data[0]
    finally:
        gen.train(was_training)
    return sr[:, : scale * h, : scale * w]
