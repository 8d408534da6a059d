"""Vision-transformer discriminator scoring (condition, image) pairs.

The candidate image and the bicubically upscaled LR condition are stacked
channel-wise, cut into overlapping square patches, linearly embedded with a
prepended class token and added positional embedding, passed through ``depth``
pre-norm multi-head self-attention blocks, and the final class-token state is
mapped to one logit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import ops
from .autodiff.rng import Rng
from .autodiff.tensor import Tensor, as_tensor
from .errors import ConfigError, DimensionError
from .nn import LayerNorm, Linear, Module, normal, parameter


@dataclass
class DiscriminatorConfig:
    image_size: int = 128
    in_channels: int = 6
    patch_size: int = 16
    stride_h: int | None = None
    stride_w: int | None = None
    embed_dim: int = 384
    depth: int = 4
    heads: int = 6
    mlp_ratio: float = 4.0
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.stride_h is None:
            self.stride_h = max(1, self.patch_size // 2)
        if self.stride_w is None:
            self.stride_w = max(1, self.patch_size // 2)
        self.validate()

    def validate(self) -> None:
        m, k = self.image_size, self.patch_size
        if k > m:
            raise ConfigError(f"patch_size {k} exceeds image_size {m}")
        for name, s in (("stride_h", self.stride_h), ("stride_w", self.stride_w)):
            if s < 1 or (m - k) % s:
                raise ConfigError(f"discriminator.{name} = {s} does not tile image {m} with patch {k}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    @property
    def num_patches(self) -> int:
        m, k = self.image_size, self.patch_size
        return ((m - k) // self.stride_h + 1) * ((m - k) // self.stride_w + 1)

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.in_channels

    def to_dict(self) -> dict:
        return asdict(self)


class SelfAttentionBlock(Module):
    """Pre-norm transformer block: ``h + MHSA(LN(h))`` then ``+ MLP(LN(.))``."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float, rng: Rng):
        self.heads = heads
        self.norm1 = LayerNorm(dim)
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.norm2 = LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)
        self._last_attention = None

    def _split_heads(self, t: Tensor) -> Tensor:
        n, tokens, dim = t.shape
        return ops.transpose(ops.reshape(t, (n, tokens, self.heads, dim // self.heads)), (0, 2, 1, 3))

    def attention(self, x: Tensor) -> Tensor:
        n, tokens, dim = x.shape
        head_dim = dim // self.heads
        q, k, v = (self._split_heads(layer(x)) for layer in (self.q, self.k, self.v))
        logits = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(head_dim))
        weights = ops.softmax_lastdim(logits)
        self._last_attention = weights.data
        out = ops.transpose(ops.matmul(weights, v), (0, 2, 1, 3))
        return self.proj(ops.reshape(out, (n, tokens, dim)))

    def forward(self, h: Tensor) -> Tensor:
        if h.shape[-1] % self.heads:
            raise DimensionError(f"width {h.shape[-1]} not divisible by {self.heads} heads")
        r = ops.add(h, self.attention(self.norm1(h)))
        mlp = self.fc2(ops.gelu(self.fc1(self.norm2(r))))
        return ops.add(r, mlp)


class Discriminator(Module):
    def __init__(self, cfg: DiscriminatorConfig | None = None, rng: Rng | None = None):
        cfg = cfg or DiscriminatorConfig()
        rng = rng or Rng(0)
        self._cfg = cfg
        self._dropout_rng = rng.child()
        de = cfg.embed_dim
        self.patch_embed = Linear(cfg.patch_dim, de, rng, bias=False)
        self.class_token = parameter(normal(rng, (1, de)))
        self.pos_embed = parameter(np.zeros((cfg.num_patches + 1, de)))
        self.blocks = [SelfAttentionBlock(de, cfg.heads, cfg.mlp_ratio, rng) for _ in range(cfg.depth)]
        self.norm = LayerNorm(de)
        self.head = Linear(de, 1, rng)

    @property
    def config(self) -> DiscriminatorConfig:
        return self._cfg

    def patches(self, x: Tensor) -> Tensor:
        cfg = self._cfg
        return ops.extract_patches(x, cfg.patch_size, cfg.stride_h, cfg.stride_w)

    def embed(self, patches: Tensor) -> Tensor:
        """Project patches, prepend the class token, add positions, apply dropout."""
        n = patches.shape[0]
        pe = self.patch_embed(patches)
        ct = ops.reshape(self.class_token, (1, 1, self._cfg.embed_dim))
        ct = ops.concat([ct] * n, axis=0) if n > 1 else ct
        ee = ops.concat([ct, pe], axis=1)
        pos = ops.reshape(self.pos_embed, (1,) + self.pos_embed.shape)
        pos = ops.concat([pos] * n, axis=0) if n > 1 else pos
        return ops.dropout(ops.add(ee, pos), self._cfg.dropout_rate, self._dropout_rng, self.training)

    def logits(self, img, condition) -> Tensor:
        img, condition = as_tensor(img), as_tensor(condition)
        if img.shape != condition.shape:
            raise DimensionError(f"image {img.shape} and condition {condition.shape} differ")
        m = self._cfg.image_size
        if img.ndim != 4 or img.shape[2:] != (m, m):
            raise DimensionError(f"discriminator expects (N, 3, {m}, {m}), got {img.shape}")
        x = ops.concat_channels([img, condition])
        if x.shape[1] != self._cfg.in_channels:
            raise DimensionError(f"discriminator expects {self._cfg.in_channels} input channels, got {x.shape[1]}")
        h = self.embed(self.patches(x))
        for block in self.blocks:
            h = block(h)
        cls = ops.narrow(self.norm(h), 1, 0, 1)
        return ops.reshape(self.head(cls), (img.shape[0], 1))

    def forward(self, img, condition) -> Tensor:
        """Probability in (0, 1) that ``img`` is a real HR image given ``condition``."""
        return ops.sigmoid(self.logits(img, condition))
