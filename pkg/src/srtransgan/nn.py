"""Parameter containers and the handful of layers the networks are built from."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .autodiff import ops
from .autodiff.rng import Rng
from .autodiff.tensor import Tensor, get_default_dtype
from .errors import DimensionError


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data, dtype=get_default_dtype()), requires_grad=True)


def kaiming_uniform(rng: Rng, shape, fan_in: int, a: float = math.sqrt(5.0)) -> np.ndarray:
    # leaky-relu gain with a = sqrt(5) (the usual conv default): bound = 1 / sqrt(fan_in)
    gain = math.sqrt(2.0 / (1.0 + a * a))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


def normal(rng: Rng, shape, std: float = 0.02) -> np.ndarray:
    return rng.normal(std, shape, dtype=get_default_dtype())


class Module:
    """Walks attributes in definition order to enumerate parameters.

    Every public :class:`Tensor` attribute is a parameter; buffers that must
    not be trained go under a leading-underscore name.
    """

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = np.zeros_like(p.data)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise DimensionError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise DimensionError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = np.array(value, dtype=p.dtype)

    def fill_(self, value: float) -> "Module":
        for p in self.parameters():
            p.data[...] = value
        return self

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: Rng, bias: bool = True, init: str = "kaiming"):
        fan_in = cin * k * k
        shape = (cout, cin, k, k)
        w = kaiming_uniform(rng, shape, fan_in) if init == "kaiming" else normal(rng, shape)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(cout)) if bias else None
        self.pad = (k - 1) // 2

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=1, pad=self.pad)


class DepthwiseConv2d(Module):
    def __init__(self, channels: int, k: int, rng: Rng, bias: bool = True):
        self.weight = parameter(kaiming_uniform(rng, (channels, 1, k, k), k * k))
        self.bias = parameter(np.zeros(channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv2d(x, self.weight, self.bias)


class Linear(Module):
    def __init__(self, din: int, dout: int, rng: Rng, bias: bool = True, std: float = 0.02):
        self.weight = parameter(normal(rng, (din, dout), std))
        self.bias = parameter(np.zeros(dout)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, axis: int = -1, eps: float = 1e-5):
        self.weight = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))
        self.axis = axis
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, self.eps, axis=self.axis)
