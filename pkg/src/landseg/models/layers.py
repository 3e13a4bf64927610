"""Module tree and the layers both model families are built from."""
from __future__ import annotations

import zlib
from collections import OrderedDict
from typing import Iterator

import numpy as np

from .. import engine as E
from ..engine import Tensor


class Module:
    """Container with named parameters (tensors) and buffers (plain arrays).

    Children are discovered from instance attributes in assignment order, which
    fixes parameter naming and initialization order.
    """

    def __init__(self):
        self.training = True
        self.rng: np.random.Generator | None = None

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def _own_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield name, value

    def _own_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(())

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._own_parameters():
            yield prefix + name, p
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._own_buffers():
            yield prefix + name, b
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def param_count(self, trainable_only: bool = False) -> int:
        return sum(p.data.size for p in self.parameters() if p.requires_grad or not trainable_only)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((n, p.data) for n, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def set_rng(self, rng: np.random.Generator | None) -> None:
        for m in self.modules():
            m.rng = rng

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def checksum(self, prefix: str = "") -> int:
        """CRC32 over every parameter and buffer whose name starts with ``prefix``."""
        crc = 0
        for name, arr in self.state_dict().items():
            if name.startswith(prefix):
                crc = zlib.crc32(name.encode(), crc)
                crc = zlib.crc32(np.ascontiguousarray(arr).tobytes(), crc)
        return crc

    def __call__(self, *args):
        return self.forward(*args)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape, dtype=np.float32) * np.float32(np.sqrt(2.0 / fan_in)))


class Conv2d(Module):
    def __init__(self, rng, cin: int, cout: int, k: int, stride: int = 1, padding: int | None = None,
                 bias: bool = False):
        super().__init__()
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.weight = Tensor(he_normal(rng, (cout, cin, k, k), cin * k * k), requires_grad=True)
        if bias:
            self.bias = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)
        else:
            self.bias = None

    def forward(self, x):
        return E.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    momentum = 0.1
    eps = 1e-5

    def __init__(self, channels: int):
        super().__init__()
        self.weight = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)

    def _own_buffers(self):
        yield "running_mean", self.running_mean
        yield "running_var", self.running_var

    def forward(self, x):
        return E.batchnorm2d(x, self.weight, self.bias, self.running_mean, self.running_var,
                             self.training, self.momentum, self.eps)


class ConvBNReLU(Module):
    def __init__(self, rng, cin: int, cout: int, k: int = 3, stride: int = 1):
        super().__init__()
        self.conv = Conv2d(rng, cin, cout, k, stride)
        self.bn = BatchNorm2d(cout)

    def forward(self, x):
        return E.relu(self.bn(self.conv(x)))


class Dropout(Module):
    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise E.ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x):
        return E.dropout(x, self.rate, self.training, self.rng)


class DecoderStage(Module):
    """Upsample ×2, optionally concatenate a skip, two conv-BN-ReLU blocks, dropout."""

    def __init__(self, rng, cin: int, cskip: int, cout: int, dropout: float, upsample: bool = True):
        super().__init__()
        self.upsample = upsample
        self.conv1 = ConvBNReLU(rng, cin + cskip, cout)
        self.conv2 = ConvBNReLU(rng, cout, cout)
        self.drop = Dropout(dropout)

    def forward(self, x, skip=None):
        if self.upsample:
            x = E.upsample2x(x)
        if skip is not None:
            x = E.concat_channels(x, skip)
        return self.drop(self.conv2(self.conv1(x)))
