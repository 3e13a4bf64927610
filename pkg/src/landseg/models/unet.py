"""Baseline UNet predicting on the 100 m grid."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import engine as E
from ..engine import make_rng
from ..taxonomy import UNLABELED
from .layers import Conv2d, ConvBNReLU, DecoderStage, Module
from .resunet import ConfigError

CROP = 120
POOL = 10


@dataclass(frozen=True)
class BaselineUNetConfig:
    in_channels: int = 10
    num_classes: int = 32
    encoder_channels: tuple[int, ...] = (32, 64, 128, 256)
    dropout_outer: float = 0.2
    dropout_inner: float = 0.4
    input_size: int = CROP
    output_pool: int = POOL

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_size % self.output_pool:
            raise ConfigError("input size must be a multiple of the output pool")
        if self.input_size % (2 ** (len(self.encoder_channels) - 1)):
            raise ConfigError(f"input size {self.input_size} does not survive "
                              f"{len(self.encoder_channels) - 1} poolings")

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, doc: dict) -> "BaselineUNetConfig":
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items() if k != "kind"}
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


class _DoubleConv(Module):
    def __init__(self, rng, cin, cout):
        super().__init__()
        self.conv1 = ConvBNReLU(rng, cin, cout)
        self.conv2 = ConvBNReLU(rng, cout, cout)

    def forward(self, x):
        return self.conv2(self.conv1(x))


class _Encoder(Module):
    def __init__(self, rng, cfg: BaselineUNetConfig):
        super().__init__()
        chans = cfg.encoder_channels
        self.levels = [_DoubleConv(rng, cin, cout) for cin, cout in zip((cfg.in_channels,) + chans[:-1], chans)]

    def forward(self, x):
        feats = []
        for i, level in enumerate(self.levels):
            if i:
                x = E.maxpool2d(x, 2, 2)
            x = level(x)
            feats.append(x)
        return feats


class BaselineUNet(Module):
    """4-level UNet; full-resolution logits are mean-pooled 10×10 onto the 100 m grid."""

    def __init__(self, cfg: BaselineUNetConfig, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.config = cfg
        rng = make_rng(seed, 2)
        self.encoder = _Encoder(rng, cfg)
        chans = cfg.encoder_channels
        n = len(chans) - 1
        stages = []
        for i in range(n):
            cin, cskip = chans[n - i], chans[n - i - 1]
            rate = cfg.dropout_outer if i >= n - 2 else cfg.dropout_inner
            stages.append(DecoderStage(rng, cin, cskip, cskip, rate))
        self.decoder = stages
        self.head = Conv2d(rng, chans[0], cfg.num_classes, 1, bias=True)
        self.encoder_frozen = False
        self.set_rng(make_rng(seed, 3))  # dropout stream until a trainer installs its own

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    @property
    def input_size(self) -> int:
        return self.config.input_size

    @property
    def output_stride(self) -> int:
        return self.config.output_pool

    def train(self, mode: bool = True):
        super().train(mode)
        if self.encoder_frozen:
            self.encoder.eval()
        return self

    def forward(self, x):
        n, c, h, w = x.shape
        if c != self.config.in_channels:
            raise E.DimensionError(f"input has {c} channels, model expects {self.config.in_channels}")
        if h != self.input_size or w != self.input_size:
            raise E.DimensionError(f"input is {h}x{w}, baseline expects a {self.input_size}x{self.input_size} crop")
        *skips, x = self.encoder(x)
        for stage, skip in zip(self.decoder, reversed(skips)):
            x = stage(x, skip)
        return E.avgpool2d(self.head(x), self.config.output_pool)


def build_baseline_unet(cfg: BaselineUNetConfig | None = None, seed: int = 0) -> BaselineUNet:
    return BaselineUNet(cfg or BaselineUNetConfig(), seed)


def center_crop(arr: np.ndarray, size: int) -> np.ndarray:
    """Central ``size``×``size`` window over the last two axes."""
    h, w = arr.shape[-2:]
    r, c = (h - size) // 2, (w - size) // 2
    return arr[..., r:r + size, c:c + size]


def pool_labels(y: np.ndarray, crop: int = CROP, block: int = POOL) -> np.ndarray:
    """Majority label per block over a centre crop.

    Unlabeled pixels do not vote; ties go to the smaller code; an all-unlabeled
    block stays 0.
    """
    y = center_crop(np.asarray(y), crop) if y.shape[-1] != crop else np.asarray(y)
    h, w = y.shape
    blocks = y.reshape(h // block, block, w // block, block).transpose(0, 2, 1, 3).reshape(h // block, w // block, -1)
    out = np.zeros(blocks.shape[:2], dtype=y.dtype)
    for i in range(blocks.shape[0]):
        for j in range(blocks.shape[1]):
            vals = blocks[i, j]
            vals = vals[vals != UNLABELED]
            if vals.size:
                codes, counts = np.unique(vals, return_counts=True)  # ascending codes
                out[i, j] = codes[np.argmax(counts)]
    return out
