"""U-Net with a ResNet-50 encoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .. import engine as E
from ..engine import make_rng
from .layers import BatchNorm2d, Conv2d, ConvBNReLU, DecoderStage, Module

ENCODER_PREFIX = "encoder."


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ResUNetConfig:
    in_channels: int = 10
    num_classes: int = 32
    stem_channels: int = 64
    blocks: tuple[int, ...] = (3, 4, 6, 3)
    bottleneck_widths: tuple[int, ...] = (64, 128, 256, 512)
    expansion: int = 4
    compress_skips: bool = True
    decoder_channels: tuple[int, ...] = (1024, 512, 256, 128, 64)
    dropout_outer: float = 0.2
    dropout_inner: float = 0.4
    input_size: int = 128

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.in_channels < 1:
            raise ConfigError("in_channels must be positive")
        if len(self.blocks) != len(self.bottleneck_widths):
            raise ConfigError("blocks and bottleneck_widths differ in length")
        # skips: stem + every stage but the deepest
        if len(self.decoder_channels) != len(self.blocks) + 1:
            raise ConfigError(
                f"need {len(self.blocks) + 1} decoder stages (skips + 1), got {len(self.decoder_channels)}")
        if self.input_size % (2 ** (len(self.blocks) + 1)):
            raise ConfigError(f"input size {self.input_size} not divisible by the encoder stride")
        for r in (self.dropout_outer, self.dropout_inner):
            if not 0.0 <= r < 1.0:
                raise ConfigError(f"dropout rate {r} outside [0, 1)")

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_json(cls, doc: dict) -> "ResUNetConfig":
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items() if k != "kind"}
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


class Bottleneck(Module):
    def __init__(self, rng, cin: int, width: int, cout: int, stride: int):
        super().__init__()
        self.conv1 = Conv2d(rng, cin, width, 1)
        self.bn1 = BatchNorm2d(width)
        self.conv2 = Conv2d(rng, width, width, 3, stride)
        self.bn2 = BatchNorm2d(width)
        self.conv3 = Conv2d(rng, width, cout, 1)
        self.bn3 = BatchNorm2d(cout)
        if stride != 1 or cin != cout:
            self.downsample = [Conv2d(rng, cin, cout, 1, stride), BatchNorm2d(cout)]
        else:
            self.downsample = []

    def forward(self, x):
        out = E.relu(self.bn1(self.conv1(x)))
        out = E.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        identity = x
        if self.downsample:
            conv, bn = self.downsample
            identity = bn(conv(x))
        return E.relu(E.add(out, identity))


class ResNetEncoder(Module):
    """ResNet-50 trunk returning the feature map of every resolution."""

    def __init__(self, rng, cfg: ResUNetConfig):
        super().__init__()
        self.conv1 = Conv2d(rng, cfg.in_channels, cfg.stem_channels, 7, stride=2, padding=3)
        self.bn1 = BatchNorm2d(cfg.stem_channels)
        cin = cfg.stem_channels
        stages = []
        for i, (n, width) in enumerate(zip(cfg.blocks, cfg.bottleneck_widths)):
            cout = width * cfg.expansion
            blocks = []
            for b in range(n):
                stride = 2 if (b == 0 and i > 0) else 1
                blocks.append(Bottleneck(rng, cin, width, cout, stride))
                cin = cout
            stages.append(_Stage(blocks))
        self.layers = stages
        self.out_channels = [cfg.stem_channels] + [w * cfg.expansion for w in cfg.bottleneck_widths]

    def forward(self, x):
        stem = E.relu(self.bn1(self.conv1(x)))  # stride 2
        feats = [stem]
        out = E.maxpool2d(stem, 3, 2, 1)  # stride 4
        for stage in self.layers:
            out = stage(out)
            feats.append(out)
        return feats  # strides 2, 4, 8, 16, 32


class _Stage(Module):
    def __init__(self, blocks):
        super().__init__()
        self.blocks = blocks

    def children(self):
        for i, b in enumerate(self.blocks):
            yield str(i), b

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return x


class ResUNetDecoder(Module):
    def __init__(self, rng, cfg: ResUNetConfig, skip_channels: list[int], bottom_channels: int):
        super().__init__()
        # deepest skip first
        skips = list(reversed(skip_channels))
        if cfg.compress_skips:
            self.compress = [ConvBNReLU(rng, c, c // 2, k=1) for c in skips]
            skip_out = [c // 2 for c in skips]
        else:
            self.compress = []
            skip_out = list(skips)
        n = len(cfg.decoder_channels)
        stages = []
        cin = bottom_channels
        for i, cout in enumerate(cfg.decoder_channels):
            cskip = skip_out[i] if i < len(skip_out) else 0
            rate = cfg.dropout_outer if i >= n - 2 else cfg.dropout_inner
            stages.append(DecoderStage(rng, cin, cskip, cout, rate))
            cin = cout
        self.stages = stages
        self.head = Conv2d(rng, cin, cfg.num_classes, 1, bias=True)

    def forward(self, feats):
        *skips, x = feats
        skips = list(reversed(skips))
        for i, stage in enumerate(self.stages):
            skip = None
            if i < len(skips):
                skip = self.compress[i](skips[i]) if self.compress else skips[i]
            x = stage(x, skip)
        return self.head(x)


class ResUNet(Module):
    output_stride = 1

    def __init__(self, cfg: ResUNetConfig, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.config = cfg
        rng = make_rng(seed, 1)
        self.encoder = ResNetEncoder(rng, cfg)
        out = self.encoder.out_channels
        self.decoder = ResUNetDecoder(rng, cfg, out[:-1], out[-1])
        self.encoder_frozen = False
        self.set_rng(make_rng(seed, 3))  # dropout stream until a trainer installs its own

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    @property
    def input_size(self) -> int:
        return self.config.input_size

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
            raise E.DimensionError(f"input is {h}x{w}, model expects {self.input_size}x{self.input_size}")
        return self.decoder(self.encoder(x))


def build_resunet(cfg: ResUNetConfig | None = None, seed: int = 0) -> ResUNet:
    return ResUNet(cfg or ResUNetConfig(), seed)


def build_resunet_uncompressed(cfg: ResUNetConfig | None = None, seed: int = 0) -> ResUNet:
    cfg = cfg or ResUNetConfig()
    return ResUNet(ResUNetConfig(**{**asdict(cfg), "compress_skips": False}), seed)
