"""Post-filter architecture description, parameter ledger, and cost counters.

The network is a dual-branch U-Net over ``[channels, feature, time]`` maps:
depthwise-separable encoder convs with kernel (4, 3) and stride (4, 1)
(ceil-mode zero padding on the feature axis, causal on the time axis), a
GRU + linear bottleneck, and four decoder modules that concatenate a 1x1
skip projection and upsample by subpixel (1x1 conv + feature-axis pixel
shuffle x4, cropped to the mirrored encoder size).  A final linear + sigmoid
maps the 112 recovered features to 100 band gains.

Everything that needs tensor shapes (init, I/O, counters, forward) reads
them from one layout built here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError

UPSAMPLE = 4


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class ModelConfig:
    enc_channels: tuple = (8, 16, 24, 32)
    echo_enc_channels: int = 8
    kernel: tuple = (4, 3)           # (feature, time)
    feature_stride: int = 4
    time_stride: int = 1
    gru_units: int = 192
    fc_units: int = 192
    skip_channels: int = 192         # width of the 1x1 skip projections
    out_bands: int = 100
    in_features: int = 0             # derived from out_bands when 0

    def __post_init__(self):
        if self.in_features == 0:
            object.__setattr__(
                self, "in_features", self.out_bands + 2 * min(6, self.out_bands)
            )
        if len(self.enc_channels) < 2:
            raise ConfigError("need at least two encoder layers")
        if self.kernel != (4, 3) or self.feature_stride != 4 or self.time_stride != 1:
            raise ConfigError("supported geometry is kernel (4, 3), stride (4, 1)")
        if self.fc_units % self.bottleneck_feature != 0:
            raise ConfigError(
                f"fc_units {self.fc_units} must be divisible by the final "
                f"encoder feature size {self.bottleneck_feature}"
            )

    @property
    def dec_channels(self) -> tuple:
        return tuple(reversed(self.enc_channels[:-1])) + (1,)

    @property
    def feature_sizes(self) -> tuple:
        """Feature-axis sizes entering each encoder layer, plus the final one."""
        sizes = [self.in_features]
        for _ in self.enc_channels:
            sizes.append(_ceil_div(sizes[-1], self.feature_stride))
        return tuple(sizes)

    @property
    def bottleneck_feature(self) -> int:
        return self.feature_sizes[-1]

    @property
    def bottleneck_width(self) -> int:
        return self.enc_channels[-1] * self.bottleneck_feature


@dataclass(frozen=True)
class ConvSpec:
    name: str
    in_ch: int
    out_ch: int
    f_in: int
    f_out: int


@dataclass(frozen=True)
class DecoderSpec:
    name: str
    in_ch: int          # decoder-stream channels entering the module
    skip_ch: int        # channels of the paired encoder output
    proj_ch: int        # skip projection width
    out_ch: int
    f_in: int
    f_out: int          # mirrored encoder size after crop
    residual: bool


@dataclass(frozen=True)
class ModelLayout:
    cfg: ModelConfig
    mic_layers: tuple
    echo_layer: ConvSpec
    decoders: tuple
    enc_out_channels: tuple = field(default=())   # concat output first

    @property
    def gru_in(self) -> int:
        return self.cfg.bottleneck_width

    @property
    def dec_in_ch(self) -> int:
        return self.cfg.fc_units // self.cfg.bottleneck_feature


def build_layout(cfg: ModelConfig) -> ModelLayout:
    fs = cfg.feature_sizes
    enc = cfg.enc_channels
    mic_layers = [ConvSpec("enc1_mic", 1, enc[0], fs[0], fs[1])]
    echo_layer = ConvSpec("enc1_echo", 1, cfg.echo_enc_channels, fs[0], fs[1])
    concat_ch = enc[0] + cfg.echo_enc_channels
    enc_out_channels = [concat_ch]
    prev = concat_ch
    for i, ch in enumerate(enc[1:], start=2):
        mic_layers.append(ConvSpec(f"enc{i}", prev, ch, fs[i - 1], fs[i]))
        enc_out_channels.append(ch)
        prev = ch

    dec_specs = []
    depth = len(enc)
    stream_ch = cfg.fc_units // fs[-1]
    f_in = fs[-1]
    for i, out_ch in enumerate(cfg.dec_channels):
        skip_ch = enc_out_channels[depth - 1 - i]
        f_out = fs[depth - 1 - i]
        dec_specs.append(
            DecoderSpec(
                name=f"dec{i + 1}",
                in_ch=stream_ch,
                skip_ch=skip_ch,
                proj_ch=cfg.skip_channels,
                out_ch=out_ch,
                f_in=f_in,
                f_out=f_out,
                residual=(i == depth - 1),
            )
        )
        stream_ch = out_ch
        f_in = f_out
    return ModelLayout(
        cfg=cfg,
        mic_layers=tuple(mic_layers),
        echo_layer=echo_layer,
        decoders=tuple(dec_specs),
        enc_out_channels=tuple(enc_out_channels),
    )


def parameter_shapes(cfg: ModelConfig) -> dict:
    """Ordered name -> shape map for every tensor, running stats included."""
    layout = build_layout(cfg)
    kf, kt = cfg.kernel
    shapes: dict[str, tuple] = {}

    def conv_entry(spec: ConvSpec):
        shapes[f"{spec.name}.dw"] = (spec.in_ch, kf, kt)
        shapes[f"{spec.name}.pw.w"] = (spec.out_ch, spec.in_ch)
        shapes[f"{spec.name}.pw.b"] = (spec.out_ch,)
        bn_entry(spec.name, spec.out_ch)

    def bn_entry(name: str, ch: int):
        for stat in ("gamma", "beta", "mean", "var"):
            shapes[f"{name}.bn.{stat}"] = (ch,)

    conv_entry(layout.mic_layers[0])
    conv_entry(layout.echo_layer)
    for spec in layout.mic_layers[1:]:
        conv_entry(spec)

    H, In = cfg.gru_units, layout.gru_in
    shapes["gru.wx"] = (3 * H, In)
    shapes["gru.wh"] = (3 * H, H)
    shapes["gru.b"] = (3 * H,)
    shapes["fc.w"] = (cfg.fc_units, H)
    shapes["fc.b"] = (cfg.fc_units,)
    bn_entry("fc", cfg.fc_units)

    for spec in layout.decoders:
        shapes[f"{spec.name}.skip.w"] = (spec.proj_ch, spec.skip_ch)
        shapes[f"{spec.name}.skip.b"] = (spec.proj_ch,)
        shapes[f"{spec.name}.up.w"] = (spec.out_ch * UPSAMPLE, spec.in_ch + spec.proj_ch)
        shapes[f"{spec.name}.up.b"] = (spec.out_ch * UPSAMPLE,)
        if spec.residual:
            shapes[f"{spec.name}.res1.w"] = (spec.out_ch, spec.out_ch)
            shapes[f"{spec.name}.res1.b"] = (spec.out_ch,)
            shapes[f"{spec.name}.res2.w"] = (spec.out_ch, spec.out_ch)
            shapes[f"{spec.name}.res2.b"] = (spec.out_ch,)
        bn_entry(spec.name, spec.out_ch)

    shapes["head.w"] = (cfg.out_bands, cfg.in_features)
    shapes["head.b"] = (cfg.out_bands,)
    return shapes


def trainable_names(cfg: ModelConfig) -> list:
    return [n for n in parameter_shapes(cfg) if not n.endswith((".bn.mean", ".bn.var"))]


def count_params(cfg: ModelConfig) -> int:
    """Trainable parameter count; batch-norm running stats are buffers, not params."""
    shapes = parameter_shapes(cfg)
    total = 0
    for name in trainable_names(cfg):
        n = 1
        for d in shapes[name]:
            n *= d
        total += n
    return total


def count_macs_per_frame(cfg: ModelConfig) -> int:
    """Multiply-accumulates of every conv, GRU, and linear op for one frame."""
    layout = build_layout(cfg)
    kf, kt = cfg.kernel
    macs = 0

    def conv_macs(spec: ConvSpec) -> int:
        dw = spec.in_ch * spec.f_out * kf * kt
        pw = spec.f_out * spec.in_ch * spec.out_ch
        return dw + pw

    macs += conv_macs(layout.mic_layers[0]) + conv_macs(layout.echo_layer)
    for spec in layout.mic_layers[1:]:
        macs += conv_macs(spec)

    H, In = cfg.gru_units, layout.gru_in
    macs += 3 * H * (In + H)
    macs += H * cfg.fc_units

    for spec in layout.decoders:
        macs += spec.skip_ch * spec.proj_ch * spec.f_in
        macs += (spec.in_ch + spec.proj_ch) * (spec.out_ch * UPSAMPLE) * spec.f_in
        if spec.residual:
            macs += 2 * spec.out_ch * spec.out_ch * spec.f_out

    macs += cfg.in_features * cfg.out_bands
    return macs


def count_macs_per_second(cfg: ModelConfig, frame_rate: float = 62.5) -> int:
    return int(round(count_macs_per_frame(cfg) * frame_rate))


def summarize(cfg: ModelConfig) -> str:
    """Human-readable per-layer shape table with totals."""
    lines = []
    shapes = parameter_shapes(cfg)
    fs = cfg.feature_sizes
    lines.append(f"input features: {cfg.in_features} -> bands: {cfg.out_bands}")
    lines.append(f"encoder feature ladder: {' -> '.join(str(f) for f in fs)}")
    for name, shape in shapes.items():
        n = 1
        for d in shape:
            n *= d
        lines.append(f"  {name:<16} {str(shape):<16} {n}")
    lines.append(f"total parameters: {count_params(cfg)} (trainable)")
    lines.append(f"MACs/frame: {count_macs_per_frame(cfg)}")
    lines.append(f"MACs/s @62.5 fps: {count_macs_per_second(cfg)}")
    return "\n".join(lines)
