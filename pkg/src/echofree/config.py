"""Sectioned key=value configuration for the whole pipeline.

One INI-style file carries [stft], [kalman], [model], [sim], [train], and
[paths]; absent keys fall back to the published defaults.  The shipped
reference configuration reproduces those defaults; the desk profile shrinks
the data and batch sizes for CPU-scale runs.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields as dc_fields

from .dsp import StftConfig
from .errors import ConfigError
from .linear_aec import KalmanConfig
from .model import ModelConfig
from .simulate import SimConfig
from .training.trainer import RunConfig


@dataclass(frozen=True)
class PipelineConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    kalman: KalmanConfig = field(default_factory=KalmanConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    train: RunConfig = field(default_factory=RunConfig)
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if 2 * self.kalman.block_len != self.stft.hop:
            raise ConfigError(
                "kalman.block_len x 2 must equal stft.hop "
                f"({self.kalman.block_len} x 2 != {self.stft.hop})"
            )


def _parse_value(raw: str, like):
    if isinstance(like, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        kind = float if any(isinstance(v, float) for v in like) else int
        return tuple(kind(p) for p in parts)
    return raw


def _build_section(cls, section, name: str):
    defaults = cls()
    kw = {}
    known = {f.name: getattr(defaults, f.name) for f in dc_fields(cls) if f.init}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] has unknown key '{key}'")
        try:
            kw[key] = _parse_value(raw, known[key])
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from exc
    return cls(**kw)


def load_pipeline_config(path) -> PipelineConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    kw = {}
    sections = {
        "stft": StftConfig,
        "kalman": KalmanConfig,
        "model": ModelConfig,
        "sim": SimConfig,
    }
    for name, cls in sections.items():
        if parser.has_section(name):
            kw[name] = _build_section(cls, parser[name], name)
    if parser.has_section("train") or parser.has_section("stage1") or parser.has_section("stage2"):
        tkw = {}
        if parser.has_section("train"):
            run_defaults = RunConfig()
            known = {f.name: getattr(run_defaults, f.name) for f in dc_fields(RunConfig)}
            for key, raw in parser["train"].items():
                if key not in known:
                    raise ConfigError(f"[train] has unknown key '{key}'")
                tkw[key] = _parse_value(raw, known[key])
        for stage in (1, 2):
            sec = f"stage{stage}"
            if parser.has_section(sec) and "epochs" in parser[sec]:
                tkw[f"stage{stage}_epochs"] = parser.getint(sec, "epochs")
        kw["train"] = RunConfig(**tkw)
    if parser.has_section("paths"):
        kw["paths"] = dict(parser["paths"])
    return PipelineConfig(**kw)


REFERENCE_CONFIG = """\
# Reference configuration: published defaults.
[stft]
win_len = 512
hop = 256
fft_len = 512

[kalman]
partitions = 10
fft_len = 256
block_len = 128
transition_factor = 0.999
process_noise_floor = 1e-10
psd_smoothing = 0.9
initial_state_variance = 1.0

[model]
gru_units = 192
fc_units = 192
skip_channels = 192
out_bands = 100

[sim]
ser_db_range = -15 15
delay_range_ms = 10 512
rir_len = 1024
rt60_range = 0.05 0.3
farend_only_prob = 0.10
seed = 0

[train]
batch_size = 128
lr_init = 0.001
lr_factor = 0.5
lr_floor = 1e-5
plateau_patience = 5
early_stop_patience = 10
seed = 0
dtype = float32

[stage1]
epochs = 30

[stage2]
epochs = 30
"""

DESK_CONFIG = """\
# Desk profile: CPU-scale training and simulation overrides.
[sim]
delay_range_ms = 10 40
rir_len = 1024
rt60_range = 0.05 0.08
# heavier far-end-only exposure than the deployment prior: suppression-focused
farend_only_prob = 0.5
seed = 0

[train]
batch_size = 16
lr_init = 0.001
seed = 0
dtype = float32
val_fraction = 0.2

[stage1]
epochs = 15

[stage2]
epochs = 30
"""


def write_reference_config(path, desk: bool = False) -> None:
    with open(path, "w") as fh:
        fh.write(DESK_CONFIG if desk else REFERENCE_CONFIG)
