"""Synthetic echo-scenario generation.

Each sample is a quadruple (near, far, echo, mic): the far-end signal is
saturated, convolved with a decaying-noise room response, delayed, and
scaled to a target signal-to-echo ratio against the reverberated
near-end; the microphone is their exact sum.  Every sample draws its own
RNG stream from (seed, index) so generation order does not matter.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .dsp import read_wav_16k, write_wav
from .errors import ConfigError, SilentClipError
from .validation import SAMPLE_RATE, check_waveform

log = logging.getLogger(__name__)

DECAY_60DB = 6.908  # ln(10^3): 60 dB amplitude decay at t = rt60
ACTIVE_FLOOR_DB = 40.0
ACTIVE_FRAME = 256


@dataclass(frozen=True)
class SimConfig:
    ser_db_range: tuple = (-15.0, 15.0)
    delay_range_ms: tuple = (10.0, 512.0)
    rir_len: int = 1024
    rt60_range: tuple = (0.05, 0.3)
    clip_threshold_range: tuple = (0.6, 1.0)
    saturation_drive_range: tuple = (0.5, 4.0)
    farend_only_prob: float = 0.10
    seed: int = 0

    def __post_init__(self):
        for name in ("ser_db_range", "delay_range_ms", "rt60_range",
                     "clip_threshold_range", "saturation_drive_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name} is not well-ordered: ({lo}, {hi})")
        if not 0.0 <= self.farend_only_prob <= 1.0:
            raise ConfigError("farend_only_prob must be in [0,1]")
        if self.rir_len < 2:
            raise ConfigError("rir_len must be >= 2")


@dataclass
class SimSample:
    near: np.ndarray
    far: np.ndarray
    echo: np.ndarray
    mic: np.ndarray
    meta: dict = field(default_factory=dict)


def gen_rir(seed, rt60: float, length: int) -> np.ndarray:
    """Exponentially decaying noise with a unit direct tap, peak-normalized."""
    if rt60 <= 0:
        raise ConfigError("rt60 must be > 0")
    rng = np.random.default_rng(seed)
    t = np.arange(length) / SAMPLE_RATE
    rir = rng.standard_normal(length) * np.exp(-DECAY_60DB * t / rt60)
    onset = int(rng.integers(0, max(1, length // 64)))
    rir[:onset] = 0.0
    rir[onset] = 1.0
    return rir / np.abs(rir).max()


def nonlinear_distort(x, drive: float, clip_threshold: float) -> np.ndarray:
    """Arctan saturation plus hard clip, rescaled to the input RMS."""
    x = check_waveform(x, "x")
    if drive <= 0:
        raise ConfigError("drive must be > 0")
    y = np.arctan(drive * x) / np.arctan(drive)
    y = np.clip(y, -clip_threshold, clip_threshold)
    rms_in = np.sqrt(np.mean(x ** 2))
    rms_out = np.sqrt(np.mean(y ** 2))
    if rms_out > 0:
        y *= rms_in / rms_out
    return y


def frame_powers(x: np.ndarray, frame: int = ACTIVE_FRAME) -> np.ndarray:
    """Per-frame mean power; a signal shorter than one frame is one frame."""
    n = len(x) // frame
    if n == 0:
        return np.array([np.mean(x ** 2)])
    return np.mean(x[: n * frame].reshape(n, frame) ** 2, axis=1)


def active_frame_mask(x: np.ndarray, frame: int = ACTIVE_FRAME) -> np.ndarray:
    """Boolean mask of frames within ACTIVE_FLOOR_DB of the loudest frame."""
    p = frame_powers(x, frame)
    peak = p.max()
    if peak <= 0:
        return np.zeros(p.shape, dtype=bool)
    return p > peak * 10.0 ** (-ACTIVE_FLOOR_DB / 10.0)


def active_power(x: np.ndarray, frame: int = ACTIVE_FRAME) -> float:
    """Mean power over frames within ACTIVE_FLOOR_DB of the loudest frame."""
    p = frame_powers(x, frame)
    act = p[active_frame_mask(x, frame)]
    if act.size == 0:
        return 0.0
    return float(act.mean())


def mix(near, far, cfg: SimConfig, seed) -> SimSample:
    """Build one quadruple; raises SilentClipError when far carries no energy."""
    near = check_waveform(near, "near")
    far = check_waveform(far, "far")
    if len(near) != len(far):
        raise ConfigError("near and far clips must have equal length")
    rng = np.random.default_rng(seed)

    if active_power(far) <= 1e-12:
        raise SilentClipError("far-end clip is silent; resample another clip")

    drive = rng.uniform(*cfg.saturation_drive_range)
    clip_thr = rng.uniform(*cfg.clip_threshold_range)
    rt60 = rng.uniform(*cfg.rt60_range)
    delay_ms = rng.uniform(*cfg.delay_range_ms)
    ser_db = rng.uniform(*cfg.ser_db_range)
    farend_only = rng.uniform() < cfg.farend_only_prob

    rir_far = gen_rir(rng.integers(1 << 31), rt60, cfg.rir_len)
    rir_near = gen_rir(rng.integers(1 << 31), rt60, cfg.rir_len)

    n = len(far)
    echoed = fftconvolve(nonlinear_distort(far, drive, clip_thr), rir_far)[:n]
    d = int(round(delay_ms * SAMPLE_RATE / 1000.0))
    echo = np.zeros(n)
    echo[d:] = echoed[: n - d] if d < n else 0.0

    near_rev = fftconvolve(near, rir_near)[:n]
    if farend_only:
        near_rev = np.zeros(n)
        scenario = "farend_only"
    else:
        scenario = "double_talk"

    p_echo = active_power(echo)
    if p_echo <= 1e-12:
        raise SilentClipError("echo path produced no energy; resample")
    if scenario == "double_talk":
        p_near = active_power(near_rev)
        if p_near <= 1e-12:
            raise SilentClipError("near-end clip is silent; resample")
        echo *= np.sqrt(p_near / p_echo * 10.0 ** (-ser_db / 10.0))

    mic = near_rev + echo
    return SimSample(
        near=near_rev,
        far=far,
        echo=echo,
        mic=mic,
        meta={
            "ser_db": round(float(ser_db), 4),
            "delay_ms": round(float(delay_ms), 4),
            "rt60_s": round(float(rt60), 4),
            "scenario": scenario,
        },
    )


def _speechlike(rng: np.random.Generator, n: int) -> np.ndarray:
    """Modulated multi-band noise used when no speech corpus is available."""
    t = np.arange(n) / SAMPLE_RATE
    sig = np.zeros(n)
    for _ in range(4):
        f0 = rng.uniform(120.0, 400.0)
        harm = rng.integers(1, 8)
        sig += rng.uniform(0.2, 1.0) * np.sin(
            2 * np.pi * f0 * harm * t + rng.uniform(0, 2 * np.pi)
        )
    sig += 0.3 * rng.standard_normal(n)
    # syllabic on/off envelope, ~3 Hz
    env = 0.5 - 0.5 * np.cos(2 * np.pi * rng.uniform(2.0, 4.0) * t + rng.uniform(0, 2 * np.pi))
    gaps = rng.uniform(size=n // 4000 + 1) > 0.25
    env *= np.repeat(gaps, 4000)[:n]
    sig *= env
    peak = np.abs(sig).max()
    return sig / peak * 0.5 if peak > 0 else sig


def synth_speech_clip(seed, length_s: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return _speechlike(rng, int(round(length_s * SAMPLE_RATE)))


def _load_sources(source_dir) -> list:
    files = sorted(Path(source_dir).glob("*.wav"))
    usable = []
    for f in files:
        try:
            usable.append((f.name, read_wav_16k(f)))
        except Exception as exc:  # noqa: BLE001 - skip-and-warn contract
            warnings.warn(f"skipping unreadable source {f}: {exc}", stacklevel=2)
    if not usable:
        raise ConfigError(f"no usable source WAVs in {source_dir}")
    return usable


def make_dataset(cfg: SimConfig, n_samples: int, clip_len_s: float,
                 out_dir, speech_source_dir=None) -> Path:
    """Write n quadruples as WAV files plus a manifest CSV; returns its path.

    Without a source directory, clips are synthesized speech-like signals.
    With one, clips are random equal-length cuts of the provided WAVs
    (which must offer at least two files to keep near/far independent).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clip_len = int(round(clip_len_s * SAMPLE_RATE))
    sources = _load_sources(speech_source_dir) if speech_source_dir else None
    if sources is not None and len(sources) < 2:
        raise ConfigError("need at least 2 source WAVs for independent near/far")

    def draw_clip(rng, exclude=None):
        while True:
            i = int(rng.integers(len(sources)))
            if i == exclude and len(sources) > 1:
                continue
            name, wav = sources[i]
            if len(wav) < clip_len:
                wav = np.pad(wav, (0, clip_len - len(wav)))
            start = int(rng.integers(0, max(1, len(wav) - clip_len + 1)))
            return i, wav[start:start + clip_len]

    rows = []
    for idx in range(n_samples):
        for attempt in range(16):
            rng = np.random.default_rng([cfg.seed, idx, attempt])
            if sources is None:
                near = synth_speech_clip(rng.integers(1 << 31), clip_len_s)
                far = synth_speech_clip(rng.integers(1 << 31), clip_len_s)
            else:
                i, near = draw_clip(rng)
                _, far = draw_clip(rng, exclude=i)
            try:
                sample = mix(near, far, cfg, rng.integers(1 << 31))
                break
            except SilentClipError:
                continue
        else:
            raise SilentClipError(f"could not build a non-silent sample at index {idx}")

        stem = f"sample_{idx:05d}"
        paths = {}
        for chan in ("near", "far", "echo", "mic"):
            p = out / f"{stem}_{chan}.wav"
            write_wav(p, getattr(sample, chan), pcm16=False)
            paths[chan] = p.name
        rows.append({
            "index": idx,
            **{f"{c}_path": paths[c] for c in ("near", "far", "echo", "mic")},
            **sample.meta,
        })
        if (idx + 1) % 100 == 0:
            log.info("simulated %d/%d samples", idx + 1, n_samples)

    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return manifest
