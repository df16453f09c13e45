"""Windowed STFT analysis/synthesis and WAV I/O at 16 kHz.

Analysis uses a periodic Hann window with no center padding: frame ``t``
covers samples ``[t*hop, t*hop + win_len)``.  Synthesis is weighted
overlap-add with per-sample window-energy normalization, so
``istft(stft(x))`` reproduces ``x`` wherever the window envelope is nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError, EmptyInputError
from .validation import SAMPLE_RATE, check_sample_rate, check_waveform

_ENVELOPE_FLOOR = 1e-12


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass
class StftConfig:
    win_len: int = 512
    hop: int = 256
    fft_len: int = 512
    window: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.window is None:
            self.window = periodic_hann(self.win_len)
        self.window = np.asarray(self.window, dtype=np.float64)
        if self.fft_len < self.win_len:
            raise ConfigError(f"fft_len {self.fft_len} < win_len {self.win_len}")
        if self.win_len % self.hop != 0:
            raise ConfigError(f"hop {self.hop} must divide win_len {self.win_len}")
        if self.window.shape != (self.win_len,):
            raise ConfigError("window length must equal win_len")
        # COLA check: the squared-window overlap sum must be bounded away from
        # zero on the steady-state region, otherwise WOLA normalization blows up.
        # Steady state covers each hop phase by all win_len/hop shifted copies.
        phase_env = self.window.reshape(-1, self.hop) ** 2
        if phase_env.sum(axis=0).min() < 1e-6:
            raise ConfigError("window does not satisfy COLA at this hop")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1


def stft(signal, cfg: StftConfig) -> np.ndarray:
    """Short-time Fourier transform.

    Returns a complex array ``[n_frames, fft_len//2 + 1]`` where frame ``t``
    covers samples ``[t*hop, t*hop + win_len)``.
    """
    x = check_waveform(signal, "signal", allow_empty=True)
    if len(x) < cfg.win_len:
        raise EmptyInputError(
            f"signal length {len(x)} is shorter than one window ({cfg.win_len})"
        )
    n_frames = (len(x) - cfg.win_len) // cfg.hop + 1
    idx = cfg.hop * np.arange(n_frames)[:, None] + np.arange(cfg.win_len)[None, :]
    frames = x[idx] * cfg.window[None, :]
    return np.fft.rfft(frames, n=cfg.fft_len, axis=1)


def istft(frames, cfg: StftConfig) -> np.ndarray:
    """Weighted overlap-add synthesis; inverse of :func:`stft` on the interior."""
    spec = np.asarray(frames)
    if spec.ndim == 1:
        spec = spec[None, :]
    if spec.shape[0] == 0:
        raise EmptyInputError("empty frame sequence")
    if spec.shape[1] != cfg.n_bins:
        raise ConfigError(f"frames must have {cfg.n_bins} bins, got {spec.shape[1]}")
    n_frames = spec.shape[0]
    out_len = cfg.win_len + (n_frames - 1) * cfg.hop
    acc = np.zeros(out_len)
    env = np.zeros(out_len)
    blocks = np.fft.irfft(spec, n=cfg.fft_len, axis=1)[:, : cfg.win_len]
    blocks *= cfg.window[None, :]
    w2 = cfg.window**2
    for t in range(n_frames):
        s = t * cfg.hop
        acc[s : s + cfg.win_len] += blocks[t]
        env[s : s + cfg.win_len] += w2
    out = np.zeros(out_len)
    ok = env > _ENVELOPE_FLOOR
    out[ok] = acc[ok] / env[ok]
    return out


def frame_times(n_frames: int, cfg: StftConfig) -> np.ndarray:
    """Start sample of each frame."""
    return cfg.hop * np.arange(n_frames)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono WAV file.

    PCM16 is decoded as ``sample / 32768``; IEEE float is passed through.
    """
    sr, data = wavfile.read(path)
    if data.ndim != 1:
        raise ConfigError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    else:
        raise ConfigError(f"{path}: unsupported WAV sample format {data.dtype}")
    return x, int(sr)


def read_wav_16k(path) -> np.ndarray:
    x, sr = read_wav(path)
    check_sample_rate(sr, str(path))
    return x


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE, pcm16: bool = False) -> None:
    """Write mono audio; float64 by default so round-trips are lossless."""
    x = check_waveform(samples, "samples")
    if pcm16:
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
        wavfile.write(path, sample_rate, q)
    else:
        wavfile.write(path, sample_rate, x)
