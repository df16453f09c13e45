"""Partitioned-block frequency-domain adaptive Kalman filter.

Processes 128-sample blocks of far-end and microphone audio and produces the
echo estimate and the residual.  Weights adapt per frequency bin with a
diagonal (scalar per partition/bin) state covariance; the overlap-save
constraint is enforced on the error spectrum by zero-padding the residual
block before its FFT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .validation import check_block, check_waveform

_EPS = 1e-10


@dataclass
class KalmanConfig:
    partitions: int = 10
    fft_len: int = 256
    block_len: int = 128
    transition_factor: float = 0.999
    process_noise_floor: float = 1e-10
    psd_smoothing: float = 0.9
    initial_state_variance: float = 1.0

    def __post_init__(self):
        if self.fft_len != 2 * self.block_len:
            raise ConfigError(
                f"fft_len {self.fft_len} must equal 2 * block_len ({self.block_len})"
            )
        if self.partitions < 1:
            raise ConfigError("partitions must be >= 1")
        if not (0.0 < self.transition_factor < 1.0):
            raise ConfigError("transition_factor must lie in (0, 1)")
        if not (0.0 < self.psd_smoothing < 1.0):
            raise ConfigError("psd_smoothing must lie in (0, 1)")
        if self.process_noise_floor < 0 or self.initial_state_variance < 0:
            raise ConfigError("variances must be nonnegative")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    @property
    def span_samples(self) -> int:
        """Length of the modeled echo path in samples (P * M)."""
        return self.partitions * self.block_len


class PartitionedKalmanAec:
    """One adaptive-filter state per audio stream.

    State mutation is single-threaded per instance; distinct instances are
    independent.
    """

    def __init__(self, cfg: KalmanConfig | None = None, trace=None):
        self.cfg = cfg or KalmanConfig()
        P, K = self.cfg.partitions, self.cfg.n_bins
        self.weights = np.zeros((P, K), dtype=np.complex128)
        self.state_variance = np.full((P, K), float(self.cfg.initial_state_variance))
        self.far_spectra = np.zeros((P, K), dtype=np.complex128)
        self.far_buffer = np.zeros(self.cfg.fft_len)
        self.observation_noise_psd = np.zeros(K)
        self.blocks_processed = 0
        self.trace = trace

    def process_block(self, far_block, mic_block) -> tuple[np.ndarray, np.ndarray]:
        """Advance one block; returns ``(echo_est, residual)`` of length M."""
        cfg = self.cfg
        M = cfg.block_len
        far = check_block(far_block, M, "far_block")
        mic = check_block(mic_block, M, "mic_block")

        self.far_buffer = np.concatenate([self.far_buffer[M:], far])
        self.far_spectra[1:] = self.far_spectra[:-1]
        self.far_spectra[0] = np.fft.rfft(self.far_buffer)
        X = self.far_spectra

        echo_spec = np.sum(self.weights * X, axis=0)
        echo_est = np.fft.irfft(echo_spec, n=cfg.fft_len)[M:]
        residual = mic - echo_est

        err_spec = np.fft.rfft(np.concatenate([np.zeros(M), residual]))

        a = cfg.psd_smoothing
        self.observation_noise_psd = (
            a * self.observation_noise_psd + (1.0 - a) * np.abs(err_spec) ** 2
        )
        # bias-correct the zero-seeded smoother; without this the first blocks
        # see a near-zero noise estimate and the gain overshoots hard
        noise_psd = self.observation_noise_psd / (1.0 - a ** (self.blocks_processed + 1))

        x_pow = np.abs(X) ** 2
        denom = np.sum(x_pow * self.state_variance, axis=0) + noise_psd + _EPS
        gain = self.state_variance * X.conj() / denom[None, :]
        self.weights = self.weights + gain * err_spec[None, :]

        A2 = cfg.transition_factor**2
        shrink = 1.0 - self.state_variance * x_pow / denom[None, :]  # == 1 - K.X, real
        self.state_variance = (
            A2 * shrink * self.state_variance
            + (1.0 - A2) * np.abs(self.weights) ** 2
            + cfg.process_noise_floor
        )

        self.blocks_processed += 1
        if self.trace is not None:
            self.trace(
                block=self.blocks_processed,
                echo_est=echo_est,
                residual=residual,
                weight_norm=float(np.linalg.norm(self.weights)),
            )
        return echo_est, residual

    def process(self, far, mic) -> tuple[np.ndarray, np.ndarray]:
        """Run over whole signals, truncated to full blocks."""
        far = check_waveform(far, "far")
        mic = check_waveform(mic, "mic")
        M = self.cfg.block_len
        n = min(len(far), len(mic)) // M
        echo = np.zeros(n * M)
        res = np.zeros(n * M)
        for i in range(n):
            sl = slice(i * M, (i + 1) * M)
            echo[sl], res[sl] = self.process_block(far[sl], mic[sl])
        return echo, res


def kalman_new(cfg: KalmanConfig | None = None) -> PartitionedKalmanAec:
    return PartitionedKalmanAec(cfg)


def erle(mic, residual, window_s: float = 1.0, sample_rate: int = 16000, cap_db: float = 80.0):
    """Windowed echo return loss enhancement, 10*log10(P_mic / P_res), capped.

    Windows with zero residual power emit the cap.
    """
    mic = check_waveform(mic, "mic")
    residual = check_waveform(residual, "residual")
    if len(mic) != len(residual):
        raise ConfigError("mic and residual must have equal length")
    w = max(1, int(round(window_s * sample_rate)))
    n_win = len(mic) // w
    out = np.empty(n_win)
    tiny = 1e-30
    for i in range(n_win):
        sl = slice(i * w, (i + 1) * w)
        p_mic = float(np.mean(mic[sl] ** 2))
        p_res = float(np.mean(residual[sl] ** 2))
        if p_res <= 0.0:
            out[i] = cap_db
        else:
            out[i] = min(10.0 * np.log10(max(p_mic, tiny) / p_res), cap_db)
    return out
