"""End-to-end streaming processor: linear AEC -> features -> gains -> WOLA.

Audio enters in arbitrary chunk sizes; 128-sample blocks feed the Kalman
filter, and every 256-sample hop a 512-sample window of microphone and
echo-estimate samples becomes one post-filter frame.  Output samples are
emitted once no future frame can touch them, so chunk boundaries never
change the result.  Algorithmic latency is the analysis window plus one
linear-AEC block: 512 + 128 samples (40 ms at 16 kHz).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bark import (
    BarkMatrix,
    FeatureExtractor,
    bark_log_power,
    build_bark_matrix,
    gain_to_mask,
)
from .dsp import StftConfig
from .errors import ConfigError, ContractError
from .linear_aec import KalmanConfig, PartitionedKalmanAec
from .model import ModelConfig, StreamingPostFilter
from .validation import check_waveform

_ENV_FLOOR = 1e-12


class StreamingPipeline:
    """Stateful mic+far -> enhanced-output processor.

    ``oracle_ones`` bypasses the network with unit gains (debug path: the
    output must then reconstruct the microphone signal).  With
    ``collect_intermediates`` the echo estimate, linear residual, gains,
    and masks accumulate for later dumping.
    """

    def __init__(self, params, model_cfg: ModelConfig | None = None,
                 stft_cfg: StftConfig | None = None,
                 kalman_cfg: KalmanConfig | None = None,
                 bark: BarkMatrix | None = None,
                 oracle_ones: bool = False,
                 collect_intermediates: bool = False):
        self.model_cfg = model_cfg or ModelConfig()
        self.stft_cfg = stft_cfg or StftConfig()
        self.kalman_cfg = kalman_cfg or KalmanConfig()
        if 2 * self.kalman_cfg.block_len != self.stft_cfg.hop:
            raise ConfigError(
                f"kalman.block_len*2 ({2 * self.kalman_cfg.block_len}) must equal "
                f"stft.hop ({self.stft_cfg.hop})"
            )
        self.bark = bark or build_bark_matrix(
            self.model_cfg.out_bands, self.stft_cfg.n_bins
        )
        self.oracle_ones = oracle_ones
        self.aec = PartitionedKalmanAec(self.kalman_cfg)
        self.post = None if oracle_ones else StreamingPostFilter(self.model_cfg, params)
        self.fx_mic = FeatureExtractor(self.bark.n_bands)
        self.fx_echo = FeatureExtractor(self.bark.n_bands)
        self.collect = collect_intermediates
        self.intermediates = {"echo_est": [], "residual": [], "gains": [], "masks": []}
        self._pend_mic = np.zeros(0)
        self._pend_far = np.zeros(0)
        self._y = np.zeros(0)      # block-complete mic samples awaiting framing
        self._e = np.zeros(0)      # echo estimate aligned with _y
        self._acc = np.zeros(0)    # synthesis accumulator from the emit point on
        self._env = np.zeros(0)    # window-energy envelope, same alignment
        self._flushed = False

    @property
    def latency_samples(self) -> int:
        return self.stft_cfg.win_len + self.kalman_cfg.block_len

    @property
    def latency_ms(self) -> float:
        return 1000.0 * self.latency_samples / 16000.0

    def process(self, mic_chunk, far_chunk) -> np.ndarray:
        """Feed one chunk pair; returns whatever output became final."""
        if self._flushed:
            raise ContractError("pipeline already flushed; create a new instance")
        mic = check_waveform(mic_chunk, "mic_chunk", allow_empty=True)
        far = check_waveform(far_chunk, "far_chunk", allow_empty=True)
        if len(mic) != len(far):
            raise ContractError(
                f"chunk lengths differ: mic {len(mic)} vs far {len(far)}"
            )
        self._pend_mic = np.concatenate([self._pend_mic, mic])
        self._pend_far = np.concatenate([self._pend_far, far])
        self._run_blocks()
        return self._drain_frames()

    def flush(self) -> np.ndarray:
        """Zero-pad the tail to a whole block, then emit all remaining output."""
        if self._flushed:
            return np.zeros(0)
        self._flushed = True
        M = self.kalman_cfg.block_len
        rem = len(self._pend_mic) % M
        if rem:
            pad = M - rem
            self._pend_mic = np.pad(self._pend_mic, (0, pad))
            self._pend_far = np.pad(self._pend_far, (0, pad))
        # pad far enough that every buffered sample falls inside some window
        tail = self.stft_cfg.win_len
        self._pend_mic = np.pad(self._pend_mic, (0, tail))
        self._pend_far = np.pad(self._pend_far, (0, tail))
        self._run_blocks()
        out = [self._drain_frames()]
        good = self._env > _ENV_FLOOR
        rest = np.zeros_like(self._acc)
        np.divide(self._acc, self._env, out=rest, where=good)
        out.append(rest)
        self._acc = np.zeros(0)
        self._env = np.zeros(0)
        return np.concatenate(out)

    # -- internals --------------------------------------------------------

    def _run_blocks(self):
        M = self.kalman_cfg.block_len
        nblocks = len(self._pend_mic) // M
        if nblocks == 0:
            return
        take = nblocks * M
        mic_b = self._pend_mic[:take]
        far_b = self._pend_far[:take]
        self._pend_mic = self._pend_mic[take:]
        self._pend_far = self._pend_far[take:]
        est = np.empty(take)
        for i in range(nblocks):
            sl = slice(i * M, (i + 1) * M)
            echo_est, residual = self.aec.process_block(far_b[sl], mic_b[sl])
            est[sl] = echo_est
            if self.collect:
                self.intermediates["echo_est"].append(echo_est.copy())
                self.intermediates["residual"].append(residual.copy())
        self._y = np.concatenate([self._y, mic_b])
        self._e = np.concatenate([self._e, est])

    def _drain_frames(self) -> np.ndarray:
        cfg = self.stft_cfg
        W, H = cfg.win_len, cfg.hop
        win = cfg.window
        out = []
        while len(self._y) >= W:
            Y = np.fft.rfft(self._y[:W] * win, n=cfg.fft_len)
            E = np.fft.rfft(self._e[:W] * win, n=cfg.fft_len)
            if self.oracle_ones:
                gains = np.ones(self.bark.n_bands)
            else:
                fm = self.fx_mic.push(bark_log_power(Y, self.bark))
                fe = self.fx_echo.push(bark_log_power(E, self.bark))
                gains = np.asarray(
                    self.post.forward_frame(fm, fe), dtype=np.float64
                )
            mask = gain_to_mask(gains, self.bark)
            if self.collect:
                self.intermediates["gains"].append(gains.copy())
                self.intermediates["masks"].append(mask.copy())
            seg = np.fft.irfft(mask * Y, n=cfg.fft_len)[:W] * win
            if len(self._acc) < W:
                grow = W - len(self._acc)
                self._acc = np.pad(self._acc, (0, grow))
                self._env = np.pad(self._env, (0, grow))
            self._acc[:W] += seg
            self._env[:W] += win * win
            # samples [0, H) cannot be touched by any later frame
            emit = np.zeros(H)
            good = self._env[:H] > _ENV_FLOOR
            np.divide(self._acc[:H], self._env[:H], out=emit, where=good)
            out.append(emit)
            self._acc = self._acc[H:]
            self._env = self._env[H:]
            self._y = self._y[H:]
            self._e = self._e[H:]
        return np.concatenate(out) if out else np.zeros(0)

    def dump_intermediates(self, out_dir) -> None:
        """Write collected arrays as raw float32 plus a JSON sidecar."""
        if not self.collect:
            raise ContractError("pipeline was not collecting intermediates")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        sidecar = {}
        for name, chunks in self.intermediates.items():
            arr = (np.stack(chunks) if chunks else np.zeros((0,))).astype(np.float32)
            path = out / f"{name}.f32"
            arr.tofile(path)
            sidecar[name] = {"file": path.name, "dtype": "float32",
                             "shape": list(arr.shape)}
        with open(out / "intermediates.json", "w") as fh:
            json.dump(sidecar, fh, indent=2)


def process_file_arrays(mic, far, params, chunk: int | None = None,
                        **pipe_kwargs) -> tuple[np.ndarray, StreamingPipeline]:
    """Run the full pipeline over arrays; returns (output trimmed to input
    length, pipeline) so callers can inspect state or intermediates."""
    mic = check_waveform(mic, "mic")
    far = check_waveform(far, "far")
    if len(mic) != len(far):
        n = max(len(mic), len(far))
        mic = np.pad(mic, (0, n - len(mic)))
        far = np.pad(far, (0, n - len(far)))
    pipe = StreamingPipeline(params, **pipe_kwargs)
    pieces = []
    step = chunk or len(mic)
    for start in range(0, len(mic), step):
        pieces.append(pipe.process(mic[start:start + step], far[start:start + step]))
    pieces.append(pipe.flush())
    out = np.concatenate(pieces)
    if len(out) < len(mic):
        out = np.pad(out, (0, len(mic) - len(out)))
    return out[:len(mic)], pipe
