"""Dataset preparation: linear AEC, features, and targets per clip.

The linear stage runs once per clip ahead of training; the network then
learns from (mic features, echo-estimate features) to predict bark gains
whose targets come from the clean near-end.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..bark import (
    BarkMatrix,
    assemble_features,
    bark_log_power,
    target_gain,
)
from ..dsp import StftConfig, read_wav_16k, stft
from ..errors import ContractError
from ..linear_aec import KalmanConfig, PartitionedKalmanAec


@dataclass
class PreparedClip:
    feats_mic: np.ndarray    # [T, in_features]
    feats_echo: np.ndarray
    mag_mic: np.ndarray      # [T, bins]
    mag_near: np.ndarray
    gains: np.ndarray        # [T, bands]


@dataclass
class PreparedDataset:
    train: dict      # stacked arrays [N, T, ...]
    val: dict
    n_train: int
    n_val: int

    @staticmethod
    def _stack(clips: list) -> dict:
        return {
            "feats_mic": np.stack([c.feats_mic for c in clips]),
            "feats_echo": np.stack([c.feats_echo for c in clips]),
            "mag_mic": np.stack([c.mag_mic for c in clips]),
            "mag_near": np.stack([c.mag_near for c in clips]),
            "gains": np.stack([c.gains for c in clips]),
        }


def prepare_clip(mic, far, near, stft_cfg: StftConfig, kalman_cfg: KalmanConfig,
                 bark: BarkMatrix, dtype=np.float32) -> PreparedClip:
    aec = PartitionedKalmanAec(kalman_cfg)
    echo_est, _ = aec.process(far, mic)

    spec_mic = stft(mic, stft_cfg)
    spec_echo = stft(echo_est, stft_cfg)
    spec_near = stft(near, stft_cfg)
    feats_mic = assemble_features(bark_log_power(spec_mic, bark))
    feats_echo = assemble_features(bark_log_power(spec_echo, bark))
    gains = target_gain(spec_near, spec_mic, bark)
    return PreparedClip(
        feats_mic=feats_mic.astype(dtype),
        feats_echo=feats_echo.astype(dtype),
        mag_mic=np.abs(spec_mic).astype(dtype),
        mag_near=np.abs(spec_near).astype(dtype),
        gains=gains.astype(dtype),
    )


def prepare_dataset(manifest_path, stft_cfg: StftConfig, kalman_cfg: KalmanConfig,
                    bark: BarkMatrix, val_fraction: float = 0.2, seed: int = 0,
                    dtype=np.float32) -> PreparedDataset:
    """Load a simulator manifest and precompute all training tensors."""
    manifest_path = Path(manifest_path)
    with open(manifest_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ContractError(f"{manifest_path}: empty manifest")
    base = manifest_path.parent

    clips = []
    for row in rows:
        mic = read_wav_16k(base / row["mic_path"])
        far = read_wav_16k(base / row["far_path"])
        near = read_wav_16k(base / row["near_path"])
        clips.append(prepare_clip(mic, far, near, stft_cfg, kalman_cfg, bark, dtype))
    frames = {c.feats_mic.shape[0] for c in clips}
    if len(frames) != 1:
        raise ContractError(f"clips disagree on frame count: {sorted(frames)}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(clips))
    n_val = max(1, int(round(val_fraction * len(clips)))) if len(clips) > 1 else 0
    val_idx = set(order[:n_val].tolist())
    train_clips = [clips[i] for i in range(len(clips)) if i not in val_idx]
    val_clips = [clips[i] for i in range(len(clips)) if i in val_idx]
    if not train_clips:
        raise ContractError("validation split consumed every clip")
    return PreparedDataset(
        train=PreparedDataset._stack(train_clips),
        val=PreparedDataset._stack(val_clips) if val_clips else {},
        n_train=len(train_clips),
        n_val=len(val_clips),
    )
