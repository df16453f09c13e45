"""Bark-scale band mapping, network input features, gains, and masks.

A 100-band triangular filterbank compresses 257-bin power spectra; its
transpose interpolates per-band gains back to per-bin magnitude masks.
Columns of the mapping matrix are normalized to sum to one, so a unit gain
vector interpolates to a unit mask exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .validation import SAMPLE_RATE

LOG_EPS = 1e-10
N_DELTA_COEFFS = 6


def bark_scale(freq_hz):
    """Zwicker arctan warping from Hz to Bark."""
    f = np.asarray(freq_hz, dtype=np.float64)
    return 13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan((f / 7500.0) ** 2)


@dataclass(frozen=True)
class BarkMatrix:
    weights: np.ndarray        # [n_bands, n_bins], columns sum to 1
    band_centers: np.ndarray   # Hz, length n_bands

    @property
    def n_bands(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


def build_bark_matrix(n_bands: int = 100, n_bins: int = 257, sr: int = SAMPLE_RATE) -> BarkMatrix:
    """Triangular bands with centers equally spaced on the Bark axis.

    Each STFT bin distributes its power between the two bands whose centers
    bracket it (linear interpolation on the warped axis), so every column sums
    to one by construction; an explicit renormalization removes float dust.
    """
    if n_bands < 2:
        raise ContractError("n_bands must be >= 2")
    nyquist = sr / 2.0
    bin_freqs = np.arange(n_bins) * nyquist / (n_bins - 1)
    bin_z = bark_scale(bin_freqs)
    centers_z = np.linspace(bark_scale(0.0), bark_scale(nyquist), n_bands)

    W = np.zeros((n_bands, n_bins))
    seg = np.clip(np.searchsorted(centers_z, bin_z, side="right") - 1, 0, n_bands - 2)
    frac = (bin_z - centers_z[seg]) / (centers_z[seg + 1] - centers_z[seg])
    frac = np.clip(frac, 0.0, 1.0)
    cols = np.arange(n_bins)
    W[seg, cols] = 1.0 - frac
    W[seg + 1, cols] += frac
    W /= W.sum(axis=0, keepdims=True)

    # invert the warp on a dense grid to express centers in Hz
    grid = np.linspace(0.0, nyquist, 20001)
    centers_hz = np.interp(centers_z, bark_scale(grid), grid)
    return BarkMatrix(weights=W, band_centers=centers_hz)


def bark_log_power(frames, bm: BarkMatrix) -> np.ndarray:
    """log10 of banded power, ``log10(B |X|^2 + eps)``.

    Accepts a single complex frame ``[n_bins]`` or a stack ``[T, n_bins]``.
    """
    spec = np.asarray(frames)
    power = np.abs(spec) ** 2
    banded = power @ bm.weights.T
    return np.log10(banded + LOG_EPS)


def assemble_features(bark_seq) -> np.ndarray:
    """Concatenate bark powers with causal first/second-order deltas.

    ``bark_seq`` is ``[T, n_bands]``; output is ``[T, n_bands + 2*k]`` with
    ``k = min(6, n_bands)``.  Frames with no history get zero deltas.
    """
    b = np.atleast_2d(np.asarray(bark_seq, dtype=np.float64))
    if b.shape[0] < 1:
        raise ContractError("need at least one frame")
    k = min(N_DELTA_COEFFS, b.shape[1])
    head = b[:, :k]
    d1 = np.zeros_like(head)
    d1[1:] = head[1:] - head[:-1]
    d2 = np.zeros_like(head)
    d2[1:] = d1[1:] - d1[:-1]
    return np.concatenate([b, d1, d2], axis=1)


class FeatureExtractor:
    """Streaming counterpart of :func:`assemble_features` (one frame at a time)."""

    def __init__(self, n_bands: int):
        self.k = min(N_DELTA_COEFFS, n_bands)
        self.reset()

    def reset(self):
        self._prev_bark = None
        self._prev_delta = np.zeros(self.k)

    def push(self, bark_frame: np.ndarray) -> np.ndarray:
        head = np.asarray(bark_frame, dtype=np.float64)[: self.k]
        if self._prev_bark is None:
            d1 = np.zeros(self.k)
        else:
            d1 = head - self._prev_bark
        d2 = d1 - self._prev_delta if self._prev_bark is not None else np.zeros(self.k)
        self._prev_bark = head.copy()
        self._prev_delta = d1
        return np.concatenate([np.asarray(bark_frame, dtype=np.float64), d1, d2])


def target_gain(near_frames, mix_frames, bm: BarkMatrix) -> np.ndarray:
    """Oracle per-band gains, ``min(1, sqrt(band(|S|^2) / band(|Y|^2)))``."""
    s = np.abs(np.asarray(near_frames)) ** 2 @ bm.weights.T
    y = np.abs(np.asarray(mix_frames)) ** 2 @ bm.weights.T
    return np.minimum(1.0, np.sqrt(s / (y + LOG_EPS)))


def gain_to_mask(gains, bm: BarkMatrix) -> np.ndarray:
    """Interpolate band gains to per-bin masks via the transposed mapping."""
    g = np.asarray(gains)
    if g.shape[-1] != bm.n_bands:
        raise ContractError(f"gain vector must have {bm.n_bands} bands")
    return np.clip(g @ bm.weights, 0.0, 1.0)


def apply_mask(mask, frames) -> np.ndarray:
    """Scale magnitudes, preserve phase: elementwise ``mask * Y``."""
    m = np.asarray(mask)
    spec = np.asarray(frames)
    if m.shape[-1] != spec.shape[-1]:
        raise ContractError("mask and spectrum bin counts differ")
    return m * spec
