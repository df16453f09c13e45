"""Input validation helpers.

Waveforms are plain 1-D float arrays at 16 kHz throughout the package; these
helpers normalize dtype/shape and enforce the invariants the DSP code relies
on, in the spirit of sklearn's ``check_array``.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, SampleRateError, SignalIntegrityError

SAMPLE_RATE = 16000


def check_waveform(x, name: str = "signal", allow_empty: bool = False) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        arr = np.squeeze(arr)
        if arr.ndim != 1:
            raise ContractError(f"{name} must be 1-D, got shape {np.shape(x)}")
    if not allow_empty and arr.size == 0:
        raise ContractError(f"{name} is empty")
    if arr.size and not np.all(np.isfinite(arr)):
        raise SignalIntegrityError(f"{name} contains NaN or Inf")
    return arr


def check_sample_rate(sr: int, name: str = "signal") -> int:
    if int(sr) != SAMPLE_RATE:
        raise SampleRateError(f"{name}: sample rate must be {SAMPLE_RATE} Hz, got {sr}")
    return int(sr)


def check_equal_length(a: np.ndarray, b: np.ndarray, names=("a", "b")) -> None:
    if len(a) != len(b):
        raise ContractError(
            f"{names[0]} and {names[1]} must have equal length ({len(a)} != {len(b)})"
        )


def check_block(x, length: int, name: str = "block") -> np.ndarray:
    """Validate a fixed-length processing block without silently resizing."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (length,):
        raise ContractError(f"{name} must have shape ({length},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SignalIntegrityError(f"{name} contains NaN or Inf")
    return arr
