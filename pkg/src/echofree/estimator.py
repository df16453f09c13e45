"""Estimator-style facade over training and streaming inference.

``EchoCanceller`` follows the fit/transform convention: fit runs the
two-stage training recipe on a simulated dataset (manifest path or an
already-prepared dataset) and transform processes (mic, far) pairs through
the full pipeline.  ``LinearEchoCanceller`` wraps just the adaptive filter
as a stateless transformer.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .bark import build_bark_matrix
from .dsp import StftConfig
from .errors import ContractError
from .linear_aec import KalmanConfig, PartitionedKalmanAec
from .model import ModelConfig
from .pipeline import process_file_arrays
from .training import RunConfig, prepare_dataset, train
from .training.data import PreparedDataset
from .validation import check_waveform


def _as_pairs(X):
    """Accept one (mic, far) pair or an iterable of pairs."""
    if isinstance(X, tuple) and len(X) == 2 and np.ndim(X[0]) == 1:
        return [X], True
    pairs = list(X)
    if not pairs:
        raise ContractError("X is empty")
    for p in pairs:
        if len(p) != 2:
            raise ContractError("each element must be a (mic, far) pair")
    return pairs, False


class EchoCanceller(BaseEstimator):
    """Two-stage-trained echo canceller with a streaming transform.

    Parameters mirror the run configuration; fitted state lives in
    ``params_`` (the weight map) and ``history_``.
    """

    def __init__(self, batch_size=16, lr_init=1e-3, stage1_epochs=12,
                 stage2_epochs=20, seed=0, dtype="float32", val_fraction=0.2):
        self.batch_size = batch_size
        self.lr_init = lr_init
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.seed = seed
        self.dtype = dtype
        self.val_fraction = val_fraction

    def _run_config(self) -> RunConfig:
        return RunConfig(
            batch_size=self.batch_size,
            lr_init=self.lr_init,
            stage1_epochs=self.stage1_epochs,
            stage2_epochs=self.stage2_epochs,
            seed=self.seed,
            dtype=self.dtype,
            val_fraction=self.val_fraction,
        )

    def fit(self, X, y=None):
        """Train on a simulator manifest path or a PreparedDataset."""
        model_cfg = ModelConfig()
        bark = build_bark_matrix(model_cfg.out_bands, StftConfig().n_bins)
        if isinstance(X, PreparedDataset):
            dataset = X
        elif isinstance(X, (str, Path)):
            dataset = prepare_dataset(
                X, StftConfig(), KalmanConfig(), bark,
                val_fraction=self.val_fraction, seed=self.seed,
            )
        else:
            raise ContractError(
                "fit expects a manifest path or a PreparedDataset, "
                f"got {type(X).__name__}"
            )
        params, history = train(self._run_config(), dataset, model_cfg, bark)
        self.params_ = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.history_ = history
        return self

    def transform(self, X):
        if not hasattr(self, "params_"):
            raise ContractError("EchoCanceller is not fitted; call fit first")
        pairs, single = _as_pairs(X)
        outs = [process_file_arrays(mic, far, self.params_)[0] for mic, far in pairs]
        return outs[0] if single else outs

    def predict(self, X):
        return self.transform(X)


class LinearEchoCanceller(TransformerMixin, BaseEstimator):
    """Adaptive-filter-only residual extraction as a transformer."""

    def __init__(self, partitions=10, transition_factor=0.999):
        self.partitions = partitions
        self.transition_factor = transition_factor

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        cfg = KalmanConfig(partitions=self.partitions,
                           transition_factor=self.transition_factor)
        pairs, single = _as_pairs(X)
        outs = []
        for mic, far in pairs:
            mic = check_waveform(mic, "mic")
            far = check_waveform(far, "far")
            aec = PartitionedKalmanAec(cfg)
            _, residual = aec.process(far, mic)
            outs.append(residual)
        return outs[0] if single else outs
