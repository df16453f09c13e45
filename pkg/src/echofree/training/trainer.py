"""Two-stage training driver with plateau scheduling and early stopping."""

from __future__ import annotations

import configparser
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..bark import BarkMatrix
from ..errors import ConfigError, ContractError, TrainingDivergedError
from ..model import ModelConfig, PostFilterNet, init_params, save_params
from .adam import AdamState, adam_step
from .data import PreparedDataset
from .losses import (
    ProxyEmbeddingProvider,
    bark_gain_loss,
    bark_gain_loss_grad,
    ssl_loss,
    ssl_loss_grad,
    stage_loss,
)

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "stage", "lr", "train_loss", "val_loss",
                  "val_L_bark", "val_L_ssl")


@dataclass(frozen=True)
class RunConfig:
    batch_size: int = 128
    lr_init: float = 1e-3
    lr_factor: float = 0.5
    lr_floor: float = 1e-5
    plateau_patience: int = 5
    early_stop_patience: int = 10
    improve_eps: float = 1e-5
    stage1_epochs: int = 30
    stage2_epochs: int = 30
    seed: int = 0
    dtype: str = "float32"
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.batch_size < 1 or self.lr_init <= 0 or not 0 < self.lr_factor < 1:
            raise ConfigError("invalid optimizer settings")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")


def load_run_config(path) -> RunConfig:
    """Read a key = value run config with optional per-stage sections."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read run config {path}")
    kw = {}
    if parser.has_section("train"):
        t = parser["train"]
        for key, cast in (("batch_size", int), ("lr_init", float), ("lr_factor", float),
                          ("lr_floor", float), ("plateau_patience", int),
                          ("early_stop_patience", int), ("improve_eps", float),
                          ("seed", int), ("val_fraction", float), ("dtype", str)):
            if key in t:
                kw[key] = cast(t[key])
    for stage in (1, 2):
        sec = f"stage{stage}"
        if parser.has_section(sec) and "epochs" in parser[sec]:
            kw[f"stage{stage}_epochs"] = parser.getint(sec, "epochs")
    try:
        return RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad run config {path}: {exc}") from exc


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)

    def add(self, **kw):
        self.rows.append({k: kw.get(k) for k in HISTORY_FIELDS})

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
            writer.writeheader()
            writer.writerows(self.rows)

    def stage_rows(self, stage: int) -> list:
        return [r for r in self.rows if r["stage"] == stage]


class _StageLoss:
    """Forward/backward of the stage loss on one batch."""

    def __init__(self, net: PostFilterNet, bark: BarkMatrix, provider):
        self.net = net
        self.bark = bark
        self.provider = provider

    def forward_backward(self, params, batch, stage):
        gains, cache, bn_updates = self.net.forward_with_cache(
            params, batch["feats_mic"], batch["feats_echo"], training=True
        )
        l_bark, l_ssl, dgains = self._loss_and_dgains(gains, batch, stage)
        grads = self.net.backward(params, cache, dgains)
        return stage_loss(stage, l_bark, l_ssl), grads, bn_updates

    def evaluate(self, params, batch, stage):
        gains = self.net.forward_sequence(
            params, batch["feats_mic"], batch["feats_echo"], training=False
        )
        l_bark = bark_gain_loss(gains, batch["gains"])
        w = self.bark.weights
        mask = np.clip(np.asarray(gains, dtype=np.float64) @ w, 0.0, 1.0)
        l_ssl = ssl_loss(self.provider, mask * batch["mag_mic"], batch["mag_near"])
        return stage_loss(stage, l_bark, l_ssl), l_bark, l_ssl

    def _loss_and_dgains(self, gains, batch, stage):
        g64 = np.asarray(gains, dtype=np.float64)
        w = self.bark.weights
        mask = g64 @ w
        clipped = np.clip(mask, 0.0, 1.0)
        est_mag = clipped * batch["mag_mic"]
        l_ssl, dmag = ssl_loss_grad(self.provider, est_mag, batch["mag_near"])
        dmask = dmag * batch["mag_mic"]
        dmask = np.where((mask > 0.0) & (mask < 1.0), dmask, 0.0)
        dg_ssl = dmask @ w.T
        l_bark = bark_gain_loss(g64, batch["gains"])
        if stage == 1:
            dgains = dg_ssl
        else:
            dg_bark = bark_gain_loss_grad(g64, batch["gains"])
            dgains = 10.0 * dg_bark + 0.5 * dg_ssl
        return l_bark, l_ssl, dgains


def _dump_last_finite(out, last_finite):
    if out is None:
        return None
    path = out / "diverged_last_finite.efwt"
    save_params(path, last_finite)
    return path


def _batch_slice(data: dict, idx) -> dict:
    return {k: v[idx] for k, v in data.items()}


def _cast(data: dict, dtype) -> dict:
    return {k: np.asarray(v, dtype=dtype) for k, v in data.items()}


def train(run_cfg: RunConfig, dataset: PreparedDataset, model_cfg: ModelConfig,
          bark: BarkMatrix, stage_plan=(1, 2), out_dir=None,
          init_seed: int | None = None, initial_params: dict | None = None,
          initial_lr: float | None = None):
    """Run the stage plan; returns (params, TrainHistory).

    ``initial_params``/``initial_lr`` resume from an earlier stage's
    checkpoint.  On divergence the last finite epoch's weights are written
    (when ``out_dir`` is set) and attached to the raised error.
    """
    if dataset.n_train == 0:
        raise ContractError("empty dataset")
    if not stage_plan or any(s not in (1, 2) for s in stage_plan):
        raise ContractError(f"invalid stage plan {stage_plan}")
    dtype = np.float32 if run_cfg.dtype == "float32" else np.float64
    train_data = _cast(dataset.train, dtype)
    val_data = _cast(dataset.val, dtype) if dataset.n_val else None

    net = PostFilterNet(model_cfg)
    provider = ProxyEmbeddingProvider(bark)
    runner = _StageLoss(net, bark, provider)
    if initial_params is None:
        params = init_params(model_cfg, seed=run_cfg.seed if init_seed is None else init_seed)
    else:
        params = initial_params
    params = {k: np.asarray(v, dtype=dtype) for k, v in params.items()}
    history = TrainHistory()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    lr = run_cfg.lr_init if initial_lr is None else initial_lr
    n = dataset.n_train
    last_finite = {k: v.copy() for k, v in params.items()}

    for stage in stage_plan:
        epochs = run_cfg.stage1_epochs if stage == 1 else run_cfg.stage2_epochs
        adam = AdamState.for_params(params)
        best_val = math.inf
        plateau = 0
        stagnant = 0
        if val_data is not None:
            v_loss, v_bark, v_ssl = runner.evaluate(params, val_data, stage)
            history.add(epoch=0, stage=stage, lr=lr, train_loss=float("nan"),
                        val_loss=v_loss, val_L_bark=v_bark, val_L_ssl=v_ssl)
            best_val = v_loss

        for epoch in range(1, epochs + 1):
            rng = np.random.default_rng([run_cfg.seed, stage, epoch])
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, run_cfg.batch_size):
                idx = order[start:start + run_cfg.batch_size]
                batch = _batch_slice(train_data, idx)
                try:
                    loss, grads, bn_updates = runner.forward_backward(params, batch, stage)
                except TrainingDivergedError as exc:
                    # backward can detect divergence first (non-finite grads)
                    exc.checkpoint = _dump_last_finite(out, last_finite)
                    raise
                if not math.isfinite(loss):
                    raise TrainingDivergedError(
                        f"stage {stage} epoch {epoch}: non-finite loss {loss}",
                        checkpoint=_dump_last_finite(out, last_finite),
                    )
                adam_step(params, grads, adam, lr)
                for k, v in bn_updates.items():
                    params[k] = np.asarray(v, dtype=dtype)
                losses.append(loss)
            train_loss = float(np.mean(losses))
            last_finite = {k: v.copy() for k, v in params.items()}

            if val_data is not None:
                v_loss, v_bark, v_ssl = runner.evaluate(params, val_data, stage)
            else:
                v_loss, v_bark, v_ssl = train_loss, float("nan"), float("nan")
            history.add(epoch=epoch, stage=stage, lr=lr, train_loss=train_loss,
                        val_loss=v_loss, val_L_bark=v_bark, val_L_ssl=v_ssl)
            log.info("stage %d epoch %d lr %.2e train %.5f val %.5f",
                     stage, epoch, lr, train_loss, v_loss)

            if v_loss < best_val - run_cfg.improve_eps:
                best_val = v_loss
                plateau = 0
                stagnant = 0
            else:
                plateau += 1
                stagnant += 1
                if plateau == run_cfg.plateau_patience:
                    lr = max(lr * run_cfg.lr_factor, run_cfg.lr_floor)
                    plateau = 0
                if stagnant >= run_cfg.early_stop_patience:
                    break

        if out is not None:
            save_params(out / f"stage{stage}.efwt", params)
            np.savez(
                out / f"stage{stage}_optimizer.npz",
                step=adam.step,
                **{f"m::{k}": v for k, v in adam.m.items()},
                **{f"v::{k}": v for k, v in adam.v.items()},
            )
    if out is not None:
        history.to_csv(out / "history.csv")
    return params, history
