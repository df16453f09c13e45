"""Losses, optimizer, data preparation, and the two-stage training driver."""

from .losses import (
    ProxyEmbeddingProvider,
    bark_gain_loss,
    bark_gain_loss_grad,
    ssl_loss,
    ssl_loss_grad,
    stage_loss,
)
from .adam import AdamState, adam_step
from .data import PreparedClip, PreparedDataset, prepare_dataset
from .trainer import RunConfig, TrainHistory, load_run_config, train

__all__ = [
    "AdamState",
    "PreparedClip",
    "PreparedDataset",
    "ProxyEmbeddingProvider",
    "RunConfig",
    "TrainHistory",
    "adam_step",
    "bark_gain_loss",
    "bark_gain_loss_grad",
    "load_run_config",
    "prepare_dataset",
    "ssl_loss",
    "ssl_loss_grad",
    "stage_loss",
    "train",
]
