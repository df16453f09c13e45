"""Bark-gain post-filter: configuration, parameters, forward passes."""

from .config import (
    ModelConfig,
    build_layout,
    count_macs_per_frame,
    count_macs_per_second,
    count_params,
    parameter_shapes,
    summarize,
    trainable_names,
)
from .params import init_params, load_params, save_params
from .network import PostFilterNet
from .streaming import StreamingPostFilter

__all__ = [
    "ModelConfig",
    "PostFilterNet",
    "StreamingPostFilter",
    "build_layout",
    "count_macs_per_frame",
    "count_macs_per_second",
    "count_params",
    "init_params",
    "load_params",
    "parameter_shapes",
    "save_params",
    "summarize",
    "trainable_names",
]
