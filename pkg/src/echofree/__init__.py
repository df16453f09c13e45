"""Streaming acoustic echo cancellation: adaptive filter + neural post-filter."""

from .bark import BarkMatrix, build_bark_matrix
from .config import PipelineConfig, load_pipeline_config
from .dsp import StftConfig, istft, stft
from .errors import EchoFreeError
from .estimator import EchoCanceller, LinearEchoCanceller
from .linear_aec import KalmanConfig, PartitionedKalmanAec, erle
from .model import ModelConfig, PostFilterNet, StreamingPostFilter
from .pipeline import StreamingPipeline, process_file_arrays

__version__ = "0.1.0"

__all__ = [
    "BarkMatrix",
    "EchoCanceller",
    "EchoFreeError",
    "KalmanConfig",
    "LinearEchoCanceller",
    "ModelConfig",
    "PartitionedKalmanAec",
    "PipelineConfig",
    "PostFilterNet",
    "StftConfig",
    "StreamingPipeline",
    "StreamingPostFilter",
    "build_bark_matrix",
    "erle",
    "istft",
    "load_pipeline_config",
    "process_file_arrays",
    "stft",
    "__version__",
]
