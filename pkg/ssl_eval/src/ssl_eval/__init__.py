"""Frozen-WavLM embedding export and distance evaluation."""

from .efem import embedding_distance, read_embedding_file, write_embedding_file
from .errors import (
    ContractError,
    EmbeddingFormatError,
    ModelUnavailableError,
    SslEvalError,
)

__all__ = [
    "ContractError",
    "EmbeddingFormatError",
    "ModelUnavailableError",
    "SslEvalError",
    "embedding_distance",
    "read_embedding_file",
    "write_embedding_file",
]
