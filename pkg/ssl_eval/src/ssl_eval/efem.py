"""EFEM embedding files and the distance between them.

Layout: 4-byte magic ``EFEM``, then ``<4I`` header (version, L, T, D),
then row-major little-endian float32 data of shape [L, T, D].
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ContractError, EmbeddingFormatError

MAGIC = b"EFEM"
VERSION = 1
HEADER_LEN = 20


def write_embedding_file(path, emb: np.ndarray) -> None:
    """Write a [L, T, D] embedding array as an EFEM file."""
    emb = np.asarray(emb)
    if emb.ndim != 3:
        raise ContractError(f"embedding must be [L, T, D], got shape {emb.shape}")
    if not np.all(np.isfinite(emb)):
        raise ContractError("refusing to write non-finite embedding values")
    L, T, D = emb.shape
    payload = np.ascontiguousarray(emb, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4I", VERSION, L, T, D))
        fh.write(payload.tobytes())


def read_embedding_file(path) -> np.ndarray:
    """Read an EFEM file into a float64 [L, T, D] array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_LEN or blob[:4] != MAGIC:
        raise EmbeddingFormatError(f"{path}: not an EFEM embedding file")
    version, L, T, D = struct.unpack_from("<4I", blob, 4)
    if version != VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported EFEM version {version}")
    need = L * T * D * 4
    payload = blob[HEADER_LEN:]
    if len(payload) != need:
        raise EmbeddingFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {need}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(L, T, D).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise EmbeddingFormatError(f"{path}: non-finite embedding values")
    return data


def embedding_distance(a: np.ndarray, b: np.ndarray, per_vector: bool = False) -> float:
    """Mean over layers of the MSE between two embedding stacks.

    With ``per_vector`` the per-frame squared euclidean norm is averaged
    instead of the per-element square, i.e. the result scales by D.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3:
        raise ContractError("embeddings must be [L, T, D] stacks")
    if a.shape != b.shape:
        raise ContractError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    per_layer = np.mean((a - b) ** 2, axis=(1, 2))
    if per_vector:
        per_layer = per_layer * a.shape[2]
    return float(per_layer.mean())
