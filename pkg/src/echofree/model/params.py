"""Parameter initialization and the EFWT weight container.

EFWT layout, all integers little-endian:

    magic  b"EFWT"
    u32    version (1)
    u32    tensor count
    per tensor:
        u32          name length, then UTF-8 name
        u8           rank, then rank x u32 dims
        float32[...] row-major payload
    u32    CRC32 over everything between the tensor count and the checksum
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from ..errors import WeightFormatError, WeightIntegrityError, WeightShapeError
from .config import ModelConfig, parameter_shapes

MAGIC = b"EFWT"
VERSION = 1


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(cfg: ModelConfig, seed: int = 0) -> dict:
    """Fresh float64 parameter dict in ledger order.

    Convolution and linear weights are Glorot-uniform, GRU recurrent blocks
    are orthogonal per gate, biases start at zero, batch-norm stats at
    identity.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".dw"):
            taps = shape[1] * shape[2]
            params[name] = _glorot(rng, shape, taps, taps)
        elif name.endswith(".bn.gamma") or name.endswith(".bn.var"):
            params[name] = np.ones(shape)
        elif name.endswith(".bn.beta") or name.endswith(".bn.mean") or name.endswith(".b"):
            params[name] = np.zeros(shape)
        elif name == "gru.wx":
            h = shape[0] // 3
            gates = [_glorot(rng, (h, shape[1]), shape[1], h) for _ in range(3)]
            params[name] = np.concatenate(gates, axis=0)
        elif name == "gru.wh":
            h = shape[1]
            params[name] = np.concatenate([_orthogonal(rng, h) for _ in range(3)], axis=0)
        elif name.endswith(".w"):
            params[name] = _glorot(rng, shape, shape[1], shape[0])
        else:
            raise AssertionError(f"unhandled parameter {name}")
    return params


def save_params(path, params: dict) -> None:
    body = bytearray()
    body += struct.pack("<I", len(params))
    for name, value in params.items():
        arr = np.ascontiguousarray(np.asarray(value, dtype=np.float32))
        raw = name.encode("utf-8")
        body += struct.pack("<I", len(raw)) + raw
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
    crc = zlib.crc32(bytes(body))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(bytes(body))
        fh.write(struct.pack("<I", crc))


def load_params(path, cfg: ModelConfig | None = None) -> dict:
    """Read an EFWT file back into float64 arrays.

    With ``cfg`` given, every tensor is checked against the expected ledger
    and missing or misshapen entries raise ``WeightShapeError``.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise WeightFormatError(f"{path}: not an EFWT weight file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported EFWT version {version}")
    body, stored_crc = blob[8:-4], struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(body) != stored_crc:
        raise WeightIntegrityError(f"{path}: checksum mismatch")

    params: dict[str, np.ndarray] = {}
    try:
        off = 0
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", body, off)
            off += 4
            name = body[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", body, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", body, off)
            off += 4 * rank
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            flat = np.frombuffer(body, dtype="<f4", count=n, offset=off)
            off += 4 * n
            params[name] = flat.reshape(shape).astype(np.float64)
        if off != len(body):
            raise WeightIntegrityError(f"{path}: {len(body) - off} trailing bytes")
    except (struct.error, ValueError) as exc:
        raise WeightIntegrityError(f"{path}: truncated tensor table ({exc})") from exc

    if cfg is not None:
        expected = parameter_shapes(cfg)
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        if missing or extra:
            raise WeightShapeError(
                f"{path}: tensor set mismatch (missing {missing[:3]}, extra {extra[:3]})"
            )
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise WeightShapeError(
                    f"{path}: {name} has shape {params[name].shape}, expected {shape}"
                )
    return params
