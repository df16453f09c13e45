"""WavLM embedding extraction.

The model runs in inference mode only; weights come from a local
``save_pretrained`` directory and are never fetched from the network.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile
from transformers import WavLMModel
from transformers import logging as hf_logging

from .efem import write_embedding_file
from .errors import ContractError, ModelUnavailableError

SAMPLE_RATE = 16_000
NORM_EPS = 1e-7

DOWNLOAD_HINT = (
    "WavLM weights not found under {d}.\n"
    "Fetch them once on a machine with network access:\n"
    "  python -c \"from transformers import WavLMModel; "
    "WavLMModel.from_pretrained('microsoft/wavlm-large').save_pretrained('{d}')\"\n"
    "or point --model-dir (or SSL_EVAL_MODEL_DIR) at an existing local copy."
)


def default_model_dir() -> Path:
    env = os.environ.get("SSL_EVAL_MODEL_DIR")
    if env:
        return Path(env).expanduser()
    return Path("~/.cache/ssl-eval/wavlm-large").expanduser()


def load_model(model_dir=None) -> WavLMModel:
    """Load a frozen WavLM from a local directory."""
    d = Path(model_dir).expanduser() if model_dir else default_model_dir()
    if not (d / "config.json").exists():
        raise ModelUnavailableError(DOWNLOAD_HINT.format(d=d))
    hf_logging.set_verbosity_error()
    hf_logging.disable_progress_bar()
    model = WavLMModel.from_pretrained(d, local_files_only=True)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def frame_count(model: WavLMModel, n_samples: int) -> int:
    """Number of frames the convolutional frontend emits for a clip."""
    n = int(n_samples)
    for kernel, stride in zip(model.config.conv_kernel, model.config.conv_stride):
        n = (n - kernel) // stride + 1
    return n


def embed(model: WavLMModel, wav: np.ndarray, layers: str = "transformer-only") -> np.ndarray:
    """Layer embeddings of one clip as a float32 [L, T, D] stack.

    ``transformer-only`` keeps the transformer block outputs;
    ``all`` prepends the projected frontend features.
    """
    if layers not in ("transformer-only", "all"):
        raise ContractError(f"unknown layer selection {layers!r}")
    wav = np.asarray(wav, dtype=np.float64)
    if wav.ndim != 1:
        raise ContractError(f"mono waveform expected, got shape {wav.shape}")
    if frame_count(model, len(wav)) < 1:
        raise ContractError(f"clip too short for the frontend: {len(wav)} samples")
    # the released checkpoint expects zero-mean unit-variance input
    wav = (wav - wav.mean()) / np.sqrt(wav.var() + NORM_EPS)
    x = torch.from_numpy(wav.astype(np.float32))[None]
    with torch.no_grad():
        out = model(x, output_hidden_states=True)
    states = out.hidden_states
    if layers == "transformer-only":
        states = states[1:]
    stack = torch.stack(states, dim=0)[:, 0]
    return stack.numpy().astype(np.float32, copy=False)


def read_wav_16k(path) -> np.ndarray:
    """Read a WAV file as float64, whatever its stored sample format."""
    sr, data = wavfile.read(path)
    if sr != SAMPLE_RATE:
        raise ContractError(f"{path}: sample rate {sr}, expected {SAMPLE_RATE}")
    if data.ndim != 1:
        raise ContractError(f"{path}: expected mono, got shape {data.shape}")
    if data.dtype == np.int16:
        return data / 32768.0
    if data.dtype == np.int32:
        return data / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    return data.astype(np.float64)


def export_embeddings(wav_dir, out_dir, layers: str = "transformer-only",
                      model_dir=None, log=print):
    """Embed every WAV in ``wav_dir`` and write one EFEM file per clip.

    Files that violate the mono 16 kHz precondition are skipped with a
    warning. Returns (written, skipped) path lists.
    """
    wav_dir = Path(wav_dir)
    out_dir = Path(out_dir)
    if not wav_dir.is_dir():
        raise ContractError(f"not a directory: {wav_dir}")
    wavs = sorted(wav_dir.glob("*.wav"))
    if not wavs:
        raise ContractError(f"no .wav files in {wav_dir}")
    model = load_model(model_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    skipped = []
    for path in wavs:
        try:
            wav = read_wav_16k(path)
        except ContractError as exc:
            log(f"skipping {path.name}: {exc}")
            skipped.append(path)
            continue
        emb = embed(model, wav, layers)
        out_path = out_dir / (path.stem + ".efem")
        write_embedding_file(out_path, emb)
        log(f"{path.name}: L={emb.shape[0]} T={emb.shape[1]} D={emb.shape[2]} -> {out_path.name}")
        written.append(out_path)
    return written, skipped
