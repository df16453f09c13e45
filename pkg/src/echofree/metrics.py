"""Objective evaluation: ERLE, SI-SDR, scenario slicing, report emission."""

from __future__ import annotations

import csv
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import StftConfig, read_wav_16k, stft
from .errors import ContractError, WeightFormatError, WeightIntegrityError
from .simulate import active_frame_mask, frame_powers
from .validation import check_equal_length, check_waveform

SI_SDR_CAP_DB = 60.0
ERLE_CAP_DB = 80.0


def si_sdr(est, ref, cap_db: float = SI_SDR_CAP_DB) -> float:
    """Scale-invariant SDR in dB, capped; raises on an all-zero reference."""
    est = check_waveform(est, "est")
    ref = check_waveform(ref, "ref")
    check_equal_length(est, ref, ("est", "ref"))
    ref_pow = float(ref @ ref)
    if ref_pow <= 0.0:
        raise ContractError("si_sdr: reference is all zeros")
    alpha = float(est @ ref) / ref_pow
    target = alpha * ref
    noise = est - target
    p_t = float(target @ target)
    p_n = float(noise @ noise)
    if p_n <= p_t * 10.0 ** (-cap_db / 10.0):
        return cap_db
    return min(cap_db, 10.0 * np.log10(p_t / p_n))


def clip_erle(mic, out, cap_db: float = ERLE_CAP_DB) -> float:
    """Whole-clip ERLE over the mic's active regions.

    Both powers are measured on the same frames (the mic's active ones), so
    attenuation anywhere the echo is live counts and silence elsewhere does
    not inflate the score.
    """
    mic = check_waveform(mic, "mic")
    out = check_waveform(out, "out")
    check_equal_length(mic, out, ("mic", "out"))
    act = active_frame_mask(mic)
    p_mic = float(frame_powers(mic)[act].mean()) if act.any() else 0.0
    p_out = float(frame_powers(out)[act].mean()) if act.any() else 0.0
    if p_mic <= 0.0:
        return 0.0
    if p_out <= p_mic * 10.0 ** (-cap_db / 10.0):
        return cap_db
    return min(cap_db, 10.0 * np.log10(p_mic / p_out))


def read_embedding_file(path) -> np.ndarray:
    """Read an EFEM embedding file into a float64 [L, T, D] array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != b"EFEM":
        raise WeightFormatError(f"{path}: not an EFEM embedding file")
    version, L, T, D = struct.unpack_from("<4I", blob, 4)
    if version != 1:
        raise WeightFormatError(f"{path}: unsupported EFEM version {version}")
    need = L * T * D * 4
    payload = blob[20:]
    if len(payload) != need:
        raise WeightIntegrityError(
            f"{path}: payload is {len(payload)} bytes, expected {need}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(L, T, D).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise WeightIntegrityError(f"{path}: non-finite embedding values")
    return data


def embedding_distance(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ContractError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2, axis=(1, 2)).mean())


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def to_csv(self, path):
        fields = ["index", "scenario", "erle_db", "si_sdr_db", "embedding_dist", "flag"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row.get(k, "") for k in fields})

    def summary_lines(self) -> list:
        lines = []
        for scenario, stats in sorted(self.aggregates.items()):
            parts = [f"{k}={v:.2f}" for k, v in sorted(stats.items())]
            lines.append(f"{scenario}: " + ", ".join(parts))
        return lines


def _aggregate(rows: list) -> dict:
    agg: dict = {}
    for scenario in sorted({r["scenario"] for r in rows if not r.get("flag")}):
        sel = [r for r in rows if r["scenario"] == scenario and not r.get("flag")]
        stats = {}
        for metric in ("erle_db", "si_sdr_db", "embedding_dist"):
            vals = [r[metric] for r in sel if r.get(metric) is not None]
            if vals:
                stats[f"mean_{metric}"] = float(np.mean(vals))
                stats[f"median_{metric}"] = float(np.median(vals))
        agg[scenario] = stats
    return agg


def _worker_count() -> int:
    env = os.environ.get("ECHOFREE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def evaluate(processed_dir, manifest_path, embeddings_dir=None) -> EvalReport:
    """Score processed clips against a simulator manifest.

    Far-end-only rows carry ERLE (mic vs processed); double-talk rows carry
    SI-SDR against the reverberated near-end.  Processed files are matched
    by the manifest's mic filename.  Missing files are flagged and excluded
    from aggregates.
    """
    manifest_path = Path(manifest_path)
    processed_dir = Path(processed_dir)
    base = manifest_path.parent
    with open(manifest_path, newline="") as fh:
        rows_in = list(csv.DictReader(fh))
    if not rows_in:
        raise ContractError(f"{manifest_path}: empty manifest")

    def score(row):
        idx = row.get("index", "")
        out_path = processed_dir / row["mic_path"]
        rec = {"index": idx, "scenario": row["scenario"]}
        if not out_path.exists():
            rec["flag"] = "missing"
            return rec
        out = read_wav_16k(out_path)
        mic = read_wav_16k(base / row["mic_path"])
        n = min(len(out), len(mic))
        if row["scenario"] == "farend_only":
            rec["erle_db"] = clip_erle(mic[:n], out[:n])
        else:
            near = read_wav_16k(base / row["near_path"])
            rec["si_sdr_db"] = si_sdr(out[:n], near[:n])
        if embeddings_dir is not None:
            stem = Path(row["mic_path"]).stem
            pa = Path(embeddings_dir) / f"{stem}_out.efem"
            pb = Path(embeddings_dir) / f"{stem}_ref.efem"
            if pa.exists() and pb.exists():
                rec["embedding_dist"] = embedding_distance(
                    read_embedding_file(pa), read_embedding_file(pb)
                )
        return rec

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        rows = list(pool.map(score, rows_in))
    return EvalReport(rows=rows, aggregates=_aggregate(rows))


def save_spectrogram_csv(wav_path, out_path, cfg: StftConfig | None = None) -> None:
    """Magnitude spectrogram (dB) as CSV rows of frames, for visual diffing."""
    cfg = cfg or StftConfig()
    frames = stft(read_wav_16k(wav_path), cfg)
    mag_db = 20.0 * np.log10(np.abs(frames) + 1e-10)
    np.savetxt(out_path, mag_db, fmt="%.3f", delimiter=",")
