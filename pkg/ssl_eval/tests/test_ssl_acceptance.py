"""Embedding-distance acceptance: trained pipeline outputs must sit
closer to the near-end references than the raw microphone signals, and
the export -> distance path must be deterministic.

The enhancement pipeline is exercised purely through its console
script, the way an external user would drive it.
"""

import csv
import shutil
import subprocess

import numpy as np
import pytest

from ssl_eval import cli
from ssl_eval.efem import embedding_distance, read_embedding_file

MODEL_LINES = (
    "[model]\n"
    "enc_channels = 8 16\n"
    "echo_enc_channels = 8\n"
    "gru_units = 24\n"
    "fc_units = 24\n"
    "skip_channels = 16\n"
    "out_bands = 20\n"
)

TRAIN_INI = MODEL_LINES + (
    "[sim]\n"
    "delay_range_ms = 10 40\n"
    "rt60_range = 0.05 0.08\n"
    "farend_only_prob = 0.5\n"
    "seed = 11\n"
    "[train]\n"
    "batch_size = 8\n"
    "dtype = float64\n"
    "seed = 0\n"
    "[stage1]\n"
    "epochs = 12\n"
    "[stage2]\n"
    "epochs = 24\n"
)

# every evaluation clip carries near-end speech (the embedding
# comparison needs a non-silent reference) and meaningful echo
EVAL_INI = MODEL_LINES + (
    "[sim]\n"
    "delay_range_ms = 10 40\n"
    "rt60_range = 0.05 0.08\n"
    "ser_db_range = -15 5\n"
    "farend_only_prob = 0.0\n"
    "seed = 77\n"
)


def run_echofree(*args):
    proc = subprocess.run(["echofree", *map(str, args)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, f"echofree {args[0]} failed:\n{proc.stderr}"
    return proc.stdout


def export_dir(wav_dir, out_dir, model_dir):
    rc = cli.main(["export", "--wav-dir", str(wav_dir), "--out-dir", str(out_dir),
                   "--model-dir", str(model_dir)])
    assert rc == 0
    return out_dir


@pytest.fixture(scope="session")
def desk_eval(tmp_path_factory, tiny_model_dir):
    root = tmp_path_factory.mktemp("desk_eval")
    train_ini = root / "train.ini"
    train_ini.write_text(TRAIN_INI)
    eval_ini = root / "eval.ini"
    eval_ini.write_text(EVAL_INI)

    train_sim = root / "train_sim"
    run_echofree("simulate", "--config", train_ini, "--out", train_sim,
                 "--n", 96, "--clip-len", 1.5)
    run_dir = root / "run"
    run_echofree("train", "--config", train_ini, "--data", train_sim / "manifest.csv",
                 "--stage", "both", "--out", run_dir)
    weights = run_dir / "stage2.efwt"
    assert weights.exists()

    eval_sim = root / "eval_sim"
    run_echofree("simulate", "--config", eval_ini, "--out", eval_sim,
                 "--n", 8, "--clip-len", 1.5)

    refs = root / "refs"
    mics = root / "mics"
    proc = root / "proc"
    for d in (refs, mics, proc):
        d.mkdir()
    with open(eval_sim / "manifest.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            stem = f"clip{int(row['index']):03d}"
            shutil.copy(eval_sim / row["near_path"], refs / f"{stem}.wav")
            shutil.copy(eval_sim / row["mic_path"], mics / f"{stem}.wav")
            run_echofree("process",
                         "--mic", eval_sim / row["mic_path"],
                         "--far", eval_sim / row["far_path"],
                         "--weights", weights,
                         "--config", train_ini,
                         "--out", proc / f"{stem}.wav")

    emb = root / "emb"
    for name, wav_dir in (("refs", refs), ("mics", mics), ("proc", proc)):
        export_dir(wav_dir, emb / name, tiny_model_dir)
    return {"root": root, "mics": mics, "emb": emb, "model_dir": tiny_model_dir}


def paired_distances(emb, against):
    dists = []
    for ref_path in sorted((emb / "refs").glob("*.efem")):
        other = emb / against / ref_path.name
        dists.append(embedding_distance(read_embedding_file(ref_path),
                                        read_embedding_file(other)))
    return np.asarray(dists)


# ---------------------------------------------------------------------------
# the secondary acceptance criterion
# ---------------------------------------------------------------------------

class TestEmbeddingCriterion:
    def test_processed_closer_than_mic(self, desk_eval, capsys):
        d_proc = paired_distances(desk_eval["emb"], "proc")
        d_mic = paired_distances(desk_eval["emb"], "mics")
        assert len(d_proc) == len(d_mic) == 8
        ok = d_proc.mean() < d_mic.mean()
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] secondary-embedding-distance: "
                  f"processed {d_proc.mean():.4f} < mic {d_mic.mean():.4f} "
                  f"(per-clip wins {int((d_proc < d_mic).sum())}/8)")
        assert ok

    def test_export_distance_roundtrip_deterministic(self, desk_eval, capsys):
        emb = desk_eval["emb"]
        again = desk_eval["root"] / "emb_again"
        export_dir(desk_eval["mics"], again, desk_eval["model_dir"])
        firsts = sorted((emb / "mics").glob("*.efem"))
        seconds = sorted(again.glob("*.efem"))
        assert [p.name for p in firsts] == [p.name for p in seconds]
        byte_identical = all(a.read_bytes() == b.read_bytes()
                             for a, b in zip(firsts, seconds))
        d1 = paired_distances(emb, "mics")
        d2 = np.asarray([
            embedding_distance(read_embedding_file(emb / "refs" / p.name),
                               read_embedding_file(p))
            for p in seconds
        ])
        with capsys.disabled():
            print(f"[{'PASS' if byte_identical else 'FAIL'}] "
                  f"secondary-roundtrip-determinism: byte-identical re-export, "
                  f"distance diff {np.abs(d1 - d2).max():.1e}")
        assert byte_identical
        np.testing.assert_array_equal(d1, d2)
