"""Streaming pipeline equivalences and the command-line surface."""

import json

import numpy as np
import pytest

from echofree import cli
from echofree.config import PipelineConfig, load_pipeline_config
from echofree.dsp import read_wav_16k, write_wav
from echofree.errors import ConfigError, ContractError
from echofree.linear_aec import KalmanConfig
from echofree.model import ModelConfig, init_params, save_params
from echofree.pipeline import StreamingPipeline, process_file_arrays
from echofree.simulate import synth_speech_clip

SR = 16000


def clip_pair(seed, secs=0.8):
    rng = np.random.default_rng(seed)
    mic = synth_speech_clip(seed, secs) + 0.01 * rng.standard_normal(int(secs * SR))
    far = synth_speech_clip(seed + 1000, secs)
    return mic, far


@pytest.fixture(scope="module")
def full_weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "model.efwt"
    save_params(path, init_params(ModelConfig(), seed=0))
    return path


@pytest.fixture(scope="module")
def full_params(full_weights):
    from echofree.model import load_params
    return load_params(full_weights, ModelConfig())


# ---------------------------------------------------------------------------
# Pipeline equivalences
# ---------------------------------------------------------------------------


class TestPipeline:
    def test_oracle_ones_reconstructs_mic(self):
        mic, far = clip_pair(1)
        out, _ = process_file_arrays(mic, far, None, oracle_ones=True)
        # sample 0 sits under the window's zero endpoint and stays zero
        assert np.abs(out[1:] - mic[1:]).max() <= 1e-4

    def test_chunked_equals_whole(self, full_params):
        mic, far = clip_pair(2, secs=0.6)
        whole, _ = process_file_arrays(mic, far, full_params)
        for chunk in (160, 999):
            chunked, _ = process_file_arrays(mic, far, full_params, chunk=chunk)
            assert np.abs(chunked - whole).max() <= 1e-6

    def test_latency_constants(self, full_params):
        pipe = StreamingPipeline(full_params)
        assert pipe.latency_samples == 640
        assert pipe.latency_ms == pytest.approx(40.0)

    def test_process_after_flush_rejected(self):
        pipe = StreamingPipeline(None, oracle_ones=True)
        pipe.process(np.zeros(256), np.zeros(256))
        pipe.flush()
        with pytest.raises(ContractError, match="flushed"):
            pipe.process(np.zeros(128), np.zeros(128))
        # a second flush is a harmless no-op
        assert pipe.flush().size == 0

    def test_chunk_length_mismatch_rejected(self):
        pipe = StreamingPipeline(None, oracle_ones=True)
        with pytest.raises(ContractError, match="lengths differ"):
            pipe.process(np.zeros(100), np.zeros(101))

    def test_incompatible_hop_rejected(self):
        with pytest.raises(ConfigError, match="hop"):
            StreamingPipeline(None, oracle_ones=True,
                              kalman_cfg=KalmanConfig(fft_len=128, block_len=64))

    def test_unequal_input_lengths_padded(self):
        mic, far = clip_pair(3, secs=0.4)
        out, _ = process_file_arrays(mic[:-500], far, None, oracle_ones=True)
        assert len(out) == len(far)

    def test_dump_intermediates(self, tmp_path):
        mic, far = clip_pair(4, secs=0.3)
        _, pipe = process_file_arrays(mic, far, None, oracle_ones=True,
                                      collect_intermediates=True)
        pipe.dump_intermediates(tmp_path)
        sidecar = json.loads((tmp_path / "intermediates.json").read_text())
        assert set(sidecar) == {"echo_est", "residual", "gains", "masks"}
        for name, meta in sidecar.items():
            raw = np.fromfile(tmp_path / meta["file"], dtype=np.float32)
            assert raw.size == int(np.prod(meta["shape"]))
        n_blocks = len(mic) // 128 + 1  # flush pads one extra partial block
        assert sidecar["echo_est"]["shape"][0] in (n_blocks, n_blocks + 4)

    def test_dump_without_collect_rejected(self, tmp_path):
        mic, far = clip_pair(5, secs=0.2)
        _, pipe = process_file_arrays(mic, far, None, oracle_ones=True)
        with pytest.raises(ContractError, match="collect"):
            pipe.dump_intermediates(tmp_path)


# ---------------------------------------------------------------------------
# CLI: process
# ---------------------------------------------------------------------------


@pytest.fixture()
def wav_pair(tmp_path):
    mic, far = clip_pair(6, secs=0.5)
    mic_p, far_p = tmp_path / "mic.wav", tmp_path / "far.wav"
    write_wav(mic_p, mic)
    write_wav(far_p, far)
    return mic_p, far_p


class TestCmdProcess:
    def test_roundtrip_and_latency_line(self, wav_pair, full_weights, tmp_path, capsys):
        mic_p, far_p = wav_pair
        out_p = tmp_path / "out.wav"
        rc = cli.main(["process", "--mic", str(mic_p), "--far", str(far_p),
                       "--weights", str(full_weights), "--out", str(out_p)])
        assert rc == 0
        assert "algorithmic latency: 640 samples (40.0 ms)" in capsys.readouterr().out
        out = read_wav_16k(out_p)
        assert len(out) == len(read_wav_16k(mic_p))

    def test_chunked_equals_whole_files(self, wav_pair, full_weights, tmp_path):
        mic_p, far_p = wav_pair
        a, b = tmp_path / "a.wav", tmp_path / "b.wav"
        base = ["process", "--mic", str(mic_p), "--far", str(far_p),
                "--weights", str(full_weights)]
        assert cli.main(base + ["--out", str(a)]) == 0
        assert cli.main(base + ["--out", str(b), "--chunk", "352"]) == 0
        assert np.abs(read_wav_16k(a) - read_wav_16k(b)).max() <= 1e-6

    def test_oracle_ones_flag(self, wav_pair, full_weights, tmp_path):
        mic_p, far_p = wav_pair
        out_p = tmp_path / "oracle.wav"
        rc = cli.main(["process", "--mic", str(mic_p), "--far", str(far_p),
                       "--weights", str(full_weights), "--out", str(out_p),
                       "--oracle-ones"])
        assert rc == 0
        mic = read_wav_16k(mic_p)
        assert np.abs(read_wav_16k(out_p)[1:] - mic[1:]).max() <= 1e-4

    def test_dump_intermediates_flag(self, wav_pair, full_weights, tmp_path):
        mic_p, far_p = wav_pair
        dump = tmp_path / "dump"
        rc = cli.main(["process", "--mic", str(mic_p), "--far", str(far_p),
                       "--weights", str(full_weights),
                       "--out", str(tmp_path / "o.wav"),
                       "--dump-intermediates", str(dump)])
        assert rc == 0
        assert (dump / "intermediates.json").exists()
        assert (dump / "gains.f32").exists()


class TestExitCodes:
    def test_sample_rate_mismatch_is_2(self, tmp_path, full_weights):
        from scipy.io import wavfile
        bad = tmp_path / "bad.wav"
        wavfile.write(bad, 44100, np.zeros(1000))
        rc = cli.main(["process", "--mic", str(bad), "--far", str(bad),
                       "--weights", str(full_weights),
                       "--out", str(tmp_path / "o.wav")])
        assert rc == 2

    def test_missing_weights_is_3(self, wav_pair, tmp_path):
        mic_p, far_p = wav_pair
        rc = cli.main(["process", "--mic", str(mic_p), "--far", str(far_p),
                       "--weights", str(tmp_path / "nope.efwt"),
                       "--out", str(tmp_path / "o.wav")])
        assert rc == 3

    def test_corrupt_weights_is_4(self, wav_pair, tmp_path):
        mic_p, far_p = wav_pair
        junk = tmp_path / "junk.efwt"
        junk.write_bytes(b"not weights at all")
        rc = cli.main(["process", "--mic", str(mic_p), "--far", str(far_p),
                       "--weights", str(junk), "--out", str(tmp_path / "o.wav")])
        assert rc == 4

    def test_corrupt_wav_is_4(self, tmp_path, full_weights):
        junk = tmp_path / "junk.wav"
        junk.write_bytes(b"RIFFgarbage")
        rc = cli.main(["process", "--mic", str(junk), "--far", str(junk),
                       "--weights", str(full_weights),
                       "--out", str(tmp_path / "o.wav")])
        assert rc == 4

    def test_bad_config_is_5(self, wav_pair, full_weights, tmp_path):
        mic_p, far_p = wav_pair
        bad_cfg = tmp_path / "bad.ini"
        bad_cfg.write_text("[model]\nnot_a_key = 1\n")
        rc = cli.main(["process", "--mic", str(mic_p), "--far", str(far_p),
                       "--weights", str(full_weights),
                       "--out", str(tmp_path / "o.wav"),
                       "--config", str(bad_cfg)])
        assert rc == 5

    def test_missing_input_is_6(self, tmp_path, full_weights):
        rc = cli.main(["process", "--mic", str(tmp_path / "ghost.wav"),
                       "--far", str(tmp_path / "ghost.wav"),
                       "--weights", str(full_weights),
                       "--out", str(tmp_path / "o.wav")])
        assert rc == 6

    def test_train_missing_manifest_is_6(self, tmp_path):
        rc = cli.main(["train", "--data", str(tmp_path / "ghost.csv"),
                       "--out", str(tmp_path / "run")])
        assert rc == 6

    def test_train_manifest_is_directory_is_6(self, tmp_path):
        rc = cli.main(["train", "--data", str(tmp_path),
                       "--out", str(tmp_path / "run")])
        assert rc == 6

    def test_eval_missing_paths_is_6(self, tmp_path):
        rc = cli.main(["eval", "--manifest", str(tmp_path / "ghost.csv"),
                       "--processed", str(tmp_path / "ghost")])
        assert rc == 6


# ---------------------------------------------------------------------------
# CLI: simulate / summary / init-config / eval / train
# ---------------------------------------------------------------------------


class TestOtherCommands:
    def test_summary_budgets(self, capsys):
        assert cli.main(["summary"]) == 0
        out = capsys.readouterr().out
        assert "256830" in out
        assert "27510000" in out

    def test_init_config_reference(self, tmp_path):
        p = tmp_path / "ref.ini"
        assert cli.main(["init-config", "--out", str(p)]) == 0
        got, ref = load_pipeline_config(p), PipelineConfig()
        # stft holds a window array, so compare its scalars by hand
        assert (got.stft.win_len, got.stft.hop, got.stft.fft_len) == \
               (ref.stft.win_len, ref.stft.hop, ref.stft.fft_len)
        assert got.kalman == ref.kalman
        assert got.model == ref.model
        assert got.sim == ref.sim
        assert got.train == ref.train

    def test_init_config_desk(self, tmp_path):
        p = tmp_path / "desk.ini"
        assert cli.main(["init-config", "--out", str(p), "--desk"]) == 0
        cfg = load_pipeline_config(p)
        assert cfg.train.batch_size == 16
        assert cfg.sim.farend_only_prob == pytest.approx(0.5)

    def test_simulate_process_eval_chain(self, tmp_path, full_weights, capsys):
        sim_dir = tmp_path / "sim"
        desk_cfg = tmp_path / "desk.ini"
        cli.main(["init-config", "--out", str(desk_cfg), "--desk"])
        rc = cli.main(["simulate", "--config", str(desk_cfg),
                       "--out", str(sim_dir), "--n", "3", "--clip-len", "0.5"])
        assert rc == 0
        manifest = sim_dir / "manifest.csv"
        assert manifest.exists()

        processed = tmp_path / "proc"
        processed.mkdir()
        import csv
        with open(manifest, newline="") as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            rc = cli.main(["process",
                           "--mic", str(sim_dir / row["mic_path"]),
                           "--far", str(sim_dir / row["far_path"]),
                           "--weights", str(full_weights),
                           "--out", str(processed / row["mic_path"]),
                           "--oracle-ones"])
            assert rc == 0

        report_csv = tmp_path / "report.csv"
        rc = cli.main(["eval", "--manifest", str(manifest),
                       "--processed", str(processed),
                       "--out-csv", str(report_csv)])
        assert rc == 0
        assert report_csv.exists()
        out = capsys.readouterr().out
        assert "report written" in out

    def test_train_and_resume(self, tmp_path, capsys):
        cfg_path = tmp_path / "mini.ini"
        cfg_path.write_text(
            "[model]\n"
            "enc_channels = 8 16\n"
            "echo_enc_channels = 8\n"
            "gru_units = 16\n"
            "fc_units = 16\n"
            "skip_channels = 16\n"
            "out_bands = 10\n"
            "[train]\n"
            "batch_size = 4\n"
            "dtype = float64\n"
            "[stage1]\n"
            "epochs = 1\n"
            "[stage2]\n"
            "epochs = 1\n"
        )
        sim_dir = tmp_path / "sim"
        assert cli.main(["simulate", "--out", str(sim_dir), "--n", "4",
                         "--clip-len", "0.4", "--config", str(cfg_path)]) == 0
        run_dir = tmp_path / "run"
        rc = cli.main(["train", "--data", str(sim_dir / "manifest.csv"),
                       "--out", str(run_dir), "--config", str(cfg_path)])
        assert rc == 0
        assert (run_dir / "stage1.efwt").exists()
        assert (run_dir / "stage2.efwt").exists()
        assert (run_dir / "history.csv").exists()
        assert "finished: stage 2" in capsys.readouterr().out

        resume_dir = tmp_path / "resume"
        rc = cli.main(["train", "--data", str(sim_dir / "manifest.csv"),
                       "--out", str(resume_dir), "--config", str(cfg_path),
                       "--stage", "2", "--resume", str(run_dir / "stage2.efwt"),
                       "--lr", "2e-4"])
        assert rc == 0
        assert (resume_dir / "stage2.efwt").exists()
