"""Weight-file format: round trips and corruption taxonomy."""

import struct
import zlib

import numpy as np
import pytest

from echofree.errors import WeightFormatError, WeightIntegrityError, WeightShapeError
from echofree.model import init_params, load_params, save_params

from helpers import mini_config


@pytest.fixture()
def saved(tmp_path):
    cfg = mini_config()
    params = init_params(cfg, seed=3)
    path = tmp_path / "w.efwt"
    save_params(path, params)
    return cfg, params, path


class TestRoundTrip:
    def test_bit_exact_after_f32_quantization(self, saved):
        cfg, params, path = saved
        loaded = load_params(path, cfg)
        assert set(loaded) == set(params)
        for name in params:
            # storage is f32; reloading what was saved must be exact at f32
            np.testing.assert_array_equal(
                loaded[name].astype(np.float32),
                params[name].astype(np.float32), err_msg=name)

    def test_save_load_save_stable(self, saved, tmp_path):
        cfg, _, path = saved
        p2 = tmp_path / "w2.efwt"
        save_params(p2, load_params(path, cfg))
        assert path.read_bytes() == p2.read_bytes()

    def test_loaded_dtype_is_float64(self, saved):
        cfg, _, path = saved
        loaded = load_params(path, cfg)
        assert all(v.dtype == np.float64 for v in loaded.values())

    def test_init_deterministic(self):
        cfg = mini_config()
        a = init_params(cfg, seed=7)
        b = init_params(cfg, seed=7)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_init_seed_sensitivity(self):
        cfg = mini_config()
        a = init_params(cfg, seed=7)
        b = init_params(cfg, seed=8)
        assert any(not np.array_equal(a[n], b[n]) for n in a)


class TestCorruption:
    def test_wrong_magic(self, saved, tmp_path):
        _, _, path = saved
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        bad = tmp_path / "magic.efwt"
        bad.write_bytes(bytes(blob))
        with pytest.raises(WeightFormatError, match="magic|not an"):
            load_params(bad, mini_config())

    def test_wrong_version(self, saved, tmp_path):
        _, _, path = saved
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 4, 99)
        bad = tmp_path / "ver.efwt"
        bad.write_bytes(bytes(blob))
        with pytest.raises(WeightFormatError, match="version"):
            load_params(bad, mini_config())

    def test_truncated_file(self, saved, tmp_path):
        _, _, path = saved
        blob = path.read_bytes()
        bad = tmp_path / "trunc.efwt"
        bad.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(WeightIntegrityError):
            load_params(bad, mini_config())

    def test_flipped_payload_bit_fails_crc(self, saved, tmp_path):
        _, _, path = saved
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x40
        bad = tmp_path / "crc.efwt"
        bad.write_bytes(bytes(blob))
        with pytest.raises(WeightIntegrityError, match="checksum|CRC|crc"):
            load_params(bad, mini_config())

    def test_trailing_garbage(self, saved, tmp_path):
        _, _, path = saved
        bad = tmp_path / "trail.efwt"
        bad.write_bytes(path.read_bytes() + b"\x00\x01\x02\x03")
        with pytest.raises(WeightIntegrityError):
            load_params(bad, mini_config())

    def test_not_a_weight_file(self, tmp_path):
        bad = tmp_path / "junk.efwt"
        bad.write_bytes(b"\x00" * 16)
        with pytest.raises(WeightFormatError):
            load_params(bad, mini_config())


class TestShapeChecks:
    def test_config_mismatch(self, saved):
        from helpers import tiny_config

        _, _, path = saved
        with pytest.raises(WeightShapeError):
            load_params(path, tiny_config())

    def test_missing_tensor(self, saved, tmp_path):
        cfg, params, _ = saved
        partial = dict(params)
        partial.pop(sorted(partial)[0])
        p = tmp_path / "missing.efwt"
        save_params(p, partial)
        with pytest.raises(WeightShapeError, match="missing"):
            load_params(p, cfg)

    def test_extra_tensor(self, saved, tmp_path):
        cfg, params, _ = saved
        extra = dict(params)
        extra["bogus.w"] = np.zeros(3)
        p = tmp_path / "extra.efwt"
        save_params(p, extra)
        with pytest.raises(WeightShapeError, match="unexpected|extra"):
            load_params(p, cfg)

    def test_load_without_config_skips_shape_check(self, saved):
        _, params, path = saved
        loaded = load_params(path)
        assert set(loaded) == set(params)
