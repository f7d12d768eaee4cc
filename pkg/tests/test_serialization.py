"""Weight-container and configuration round trips."""

import numpy as np
import pytest

import densemod.nn as nn
from densemod.config import ConfigError, config_text, parse_config
from densemod.train import load_model, save_model
from densemod.weights import WeightFileError, load_weights, save_weights


def sample_arrays(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "a.weight": rng.normal(size=(4, 3, 3, 3)).astype(np.float32),
        "a.bias": rng.normal(size=(1, 4, 1, 1)).astype(np.float32),
        "z.weight": rng.normal(size=(2, 4, 1, 1)).astype(np.float32),
    }


class TestWeightFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        path = tmp_path / "w.dmw"
        arrays = sample_arrays()
        save_weights(path, arrays)
        loaded = load_weights(path)
        assert list(loaded) == list(arrays)  # order preserved
        for name in arrays:
            assert loaded[name].dtype == np.float32
            assert np.array_equal(loaded[name], arrays[name])

    def test_repeated_save_byte_identical(self, tmp_path):
        arrays = sample_arrays()
        p1, p2 = tmp_path / "a.dmw", tmp_path / "b.dmw"
        save_weights(p1, arrays)
        save_weights(p2, arrays)
        assert p1.read_bytes() == p2.read_bytes()

    def test_crc_corruption_detected(self, tmp_path):
        path = tmp_path / "w.dmw"
        save_weights(path, sample_arrays())
        blob = bytearray(path.read_bytes())
        # flip one payload byte (well past the header/name region)
        blob[60] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(WeightFileError, match="CRC"):
            load_weights(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "w.dmw"
        save_weights(path, sample_arrays())
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 8])
        with pytest.raises(WeightFileError, match="truncated"):
            load_weights(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.dmw"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(WeightFileError, match="magic"):
            load_weights(path)

    def test_model_roundtrip_and_validation(self, tmp_path):
        spec = nn.ModelSpec(mode="detail_enhance", seed=2)
        params = nn.build_generator_params(spec)
        path = tmp_path / "model.dmw"
        save_model(path, spec, params)
        spec2, params2 = load_model(path)
        assert spec2 == spec
        assert params2.names() == params.names()
        for name in params.names():
            assert np.array_equal(params2[name].data, params[name].data)

    def test_model_missing_entry_named(self, tmp_path):
        spec = nn.ModelSpec(mode="super_resolution")
        params = nn.build_generator_params(spec)
        path = tmp_path / "model.dmw"
        from densemod.train import META_KEY, encode_model_meta
        arrays = {META_KEY: encode_model_meta(spec)}
        arrays.update({n: p.data for n, p in params.items()})
        del arrays["block3.fuse.weight"]
        save_weights(path, arrays)
        with pytest.raises(ValueError, match="block3.fuse.weight"):
            load_model(path)

    def test_model_shape_mismatch_named(self, tmp_path):
        spec = nn.ModelSpec(mode="super_resolution")
        params = nn.build_generator_params(spec)
        path = tmp_path / "model.dmw"
        from densemod.train import META_KEY, encode_model_meta
        arrays = {META_KEY: encode_model_meta(spec)}
        arrays.update({n: p.data for n, p in params.items()})
        arrays["head.weight"] = np.zeros((8, 3, 3, 3), dtype=np.float32)
        save_weights(path, arrays)
        with pytest.raises(ValueError, match="head.weight"):
            load_model(path)


class TestConfig:
    def test_parse_minimal(self):
        cfg = parse_config("model.mode=super_resolution\niterations=50\n")
        assert cfg.model.mode == "super_resolution"
        assert cfg.iterations == 50
        assert cfg.losses.perceptual == 0.0  # sr defaults

    def test_enhance_mode_defaults(self):
        cfg = parse_config("model.mode=detail_enhance\n")
        assert cfg.losses.perceptual == 1.0
        assert cfg.losses.adversarial == 0.005

    def test_comments_and_blanks(self):
        cfg = parse_config("# comment\n\nbatch_size=4\n  \n")
        assert cfg.batch_size == 4

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("model.depth=9\n")

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("batch_size=many\n")

    def test_interval_parsing(self):
        cfg = parse_config("degradation.fade_strength=0.2,0.3\n")
        assert cfg.degradation.fade_strength == (0.2, 0.3)
        with pytest.raises(ConfigError):
            parse_config("degradation.fade_strength=0.2\n")

    def test_patch_scale_divisibility(self):
        with pytest.raises(ConfigError, match="divisible"):
            parse_config("patch_size=50\n")

    def test_roundtrip_through_text(self):
        cfg = parse_config(
            "model.mode=detail_enhance\nmodel.channels=8\nbatch_size=2\n"
            "degradation.mode=oldphoto\nschedule.initial_lr=0.001\n"
            "losses.adversarial=0.01\nperceptual_layers=1,3\n")
        again = parse_config(config_text(cfg))
        assert again == cfg
