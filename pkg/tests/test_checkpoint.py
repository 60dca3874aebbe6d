"""Checkpoint container: bit-exact round trips and typed failure modes."""

import numpy as np
import pytest

from colearn.checkpoint import (
    CorruptHeaderError,
    TruncatedPayloadError,
    VersionMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from colearn.models import BiEflstmClassifier, MfnRegressor, load_model, save_model, snapshot_parameters


class TestRawContainer:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        params = {
            "w": rng.normal(size=(4, 3)),
            "b": rng.normal(size=(3,)),
            "scalar": np.array(2.5),
        }
        config = {"kind": "test", "dims": [1, 2, 3]}
        path = tmp_path / "params.ckpt"
        save_checkpoint(path, config, params)
        loaded_config, loaded = load_checkpoint(path)
        assert loaded_config == config
        assert set(loaded) == set(params)
        for name in params:
            assert loaded[name].tobytes() == np.asarray(params[name], dtype=np.float64).tobytes()
            assert loaded[name].shape == np.asarray(params[name]).shape

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"garbage!" * 4)
        with pytest.raises(CorruptHeaderError):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, {}, {"w": np.zeros(2)})
        blob = bytearray(path.read_bytes())
        blob[8:12] = (7).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatchError):
            load_checkpoint(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, {"kind": "test"}, {"w": np.zeros((8, 8))})
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 40])
        with pytest.raises(TruncatedPayloadError):
            load_checkpoint(path)

    def test_corrupt_config_blob(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, {"kind": "test"}, {})
        blob = bytearray(path.read_bytes())
        blob[16] = 0xFF  # inside the JSON text
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptHeaderError):
            load_checkpoint(path)


class TestModelCheckpoints:
    def test_classifier_round_trip(self, tmp_path, rng):
        model = BiEflstmClassifier((3, 4, 2), hidden_dim=5, num_classes=3, rng=rng)
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        assert isinstance(loaded, BiEflstmClassifier)
        assert loaded.config() == model.config()
        ours = snapshot_parameters(model)
        theirs = snapshot_parameters(loaded)
        assert set(ours) == set(theirs)
        for name in ours:
            assert ours[name].tobytes() == theirs[name].tobytes()

    def test_regressor_round_trip(self, tmp_path, rng):
        model = MfnRegressor((2, 3, 2), hidden_dim=3, memory_dim=4, net_hidden_dim=5, rng=rng)
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        assert isinstance(loaded, MfnRegressor)
        assert loaded.config() == model.config()
        for name, arr in snapshot_parameters(model).items():
            assert snapshot_parameters(loaded)[name].tobytes() == arr.tobytes()

    def test_unknown_kind_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, {"kind": "perceptron"}, {})
        with pytest.raises(CorruptHeaderError):
            load_model(path)

    def test_loaded_model_predicts_identically(self, tmp_path, rng):
        from colearn.data import SyntheticConfig, generate_synthetic, stack_batch
        from colearn.dropout import mask_for_unimodal_eval

        split = generate_synthetic(SyntheticConfig(n_samples=20, timesteps=4, dim_language=3, dim_audio=4, dim_visual=2))
        model = BiEflstmClassifier(split.dims, hidden_dim=4, num_classes=4, rng=rng)
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        batch = mask_for_unimodal_eval(stack_batch(split.test), "language")
        assert np.array_equal(model.predict(batch), loaded.predict(batch))
