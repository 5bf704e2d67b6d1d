"""Bundle container tests: round trips, digests, and corruption guards."""

import numpy as np
import pytest

from scorecast.bundle import FORMAT_VERSION, BundleError, load_bundle, save_bundle


class TestRoundTrip:
    def test_predictions_bit_exact(self, small_setup, tmp_path):
        _, _, bundle, dataset = small_setup
        path = str(tmp_path / "model.bundle")
        save_bundle(bundle, path)
        back = load_bundle(path)
        rng = np.random.default_rng(0)
        X = rng.random((1000, bundle.n_features))
        for key, forest in bundle.forests.items():
            got = back.forests[key].predict_mean(X)
            assert np.array_equal(got, forest.predict_mean(X))
            band_a = forest.predict_interval(X[:50], 0.05)
            band_b = back.forests[key].predict_interval(X[:50], 0.05)
            assert np.array_equal(band_a, band_b)

    def test_registry_and_params_survive(self, small_setup, tmp_path):
        _, _, bundle, _ = small_setup
        path = str(tmp_path / "model.bundle")
        save_bundle(bundle, path)
        back = load_bundle(path)
        assert back.registry.codes == bundle.registry.codes
        assert [d.lo for d in back.registry.defs] == [d.lo for d in bundle.registry.defs]
        assert back.bkt_params == bundle.bkt_params
        assert back.catalog == bundle.catalog
        assert back.fm_model.w0 == bundle.fm_model.w0
        assert np.array_equal(back.fm_model.v, bundle.fm_model.v)
        assert back.projection == bundle.projection
        assert back.metadata == bundle.metadata

    def test_save_is_deterministic(self, small_setup, tmp_path):
        _, _, bundle, _ = small_setup
        d1 = save_bundle(bundle, str(tmp_path / "a.bundle"))
        d2 = save_bundle(bundle, str(tmp_path / "b.bundle"))
        assert d1 == d2
        assert (tmp_path / "a.bundle").read_bytes() == (tmp_path / "b.bundle").read_bytes()

    def test_mastery_projection_identical_after_reload(self, small_setup, tmp_path):
        world, sessions, bundle, _ = small_setup
        path = str(tmp_path / "model.bundle")
        save_bundle(bundle, path)
        back = load_bundle(path)
        builder_a, builder_b = bundle.builder(), back.builder()
        lid = next(iter(bundle.fm_model.learner_index))
        assert np.array_equal(builder_a._mastery_block(lid), builder_b._mastery_block(lid))


class TestValidation:
    def test_corrupt_byte_names_digest(self, small_setup, tmp_path):
        _, _, bundle, _ = small_setup
        path = tmp_path / "model.bundle"
        save_bundle(bundle, str(path))
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(BundleError, match="digest"):
            load_bundle(str(path))

    def test_future_version_rejected(self, small_setup, tmp_path):
        import hashlib
        import struct

        _, _, bundle, _ = small_setup
        path = tmp_path / "model.bundle"
        save_bundle(bundle, str(path))
        blob = bytearray(path.read_bytes())[:-32]
        struct.pack_into("<I", blob, 4, FORMAT_VERSION + 1)
        payload = bytes(blob)
        path.write_bytes(payload + hashlib.sha256(payload).digest())
        with pytest.raises(BundleError, match="unsupported format_version"):
            load_bundle(str(path))

    def test_truncated_file(self, small_setup, tmp_path):
        _, _, bundle, _ = small_setup
        path = tmp_path / "model.bundle"
        save_bundle(bundle, str(path))
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 3])
        with pytest.raises(BundleError):
            load_bundle(str(path))

    def test_not_a_bundle(self, tmp_path):
        path = tmp_path / "junk.bundle"
        path.write_bytes(b"\x00" * 100)
        with pytest.raises(BundleError):
            load_bundle(str(path))
