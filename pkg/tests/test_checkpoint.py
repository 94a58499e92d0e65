"""Checkpoint format: byte-identical roundtrips and corruption handling."""

import numpy as np
import pytest

from sourcelm.checkpoint import (CorruptCheckpoint, ModelCheckpoint,
                                 VocabMismatch, load_checkpoint,
                                 save_checkpoint)


def sample_checkpoint():
    rng = np.random.default_rng(7)
    return ModelCheckpoint(
        config={"arch": "pointer", "vocab_size": "30", "k": "16",
                "window": "20", "scatter_c": "1000.0", "dropout": "0.1"},
        vocab_digest="0123456789abcdef",
        arrays={
            "embed": rng.normal(size=(30, 16)).astype(np.float32),
            "W": rng.normal(size=(16, 64)).astype(np.float32),
            "b": np.zeros(64, dtype=np.float32),
        },
    )


class TestRoundtrip:
    def test_arrays_and_header_survive(self, tmp_path):
        ckpt = sample_checkpoint()
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.version == ckpt.version
        assert loaded.config == ckpt.config
        assert loaded.vocab_digest == ckpt.vocab_digest
        assert list(loaded.arrays) == list(ckpt.arrays)  # order preserved
        for name in ckpt.arrays:
            np.testing.assert_array_equal(loaded.arrays[name],
                                          ckpt.arrays[name])

    def test_save_is_deterministic(self, tmp_path):
        ckpt = sample_checkpoint()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(ckpt, a)
        save_checkpoint(ckpt, b)
        assert a.read_bytes() == b.read_bytes()

    def test_resave_of_loaded_copy_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(sample_checkpoint(), a)
        save_checkpoint(load_checkpoint(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_float64_input_is_stored_as_f32(self, tmp_path):
        ckpt = ModelCheckpoint(config={}, vocab_digest="d",
                               arrays={"w": np.full((3,), 0.1, np.float64)})
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        out = load_checkpoint(path).arrays["w"]
        assert out.dtype == np.float32
        np.testing.assert_array_equal(out, np.float32(0.1) * np.ones(3))

    def test_digest_check(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(sample_checkpoint(), path)
        load_checkpoint(path, expect_digest="0123456789abcdef")
        with pytest.raises(VocabMismatch):
            load_checkpoint(path, expect_digest="ffffffffffffffff")

    def test_config_helpers(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(sample_checkpoint(), path)
        loaded = load_checkpoint(path)
        assert loaded.config_int("k") == 16
        assert loaded.config_float("scatter_c") == 1000.0


class TestCorruption:
    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"definitely not a checkpoint\n")
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_truncated_array_payload(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(sample_checkpoint(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-17])
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(sample_checkpoint(), path)
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_future_version_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(sample_checkpoint(), path)
        blob = path.read_bytes()
        head, rest = blob.split(b"\n", 1)
        path.write_bytes(head.replace(b" 1", b" 99") + b"\n" + rest)
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_newline_in_config_value_rejected_at_save(self, tmp_path):
        ckpt = ModelCheckpoint(config={"arch": "a\nb"}, vocab_digest="d",
                               arrays={"w": np.zeros(1, np.float32)})
        with pytest.raises(ValueError):
            save_checkpoint(ckpt, tmp_path / "m.ckpt")


class TestModelIntegration:
    def test_saved_model_reproduces_distributions(self, tmp_path):
        from sourcelm.corpus import Vocabulary
        from sourcelm.neural import DecodeState, Model, ModelConfig
        from sourcelm.tensor import Params

        terms = ["$OOV$", "$NUM$", "var1", "var2", "load", "(", ")", "="]
        vocab = Vocabulary(terms, [5] * len(terms))
        config = ModelConfig(arch="pointer", vocab_size=len(terms), k=8,
                             window=5, dropout=0.0)
        model = Model(config, seed=3)
        ckpt = ModelCheckpoint(
            config={"arch": config.arch, "vocab_size": str(config.vocab_size),
                    "k": str(config.k), "window": str(config.window),
                    "scatter_c": repr(config.scatter_c),
                    "dropout": repr(config.dropout)},
            vocab_digest=vocab.digest(),
            arrays=dict(model.params.arrays),
        )
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        params = Params()
        for name, arr in loaded.arrays.items():
            params.add(name, arr)
        clone = Model(config, params=params)

        a, b = DecodeState(model, vocab), DecodeState(clone, vocab)
        for term in ["var1", "=", "load", "(", "var2", ")", "var1"]:
            a.feed_term(term)
            b.feed_term(term)
        np.testing.assert_array_equal(a.distribution(), b.distribution())
