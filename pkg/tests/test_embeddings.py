import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memekit.embeddings import (
    EmbeddingError,
    EmbeddingStore,
    HashEncoder,
    PixelEncoder,
    StoreFormatError,
    encode,
    load_store,
    make_encoder,
    normalize_rows,
    save_store,
)


class TestHashEncoder:
    def test_shape_and_order(self):
        enc = HashEncoder(dimension=32)
        store = encode(["one", "two", "three"], ["a", "b", "c"], "text", enc)
        assert store.vectors.shape == (3, 32)
        assert store.ids == ("a", "b", "c")
        assert not store.normalized

    def test_deterministic_bitwise(self):
        enc1 = HashEncoder(dimension=48, seed=5)
        enc2 = HashEncoder(dimension=48, seed=5)
        texts = ["a meme caption", "another one", ""]
        a = enc1.encode_texts(texts)
        b = enc2.encode_texts(texts)
        assert a.tobytes() == b.tobytes()

    def test_different_seed_differs(self):
        a = HashEncoder(dimension=48, seed=1).encode_texts(["caption"])
        b = HashEncoder(dimension=48, seed=2).encode_texts(["caption"])
        assert a.tobytes() != b.tobytes()

    def test_truncation_warns_but_produces_row(self, caplog):
        enc = HashEncoder(dimension=16, max_text_tokens=4)
        long_text = " ".join(f"w{i}" for i in range(10))
        with caplog.at_level(logging.WARNING):
            store = encode([long_text], ["x"], "text", enc)
        assert store.vectors.shape == (1, 16)
        assert any("truncating" in rec.message for rec in caplog.records)
        truncated = enc.encode_texts([" ".join(f"w{i}" for i in range(4))])
        assert np.allclose(store.vectors, truncated)

    def test_image_refs_encoded_as_strings(self):
        enc = HashEncoder(dimension=16)
        same = enc.encode_images(["ref.png"])
        text = enc.encode_texts(["ref.png"])
        assert np.allclose(same, text)

    def test_empty_items_error(self):
        with pytest.raises(EmbeddingError, match="empty"):
            encode([], [], "text", HashEncoder())


class TestPixelEncoder:
    def test_locality(self):
        # block-structured bases (variation at the pooling scale): a text-band
        # overlay moves the embedding less than swapping the base image
        rng = np.random.default_rng(0)
        enc = PixelEncoder(dimension=16, grid=8)
        base = np.kron(rng.uniform(size=(8, 8)), np.ones((8, 8)))
        tweaked = base.copy()
        tweaked[-8:, :] = 1.0
        other = np.kron(rng.uniform(size=(8, 8)), np.ones((8, 8)))
        e_base, e_tweaked, e_other = enc.encode_images([base, tweaked, other])
        d_small = np.linalg.norm(e_base - e_tweaked)
        d_large = np.linalg.norm(e_base - e_other)
        assert d_small < d_large

    def test_rejects_tiny_image(self):
        enc = PixelEncoder(dimension=8, grid=8)
        with pytest.raises(EmbeddingError, match="smaller than"):
            enc.encode_images([np.zeros((4, 4))])

    def test_registry(self):
        assert isinstance(make_encoder("pixel", dimension=8), PixelEncoder)
        with pytest.raises(EmbeddingError, match="unknown encoder"):
            make_encoder("clip")


class TestNormalize:
    def test_three_four_row(self):
        store = EmbeddingStore(("a",), np.array([[3.0, 4.0]], dtype=np.float32), False)
        normalized = normalize_rows(store)
        assert np.allclose(normalized.vectors, [[0.6, 0.8]])
        assert normalized.normalized

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        store = EmbeddingStore(
            tuple(f"i{i}" for i in range(5)),
            rng.standard_normal((5, 8)).astype(np.float32), False,
        )
        once = normalize_rows(store)
        twice = normalize_rows(once)
        assert np.max(np.abs(once.vectors - twice.vectors)) < 1e-7

    def test_zero_row_names_id(self):
        store = EmbeddingStore(("good", "bad"),
                               np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.float32),
                               False)
        with pytest.raises(EmbeddingError, match="'bad'"):
            normalize_rows(store)

    @given(st.integers(1, 6), st.integers(2, 10), st.integers(0, 2 ** 16))
    @settings(max_examples=40, deadline=None)
    def test_unit_norms(self, rows, dim, seed):
        rng = np.random.default_rng(seed)
        vectors = rng.standard_normal((rows, dim)).astype(np.float32) + 0.1
        store = normalize_rows(EmbeddingStore(
            tuple(f"r{i}" for i in range(rows)), vectors, False,
        ))
        norms = np.linalg.norm(store.vectors, axis=1)
        assert np.all(np.abs(norms - 1.0) <= 1e-5)


class TestPersistence:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(9)
        store = EmbeddingStore(
            tuple(f"id{i}" for i in range(5)),
            rng.standard_normal((5, 8)).astype(np.float32),
            False,
            meta={"encoder": "hash-8-s0", "modality": "text"},
        )
        path = tmp_path / "vectors.emb"
        save_store(store, path)
        loaded = load_store(path)
        assert loaded.ids == store.ids
        assert loaded.vectors.tobytes() == store.vectors.tobytes()
        assert loaded.meta["encoder"] == "hash-8-s0"

    def test_truncated_payload_is_corrupt(self, tmp_path):
        store = EmbeddingStore(("a", "b"), np.ones((2, 4), dtype=np.float32), False)
        path = tmp_path / "vectors.emb"
        save_store(store, path)
        payload = path.read_bytes()
        path.write_bytes(payload[:-3])
        with pytest.raises(StoreFormatError, match="not float32-aligned"):
            load_store(path)

    def test_dimension_mismatch(self, tmp_path):
        store = EmbeddingStore(("a", "b"), np.ones((2, 7), dtype=np.float32), False)
        path = tmp_path / "vectors.emb"
        save_store(store, path)
        sidecar = path.with_name("vectors.emb.json")
        text = sidecar.read_text().replace('"dimension": 7', '"dimension": 8')
        sidecar.write_text(text)
        with pytest.raises(StoreFormatError, match="sidecar declares"):
            load_store(path)

    def test_normalized_flag_survives(self, tmp_path):
        store = normalize_rows(EmbeddingStore(
            ("a",), np.array([[3.0, 4.0]], dtype=np.float32), False,
        ))
        save_store(store, tmp_path / "n.emb")
        assert load_store(tmp_path / "n.emb").normalized
