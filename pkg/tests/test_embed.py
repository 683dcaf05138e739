"""Hash embedding provider and the binary embedding file format."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tabfuse.embed import EmbeddingStore, hash_embed, hash_store, load_embeddings, write_embeddings
from tabfuse.serialize import SerializedRow


def test_hash_embed_is_deterministic_and_unit_norm():
    a = hash_embed("The Age is 34.", 128)
    b = hash_embed("The Age is 34.", 128)
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-6)


def test_hash_embed_distinguishes_close_strings():
    a = hash_embed("abc", 128)
    b = hash_embed("abd", 128)
    assert float(a @ b) < 1.0 - 1e-6


def test_hash_embed_empty_text_is_zero_vector():
    assert np.array_equal(hash_embed("", 16), np.zeros(16))


def test_hash_embed_rejects_tiny_dim():
    with pytest.raises(ValueError, match="dim >= 2"):
        hash_embed("x", 1)


def test_hash_embed_near_orthogonality_over_many_strings():
    rng = np.random.default_rng(0)
    alphabet = np.array(list("abcdefghijklmnopqrstuvwxyz 0123456789"))
    texts = {"".join(rng.choice(alphabet, size=rng.integers(8, 40))) for _ in range(1100)}
    texts = sorted(texts)[:1000]
    mat = np.stack([hash_embed(t, 128) for t in texts])
    gram = np.abs(mat @ mat.T)
    n = len(texts)
    mean_offdiag = (gram.sum() - np.trace(gram)) / (n * (n - 1))
    assert mean_offdiag < 0.2


def test_store_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    rows = {i: rng.normal(size=24).astype(np.float32) for i in (3, 1, 2)}
    store = EmbeddingStore(24, rows, provider_tag="file")
    path = tmp_path / "emb.tgem"
    write_embeddings(store, path)
    again = load_embeddings(path)
    assert again.dim == 24
    assert set(again.rows) == {1, 2, 3}
    for rid in rows:
        assert np.array_equal(again.rows[rid], rows[rid])


def test_written_file_layout_is_canonical(tmp_path):
    store = EmbeddingStore(2, {7: np.array([1.5, -2.0], np.float32),
                               3: np.array([0.25, 8.0], np.float32)})
    path = tmp_path / "emb.tgem"
    write_embeddings(store, path)
    blob = path.read_bytes()
    assert len(blob) == 24 + 2 * (8 + 4 * 2)
    magic, version, n, d = struct.unpack("<4sIQQ", blob[:24])
    assert (magic, version, n, d) == (b"TGEM", 1, 2, 2)
    rid0 = struct.unpack("<Q", blob[24:32])[0]
    assert rid0 == 3  # records sorted by row id

    # byte-identical on re-write
    path2 = tmp_path / "emb2.tgem"
    write_embeddings(store, path2)
    assert path2.read_bytes() == blob


def test_loader_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.tgem"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(ValueError, match="bad magic"):
        load_embeddings(path)


def test_loader_rejects_truncated_payload(tmp_path):
    # header claims n=10, d=4 (needs 10*(8+16)=240 payload bytes), supply 120
    path = tmp_path / "short.tgem"
    path.write_bytes(struct.pack("<4sIQQ", b"TGEM", 1, 10, 4) + b"\x00" * 120)
    with pytest.raises(ValueError, match="expected"):
        load_embeddings(path)


def test_loader_rejects_bad_version_dim_and_duplicates(tmp_path):
    path = tmp_path / "v.tgem"
    path.write_bytes(struct.pack("<4sIQQ", b"TGEM", 9, 0, 4))
    with pytest.raises(ValueError, match="version"):
        load_embeddings(path)

    path.write_bytes(struct.pack("<4sIQQ", b"TGEM", 1, 0, 0))
    with pytest.raises(ValueError, match="dim"):
        load_embeddings(path)

    rec = struct.pack("<Q", 5) + struct.pack("<2f", 1.0, 2.0)
    path.write_bytes(struct.pack("<4sIQQ", b"TGEM", 1, 2, 2) + rec + rec)
    with pytest.raises(ValueError, match="duplicate row_id 5"):
        load_embeddings(path)


def test_store_validates_vector_shapes():
    with pytest.raises(ValueError, match="dim"):
        EmbeddingStore(0, {})
    with pytest.raises(ValueError, match="shape"):
        EmbeddingStore(3, {1: np.zeros(2, np.float32)})


def test_hash_store_covers_all_rows():
    rows = [SerializedRow(5, "The x is 1.", 4), SerializedRow(9, "The x is 2.", 4)]
    store = hash_store(rows, dim=32)
    assert store.dim == 32 and set(store.rows) == {5, 9}
    assert store.provider_tag == "hash-32"
    again = hash_store(rows, dim=32)
    assert np.array_equal(store.matrix([5, 9]), again.matrix([5, 9]))


@given(st.text(alphabet="abcdef ghij", min_size=1, max_size=60))
@settings(max_examples=80, deadline=None)
def test_nonempty_text_embeds_to_unit_vector(text):
    vec = hash_embed(text, 64)
    assert np.isfinite(vec).all()
    assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-6)
