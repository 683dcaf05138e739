"""
Text serialization and the embedding store
==========================================

The text branch never sees raw cells: each row is rendered to a sentence
per column ("The <column> is <value>."), embedded once by a frozen encoder,
and the vectors are kept in a read-only store. Training looks embeddings up
by row id; it never back-propagates into them.

The built-in encoder is a character-n-gram feature hasher: deterministic,
dependency-free, and good enough to give distinct rows distinct directions.
Stores produced by real language models drop in through the same binary
file format.
"""
import tempfile
from pathlib import Path

import numpy as np

from tabfuse import synthetic
from tabfuse.embed import hash_embed, hash_store, load_embeddings, write_embeddings
from tabfuse.serialize import check_token_budget, read_corpus, serialize_dataset, write_corpus

data = synthetic.mixed_toy(n=120, seed=3)
rows = serialize_dataset(data)
print("row 0:", rows[0].text)
print("row 1:", rows[1].text)

# Numbers render with six significant digits; missing cells say so instead
# of pretending to be a value.
budget = check_token_budget(rows[0])
print(f"estimated tokens: {rows[0].estimated_tokens} (ok={budget.ok}, excess={budget.excess})")

# The corpus persists as JSONL, one {row_id, text} object per line — the
# interchange point for external encoders.
workdir = Path(tempfile.mkdtemp())
corpus_path = workdir / "rows.jsonl"
write_corpus(rows, corpus_path)
print("corpus round trip:", read_corpus(corpus_path)[0].text == rows[0].text)

# Hash embeddings: n-grams of the sentence are hashed into a fixed-width
# vector, then L2-normalized. Same text, same vector, forever.
vec = hash_embed(rows[0].text, dim=128)
print("norm:", float(np.linalg.norm(vec)))
print("deterministic:", np.array_equal(vec, hash_embed(rows[0].text, dim=128)))

# Near-identical sentences land close; unrelated ones near-orthogonal.
close = hash_embed(rows[0].text.replace("blue", "red"), 128)
far = hash_embed("The quick brown fox jumps over the lazy dog.", 128)
print(f"cosine(row0, row0 with one edit) = {float(vec @ close):.3f}")
print(f"cosine(row0, unrelated)          = {float(vec @ far):.3f}")

# A store is just {row_id -> vector} plus the dimension, written in a small
# little-endian binary format with a magic header and sorted row ids.
store = hash_store(rows, dim=128)
store_path = workdir / "embeddings.tgem"
write_embeddings(store, store_path)
print("file bytes:", store_path.stat().st_size, "= 24 + n*(8 + 4*dim)")

again = load_embeddings(store_path)
print("loaded:", len(again), "rows, dim", again.dim)
print("lookup matches:", np.allclose(again.matrix([0, 1]), store.matrix([0, 1])))
