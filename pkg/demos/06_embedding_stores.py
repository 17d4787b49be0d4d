"""The three embedding provenances and the binary container format.

Run:  python3 demos/06_embedding_stores.py
"""

import tempfile
from pathlib import Path

import numpy as np

from egcn.data import Query, Sample
from egcn.encode import (
    hash_embed,
    load_embeddings,
    save_embeddings,
    static_embed,
)

sample = Sample(
    id="demo",
    query=Query.from_raw("capital_of Sweden"),
    raw_supports=["Stockholm is the capital of Sweden ."],
    candidates=["Stockholm", "Oslo"],
    answer="Stockholm",
)

print("== hash store: deterministic unit vectors per token type ==")
store = hash_embed([sample], dim=8, seed=0)
vecs = store.vectors("demo", 0)
print(f"entry 'demo/0' shape: {vecs.shape}")
print(f"norm of each token vector: {np.linalg.norm(vecs, axis=1).round(6)}")

print("\n== binary round trip (f32 on disk) ==")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.bin"
    save_embeddings(store, str(path))
    loaded = load_embeddings(str(path))
    print(f"header dim: {loaded.dim}, entries: {sorted(loaded.entries)}")
    drift = np.abs(loaded.vectors("demo", 0) - vecs).max()
    print(f"max value drift after the f32 round trip: {drift:.2e}")

print("\n== static store: type-level vectors, unknown tokens go to zero ==")
table = {"Stockholm": np.ones(8), "Sweden": np.full(8, 0.5)}
static = static_embed([sample], table, 8)
svecs = static.vectors("demo", 0)
print(f"'Stockholm' row sum: {svecs[0].sum()}, 'is' (unknown) row sum: {svecs[1].sum()}")
print("under masking every candidate token is a placeholder, so a static store")
print("degenerates to zeros for exactly the tokens that matter")
