"""Token-embedding stores and the trainable encoders that consume them.

Document and query token vectors are precomputed and frozen; gradients never
flow into a store. The trainable pieces are the stacked bidirectional LSTM
that turns query token vectors into a single query vector, the projection of
pooled mention spans, and the feed-forward fusion that makes every mention
encoding query-aware.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import Sample, tokenize
from .graph import EntityGraph
from .tensor import AffineBlock, Tensor

EMBEDDING_MAGIC = b"EGCNEMB1"


class EmbeddingFormatError(ValueError):
    """The embedding file header or layout is invalid."""


class CoverageError(KeyError):
    """A required (document, token) vector is missing from the store."""


def store_key(sample_id: str, doc_index: int | None = None) -> str:
    return f"{sample_id}/query" if doc_index is None else f"{sample_id}/{doc_index}"


@dataclass
class EmbeddingStore:
    dim: int
    entries: dict[str, np.ndarray]  # key -> (token_count, dim) float64
    provenance: str = "contextual"  # contextual | static | hash

    def vectors(self, sample_id: str, doc_index: int | None = None) -> np.ndarray:
        key = store_key(sample_id, doc_index)
        try:
            return self.entries[key]
        except KeyError:
            raise CoverageError(f"no embedding entry for '{key}'") from None

    def token_vector(self, sample_id: str, doc_index: int, token_index: int) -> np.ndarray:
        arr = self.vectors(sample_id, doc_index)
        if token_index >= arr.shape[0]:
            raise CoverageError(
                f"sample '{sample_id}' doc {doc_index}: token {token_index} not covered "
                f"(entry has {arr.shape[0]} tokens)"
            )
        return arr[token_index]

    def merge(self, other: "EmbeddingStore") -> None:
        if other.dim != self.dim:
            raise EmbeddingFormatError(f"cannot merge dim {other.dim} into dim {self.dim}")
        self.entries.update(other.entries)


def save_embeddings(store: EmbeddingStore, path: str) -> None:
    """Binary layout: magic, u32 dim, u32 entry count, then length-prefixed
    UTF-8 key, u32 token count and token_count*dim little-endian f32 values."""
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", store.dim, len(store.entries)))
        for key, arr in store.entries.items():
            raw = key.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.shape[0]))
            fh.write(arr.astype("<f4").tobytes())


def load_embeddings(path: str) -> EmbeddingStore:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != EMBEDDING_MAGIC:
            raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise EmbeddingFormatError(f"{path}: truncated header")
        dim, count = struct.unpack("<II", header)
        if dim == 0:
            raise EmbeddingFormatError(f"{path}: zero embedding dimension")
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (key_len,) = struct.unpack("<I", fh.read(4))
            key = fh.read(key_len).decode("utf-8")
            (tokens,) = struct.unpack("<I", fh.read(4))
            buf = fh.read(tokens * dim * 4)
            if len(buf) != tokens * dim * 4:
                raise EmbeddingFormatError(f"{path}: truncated entry '{key}'")
            entries[key] = np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(tokens, dim)
    return EmbeddingStore(dim=dim, entries=entries, provenance="contextual")


def hash_token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic unit-norm pseudo-embedding of a token string."""
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=str(seed).encode("utf-8")
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def hash_embed(samples: list[Sample], dim: int, seed: int) -> EmbeddingStore:
    """Position-independent hash embeddings; the desk-scale stand-in for a
    pretrained contextual encoder."""
    if dim <= 0:
        raise ValueError("embedding dimension must be positive")
    cache: dict[str, np.ndarray] = {}

    def vec(token: str) -> np.ndarray:
        got = cache.get(token)
        if got is None:
            got = hash_token_vector(token, dim, seed)
            cache[token] = got
        return got

    entries: dict[str, np.ndarray] = {}
    for sample in samples:
        for d, tokens in enumerate(sample.documents):
            entries[store_key(sample.id, d)] = np.stack([vec(t) for t in tokens]) if tokens else np.zeros((0, dim))
        q_tokens = tokenize(sample.query.raw)
        entries[store_key(sample.id)] = np.stack([vec(t) for t in q_tokens]) if q_tokens else np.zeros((0, dim))
    return EmbeddingStore(dim=dim, entries=entries, provenance="hash")


def load_static_vectors(path: str) -> tuple[dict[str, np.ndarray], int]:
    """Plain-text type-level vectors: one 'token v1 ... vD' line per type."""
    table: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingFormatError(f"{path}:{line_no}: no vector values")
            elif len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{line_no}: expected {dim} values, got {len(values)}"
                )
            table[token] = np.array([float(v) for v in values])
    if dim is None:
        raise EmbeddingFormatError(f"{path}: empty vector file")
    return table, dim


def static_embed(samples: list[Sample], table: dict[str, np.ndarray], dim: int) -> EmbeddingStore:
    """Context-insensitive store; tokens missing from the table map to zero."""
    zero = np.zeros(dim)

    def vec(token: str) -> np.ndarray:
        return table.get(token, zero)

    entries: dict[str, np.ndarray] = {}
    for sample in samples:
        for d, tokens in enumerate(sample.documents):
            entries[store_key(sample.id, d)] = (
                np.stack([vec(t) for t in tokens]) if tokens else np.zeros((0, dim))
            )
        q_tokens = tokenize(sample.query.raw)
        entries[store_key(sample.id)] = (
            np.stack([vec(t) for t in q_tokens]) if q_tokens else np.zeros((0, dim))
        )
    return EmbeddingStore(dim=dim, entries=entries, provenance="static")


@dataclass
class LstmCell:
    weight: Tensor  # (4H, in_dim + H)
    bias: Tensor  # (4H,)
    hidden: int

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator) -> "LstmCell":
        limit = np.sqrt(6.0 / (in_dim + hidden + 4 * hidden))
        w = rng.uniform(-limit, limit, size=(4 * hidden, in_dim + hidden))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0  # forget gate bias
        return cls(T.parameter(w), T.parameter(b), hidden)

    def block(self) -> AffineBlock:
        return AffineBlock(self.weight, self.bias)


def _run_cell(cell: LstmCell, xs: list[Tensor], reverse: bool) -> list[Tensor]:
    h_dim = cell.hidden
    block = cell.block()
    h = T.tensor(np.zeros(h_dim))
    c = T.tensor(np.zeros(h_dim))
    outs: list[Tensor] = []
    seq = list(reversed(xs)) if reverse else xs
    for x in seq:
        z = T.affine(block, T.concat([x, h]))
        gi, gf, gg, go = T.split(z, [h_dim] * 4)
        c = T.add(T.mul(T.sigmoid(gf), c), T.mul(T.sigmoid(gi), T.tanh(gg)))
        h = T.mul(T.sigmoid(go), T.tanh(c))
        outs.append(h)
    if reverse:
        outs.reverse()
    return outs


@dataclass
class BiLstmLayer:
    forward: LstmCell
    backward: LstmCell

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator) -> "BiLstmLayer":
        return cls(LstmCell.init(in_dim, hidden, rng), LstmCell.init(in_dim, hidden, rng))

    def run(self, xs: list[Tensor]) -> tuple[list[Tensor], Tensor, Tensor]:
        fwd = _run_cell(self.forward, xs, reverse=False)
        bwd = _run_cell(self.backward, xs, reverse=True)
        merged = [T.concat([f, b]) for f, b in zip(fwd, bwd)]
        # final forward state is the last position; final backward state the first
        return merged, fwd[-1], bwd[0]


@dataclass
class EncoderParams:
    layers: list[BiLstmLayer]
    mention_proj: AffineBlock  # raw_dim -> proj_dim
    fuse: list[AffineBlock]  # (proj_dim + query_dim) -> ... -> hidden_dim

    @classmethod
    def init(
        cls,
        raw_dim: int,
        proj_dim: int,
        lstm_sizes: tuple[int, ...],
        fuse_sizes: tuple[int, ...],
        rng: np.random.Generator,
    ) -> "EncoderParams":
        layers = []
        in_dim = raw_dim
        for hidden in lstm_sizes:
            layers.append(BiLstmLayer.init(in_dim, hidden, rng))
            in_dim = 2 * hidden
        query_dim = 2 * lstm_sizes[-1]
        fuse = []
        f_in = proj_dim + query_dim
        for size in fuse_sizes:
            fuse.append(AffineBlock.init(f_in, size, rng))
            f_in = size
        return cls(
            layers=layers,
            mention_proj=AffineBlock.init(raw_dim, proj_dim, rng),
            fuse=fuse,
        )

    @property
    def query_dim(self) -> int:
        return 2 * self.layers[-1].forward.hidden


def encode_query(sample: Sample, store: EmbeddingStore, params: EncoderParams) -> Tensor:
    """Two stacked bidirectional recurrent layers; the query vector is the
    concatenation of the top layer's final forward and backward states."""
    tokens = tokenize(sample.query.raw)
    if not tokens:
        raise ValueError(f"sample '{sample.id}': empty query")
    vectors = store.vectors(sample.id)
    if vectors.shape[0] != len(tokens):
        raise CoverageError(
            f"sample '{sample.id}': query entry has {vectors.shape[0]} vectors "
            f"for {len(tokens)} tokens"
        )
    xs: list[Tensor] = [T.tensor(vectors[i]) for i in range(len(tokens))]
    final_f = final_b = None
    for layer in params.layers:
        xs, final_f, final_b = layer.run(xs)
    return T.concat([final_f, final_b])


def pool_mention_spans(
    graph: EntityGraph, sample: Sample, store: EmbeddingStore, pool: str = "mean"
) -> np.ndarray:
    """Frozen per-node annotations: pool each span's token vectors."""
    rows = []
    for m in graph.nodes:
        span = [
            store.token_vector(sample.id, m.doc_index, t) for t in range(m.start, m.end)
        ]
        if pool == "mean":
            rows.append(np.mean(span, axis=0))
        elif pool == "first":
            rows.append(span[0])
        elif pool == "last":
            rows.append(span[-1])
        else:
            raise ValueError(f"unknown span pool '{pool}'")
    return np.stack(rows)


def encode_mentions(
    graph: EntityGraph,
    sample: Sample,
    store: EmbeddingStore,
    params: EncoderParams,
    pool: str = "mean",
) -> Tensor:
    """Pooled span vectors projected into the model's mention space."""
    pooled = pool_mention_spans(graph, sample, store, pool=pool)
    return T.affine(params.mention_proj, T.tensor(pooled))


def query_aware_encoding(query: Tensor, projected: Tensor, params: EncoderParams) -> Tensor:
    """Fuse the query into every mention: concat then a tanh MLP."""
    n = projected.shape[0]
    h = T.concat([projected, T.repeat_rows(query, n)], axis=1)
    for block in params.fuse:
        h = T.tanh(T.affine(block, h))
    return h
