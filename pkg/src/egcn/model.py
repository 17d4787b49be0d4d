"""End-to-end scoring model: configuration, parameters, forward pass, checkpoints.

A candidate's logit is the maximum, over the graph nodes that mention it, of
a feed-forward score of [query, final node state]; candidate probabilities
are the softmax over candidates that have at least one mention.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import Sample
from .encode import (
    EmbeddingStore,
    EncoderParams,
    pool_mention_spans,
    query_aware_encoding,
)
from .graph import CorefChains, EmptyGraphError, EntityGraph, RelationType, build_graph
from .rgcn import ALL_RELATIONS, RgcnParams, propagate, propagate_induced
from .tensor import AffineBlock, Tensor

CHECKPOINT_MAGIC = b"EGCNCKPT"
CHECKPOINT_VERSION = 1
FLOOR_LOGIT = -30.0


class CheckpointError(ValueError):
    """Checkpoint file is malformed or inconsistent with its config."""


@dataclass(frozen=True)
class ModelConfig:
    raw_dim: int = 3072
    proj_dim: int = 256
    lstm_sizes: tuple[int, ...] = (256, 128)
    fuse_sizes: tuple[int, ...] = (1024, 512)
    layers: int = 3
    dropout: float = 0.0
    score_head: str = "mlp"  # mlp | affine
    score_sizes: tuple[int, ...] = (256, 128)
    span_pool: str = "mean"  # mean | first | last
    drop_relations: tuple[str, ...] = ()
    untyped: bool = False
    induced: bool = False

    def __post_init__(self):
        if self.layers < 0:
            raise ValueError("layer count must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.score_head not in ("mlp", "affine"):
            raise ValueError(f"unknown score head '{self.score_head}'")
        for rel in self.drop_relations:
            RelationType(rel)  # raises on unknown names

    @property
    def hidden_dim(self) -> int:
        return self.fuse_sizes[-1]

    @property
    def query_dim(self) -> int:
        return 2 * self.lstm_sizes[-1]

    def active_relations(self) -> tuple[RelationType, ...]:
        dropped = {RelationType(r) for r in self.drop_relations}
        return tuple(r for r in ALL_RELATIONS if r not in dropped)

    def to_dict(self) -> dict:
        return {
            "raw_dim": self.raw_dim,
            "proj_dim": self.proj_dim,
            "lstm_sizes": list(self.lstm_sizes),
            "fuse_sizes": list(self.fuse_sizes),
            "layers": self.layers,
            "dropout": self.dropout,
            "score_head": self.score_head,
            "score_sizes": list(self.score_sizes),
            "span_pool": self.span_pool,
            "drop_relations": list(self.drop_relations),
            "untyped": self.untyped,
            "induced": self.induced,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(
            raw_dim=int(obj["raw_dim"]),
            proj_dim=int(obj["proj_dim"]),
            lstm_sizes=tuple(obj["lstm_sizes"]),
            fuse_sizes=tuple(obj["fuse_sizes"]),
            layers=int(obj["layers"]),
            dropout=float(obj["dropout"]),
            score_head=obj["score_head"],
            score_sizes=tuple(obj["score_sizes"]),
            span_pool=obj["span_pool"],
            drop_relations=tuple(obj["drop_relations"]),
            untyped=bool(obj["untyped"]),
            induced=bool(obj["induced"]),
        )


@dataclass
class ModelParams:
    config: ModelConfig
    encoder: EncoderParams
    rgcn: RgcnParams
    score_blocks: list[AffineBlock]
    edge_matrix: Tensor  # bilinear edge scorer, used only by the induced variant

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "ModelParams":
        encoder = EncoderParams.init(
            config.raw_dim, config.proj_dim, config.lstm_sizes, config.fuse_sizes, rng
        )
        rgcn = RgcnParams.init(config.hidden_dim, rng)
        score_in = config.hidden_dim + config.query_dim
        blocks: list[AffineBlock] = []
        if config.score_head == "affine":
            blocks.append(AffineBlock.init(score_in, 1, rng))
        else:
            cur = score_in
            for size in config.score_sizes:
                blocks.append(AffineBlock.init(cur, size, rng))
                cur = size
            blocks.append(AffineBlock.init(cur, 1, rng))
        d = config.hidden_dim
        limit = np.sqrt(6.0 / (2 * d))
        edge_matrix = T.parameter(rng.uniform(-limit, limit, size=(d, d)))
        return cls(config, encoder, rgcn, blocks, edge_matrix)

    def named(self) -> dict[str, Tensor]:
        """All trainable tensors in a stable, declared order."""
        out: dict[str, Tensor] = {}
        for li, layer in enumerate(self.encoder.layers):
            out[f"query_lstm.{li}.fwd.weight"] = layer.forward.weight
            out[f"query_lstm.{li}.fwd.bias"] = layer.forward.bias
            out[f"query_lstm.{li}.bwd.weight"] = layer.backward.weight
            out[f"query_lstm.{li}.bwd.bias"] = layer.backward.bias
        out["mention_proj.weight"] = self.encoder.mention_proj.weight
        out["mention_proj.bias"] = self.encoder.mention_proj.bias
        for fi, block in enumerate(self.encoder.fuse):
            out[f"query_fuse.{fi}.weight"] = block.weight
            out[f"query_fuse.{fi}.bias"] = block.bias
        out["rgcn.self.weight"] = self.rgcn.self_block.weight
        out["rgcn.self.bias"] = self.rgcn.self_block.bias
        for rel in ALL_RELATIONS:
            block = self.rgcn.relation_blocks[rel]
            out[f"rgcn.rel.{rel.value}.weight"] = block.weight
            out[f"rgcn.rel.{rel.value}.bias"] = block.bias
        out["rgcn.gate.weight"] = self.rgcn.gate_block.weight
        out["rgcn.gate.bias"] = self.rgcn.gate_block.bias
        for si, block in enumerate(self.score_blocks):
            out[f"score.{si}.weight"] = block.weight
            out[f"score.{si}.bias"] = block.bias
        out["edge_scorer"] = self.edge_matrix
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named().items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for name, p in self.named().items():
            p.data[:] = values[name]

    def quantize_f32(self) -> None:
        """Round all parameters to f32-representable values, matching the
        checkpoint precision so a save/load round trip is exact."""
        for p in self.named().values():
            p.data[:] = p.data.astype("<f4").astype(np.float64)


@dataclass
class PreparedSample:
    sample: Sample
    graph: EntityGraph
    node_features: np.ndarray  # (n, raw_dim), frozen
    query_vectors: np.ndarray  # (query_tokens, raw_dim), frozen


def prepare_sample(
    sample: Sample,
    store: EmbeddingStore,
    chains: CorefChains | None = None,
    span_pool: str = "mean",
) -> PreparedSample:
    graph = build_graph(sample, chains)
    features = pool_mention_spans(graph, sample, store, pool=span_pool)
    return PreparedSample(
        sample=sample,
        graph=graph,
        node_features=features,
        query_vectors=store.vectors(sample.id),
    )


def prepare_samples(
    samples: list[Sample],
    store: EmbeddingStore,
    chains_by_id: dict[str, CorefChains] | None = None,
    span_pool: str = "mean",
) -> tuple[list[PreparedSample], list[tuple[str, str]]]:
    """Build graphs and frozen features; unusable samples are skipped with a reason."""
    prepared: list[PreparedSample] = []
    skipped: list[tuple[str, str]] = []
    for sample in samples:
        chains = chains_by_id.get(sample.id) if chains_by_id else None
        try:
            prepared.append(prepare_sample(sample, store, chains, span_pool))
        except EmptyGraphError as exc:
            skipped.append((sample.id, str(exc)))
    return prepared, skipped


@dataclass
class Prediction:
    candidates: list[str]
    probabilities: list[float]
    best_nodes: list[int | None]
    predicted_index: int
    fallback: bool = False

    @property
    def predicted(self) -> str:
        return self.candidates[self.predicted_index]


@dataclass
class ForwardResult:
    prediction: Prediction
    logits: Tensor | None  # stacked logits over the scored candidates
    log_probs: Tensor | None
    scored: list[int]  # candidate indices included in the softmax


def _encode_query_from(prep: PreparedSample, params: ModelParams) -> Tensor:
    vectors = prep.query_vectors
    if vectors.shape[0] == 0:
        raise ValueError(f"sample '{prep.sample.id}': empty query")
    xs = [T.tensor(vectors[i]) for i in range(vectors.shape[0])]
    final_f = final_b = None
    for layer in params.encoder.layers:
        xs, final_f, final_b = layer.run(xs)
    return T.concat([final_f, final_b])


def forward_sample(
    params: ModelParams,
    prep: PreparedSample,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardResult:
    cfg = params.config
    graph = prep.graph
    q = _encode_query_from(prep, params)
    projected = T.affine(params.encoder.mention_proj, T.tensor(prep.node_features))
    x_hat = query_aware_encoding(q, projected, params.encoder)
    if training and cfg.dropout > 0.0:
        x_hat = T.dropout(x_hat, cfg.dropout, rng)
    if cfg.induced:
        h = propagate_induced(x_hat, params.rgcn, params.edge_matrix, cfg.layers)
    else:
        h = propagate(x_hat, graph, params.rgcn, cfg.layers,
                      active=cfg.active_relations(), untyped=cfg.untyped)
    feats = T.concat([h, T.repeat_rows(q, graph.n)], axis=1)
    if training and cfg.dropout > 0.0:
        feats = T.dropout(feats, cfg.dropout, rng)
    s = feats
    for block in params.score_blocks[:-1]:
        s = T.tanh(T.affine(block, s))
    node_scores = T.flatten(T.affine(params.score_blocks[-1], s))

    candidates = prep.sample.candidates
    best_nodes: list[int | None] = [None] * len(candidates)
    scored: list[int] = []
    logit_parts: list[Tensor] = []
    for ci, cand in enumerate(candidates):
        nodes = graph.candidate_nodes.get(cand, [])
        if not nodes:
            continue
        sub = T.gather(node_scores, nodes)
        top, arg = T.reduce_max(sub)
        best_nodes[ci] = nodes[arg]
        scored.append(ci)
        logit_parts.append(top)

    if not scored:
        # no candidate is mentioned anywhere: documented fallback to the
        # first candidate, reported so callers can count the event
        pred = Prediction(
            candidates=list(candidates),
            probabilities=[0.0] * len(candidates),
            best_nodes=best_nodes,
            predicted_index=0,
            fallback=True,
        )
        return ForwardResult(pred, None, None, [])

    logits = T.stack_scalars(logit_parts)
    log_probs = T.log_softmax(logits)
    probs = [0.0] * len(candidates)
    for pos, ci in enumerate(scored):
        probs[ci] = float(np.exp(log_probs.data[pos]))
    predicted = int(np.argmax(probs))  # ties resolve to the lowest index
    pred = Prediction(
        candidates=list(candidates),
        probabilities=probs,
        best_nodes=best_nodes,
        predicted_index=predicted,
    )
    return ForwardResult(pred, logits, log_probs, scored)


def nll_loss(result: ForwardResult, gold: str) -> tuple[Tensor, bool]:
    """Negative log-likelihood of the gold candidate.

    If the gold candidate has no mentions it enters the softmax with a fixed
    floor logit so the loss stays finite; the second return value flags that
    event. Returns (None, True) is never used: samples with no scored
    candidates at all must be filtered by the caller.
    """
    candidates = result.prediction.candidates
    if gold not in candidates:
        raise ValueError(f"gold answer '{gold}' not among candidates")
    if not result.scored:
        raise ValueError("sample has no scored candidates; cannot train on it")
    ci = candidates.index(gold)
    if ci in result.scored:
        pos = result.scored.index(ci)
        return T.neg(T.pick(result.log_probs, pos)), False
    extended = T.concat([result.logits, T.tensor([FLOOR_LOGIT])])
    log_probs = T.log_softmax(extended)
    return T.neg(T.pick(log_probs, extended.shape[0] - 1)), True


def save_checkpoint(params: ModelParams, path: str, extra: dict | None = None) -> None:
    """Versioned binary: magic, version, config+extra JSON, then f32 blocks in
    declared order, each with its name and shape."""
    header = json.dumps(
        {"config": params.config.to_dict(), "extra": extra or {}},
        sort_keys=True,
    ).encode("utf-8")
    named = params.named()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(named)))
        for name, p in named.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", p.data.ndim))
            for dim in p.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(p.data.astype("<f4").tobytes())


def load_checkpoint(path: str) -> tuple[ModelParams, dict]:
    with open(path, "rb") as fh:
        if fh.read(8) != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(hlen).decode("utf-8"))
        config = ModelConfig.from_dict(meta["config"])
        params = ModelParams.init(config, np.random.default_rng(0))
        named = params.named()
        (count,) = struct.unpack("<I", fh.read(4))
        if count != len(named):
            raise CheckpointError(
                f"{path}: {count} parameter blocks, expected {len(named)}"
            )
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            if name not in named:
                raise CheckpointError(f"{path}: unexpected block '{name}'")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            p = named[name]
            if shape != p.data.shape:
                raise CheckpointError(
                    f"{path}: block '{name}' has shape {shape}, expected {p.data.shape}"
                )
            n_vals = int(np.prod(shape)) if shape else 1
            buf = fh.read(n_vals * 4)
            if len(buf) != n_vals * 4:
                raise CheckpointError(f"{path}: truncated block '{name}'")
            p.data[:] = np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(shape)
    return params, meta.get("extra", {})
