"""Ablation harness: train and evaluate every model variant with shared seeds."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Sample, tokenize
from .encode import EmbeddingStore, hash_embed, static_embed
from .model import ModelConfig, ModelParams
from .train import TrainConfig, ensemble_evaluate, train

# Row order of the emitted table. The static rows swap contextual-style
# (hash) stores for type-level vectors; the rest reconfigure the model.
VARIANTS: tuple[str, ...] = (
    "full_ensemble",
    "full",
    "static_embeddings",
    "static_embeddings_no_rgcn",
    "no_rgcn",
    "no_relation_types",
    "no_doc_based",
    "no_match",
    "no_coref",
    "no_complement",
    "induced_edges",
)


def variant_config(base: ModelConfig, name: str) -> ModelConfig:
    if name in ("full", "full_ensemble", "static_embeddings"):
        return base
    if name in ("no_rgcn", "static_embeddings_no_rgcn"):
        return replace(base, layers=0)
    if name == "no_relation_types":
        return replace(base, untyped=True)
    if name == "no_doc_based":
        return replace(base, drop_relations=("DOC_BASED",))
    if name == "no_match":
        return replace(base, drop_relations=("MATCH",))
    if name == "no_coref":
        return replace(base, drop_relations=("COREF",))
    if name == "no_complement":
        return replace(base, drop_relations=("COMPLEMENT",))
    if name == "induced_edges":
        return replace(base, induced=True)
    raise ValueError(f"unknown ablation variant '{name}'")


def _uses_static(name: str) -> bool:
    return name.startswith("static_embeddings")


@dataclass
class AblationRow:
    variant: str
    mean_accuracy: float | None
    std_accuracy: float | None
    runs: int
    note: str = ""
    per_run: tuple[float, ...] = ()  # per-seed accuracies, not part of the CSV


@dataclass
class AblationResult:
    rows: list[AblationRow]

    def to_csv(self) -> str:
        lines = ["variant,mean_accuracy,std_accuracy,runs,note"]
        for r in self.rows:
            mean = "" if r.mean_accuracy is None else f"{r.mean_accuracy:.6f}"
            std = "" if r.std_accuracy is None else f"{r.std_accuracy:.6f}"
            lines.append(f"{r.variant},{mean},{std},{r.runs},{r.note}")
        return "\n".join(lines) + "\n"

    def accuracy(self, variant: str) -> float | None:
        for r in self.rows:
            if r.variant == variant:
                return r.mean_accuracy
        raise KeyError(variant)


def type_level_table(samples: list[Sample], dim: int, seed: int) -> dict[str, np.ndarray]:
    """One vector per token type over a corpus; stands in for pretrained
    static vectors when none are supplied."""
    from .encode import hash_token_vector

    vocab: set[str] = set()
    for s in samples:
        for doc in s.documents:
            vocab.update(doc)
        vocab.update(tokenize(s.query.raw))
    return {tok: hash_token_vector(tok, dim, seed) for tok in sorted(vocab)}


def run_ablation(
    train_samples: list[Sample],
    dev_samples: list[Sample],
    base_config: ModelConfig,
    train_config: TrainConfig,
    runs: int = 3,
    masked: bool = False,
    variants: tuple[str, ...] = VARIANTS,
    static_table: dict[str, np.ndarray] | None = None,
    embed_seed: int = 0,
    progress=None,
) -> AblationResult:
    """Train every variant `runs` times with a shared seed set and report
    mean and standard deviation of dev accuracy."""
    from .model import prepare_samples

    for name in variants:
        if name not in VARIANTS:
            raise ValueError(f"unknown ablation variant '{name}'")

    everything = train_samples + dev_samples
    hash_store = hash_embed(everything, base_config.raw_dim, embed_seed)
    if static_table is None:
        # type vectors intentionally use a different seed than the hash store
        static_table = type_level_table(train_samples, base_config.raw_dim, embed_seed + 1)
    static_store = static_embed(everything, static_table, base_config.raw_dim)

    prepared: dict[str, tuple] = {}

    def preps_for(store: EmbeddingStore):
        key = store.provenance
        if key not in prepared:
            tp, _ = prepare_samples(train_samples, store, span_pool=base_config.span_pool)
            dp, _ = prepare_samples(dev_samples, store, span_pool=base_config.span_pool)
            prepared[key] = (tp, dp)
        return prepared[key]

    seeds = [train_config.seed + k for k in range(runs)]
    rows: list[AblationRow] = []
    full_models: list[ModelParams] = []
    full_dev = None
    for name in variants:
        if name == "no_coref" and masked:
            rows.append(AblationRow(name, None, None, 0, "skipped: masked mode has no coref edges"))
            continue
        if name == "full_ensemble":
            continue  # filled in after the full runs exist
        config = variant_config(base_config, name)
        store = static_store if _uses_static(name) else hash_store
        tp, dp = preps_for(store)
        accs = []
        for seed in seeds:
            result = train(tp, dp, config, replace(train_config, seed=seed))
            accs.append(result.dev_accuracy)
            if name == "full":
                full_models.append(result.params)
                full_dev = dp
            if progress is not None:
                progress({"variant": name, "seed": seed, "dev_accuracy": result.dev_accuracy})
        rows.append(AblationRow(
            variant=name,
            mean_accuracy=float(np.mean(accs)),
            std_accuracy=float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
            runs=len(accs),
            per_run=tuple(accs),
        ))
    if "full_ensemble" in variants:
        if full_models:
            acc = ensemble_evaluate(full_models, full_dev,
                                    threads=train_config.threads).accuracy
            row = AblationRow("full_ensemble", acc, None, len(full_models),
                              f"product-rule ensemble of the {len(full_models)} full runs")
        else:
            row = AblationRow("full_ensemble", None, None, 0, "skipped: no full runs requested")
        rows.insert(0, row)
    order = {name: i for i, name in enumerate(VARIANTS)}
    rows.sort(key=lambda r: order[r.variant])
    return AblationResult(rows=rows)
