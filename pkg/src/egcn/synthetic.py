"""Synthetic two-hop question answering task.

Each sample hides the answer behind a bridge entity: one document links the
query subject to a bridge, another links that bridge to the answer, and
distractor chains of identical shape (with different subjects) make every
shortcut ambiguous. Answering reliably requires following the chain
subject -> bridge -> bridge -> answer across documents, a four-node path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Query, Sample
from .model import ModelConfig

REL_ONE = "linksto"
REL_TWO = "yields"
QUERY_RELATION = "target_of"


@dataclass(frozen=True)
class TaskSpec:
    n_candidates: int = 8
    n_docs: int = 6
    entity_pool: int = 40
    subject_pool: int = 6
    filler_pool: int = 120
    max_fillers: int = 3


def _chain_docs(subject: str, bridge: str, obj: str, extra: str | None,
                rng: np.random.Generator, spec: TaskSpec, fillers: list[str]) -> list[list[str]]:
    def pad() -> list[str]:
        k = int(rng.integers(0, spec.max_fillers + 1))
        return [fillers[int(rng.integers(0, len(fillers)))] for _ in range(k)]

    first = [subject, REL_ONE, bridge] + ([extra] if extra else []) + pad()
    second = [bridge, REL_TWO, obj] + pad()
    return [first, second]


def generate_two_hop(count: int, seed: int, spec: TaskSpec = TaskSpec(),
                     id_prefix: str = "syn") -> list[Sample]:
    """Emit `count` samples with 8 candidates over 6 documents (by default):
    the true chain, two distractor chains with decoy subjects drawn from the
    same subject pool, and two floater candidates without chain context.

    Every candidate's local context is interchangeable with the answer's, so
    only the chain through the query's subject separates them.
    """
    rng = np.random.default_rng(seed)
    entities = [f"ent{k}" for k in range(spec.entity_pool)]
    subjects = [f"subj{k}" for k in range(spec.subject_pool)]
    fillers = [f"flr{k}" for k in range(spec.filler_pool)]
    samples: list[Sample] = []
    for i in range(count):
        picks = rng.choice(len(entities), size=8, replace=False)
        (bridge, answer, bridge2, obj2,
         bridge3, obj3, floater1, floater2) = (entities[p] for p in picks)
        subj_picks = rng.choice(len(subjects), size=3, replace=False)
        subject, decoy_s2, decoy_s3 = (subjects[p] for p in subj_picks)

        docs = _chain_docs(subject, bridge, answer, None, rng, spec, fillers)
        docs += _chain_docs(decoy_s2, bridge2, obj2, floater1, rng, spec, fillers)
        docs += _chain_docs(decoy_s3, bridge3, obj3, floater2, rng, spec, fillers)
        order = rng.permutation(len(docs))
        docs = [docs[int(p)] for p in order]

        candidates = [answer, bridge, bridge2, obj2, bridge3, obj3, floater1, floater2]
        candidates = [candidates[int(p)] for p in rng.permutation(len(candidates))]

        samples.append(Sample(
            id=f"{id_prefix}_{i:05d}",
            query=Query.from_raw(f"{QUERY_RELATION} {subject}"),
            raw_supports=[" ".join(doc) for doc in docs],
            candidates=candidates,
            answer=answer,
        ))
    return samples


def small_task_config(layers: int = 3, dropout: float = 0.0) -> ModelConfig:
    """Desk-scale model dimensions for the synthetic task (hash embeddings)."""
    return ModelConfig(
        raw_dim=64,
        proj_dim=32,
        lstm_sizes=(32, 32),
        fuse_sizes=(96, 64),
        layers=layers,
        dropout=dropout,
        score_head="mlp",
        score_sizes=(64, 32),
    )
