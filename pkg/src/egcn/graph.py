"""Entity graph construction: mention detection, coreference merging, typed edges.

Nodes are token spans in the support documents that mention a candidate
answer or the query subject. Four edge relations connect them: same-document
co-occurrence, identical surface form, shared coreference chain, and the
complement of the union of those three (which makes the graph complete and
therefore connected).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum

from .data import Sample, normalize_tokens, tokenize

log = logging.getLogger(__name__)

COMPLEMENT_MATERIALIZE_LIMIT = 500


class RelationType(Enum):
    DOC_BASED = "DOC_BASED"
    MATCH = "MATCH"
    COREF = "COREF"
    COMPLEMENT = "COMPLEMENT"


HEURISTIC_RELATIONS = (RelationType.DOC_BASED, RelationType.MATCH, RelationType.COREF)


class MentionSource(Enum):
    EXACT = "EXACT"
    COREF = "COREF"


class EmptyGraphError(ValueError):
    """No entity of the candidate set (or the query subject) is mentioned anywhere."""


@dataclass
class Mention:
    doc_index: int
    start: int
    end: int  # exclusive
    entity_key: str
    source: MentionSource
    chain_ids: tuple[int, ...] = ()

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and start < self.end


def _target_index(sample: Sample) -> dict[tuple[str, ...], str]:
    """Normalized token form -> entity key, candidates first so a subject that
    collides with a candidate aliases to the candidate (and stays scoreable)."""
    targets: dict[tuple[str, ...], str] = {}
    for cand in sample.candidates:
        form = normalize_tokens(tokenize(cand))
        if form:
            targets.setdefault(form, cand)
    subject = sample.query.subject
    if subject:
        form = normalize_tokens(tokenize(subject))
        if form:
            targets.setdefault(form, subject)
    return targets


def find_exact_mentions(sample: Sample) -> list[Mention]:
    """Every maximal token span whose normalized form equals a normalized
    candidate or the query subject; longest match wins, no overlaps.

    Spans never start or end on a token that normalizes to nothing, so
    surrounding punctuation is not absorbed into a mention.
    """
    targets = _target_index(sample)
    if not targets:
        return []
    max_len = max(len(form) for form in targets)
    mentions: list[Mention] = []
    for doc_index, tokens in enumerate(sample.documents):
        norms = [normalize_tokens([t]) for t in tokens]
        spans: list[tuple[int, int, str]] = []
        for start in range(len(tokens)):
            if not norms[start]:
                continue
            acc: list[str] = []
            for end in range(start + 1, len(tokens) + 1):
                if norms[end - 1]:
                    acc.extend(norms[end - 1])
                    if len(acc) > max_len:
                        break
                    key = targets.get(tuple(acc))
                    if key is not None:
                        spans.append((start, end, key))
        # longest match first, then leftmost
        spans.sort(key=lambda s: (-(s[1] - s[0]), s[0]))
        taken: list[tuple[int, int]] = []
        for start, end, key in spans:
            if any(s < end and start < e for s, e in taken):
                continue
            taken.append((start, end))
            mentions.append(Mention(doc_index, start, end, key, MentionSource.EXACT))
    mentions.sort(key=lambda m: (m.doc_index, m.start, m.end))
    return mentions


CorefChains = list[list[list[tuple[int, int]]]]  # per document: chains of (start, end) spans


def load_chains(path: str) -> dict[str, CorefChains]:
    """Sidecar file: sample id -> per-document arrays of chains of [start, end]."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    out: dict[str, CorefChains] = {}
    for sid, docs in raw.items():
        out[sid] = [
            [[(int(s), int(e)) for s, e in chain] for chain in doc_chains]
            for doc_chains in docs
        ]
    return out


def merge_coref(sample: Sample, mentions: list[Mention], chains: CorefChains | None) -> list[Mention]:
    """Attach coreference chains to the exact mentions.

    A chain whose spans overlap exact mentions of exactly one entity becomes
    extra mentions of that entity; a chain touching two or more distinct
    entities is discarded entirely, and chains touching none are ignored.
    """
    merged = [
        Mention(m.doc_index, m.start, m.end, m.entity_key, m.source, m.chain_ids)
        for m in mentions
    ]
    if not chains:
        return merged
    chain_counter = 0
    for doc_index, doc_chains in enumerate(chains):
        if doc_index >= len(sample.documents):
            log.warning("%s: coref chains refer to document %d which does not exist",
                        sample.id, doc_index)
            continue
        doc_len = len(sample.documents[doc_index])
        exact_here = [m for m in merged
                      if m.doc_index == doc_index and m.source == MentionSource.EXACT]
        for chain in doc_chains:
            if any(s < 0 or e > doc_len or s >= e for s, e in chain):
                log.warning("%s: rejecting out-of-bounds coref chain in doc %d",
                            sample.id, doc_index)
                continue
            touched = {m.entity_key for m in exact_here
                       if any(m.overlaps(s, e) for s, e in chain)}
            if not touched:
                continue
            if len(touched) > 1:
                log.debug("%s: chain in doc %d resolves ambiguously to %s; discarded",
                          sample.id, doc_index, sorted(touched))
                continue
            key = touched.pop()
            chain_id = chain_counter
            chain_counter += 1
            for s, e in chain:
                existing = [m for m in merged if m.doc_index == doc_index
                            and m.entity_key == key and m.overlaps(s, e)]
                if existing:
                    for m in existing:
                        if chain_id not in m.chain_ids:
                            m.chain_ids = m.chain_ids + (chain_id,)
                else:
                    merged.append(Mention(doc_index, s, e, key,
                                          MentionSource.COREF, (chain_id,)))
    merged.sort(key=lambda m: (m.doc_index, m.start, m.end))
    return merged


def _complement_of(n: int, used: set[tuple[int, int]]) -> set[tuple[int, int]]:
    return {(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in used}


@dataclass
class EntityGraph:
    nodes: list[Mention]
    edges: dict[RelationType, set[tuple[int, int]]]
    candidate_nodes: dict[str, list[int]]
    subject_nodes: list[int]
    n_docs: int
    complement_materialized: bool = True

    @property
    def n(self) -> int:
        return len(self.nodes)

    def heuristic_union(self) -> set[tuple[int, int]]:
        out: set[tuple[int, int]] = set()
        for rel in HEURISTIC_RELATIONS:
            out |= self.edges[rel]
        return out

    def complement_for(self, active: tuple[RelationType, ...]) -> set[tuple[int, int]]:
        """Complement w.r.t. whichever heuristic relations remain active, so
        dropping a relation grows the complement accordingly."""
        used: set[tuple[int, int]] = set()
        for rel in active:
            if rel is not RelationType.COMPLEMENT:
                used |= self.edges[rel]
        return _complement_of(self.n, used)

    def to_obj(self, sample_id: str | None = None) -> dict:
        obj = {
            "nodes": [
                {
                    "doc": m.doc_index,
                    "span": [m.start, m.end],
                    "entity": m.entity_key,
                    "source": m.source.value,
                }
                for m in self.nodes
            ],
            "edges": {
                rel.value: sorted(map(list, pairs))
                for rel, pairs in self.edges.items()
                if not (rel is RelationType.COMPLEMENT and not self.complement_materialized)
            },
            "n_docs": self.n_docs,
        }
        if not self.complement_materialized:
            obj["edges"][RelationType.COMPLEMENT.value] = "implicit"
        if sample_id is not None:
            obj["id"] = sample_id
        return obj


def build_edges(mentions: list[Mention], sample: Sample,
                complement_limit: int = COMPLEMENT_MATERIALIZE_LIMIT) -> EntityGraph:
    """Populate the four typed edge sets over a finalized mention list."""
    if not mentions:
        raise EmptyGraphError(f"{sample.id}: no entity mentions found")
    n = len(mentions)
    doc_based: set[tuple[int, int]] = set()
    match: set[tuple[int, int]] = set()
    coref: set[tuple[int, int]] = set()
    norm_key = [normalize_tokens(tokenize(m.entity_key)) for m in mentions]
    for i in range(n):
        for j in range(i + 1, n):
            a, b = mentions[i], mentions[j]
            if a.doc_index == b.doc_index:
                doc_based.add((i, j))
            if (a.source == MentionSource.EXACT and b.source == MentionSource.EXACT
                    and norm_key[i] == norm_key[j]):
                match.add((i, j))
            if a.chain_ids and set(a.chain_ids) & set(b.chain_ids):
                coref.add((i, j))
    edges: dict[RelationType, set[tuple[int, int]]] = {
        RelationType.DOC_BASED: doc_based,
        RelationType.MATCH: match,
        RelationType.COREF: coref,
    }
    materialize = n <= complement_limit
    if materialize:
        edges[RelationType.COMPLEMENT] = _complement_of(n, doc_based | match | coref)
    else:
        edges[RelationType.COMPLEMENT] = set()
    candidate_nodes: dict[str, list[int]] = {c: [] for c in sample.candidates}
    subject_nodes: list[int] = []
    for idx, m in enumerate(mentions):
        if m.entity_key in candidate_nodes:
            candidate_nodes[m.entity_key].append(idx)
        else:
            subject_nodes.append(idx)
    return EntityGraph(
        nodes=mentions,
        edges=edges,
        candidate_nodes=candidate_nodes,
        subject_nodes=subject_nodes,
        n_docs=len(sample.documents),
        complement_materialized=materialize,
    )


def build_graph(sample: Sample, chains: CorefChains | None = None,
                complement_limit: int = COMPLEMENT_MATERIALIZE_LIMIT) -> EntityGraph:
    """Full per-sample pipeline: exact mentions, coref merge, typed edges."""
    mentions = find_exact_mentions(sample)
    mentions = merge_coref(sample, mentions, chains)
    return build_edges(mentions, sample, complement_limit=complement_limit)


def graph_from_obj(obj: dict, sample: Sample) -> EntityGraph:
    """Rebuild a graph from its dump; the sample supplies the candidate set."""
    nodes = [
        Mention(
            doc_index=int(n["doc"]),
            start=int(n["span"][0]),
            end=int(n["span"][1]),
            entity_key=n["entity"],
            source=MentionSource(n["source"]),
        )
        for n in obj["nodes"]
    ]
    edges: dict[RelationType, set[tuple[int, int]]] = {}
    implicit_complement = False
    for rel in RelationType:
        raw = obj["edges"].get(rel.value, [])
        if raw == "implicit":
            implicit_complement = True
            edges[rel] = set()
        else:
            edges[rel] = {(int(i), int(j)) for i, j in raw}
    candidate_nodes: dict[str, list[int]] = {c: [] for c in sample.candidates}
    subject_nodes: list[int] = []
    for idx, m in enumerate(nodes):
        if m.entity_key in candidate_nodes:
            candidate_nodes[m.entity_key].append(idx)
        else:
            subject_nodes.append(idx)
    return EntityGraph(
        nodes=nodes,
        edges=edges,
        candidate_nodes=candidate_nodes,
        subject_nodes=subject_nodes,
        n_docs=int(obj["n_docs"]),
        complement_materialized=not implicit_complement,
    )


def load_graph_dumps(path: str) -> dict[str, dict]:
    """Read a build-graphs JSONL dump, keyed by sample id."""
    out: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out[obj["id"]] = obj
    return out


@dataclass(frozen=True)
class GraphReport:
    node_count: int
    edge_counts: dict[str, int]
    complete: bool
    connected: bool


def graph_report(graph: EntityGraph) -> GraphReport:
    """Edge counts plus the completeness check that guarantees connectivity."""
    n = graph.n
    counts = {rel.value: len(pairs) for rel, pairs in graph.edges.items()}
    if graph.complement_materialized:
        union = graph.heuristic_union() | graph.edges[RelationType.COMPLEMENT]
        complete = len(union) == n * (n - 1) // 2
    else:
        complete = True  # complement is implicit, by construction
    return GraphReport(
        node_count=n,
        edge_counts=counts,
        complete=complete,
        connected=complete and n >= 1,
    )
