"""Gated relational graph convolution over an entity graph.

Each layer sends one message per (neighbour, relation) pair, averages over
distinct neighbours, and writes the result through a sigmoid gate so a node
can keep its previous state. Layer parameters are shared across layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .graph import HEURISTIC_RELATIONS, EntityGraph, RelationType
from .tensor import AffineBlock, Tensor

ALL_RELATIONS: tuple[RelationType, ...] = tuple(RelationType)


@dataclass
class RgcnParams:
    self_block: AffineBlock  # d -> d
    relation_blocks: dict[RelationType, AffineBlock]  # d -> d each
    gate_block: AffineBlock  # 2d -> d

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "RgcnParams":
        return cls(
            self_block=AffineBlock.init(dim, dim, rng),
            relation_blocks={rel: AffineBlock.init(dim, dim, rng) for rel in ALL_RELATIONS},
            gate_block=AffineBlock.init(2 * dim, dim, rng),
        )

    @property
    def dim(self) -> int:
        return self.self_block.in_dim

    def shared_block(self) -> AffineBlock:
        """The single message transform used by the untyped and induced variants."""
        return self.relation_blocks[RelationType.DOC_BASED]


def _pairs_to_adjacency(n: int, pairs: set[tuple[int, int]]) -> np.ndarray:
    a = np.zeros((n, n))
    for i, j in pairs:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


@dataclass
class _Propagation:
    """Constant per-graph structure reused by every layer."""

    terms: list[tuple[AffineBlock, np.ndarray]]  # (message block, degree-scaled adjacency)
    lazy_complement: AffineBlock | None
    lazy_union: np.ndarray | None  # 0/1 adjacency of the active heuristic union
    n: int


def _plan(graph: EntityGraph, params: RgcnParams,
          active: tuple[RelationType, ...], untyped: bool) -> _Propagation:
    n = graph.n
    if untyped:
        if n == 1:
            return _Propagation([], None, None, n)
        adj = (np.ones((n, n)) - np.eye(n)) / (n - 1)
        return _Propagation([(params.shared_block(), adj)], None, None, n)

    heuristics = tuple(r for r in active if r is not RelationType.COMPLEMENT)
    complement_active = RelationType.COMPLEMENT in active
    union = np.zeros((n, n))
    rel_adj: dict[RelationType, np.ndarray] = {}
    for rel in heuristics:
        a = _pairs_to_adjacency(n, graph.edges[rel])
        rel_adj[rel] = a
        union = np.maximum(union, a)

    lazy_block = None
    lazy_union = None
    if complement_active:
        degrees = np.full(n, float(n - 1))  # union with the complement is complete
        if graph.complement_materialized:
            if set(heuristics) == set(HEURISTIC_RELATIONS):
                comp_pairs = graph.edges[RelationType.COMPLEMENT]
            else:
                comp_pairs = graph.complement_for(heuristics)
            rel_adj[RelationType.COMPLEMENT] = _pairs_to_adjacency(n, comp_pairs)
        else:
            lazy_block = params.relation_blocks[RelationType.COMPLEMENT]
            lazy_union = union
    else:
        degrees = union.sum(axis=1)

    inv_deg = np.where(degrees > 0, 1.0 / np.maximum(degrees, 1.0), 0.0)
    terms = [
        (params.relation_blocks[rel], rel_adj[rel] * inv_deg[:, None])
        for rel in rel_adj
    ]
    return _Propagation(terms, lazy_block, lazy_union, n)


def _gate_combine(u: Tensor, h: Tensor, gate_block: AffineBlock) -> Tensor:
    gate = T.sigmoid(T.affine(gate_block, T.concat([u, h], axis=1)))
    ones = T.tensor(np.ones(gate.shape))
    return T.add(T.mul(T.tanh(u), gate), T.mul(h, T.sub(ones, gate)))


def _layer(h: Tensor, plan: _Propagation, params: RgcnParams) -> Tensor:
    u = T.affine(params.self_block, h)
    for block, adj in plan.terms:
        u = T.add(u, T.matmul(T.tensor(adj), T.affine(block, h)))
    if plan.lazy_complement is not None and plan.n > 1:
        f = T.affine(plan.lazy_complement, h)
        everyone_else = T.sub(T.repeat_rows(T.sum_rows(f), plan.n), f)
        comp = T.sub(everyone_else, T.matmul(T.tensor(plan.lazy_union), f))
        u = T.add(u, T.scale(comp, 1.0 / (plan.n - 1)))
    return _gate_combine(u, h, params.gate_block)


def layer_update(h: Tensor, graph: EntityGraph, params: RgcnParams,
                 active: tuple[RelationType, ...] = ALL_RELATIONS,
                 untyped: bool = False) -> Tensor:
    """One gated update of all node states (rows of h) in parallel.

    A pair carrying several relations contributes one message per relation,
    but the pair's neighbour counts once in the averaging denominator.
    Isolated nodes keep a zero neighbour term.
    """
    if h.ndim != 2 or h.shape[0] != graph.n:
        raise T.ShapeError(f"state shape {h.shape} does not match graph of {graph.n} nodes")
    return _layer(h, _plan(graph, params, active, untyped), params)


def propagate(x_hat: Tensor, graph: EntityGraph, params: RgcnParams, layers: int,
              active: tuple[RelationType, ...] = ALL_RELATIONS,
              untyped: bool = False) -> Tensor:
    """Apply `layers` shared-parameter updates; zero layers returns the input."""
    if layers < 0:
        raise ValueError("layer count must be non-negative")
    plan = _plan(graph, params, active, untyped)
    h = x_hat
    for _ in range(layers):
        h = _layer(h, plan, params)
    return h


def induced_edge_weights(x_hat: Tensor, edge_matrix: Tensor) -> Tensor:
    """Soft edge scores between all node pairs from a bilinear form of the
    query-aware encodings."""
    return T.sigmoid(T.matmul(T.matmul(x_hat, edge_matrix), T.transpose(x_hat)))


def induced_layer_update(h: Tensor, x_hat: Tensor, params: RgcnParams,
                         edge_matrix: Tensor) -> Tensor:
    """Fully-connected single-relation layer with learned edge weights.

    Edge scores come from x_hat (the layer-0 encodings), not the current
    state, so the soft structure is fixed across layers.
    """
    n = h.shape[0]
    u = T.affine(params.self_block, h)
    if n > 1:
        weights = induced_edge_weights(x_hat, edge_matrix)
        off_diag = T.mul(weights, T.tensor(1.0 - np.eye(n)))
        msgs = T.matmul(off_diag, T.affine(params.shared_block(), h))
        u = T.add(u, T.scale(msgs, 1.0 / (n - 1)))
    return _gate_combine(u, h, params.gate_block)


def propagate_induced(x_hat: Tensor, params: RgcnParams, edge_matrix: Tensor,
                      layers: int) -> Tensor:
    h = x_hat
    for _ in range(layers):
        h = induced_layer_update(h, x_hat, params, edge_matrix)
    return h
