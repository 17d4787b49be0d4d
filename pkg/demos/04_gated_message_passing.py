"""How the gated relational layer behaves: gates, reach, equivariance.

Run:  python3 demos/04_gated_message_passing.py
"""

import itertools

import numpy as np

from egcn import tensor as T
from egcn.graph import EntityGraph, Mention, MentionSource, RelationType
from egcn.rgcn import RgcnParams, layer_update, propagate


def path_graph(n):
    """0 - 1 - ... - (n-1) connected by same-document edges only."""
    mentions = [Mention(i, 0, 1, f"e{i}", MentionSource.EXACT) for i in range(n)]
    doc = {(i, i + 1) for i in range(n - 1)}
    comp = set(itertools.combinations(range(n), 2)) - doc
    return EntityGraph(
        nodes=mentions,
        edges={RelationType.DOC_BASED: doc, RelationType.MATCH: set(),
               RelationType.COREF: set(), RelationType.COMPLEMENT: comp},
        candidate_nodes={f"e{i}": [i] for i in range(n)},
        subject_nodes=[], n_docs=n,
    )


rng = np.random.default_rng(0)
graph = path_graph(4)
params = RgcnParams.init(6, rng)
h0 = rng.normal(size=(4, 6))

print("== the gate interpolates between update and previous state ==")
out = layer_update(T.tensor(h0), graph, params)
print(f"|h1 - h0| per node: {np.abs(out.data - h0).mean(axis=1).round(3)}")

params.gate_block.bias.data[:] = -1e9  # force the gate shut
frozen = layer_update(T.tensor(h0), graph, params)
print(f"with the gate forced shut the layer is the identity: "
      f"{np.array_equal(frozen.data, h0)}")
params.gate_block.bias.data[:] = 0.0

print("\n== information reach grows one hop per layer ==")
active = (RelationType.DOC_BASED,)  # complement off, pure path
bumped = h0.copy()
bumped[3] += 1.0
for layers in (1, 2, 3):
    a = propagate(T.tensor(h0), graph, params, layers, active=active).data
    b = propagate(T.tensor(bumped), graph, params, layers, active=active).data
    print(f"  L={layers}: perturbing node 3 changes node 0 by "
          f"{np.abs(a[0] - b[0]).max():.2e}")

print("\n== permutation equivariance ==")
perm = [2, 0, 3, 1]
remap = {old: new for new, old in enumerate(perm)}
pg = path_graph(4)
for rel in RelationType:
    pg.edges[rel] = {tuple(sorted((remap[i], remap[j]))) for i, j in graph.edges[rel]}
out_a = propagate(T.tensor(h0), graph, params, 2).data
out_b = propagate(T.tensor(h0[perm]), pg, params, 2).data
print(f"propagate(perm(x), perm(graph)) == perm(propagate(x, graph)): "
      f"{np.allclose(out_b, out_a[perm], atol=1e-12)}")
