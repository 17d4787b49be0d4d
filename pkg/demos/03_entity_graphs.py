"""Building a typed entity graph from documents, with coreference chains.

Run:  python3 demos/03_entity_graphs.py
"""

from egcn.data import Query, Sample
from egcn.graph import build_graph, find_exact_mentions, graph_report

sample = Sample(
    id="demo",
    query=Query.from_raw("capital_of Sweden"),
    raw_supports=[
        "Stockholm is the capital of Sweden .",
        "Sweden , it is said , exports Volvo cars .",
        "Oslo is the capital of Norway .",
    ],
    candidates=["Stockholm", "Volvo", "Oslo"],
    answer="Stockholm",
)

print("== exact mentions (candidates and the query subject) ==")
for m in find_exact_mentions(sample):
    print(f"  doc {m.doc_index} span [{m.start},{m.end}) -> {m.entity_key}")

# one coreference chain in document 1: "Sweden" ... "it"
chains = [[], [[(0, 1), (2, 3)]], []]

graph = build_graph(sample, chains)
print("\n== graph ==")
for idx, node in enumerate(graph.nodes):
    print(f"  node {idx}: {node.entity_key!r} doc {node.doc_index} "
          f"span [{node.start},{node.end}) {node.source.value}")
for rel, pairs in graph.edges.items():
    print(f"  {rel.value:<11} {sorted(pairs)}")

rep = graph_report(graph)
print(f"\nnodes={rep.node_count} counts={rep.edge_counts} complete={rep.complete}")
print("the union of the four relations is the complete graph, so every node")
print("can reach every other within one hop of some relation")
