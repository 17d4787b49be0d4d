"""The operator pipeline end to end, through the CLI entry point:
generate a tiny dataset, mask it, inspect stats, build graphs, train for a
moment, evaluate, and run a two-variant ablation.

Run:  python3 demos/07_cli_pipeline.py
"""

import json
import tempfile
from pathlib import Path

from egcn.cli import main
from egcn.synthetic import TaskSpec, generate_two_hop

work = Path(tempfile.mkdtemp(prefix="egcn-demo-"))
print(f"working in {work}\n")

samples = generate_two_hop(40, seed=3, spec=TaskSpec(entity_pool=20, subject_pool=4))
dataset = work / "tiny.json"
dataset.write_text(json.dumps([s.to_obj() for s in samples]))

print("== stats ==")
main(["stats", "--dataset", str(dataset)])

print("\n== mask ==")
main(["mask", "--dataset", str(dataset), "--seed", "5", "--out", str(work / "masked")])
masked_line = json.loads((work / "masked" / "masked.json").read_text())[0]["supports"][0]
print(f"a masked support: {masked_line!r}")

print("\n== build-graphs ==")
main(["build-graphs", "--dataset", str(dataset), "--out", str(work / "graphs")])
print((work / "graphs" / "graph_report.csv").read_text().splitlines()[0])
print((work / "graphs" / "graph_report.csv").read_text().splitlines()[1])

print("\n== train (two quick epochs, small dims) ==")
main([
    "train", "--dataset", str(dataset), "--dev", str(dataset),
    "--embeddings", "hash:32:7", "--epochs", "2", "--batch", "8", "--lr", "0.002",
    "--proj-dim", "16", "--lstm-sizes", "16,16", "--fuse-sizes", "48,32",
    "--score-sizes", "32,16", "--threads", "1", "--out", str(work / "run"),
])

print("\n== eval the checkpoint ==")
main([
    "eval", "--checkpoint", str(work / "run" / "checkpoint.ckpt"),
    "--dataset", str(dataset), "--embeddings", "hash:32:7",
    "--threads", "1", "--out", str(work / "eval"),
])

print("\n== a two-variant ablation ==")
grid = work / "grid.json"
grid.write_text(json.dumps({
    "runs": 2, "epochs": 1, "batch": 8, "lr": 0.002,
    "proj_dim": 16, "lstm_sizes": [16, 16], "fuse_sizes": [48, 32],
    "score_sizes": [32, 16],
    "variants": ["full", "no_rgcn"],
}))
main([
    "ablate", "--dataset", str(dataset), "--dev", str(dataset),
    "--embeddings", "hash:32:7", "--grid", str(grid),
    "--threads", "1", "--out", str(work / "ablation"),
])
