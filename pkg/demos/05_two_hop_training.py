"""Training on the synthetic two-hop task: the model must chain
subject -> bridge (one document) and bridge -> answer (another document).

This is a scaled-down run (a few minutes). The full-strength setting lives
in tests/test_acceptance.py.

Run:  python3 demos/05_two_hop_training.py
"""

import json
import time

from egcn.encode import hash_embed
from egcn.model import ModelConfig, prepare_samples
from egcn.synthetic import generate_two_hop
from egcn.train import TrainConfig, evaluate, train

print("generating 1000 train / 250 dev samples ...")
train_samples = generate_two_hop(1000, seed=1)
dev_samples = generate_two_hop(250, seed=2, id_prefix="dev")
print("sample layout:", json.dumps(train_samples[0].to_obj(), indent=1)[:400], "...")

store = hash_embed(train_samples + dev_samples, dim=64, seed=7)
train_preps, _ = prepare_samples(train_samples, store)
dev_preps, _ = prepare_samples(dev_samples, store)

config = ModelConfig(
    raw_dim=64, proj_dim=32, lstm_sizes=(32, 32), fuse_sizes=(96, 64),
    layers=3, score_head="mlp", score_sizes=(64, 32),
)

t0 = time.time()
result = train(
    train_preps, dev_preps, config,
    TrainConfig(lr=2e-3, batch_size=16, epochs=14, patience=14, seed=0),
    progress=lambda e: print(json.dumps(e), f"[{time.time()-t0:.0f}s]"),
)
print(f"\nbest epoch {result.best_epoch}, dev accuracy {result.dev_accuracy:.3f}")
print("accuracy typically jumps once the model discovers the 3-edge chain;")
print("before that it can only rule out the bridge entities (about 20%).")

report = evaluate(result.params, dev_preps)
print(f"final: accuracy={report.accuracy:.3f} P@2={report.p_at_2:.3f} P@5={report.p_at_5:.3f}")
