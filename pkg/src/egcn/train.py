"""Likelihood training, evaluation reports, ensembling and size/accuracy analysis."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, ModelParams, PreparedSample, Prediction, forward_sample, nll_loss
from .tensor import Adam, gradients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 32
    epochs: int = 20
    patience: int = 3
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epoch count must be non-negative")


def _map_samples(fn, items, threads: int):
    """Apply fn over items, optionally on a thread pool; results keep order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def predict(params: ModelParams, preps: list[PreparedSample], threads: int = 1) -> list[Prediction]:
    return _map_samples(
        lambda prep: forward_sample(params, prep).prediction, preps, threads
    )


@dataclass(frozen=True)
class RelationRow:
    relation: str
    accuracy: float
    p_at_2: float
    p_at_5: float
    avg_candidates: float
    std_candidates: float
    support: int


@dataclass
class EvalReport:
    accuracy: float
    p_at_2: float
    p_at_5: float
    sample_count: int
    fallback_count: int
    rows: list[RelationRow] = field(default_factory=list)

    def headline_rows(self, min_support: int = 50, min_candidates: float = 5.0) -> list[RelationRow]:
        return [r for r in self.rows
                if r.support >= min_support and r.avg_candidates >= min_candidates]

    def rows_csv(self) -> str:
        lines = ["relation,accuracy,p_at_2,p_at_5,avg_candidates,std_candidates,support"]
        for r in self.rows:
            lines.append(
                f"{r.relation},{r.accuracy:.6f},{r.p_at_2:.6f},{r.p_at_5:.6f},"
                f"{r.avg_candidates:.3f},{r.std_candidates:.3f},{r.support}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {
                "accuracy": self.accuracy,
                "p_at_2": self.p_at_2,
                "p_at_5": self.p_at_5,
                "sample_count": self.sample_count,
                "fallback_count": self.fallback_count,
            },
            sort_keys=True,
        )


def gold_rank(prediction: Prediction, gold: str) -> int:
    """1-based rank of the gold candidate; probability ties break by candidate index."""
    gold_idx = prediction.candidates.index(gold)
    order = sorted(range(len(prediction.candidates)),
                   key=lambda i: (-prediction.probabilities[i], i))
    return order.index(gold_idx) + 1


def score_predictions(pairs: list[tuple[Prediction, PreparedSample]]) -> EvalReport:
    """Aggregate accuracy and precision-at-K, plus per-relation rows."""
    by_relation: dict[str, list[tuple[bool, bool, bool, int]]] = {}
    correct = p2 = p5 = fallback = 0
    for pred, prep in pairs:
        gold = prep.sample.answer
        if gold is None:
            raise ValueError(f"sample '{prep.sample.id}' has no gold answer")
        rank = gold_rank(pred, gold)
        hit = pred.predicted == gold
        correct += hit
        p2 += rank <= 2
        p5 += rank <= 5
        fallback += pred.fallback
        by_relation.setdefault(prep.sample.query.relation, []).append(
            (hit, rank <= 2, rank <= 5, len(prep.sample.candidates))
        )
    n = len(pairs)
    rows = []
    for relation in sorted(by_relation):
        entries = by_relation[relation]
        cands = np.array([e[3] for e in entries], dtype=np.float64)
        rows.append(RelationRow(
            relation=relation,
            accuracy=float(np.mean([e[0] for e in entries])),
            p_at_2=float(np.mean([e[1] for e in entries])),
            p_at_5=float(np.mean([e[2] for e in entries])),
            avg_candidates=float(cands.mean()),
            std_candidates=float(cands.std()),
            support=len(entries),
        ))
    return EvalReport(
        accuracy=correct / n if n else 0.0,
        p_at_2=p2 / n if n else 0.0,
        p_at_5=p5 / n if n else 0.0,
        sample_count=n,
        fallback_count=fallback,
        rows=rows,
    )


def evaluate(params: ModelParams, preps: list[PreparedSample], threads: int = 1) -> EvalReport:
    preds = predict(params, preps, threads=threads)
    return score_predictions(list(zip(preds, preps)))


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict]
    best_epoch: int
    dev_accuracy: float
    floored_count: int
    skipped_count: int


def _sample_gradients(params: ModelParams, prep: PreparedSample,
                      rng: np.random.Generator, named) -> tuple[dict, float, bool] | None:
    result = forward_sample(params, prep, training=True, rng=rng)
    if not result.scored:
        return None
    loss, floored = nll_loss(result, prep.sample.answer)
    grads = gradients(loss, named)
    return grads, float(loss.data), floored


def train(
    train_preps: list[PreparedSample],
    dev_preps: list[PreparedSample],
    config: ModelConfig,
    train_config: TrainConfig,
    progress=None,
) -> TrainResult:
    """Adam over mean per-batch gradients, early-stopped on dev accuracy.

    The returned parameters are the best-epoch snapshot rounded to checkpoint
    (f32) precision, with the dev accuracy re-measured at that precision.
    """
    if not train_preps:
        raise ValueError("empty training set")
    root = np.random.SeedSequence(train_config.seed)
    init_seq, order_seq = root.spawn(2)
    params = ModelParams.init(config, np.random.default_rng(init_seq))
    named = params.named()
    adam = Adam(named, lr=train_config.lr,
                beta1=train_config.beta1, beta2=train_config.beta2)
    order_rng = np.random.default_rng(order_seq)

    history: list[dict] = []
    best_values = params.snapshot()
    best_acc = -1.0
    best_epoch = 0
    stale = 0
    floored_total = 0
    skipped_total = 0

    for epoch in range(1, train_config.epochs + 1):
        order = order_rng.permutation(len(train_preps))
        epoch_loss = 0.0
        seen = 0
        for start in range(0, len(order), train_config.batch_size):
            batch = order[start : start + train_config.batch_size]

            def one(idx: int):
                rng = np.random.default_rng([train_config.seed, epoch, int(idx)])
                return _sample_gradients(params, train_preps[int(idx)], rng, named)

            results = _map_samples(one, list(batch), train_config.threads)
            total: dict[str, np.ndarray] = {}
            used = 0
            for res in results:  # fixed order keeps the sum deterministic
                if res is None:
                    skipped_total += 1
                    continue
                grads, loss_val, floored = res
                floored_total += floored
                epoch_loss += loss_val
                seen += 1
                used += 1
                for name, g in grads.items():
                    if name in total:
                        total[name] = total[name] + g
                    else:
                        total[name] = g
            if used == 0:
                continue
            adam.step({name: g / used for name, g in total.items()})
        dev_acc = evaluate(params, dev_preps, threads=train_config.threads).accuracy if dev_preps else 0.0
        entry = {
            "epoch": epoch,
            "loss": epoch_loss / max(seen, 1),
            "dev_accuracy": dev_acc,
        }
        history.append(entry)
        if progress is not None:
            progress(entry)
        if dev_acc > best_acc:
            best_acc = dev_acc
            best_epoch = epoch
            best_values = params.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= train_config.patience:
                break

    params.restore(best_values)
    params.quantize_f32()
    final_acc = evaluate(params, dev_preps, threads=train_config.threads).accuracy if dev_preps else 0.0
    return TrainResult(
        params=params,
        history=history,
        best_epoch=best_epoch,
        dev_accuracy=final_acc,
        floored_count=floored_total,
        skipped_count=skipped_total,
    )


def ensemble_argmax(prob_table: np.ndarray) -> int:
    """Argmax of the per-candidate product of member probabilities, computed
    in log space; ties and all-zero columns resolve to the lowest index."""
    table = np.asarray(prob_table, dtype=np.float64)
    if table.ndim != 2:
        raise ValueError("probability table must be (models, candidates)")
    with np.errstate(divide="ignore"):
        logs = np.where(table > 0.0, np.log(np.where(table > 0.0, table, 1.0)), -np.inf)
    return int(np.argmax(logs.sum(axis=0)))


def combine_predictions(preds: list[Prediction]) -> Prediction:
    """Product-of-probabilities combination of per-model predictions."""
    if not preds:
        raise ValueError("ensemble needs at least one model")
    first = preds[0].candidates
    for p in preds[1:]:
        if p.candidates != first:
            raise ValueError("ensemble members disagree on the candidate list")
    table = np.array([p.probabilities for p in preds])
    idx = ensemble_argmax(table)
    with np.errstate(divide="ignore"):
        logs = np.where(table > 0.0, np.log(np.where(table > 0.0, table, 1.0)), -np.inf)
    totals = logs.sum(axis=0)
    finite = np.isfinite(totals)
    probs = np.zeros(len(first))
    if finite.any():
        shifted = np.exp(totals[finite] - totals[finite].max())
        probs[finite] = shifted / shifted.sum()
    return Prediction(
        candidates=list(first),
        probabilities=probs.tolist(),
        best_nodes=preds[0].best_nodes,
        predicted_index=idx,
        fallback=all(p.fallback for p in preds),
    )


def ensemble_predict(models: list[ModelParams], prep: PreparedSample) -> Prediction:
    if not models:
        raise ValueError("ensemble needs at least one model")
    return combine_predictions([forward_sample(m, prep).prediction for m in models])


def ensemble_evaluate(models: list[ModelParams], preps: list[PreparedSample],
                      threads: int = 1) -> EvalReport:
    preds = _map_samples(lambda prep: ensemble_predict(models, prep), preps, threads)
    return score_predictions(list(zip(preds, preps)))


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Pearson's r, or None when undefined (fewer than two points or zero variance)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.std(x) == 0.0 or np.std(y) == 0.0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


@dataclass(frozen=True)
class Bucket:
    size: float
    count: int
    accuracy: float


@dataclass
class CorrelationReport:
    pearson_candidates: float | None
    pearson_nodes: float | None
    candidate_buckets: list[Bucket]
    node_buckets: list[Bucket]

    def buckets_csv(self) -> str:
        lines = ["dimension,size,count,accuracy"]
        for b in self.candidate_buckets:
            lines.append(f"candidates,{b.size:g},{b.count},{b.accuracy:.6f}")
        for b in self.node_buckets:
            lines.append(f"nodes,{b.size:g},{b.count},{b.accuracy:.6f}")
        return "\n".join(lines) + "\n"


def correlation_analysis(
    outcomes: list[tuple[int, int, bool]], min_bucket: int = 10
) -> CorrelationReport:
    """Accuracy versus problem size.

    outcomes: per sample (candidate count, node count, correct). Candidate
    buckets group by exact count; node buckets group by decile. Buckets with
    fewer than min_bucket samples are dropped before computing Pearson's r
    between bucket size and bucket accuracy.
    """
    if len({c for c, _, _ in outcomes}) < 2 and len({n for _, n, _ in outcomes}) < 2:
        raise ValueError("need at least two distinct sizes for a correlation")

    def summarize(groups: dict[float, list[bool]]) -> list[Bucket]:
        out = [
            Bucket(size=size, count=len(flags), accuracy=float(np.mean(flags)))
            for size, flags in sorted(groups.items())
        ]
        return [b for b in out if b.count >= min_bucket]

    cand_groups: dict[float, list[bool]] = {}
    for c, _, ok in outcomes:
        cand_groups.setdefault(float(c), []).append(ok)
    cand_buckets = summarize(cand_groups)

    node_counts = np.array([n for _, n, _ in outcomes], dtype=np.float64)
    edges = np.unique(np.quantile(node_counts, np.linspace(0, 1, 11)))
    node_groups: dict[float, list[bool]] = {}
    assignments = np.clip(np.searchsorted(edges, node_counts, side="right") - 1,
                          0, len(edges) - 2 if len(edges) > 1 else 0)
    bucket_members: dict[int, list[tuple[int, bool]]] = {}
    for (_, n, ok), b in zip(outcomes, assignments):
        bucket_members.setdefault(int(b), []).append((n, ok))
    for members in bucket_members.values():
        mean_size = float(np.mean([n for n, _ in members]))
        node_groups.setdefault(mean_size, []).extend(ok for _, ok in members)
    node_buckets = summarize(node_groups)

    return CorrelationReport(
        pearson_candidates=pearson(
            np.array([b.size for b in cand_buckets]),
            np.array([b.accuracy for b in cand_buckets]),
        ),
        pearson_nodes=pearson(
            np.array([b.size for b in node_buckets]),
            np.array([b.accuracy for b in node_buckets]),
        ),
        candidate_buckets=cand_buckets,
        node_buckets=node_buckets,
    )


def correlation_from_eval(params: ModelParams, preps: list[PreparedSample],
                          threads: int = 1, min_bucket: int = 10) -> CorrelationReport:
    preds = predict(params, preps, threads=threads)
    outcomes = [
        (len(prep.sample.candidates), prep.graph.n, pred.predicted == prep.sample.answer)
        for pred, prep in zip(preds, preps)
    ]
    return correlation_analysis(outcomes, min_bucket=min_bucket)
