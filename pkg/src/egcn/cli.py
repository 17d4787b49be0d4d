"""Command-line surface: stats, build-graphs, mask, train, eval, ensemble, ablate.

Exit codes: 0 success, 1 usage error, 2 data validation failure, 3 numerical
failure. All randomness flows from --seed; reruns with the same config and
seed reproduce reports byte-for-byte (timestamps are never embedded).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ablate import VARIANTS, run_ablation
from .data import (
    DatasetError,
    dataset_stats,
    mask_dataset,
    parse_dataset,
    split_check,
    write_dataset,
)
from .encode import (
    CoverageError,
    EmbeddingFormatError,
    EmbeddingStore,
    hash_embed,
    load_embeddings,
    load_static_vectors,
    static_embed,
)
from .graph import build_graph, graph_report, load_chains
from .model import (
    CheckpointError,
    ModelConfig,
    load_checkpoint,
    prepare_samples,
    save_checkpoint,
)
from .tensor import NumericalError
from .train import (
    TrainConfig,
    correlation_from_eval,
    ensemble_evaluate,
    evaluate,
    train,
)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


@dataclass
class RunConfig:
    """Everything a command needs, resolved from flags and the environment."""

    dataset: str | None = None
    dev: str | None = None
    embeddings: str | None = None
    chains: str | None = None
    out: str | None = None
    masked: bool = False
    layers: int = 3
    dropout: float = 0.0
    seed: int = 0
    runs: int = 3
    batch: int = 32
    epochs: int = 20
    patience: int = 3
    lr: float = 1e-4
    threads: int = field(default_factory=lambda: _default_threads())
    proj_dim: int = 256
    lstm_sizes: tuple[int, ...] = (256, 128)
    fuse_sizes: tuple[int, ...] = (1024, 512)
    score_sizes: tuple[int, ...] = (256, 128)
    score_head: str = "mlp"
    span_pool: str = "mean"
    ablate: list[str] = field(default_factory=list)
    grid: str | None = None

    def model_config(self, raw_dim: int) -> ModelConfig:
        return ModelConfig(
            raw_dim=raw_dim,
            proj_dim=self.proj_dim,
            lstm_sizes=self.lstm_sizes,
            fuse_sizes=self.fuse_sizes,
            layers=self.layers,
            dropout=self.dropout,
            score_head=self.score_head,
            score_sizes=self.score_sizes,
            span_pool=self.span_pool,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch,
            epochs=self.epochs,
            patience=self.patience,
            seed=self.seed,
            threads=self.threads,
        )


def _default_threads() -> int:
    env = os.environ.get("EGCN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got '{text}'") from None


def _add_common(p: _Parser, *, dev: bool = False, model: bool = False):
    p.add_argument("--dataset", required=True)
    if dev:
        p.add_argument("--dev", required=True)
    p.add_argument("--chains")
    p.add_argument("--masked", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out")
    if model:
        p.add_argument("--embeddings", required=True,
                       help="embedding file, or hash:DIM[:SEED], or static:PATH")
        p.add_argument("--layers", type=int, default=3)
        p.add_argument("--dropout", type=float, default=0.0)
        p.add_argument("--batch", type=int, default=32)
        p.add_argument("--epochs", type=int, default=20)
        p.add_argument("--patience", type=int, default=3)
        p.add_argument("--lr", type=float, default=1e-4)
        p.add_argument("--proj-dim", type=int, default=256)
        p.add_argument("--lstm-sizes", type=_dims, default=(256, 128))
        p.add_argument("--fuse-sizes", type=_dims, default=(1024, 512))
        p.add_argument("--score-sizes", type=_dims, default=(256, 128))
        p.add_argument("--score-head", choices=("mlp", "affine"), default="mlp")
        p.add_argument("--pool", choices=("mean", "first", "last"), default="mean")


def _config_from(args) -> RunConfig:
    cfg = RunConfig()
    for name in vars(args):
        if name in ("command", "func", "checkpoint", "checkpoints", "grid_file"):
            continue
        value = getattr(args, name)
        if value is None:
            continue
        if name == "pool":
            cfg.span_pool = value
        elif hasattr(cfg, name):
            setattr(cfg, name, value)
    return cfg


def _load_samples(path: str):
    report = parse_dataset(path)
    for sid, reason in report.rejected:
        print(json.dumps({"rejected": sid, "reason": reason}), file=sys.stderr)
    if not report.samples:
        raise DatasetError(f"{path}: no valid samples")
    return report.samples


def _resolve_store(spec: str, samples) -> EmbeddingStore:
    if spec.startswith("hash:"):
        parts = spec.split(":")
        dim = int(parts[1])
        seed = int(parts[2]) if len(parts) > 2 else 0
        return hash_embed(samples, dim, seed)
    if spec.startswith("static:"):
        table, dim = load_static_vectors(spec[len("static:"):])
        return static_embed(samples, table, dim)
    return load_embeddings(spec)


def _chains_for(cfg: RunConfig):
    if cfg.masked:
        if cfg.chains:
            print(json.dumps({"warning": "masked mode ignores coreference chains"}),
                  file=sys.stderr)
        return None
    return load_chains(cfg.chains) if cfg.chains else None


def _prepare(cfg: RunConfig, samples, store):
    chains = _chains_for(cfg)
    preps, skipped = prepare_samples(samples, store, chains, span_pool=cfg.span_pool)
    for sid, reason in skipped:
        print(json.dumps({"skipped": sid, "reason": reason}), file=sys.stderr)
    if not preps:
        raise DatasetError("no sample produced a non-empty entity graph")
    return preps


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise UsageError("--out is required for this command")
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_stats(args) -> int:
    cfg = _config_from(args)
    samples = _load_samples(cfg.dataset)
    stats = dataset_stats(samples)
    csv = stats.to_csv()
    print(csv, end="")
    print(json.dumps({"samples": stats.sample_count}))
    if cfg.dev:
        other = _load_samples(cfg.dev)
        report = split_check(samples, other)
        print(json.dumps({
            "train_size": report.train_size,
            "dev_size": report.dev_size,
            "disjoint": report.disjoint,
            "overlap": report.overlap[:10],
        }))
    if cfg.out:
        Path(cfg.out).write_text(csv)
    return 0


def cmd_build_graphs(args) -> int:
    cfg = _config_from(args)
    samples = _load_samples(cfg.dataset)
    chains = _chains_for(cfg)
    out = _out_dir(cfg)
    dump_path = out / "graphs.jsonl"
    report_path = out / "graph_report.csv"
    skipped = 0
    with open(dump_path, "w", encoding="utf-8") as dump, open(
        report_path, "w", encoding="utf-8"
    ) as rep:
        rep.write("id,nodes,doc_based,match,coref,complement,complete\n")
        for sample in samples:
            per_sample = chains.get(sample.id) if chains else None
            try:
                graph = build_graph(sample, per_sample)
            except Exception as exc:
                skipped += 1
                print(json.dumps({"skipped": sample.id, "reason": str(exc)}),
                      file=sys.stderr)
                continue
            dump.write(json.dumps(graph.to_obj(sample.id), sort_keys=True) + "\n")
            r = graph_report(graph)
            rep.write(
                f"{sample.id},{r.node_count},{r.edge_counts['DOC_BASED']},"
                f"{r.edge_counts['MATCH']},{r.edge_counts['COREF']},"
                f"{r.edge_counts['COMPLEMENT']},{int(r.complete)}\n"
            )
    print(json.dumps({"graphs": len(samples) - skipped, "skipped": skipped}))
    return 0


def cmd_mask(args) -> int:
    cfg = _config_from(args)
    samples = _load_samples(cfg.dataset)
    out = _out_dir(cfg)
    masked, tables = mask_dataset(samples, cfg.seed)
    write_dataset(masked, str(out / "masked.json"))
    with open(out / "mask_table.json", "w", encoding="utf-8") as fh:
        json.dump(tables, fh, ensure_ascii=False, indent=1, sort_keys=True)
    print(json.dumps({"masked": len(masked)}))
    return 0


def _emit_eval(out: Path, report, corr) -> None:
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "relations.csv").write_text(report.rows_csv())
    if corr is not None:
        (out / "buckets.csv").write_text(corr.buckets_csv())
        payload = {
            "pearson_candidates": corr.pearson_candidates,
            "pearson_nodes": corr.pearson_nodes,
        }
        (out / "correlation.json").write_text(json.dumps(payload, sort_keys=True) + "\n")


def cmd_train(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(cfg)
    train_samples = _load_samples(cfg.dataset)
    dev_samples = _load_samples(cfg.dev)
    store = _resolve_store(cfg.embeddings, train_samples + dev_samples)
    train_preps = _prepare(cfg, train_samples, store)
    dev_preps = _prepare(cfg, dev_samples, store)
    model_cfg = cfg.model_config(store.dim)
    history_path = out / "history.jsonl"
    with open(history_path, "w", encoding="utf-8") as hist:

        def progress(entry):
            line = json.dumps(entry, sort_keys=True)
            print(line, flush=True)
            hist.write(line + "\n")

        result = train(train_preps, dev_preps, model_cfg, cfg.train_config(),
                       progress=progress)
    save_checkpoint(result.params, str(out / "checkpoint.ckpt"), extra={
        "master_seed": cfg.seed,
        "best_epoch": result.best_epoch,
        "dev_accuracy": result.dev_accuracy,
    })
    report = evaluate(result.params, dev_preps, threads=cfg.threads)
    _emit_eval(out, report, None)
    print(json.dumps({"dev_accuracy": result.dev_accuracy,
                      "best_epoch": result.best_epoch}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(cfg)
    params, extra = load_checkpoint(args.checkpoint)
    samples = _load_samples(cfg.dataset)
    store = _resolve_store(cfg.embeddings, samples)
    preps = _prepare(cfg, samples, store)
    report = evaluate(params, preps, threads=cfg.threads)
    try:
        corr = correlation_from_eval(params, preps, threads=cfg.threads)
    except ValueError:
        corr = None
    _emit_eval(out, report, corr)
    print(report.to_json())
    return 0


def cmd_ensemble(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(cfg)
    models = []
    for path in args.checkpoints:
        params, _ = load_checkpoint(path)
        models.append(params)
    samples = _load_samples(cfg.dataset)
    store = _resolve_store(cfg.embeddings, samples)
    preps = _prepare(cfg, samples, store)
    report = ensemble_evaluate(models, preps, threads=cfg.threads)
    _emit_eval(out, report, None)
    print(report.to_json())
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(cfg)
    if cfg.grid:
        grid = json.loads(Path(cfg.grid).read_text())
        for key, value in grid.items():
            if key == "variants":
                cfg.ablate = list(value)
            elif key in ("lstm_sizes", "fuse_sizes", "score_sizes"):
                setattr(cfg, key, tuple(value))
            elif hasattr(cfg, key):
                setattr(cfg, key, value)
            else:
                raise UsageError(f"unknown grid key '{key}'")
    variants = tuple(cfg.ablate) if cfg.ablate else VARIANTS
    for name in variants:
        if name not in VARIANTS:
            raise UsageError(
                f"unknown ablation variant '{name}' (choose from {', '.join(VARIANTS)})"
            )
    train_samples = _load_samples(cfg.dataset)
    dev_samples = _load_samples(cfg.dev)
    if not cfg.embeddings or not cfg.embeddings.startswith("hash:"):
        raise UsageError("ablation runs on hash embeddings; pass --embeddings hash:DIM[:SEED]")
    parts = cfg.embeddings.split(":")
    raw_dim = int(parts[1])
    embed_seed = int(parts[2]) if len(parts) > 2 else 0
    result = run_ablation(
        train_samples,
        dev_samples,
        cfg.model_config(raw_dim),
        cfg.train_config(),
        runs=cfg.runs,
        masked=cfg.masked,
        variants=variants,
        embed_seed=embed_seed,
        progress=lambda entry: print(json.dumps(entry, sort_keys=True), flush=True),
    )
    (out / "ablation.csv").write_text(result.to_csv())
    print(result.to_csv(), end="")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="egcn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset summary statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--dev", help="second split for a disjointness check")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("build-graphs", help="materialize entity graphs")
    _add_common(p)
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("mask", help="mask a dataset with consistent placeholders")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("train", help="train a model")
    _add_common(p, dev=True, model=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p, model=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble", help="product-rule ensemble of checkpoints")
    _add_common(p, model=True)
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("ablate", help="run the ablation grid")
    _add_common(p, dev=True, model=True)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--ablate", nargs="*", default=[], metavar="VARIANT",
                   help=f"subset of: {', '.join(VARIANTS)}")
    p.add_argument("--grid", dest="grid", help="flat JSON file of config overrides")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DatasetError, CheckpointError, EmbeddingFormatError, CoverageError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
