import json
from pathlib import Path

import numpy as np
import pytest

from egcn.cli import main
from egcn.data import parse_dataset, unmask_sample
from egcn.encode import hash_embed, save_embeddings
from egcn.model import load_checkpoint
from egcn.synthetic import generate_two_hop, TaskSpec

FIXTURES = Path(__file__).parent / "fixtures"
MINI = str(FIXTURES / "mini_dataset.json")


def write_synth(tmp_path, count=8, name="synth.json", seed=5):
    samples = generate_two_hop(count, seed=seed, spec=TaskSpec(entity_pool=20, subject_pool=4))
    payload = [s.to_obj() for s in samples]
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path, samples


def test_stats_command(tmp_path, capsys):
    out = tmp_path / "stats.csv"
    code = main(["stats", "--dataset", MINI, "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "field,min,max,mean,median"
    assert lines[1].startswith("candidates,2,4,2.7,3")
    printed = capsys.readouterr().out
    assert "candidates" in printed


def test_stats_split_check(tmp_path, capsys):
    code = main(["stats", "--dataset", MINI, "--dev", MINI])
    assert code == 0
    stdout = capsys.readouterr().out
    last = json.loads(stdout.strip().split("\n")[-1])
    assert last["disjoint"] is False
    assert last["train_size"] == 20


def test_stats_missing_file_exit_code():
    assert main(["stats", "--dataset", "/nonexistent/xx.json"]) == 2


def test_usage_error_exit_code(capsys):
    assert main(["train", "--dataset", MINI]) == 1  # missing required flags
    assert main(["nonsense-command"]) == 1


def test_build_graphs_outputs(tmp_path):
    out = tmp_path / "graphs"
    code = main(["build-graphs", "--dataset", MINI, "--out", str(out)])
    assert code == 0
    dump_lines = (out / "graphs.jsonl").read_text().strip().split("\n")
    report_lines = (out / "graph_report.csv").read_text().strip().split("\n")
    assert report_lines[0].startswith("id,nodes,")
    assert len(dump_lines) >= 18  # a couple of fixtures may skip (no mentions)
    first = json.loads(dump_lines[0])
    assert first["id"] == "mini_0000"
    assert set(first["edges"]) == {"DOC_BASED", "MATCH", "COREF", "COMPLEMENT"}


def test_build_graphs_byte_stable(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["build-graphs", "--dataset", MINI, "--out", str(out_a)]) == 0
    assert main(["build-graphs", "--dataset", MINI, "--out", str(out_b)]) == 0
    assert (out_a / "graphs.jsonl").read_bytes() == (out_b / "graphs.jsonl").read_bytes()


def test_build_graphs_golden_dump():
    import subprocess, sys, tempfile

    golden = FIXTURES / "mini_graphs.jsonl"
    with tempfile.TemporaryDirectory() as tmp:
        assert main(["build-graphs", "--dataset", MINI, "--out", tmp]) == 0
        produced = (Path(tmp) / "graphs.jsonl").read_bytes()
    assert produced == golden.read_bytes()


def test_masked_build_has_zero_coref_and_ignores_chains(tmp_path, capsys):
    masked_dir = tmp_path / "masked"
    assert main(["mask", "--dataset", MINI, "--seed", "3", "--out", str(masked_dir)]) == 0
    chains_path = tmp_path / "chains.json"
    chains_path.write_text(json.dumps({"mini_0000": [[[[0, 1]]]]}))
    out = tmp_path / "graphs"
    code = main([
        "build-graphs", "--dataset", str(masked_dir / "masked.json"),
        "--chains", str(chains_path), "--masked", "--out", str(out),
    ])
    assert code == 0
    for line in (out / "graphs.jsonl").read_text().strip().split("\n"):
        obj = json.loads(line)
        assert obj["edges"]["COREF"] == []
    err = capsys.readouterr().err
    assert "masked mode ignores" in err


def test_mask_round_trip_via_cli(tmp_path):
    out = tmp_path / "masked"
    assert main(["mask", "--dataset", MINI, "--seed", "11", "--out", str(out)]) == 0
    masked = parse_dataset(str(out / "masked.json"))
    tables = json.loads((out / "mask_table.json").read_text())
    originals = parse_dataset(MINI).samples
    for m, orig in zip(masked.samples, originals):
        assert unmask_sample(m, tables[m.id]).to_obj() == orig.to_obj()


def test_train_epochs_zero_emits_untrained_checkpoint(tmp_path):
    data, _ = write_synth(tmp_path, count=6)
    out = tmp_path / "run"
    code = main([
        "train", "--dataset", str(data), "--dev", str(data),
        "--embeddings", "hash:24:3", "--epochs", "0", "--seed", "1",
        "--proj-dim", "12", "--lstm-sizes", "8,8", "--fuse-sizes", "24,16",
        "--score-sizes", "16,8", "--layers", "2", "--threads", "1",
        "--out", str(out),
    ])
    assert code == 0
    params, extra = load_checkpoint(str(out / "checkpoint.ckpt"))
    assert extra["master_seed"] == 1
    assert params.config.layers == 2
    assert (out / "report.json").exists()


def test_train_eval_round_trip_reproduces_accuracy(tmp_path, capsys):
    data, _ = write_synth(tmp_path, count=10)
    out = tmp_path / "run"
    code = main([
        "train", "--dataset", str(data), "--dev", str(data),
        "--embeddings", "hash:24:3", "--epochs", "1", "--seed", "2",
        "--proj-dim", "12", "--lstm-sizes", "8,8", "--fuse-sizes", "24,16",
        "--score-sizes", "16,8", "--threads", "1", "--out", str(out),
    ])
    assert code == 0
    trained = json.loads((out / "report.json").read_text())
    # history line per epoch was printed as JSON
    printed = [json.loads(line) for line in capsys.readouterr().out.strip().split("\n")]
    assert any("epoch" in line for line in printed)

    eval_out = tmp_path / "eval"
    code = main([
        "eval", "--checkpoint", str(out / "checkpoint.ckpt"),
        "--dataset", str(data), "--embeddings", "hash:24:3",
        "--threads", "1", "--out", str(eval_out),
    ])
    assert code == 0
    evaluated = json.loads((eval_out / "report.json").read_text())
    assert evaluated["accuracy"] == trained["accuracy"]


def test_ensemble_command(tmp_path):
    data, _ = write_synth(tmp_path, count=8)
    runs = []
    for seed in (1, 2):
        out = tmp_path / f"run{seed}"
        code = main([
            "train", "--dataset", str(data), "--dev", str(data),
            "--embeddings", "hash:24:3", "--epochs", "1", "--seed", str(seed),
            "--proj-dim", "12", "--lstm-sizes", "8,8", "--fuse-sizes", "24,16",
            "--score-sizes", "16,8", "--threads", "1", "--out", str(out),
        ])
        assert code == 0
        runs.append(str(out / "checkpoint.ckpt"))
    out = tmp_path / "ens"
    code = main([
        "ensemble", "--checkpoints", *runs, "--dataset", str(data),
        "--embeddings", "hash:24:3", "--threads", "1", "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert 0.0 <= report["accuracy"] <= 1.0


def test_ablate_rejects_unknown_variant(tmp_path):
    data, _ = write_synth(tmp_path, count=6)
    code = main([
        "ablate", "--dataset", str(data), "--dev", str(data),
        "--embeddings", "hash:24:3", "--ablate", "definitely_not_a_variant",
        "--out", str(tmp_path / "ab"),
    ])
    assert code == 1


def test_ablate_small_grid(tmp_path):
    data, _ = write_synth(tmp_path, count=8)
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({
        "runs": 2, "epochs": 1, "lr": 0.002, "patience": 1,
        "proj_dim": 12, "lstm_sizes": [8, 8], "fuse_sizes": [24, 16],
        "score_sizes": [16, 8],
        "variants": ["full", "no_rgcn", "full_ensemble"],
    }))
    out = tmp_path / "ab"
    code = main([
        "ablate", "--dataset", str(data), "--dev", str(data),
        "--embeddings", "hash:24:3", "--grid", str(grid),
        "--threads", "1", "--out", str(out),
    ])
    assert code == 0
    lines = (out / "ablation.csv").read_text().strip().split("\n")
    assert lines[0] == "variant,mean_accuracy,std_accuracy,runs,note"
    names = [line.split(",")[0] for line in lines[1:]]
    assert names == ["full_ensemble", "full", "no_rgcn"]


def test_numerical_failure_exit_code(tmp_path):
    import warnings

    data, _ = write_synth(tmp_path, count=6)
    # an absurd learning rate overflows the very first optimizer step
    with warnings.catch_warnings(), np.errstate(over="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        code = main([
            "train", "--dataset", str(data), "--dev", str(data),
            "--embeddings", "hash:24:3", "--epochs", "1", "--lr", "1e308",
            "--proj-dim", "12", "--lstm-sizes", "8,8", "--fuse-sizes", "24,16",
            "--score-sizes", "16,8", "--threads", "1", "--out", str(tmp_path / "run"),
        ])
    assert code == 3


def test_threads_env_var(monkeypatch):
    from egcn.cli import _default_threads

    monkeypatch.setenv("EGCN_THREADS", "3")
    assert _default_threads() == 3
    monkeypatch.setenv("EGCN_THREADS", "not-a-number")
    assert _default_threads() >= 1
    monkeypatch.delenv("EGCN_THREADS")
    assert _default_threads() >= 1


def test_embeddings_file_path_loading(tmp_path):
    data, samples = write_synth(tmp_path, count=6)
    store = hash_embed(samples, dim=24, seed=3)
    emb = tmp_path / "emb.bin"
    save_embeddings(store, str(emb))
    out = tmp_path / "run"
    code = main([
        "train", "--dataset", str(data), "--dev", str(data),
        "--embeddings", str(emb), "--epochs", "0", "--seed", "1",
        "--proj-dim", "12", "--lstm-sizes", "8,8", "--fuse-sizes", "24,16",
        "--score-sizes", "16,8", "--threads", "1", "--out", str(out),
    ])
    assert code == 0
