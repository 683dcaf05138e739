"""End-to-end tests for the command line front door.

Every command is driven through ``main(argv)`` on small CSV files; stdout is
parsed as JSON, failures must exit nonzero with a one-line JSON error on
stderr.
"""
import csv
import json
import logging
import os

import numpy as np
import pytest

from tabfuse.cli import main
from tabfuse.data import load_dataset
from tabfuse.embed import load_embeddings
from tabfuse.training import load_experiment_checkpoint

# Keep runs tiny: quantized numerics so auto-mode resolves to the full branch
# (continuous columns would look id-like on 80 rows).
FAST = ["--lr", "3e-3", "--batch", "32", "--max-epochs", "6",
        "--patience", "6", "--seed", "5"]


@pytest.fixture(autouse=True, scope="module")
def _quiet_logging():
    # basicConfig inside the CLI is a no-op once the root logger has a
    # handler; pin one so log output never lands on a stale capture stream.
    root = logging.getLogger()
    handler = logging.NullHandler()
    root.addHandler(handler)
    yield
    root.removeHandler(handler)


@pytest.fixture(scope="module")
def toy_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.csv"
    rng = np.random.default_rng(3)
    n = 80
    labels = (rng.uniform(size=n) < 0.5).astype(int)
    x0 = rng.integers(0, 12, size=n) + 6 * labels
    x1 = rng.integers(0, 9, size=n) - 3 * labels
    color = np.array(["red", "green", "blue"])[(labels + rng.integers(0, 2, size=n)) % 3]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x0", "x1", "color", "y"])
        for a, b, c, l in zip(x0, x1, color, labels):
            writer.writerow([a, b, c, "yes" if l else "no"])
    return path


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(out: str) -> dict:
    return json.loads(out.strip().splitlines()[-1])


# ---- schema / serialize / embed / graph-spec --------------------------------

def test_schema_prints_schema_json(toy_csv, capsys):
    code, out, err = run_cli(capsys, "schema", str(toy_csv), "--label", "y")
    assert code == 0 and err == ""
    schema = json.loads(out)
    kinds = {c["name"]: c["kind"] for c in schema["columns"]}
    assert kinds == {"x0": "numeric", "x1": "numeric", "color": "categorical"}
    assert schema["label_column"] == "y"
    assert schema["class_names"] == ["no", "yes"]


def test_schema_accepts_data_flag_or_positional(toy_csv, capsys):
    code1, out1, _ = run_cli(capsys, "schema", str(toy_csv), "--label", "y")
    code2, out2, _ = run_cli(capsys, "schema", "--data", str(toy_csv), "--label", "y")
    assert code1 == code2 == 0
    assert out1 == out2


def test_serialize_stdout_matches_corpus_file(toy_csv, tmp_path, capsys):
    code, out, _ = run_cli(capsys, "serialize", str(toy_csv), "--label", "y")
    assert code == 0
    printed = [json.loads(line) for line in out.strip().splitlines()]
    assert len(printed) == 80
    assert printed[0]["row_id"] == 0
    assert "The x0 is" in printed[0]["text"]

    corpus = tmp_path / "rows.jsonl"
    code, _, _ = run_cli(capsys, "serialize", str(toy_csv), "--label", "y",
                         "--out", str(corpus))
    assert code == 0
    written = [json.loads(line) for line in corpus.read_text().splitlines()]
    assert [(r["row_id"], r["text"]) for r in written] == \
        [(r["row_id"], r["text"]) for r in printed]


def test_embed_writes_canonical_tgem(toy_csv, tmp_path, capsys):
    out_path = tmp_path / "emb.tgem"
    code, out, _ = run_cli(capsys, "embed", str(toy_csv), "--label", "y",
                           "--out", str(out_path))
    assert code == 0
    summary = last_json(out)
    assert summary["rows"] == 80 and summary["dim"] == 128
    store = load_embeddings(out_path)
    assert len(store) == 80 and store.dim == 128
    assert out_path.stat().st_size == 24 + 80 * (8 + 4 * 128)


def test_embed_file_provider_round_trips(toy_csv, tmp_path, capsys):
    first = tmp_path / "a.tgem"
    second = tmp_path / "b.tgem"
    run_cli(capsys, "embed", str(toy_csv), "--label", "y", "--out", str(first))
    code, _, _ = run_cli(capsys, "embed", str(toy_csv), "--label", "y",
                         "--provider", "file", "--embeddings", str(first),
                         "--out", str(second))
    assert code == 0
    assert first.read_bytes() == second.read_bytes()


def test_graph_spec_command(toy_csv, tmp_path, capsys):
    out_path = tmp_path / "graph.json"
    code, out, _ = run_cli(capsys, "graph-spec", str(toy_csv), "--label", "y",
                           "--seed", "5", "--out", str(out_path))
    assert code == 0
    spec = json.loads(out_path.read_text())
    nodes = last_json(out)["nodes"]
    assert nodes == len(spec["nodes"]) == 6  # 2 numeric + one-hot color (3 + missing)
    assert len(spec["weights"]) == nodes * nodes


# ---- train / ablate / eval ---------------------------------------------------

def train_run(capsys, toy_csv, out_dir, *extra):
    argv = ["train", str(toy_csv), "--label", "y", *FAST,
            "--out", str(out_dir), *extra]
    return run_cli(capsys, *argv)


def test_train_writes_run_directory(toy_csv, tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = train_run(capsys, toy_csv, out, "--mode", "graph")
    assert code == 0
    summary = last_json(stdout)
    assert summary["mode"] == "graph" and summary["seed"] == 5
    assert 0.0 <= summary["auc_roc"] <= 1.0

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["dataset"] == "toy.csv"
    assert manifest["config"]["learning_rate"] == 3e-3
    assert manifest["config_hash"]
    metrics = json.loads((out / "metrics.json").read_text())
    assert list(sorted(metrics)) == ["auc_roc", "best_epoch", "dataset",
                                     "history", "mode", "seed"]
    assert metrics["auc_roc"] == summary["auc_roc"]
    assert (out / "checkpoint.bin").exists()


def test_manifest_is_written_before_training_starts(toy_csv, tmp_path, capsys):
    out = tmp_path / "diverged"
    with np.errstate(over="ignore", invalid="ignore"):
        code, _, err = train_run(capsys, toy_csv, out, "--mode", "graph",
                                 "--lr", "1e200")
    assert code == 1
    assert "non-finite" in json.loads(err)["error"]
    assert (out / "manifest.json").exists()          # written up front
    assert not (out / "metrics.json").exists()       # training never finished


def test_repeated_run_reproduces_metrics_byte_for_byte(toy_csv, tmp_path, capsys):
    first, second = tmp_path / "r1", tmp_path / "r2"
    train_run(capsys, toy_csv, first, "--mode", "full")
    train_run(capsys, toy_csv, second, "--mode", "full")
    assert (first / "metrics.json").read_bytes() == (second / "metrics.json").read_bytes()


def test_ablate_graph_equals_train_without_consistency(toy_csv, tmp_path, capsys):
    ab, tr = tmp_path / "ablate", tmp_path / "train"
    code1, out1, _ = run_cli(capsys, "ablate", str(toy_csv), "--label", "y",
                             *FAST, "--mode", "graph", "--out", str(ab))
    code2, out2, _ = run_cli(capsys, "train", str(toy_csv), "--label", "y",
                             *FAST, "--lambda", "0", "--out", str(tr))
    assert code1 == code2 == 0
    m_ab = json.loads((ab / "metrics.json").read_text())
    m_tr = json.loads((tr / "metrics.json").read_text())
    assert m_ab["mode"] == "graph" and m_tr["mode"] == "full"  # auto resolved
    for key in ("auc_roc", "best_epoch", "history"):
        assert m_ab[key] == m_tr[key]


def test_ablate_requires_explicit_branch(toy_csv, tmp_path, capsys):
    code, _, err = run_cli(capsys, "ablate", str(toy_csv), "--label", "y",
                           "--out", str(tmp_path / "x"))
    assert code == 2
    assert "requires --mode" in json.loads(err)["error"]


def test_eval_reproduces_training_test_auc(toy_csv, tmp_path, capsys):
    out = tmp_path / "run"
    train_run(capsys, toy_csv, out, "--mode", "graph")
    metrics = json.loads((out / "metrics.json").read_text())
    code, stdout, _ = run_cli(capsys, "eval", str(toy_csv), "--label", "y",
                              "--out", str(out))
    assert code == 0
    result = last_json(stdout)
    assert result["auc_roc"] == metrics["auc_roc"]
    assert result["mode"] == "graph" and result["rows"] == 12  # 15% of 80


def test_eval_rejects_missing_run_directory(toy_csv, tmp_path, capsys):
    code, _, err = run_cli(capsys, "eval", str(toy_csv), "--label", "y",
                           "--out", str(tmp_path / "nothing"))
    assert code == 2
    assert "run directory" in json.loads(err)["error"]


def test_encoding_flag_changes_graph_width(toy_csv, tmp_path, capsys):
    widths = {}
    for encoding in ("onehot", "label"):
        out = tmp_path / encoding
        code, _, _ = train_run(capsys, toy_csv, out, "--mode", "graph",
                               "--encoding", encoding)
        assert code == 0
        ckpt = load_experiment_checkpoint(out / "checkpoint.bin")
        widths[encoding] = ckpt.dims.num_nodes
    assert widths["onehot"] > widths["label"]
    assert widths["label"] == 3  # x0, x1, label-coded color


# ---- gradcheck / seeds -------------------------------------------------------

def test_gradcheck_reports_every_block_under_tolerance(capsys):
    code, out, _ = run_cli(capsys, "gradcheck", "--seed", "0")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[-1].startswith("worst:")
    worst = float(lines[-1].split()[1])
    assert worst < 1e-4
    names = {line.split(":")[0] for line in lines[:-1]}
    assert "full_joint_loss" in names


def test_seeds_command_aggregates_runs(toy_csv, tmp_path, capsys):
    out = tmp_path / "sweep"
    code, stdout, _ = run_cli(capsys, "seeds", str(toy_csv), "--label", "y",
                              *FAST, "--mode", "graph", "--seeds", "5,108",
                              "--out", str(out))
    assert code == 0
    lines = [json.loads(line) for line in stdout.strip().splitlines()]
    assert [row["seed"] for row in lines[:-1]] == [5, 108]
    aggregate = lines[-1]
    aucs = [row["auc_roc"] for row in lines[:-1]]
    assert aggregate["mean"] == pytest.approx(np.mean(aucs))
    assert aggregate["std"] == pytest.approx(np.std(aucs))
    report = json.loads((out / "report.json").read_text())
    assert sorted(report) == ["dataset", "mean", "mode", "seeds", "std"]
    assert json.loads((out / "manifest.json").read_text())["seeds"] == [5, 108]


def test_seeds_list_alias_matches_seeds_flag(toy_csv, capsys):
    base = ["seeds", str(toy_csv), "--label", "y", *FAST, "--mode", "graph"]
    code1, out1, _ = run_cli(capsys, *base, "--seeds", "5,108")
    code2, out2, _ = run_cli(capsys, *base, "--list", "5,108")
    assert code1 == code2 == 0
    assert out1 == out2


def test_seeds_rejects_malformed_list(toy_csv, capsys):
    code, _, err = run_cli(capsys, "seeds", str(toy_csv), "--label", "y",
                           "--seeds", "5,abc")
    assert code == 2
    assert "bad seed list" in json.loads(err)["error"]


# ---- configuration and failure modes -----------------------------------------

def test_config_file_applies_but_flags_win(toy_csv, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep defaults\nlearning_rate = 0.0005\nbatch_size = 16\n")
    out = tmp_path / "run"
    code, _, _ = run_cli(capsys, "train", str(toy_csv), "--label", "y",
                         "--mode", "graph", "--max-epochs", "2", "--patience", "2",
                         "--lr", "3e-3", "--config", str(cfg), "--out", str(out))
    assert code == 0
    config = json.loads((out / "manifest.json").read_text())["config"]
    assert config["learning_rate"] == 3e-3   # flag beats file
    assert config["batch_size"] == 16        # file beats default


def test_config_file_rejects_unknown_keys(toy_csv, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_rte = 0.1\n")
    code, _, err = run_cli(capsys, "train", str(toy_csv), "--label", "y",
                           "--config", str(cfg), "--out", str(tmp_path / "x"))
    assert code == 2
    assert "unknown config keys" in json.loads(err)["error"]


def test_unknown_flag_is_a_usage_error(toy_csv, capsys):
    code, _, err = run_cli(capsys, "train", str(toy_csv), "--label", "y", "--bogus")
    assert code == 2
    assert "error" in json.loads(err)


def test_file_provider_without_embeddings_is_rejected(toy_csv, tmp_path, capsys):
    code, _, err = run_cli(capsys, "train", str(toy_csv), "--label", "y",
                           "--provider", "file", "--out", str(tmp_path / "x"))
    assert code == 2
    assert "requires --embeddings" in json.loads(err)["error"]


def test_missing_data_path_is_reported(capsys):
    code, _, err = run_cli(capsys, "schema", "--label", "y")
    assert code == 2
    assert "--data or positionally" in json.loads(err)["error"]


def test_nonexistent_csv_exits_one_with_json_error(tmp_path, capsys):
    code, _, err = run_cli(capsys, "schema", str(tmp_path / "nope.csv"),
                           "--label", "y")
    assert code == 1
    message = json.loads(err)["error"]
    assert err.count("\n") == 1  # a single line
    assert "nope.csv" in message


def test_log_level_env_var_is_validated(toy_csv, capsys, monkeypatch):
    monkeypatch.setenv("TABGLM_LOG", "noisy")
    code, _, err = run_cli(capsys, "schema", str(toy_csv), "--label", "y")
    assert code == 2
    assert "TABGLM_LOG" in json.loads(err)["error"]

    monkeypatch.setenv("TABGLM_LOG", "debug")
    code, _, _ = run_cli(capsys, "schema", str(toy_csv), "--label", "y")
    assert code == 0
