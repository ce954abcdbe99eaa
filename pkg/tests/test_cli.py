import json

import numpy as np
import pytest

from qgshap.cli import main
from qgshap.graph import Graph, read_jsonl, write_jsonl


@pytest.fixture(scope="module")
def bridge_run(tmp_path_factory):
    """gen + train (small) on Bridge, shared by the explain/eval tests."""
    d = tmp_path_factory.mktemp("run")
    assert main(["gen", "bridge", "--out-dir", str(d), "--seed", "7", "--test-count", "4"]) == 0
    assert main(["train", "--train", str(d / "bridge_train.jsonl"), "--test", str(d / "bridge_test.jsonl"),
                 "--hidden-dim", "16", "--lr", "0.01", "--out", str(d / "model.json")]) == 0
    return d


def test_gen_counts_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["gen", "ba2motif", "--out-dir", str(out), "--seed", "7"]) == 0
    assert len(read_jsonl(a / "ba2motif_train.jsonl")) == 50
    assert len(read_jsonl(a / "ba2motif_test.jsonl")) == 50
    for name in ("ba2motif_train.jsonl", "ba2motif_test.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    entry = json.loads((a / "manifest.jsonl").read_text().splitlines()[0])
    assert entry["command"] == "gen" and entry["seed"] == 7 and len(entry["outputs"]) == 2


def test_epochs_zero_rejected(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--train", "x.jsonl", "--epochs", "0", "--out", str(tmp_path / "m.json")])
    assert exc.value.code == 2
    assert "must be positive" in capsys.readouterr().err


def test_train_reports(bridge_run, capsys):
    d = bridge_run
    line = json.loads((d / "manifest.jsonl").read_text().splitlines()[-1])
    assert line["command"] == "train"
    assert line["attempts"][-1]["test_accuracy"] >= 0.95
    assert json.loads((d / "model.json").read_text())["hidden_dim"] == 16


@pytest.fixture(scope="module")
def explained(bridge_run):
    d = bridge_run
    common = ["explain", "--model", str(d / "model.json"), "--dataset", str(d / "bridge_test.jsonl")]
    assert main(common + ["--mode", "classical", "--out", str(d / "cl")]) == 0
    assert main(common + ["--mode", "quantum-exact", "--prep", "direct-exact", "--out", str(d / "qe"),
                          "--jobs", "2"]) == 0
    return d


def test_classical_vs_quantum_exact(explained):
    d = explained
    for i in range(4):
        a = json.loads((d / "cl" / f"graph_{i:04d}.json").read_text())
        b = json.loads((d / "qe" / f"graph_{i:04d}.json").read_text())
        assert np.max(np.abs(np.subtract(a["scores"], b["scores"]))) <= 1e-8
        assert b["mode"] == "quantum-exact"


def test_eval_writes_table(explained):
    d = explained
    assert main(["eval", "--model", str(d / "model.json"), "--dataset", str(d / "bridge_test.jsonl"),
                 "--explanations", str(d / "qe"), "--out-csv", str(d / "metrics.csv")]) == 0
    text = (d / "metrics.csv").read_text()
    assert "QGShap (quantum-exact)" in text
    assert (d / "metrics_per_graph.csv").exists()


def test_nine_node_budget_error(bridge_run, tmp_path, capsys):
    g = Graph(9, np.ones((9, 8)), [(i, i + 1) for i in range(8)], 1, [0, 1])
    write_jsonl([g], tmp_path / "big.jsonl")
    rc = main(["explain", "--model", str(bridge_run / "model.json"), "--dataset", str(tmp_path / "big.jsonl"),
               "--out", str(tmp_path / "e")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "graph 0" in err and "9 nodes" in err


def test_empty_explanations_dir(bridge_run, tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    rc = main(["eval", "--model", str(bridge_run / "model.json"), "--dataset", str(bridge_run / "bridge_test.jsonl"),
               "--explanations", str(tmp_path / "empty"), "--out-csv", str(tmp_path / "m.csv")])
    assert rc == 1
    assert "missing" in capsys.readouterr().err
