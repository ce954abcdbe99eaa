import csv
import warnings

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qgshap.benchmarks import (
    DatasetSpec,
    MetricsReport,
    evaluate,
    fidelity,
    gea,
    gen_ba2motif,
    gen_bridge,
    generate,
    node_features,
    sparsity,
    topk_accuracy,
    write_per_graph_csv,
    write_report_csv,
)
from qgshap.gin import init_model
from qgshap.graph import write_jsonl
from qgshap.pipeline import Explanation, rank_nodes

HOUSE = nx.Graph([(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])


def to_nx(g):
    G = nx.Graph()
    G.add_nodes_from(range(g.num_nodes))
    G.add_edges_from(g.edges)
    return G


def fake_explanation(scores):
    scores = np.asarray(scores, dtype=float)
    return Explanation(scores, scores, scores, scores, rank_nodes(scores), "classical")


def test_bridge_counts():
    train, test = gen_bridge(DatasetSpec("bridge", seed=7))
    assert len(train) == 60 and sum(g.label for g in train) == 30
    assert len(test) == 20 and all(g.label == 1 for g in test)
    assert all(g.num_nodes <= 15 for g in train)
    assert all(g.num_nodes == 8 for g in test)


def test_bridge_structure():
    train, test = gen_bridge(DatasetSpec("bridge", seed=3))
    for g in train + test:
        G = to_nx(g)
        if g.label == 1:
            bridges = list(nx.bridges(G))
            assert len(bridges) == 1
            assert tuple(sorted(bridges[0])) == g.ground_truth
            G.remove_edge(*bridges[0])
            assert nx.number_connected_components(G) == 2
        else:
            assert nx.number_connected_components(G) == 2
            assert g.ground_truth is None


def test_literal_bridge_configs():
    _, test = gen_bridge(DatasetSpec("bridge", bridge_configs="literal"))
    assert {g.num_nodes for g in test} == {6, 7, 8}


def test_bridge_budget_too_small():
    with pytest.raises(ValueError):
        gen_bridge(DatasetSpec("bridge", node_budget=7))


def test_ba2motif_counts_and_motif():
    train, test = gen_ba2motif(DatasetSpec("ba2motif", seed=7))
    assert len(train) == len(test) == 50
    assert sum(g.label for g in train) == 25
    for g in train + test:
        assert g.num_nodes == 8 and len(g.ground_truth) == 5
        motif = to_nx(g).subgraph(g.ground_truth)
        if g.label == 1:
            assert nx.is_isomorphic(motif, HOUSE)
            assert motif.has_edge(*g.targets)
            # exactly one 5-node house in the whole graph
            matcher = nx.algorithms.isomorphism.GraphMatcher(to_nx(g), HOUSE)
            found = {frozenset(m) for m in matcher.subgraph_isomorphisms_iter()}
            assert found == {frozenset(g.ground_truth)}
        else:
            assert nx.is_isomorphic(motif, nx.cycle_graph(5))
            assert g.targets is None


def test_house_has_one_more_edge():
    from qgshap.benchmarks import ba2motif_graph

    a = ba2motif_graph(np.random.default_rng(5), True)
    b = ba2motif_graph(np.random.default_rng(5), False)
    assert len(a.edges) == len(b.edges) + 1


def test_ba2motif_budget():
    with pytest.raises(ValueError):
        gen_ba2motif(DatasetSpec("ba2motif", node_budget=5))


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec("mutag")
    with pytest.raises(ValueError):
        DatasetSpec("bridge", train_count=0)
    with pytest.raises(ValueError):
        DatasetSpec("bridge", node_budget=17)


@pytest.mark.parametrize("kind", ["bridge", "ba2motif"])
def test_generator_deterministic(kind, tmp_path):
    a = generate(DatasetSpec(kind, seed=11))
    b = generate(DatasetSpec(kind, seed=11))
    for split in range(2):
        write_jsonl(a[split], tmp_path / "a.jsonl")
        write_jsonl(b[split], tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_node_features():
    x = node_features(3, [(0, 1), (1, 2)], "degree-onehot")
    assert x.tolist()[1] == [0, 0, 1, 0, 0, 0, 0, 0]
    assert np.all(node_features(3, [], "ones") == 1)


def test_topk():
    _, test = gen_bridge(DatasetSpec("bridge", test_count=3))
    good = []
    for g in test:
        s = np.zeros(g.num_nodes)
        s[list(g.ground_truth)] = [1.0, 0.9]
        good.append(fake_explanation(s))
    assert topk_accuracy(good, test, 2) == 1.0
    bad = [fake_explanation(-e.scores) for e in good]
    assert topk_accuracy(bad, test, 2) == 0.0


def test_sparsity_examples():
    assert sparsity([1, 0.5, 0, 0, 0, 0, 0, 0]) == 0.75
    assert sparsity([1, 0, 0, 0, 0, 0, 0, 0]) == 0.875
    assert sparsity(np.ones(8)) == 0.0
    # negatives count as unimportant
    assert sparsity([1, -1, 0.2, 0, 0, 0, 0, 0]) == 0.75
    with pytest.warns(RuntimeWarning):
        assert sparsity(np.zeros(4)) == 0.0


def test_gea_examples():
    assert gea([0, 1], [0, 1, 2, 3, 4]) == pytest.approx(0.4)
    assert gea([3, 1], [1, 3]) == 1.0
    assert gea([0], [1]) == 0.0
    with pytest.warns(RuntimeWarning):
        assert gea([], []) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=16), st.sets(st.integers(0, 15)), st.sets(st.integers(0, 15)))
def test_metric_ranges(scores, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert 0 <= sparsity(scores) <= 1
        assert 0 <= gea(a, b) <= 1


def test_constant_model_fidelity_is_zero():
    m = init_model(8, 8, seed=0)
    m.decoder.w2[...] = 0.0
    _, test = gen_bridge(DatasetSpec("bridge", test_count=2))
    g = test[0]
    e = fake_explanation(np.linspace(1, 0, g.num_nodes))
    assert fidelity(m, g, e, g.num_nodes - 1) == (0.0, 0.0)
    with pytest.raises(ValueError):
        fidelity(m, g, e, g.num_nodes)


def test_gea_topk_coherence():
    # perfect top-2 on the house edge gives GEA exactly 2/5 against the motif
    m = init_model(8, 8)
    _, test = gen_ba2motif(DatasetSpec("ba2motif", test_count=6))
    pos = [g for g in test if g.label == 1]
    exps = []
    for g in pos:
        s = np.zeros(8)
        s[list(g.targets)] = [1.0, 0.8]
        exps.append(fake_explanation(s))
    rep = evaluate(m, pos, exps, k=2, gea_k=2)
    assert rep.mean("topk_acc") == 1.0
    assert np.allclose(rep.values("gea"), 0.4)
    assert np.allclose(rep.values("sparsity"), 0.75)


def test_report_csv(tmp_path):
    rep = MetricsReport(2, [
        {"graph": 0, "fid_plus": 0.0, "fid_minus": 1.0, "sparsity": 0.75, "gea": 1.0, "topk_acc": 1.0,
         "tp": 2, "fp": 0, "fn": 0, "p_base": 1.0, "p_keep": 1.0, "p_remove": 0.0},
        {"graph": 1, "fid_plus": 0.0, "fid_minus": 0.5, "sparsity": 0.75, "gea": 1.0, "topk_acc": 0.0,
         "tp": 2, "fp": 0, "fn": 0, "p_base": 1.0, "p_keep": 1.0, "p_remove": 0.5},
    ])
    assert rep.summary()["fid_minus"] == (0.75, 0.25)
    assert rep.table_row()["Top-2 Acc"] == "0.50 ± 0.50"
    p = tmp_path / "m.csv"
    write_report_csv(rep, p, "bridge", "quantum-exact")
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["dataset", "mode", "metric", "mean", "std", "k", "count"]
    assert rows[2][:4] == ["bridge", "quantum-exact", "fid_minus", "0.750000"]
    assert rows[-1][1] == "QGShap (quantum-exact)"
    write_per_graph_csv(rep, tmp_path / "pg.csv")
    assert len(list(csv.DictReader((tmp_path / "pg.csv").open()))) == 2
