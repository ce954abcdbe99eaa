"""Synthetic ground-truth datasets (Bridge, BA2-Motif) and explanation metrics."""
from __future__ import annotations

import csv
import logging
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graph import MAX_NODES, Coalition, Graph, complement_subgraph, induced_subgraph

log = logging.getLogger(__name__)

FEATURE_DIM = 8
SUM8_CONFIGS = ((3, 5), (4, 4), (5, 3))
LITERAL_CONFIGS = ((3, 3), (3, 4), (4, 3), (4, 4))


def stage_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for a named stage derived from one master seed."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode())])


@dataclass
class DatasetSpec:
    kind: str = "bridge"
    train_count: Optional[int] = None
    test_count: Optional[int] = None
    node_budget: int = 8
    seed: int = 0
    feature_mode: str = "degree-onehot"
    bridge_configs: str = "sum8"

    def __post_init__(self):
        if self.kind not in ("bridge", "ba2motif"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        defaults = {"bridge": (60, 20), "ba2motif": (50, 50)}[self.kind]
        if self.train_count is None:
            self.train_count = defaults[0]
        if self.test_count is None:
            self.test_count = defaults[1]
        if self.train_count <= 0 or self.test_count <= 0:
            raise ValueError("dataset counts must be positive")
        if not 1 <= self.node_budget <= MAX_NODES:
            raise ValueError(f"node_budget must lie in [1, {MAX_NODES}]")
        if self.feature_mode not in ("ones", "degree-onehot"):
            raise ValueError(f"unknown feature_mode {self.feature_mode!r}")
        if self.bridge_configs not in ("sum8", "literal"):
            raise ValueError(f"unknown bridge_configs {self.bridge_configs!r}")


def node_features(n: int, edges, mode: str = "ones", width: int = FEATURE_DIM) -> np.ndarray:
    if mode == "ones":
        return np.ones((n, width))
    deg = np.zeros(n, dtype=int)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    x = np.zeros((n, width))
    x[np.arange(n), np.minimum(deg, width - 1)] = 1.0
    return x


def _cycle(offset: int, size: int):
    return [(offset + i, offset + (i + 1) % size) for i in range(size)]


def _finish(rng, n, edges, label, gt, targets, mode) -> Graph:
    """Shuffle node identities so position carries no signal."""
    perm = rng.permutation(n)
    edges = [(int(perm[u]), int(perm[v])) for u, v in edges]
    relabel = lambda nodes: None if nodes is None else sorted(int(perm[v]) for v in nodes)
    return Graph(n, node_features(n, edges, mode), edges, label, relabel(gt), relabel(targets))


def bridge_graph(rng, a: int, b: int, with_bridge: bool, mode: str = "ones") -> Graph:
    """Two cycles of sizes ``a`` and ``b``, optionally joined by one bridge edge."""
    edges = _cycle(0, a) + _cycle(a, b)
    gt = None
    if with_bridge:
        u = int(rng.integers(a))
        v = a + int(rng.integers(b))
        edges.append((u, v))
        gt = [u, v]
    return _finish(rng, a + b, edges, int(with_bridge), gt, None, mode)


def gen_bridge(spec: DatasetSpec):
    if spec.kind != "bridge":
        raise ValueError("gen_bridge needs a bridge spec")
    configs = SUM8_CONFIGS if spec.bridge_configs == "sum8" else LITERAL_CONFIGS
    if max(a + b for a, b in configs) > spec.node_budget:
        raise ValueError(f"node_budget {spec.node_budget} too small for test configurations {configs}")

    rng = stage_rng(spec.seed, "bridge-train")
    train = []
    for i in range(spec.train_count):
        a, b = (int(s) for s in rng.integers(3, 6, size=2))
        train.append(bridge_graph(rng, a, b, with_bridge=i % 2 == 0, mode=spec.feature_mode))
    order = rng.permutation(len(train))
    train = [train[i] for i in order]

    rng = stage_rng(spec.seed, "bridge-test")
    test = [bridge_graph(rng, *configs[i % len(configs)], True, spec.feature_mode)
            for i in range(spec.test_count)]
    return train, test


def _ba_edges(rng, size: int, m: int = 1):
    """Preferential attachment tree/graph on ``size`` nodes."""
    edges = []
    deg = np.zeros(size)
    for v in range(1, size):
        k = min(m, v)
        p = deg[:v] + 1e-12 if deg[:v].sum() > 0 else np.ones(v)
        targets = rng.choice(v, size=k, replace=False, p=p / p.sum())
        for u in sorted(int(t) for t in targets):
            edges.append((u, v))
            deg[u] += 1
            deg[v] += 1
    return edges


def ba2motif_graph(rng, house: bool, base_size: int = 3, mode: str = "ones") -> Graph:
    """BA base plus one 5-node motif: a house (label 1) or a 5-cycle (label 0).

    The house is the 5-cycle ``c0..c4`` plus the chord ``c0-c2``; that chord's
    endpoints are recorded as the graph's ``targets``.
    """
    edges = _ba_edges(rng, base_size)
    motif = list(range(base_size, base_size + 5))
    edges += _cycle(base_size, 5)
    targets = None
    if house:
        edges.append((motif[0], motif[2]))
        targets = [motif[0], motif[2]]
    anchor = int(rng.integers(base_size)) if base_size else None
    if anchor is not None:
        edges.append((anchor, motif[int(rng.integers(5))]))
    return _finish(rng, base_size + 5, edges, int(house), motif, targets, mode)


def gen_ba2motif(spec: DatasetSpec):
    if spec.kind != "ba2motif":
        raise ValueError("gen_ba2motif needs a ba2motif spec")
    base = spec.node_budget - 5
    if base < 1:
        raise ValueError(f"node_budget {spec.node_budget} leaves no room for a BA base next to the 5-node motif")

    def split(label, count):
        rng = stage_rng(spec.seed, f"ba2motif-{label}")
        graphs = [ba2motif_graph(rng, i % 2 == 0, base, spec.feature_mode) for i in range(count)]
        return [graphs[i] for i in rng.permutation(count)]

    return split("train", spec.train_count), split("test", spec.test_count)


def generate(spec: DatasetSpec):
    return gen_bridge(spec) if spec.kind == "bridge" else gen_ba2motif(spec)


# --------------------------------------------------------------------------
# metrics


def top_k(ranking: Sequence[int], k: int) -> set:
    return set(int(v) for v in ranking[:k])


def topk_accuracy(explanations, graphs: Sequence[Graph], k: int = 2) -> float:
    """Fraction of graphs whose target nodes all sit in the top-``k`` of the ranking."""
    if k < 1:
        raise ValueError("k must be at least 1")
    hits = [topk_hit(e, g, k) for e, g in zip(explanations, graphs, strict=True)]
    return float(np.mean(hits)) if hits else float("nan")


def topk_hit(explanation, g: Graph, k: int = 2) -> bool:
    targets = g.target_nodes
    if not targets:
        raise ValueError("graph has no target nodes for top-k accuracy")
    return set(targets) <= top_k(explanation.ranking, k)


def fidelity_probs(model, g: Graph, explanation, k: int = 2):
    """``(P_base, P_keep, P_remove)`` of the full-graph predicted class."""
    from .gin import forward

    n = g.num_nodes
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n ({n}), got {k}")
    s = Coalition.from_nodes(explanation.ranking[:k])
    p_full = forward(model, g)
    yc = int(np.argmax(p_full))
    p_keep = forward(model, induced_subgraph(g, s))[yc]
    p_remove = forward(model, complement_subgraph(g, s))[yc]
    return float(p_full[yc]), float(p_keep), float(p_remove)


def fidelity(model, g: Graph, explanation, k: int = 2):
    """``(fid_plus, fid_minus)`` for the top-``k`` node set ``S``.

    ``fid_plus = P_keep - P_base`` on the subgraph induced by ``S``,
    ``fid_minus = P_base - P_remove`` on the graph with ``S`` deleted, all
    probabilities taken for the class predicted on the full graph.
    """
    p_base, p_keep, p_remove = fidelity_probs(model, g, explanation, k)
    return p_keep - p_base, p_base - p_remove


def sparsity(scores: Sequence[float], rel_threshold: float = 0.1) -> float:
    """Share of nodes scoring below ``rel_threshold`` of the largest positive score."""
    phi = np.asarray(scores, dtype=float)
    top = phi.max() if phi.size else 0.0
    if not top > 0:
        warnings.warn("no positive attribution; sparsity defined as 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(1.0 - np.count_nonzero(phi >= rel_threshold * top) / phi.size)


def gea(predicted: Sequence[int], ground_truth: Sequence[int]) -> float:
    """Jaccard overlap TP / (TP + FP + FN)."""
    pred, gt = set(predicted), set(ground_truth)
    if not pred and not gt:
        warnings.warn("both node sets empty; GEA defined as 1", RuntimeWarning, stacklevel=2)
        return 1.0
    tp = len(pred & gt)
    return tp / len(pred | gt)


def confusion(predicted, ground_truth):
    pred, gt = set(predicted), set(ground_truth)
    return len(pred & gt), len(pred - gt), len(gt - pred)


METRICS = ("fid_plus", "fid_minus", "sparsity", "gea", "topk_acc")
TABLE_COLUMNS = {
    "fid_plus": "Fid+",
    "fid_minus": "Fid-",
    "sparsity": "Sparsity",
    "gea": "GEA",
    "topk_acc": "Top-{k} Acc",
}


@dataclass
class MetricsReport:
    k: int
    per_graph: list = field(default_factory=list)

    def values(self, metric: str) -> np.ndarray:
        return np.array([row[metric] for row in self.per_graph], dtype=float)

    def mean(self, metric: str) -> float:
        return float(self.values(metric).mean())

    def std(self, metric: str) -> float:
        # population std
        return float(self.values(metric).std())

    def summary(self) -> dict:
        return {m: (self.mean(m), self.std(m)) for m in METRICS}

    def table_row(self) -> dict:
        return {TABLE_COLUMNS[m].format(k=self.k): f"{mu:.2f} ± {sd:.2f}" for m, (mu, sd) in self.summary().items()}


def evaluate(model, graphs: Sequence[Graph], explanations, k: int = 2, gea_k: Optional[int] = None) -> MetricsReport:
    """Score explanations against ground truth.

    The GEA predicted set is the top-``gea_k`` nodes; ``gea_k=None`` uses the
    ground-truth size of each graph.
    """
    if len(graphs) != len(explanations):
        raise ValueError(f"{len(graphs)} graphs but {len(explanations)} explanations")
    report = MetricsReport(k)
    for i, (g, e) in enumerate(zip(graphs, explanations)):
        if g.ground_truth is None:
            raise ValueError(f"graph {i} has no ground truth")
        kk = len(g.ground_truth) if gea_k is None else gea_k
        pred = top_k(e.ranking, kk)
        tp, fp, fn = confusion(pred, g.ground_truth)
        p_base, p_keep, p_remove = fidelity_probs(model, g, e, k)
        report.per_graph.append({
            "graph": i,
            "fid_plus": p_keep - p_base,
            "fid_minus": p_base - p_remove,
            "sparsity": sparsity(e.scores),
            "gea": gea(pred, g.ground_truth),
            "topk_acc": float(topk_hit(e, g, k)),
            "tp": tp,
            "fp": fp,
            "fn": fn,
            "p_base": p_base,
            "p_keep": p_keep,
            "p_remove": p_remove,
        })
    return report


def write_report_csv(report: MetricsReport, path, dataset: str, mode: str) -> None:
    """Long-form rows per metric followed by a table-style aggregate block."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "mode", "metric", "mean", "std", "k", "count"])
        for m in METRICS:
            w.writerow([dataset, mode, m, f"{report.mean(m):.6f}", f"{report.std(m):.6f}", report.k, len(report.per_graph)])
        w.writerow([])
        row = report.table_row()
        w.writerow(["Dataset", "Explainer", *row.keys()])
        w.writerow([dataset, f"QGShap ({mode})", *row.values()])


def write_per_graph_csv(report: MetricsReport, path) -> None:
    cols = ["graph", *METRICS, "tp", "fp", "fn", "p_base", "p_keep", "p_remove"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in report.per_graph:
            w.writerow({c: row[c] for c in cols})
