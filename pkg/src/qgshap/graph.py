"""Graph container, coalition enumeration and node-masking semantics.

Three ways of hiding nodes are provided and they are *not* interchangeable:

* :func:`mask_zero_fill` keeps every node and edge but zeroes the feature
  rows of nodes outside the coalition. Used to build cooperative games.
* :func:`induced_subgraph` drops the nodes outside the coalition.
* :func:`complement_subgraph` drops the nodes inside the coalition.

The last two back the fidelity metrics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

MAX_NODES = 16


@dataclass(frozen=True)
class Coalition:
    """A subset of node indices encoded as a bitmask (bit ``i`` is node ``i``)."""

    mask: int

    def __post_init__(self):
        if self.mask < 0:
            raise ValueError(f"negative coalition mask {self.mask}")

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    def members(self) -> list[int]:
        return [i for i in range(self.mask.bit_length()) if self.mask >> i & 1]

    def __contains__(self, node: int) -> bool:
        return bool(self.mask >> node & 1)

    @classmethod
    def from_nodes(cls, nodes: Iterable[int]) -> "Coalition":
        mask = 0
        for v in nodes:
            mask |= 1 << int(v)
        return cls(mask)


MaskLike = Union[Coalition, int]


def as_mask(s: MaskLike) -> int:
    return s.mask if isinstance(s, Coalition) else int(s)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with a dense node-feature matrix.

    ``edges`` is normalised to a sorted tuple of ``(u, v)`` pairs with ``u < v``.
    ``targets`` optionally names the nodes a top-k explanation is expected to
    surface; when absent the ground truth plays that role.
    """

    num_nodes: int
    features: np.ndarray
    edges: tuple = ()
    label: Optional[int] = None
    ground_truth: Optional[tuple] = None
    targets: Optional[tuple] = None
    _adj: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.num_nodes)
        if n < 0:
            raise ValueError("num_nodes must be non-negative")
        feats = np.array(self.features, dtype=np.float64, copy=True)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValueError(f"features must be an {n} x d matrix, got shape {feats.shape}")
        feats.setflags(write=False)

        norm = set()
        for e in self.edges:
            u, v = (int(x) for x in e)
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for {n} nodes")
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            key = (min(u, v), max(u, v))
            if key in norm:
                raise ValueError(f"duplicate edge {key}")
            norm.add(key)

        gt = _node_tuple(self.ground_truth, n, "ground_truth")
        tg = _node_tuple(self.targets, n, "targets")
        if self.label is not None and int(self.label) not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")

        adj = np.zeros((n, n))
        for u, v in norm:
            adj[u, v] = adj[v, u] = 1.0
        adj.setflags(write=False)

        object.__setattr__(self, "num_nodes", n)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        object.__setattr__(self, "label", None if self.label is None else int(self.label))
        object.__setattr__(self, "ground_truth", gt)
        object.__setattr__(self, "targets", tg)
        object.__setattr__(self, "_adj", adj)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def full_mask(self) -> int:
        return (1 << self.num_nodes) - 1

    @property
    def target_nodes(self) -> Optional[tuple]:
        return self.targets if self.targets is not None else self.ground_truth

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix (read-only)."""
        return self._adj

    def degrees(self) -> np.ndarray:
        return self._adj.sum(axis=1).astype(int)

    def replace(self, **kw) -> "Graph":
        fields = dict(
            num_nodes=self.num_nodes,
            features=self.features,
            edges=self.edges,
            label=self.label,
            ground_truth=self.ground_truth,
            targets=self.targets,
        )
        fields.update(kw)
        return Graph(**fields)

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm, dtype=int)
        if sorted(perm.tolist()) != list(range(self.num_nodes)):
            raise ValueError("perm must be a permutation of range(num_nodes)")
        feats = np.empty_like(self.features)
        feats[perm] = self.features
        relabel = lambda nodes: None if nodes is None else tuple(sorted(int(perm[v]) for v in nodes))
        return Graph(
            self.num_nodes,
            feats,
            [(perm[u], perm[v]) for u, v in self.edges],
            self.label,
            relabel(self.ground_truth),
            relabel(self.targets),
        )

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.edges == other.edges
            and self.label == other.label
            and self.ground_truth == other.ground_truth
            and self.targets == other.targets
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        d = {
            "num_nodes": self.num_nodes,
            "edges": [list(e) for e in self.edges],
            "features": self.features.tolist(),
        }
        if self.label is not None:
            d["label"] = self.label
        if self.ground_truth is not None:
            d["ground_truth"] = list(self.ground_truth)
        if self.targets is not None:
            d["targets"] = list(self.targets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        try:
            n = int(d["num_nodes"])
            feats = d["features"]
            edges = d.get("edges", [])
        except KeyError as exc:
            raise ValueError(f"graph record missing key {exc}") from None
        return cls(
            n,
            np.asarray(feats, dtype=np.float64).reshape(n, -1) if n else np.zeros((0, 0)),
            [tuple(e) for e in edges],
            d.get("label"),
            d.get("ground_truth"),
            d.get("targets"),
        )


def _node_tuple(nodes, n, name):
    if nodes is None:
        return None
    out = tuple(sorted({int(v) for v in nodes}))
    for v in out:
        if not 0 <= v < n:
            raise ValueError(f"{name} node {v} out of range for {n} nodes")
    return out


def enumerate_coalitions(n: int, exclude: Optional[int] = None) -> list[Coalition]:
    """Coalitions over ``n`` players in ascending mask order.

    Without ``exclude`` every non-empty mask is returned. With ``exclude=j``
    the result is every subset of the other players, *including* the empty
    one, since marginal contributions need v(empty).
    """
    if not 1 <= n <= MAX_NODES:
        raise ValueError(f"n must lie in [1, {MAX_NODES}], got {n}")
    if exclude is None:
        return [Coalition(m) for m in range(1, 1 << n)]
    if not 0 <= exclude < n:
        raise ValueError(f"exclude={exclude} out of range for n={n}")
    bit = 1 << exclude
    return [Coalition(m) for m in range(1 << n) if not m & bit]


def _check_mask(g: Graph, mask: int):
    if not 0 <= mask <= g.full_mask:
        raise ValueError(f"coalition mask {mask:#b} does not fit {g.num_nodes} nodes")


def mask_zero_fill(g: Graph, s: MaskLike) -> Graph:
    """Zero the feature rows of nodes outside ``s``; topology untouched."""
    mask = as_mask(s)
    _check_mask(g, mask)
    keep = np.array([(mask >> i) & 1 for i in range(g.num_nodes)], dtype=np.float64)
    return g.replace(features=g.features * keep[:, None])


def zero_fill_features(g: Graph, masks: Sequence[int]) -> np.ndarray:
    """Stacked zero-filled feature matrices, shape ``(len(masks), n, d)``."""
    masks = np.asarray(masks, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(g.num_nodes)) & 1
    return bits[:, :, None].astype(np.float64) * g.features[None]


def induced_subgraph(g: Graph, s: MaskLike) -> Graph:
    """Keep only the nodes in ``s``; survivors are relabelled in ascending order."""
    mask = as_mask(s)
    _check_mask(g, mask)
    if mask == 0:
        raise ValueError("induced subgraph of the empty coalition is undefined")
    keep = [i for i in range(g.num_nodes) if mask >> i & 1]
    new_id = {old: new for new, old in enumerate(keep)}
    edges = [(new_id[u], new_id[v]) for u, v in g.edges if u in new_id and v in new_id]
    remap = lambda nodes: None if nodes is None else tuple(new_id[v] for v in nodes if v in new_id)
    return Graph(
        len(keep),
        g.features[keep],
        edges,
        g.label,
        remap(g.ground_truth),
        remap(g.targets),
    )


def complement_subgraph(g: Graph, s: MaskLike) -> Graph:
    """Remove the nodes in ``s`` (same as inducing on the complement)."""
    mask = as_mask(s)
    _check_mask(g, mask)
    if mask == g.full_mask:
        raise ValueError("complement of the full coalition is empty")
    return induced_subgraph(g, g.full_mask & ~mask)


def read_jsonl(path: Union[str, Path]) -> list[Graph]:
    graphs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                graphs.append(Graph.from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return graphs


def write_jsonl(graphs: Iterable[Graph], path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        for g in graphs:
            fh.write(json.dumps(g.to_dict(), separators=(",", ":")))
            fh.write("\n")
