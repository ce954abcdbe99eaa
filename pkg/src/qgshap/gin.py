"""Small GIN graph classifier in plain numpy with hand-written backprop.

Architecture: 2-layer MLP encoder -> three GIN layers -> readout -> 2-layer
MLP decoder emitting two class logits. Each GIN layer computes::

    h_v <- relu(MLP((1 + eps) * h_v + sum_{u in N(v)} h_u))

All forward/backward kernels operate on a *batch* layout: features of shape
``(B, N, d)``, a shared ``(N, N)`` adjacency and a ``(G, N)`` pooling matrix.
Training packs many graphs block-diagonally into one ``N``; coalition games
stack ``B = 2**n`` zero-filled copies of a single graph.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .graph import Graph

log = logging.getLogger(__name__)

NUM_GIN_LAYERS = 3
NUM_CLASSES = 2


@dataclass
class MlpParams:
    """``in -> hidden -> out`` perceptron with a ReLU between the two layers."""

    w1: np.ndarray
    b1: Optional[np.ndarray]
    w2: np.ndarray
    b2: Optional[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if self.w1.shape[1] != self.w2.shape[0]:
            raise ValueError(f"MLP inner dimensions do not chain: {self.w1.shape} then {self.w2.shape}")
        for name, b, w in (("b1", self.b1, self.w1), ("b2", self.b2, self.w2)):
            if b is not None and b.shape != (w.shape[1],):
                raise ValueError(f"{name} has shape {b.shape}, expected ({w.shape[1]},)")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    def arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(self, name)
            if arr is not None:
                yield name, arr

    @classmethod
    def init(cls, rng, d_in, d_hidden, d_out, bias=True) -> "MlpParams":
        def lin(fan_in, fan_out):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=fan_out) if bias else None
            return w, b

        w1, b1 = lin(d_in, d_hidden)
        w2, b2 = lin(d_hidden, d_out)
        return cls(w1, b1, w2, b2)


@dataclass
class GinLayer:
    mlp: MlpParams
    epsilon: float = 0.0


@dataclass
class GinModel:
    encoder: MlpParams
    gin_layers: list
    decoder: MlpParams
    hidden_dim: int
    readout: str = "sum"

    def __post_init__(self):
        if len(self.gin_layers) != NUM_GIN_LAYERS:
            raise ValueError(f"expected {NUM_GIN_LAYERS} GIN layers, got {len(self.gin_layers)}")
        if self.readout not in ("sum", "mean"):
            raise ValueError(f"readout must be 'sum' or 'mean', got {self.readout!r}")
        h = self.hidden_dim
        if self.encoder.w2.shape[1] != h:
            raise ValueError("encoder output width differs from hidden_dim")
        for i, layer in enumerate(self.gin_layers):
            if layer.mlp.w1.shape[0] != h or layer.mlp.w2.shape[1] != h:
                raise ValueError(f"GIN layer {i} is not {h} -> {h}")
        if self.decoder.w1.shape[0] != h or self.decoder.w2.shape[1] != NUM_CLASSES:
            raise ValueError(f"decoder must map {h} -> {NUM_CLASSES}")

    @property
    def in_dim(self) -> int:
        return self.encoder.w1.shape[0]

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Every trainable array, in a fixed order, keyed by a dotted name."""
        for name, arr in self.encoder.arrays():
            yield f"encoder.{name}", arr
        for i, layer in enumerate(self.gin_layers):
            for name, arr in layer.mlp.arrays():
                yield f"gin{i}.{name}", arr
        for name, arr in self.decoder.arrays():
            yield f"decoder.{name}", arr

    def copy(self) -> "GinModel":
        cp = lambda p: None if p is None else p.copy()
        mlp = lambda m: MlpParams(cp(m.w1), cp(m.b1), cp(m.w2), cp(m.b2), m.activation)
        return GinModel(
            mlp(self.encoder),
            [GinLayer(mlp(l.mlp), l.epsilon) for l in self.gin_layers],
            mlp(self.decoder),
            self.hidden_dim,
            self.readout,
        )

    def zeros_like(self) -> "GinModel":
        z = self.copy()
        for _, arr in z.named_arrays():
            arr[...] = 0.0
        return z


def init_model(
    in_dim: int,
    hidden_dim: int = 128,
    *,
    seed: int = 0,
    readout: str = "sum",
    epsilon: float = 0.0,
    encoder_bias: bool = False,
) -> GinModel:
    rng = np.random.default_rng(seed)
    h = hidden_dim
    enc = MlpParams.init(rng, in_dim, h, h, bias=encoder_bias)
    layers = [GinLayer(MlpParams.init(rng, h, h, h), epsilon) for _ in range(NUM_GIN_LAYERS)]
    dec = MlpParams.init(rng, h, h, NUM_CLASSES)
    return GinModel(enc, layers, dec, h, readout)


# --------------------------------------------------------------------------
# batched kernels


def _mlp_fwd(p: MlpParams, x):
    z1 = x @ p.w1
    if p.b1 is not None:
        z1 = z1 + p.b1
    a1 = np.maximum(z1, 0.0)
    out = a1 @ p.w2
    if p.b2 is not None:
        out = out + p.b2
    return out, (x, z1, a1)


def _mlp_bwd(p: MlpParams, grad: MlpParams, dout, cache):
    x, z1, a1 = cache
    flat = lambda t: t.reshape(-1, t.shape[-1])
    grad.w2 += flat(a1).T @ flat(dout)
    if grad.b2 is not None:
        grad.b2 += flat(dout).sum(axis=0)
    da1 = dout @ p.w2.T
    dz1 = da1 * (z1 > 0)
    grad.w1 += flat(x).T @ flat(dz1)
    if grad.b1 is not None:
        grad.b1 += flat(dz1).sum(axis=0)
    return dz1 @ p.w1.T


def _forward_batch(m: GinModel, x, adj, pool):
    if x.shape[-1] != m.in_dim:
        raise ValueError(f"feature width {x.shape[-1]} does not match model input width {m.in_dim}")
    caches = []
    h, c = _mlp_fwd(m.encoder, x)
    caches.append(c)
    for layer in m.gin_layers:
        agg = (1.0 + layer.epsilon) * h + adj @ h
        o, c = _mlp_fwd(layer.mlp, agg)
        h = np.maximum(o, 0.0)
        caches.append((c, o))
    hg = pool @ h
    logits, c = _mlp_fwd(m.decoder, hg)
    caches.append(c)
    return logits, caches


def _backward_batch(m: GinModel, dlogits, adj, pool, caches) -> GinModel:
    grad = m.zeros_like()
    dhg = _mlp_bwd(m.decoder, grad.decoder, dlogits, caches[-1])
    dh = pool.T @ dhg
    for i in reversed(range(NUM_GIN_LAYERS)):
        layer = m.gin_layers[i]
        c, o = caches[1 + i]
        do = dh * (o > 0)
        dagg = _mlp_bwd(layer.mlp, grad.gin_layers[i].mlp, do, c)
        # adj is symmetric, so adj.T @ dagg == adj @ dagg
        dh = (1.0 + layer.epsilon) * dagg + adj @ dagg
    _mlp_bwd(m.encoder, grad.encoder, dh, caches[0])
    return grad


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _pool_row(n: int, readout: str):
    if readout == "mean" and n > 0:
        return np.full((1, n), 1.0 / n)
    return np.ones((1, n))


def forward(m: GinModel, g: Graph) -> np.ndarray:
    """Class probabilities ``[p0, p1]`` for a single graph."""
    x = g.features[None]
    logits, _ = _forward_batch(m, x, g.adjacency(), _pool_row(g.num_nodes, m.readout))
    return _softmax(logits[0, 0])


def forward_features(m: GinModel, g: Graph, feats: np.ndarray) -> np.ndarray:
    """Probabilities for many feature matrices on ``g``'s topology.

    ``feats`` has shape ``(B, n, d)``; returns ``(B, 2)``.
    """
    logits, _ = _forward_batch(m, feats, g.adjacency(), _pool_row(g.num_nodes, m.readout))
    return _softmax(logits[:, 0, :])


def pack_graphs(graphs: Sequence[Graph], readout: str = "sum"):
    """Block-diagonal packing: ``(x[1, N, d], adj[N, N], pool[G, N])``."""
    sizes = [g.num_nodes for g in graphs]
    total = sum(sizes)
    d = graphs[0].num_features
    x = np.zeros((1, total, d))
    adj = np.zeros((total, total))
    pool = np.zeros((len(graphs), total))
    off = 0
    for i, g in enumerate(graphs):
        if g.num_features != d:
            raise ValueError("all graphs in a batch must share the feature width")
        n = g.num_nodes
        x[0, off:off + n] = g.features
        adj[off:off + n, off:off + n] = g.adjacency()
        pool[i, off:off + n] = 1.0 / n if readout == "mean" else 1.0
        off += n
    return x, adj, pool


def loss_and_grad(m: GinModel, graphs: Sequence[Graph], labels: Sequence[int]):
    """Mean cross-entropy over ``graphs`` and its gradient."""
    x, adj, pool = pack_graphs(graphs, m.readout)
    logits, caches = _forward_batch(m, x, adj, pool)
    logits = logits[0]
    probs = _softmax(logits)
    y = np.asarray(labels, dtype=int)
    G = len(graphs)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(G), y].mean()) + 0.0  # avoid -0.0
    dlogits = probs.copy()
    dlogits[np.arange(G), y] -= 1.0
    dlogits /= G
    grad = _backward_batch(m, dlogits[None], adj, pool, caches)
    return loss, grad, probs


def backward(m: GinModel, g: Graph, label: int) -> GinModel:
    """Gradient of the cross-entropy loss for one graph, shaped like the model."""
    _, grad, _ = loss_and_grad(m, [g], [label])
    return grad


def loss(m: GinModel, g: Graph, label: int) -> float:
    p = forward(m, g)
    return float(-np.log(p[int(label)]))


def predict(m: GinModel, graphs: Sequence[Graph]) -> np.ndarray:
    return np.array([int(np.argmax(forward(m, g))) for g in graphs], dtype=int)


def accuracy(m: GinModel, graphs: Sequence[Graph]) -> float:
    if not graphs:
        return float("nan")
    pred = predict(m, graphs)
    return float(np.mean(pred == np.array([g.label for g in graphs])))


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    hidden_dim: int = 128
    readout: str = "sum"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: GinModel
    losses: list = field(default_factory=list)
    train_accuracy: float = float("nan")


def train(dataset: Sequence[Graph], cfg: Optional[TrainConfig] = None, model: Optional[GinModel] = None) -> TrainResult:
    """Full-batch Adam on the cross-entropy loss.

    Raises :class:`TrainingDiverged` as soon as the loss turns non-finite.
    """
    cfg = cfg or TrainConfig()
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    if any(g.label is None for g in dataset):
        raise ValueError("every training graph needs a label")
    labels = [g.label for g in dataset]
    if model is None:
        model = init_model(dataset[0].num_features, cfg.hidden_dim, seed=cfg.seed,
                           readout=cfg.readout, epsilon=cfg.epsilon)
    else:
        model = model.copy()

    b1, b2 = cfg.adam_betas
    params = [arr for _, arr in model.named_arrays()]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    losses = []
    for t in range(1, cfg.epochs + 1):
        loss_val, grad, _ = loss_and_grad(model, dataset, labels)
        if not np.isfinite(loss_val):
            raise TrainingDiverged(f"non-finite loss {loss_val} at epoch {t}")
        losses.append(float(loss_val))
        for p, g, a, v in zip(params, (arr for _, arr in grad.named_arrays()), m1, m2):
            a *= b1
            a += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            a_hat = a / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p -= cfg.learning_rate * a_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        if t % 10 == 0:
            log.debug("epoch %d loss %.6f", t, loss_val)
    acc = accuracy(model, dataset)
    log.info("trained %d epochs: final loss %.4f, train accuracy %.3f", cfg.epochs, losses[-1], acc)
    return TrainResult(model, losses, acc)


# --------------------------------------------------------------------------
# serialization


def _mlp_to_dict(p: MlpParams) -> dict:
    return {
        name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
        for name, arr in p.arrays()
    }


def _array_from(entry, expected_shape, where):
    try:
        shape = tuple(int(s) for s in entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{where}: malformed array entry ({exc})") from None
    if expected_shape is not None and shape != tuple(expected_shape):
        raise ValueError(f"{where}: declared shape {shape} != expected {tuple(expected_shape)}")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{where}: dimension mismatch, {data.size} values for shape {shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{where}: non-finite weights")
    return data.reshape(shape)


def _mlp_from_dict(d, d_in, d_hidden, d_out, where) -> MlpParams:
    if not isinstance(d, dict) or "w1" not in d or "w2" not in d:
        raise ValueError(f"{where}: missing weight matrices")
    w1 = _array_from(d["w1"], (d_in, d_hidden) if d_in is not None else None, f"{where}.w1")
    b1 = _array_from(d["b1"], (d_hidden,), f"{where}.b1") if "b1" in d else None
    w2 = _array_from(d["w2"], (d_hidden, d_out), f"{where}.w2")
    b2 = _array_from(d["b2"], (d_out,), f"{where}.b2") if "b2" in d else None
    return MlpParams(w1, b1, w2, b2)


def model_to_dict(m: GinModel) -> dict:
    return {
        "format": "qgshap-gin/1",
        "hidden_dim": m.hidden_dim,
        "in_dim": m.in_dim,
        "readout": m.readout,
        "epsilon": [float(l.epsilon) for l in m.gin_layers],
        "encoder": _mlp_to_dict(m.encoder),
        "gin_layers": [_mlp_to_dict(l.mlp) for l in m.gin_layers],
        "decoder": _mlp_to_dict(m.decoder),
    }


def model_from_dict(d: dict) -> GinModel:
    try:
        h = int(d["hidden_dim"])
        readout = d.get("readout", "sum")
        eps = [float(e) for e in d["epsilon"]]
        layers = d["gin_layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed model header: {exc}") from None
    if len(eps) != NUM_GIN_LAYERS or len(layers) != NUM_GIN_LAYERS:
        raise ValueError(f"model must declare exactly {NUM_GIN_LAYERS} GIN layers")
    in_dim = d.get("in_dim")
    enc = _mlp_from_dict(d.get("encoder"), in_dim, h, h, "encoder")
    gin = [GinLayer(_mlp_from_dict(l, h, h, h, f"gin{i}"), eps[i]) for i, l in enumerate(layers)]
    dec = _mlp_from_dict(d.get("decoder"), h, h, NUM_CLASSES, "decoder")
    return GinModel(enc, gin, dec, h, readout)


def save_model(m: GinModel, path) -> None:
    # json emits the shortest repr of each float, which round-trips exactly
    Path(path).write_text(json.dumps(model_to_dict(m), separators=(",", ":")) + "\n")


def load_model(path) -> GinModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(d)
