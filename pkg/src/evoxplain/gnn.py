"""Fixed T-layer message-passing network: forward pass, task heads, trainer.

Aggregation is the element-wise sum of neighbor activations followed by one
linear map per layer, with ReLU between layers and raw logits at the top.
The trainer is desk-scale (full-batch gradient descent) and exists so the
parameters are fixed before any explanation runs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import relu, sigmoid, softmax
from .temporal import GraphSnapshot, LabelSet


class WeightsFormatError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GnnWeights:
    """Per-layer weight matrices plus the optional task head.

    ``layers[t]`` has shape (d_t, d_{t+1}); the head is a (2c,) vector for
    link prediction, a (c, c) matrix for graph classification, and None for
    node classification.
    """

    layers: tuple[np.ndarray, ...]
    head: np.ndarray | None
    task: str
    seed: int = 0

    def __post_init__(self):
        for w in self.layers:
            w.setflags(write=False)
        if self.head is not None:
            self.head.setflags(write=False)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0].shape[0],) + tuple(w.shape[1] for w in self.layers)

    @property
    def num_classes(self) -> int:
        return self.layers[-1].shape[1]


@dataclass(frozen=True)
class LayerActivations:
    """Cached forward-pass values: logits z per layer and hidden h = ReLU(z)."""

    features: np.ndarray
    zs: tuple[np.ndarray, ...]
    hs: tuple[np.ndarray, ...]

    def __post_init__(self):
        self.features.setflags(write=False)
        for a in self.zs + self.hs:
            a.setflags(write=False)

    @property
    def depth(self) -> int:
        return len(self.zs)

    @property
    def logits(self) -> np.ndarray:
        return self.zs[-1]

    def h(self, t: int) -> np.ndarray:
        """Activation matrix at layer t (t=0 is the input features)."""
        if t == 0:
            return self.features
        return self.hs[t - 1]

    def z(self, t: int) -> np.ndarray:
        """Pre-activation logits at layer t, 1-based."""
        return self.zs[t - 1]


def aggregate_neighbors(g: GraphSnapshot, h: np.ndarray, reverse: bool = False) -> np.ndarray:
    """Sum each node's in-neighbor rows of h (reverse=True sums out-neighbors)."""
    n = g.num_nodes
    out = np.zeros((n, h.shape[1]), dtype=np.float64)
    if reverse and g.directed:
        rev: list[list[int]] = [[] for _ in range(n)]
        for v in range(n):
            for u in g.in_neighbors(v):
                rev[u].append(v)
        lists = rev
    else:
        lists = [list(g.in_neighbors(v)) for v in range(n)]
    idx = np.fromiter((u for nb in lists for u in nb), dtype=np.int64)
    seg = np.repeat(np.arange(n), [len(nb) for nb in lists])
    if idx.size:
        np.add.at(out, seg, h[idx])
    return out


def forward(g: GraphSnapshot, weights: GnnWeights) -> LayerActivations:
    """Run the message-passing network, caching every layer's z and h."""
    if g.feature_dim != weights.dims[0]:
        raise ValueError(
            f"feature dim {g.feature_dim} != input dim {weights.dims[0]}"
        )
    h = g.features
    zs: list[np.ndarray] = []
    hs: list[np.ndarray] = []
    for t, w in enumerate(weights.layers, start=1):
        z = aggregate_neighbors(g, h) @ w
        zs.append(z)
        if t < weights.depth:
            h = relu(z)
            hs.append(h)
    return LayerActivations(features=g.features, zs=tuple(zs), hs=tuple(hs))


def predict_node(acts: LayerActivations, j_node: int) -> np.ndarray:
    """Class distribution of one node: softmax over its top-layer logits.

    For c=2 this equals the sigmoid pair [1-s, s] of the logit difference,
    so every task shares the same distribution representation.
    """
    return softmax(acts.logits[j_node])


def link_logit(acts: LayerActivations, i: int, j: int, head: np.ndarray) -> float:
    """Scalar logit of edge (i, j): the concatenated top logits through the head."""
    head = np.asarray(head, dtype=np.float64).reshape(-1)
    c = acts.logits.shape[1]
    if head.shape[0] != 2 * c:
        raise ValueError(f"link head must have length {2 * c}, got {head.shape[0]}")
    return float(acts.logits[i] @ head[:c] + acts.logits[j] @ head[c:])


def predict_link(acts: LayerActivations, i: int, j: int, head: np.ndarray | None) -> np.ndarray:
    if head is None:
        raise ValueError("link prediction requires a trained head")
    p = sigmoid(link_logit(acts, i, j, head))
    return np.array([1.0 - p, p])


def graph_logits(acts: LayerActivations, head: np.ndarray) -> np.ndarray:
    if acts.logits.shape[0] == 0:
        raise ValueError("cannot pool an empty graph")
    return acts.logits.mean(axis=0) @ head


def predict_graph(acts: LayerActivations, head: np.ndarray | None) -> np.ndarray:
    """Average-pool top-layer logits, apply the graph head, softmax."""
    if head is None:
        raise ValueError("graph classification requires a trained head")
    return softmax(graph_logits(acts, head))


@dataclass(frozen=True)
class TrainConfig:
    task: str = "node"
    depth: int = 2
    hidden_dim: int = 16
    num_classes: int = 2
    learning_rate: float = 0.01
    dropout: float = 0.2
    epochs: int = 200
    seed: int = 0


def init_weights(feature_dim: int, cfg: TrainConfig) -> GnnWeights:
    """Uniform [-1/sqrt(d_in), 1/sqrt(d_in)] init with a seeded generator."""
    rng = np.random.default_rng(cfg.seed)
    dims = [feature_dim] + [cfg.hidden_dim] * (cfg.depth - 1) + [cfg.num_classes]
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(d_in)
        layers.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
    head: np.ndarray | None = None
    c = cfg.num_classes
    if cfg.task == "link":
        head = rng.uniform(-1.0 / math.sqrt(2 * c), 1.0 / math.sqrt(2 * c), size=(2 * c,))
    elif cfg.task == "graph":
        head = rng.uniform(-1.0 / math.sqrt(c), 1.0 / math.sqrt(c), size=(c, c))
    return GnnWeights(layers=tuple(layers), head=head, task=cfg.task, seed=cfg.seed)


def _task_loss_and_grad(
    g: GraphSnapshot,
    labels: LabelSet,
    weights_layers: list[np.ndarray],
    head: np.ndarray | None,
    task: str,
    z_top: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray | None]:
    """Loss plus gradients w.r.t. the top logits and the head."""
    n = g.num_nodes
    c = z_top.shape[1]
    g_z = np.zeros_like(z_top)
    if task == "node":
        items = sorted(labels.labels.items())
        count = len(items)
        loss = 0.0
        for node, y in items:
            p = softmax(z_top[node])
            loss -= math.log(max(p[y], 1e-300))
            grad = p.copy()
            grad[y] -= 1.0
            g_z[node] += grad / count
        return loss / count, g_z, None
    if task == "link":
        assert head is not None
        items = sorted(labels.labels.items())
        count = len(items)
        loss = 0.0
        g_head = np.zeros_like(head)
        for (i, j), y in items:
            zeta = float(z_top[i] @ head[:c] + z_top[j] @ head[c:])
            p = sigmoid(zeta)
            loss -= y * math.log(max(p, 1e-300)) + (1 - y) * math.log(max(1 - p, 1e-300))
            dz = (p - y) / count
            g_head[:c] += dz * z_top[i]
            g_head[c:] += dz * z_top[j]
            g_z[i] += dz * head[:c]
            g_z[j] += dz * head[c:]
        return loss / count, g_z, g_head
    if task == "graph":
        assert head is not None
        y = labels.labels[min(labels.labels)]
        pooled = z_top.mean(axis=0)
        logits = pooled @ head
        p = softmax(logits)
        loss = -math.log(max(p[y], 1e-300))
        dlogits = p.copy()
        dlogits[y] -= 1.0
        g_head = np.outer(pooled, dlogits)
        g_z[:] = (head @ dlogits) / n
        return loss, g_z, g_head
    raise ValueError(f"unknown task {task!r}")


def train(g: GraphSnapshot, labels: LabelSet, cfg: TrainConfig) -> GnnWeights:
    """Full-batch gradient descent on cross-entropy; dropout only while training."""
    if not labels.labels:
        raise TrainingError("label set is empty")
    if labels.task != cfg.task:
        raise ValueError(f"label task {labels.task!r} != config task {cfg.task!r}")
    init = init_weights(g.feature_dim, cfg)
    layers = [w.copy() for w in init.layers]
    head = None if init.head is None else init.head.copy()
    rng = np.random.default_rng(cfg.seed + 1)
    depth = cfg.depth
    keep = 1.0 - cfg.dropout

    for _ in range(cfg.epochs):
        h = g.features
        agg_in: list[np.ndarray] = []
        zs: list[np.ndarray] = []
        masks: list[np.ndarray] = []
        for t in range(1, depth + 1):
            a = aggregate_neighbors(g, h)
            agg_in.append(a)
            z = a @ layers[t - 1]
            zs.append(z)
            if t < depth:
                h = relu(z)
                if cfg.dropout > 0.0:
                    mask = (rng.random(h.shape) < keep).astype(np.float64) / keep
                    masks.append(mask)
                    h = h * mask
                else:
                    masks.append(np.ones_like(h))
        loss, g_z, g_head = _task_loss_and_grad(g, labels, layers, head, cfg.task, zs[-1])
        if not math.isfinite(loss):
            raise TrainingError(f"training diverged (loss={loss})")
        grad = g_z
        layer_grads: list[np.ndarray] = [np.zeros(0)] * depth
        for t in range(depth, 0, -1):
            layer_grads[t - 1] = agg_in[t - 1].T @ grad
            if t > 1:
                gh = aggregate_neighbors(g, grad @ layers[t - 1].T, reverse=True)
                grad = gh * masks[t - 2] * (zs[t - 2] > 0.0)
        for t in range(depth):
            layers[t] -= cfg.learning_rate * layer_grads[t]
        if g_head is not None:
            head -= cfg.learning_rate * g_head

    return GnnWeights(layers=tuple(layers), head=head, task=cfg.task, seed=cfg.seed)


def training_metrics(g: GraphSnapshot, labels: LabelSet, weights: GnnWeights) -> tuple[float, float]:
    """(loss, accuracy) with dropout disabled."""
    acts = forward(g, weights)
    z_top = acts.logits
    loss, _, _ = _task_loss_and_grad(g, labels, list(weights.layers), weights.head, weights.task, z_top)
    correct = 0
    items = sorted(labels.labels.items())
    for target, y in items:
        if weights.task == "node":
            pred = int(np.argmax(predict_node(acts, target)))
        elif weights.task == "link":
            i, j = target
            pred = int(np.argmax(predict_link(acts, i, j, weights.head)))
        else:
            pred = int(np.argmax(predict_graph(acts, weights.head)))
        correct += int(pred == y)
    return loss, correct / len(items)


def _render(obj):
    """JSON rendering with every real formatted to 17 significant digits."""
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(k)}:{_render(v)}" for k, v in sorted(obj.items())) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_render(v) for v in obj) + "]"
    return json.dumps(obj)


def save_weights(weights: GnnWeights, path: str | Path) -> None:
    doc = {
        "dims": list(weights.dims),
        "task": weights.task,
        "seed": weights.seed,
        "layers": [[float(x) for x in w.reshape(-1)] for w in weights.layers],
        "head": None if weights.head is None else [float(x) for x in weights.head.reshape(-1)],
        "head_shape": None if weights.head is None else list(weights.head.shape),
    }
    Path(path).write_text(_render(doc) + "\n", encoding="utf-8")


def load_weights(path: str | Path) -> GnnWeights:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise WeightsFormatError(f"cannot read weights file {path}: {exc}") from exc
    try:
        dims = [int(d) for d in doc["dims"]]
        task = doc["task"]
        seed = int(doc["seed"])
        layers = []
        for t, flat in enumerate(doc["layers"]):
            shape = (dims[t], dims[t + 1])
            arr = np.array(flat, dtype=np.float64).reshape(shape)
            layers.append(arr)
        head = None
        if doc.get("head") is not None:
            head = np.array(doc["head"], dtype=np.float64)
            if doc.get("head_shape"):
                head = head.reshape(tuple(doc["head_shape"]))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise WeightsFormatError(f"weights schema mismatch in {path}: {exc}") from exc
    if task not in ("node", "link", "graph"):
        raise WeightsFormatError(f"unknown task {task!r} in {path}")
    return GnnWeights(layers=tuple(layers), head=head, task=task, seed=seed)
