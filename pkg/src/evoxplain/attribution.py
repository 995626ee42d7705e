"""Attribute the change in class logits to altered computation paths.

Each path's contribution is the product of per-layer multipliers: weight
entries across linear maps and difference-ratio (Rescale) factors across
ReLUs, applied to difference-from-reference activations. Removed-kind
paths are attributed on the reversed pair and negated, reducing every
evolution to the pure-addition case. Contributions are exact: per class,
path contributions sum to the total logit change.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gnn import GnnWeights, LayerActivations, forward, graph_logits, link_logit
from .numerics import softmax
from .paths import (
    DEFAULT_MAX_PATHS,
    AlteredPathSet,
    Path,
    PathCapacityError,
    enumerate_altered_paths,
)
from .temporal import EvolutionPair, GraphSnapshot

RESCALE_EPS = 1e-9


@dataclass(frozen=True)
class ReferenceActivations:
    """Per-layer reference and difference values for one path.

    Below the cut layer the reference is zero (the message could not reach
    the root there before the edge appeared), so the difference equals the
    full current activation; at and above it, the reference is the value on
    the reference snapshot.
    """

    path: Path
    ref_h: tuple[np.ndarray, ...]  # layers 0..T-1
    ref_z: tuple[np.ndarray, ...]  # layers 1..T
    dh: tuple[np.ndarray, ...]
    dz: tuple[np.ndarray, ...]


def diff_from_reference(
    path: Path, acts_cur: LayerActivations, acts_ref: LayerActivations
) -> ReferenceActivations:
    """Difference-from-reference of the path's node at every layer.

    The caller orients the pair: for removed-kind paths the current graph
    is g0 and the reference is g1.
    """
    depth = path.depth
    ref_h, ref_z, dh, dz = [], [], [], []
    for t in range(depth):
        node = path.nodes[t]
        cur = acts_cur.h(t)[node]
        ref = acts_ref.h(t)[node] if t >= path.t_bar else np.zeros_like(cur)
        ref_h.append(ref)
        dh.append(cur - ref)
    for t in range(1, depth + 1):
        node = path.nodes[t]
        cur = acts_cur.z(t)[node]
        ref = acts_ref.z(t)[node] if t >= path.t_bar else np.zeros_like(cur)
        ref_z.append(ref)
        dz.append(cur - ref)
    return ReferenceActivations(
        path=path, ref_h=tuple(ref_h), ref_z=tuple(ref_z), dh=tuple(dh), dz=tuple(dz)
    )


def _rescale_multipliers(
    t: int,
    node: int,
    diff_mode: bool,
    acts_cur: LayerActivations,
    acts_ref: LayerActivations,
) -> np.ndarray:
    """Per-neuron Rescale factors dh/dz at an intermediate path node.

    Degenerate |dz| falls back to the ReLU subgradient at the current
    pre-activation, which keeps multipliers bounded.
    """
    z_cur = acts_cur.z(t)[node]
    h_cur = acts_cur.h(t)[node]
    if diff_mode:
        dz = z_cur - acts_ref.z(t)[node]
        dh = h_cur - acts_ref.h(t)[node]
    else:
        dz = z_cur
        dh = h_cur
    small = np.abs(dz) < RESCALE_EPS
    safe = np.where(small, 1.0, dz)
    ratio = dh / safe
    subgrad = (z_cur > 0.0).astype(np.float64)
    return np.where(small, subgrad, ratio)


def _chain(
    t: int,
    path: Path,
    weights: GnnWeights,
    acts_cur: LayerActivations,
    acts_ref: LayerActivations,
    memo: dict | None,
) -> np.ndarray:
    """Multiplier matrix from the layer-t neurons of path[t] to the root logits.

    Chains sharing a suffix (and its cut-layer regime) are computed once:
    the memo key clips t_bar to the suffix so equal-suffix paths reuse it.
    """
    depth = path.depth
    if t == depth - 1:
        return weights.layers[depth - 1]
    key = None
    if memo is not None:
        key = (path.kind, t, path.nodes[t + 1 :], max(path.t_bar, t + 1))
        hit = memo.get(key)
        if hit is not None:
            return hit
    upper = _chain(t + 1, path, weights, acts_cur, acts_ref, memo)
    d = _rescale_multipliers(t + 1, path.nodes[t + 1], (t + 1) >= path.t_bar, acts_cur, acts_ref)
    r = weights.layers[t] @ (d[:, None] * upper)
    if memo is not None:
        memo[key] = r
    return r


def path_contribution(
    path: Path,
    weights: GnnWeights,
    acts_cur: LayerActivations,
    acts_ref: LayerActivations,
    memo: dict | None = None,
) -> np.ndarray:
    """One path's contribution row: input difference through the multiplier chain."""
    chain = _chain(0, path, weights, acts_cur, acts_ref, memo)
    return acts_cur.features[path.nodes[0]] @ chain


@dataclass(frozen=True)
class ContributionMatrix:
    """Per-path, per-class contributions C for one root, rows in path order."""

    values: np.ndarray
    paths: tuple[Path, ...]
    root: int

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.paths)

    def column_sums(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def to_csv(self) -> str:
        lines = ["path_index,kind,class,contribution"]
        for i, p in enumerate(self.paths):
            for j in range(self.values.shape[1]):
                lines.append(f"{i},{p.kind},{j},{format(self.values[i, j], '.17g')}")
        return "\n".join(lines) + "\n"


def attribute_paths(
    path_set: AlteredPathSet,
    pair: EvolutionPair,
    weights: GnnWeights,
    acts0: LayerActivations,
    acts1: LayerActivations,
    use_suffix_memo: bool = True,
) -> ContributionMatrix:
    """Contribution rows for an already-enumerated path set.

    Added-kind paths use (current=g1, reference=g0); removed-kind paths are
    attributed on the reversed pair and negated.
    """
    c = weights.num_classes
    values = np.zeros((path_set.m, c), dtype=np.float64)
    memo: dict | None = {} if use_suffix_memo else None
    for i, p in enumerate(path_set.paths):
        if p.kind == "added":
            values[i] = path_contribution(p, weights, acts1, acts0, memo)
        else:
            values[i] = -path_contribution(p, weights, acts0, acts1, memo)
    return ContributionMatrix(values=values, paths=path_set.paths, root=path_set.root)


def attribute_target(
    pair: EvolutionPair,
    root: int,
    weights: GnnWeights,
    acts0: LayerActivations | None = None,
    acts1: LayerActivations | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
    use_suffix_memo: bool = True,
) -> ContributionMatrix:
    """Enumerate the root's altered paths and attribute the logit change to them."""
    acts0 = acts0 if acts0 is not None else forward(pair.g0, weights)
    acts1 = acts1 if acts1 is not None else forward(pair.g1, weights)
    path_set = enumerate_altered_paths(pair, root, weights.depth, max_paths)
    return attribute_paths(path_set, pair, weights, acts0, acts1, use_suffix_memo)


# ---------------------------------------------------------------------------
# GNN-LRP scorer (gamma = 0): the static-graph oracle and baseline.
# ---------------------------------------------------------------------------


def _all_walks(g: GraphSnapshot, root: int, depth: int, max_paths: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    trail = [root]

    def descend(v: int, remaining: int) -> None:
        if remaining == 0:
            if len(out) >= max_paths:
                raise PathCapacityError(f"walk count exceeds max_paths at root {root}")
            out.append(tuple(reversed(trail)))
            return
        for u in g.in_neighbors(v):
            trail.append(u)
            descend(u, remaining - 1)
            trail.pop()

    descend(root, depth)
    out.sort()
    return out


def gnn_lrp_scores(
    g: GraphSnapshot,
    weights: GnnWeights,
    root: int,
    acts: LayerActivations | None = None,
    walks: list[tuple[int, ...]] | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Per-walk LRP relevances on a static graph, all classes at once.

    Allocation factor h/z per neuron (zero when z is zero); relevances over
    all walks of the root conserve each class logit.
    """
    acts = acts if acts is not None else forward(g, weights)
    if walks is None:
        walks = _all_walks(g, root, weights.depth, max_paths)
    depth = weights.depth
    memo: dict = {}

    def chain(t: int, nodes: tuple[int, ...]) -> np.ndarray:
        if t == depth - 1:
            return weights.layers[depth - 1]
        key = (t, nodes[t + 1 :])
        hit = memo.get(key)
        if hit is not None:
            return hit
        upper = chain(t + 1, nodes)
        node = nodes[t + 1]
        z = acts.z(t + 1)[node]
        h = acts.h(t + 1)[node]
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(z != 0.0, h / np.where(z == 0.0, 1.0, z), 0.0)
        r = weights.layers[t] @ (d[:, None] * upper)
        memo[key] = r
        return r

    scores = np.zeros((len(walks), weights.num_classes), dtype=np.float64)
    for i, nodes in enumerate(walks):
        scores[i] = acts.features[nodes[0]] @ chain(0, nodes)
    return walks, scores


# ---------------------------------------------------------------------------
# Gradient scorer: analytic d(logit)/d(arc presence), summed along paths.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientField:
    """Per-layer message contents and upstream logit gradients.

    The gradient of the seeded output w.r.t. the presence coefficient of arc
    (u, v) at layer t is <messages[t][u], upstream[t][v]>.
    """

    messages: tuple[np.ndarray, ...]
    upstream: tuple[np.ndarray, ...]

    def arc_gradient(self, t: int, u: int, v: int) -> float:
        return float(self.messages[t - 1][u] @ self.upstream[t - 1][v])

    def walk_score(self, nodes: tuple[int, ...]) -> float:
        return sum(
            self.arc_gradient(t, nodes[t - 1], nodes[t]) for t in range(1, len(nodes))
        )


def gradient_field(
    g: GraphSnapshot,
    weights: GnnWeights,
    acts: LayerActivations,
    seed_top: np.ndarray,
) -> GradientField:
    """Backpropagate ``seed_top`` (d output / d top logits, per node) to arcs."""
    from .gnn import aggregate_neighbors

    depth = weights.depth
    messages = [acts.h(t - 1) @ weights.layers[t - 1] for t in range(1, depth + 1)]
    upstream: list[np.ndarray] = [np.zeros(0)] * depth
    grad = np.asarray(seed_top, dtype=np.float64)
    upstream[depth - 1] = grad
    for t in range(depth - 1, 0, -1):
        gh = aggregate_neighbors(g, upstream[t] @ weights.layers[t].T, reverse=True)
        upstream[t - 1] = gh * (acts.z(t) > 0.0)
    return GradientField(messages=tuple(messages), upstream=tuple(upstream))


def gradient_seed(
    task: str,
    weights: GnnWeights,
    g: GraphSnapshot,
    target,
    predicted_class: int,
) -> np.ndarray:
    """Top-layer seed for the predicted class's task logit."""
    n = g.num_nodes
    c = weights.num_classes
    seed = np.zeros((n, c), dtype=np.float64)
    if task == "node":
        seed[target, predicted_class] = 1.0
    elif task == "link":
        i, j = target
        head = weights.head.reshape(-1)
        sign = 1.0 if predicted_class == 1 else -1.0
        seed[i] += sign * head[:c]
        seed[j] += sign * head[c:]
    elif task == "graph":
        seed[:] = weights.head[:, predicted_class] / n
    else:
        raise ValueError(f"unknown task {task!r}")
    return seed


def grad_path_scores(
    pair: EvolutionPair,
    weights: GnnWeights,
    paths: tuple[Path, ...],
    field0: GradientField,
    field1: GradientField,
) -> np.ndarray:
    """Per-path gradient importance: G1-vs-G0 score difference where the walk
    exists on both snapshots, otherwise the single snapshot's score."""
    def valid_on(g: GraphSnapshot, nodes: tuple[int, ...]) -> bool:
        return all(g.has_arc(nodes[t - 1], nodes[t]) for t in range(1, len(nodes)))

    scores = np.zeros(len(paths), dtype=np.float64)
    for i, p in enumerate(paths):
        on0 = p.kind == "removed" or valid_on(pair.g0, p.nodes)
        on1 = p.kind == "added" or valid_on(pair.g1, p.nodes)
        s0 = field0.walk_score(p.nodes) if on0 else 0.0
        s1 = field1.walk_score(p.nodes) if on1 else 0.0
        if on0 and on1:
            scores[i] = s1 - s0
        else:
            scores[i] = s1 if on1 else s0
    return scores


# ---------------------------------------------------------------------------
# Task-level assembly: contributions mapped through the task head.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetAttribution:
    """Everything the selection program and the fidelity metrics need for one
    target: concatenated path rows, their raw per-root contributions, the
    effective contributions to the task logits, and the endpoint logits.

    ``base1 == base0 + eff.sum(axis=0)`` holds exactly up to float error
    (completeness through the linear task head).
    """

    task: str
    target: int | tuple[int, int]
    paths: tuple[Path, ...]
    roots: tuple[int, ...]
    raw: np.ndarray
    eff: np.ndarray
    base0: np.ndarray
    base1: np.ndarray
    split: int | None = None

    def __post_init__(self):
        self.raw.setflags(write=False)
        self.eff.setflags(write=False)
        self.base0.setflags(write=False)
        self.base1.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.paths)

    def dist0(self) -> np.ndarray:
        return softmax(self.base0)

    def dist1(self) -> np.ndarray:
        return softmax(self.base1)


def attribute_node_target(
    pair: EvolutionPair,
    weights: GnnWeights,
    root: int,
    acts0: LayerActivations | None = None,
    acts1: LayerActivations | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> TargetAttribution:
    acts0 = acts0 if acts0 is not None else forward(pair.g0, weights)
    acts1 = acts1 if acts1 is not None else forward(pair.g1, weights)
    cm = attribute_target(pair, root, weights, acts0, acts1, max_paths)
    return TargetAttribution(
        task="node",
        target=root,
        paths=cm.paths,
        roots=(root,) * cm.m,
        raw=cm.values,
        eff=cm.values.copy(),
        base0=acts0.logits[root].copy(),
        base1=acts1.logits[root].copy(),
    )


def attribute_link_target(
    pair: EvolutionPair,
    weights: GnnWeights,
    endpoints: tuple[int, int],
    acts0: LayerActivations | None = None,
    acts1: LayerActivations | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> TargetAttribution:
    """Joint attribution for both endpoints of a link, through the link head.

    Task logits use the [0, zeta] convention so the binary distribution is
    the sigmoid pair and shares the softmax code path.
    """
    if weights.head is None:
        raise ValueError("link attribution requires a link head")
    acts0 = acts0 if acts0 is not None else forward(pair.g0, weights)
    acts1 = acts1 if acts1 is not None else forward(pair.g1, weights)
    i, j = endpoints
    cm_i = attribute_target(pair, i, weights, acts0, acts1, max_paths)
    cm_j = attribute_target(pair, j, weights, acts0, acts1, max_paths)
    c = weights.num_classes
    head = weights.head.reshape(-1)
    w_i = cm_i.values @ head[:c]
    w_j = cm_j.values @ head[c:]
    w = np.concatenate([w_i, w_j])
    eff = np.column_stack([np.zeros_like(w), w])
    raw = np.vstack([cm_i.values, cm_j.values]) if (cm_i.m + cm_j.m) else np.zeros((0, c))
    zeta0 = link_logit(acts0, i, j, head)
    zeta1 = link_logit(acts1, i, j, head)
    return TargetAttribution(
        task="link",
        target=endpoints,
        paths=cm_i.paths + cm_j.paths,
        roots=(i,) * cm_i.m + (j,) * cm_j.m,
        raw=raw,
        eff=eff,
        base0=np.array([0.0, zeta0]),
        base1=np.array([0.0, zeta1]),
        split=cm_i.m,
    )


def attribute_graph_target(
    pair: EvolutionPair,
    weights: GnnWeights,
    acts0: LayerActivations | None = None,
    acts1: LayerActivations | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> TargetAttribution:
    """Attribution over the union of every node's altered paths, through
    average pooling and the graph head."""
    if weights.head is None:
        raise ValueError("graph attribution requires a graph head")
    acts0 = acts0 if acts0 is not None else forward(pair.g0, weights)
    acts1 = acts1 if acts1 is not None else forward(pair.g1, weights)
    n = pair.g0.num_nodes
    c = weights.num_classes
    paths: list[Path] = []
    roots: list[int] = []
    blocks: list[np.ndarray] = []
    remaining = max_paths
    for root in range(n):
        path_set = enumerate_altered_paths(pair, root, weights.depth, remaining)
        if path_set.m == 0:
            continue
        remaining -= path_set.m
        cm = attribute_paths(path_set, pair, weights, acts0, acts1)
        paths.extend(cm.paths)
        roots.extend([root] * cm.m)
        blocks.append(cm.values)
    raw = np.vstack(blocks) if blocks else np.zeros((0, c))
    eff = (raw / n) @ weights.head
    return TargetAttribution(
        task="graph",
        target=0,
        paths=tuple(paths),
        roots=tuple(roots),
        raw=raw,
        eff=eff,
        base0=graph_logits(acts0, weights.head).copy(),
        base1=graph_logits(acts1, weights.head).copy(),
    )


def attribute_for_task(
    pair: EvolutionPair,
    weights: GnnWeights,
    task: str,
    target,
    acts0: LayerActivations | None = None,
    acts1: LayerActivations | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> TargetAttribution:
    if task == "node":
        return attribute_node_target(pair, weights, int(target), acts0, acts1, max_paths)
    if task == "link":
        return attribute_link_target(pair, weights, tuple(target), acts0, acts1, max_paths)
    if task == "graph":
        return attribute_graph_target(pair, weights, acts0, acts1, max_paths)
    raise ValueError(f"unknown task {task!r}")
