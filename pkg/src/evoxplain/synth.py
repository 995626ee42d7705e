"""Seeded synthetic evolving graphs: SBM snapshots with edge churn.

Every acceptance suite runs on these. The generator is deterministic given
its seed, which keeps reports byte-identical across runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gnn import GnnWeights, TrainConfig, init_weights
from .temporal import Edge, EvolutionPair, GraphSnapshot, LabelSet, diff_snapshots, snapshot_from_edges


def _sbm_edges(rng: np.random.Generator, community: np.ndarray, p_in: float, p_out: float) -> set[Edge]:
    n = community.size
    edges: set[Edge] = set()
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if community[u] == community[v] else p_out
            if rng.random() < p:
                edges.add((u, v))
    return edges


def _churn(
    rng: np.random.Generator,
    n: int,
    edges: set[Edge],
    evolution: str,
    add_count: int,
    remove_count: int,
) -> set[Edge]:
    out = set(edges)
    if evolution in ("remove", "mixed") and out:
        removable = sorted(out)
        k = min(remove_count, len(removable))
        for i in rng.choice(len(removable), size=k, replace=False):
            out.discard(removable[int(i)])
    if evolution in ("add", "mixed"):
        non_edges = sorted(
            (u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edges
        )
        k = min(add_count, len(non_edges))
        for i in rng.choice(len(non_edges), size=k, replace=False):
            out.add(non_edges[int(i)])
    return out


def community_features(
    rng: np.random.Generator, community: np.ndarray, noise: float = 0.3
) -> np.ndarray:
    n = community.size
    d = int(community.max()) + 1
    x = np.zeros((n, d))
    x[np.arange(n), community] = 1.0
    return x + noise * rng.standard_normal((n, d))


@dataclass(frozen=True)
class SyntheticPair:
    pair: EvolutionPair
    community: np.ndarray
    node_labels: LabelSet


def synthetic_pair(
    rng: np.random.Generator,
    num_nodes: int = 40,
    num_communities: int = 3,
    p_in: float = 0.25,
    p_out: float = 0.03,
    evolution: str = "mixed",
    churn_frac: float = 0.08,
    feature_noise: float = 0.3,
) -> SyntheticPair:
    """One SBM snapshot pair with seeded churn; node labels are communities."""
    if evolution not in ("add", "remove", "mixed"):
        raise ValueError(f"unknown evolution {evolution!r}")
    community = rng.integers(0, num_communities, size=num_nodes)
    e0 = _sbm_edges(rng, community, p_in, p_out)
    churn_count = max(1, int(math.ceil(churn_frac * max(1, len(e0)))))
    e1 = _churn(rng, num_nodes, e0, evolution, churn_count, churn_count)
    features = community_features(rng, community, feature_noise)
    g0 = snapshot_from_edges(num_nodes, e0, features)
    g1 = snapshot_from_edges(num_nodes, e1, features)
    labels = LabelSet(task="node", labels={v: int(community[v]) for v in range(num_nodes)})
    return SyntheticPair(pair=diff_snapshots(g0, g1), community=community, node_labels=labels)


def random_instance(
    rng: np.random.Generator,
    num_nodes: int = 10,
    depth: int = 2,
    evolution: str = "mixed",
    num_classes: int = 3,
    hidden_dim: int = 5,
    feature_dim: int = 4,
    edge_prob: float = 0.3,
    churn: int = 2,
) -> tuple[EvolutionPair, GnnWeights]:
    """Small random evolving pair plus seeded random weights (property tests)."""
    e0 = {
        (u, v)
        for u in range(num_nodes)
        for v in range(u + 1, num_nodes)
        if rng.random() < edge_prob
    }
    e1 = _churn(rng, num_nodes, e0, evolution, churn, churn)
    features = rng.standard_normal((num_nodes, feature_dim))
    g0 = snapshot_from_edges(num_nodes, e0, features)
    g1 = snapshot_from_edges(num_nodes, e1, features)
    cfg = TrainConfig(
        task="node",
        depth=depth,
        hidden_dim=hidden_dim,
        num_classes=num_classes,
        seed=int(rng.integers(0, 2**31)),
    )
    weights = init_weights(feature_dim, cfg)
    return diff_snapshots(g0, g1), weights


def link_label_pairs(
    rng: np.random.Generator, g: GraphSnapshot, count: int
) -> LabelSet:
    """Balanced positive/negative node pairs for training the link head."""
    real = sorted(e for e in g.edges if e[0] != e[1])
    labels: dict[tuple[int, int], int] = {}
    if real:
        for i in rng.choice(len(real), size=min(count, len(real)), replace=False):
            labels[real[int(i)]] = 1
    tries = 0
    while len(labels) < 2 * count and tries < 50 * count:
        u, v = int(rng.integers(g.num_nodes)), int(rng.integers(g.num_nodes))
        tries += 1
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in g.edges or key in labels:
            continue
        labels[key] = 0
    return LabelSet(task="link", labels=labels)


def link_candidates(
    rng: np.random.Generator, pair: EvolutionPair, count: int
) -> list[tuple[int, int]]:
    """Candidate link targets biased toward the altered region so enough of
    them clear the minimum altered-path count."""
    touched = sorted({v for e in (pair.added | pair.removed) for v in e})
    if not touched:
        return []
    near: set[int] = set(touched)
    for v in touched:
        near.update(pair.g1.in_neighbors(v))
        near.update(pair.g0.in_neighbors(v))
    pool = sorted(near)
    out: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    tries = 0
    while len(out) < count and tries < 60 * count:
        tries += 1
        u = pool[int(rng.integers(len(pool)))]
        v = pool[int(rng.integers(len(pool)))]
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        seen.add(key)
        out.append(key)
    return out


@dataclass(frozen=True)
class SuiteItem:
    index: int
    pair: EvolutionPair
    candidates: tuple
    community: np.ndarray


@dataclass(frozen=True)
class SyntheticSuite:
    task: str
    evolution: str
    seed: int
    items: tuple[SuiteItem, ...]
    train_labels: LabelSet


def synthetic_suite(
    task: str,
    evolution: str,
    seed: int,
    num_pairs: int = 4,
    num_nodes: int = 40,
    num_communities: int = 3,
    p_in: float = 0.25,
    p_out: float = 0.03,
    churn_frac: float = 0.08,
    graph_num_nodes: int = 18,
    graph_churn_edges: int = 5,
    link_candidate_count: int = 30,
) -> SyntheticSuite:
    """A deterministic batch of evolving pairs with per-task target candidates.

    Graph-task pairs follow the molecule convention: small graphs with a
    handful of randomly added/removed edges.
    """
    rng = np.random.default_rng(seed)
    items: list[SuiteItem] = []
    train_labels: LabelSet | None = None
    for idx in range(num_pairs):
        if task == "graph":
            sp = synthetic_pair(
                rng,
                num_nodes=graph_num_nodes,
                num_communities=num_communities,
                p_in=min(1.0, p_in * 1.6),
                p_out=p_out * 2,
                evolution=evolution,
                churn_frac=graph_churn_edges / max(1, graph_num_nodes),
            )
            candidates: tuple = (0,)
        else:
            sp = synthetic_pair(
                rng,
                num_nodes=num_nodes,
                num_communities=num_communities,
                p_in=p_in,
                p_out=p_out,
                evolution=evolution,
                churn_frac=churn_frac,
            )
            if task == "node":
                candidates = tuple(range(num_nodes))
            else:
                candidates = tuple(link_candidates(rng, sp.pair, link_candidate_count))
        if train_labels is None:
            if task == "node":
                train_labels = sp.node_labels
            elif task == "link":
                train_labels = link_label_pairs(rng, sp.pair.g0, count=2 * num_nodes)
            else:
                train_labels = LabelSet(task="graph", labels={0: idx % 2})
        items.append(
            SuiteItem(index=idx, pair=sp.pair, candidates=candidates, community=sp.community)
        )
    assert train_labels is not None
    return SyntheticSuite(
        task=task, evolution=evolution, seed=seed, items=tuple(items), train_labels=train_labels
    )
