"""Timestamped edge ingestion, snapshot materialization, and snapshot diffs.

A dataset is a list of (src, dst, time) events plus a node feature matrix.
Snapshots are built per time window; a pair of snapshots (g0, g1) plus the
set of altered edges is the unit the explanation pipeline consumes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

Edge = tuple[int, int]


class EdgeListParseError(ValueError):
    """Raised on malformed edge-list input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DimensionError(ValueError):
    pass


class IncompatibleSnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class TemporalEdgeList:
    """Timestamped events with node ids compacted to a dense range.

    ``id_map`` maps original ids to dense ids; events keep file order and
    duplicates (multi-events collapse only at snapshot build).
    """

    events: tuple[tuple[int, int, int], ...]
    id_map: tuple[tuple[int, int], ...]

    @property
    def num_nodes(self) -> int:
        return len(self.id_map)

    def dense_id(self, original: int) -> int:
        return dict(self.id_map)[original]


def load_temporal_edges(path: str | Path, allow_self_edges: bool = False) -> TemporalEdgeList:
    """Parse whitespace-separated ``src dst time`` lines ('#' starts a comment).

    Node ids are compacted to [0, |V|) by ascending original id; the map is
    kept on the returned list.
    """
    raw: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 3:
                raise EdgeListParseError(line_no, f"expected 'src dst time', got {body!r}")
            try:
                src, dst, time = (int(p) for p in parts)
            except ValueError:
                raise EdgeListParseError(line_no, f"non-integer field in {body!r}") from None
            if src < 0 or dst < 0:
                raise EdgeListParseError(line_no, "negative node id")
            if time < 0:
                raise EdgeListParseError(line_no, "negative timestamp")
            if src == dst and not allow_self_edges:
                raise EdgeListParseError(line_no, "self edge not permitted by config")
            raw.append((src, dst, time))
    originals = sorted({u for u, v, _ in raw} | {v for u, v, _ in raw})
    dense = {orig: i for i, orig in enumerate(originals)}
    events = tuple((dense[u], dense[v], t) for u, v, t in raw)
    return TemporalEdgeList(events=events, id_map=tuple(dense.items()))


def _canonical(u: int, v: int, directed: bool) -> Edge:
    if directed or u <= v:
        return (u, v)
    return (v, u)


@dataclass(frozen=True)
class GraphSnapshot:
    """Immutable graph with per-node sorted neighbor lists and node features.

    Undirected edges are stored as two directed arcs so message passing
    treats directions uniformly; self-loops (one arc per node) are injected
    at build time when ``self_loops`` is set.
    """

    neighbors: tuple[tuple[int, ...], ...]
    features: np.ndarray = field(repr=False)
    edges: frozenset[Edge]
    directed: bool = False
    self_loops: bool = True

    def __post_init__(self):
        self.features.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return len(self.neighbors)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def in_neighbors(self, v: int) -> tuple[int, ...]:
        """Nodes whose messages v aggregates (identical to neighbors when undirected)."""
        return self.neighbors[v]

    def has_arc(self, u: int, v: int) -> bool:
        return _canonical(u, v, self.directed) in self.edges

    def to_json(self) -> str:
        """Deterministic JSON rendering (sorted keys, 17-digit reals)."""
        payload = {
            "directed": self.directed,
            "edges": sorted(list(e) for e in self.edges),
            "features": [[format(x, ".17g") for x in row] for row in self.features],
            "num_nodes": self.num_nodes,
            "self_loops": self.self_loops,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def snapshot_from_edges(
    num_nodes: int,
    edges: Iterable[Edge],
    features: np.ndarray,
    directed: bool = False,
    self_loops: bool = True,
) -> GraphSnapshot:
    """Build a snapshot from an explicit edge set (test and synthetic entry point)."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.shape[0] != num_nodes:
        raise DimensionError(
            f"feature rows {features.shape[0]} != num_nodes {num_nodes}"
        )
    edge_set = set()
    for u, v in edges:
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise DimensionError(f"edge ({u},{v}) outside node range [0,{num_nodes})")
        edge_set.add(_canonical(u, v, directed))
    if self_loops:
        edge_set.update((v, v) for v in range(num_nodes))
    nbrs: list[list[int]] = [[] for _ in range(num_nodes)]
    for u, v in edge_set:
        nbrs[v].append(u)
        if not directed and u != v:
            nbrs[u].append(v)
    return GraphSnapshot(
        neighbors=tuple(tuple(sorted(a)) for a in nbrs),
        features=features,
        edges=frozenset(edge_set),
        directed=directed,
        self_loops=self_loops,
    )


def build_snapshot(
    edges: TemporalEdgeList,
    t_initial: int,
    t_end: int,
    features: np.ndarray,
    directed: bool = False,
    self_loops: bool = True,
) -> GraphSnapshot:
    """Materialize the snapshot holding every edge with an event in [t_initial, t_end].

    Duplicate events collapse to one edge. Isolated nodes are retained (the
    node universe is all nodes ever seen).
    """
    if t_initial > t_end:
        raise ValueError(f"t_initial {t_initial} > t_end {t_end}")
    window = [(u, v) for u, v, t in edges.events if t_initial <= t <= t_end]
    return snapshot_from_edges(
        num_nodes=max(edges.num_nodes, features.shape[0]),
        edges=window,
        features=features,
        directed=directed,
        self_loops=self_loops,
    )


@dataclass(frozen=True)
class EvolutionPair:
    """A source/destination snapshot pair with the altered edge set."""

    g0: GraphSnapshot
    g1: GraphSnapshot
    added: frozenset[Edge]
    removed: frozenset[Edge]

    @property
    def delta_edges(self) -> frozenset[tuple[Edge, str]]:
        return frozenset(
            {(e, "added") for e in self.added} | {(e, "removed") for e in self.removed}
        )

    def reversed(self) -> "EvolutionPair":
        return EvolutionPair(g0=self.g1, g1=self.g0, added=self.removed, removed=self.added)


def diff_snapshots(g0: GraphSnapshot, g1: GraphSnapshot) -> EvolutionPair:
    """Tag the symmetric difference of the two edge sets as added/removed."""
    if g0.num_nodes != g1.num_nodes:
        raise IncompatibleSnapshotError(
            f"node universes differ: {g0.num_nodes} vs {g1.num_nodes}"
        )
    if g0.directed != g1.directed:
        raise IncompatibleSnapshotError("directedness differs between snapshots")
    added = g1.edges - g0.edges
    removed = g0.edges - g1.edges
    return EvolutionPair(g0=g0, g1=g1, added=frozenset(added), removed=frozenset(removed))


@dataclass(frozen=True)
class LabelSet:
    """Labels for one task: node/graph ids or node pairs mapped to classes."""

    task: str
    labels: Mapping[int | tuple[int, int], int]

    def __post_init__(self):
        if self.task not in ("node", "link", "graph"):
            raise ValueError(f"unknown task {self.task!r}")


def load_features(path: str | Path) -> np.ndarray:
    """Read the feature file: header ``num_nodes d`` then one row per node."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise DimensionError("empty feature file")
    header = lines[0].split()
    if len(header) != 2:
        raise DimensionError(f"bad feature header {lines[0]!r}")
    n, d = int(header[0]), int(header[1])
    if len(lines) - 1 != n:
        raise DimensionError(f"expected {n} feature rows, got {len(lines) - 1}")
    out = np.zeros((n, d), dtype=np.float64)
    for i, ln in enumerate(lines[1:]):
        row = [float(x) for x in ln.split()]
        if len(row) != d:
            raise DimensionError(f"feature row {i} has {len(row)} values, expected {d}")
        out[i] = row
    return out


def load_labels(path: str | Path, task: str) -> LabelSet:
    """Read ``target_id class`` lines; link targets are written ``u,v``."""
    labels: dict[int | tuple[int, int], int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 2:
                raise EdgeListParseError(line_no, f"expected 'target class', got {body!r}")
            target_str, cls_str = parts
            target: int | tuple[int, int]
            if "," in target_str:
                u, v = target_str.split(",")
                target = (int(u), int(v))
            else:
                target = int(target_str)
            labels[target] = int(cls_str)
    return LabelSet(task=task, labels=labels)


def apply_delta(edges: frozenset[Edge], pair: EvolutionPair) -> frozenset[Edge]:
    """Apply the pair's delta to an edge set (round-trip helper for tests)."""
    return frozenset((edges - pair.removed) | pair.added)
