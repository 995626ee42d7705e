"""Enumerate altered computation paths between two snapshots.

A path is a leaf-to-root node sequence of length T+1 on the depth-T
computation tree of a target node. Added-kind paths are walks of g1
touching at least one added edge; removed-kind paths are walks of g0
touching at least one removed edge. A walk mixing both kinds is not a
valid walk of either snapshot, so the enumeration excludes it
structurally.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .temporal import Edge, EvolutionPair, GraphSnapshot, _canonical

DEFAULT_MAX_PATHS = 200_000


class PathCapacityError(RuntimeError):
    """Raised when a target's altered-path count exceeds the configured cap."""


@dataclass(frozen=True)
class Path:
    """Node sequence from leaf (index 0) to root (index T), with its kind and
    the cut layer: the highest layer whose step edge is altered."""

    nodes: tuple[int, ...]
    kind: str
    t_bar: int

    @property
    def depth(self) -> int:
        return len(self.nodes) - 1

    def steps(self):
        """(layer, u, v) triples: the arc used at each layer, 1-based."""
        for t in range(1, len(self.nodes)):
            yield t, self.nodes[t - 1], self.nodes[t]


@dataclass(frozen=True)
class AlteredPathSet:
    root: int
    depth: int
    paths: tuple[Path, ...]

    @property
    def m(self) -> int:
        return len(self.paths)


def _cut_layer(nodes: tuple[int, ...], altered: frozenset[Edge], directed: bool) -> int:
    t_bar = 0
    for t in range(1, len(nodes)):
        if _canonical(nodes[t - 1], nodes[t], directed) in altered:
            t_bar = t
    return t_bar


def _distance_to_altered(g: GraphSnapshot, altered: frozenset[Edge]) -> list[int]:
    """Multi-source BFS distance from any altered arc's head, along message arcs.

    A node v with distance d can be reached from an altered edge in d steps,
    so any altered walk segment ending at v needs at least d+1 steps. Used as
    a conservative prune; never excludes a reachable altered walk.
    """
    inf = g.num_nodes + 1
    dist = [inf] * g.num_nodes
    q: deque[int] = deque()
    for u, v in altered:
        for head in ((v,) if g.directed else (u, v)):
            if dist[head] != 0:
                dist[head] = 0
                q.append(head)
    if g.directed:
        out: list[list[int]] = [[] for _ in range(g.num_nodes)]
        for w in range(g.num_nodes):
            for u in g.in_neighbors(w):
                out[u].append(w)
    else:
        out = [list(g.in_neighbors(v)) for v in range(g.num_nodes)]
    while q:
        v = q.popleft()
        for w in out[v]:
            if dist[w] > dist[v] + 1:
                dist[w] = dist[v] + 1
                q.append(w)
    return dist


def _walks_touching(
    g: GraphSnapshot,
    altered: frozenset[Edge],
    root: int,
    depth: int,
    kind: str,
    budget: list[int],
) -> list[Path]:
    """Reverse DFS from the root emitting every depth-T walk with an altered step."""
    if not altered:
        return []
    dist = _distance_to_altered(g, altered)
    out: list[Path] = []
    trail = [root]

    def descend(v: int, remaining: int, used: bool) -> None:
        if remaining == 0:
            if used:
                budget[0] -= 1
                if budget[0] < 0:
                    raise PathCapacityError(
                        f"altered-path count exceeds max_paths at root {root}"
                    )
                nodes = tuple(reversed(trail))
                out.append(Path(nodes=nodes, kind=kind, t_bar=_cut_layer(nodes, altered, g.directed)))
            return
        for u in g.in_neighbors(v):
            step_altered = _canonical(u, v, g.directed) in altered
            now_used = used or step_altered
            if not now_used and dist[u] > remaining - 2:
                continue
            trail.append(u)
            descend(u, remaining - 1, now_used)
            trail.pop()

    descend(root, depth, False)
    return out


def enumerate_altered_paths(
    pair: EvolutionPair,
    root: int,
    depth: int,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> AlteredPathSet:
    """All depth-T walks rooted at ``root`` with at least one altered edge.

    Ordering is deterministic: lexicographic by node sequence, then kind.
    Raises PathCapacityError when the count exceeds ``max_paths``.
    """
    if not (0 <= root < pair.g0.num_nodes):
        raise ValueError(f"root {root} outside node range")
    budget = [max_paths]
    paths = _walks_touching(pair.g1, pair.added, root, depth, "added", budget)
    paths += _walks_touching(pair.g0, pair.removed, root, depth, "removed", budget)
    paths.sort(key=lambda p: (p.nodes, p.kind))
    return AlteredPathSet(root=root, depth=depth, paths=tuple(paths))


def classify_walk(pair: EvolutionPair, nodes: tuple[int, ...]) -> str | None:
    """Kind of a candidate node sequence, or None when it is not an altered
    walk of exactly one snapshot (the mixed-edge reduction)."""
    def valid_on(g: GraphSnapshot) -> bool:
        return all(g.has_arc(u, v) for _, u, v in Path(nodes, "added", 1).steps())

    def touches(altered: frozenset[Edge], directed: bool) -> bool:
        return any(
            _canonical(u, v, directed) in altered
            for _, u, v in Path(nodes, "added", 1).steps()
        )

    if valid_on(pair.g1) and touches(pair.added, pair.g1.directed):
        return "added"
    if valid_on(pair.g0) and touches(pair.removed, pair.g0.directed):
        return "removed"
    return None


def group_by_suffix(path_set: AlteredPathSet) -> dict[int, dict[tuple[int, ...], list[int]]]:
    """Partition path indices by their suffix p[t..T] at every layer t.

    Paths sharing a suffix share the multiplier chain above layer t; the
    attribution memo keys off these groups.
    """
    index: dict[int, dict[tuple[int, ...], list[int]]] = {}
    for t in range(path_set.depth + 1):
        groups: dict[tuple[int, ...], list[int]] = {}
        for i, p in enumerate(path_set.paths):
            groups.setdefault(p.nodes[t:], []).append(i)
        index[t] = groups
    return index


def dump_paths(path_set: AlteredPathSet) -> str:
    """One line per path: ``kind t_bar n0,n1,...,nT`` (debug golden format)."""
    lines = [
        f"{p.kind} {p.t_bar} {','.join(str(n) for n in p.nodes)}"
        for p in path_set.paths
    ]
    return "\n".join(lines) + ("\n" if lines else "")
