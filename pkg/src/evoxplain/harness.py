"""Target selection, fidelity metrics, and method comparison.

Masking operates in contribution space: disabling a path subtracts its
effective row from g1's task logits, enabling adds it to g0's. This keeps
the metrics well-defined even when the selected subset corresponds to no
realizable input graph.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .attribution import (
    TargetAttribution,
    attribute_for_task,
    gnn_lrp_scores,
    grad_path_scores,
    gradient_field,
    gradient_seed,
)
from .gnn import GnnWeights, LayerActivations, forward, predict_graph, predict_link, predict_node
from .geometry import kl_divergence
from .numerics import softmax
from .paths import DEFAULT_MAX_PATHS, PathCapacityError, enumerate_altered_paths
from .selection import (
    CurveObjective,
    SolverConfig,
    select_topk,
    solve_convex,
    solve_linear,
    top_indices,
)
from .temporal import EvolutionPair

# Budget levels per altered-path-count bin: (low exclusive, high inclusive).
COMPLEXITY_LEVELS: dict[str, tuple[tuple[tuple[int, int | None], tuple[int, ...]], ...]] = {
    "node": (
        ((10, 100), (1, 2, 3, 4, 5)),
        ((100, 500), (6, 7, 8, 9, 10)),
        ((500, 1000), (10, 11, 12, 13, 14)),
        ((1000, None), (15, 16, 17, 18, 19)),
    ),
    "link": (
        ((10, 100), (1, 2, 3, 4, 5)),
        ((100, 500), (10, 12, 14, 16, 18)),
        ((500, 1000), (10, 20, 30, 40, 50)),
        ((1000, None), (60, 70, 80, 90, 100)),
    ),
    "graph": (
        ((10, 100), (1, 2, 3, 4, 5)),
        ((100, 500), (3, 4, 5, 6, 7)),
        ((500, 1000), (6, 7, 8, 9, 10)),
        ((1000, None), (10, 11, 12, 13, 14)),
    ),
}

METHOD_NAMES = ("convex", "linear", "topk", "deeplift", "gnn_lrp", "gradient")

MIN_ALTERED_PATHS = 10


def budget_levels(
    task: str,
    m: int,
    table: dict[str, tuple] | None = None,
) -> tuple[int, ...] | None:
    """The n values for a target with m altered paths, or None below the
    smallest bin (such targets are not evaluated)."""
    table = table if table is not None else COMPLEXITY_LEVELS
    for (low, high), levels in table[task]:
        if m > low and (high is None or m <= high):
            return tuple(levels)
    return None


@dataclass(frozen=True)
class TargetInstance:
    task: str
    target: int | tuple[int, int]
    pair_index: int
    m: int
    base_kl: float

    @property
    def key(self) -> str:
        if self.task == "node":
            t = f"n{self.target}"
        elif self.task == "link":
            t = f"l{self.target[0]}-{self.target[1]}"
        else:
            t = "g"
        return f"p{self.pair_index}:{t}"


@dataclass(frozen=True)
class EvalRecord:
    target: str
    task: str
    m: int
    method: str
    n: int
    level: int
    kl_plus: float
    kl_minus: float
    wall_ms: float


def task_distributions(
    pair: EvolutionPair,
    weights: GnnWeights,
    task: str,
    target,
    acts0: LayerActivations,
    acts1: LayerActivations,
) -> tuple[np.ndarray, np.ndarray]:
    if task == "node":
        return predict_node(acts0, target), predict_node(acts1, target)
    if task == "link":
        i, j = target
        return (
            predict_link(acts0, i, j, weights.head),
            predict_link(acts1, i, j, weights.head),
        )
    if task == "graph":
        return predict_graph(acts0, weights.head), predict_graph(acts1, weights.head)
    raise ValueError(f"unknown task {task!r}")


def altered_path_count(
    pair: EvolutionPair, depth: int, task: str, target, max_paths: int = DEFAULT_MAX_PATHS
) -> int:
    if task == "node":
        return enumerate_altered_paths(pair, target, depth, max_paths).m
    if task == "link":
        i, j = target
        mi = enumerate_altered_paths(pair, i, depth, max_paths).m
        return mi + enumerate_altered_paths(pair, j, depth, max_paths - mi).m
    if task == "graph":
        total = 0
        for root in range(pair.g0.num_nodes):
            total += enumerate_altered_paths(pair, root, depth, max_paths - total).m
        return total
    raise ValueError(f"unknown task {task!r}")


def select_targets(
    pairs: list[EvolutionPair],
    weights: GnnWeights,
    task: str,
    threshold: float = 0.001,
    candidates: list | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
    levels_table: dict | None = None,
) -> list[TargetInstance]:
    """Targets whose base divergence KL(Pr(g1) || Pr(g0)) clears the threshold
    and whose altered-path count lands in an evaluated bin."""
    out: list[TargetInstance] = []
    for idx, pair in enumerate(pairs):
        acts0 = forward(pair.g0, weights)
        acts1 = forward(pair.g1, weights)
        if candidates is not None:
            cand = candidates[idx]
        elif task == "node":
            cand = tuple(range(pair.g0.num_nodes))
        elif task == "graph":
            cand = (0,)
        else:
            raise ValueError("link task requires explicit candidate pairs")
        for target in cand:
            p0, p1 = task_distributions(pair, weights, task, target, acts0, acts1)
            base = kl_divergence(p1, p0)
            if base <= threshold:
                continue
            try:
                m = altered_path_count(pair, weights.depth, task, target, max_paths)
            except PathCapacityError:
                continue
            if m <= MIN_ALTERED_PATHS:
                continue
            if budget_levels(task, m, levels_table) is None:
                continue
            out.append(
                TargetInstance(task=task, target=target, pair_index=idx, m=m, base_kl=base)
            )
    out.sort(key=lambda t: (t.pair_index, t.key))
    return out


# ---------------------------------------------------------------------------
# Fidelity metrics.
# ---------------------------------------------------------------------------


def masked_distribution(ta: TargetAttribution, selected, direction: str) -> np.ndarray:
    """Distribution after disabling the selected paths on g1's computation or
    enabling them on g0's, in contribution space."""
    idx = list(selected)
    rows = ta.eff[idx].sum(axis=0) if idx else np.zeros_like(ta.base0)
    if direction == "disable_on_g1":
        return softmax(ta.base1 - rows)
    if direction == "enable_on_g0":
        return softmax(ta.base0 + rows)
    raise ValueError(f"unknown direction {direction!r}")


def compute_kl_plus(ta: TargetAttribution, selected) -> float:
    """KL(Pr(g0) || Pr with the selected paths disabled on g1)."""
    return kl_divergence(ta.dist0(), masked_distribution(ta, selected, "disable_on_g1"))


def compute_kl_minus(ta: TargetAttribution, selected) -> float:
    """KL(Pr(g1) || Pr with the selected paths enabled on g0)."""
    return kl_divergence(ta.dist1(), masked_distribution(ta, selected, "enable_on_g0"))


# ---------------------------------------------------------------------------
# Per-method path ranking.
# ---------------------------------------------------------------------------


def _class_contributions(ta: TargetAttribution) -> np.ndarray:
    """Per-path contributions to the task's class logits, used for the
    class-change ranking rule. Binary tasks use the signed log-odds view so
    both classes rank meaningfully."""
    if ta.task == "link":
        w = ta.eff[:, 1]
        return np.column_stack([-w, w])
    return ta.eff


def deeplift_scores(ta: TargetAttribution) -> np.ndarray:
    """Contribution toward the new predicted class minus the original one;
    the same class's contribution when the prediction did not change."""
    ccm = _class_contributions(ta)
    j0 = int(np.argmax(ta.dist0()))
    j1 = int(np.argmax(ta.dist1()))
    if j1 != j0:
        return ccm[:, j1] - ccm[:, j0]
    return ccm[:, j1]


def lrp_scores(
    pair: EvolutionPair,
    weights: GnnWeights,
    ta: TargetAttribution,
    acts0: LayerActivations,
    acts1: LayerActivations,
) -> np.ndarray:
    """Static-graph LRP relevances differenced across snapshots: an altered
    path scores its own snapshot's relevance (negated for removals)."""
    rel = np.zeros((ta.m, weights.num_classes))
    groups: dict[tuple[int, str], list[int]] = {}
    for i, (p, root) in enumerate(zip(ta.paths, ta.roots)):
        groups.setdefault((root, p.kind), []).append(i)
    for (root, kind), rows in sorted(groups.items()):
        g = pair.g1 if kind == "added" else pair.g0
        acts = acts1 if kind == "added" else acts0
        walks = [ta.paths[i].nodes for i in rows]
        _, scores = gnn_lrp_scores(g, weights, root, acts=acts, walks=walks)
        sign = 1.0 if kind == "added" else -1.0
        for local, i in enumerate(rows):
            rel[i] = sign * scores[local]
    j1 = int(np.argmax(ta.dist1()))
    if ta.task == "node":
        return rel[:, j1]
    if ta.task == "link":
        head = weights.head.reshape(-1)
        c = weights.num_classes
        out = np.zeros(ta.m)
        for i, root in enumerate(ta.roots):
            half = head[:c] if (ta.split is not None and i < ta.split) else head[c:]
            out[i] = rel[i] @ half
        return out
    pooled = (rel / pair.g0.num_nodes) @ weights.head
    return pooled[:, j1]


def gradient_scores(
    pair: EvolutionPair,
    weights: GnnWeights,
    ta: TargetAttribution,
    acts0: LayerActivations,
    acts1: LayerActivations,
) -> np.ndarray:
    j0 = int(np.argmax(ta.dist0()))
    j1 = int(np.argmax(ta.dist1()))
    seed0 = gradient_seed(ta.task, weights, pair.g0, ta.target, j0)
    seed1 = gradient_seed(ta.task, weights, pair.g1, ta.target, j1)
    field0 = gradient_field(pair.g0, weights, acts0, seed0)
    field1 = gradient_field(pair.g1, weights, acts1, seed1)
    return grad_path_scores(pair, weights, ta.paths, field0, field1)


@dataclass
class TargetEvaluation:
    """All per-target context shared across methods and budgets."""

    ta: TargetAttribution
    objective: CurveObjective
    pair: EvolutionPair
    weights: GnnWeights
    acts0: LayerActivations
    acts1: LayerActivations
    _score_cache: dict = None  # type: ignore[assignment]

    def __post_init__(self):
        self._score_cache = {}

    def select(self, method: str, n: int, solver_cfg: SolverConfig) -> tuple[int, ...]:
        ta = self.ta
        if method == "convex":
            result = solve_convex(self.objective, n, solver_cfg)
            return top_indices(result.x, n)
        if method == "linear":
            return top_indices(solve_linear(self.objective, n).x, n)
        if method == "topk":
            return select_topk(ta.raw, n).indices
        if method == "deeplift":
            if "deeplift" not in self._score_cache:
                self._score_cache["deeplift"] = deeplift_scores(ta)
            return top_indices(self._score_cache["deeplift"], n)
        if method == "gnn_lrp":
            if "gnn_lrp" not in self._score_cache:
                self._score_cache["gnn_lrp"] = np.abs(
                    lrp_scores(self.pair, self.weights, ta, self.acts0, self.acts1)
                )
            return top_indices(self._score_cache["gnn_lrp"], n)
        if method == "gradient":
            if "gradient" not in self._score_cache:
                self._score_cache["gradient"] = np.abs(
                    gradient_scores(self.pair, self.weights, ta, self.acts0, self.acts1)
                )
            return top_indices(self._score_cache["gradient"], n)
        raise ValueError(f"unknown method {method!r}")


def evaluate_target(
    pair: EvolutionPair,
    weights: GnnWeights,
    instance: TargetInstance,
    methods: tuple[str, ...] = METHOD_NAMES,
    solver_cfg: SolverConfig = SolverConfig(),
    levels_table: dict | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> list[EvalRecord]:
    """Every (method, budget) record for one target."""
    acts0 = forward(pair.g0, weights)
    acts1 = forward(pair.g1, weights)
    ta = attribute_for_task(pair, weights, instance.task, instance.target, acts0, acts1, max_paths)
    levels = budget_levels(instance.task, ta.m, levels_table)
    if levels is None:
        raise ValueError(f"target {instance.key} has no budget bin (m={ta.m})")
    ctx = TargetEvaluation(
        ta=ta, objective=CurveObjective.from_attribution(ta), pair=pair,
        weights=weights, acts0=acts0, acts1=acts1,
    )
    records: list[EvalRecord] = []
    for method in methods:
        for level_idx, n in enumerate(levels, start=1):
            n_eff = min(n, ta.m)
            start = time.perf_counter()
            selected = ctx.select(method, n_eff, solver_cfg)
            wall_ms = (time.perf_counter() - start) * 1e3
            records.append(
                EvalRecord(
                    target=instance.key,
                    task=instance.task,
                    m=ta.m,
                    method=method,
                    n=n_eff,
                    level=level_idx,
                    kl_plus=compute_kl_plus(ta, selected),
                    kl_minus=compute_kl_minus(ta, selected),
                    wall_ms=wall_ms,
                )
            )
    return records


def _evaluate_target_job(args) -> tuple[str, list[EvalRecord], str | None]:
    pair, weights, instance, methods, solver_cfg, levels_table, max_paths = args
    try:
        recs = evaluate_target(pair, weights, instance, methods, solver_cfg, levels_table, max_paths)
        return instance.key, recs, None
    except Exception as exc:  # per-target failures are recorded, the run continues
        return instance.key, [], f"{type(exc).__name__}: {exc}"


def run_comparison(
    targets: list[TargetInstance],
    pairs: list[EvolutionPair],
    weights: GnnWeights,
    methods: tuple[str, ...] = METHOD_NAMES,
    solver_cfg: SolverConfig = SolverConfig(),
    levels_table: dict | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
    workers: int = 1,
) -> tuple[list[EvalRecord], list[tuple[str, str]]]:
    """Evaluate every method at every budget level for every target.

    Targets are independent; results are merged in target order so the
    output is identical for any worker count.
    """
    jobs = [
        (pairs[t.pair_index], weights, t, tuple(methods), solver_cfg, levels_table, max_paths)
        for t in targets
    ]
    results: list[tuple[str, list[EvalRecord], str | None]] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_target_job, jobs))
    else:
        results = [_evaluate_target_job(j) for j in jobs]
    records: list[EvalRecord] = []
    failures: list[tuple[str, str]] = []
    for key, recs, err in results:
        if err is not None:
            failures.append((key, err))
        else:
            records.extend(recs)
    return records, failures


def redact_timings(records: list[EvalRecord]) -> list[EvalRecord]:
    """Copies with wall_ms zeroed, for byte-identical report contracts."""
    return [replace(r, wall_ms=0.0) for r in records]
