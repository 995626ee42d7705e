"""Curve selection: the convex program, its linear relaxation, and top-k.

All three tasks reduce to the same shape: curve logits are an affine map of
the path weights x, the objective is the target-expected logit shortfall
plus a log-sum-exp cumulant, and the feasible set is the box-capped simplex
{x in [0,1]^m, sum(x) = n}. The solver is projected gradient descent with
Armijo backtracking and a KKT certificate via the natural residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attribution import TargetAttribution
from .numerics import log_sum_exp, softmax


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 2000
    objective_tol: float = 1e-8
    kkt_tol: float = 1e-5
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    keep_trace: bool = False


@dataclass(frozen=True)
class CurveObjective:
    """Convex selection objective for one target.

    ``gains`` maps path weights to task logits: logits(x) = base + gains' x.
    The value drops the target cumulant (a constant), so it equals the KL to
    the target distribution plus log Z(target).
    """

    base: np.ndarray
    target_logits: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        self.base.setflags(write=False)
        self.target_logits.setflags(write=False)
        self.gains.setflags(write=False)

    @property
    def m(self) -> int:
        return self.gains.shape[0]

    @property
    def target_dist(self) -> np.ndarray:
        return softmax(self.target_logits)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.base + self.gains.T @ x

    def value(self, x: np.ndarray) -> float:
        ell = self.logits(x)
        pi1 = self.target_dist
        return float(pi1 @ (self.target_logits - ell)) + log_sum_exp(ell)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        ell = self.logits(x)
        return self.gains @ (softmax(ell) - self.target_dist)

    def kl_to_target(self, x: np.ndarray) -> float:
        """KL(target || curve point): the value with the dropped constant re-added."""
        return self.value(x) - log_sum_exp(self.target_logits)

    @staticmethod
    def from_attribution(ta: TargetAttribution) -> "CurveObjective":
        return CurveObjective(
            base=ta.base0.copy(), target_logits=ta.base1.copy(), gains=ta.eff.copy()
        )


def objective_node(
    x: np.ndarray,
    c0: np.ndarray,
    delta_c: np.ndarray,
    z_star: np.ndarray,
    target_dist: np.ndarray,
) -> float:
    """Node-task objective in raw contribution terms (c0 + delta_c*x coordinates)."""
    x = np.asarray(x, dtype=np.float64)
    s_full = (c0 + delta_c).sum(axis=0)
    s_x = (c0 + delta_c * x[:, None]).sum(axis=0)
    target_dist = np.asarray(target_dist, dtype=np.float64)
    return float(target_dist @ (s_full - s_x)) + log_sum_exp(z_star + s_x)


def project_box_capped_simplex(y: np.ndarray, n: float, tol: float = 1e-12) -> np.ndarray:
    """Euclidean projection onto {x in [0,1]^m : sum(x) = n}.

    Bisection on the shift in x = clip(y - shift, 0, 1); the clipped sum is
    non-increasing and continuous in the shift.
    """
    y = np.asarray(y, dtype=np.float64)
    m = y.size
    if not 0 <= n <= m:
        raise ValueError(f"budget {n} outside [0, {m}]")
    if n == m:
        return np.ones(m)
    if n == 0:
        return np.zeros(m)
    lo = float(y.min()) - 1.0
    hi = float(y.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = float(np.clip(y - mid, 0.0, 1.0).sum())
        if abs(s - n) <= tol:
            lo = hi = mid
            break
        if s > n:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-18 * max(1.0, abs(hi)):
            break
    return np.clip(y - 0.5 * (lo + hi), 0.0, 1.0)


@dataclass(frozen=True)
class SolverResult:
    x: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool
    trace: tuple[tuple[int, float, float, float], ...] = field(default=())

    def __post_init__(self):
        self.x.setflags(write=False)


@dataclass(frozen=True)
class SelectedPaths:
    """The rounded explanation: indices of the n largest curve weights."""

    indices: tuple[int, ...]
    objective: float | None
    iterations: int
    kkt_residual: float
    converged: bool


def top_indices(scores: np.ndarray, n: int) -> tuple[int, ...]:
    """Indices of the n largest scores; ties broken by path order."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return tuple(int(i) for i in order[:n])


def solve_convex(obj: CurveObjective, n: int, cfg: SolverConfig = SolverConfig()) -> SolverResult:
    """Projected gradient descent on the box-capped simplex.

    Monotone by Armijo backtracking; stops when the natural-map residual
    certifies KKT, when the objective stalls, or at max_iter.
    """
    m = obj.m
    if n > m:
        raise ValueError(f"budget {n} exceeds path count {m}")
    x = np.full(m, n / m, dtype=np.float64)
    f = obj.value(x)
    step = 1.0
    trace: list[tuple[int, float, float, float]] = []
    residual = math.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        g = obj.gradient(x)
        residual = float(np.linalg.norm(x - project_box_capped_simplex(x - g, n)))
        if cfg.keep_trace:
            trace.append((it - 1, f, step, residual))
        if residual <= cfg.kkt_tol * (1.0 + float(np.linalg.norm(g))):
            converged = True
            break
        step = min(step * 2.0, 1e8)
        while True:
            xt = project_box_capped_simplex(x - step * g, n)
            ft = obj.value(xt)
            if ft <= f + cfg.armijo_c * float(g @ (xt - x)) or step <= 1e-18:
                break
            step *= cfg.backtrack
        decrease = f - ft
        x, f = xt, ft
        if decrease <= cfg.objective_tol:
            g = obj.gradient(x)
            residual = float(np.linalg.norm(x - project_box_capped_simplex(x - g, n)))
            converged = residual <= cfg.kkt_tol * (1.0 + float(np.linalg.norm(g)))
            break
    return SolverResult(
        x=x,
        objective=f,
        iterations=it,
        kkt_residual=residual,
        converged=converged,
        trace=tuple(trace),
    )


def solve_convex_for_target(
    ta: TargetAttribution, n: int, cfg: SolverConfig = SolverConfig()
) -> SolverResult:
    return solve_convex(CurveObjective.from_attribution(ta), n, cfg)


# The link and graph programs are the same solver over the task-assembled
# gains: the link variable is the concatenation [x; x'] with the joint
# budget, and the graph variable spans every root's altered paths.
solve_convex_link = solve_convex_for_target
solve_convex_graph = solve_convex_for_target


def solve_linear(obj: CurveObjective, n: int) -> SolverResult:
    """The objective without the log term is linear, so the optimum is the
    greedy vertex: the n best coefficients at 1 (ties by path order)."""
    coef = obj.gains @ obj.target_dist
    idx = top_indices(coef, n)
    x = np.zeros(obj.m)
    x[list(idx)] = 1.0
    return SolverResult(
        x=x,
        objective=obj.value(x),
        iterations=0,
        kkt_residual=0.0,
        converged=True,
    )


def select_topk(raw_contributions: np.ndarray, n: int) -> SelectedPaths:
    """Rank paths by the all-classes row sum of the raw contribution matrix."""
    sums = np.asarray(raw_contributions, dtype=np.float64).sum(axis=1)
    return SelectedPaths(
        indices=top_indices(sums, n),
        objective=None,
        iterations=0,
        kkt_residual=0.0,
        converged=True,
    )


def select_from_result(result: SolverResult, n: int, obj: CurveObjective | None = None) -> SelectedPaths:
    idx = top_indices(result.x, n)
    return SelectedPaths(
        indices=idx,
        objective=result.objective,
        iterations=result.iterations,
        kkt_residual=result.kkt_residual,
        converged=result.converged,
    )


def solver_trace_csv(result: SolverResult) -> str:
    lines = ["iter,objective,step,kkt_residual"]
    for it, obj_val, step, res in result.trace:
        lines.append(f"{it},{format(obj_val, '.17g')},{format(step, '.17g')},{format(res, '.17g')}")
    return "\n".join(lines) + "\n"
