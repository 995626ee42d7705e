"""Information-geometric layer: KL divergence, its decomposition over path
contributions, and the Fisher metric in contribution coordinates.

The class distribution is an exponential family in the assembled logits
z_j = z_j(G*) + sum_p C_{p,j}, so KL between two points decomposes into an
expectation of contribution differences plus two cumulants, and the local
curvature is carried entirely by the logit-space Fisher matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import PROB_FLOOR, log_sum_exp, softmax

# Dense Fisher materialization is only for diagnostics; beyond this many
# coordinates only the quadratic form is offered.
DENSE_FISHER_LIMIT = 2_000


class MetricError(ValueError):
    """Raised when a KL divergence is infinite (zero q mass where p > 0)."""


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum_j p_j log(p_j / q_j); zero-p terms contribute nothing.

    Probabilities are clamped at a tiny floor before the logs; an exact zero
    in q opposite positive p mass is flagged instead of returning inf.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    support = p > 0.0
    if np.any(q[support] == 0.0):
        raise MetricError("KL divergence is infinite: q has zero mass on p's support")
    ps = p[support]
    qs = q[support]
    return float(np.sum(ps * (np.log(np.maximum(ps, PROB_FLOOR)) - np.log(np.maximum(qs, PROB_FLOOR)))))


@dataclass(frozen=True)
class ReparamLogits:
    """Base logits plus a contribution matrix; assembles the snapshot's logits."""

    base: np.ndarray
    contributions: np.ndarray

    @property
    def logits(self) -> np.ndarray:
        return self.base + self.contributions.sum(axis=0)

    @property
    def distribution(self) -> np.ndarray:
        return softmax(self.logits)


def kl_decomposed(c0: np.ndarray, c1: np.ndarray, z_star: np.ndarray) -> float:
    """KL(Pr(z*+1'C1) || Pr(z*+1'C0)) written in contribution coordinates:
    expected contribution difference minus the two cumulants."""
    c0 = np.asarray(c0, dtype=np.float64)
    c1 = np.asarray(c1, dtype=np.float64)
    z_star = np.asarray(z_star, dtype=np.float64)
    s0 = c0.sum(axis=0) if c0.size else np.zeros_like(z_star)
    s1 = c1.sum(axis=0) if c1.size else np.zeros_like(z_star)
    z1 = z_star + s1
    z0 = z_star + s0
    pi1 = softmax(z1)
    return float(pi1 @ (s1 - s0)) - log_sum_exp(z1) + log_sum_exp(z0)


@dataclass(frozen=True)
class FisherMatrix:
    """Fisher information of the distribution w.r.t. vec(C), factored.

    The Jacobian of the logits w.r.t. vec(C) assigns each (path, class)
    coordinate to its class logit, so the full (mc x mc) matrix is the
    logit-space Fisher expanded over path blocks. vec() stacks columns.
    """

    m: int
    logit_fisher: np.ndarray  # (c, c) = diag(pi) - pi pi'

    def __post_init__(self):
        self.logit_fisher.setflags(write=False)

    @property
    def c(self) -> int:
        return self.logit_fisher.shape[0]

    @property
    def size(self) -> int:
        return self.m * self.c

    def quadratic_form(self, delta: np.ndarray) -> float:
        """delta' I delta for a (m, c) matrix or a column-stacked (mc,) vector."""
        delta = np.asarray(delta, dtype=np.float64)
        if delta.ndim == 1:
            delta = delta.reshape((self.m, self.c), order="F")
        u = delta.sum(axis=0)
        return float(u @ self.logit_fisher @ u)

    def dense(self) -> np.ndarray:
        if self.size > DENSE_FISHER_LIMIT:
            raise ValueError(
                f"dense Fisher of size {self.size} exceeds limit {DENSE_FISHER_LIMIT}; "
                "use quadratic_form"
            )
        return np.kron(self.logit_fisher, np.ones((self.m, self.m)))


def fisher_information(contributions: np.ndarray, z1: np.ndarray) -> FisherMatrix:
    """Fisher matrix at the distribution softmax(z1), in contribution coordinates."""
    contributions = np.asarray(contributions, dtype=np.float64)
    pi = softmax(z1)
    logit_fisher = np.diag(pi) - np.outer(pi, pi)
    return FisherMatrix(m=contributions.shape[0], logit_fisher=logit_fisher)


def quadratic_kl_approx(fisher: FisherMatrix, delta: np.ndarray) -> float:
    """Second-order KL approximation 0.5 * delta' I delta."""
    return 0.5 * fisher.quadratic_form(delta)
