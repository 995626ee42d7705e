"""Shared numerical primitives: stabilized softmax/log-sum-exp and friends.

These are used by the GNN heads, the KL decomposition, and the convex
selection objective, so they live in one place.
"""
from __future__ import annotations

import math

import numpy as np

# Probabilities below this are clamped before taking logs in diagnostics.
PROB_FLOOR = 1e-300


def log_sum_exp(z: np.ndarray) -> float:
    """log(sum(exp(z))) with max-subtraction for stability."""
    z = np.asarray(z, dtype=np.float64)
    m = float(np.max(z))
    if math.isinf(m):
        return m
    return m + math.log(float(np.sum(np.exp(z - m))))


def softmax(z: np.ndarray) -> np.ndarray:
    """Stabilized softmax. Output is strictly positive and sums to 1."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z))
    return e / e.sum()


def sigmoid(z: float) -> float:
    """Overflow-safe logistic function."""
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def compensated_sum(values) -> float:
    """Exact compensated summation, for oracle-side comparisons."""
    return math.fsum(values)
