# -*- coding: utf-8 -*-
"""
Contains slow reference computations the fast paths are checked against.
"""
from typing import List, Sequence, Tuple

import numpy as np

__all__ = [
    'brute_force_alpha_bar', 'brute_force_sqrtm_trace', 'streaming_moments',
    'forward_chain_moments', 'loop_attention', 'loop_layer_norm'
]


def brute_force_alpha_bar(beta: Sequence[float]) -> List[float]:
    """Every prefix product of (1 - beta) recomputed from scratch, left to right."""
    result = []
    for t in range(len(beta)):
        product = 1.0
        for s in range(t + 1):
            product = product * (1.0 - float(beta[s]))
        result.append(product)
    return result


def brute_force_sqrtm_trace(a: np.ndarray, b: np.ndarray) -> float:
    """Tr((a b)^{1/2}) through LAPACK eigendecompositions."""
    values, vectors = np.linalg.eigh(0.5 * (a + a.T))
    root_a = (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T
    inner = root_a @ b @ root_a
    return float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.T)), 0.0, None))))


def streaming_moments(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Welford's one-row-at-a-time mean and unbiased covariance."""
    features = np.asarray(features, dtype=np.float64)
    mean = np.zeros(features.shape[1])
    m2 = np.zeros((features.shape[1], features.shape[1]))
    for count, row in enumerate(features, start=1):
        delta = row - mean
        mean = mean + delta / count
        m2 = m2 + np.outer(delta, row - mean)
    return mean, m2 / (len(features) - 1)


def forward_chain_moments(x0: float, t: int, beta: Sequence[float]) -> Tuple[float, float]:
    """Mean and variance after t + 1 single forward steps starting at ``x0``."""
    mean, var = float(x0), 0.0
    for s in range(t + 1):
        alpha = 1.0 - float(beta[s])
        mean = np.sqrt(alpha) * mean
        var = alpha * var + float(beta[s])
    return float(mean), var


def loop_layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for index in np.ndindex(x.shape[:-1]):
        row = x[index]
        mean = sum(row) / len(row)
        var = sum((value - mean)**2 for value in row) / len(row)
        out[index] = (row - mean) / np.sqrt(var + eps) * gain + bias
    return out


def loop_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Single-head scaled dot-product attention over [n, d] inputs, one query at a time."""
    n, d = q.shape
    out = np.zeros((n, v.shape[1]))
    for i in range(n):
        scores = [float(q[i] @ k[j]) / np.sqrt(d) for j in range(n)]
        top = max(scores)
        weights = [np.exp(score - top) for score in scores]
        total = sum(weights)
        for j in range(n):
            out[i] += weights[j] / total * v[j]
    return out
