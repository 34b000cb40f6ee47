"""Gauss-Laguerre / Gauss-Hermite rules and streamed tensor-product grids.

Nodes are the eigenvalues of the symmetric Jacobi matrix of the three-term
recurrence (Golub-Welsch), polished by one Newton step on the orthonormal
polynomial. Weights come from the Christoffel function
``1 / sum_k p_k(x)^2`` rather than from squared eigenvector components; the
latter lose all relative accuracy for the tiny weights at large Laguerre
nodes, which breaks polynomial exactness at high degree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "QuadratureRule",
    "TensorGrid",
    "gauss_laguerre_rule",
    "gauss_hermite_rule",
    "integrate_gaussian_expectation",
    "tensor_grid",
    "gaussian_nodes",
]

MAX_NODES = 256
MAX_AXES = 6
_RESCALE = 1e100


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.nodes)

    def integrate(self, g) -> float:
        """Sum of ``weights * g(nodes)``, i.e. the integral of g against the weight function."""
        return float(np.dot(self.weights, g(self.nodes)))


def _golub_welsch(diag: np.ndarray, offdiag: np.ndarray, beta_n: float, mu0: float):
    n = len(diag)
    if n == 1:
        x = diag.copy()
    else:
        x = eigh_tridiagonal(diag, offdiag, eigvals_only=True)
    beta = np.concatenate([[0.0], offdiag, [beta_n]])

    def recurrence(x):
        p_prev = np.zeros_like(x)
        p = np.full_like(x, 1.0 / math.sqrt(mu0))
        dp_prev = np.zeros_like(x)
        dp = np.zeros_like(x)
        ssum = p * p
        log_scale = np.zeros_like(x)
        for k in range(n):
            p_next = ((x - diag[k]) * p - beta[k] * p_prev) / beta[k + 1]
            dp_next = (p + (x - diag[k]) * dp - beta[k] * dp_prev) / beta[k + 1]
            p_prev, p, dp_prev, dp = p, p_next, dp, dp_next
            if k < n - 1:
                ssum = ssum + p * p
            big = np.abs(p) > _RESCALE
            if np.any(big):
                f = np.where(big, 1.0 / _RESCALE, 1.0)
                p, p_prev, dp, dp_prev = p * f, p_prev * f, dp * f, dp_prev * f
                ssum = ssum * f * f
                log_scale = log_scale - np.log(f)
        return p, dp, ssum, log_scale

    p_n, dp_n, _, _ = recurrence(x)
    x = x - p_n / dp_n
    _, _, ssum, log_scale = recurrence(x)
    w = np.exp(-(np.log(ssum) + 2.0 * log_scale))
    w = w * (mu0 / w.sum())
    return x, w


def _check_n(n):
    if not (isinstance(n, (int, np.integer)) and 1 <= n <= MAX_NODES):
        raise ValueError(f"node count must be an integer in [1, {MAX_NODES}], got {n!r}")


def gauss_laguerre_rule(n: int) -> QuadratureRule:
    """n-point rule for the weight ``exp(-x)`` on ``(0, inf)``."""
    _check_n(n)
    k = np.arange(n, dtype=float)
    x, w = _golub_welsch(2 * k + 1, k[1:].copy(), float(n), 1.0)
    return QuadratureRule("laguerre", x, w)


def gauss_hermite_rule(n: int) -> QuadratureRule:
    """n-point rule for the weight ``exp(-x^2)`` on the real line."""
    _check_n(n)
    k = np.arange(1, n, dtype=float)
    x, w = _golub_welsch(np.zeros(n), np.sqrt(k / 2), math.sqrt(n / 2), math.sqrt(math.pi))
    # Enforce exact antisymmetry of nodes and symmetry of weights.
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return QuadratureRule("hermite", x, w)


def gaussian_nodes(rule: QuadratureRule, mean=0.0, var=1.0):
    """Nodes and probability weights approximating N(mean, var) with a Hermite rule."""
    if rule.kind != "hermite":
        raise ValueError("Gaussian expectations need a hermite rule")
    x = mean + np.sqrt(2.0 * var) * rule.nodes
    return x, rule.weights / math.sqrt(math.pi)


def integrate_gaussian_expectation(rule: QuadratureRule, mean: float, var: float, integrand) -> float:
    """E[g(X)] for X ~ N(mean, var)."""
    x, w = gaussian_nodes(rule, mean, var)
    return float(np.dot(w, integrand(x)))


@dataclass(frozen=True, eq=False)
class TensorGrid:
    """Tensor product of 1-D rules, iterated lazily in row-major order."""

    rules: tuple

    @property
    def size(self) -> int:
        return math.prod(r.n for r in self.rules)

    @property
    def ndim(self) -> int:
        return len(self.rules)

    def __len__(self):
        return self.size

    def __iter__(self) -> Iterator[tuple[np.ndarray, float]]:
        for idx in itertools.product(*(range(r.n) for r in self.rules)):
            nodes = np.array([r.nodes[i] for r, i in zip(self.rules, idx)])
            weight = math.prod(r.weights[i] for r, i in zip(self.rules, idx))
            yield nodes, weight

    def chunks(self, chunk_size: int = 65536) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Contiguous blocks of ``(nodes[k, d], weights[k])`` in iteration order."""
        shape = tuple(r.n for r in self.rules)
        for start in range(0, self.size, chunk_size):
            flat = np.arange(start, min(start + chunk_size, self.size))
            idx = np.unravel_index(flat, shape)
            nodes = np.column_stack([r.nodes[i] for r, i in zip(self.rules, idx)])
            w = np.ones(len(flat))
            for r, i in zip(self.rules, idx):
                w = w * r.weights[i]
            yield nodes, w

    def integrate(self, g, chunk_size: int = 65536) -> float:
        """Sum of weight products times ``g(nodes)`` (g takes a (k, d) array)."""
        total = 0.0
        for nodes, w in self.chunks(chunk_size):
            total += float(np.dot(w, g(nodes)))
        return total


def tensor_grid(rules: Sequence[QuadratureRule]) -> TensorGrid:
    rules = tuple(rules)
    if not 1 <= len(rules) <= MAX_AXES:
        raise ValueError(f"tensor grids support 1 to {MAX_AXES} axes, got {len(rules)}")
    return TensorGrid(rules)
