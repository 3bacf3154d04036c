"""Mixing matrices, edge penalty weights and their spectral diagnostics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .topology import Graph, regularity

TOL = 1e-12


class NotRegularError(ValueError):
    pass


@dataclass(frozen=True)
class MixingMatrix:
    w: np.ndarray

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class AlphaWeights:
    """One nonnegative penalty per undirected edge, so alpha_{i|j} = alpha_{j|i}."""

    n: int
    values: dict

    def __post_init__(self):
        for e, a in self.values.items():
            if a < 0:
                raise ValueError(f"negative alpha {a} on edge {e}")

    @classmethod
    def uniform(cls, g: Graph, value: float) -> "AlphaWeights":
        return cls(g.n, {e: float(value) for e in g.edges})

    @classmethod
    def zeros(cls, g: Graph) -> "AlphaWeights":
        return cls.uniform(g, 0.0)

    def matrix(self) -> np.ndarray:
        """D with D[i, j] = alpha_{i|j} on edges and 0 elsewhere."""
        d = np.zeros((self.n, self.n))
        for (i, j), a in self.values.items():
            d[i, j] = d[j, i] = a
        return d

    def row_sums(self) -> np.ndarray:
        return self.matrix().sum(axis=1)


def alpha_matrix(a) -> np.ndarray:
    """Directed penalty matrix from AlphaWeights or an n x n array.

    Raw arrays are accepted as-is so that deliberately asymmetric weights
    can be fed to the algorithms.
    """
    if isinstance(a, AlphaWeights):
        return a.matrix()
    return np.asarray(a, dtype=float)


def metropolis(g: Graph) -> MixingMatrix:
    if not g.is_connected():
        warnings.warn("graph is disconnected; mixing matrix will have zero spectral gap")
    degs = g.degrees()
    w = np.zeros((g.n, g.n))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (max(degs[i], degs[j]) + 1)
    for i in range(g.n):
        w[i, i] = 1.0 - np.sum(w[i])
    return MixingMatrix(w)


def alpha_induced(g: Graph, a, eta: float):
    """Gossip weights and per-node step sizes implied by ECL's (eta, alpha).

    Returns ``(W, eta_prime)``. Rows of W always sum to one; W is symmetric
    only when every node has the same alpha row sum.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    d = alpha_matrix(a)
    s = d.sum(axis=1)
    denom = 1.0 + eta * s
    w = eta * d / (2.0 * denom[:, None])
    w[np.diag_indices(g.n)] = (2.0 + eta * s) / (2.0 * denom)
    return w, eta / denom


def example1_alpha(g: Graph, alpha_total: float) -> AlphaWeights:
    k = regularity(g)
    if k is None or k == 0:
        raise NotRegularError("equal per-edge alpha needs a k-regular graph with k > 0")
    return AlphaWeights.uniform(g, alpha_total / k)


def spectral_gap(w) -> float:
    """p = 1 - rho^2, rho the largest |eigenvalue| of W off the consensus direction."""
    w = np.asarray(getattr(w, "w", w), dtype=float)
    n = w.shape[0]
    if n == 1:
        return 1.0
    ev = np.linalg.eigvalsh(w - np.full((n, n), 1.0 / n))
    rho = float(np.max(np.abs(ev)))
    return float(min(1.0, max(0.0, 1.0 - rho * rho)))


def frobenius_consts(w, a) -> tuple[float, float]:
    """(b', b) = (||W - I||_F^2, ||(D - E) / 2||_F^2)."""
    w = np.asarray(getattr(w, "w", w), dtype=float)
    d = alpha_matrix(a)
    e = np.diag(d.sum(axis=0))
    b_prime = float(np.sum((w - np.eye(w.shape[0])) ** 2))
    b = float(np.sum((0.5 * (d - e)) ** 2))
    return b_prime, b


def validate_mixing(w, tol: float = TOL) -> dict:
    w = np.asarray(getattr(w, "w", w), dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("mixing matrix must be square")
    sym = float(np.max(np.abs(w - w.T)))
    rows = float(np.max(np.abs(w.sum(axis=1) - 1.0)))
    cols = float(np.max(np.abs(w.sum(axis=0) - 1.0)))
    below = float(max(0.0, -w.min()))
    above = float(max(0.0, w.max() - 1.0))
    return {
        "symmetric": sym <= tol,
        "doubly_stochastic": max(rows, cols) <= tol,
        "nonneg": max(below, above) <= tol,
        "max_violation": max(sym, rows, cols, below, above),
    }


def parse_mixing(spec: str, g: Graph, eta: float | None = None) -> np.ndarray:
    """Mixing matrix from ``metropolis`` or ``alpha:<alpha_total>``.

    The alpha form needs the ECL step ``eta`` that fixes the induced weights.
    """
    name, _, arg = spec.strip().partition(":")
    if name == "metropolis":
        return metropolis(g).w
    if name == "alpha":
        if eta is None:
            raise ValueError("mixing 'alpha:<alpha_total>' needs eta")
        w, _ = alpha_induced(g, example1_alpha(g, float(arg)), eta)
        return w
    raise ValueError(f"unknown mixing scheme {spec!r}")
