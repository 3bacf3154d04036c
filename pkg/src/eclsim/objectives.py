"""Local objectives, the additive-Gaussian gradient oracle and error metrics.

Randomness comes from numpy's Philox counter-based generator. A draw is
addressed by a key (seed, stream tag) and a counter derived from the round, so
the noise seen by node i at round r never depends on how many other draws
happened before it. Noise is drawn in blocks of NOISE_BLOCK rounds; block b
is keyed by counter b, so eps(seed, i, r) is still a pure function of its
arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RNG_NAME = ("numpy.random.Philox(key=[seed, tag], counter[2]=round // 64) + "
            "Generator.standard_normal, 64 rounds per block")
NOISE_BLOCK = 64

_DATA_TAG = 0
_NOISE_TAG = 1


def _philox(seed: int, tag: int, counter: int = 0) -> np.random.Generator:
    bg = np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, tag], dtype=np.uint64),
                          counter=np.array([0, 0, counter, 0], dtype=np.uint64))
    return np.random.Generator(bg)


class Objective:
    """Finite-sum objective f = (1/n) sum_i f_i over R^d."""

    n: int
    d: int

    def value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grads(self, xs: np.ndarray) -> np.ndarray:
        return np.stack([self.grad(i, xs[i]) for i in range(self.n)])

    def global_value(self, x: np.ndarray) -> float:
        return float(np.mean([self.value(i, x) for i in range(self.n)]))

    def optimum(self) -> np.ndarray:
        raise NotImplementedError

    def gap(self, x: np.ndarray) -> float:
        return self.global_value(x) - self.global_value(self.optimum())


@dataclass(frozen=True)
class QuadraticProblem(Objective):
    """f_i(x) = 0.5 ||x - b_i||^2 with centers b_i ~ N(0, zeta^2/d I)."""

    centers: np.ndarray
    sigma: float = 0.0
    zeta: float = 0.0
    seed: int = 0

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def value(self, i, x):
        r = np.asarray(x) - self.centers[i]
        return 0.5 * float(r @ r)

    def grad(self, i, x):
        return np.asarray(x) - self.centers[i]

    def grads(self, xs):
        return xs - self.centers

    def optimum(self):
        return self.centers.mean(axis=0)

    def gap(self, x):
        r = np.asarray(x) - self.optimum()
        return 0.5 * float(r @ r)

    def heterogeneity(self, x=None) -> float:
        """(1/n) sum_i ||grad f_i(x) - grad f(x)||^2; the same at every x here."""
        dev = self.centers - self.optimum()
        return float(np.sum(dev * dev) / self.n)


def generate_quadratic(d: int, n: int, zeta: float, sigma: float, seed: int) -> QuadraticProblem:
    if d < 1 or n < 1:
        raise ValueError("d and n must be positive")
    if zeta < 0 or sigma < 0:
        raise ValueError("zeta and sigma must be nonnegative")
    # standard draws are scaled afterwards, so one seed gives the same
    # direction pattern for every zeta
    z = _philox(seed, _DATA_TAG).standard_normal((n, d))
    return QuadraticProblem(centers=z * (zeta / np.sqrt(d)), sigma=float(sigma),
                            zeta=float(zeta), seed=seed)


class NoiseStream:
    """Keyed Gaussian gradient noise: eps(seed, i, r) ~ N(0, sigma^2/d I)."""

    def __init__(self, seed: int, sigma: float, n: int, d: int):
        self.seed, self.sigma, self.n, self.d = seed, float(sigma), n, d
        self._block_id = -1
        self._block = None

    def _load(self, b):
        z = _philox(self.seed, _NOISE_TAG, b).standard_normal((NOISE_BLOCK, self.n, self.d))
        z *= self.sigma / np.sqrt(self.d)
        self._block_id, self._block = b, z

    def round_noise(self, r: int) -> np.ndarray:
        """Noise for all nodes at round r; row i is eps(seed, i, r)."""
        if self.sigma == 0.0:
            return np.zeros((self.n, self.d))
        b, k = divmod(r, NOISE_BLOCK)
        if b != self._block_id:
            self._load(b)
        return self._block[k]

    def noise(self, i: int, r: int) -> np.ndarray:
        return self.round_noise(r)[i].copy()


def stochastic_grad(p: Objective, ns: NoiseStream, i: int, r: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.d,):
        raise ValueError(f"expected a vector of dimension {p.d}, got shape {x.shape}")
    return p.grad(i, x) + ns.noise(i, r)


def stochastic_grads(p: Objective, ns: NoiseStream, r: int, xs: np.ndarray) -> np.ndarray:
    """All nodes' stochastic gradients at round r in one call."""
    return p.grads(xs) + ns.round_noise(r)


def error_metric(p: Objective, xs) -> float:
    dev = np.asarray(xs) - p.optimum()
    return float(np.sum(dev * dev) / dev.shape[0])


def consensus_distance(xs) -> float:
    xs = np.asarray(xs)
    dev = xs - xs.mean(axis=0)
    return float(np.sum(dev * dev) / xs.shape[0])
