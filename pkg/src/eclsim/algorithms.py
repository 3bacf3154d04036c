"""D-PSGD, ECL, G-ECL and gradient tracking as synchronized-round state machines."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._jit import DEFAULT_BACKEND
from .kernels import Csr, EdgeFlux, EdgeIndex
from .mixing import AlphaWeights, alpha_induced, alpha_matrix
from .objectives import RNG_NAME, NoiseStream, Objective, stochastic_grads
from .topology import Graph

ALGORITHMS = ("dpsgd", "ecl", "gecl", "gt")
COLUMNS = ("round", "error", "consensus", "gap", "csum_norm", "avg_residual", "tracker_residual")


class ConfigError(ValueError):
    pass


def edge_sign(i: int, j: int) -> int:
    """A_{i|j} as a scalar: +1 if i > j, -1 if i < j."""
    if i == j:
        raise ValueError("edge sign undefined for i == j")
    return 1 if i > j else -1


def as_csr(w) -> Csr:
    if isinstance(w, Csr):
        return w
    return Csr.from_dense(np.asarray(getattr(w, "w", w), dtype=float))


@dataclass(frozen=True)
class DpsgdState:
    xs: np.ndarray


@dataclass(frozen=True)
class EclState:
    xs: np.ndarray
    z: np.ndarray  # one row per directed edge, ordered as edges.src/dst
    eta: float
    theta: float
    edges: EdgeIndex
    denom: np.ndarray  # 1 + eta * sum_j alpha_{i|j}

    def z_of(self, i: int, j: int) -> np.ndarray:
        e = np.flatnonzero((self.edges.src == i) & (self.edges.dst == j))
        if e.size == 0:
            raise KeyError((i, j))
        return self.z[e[0]]


@dataclass(frozen=True)
class GeclState:
    xs: np.ndarray
    cs: np.ndarray
    eta_prime: np.ndarray  # per node; equal entries when alpha has equal row sums
    w: Csr
    flux: EdgeFlux


@dataclass(frozen=True)
class GtState:
    xs: np.ndarray
    ps: np.ndarray
    gs: np.ndarray
    eta: float
    w: Csr


def _x0(x0, n, d) -> np.ndarray:
    if x0 is None:
        return np.zeros((n, d))
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 0:
        return np.full((n, d), float(x0))
    if x0.shape == (d,):
        return np.tile(x0, (n, 1))
    if x0.shape == (n, d):
        return x0.copy()
    raise ValueError(f"x0 of shape {x0.shape} fits neither ({d},) nor ({n}, {d})")


def init_dpsgd(x0: np.ndarray) -> DpsgdState:
    return DpsgdState(np.array(x0, dtype=float))


def init_ecl(g: Graph, alpha, eta: float, x0: np.ndarray, theta: float = 0.5,
             z_init: str = "theorem1") -> EclState:
    """z_init ``"theorem1"`` sets z_{i|j} = A_{i|j} x_j; ``"zero"`` zeros them."""
    if eta <= 0:
        raise ConfigError("eta must be positive")
    if not 0.0 < theta <= 1.0:
        raise ConfigError("theta must lie in (0, 1]")
    d_mat = alpha_matrix(alpha)
    ei = EdgeIndex.build(g.n, g.edges, d_mat)
    x0 = np.array(x0, dtype=float)
    if z_init == "theorem1":
        z = ei.sign[:, None] * x0[ei.dst]
    elif z_init == "zero":
        z = np.zeros((len(ei.src), x0.shape[1]))
    else:
        raise ConfigError(f"unknown z_init {z_init!r}")
    return EclState(x0, z, float(eta), float(theta), ei, 1.0 + eta * d_mat.sum(axis=1))


def init_gecl(w, eta_prime, alpha, x0: np.ndarray, c_init: str = "zero") -> GeclState:
    """c_init ``"theorem1"`` uses c_i = 1/2 sum_j alpha_{i|j} (x_j - x_i)."""
    x0 = np.array(x0, dtype=float)
    n = x0.shape[0]
    flux = EdgeFlux.from_alpha(alpha_matrix(alpha))
    if c_init == "zero":
        c = np.zeros_like(x0)
    elif c_init == "theorem1":
        c = 0.5 * flux.incidence @ (x0[flux.j] - x0[flux.i])
    else:
        raise ConfigError(f"unknown c_init {c_init!r}")
    eta_p = np.broadcast_to(np.asarray(eta_prime, dtype=float), (n,)).copy()
    if np.any(eta_p <= 0):
        raise ConfigError("eta_prime must be positive")
    return GeclState(x0, c, eta_p, as_csr(w), flux)


def init_gt(w, eta: float, x0: np.ndarray, g0: np.ndarray) -> GtState:
    g0 = np.array(g0, dtype=float)
    return GtState(np.array(x0, dtype=float), g0.copy(), g0, float(eta), as_csr(w))


def dpsgd_step(s: DpsgdState, w, eta: float, grads, backend: str | None = None) -> DpsgdState:
    k = kernels.get_kernels(backend)
    return DpsgdState(k["dpsgd"](as_csr(w), s.xs, np.asarray(grads, dtype=float), eta))


def ecl_step(s: EclState, grads, backend: str | None = None) -> EclState:
    k = kernels.get_kernels(backend)
    xn, zn = k["ecl"](s.edges, s.xs, s.z, np.asarray(grads, dtype=float), s.denom, s.eta, s.theta)
    return replace(s, xs=xn, z=zn)


def gecl_step(s: GeclState, grads, backend: str | None = None, return_mixed: bool = False):
    """One G-ECL round. With ``return_mixed`` also returns the averaged x~."""
    k = kernels.get_kernels(backend)
    xn, cn, xt = k["gecl"](s.w, s.flux, s.xs, s.cs, np.asarray(grads, dtype=float), s.eta_prime)
    out = replace(s, xs=xn, cs=cn)
    return (out, xt) if return_mixed else out


def gt_step(s: GtState, w, eta: float, grads_next, backend: str | None = None) -> GtState:
    """One gradient-tracking round.

    ``grads_next`` is either the array of gradients at the new iterates or a
    callable mapping the new iterates to them; the runner uses the callable.
    """
    k = kernels.get_kernels(backend)
    fn = grads_next if callable(grads_next) else (lambda _x: np.asarray(grads_next, dtype=float))
    xn, pn, gn = k["gt"](as_csr(w), s.xs, s.ps, s.gs, fn, eta)
    return replace(s, xs=xn, ps=pn, gs=gn, eta=float(eta))


@dataclass
class RunRecord:
    meta: dict
    rows: dict = field(default_factory=dict)  # column name -> 1-D array of length R+1

    @property
    def rounds(self) -> int:
        return len(self.rows["round"]) - 1

    def final(self, col: str = "error") -> float:
        return float(self.rows[col][-1])


_REQUIRED = {
    "dpsgd": ("w", "eta"),
    "ecl": ("alpha", "eta"),
    "gecl": ("w", "eta_prime"),
    "gt": ("w", "eta"),
}


def _require(algo, params):
    if algo not in _REQUIRED:
        raise ConfigError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    missing = [k for k in _REQUIRED[algo] if params.get(k) is None]
    if missing:
        raise ConfigError(f"{algo} needs parameter(s): {', '.join(missing)}")


def run(algo: str, problem: Objective, graph: Graph, params: dict, rounds: int, seed: int,
        x0=None, backend: str | None = None) -> RunRecord:
    """Run ``rounds`` synchronized rounds and record per-round metrics.

    ``params`` holds the algorithm's hyperparameters: ``w`` (mixing matrix),
    ``eta``, ``eta_prime``, ``theta``, ``alpha`` (AlphaWeights or matrix),
    ``z_init``. Gradient noise for node i at round r uses key (seed, i, r).
    """
    _require(algo, params)
    backend = backend or DEFAULT_BACKEND
    n, d = problem.n, problem.d
    if graph.n != n:
        raise ConfigError(f"graph has {graph.n} nodes but problem has {n}")
    sigma = getattr(problem, "sigma", 0.0)
    ns = NoiseStream(seed, sigma, n, d)
    xs = _x0(x0, n, d)
    x_opt = problem.optimum()
    grad = lambda r, x: stochastic_grads(problem, ns, r, x)

    cols = {c: np.full(rounds + 1, np.nan) for c in COLUMNS}
    cols["round"] = np.arange(rounds + 1, dtype=float)

    metrics = kernels.get_kernels(backend)["metrics"]

    def record(r, x, csum=None, avg=None, track=None):
        err, cons, xbar = metrics(x, x_opt)
        cols["error"][r] = err
        cols["consensus"][r] = cons
        cols["gap"][r] = problem.gap(xbar)
        if csum is not None:
            cols["csum_norm"][r] = csum
        if avg is not None:
            cols["avg_residual"][r] = avg
        if track is not None:
            cols["tracker_residual"][r] = track

    def avg_res(x_old, x_new, g, step):
        return float(np.linalg.norm(x_new.mean(axis=0) - (x_old.mean(axis=0) - step * g.mean(axis=0))))

    meta = {"algorithm": algo, "backend": backend, "rng": RNG_NAME, "seed": seed,
            "n": n, "d": d, "rounds": rounds, "x0_norm": float(np.linalg.norm(xs[0]))}

    if algo == "dpsgd":
        w = as_csr(params["w"])
        eta = float(params["eta"])
        s = init_dpsgd(xs)
        record(0, s.xs)
        for r in range(rounds):
            g = grad(r, s.xs)
            new = dpsgd_step(s, w, eta, g, backend)
            record(r + 1, new.xs, avg=avg_res(s.xs, new.xs, g, eta))
            s = new
        meta.update(eta=eta)

    elif algo == "ecl":
        eta = float(params["eta"])
        theta = float(params.get("theta", 0.5))
        s = init_ecl(graph, params["alpha"], eta, xs, theta, params.get("z_init", "theorem1"))
        _, eta_p = alpha_induced(graph, params["alpha"], eta)
        step = float(eta_p[0]) if np.ptp(eta_p) <= 1e-14 else None
        record(0, s.xs)
        for r in range(rounds):
            g = grad(r, s.xs)
            new = ecl_step(s, g, backend)
            record(r + 1, new.xs, avg=None if step is None else avg_res(s.xs, new.xs, g, step))
            s = new
        meta.update(eta=eta, theta=theta, eta_prime=step if step is not None else float("nan"))

    elif algo == "gecl":
        alpha = params.get("alpha")
        if alpha is None:
            alpha = AlphaWeights.zeros(graph)
        s = init_gecl(params["w"], params["eta_prime"], alpha, xs, params.get("c_init", "zero"))
        step = float(s.eta_prime[0]) if np.ptp(s.eta_prime) <= 1e-14 else None
        record(0, s.xs, csum=float(np.linalg.norm(s.cs.sum(axis=0))))
        for r in range(rounds):
            g = grad(r, s.xs)
            new = gecl_step(s, g, backend)
            record(r + 1, new.xs, csum=float(np.linalg.norm(new.cs.sum(axis=0))),
                   avg=None if step is None else avg_res(s.xs, new.xs, g, step))
            s = new
        meta.update(eta_prime=step if step is not None else float("nan"))

    elif algo == "gt":
        w = as_csr(params["w"])
        eta = float(params["eta"])
        s = init_gt(w, eta, xs, grad(0, xs))

        def track(st):
            return float(np.linalg.norm(st.ps.sum(axis=0) - st.gs.sum(axis=0)))

        record(0, s.xs, track=track(s))
        for r in range(rounds):
            s = gt_step(s, w, eta, lambda x, r=r: grad(r + 1, x), backend)
            record(r + 1, s.xs, track=track(s))
        meta.update(eta=eta)

    return RunRecord(meta, cols)
