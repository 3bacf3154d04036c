"""Per-round update kernels.

Every rule has two implementations with the same signature-level contract:
a dense numpy version and a numba version that walks sparse neighbor lists.
Arrays are node-major: ``x[i]`` is node i's vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import DEFAULT_BACKEND, HAVE_NUMBA, njit


@dataclass(frozen=True)
class Csr:
    ptr: np.ndarray
    idx: np.ndarray
    val: np.ndarray
    dense: np.ndarray

    @classmethod
    def from_dense(cls, m, keep_diag=True) -> "Csr":
        m = np.ascontiguousarray(m, dtype=np.float64)
        n = m.shape[0]
        ptr = [0]
        idx, val = [], []
        for i in range(n):
            for j in range(n):
                if m[i, j] != 0.0 or (keep_diag and i == j):
                    idx.append(j)
                    val.append(m[i, j])
            ptr.append(len(idx))
        return cls(np.array(ptr, dtype=np.int64), np.array(idx, dtype=np.int64),
                   np.array(val, dtype=np.float64), m)


@dataclass(frozen=True)
class EdgeIndex:
    """Directed edges (i|j) for ECL's dual variables.

    ``rev[e]`` is the index of the reverse edge (j|i); ``sign[e]`` is +1
    when i > j and -1 otherwise; ``alpha[e]`` is alpha_{i|j}.
    """

    src: np.ndarray
    dst: np.ndarray
    sign: np.ndarray
    rev: np.ndarray
    alpha: np.ndarray
    incidence: np.ndarray  # n x m, alpha_e * sign_e at (src_e, e)

    @classmethod
    def build(cls, n, edges, alpha_mat) -> "EdgeIndex":
        src, dst = [], []
        for i, j in sorted(edges):
            src += [i, j]
            dst += [j, i]
        src = np.array(src, dtype=np.int64)
        dst = np.array(dst, dtype=np.int64)
        m = len(src)
        rev = np.arange(m, dtype=np.int64) ^ 1
        sign = np.where(src > dst, 1.0, -1.0)
        alpha = np.asarray(alpha_mat, dtype=float)[src, dst]
        inc = np.zeros((n, m))
        inc[src, np.arange(m)] = alpha * sign
        return cls(src, dst, sign, rev, alpha, inc)


@dataclass(frozen=True)
class EdgeFlux:
    """Undirected edges (i < j) carrying alpha_{i|j} and alpha_{j|i}.

    The G-ECL correction 1/2 sum_j alpha_{i|j} (x~_j - x~_i) is evaluated as
    per-edge fluxes so that with symmetric alpha the node sum cancels edge
    by edge; a Laplacian matvec instead leaks O(eps * alpha * |x|) per round.
    """

    i: np.ndarray
    j: np.ndarray
    a_ij: np.ndarray
    a_ji: np.ndarray
    incidence: np.ndarray  # n x m: +a_ij at (i, e), -a_ji at (j, e)

    @classmethod
    def from_alpha(cls, alpha_mat) -> "EdgeFlux":
        d = np.asarray(alpha_mat, dtype=float)
        n = d.shape[0]
        ii, jj = np.nonzero(np.triu((d != 0) | (d.T != 0), k=1))
        m = len(ii)
        inc = np.zeros((n, m))
        inc[ii, np.arange(m)] = d[ii, jj]
        inc[jj, np.arange(m)] = -d[jj, ii]
        return cls(ii.astype(np.int64), jj.astype(np.int64), d[ii, jj].copy(), d[jj, ii].copy(), inc)


# ---------------------------------------------------------------- numpy

def dpsgd_numpy(w: Csr, x, g, eta):
    return w.dense @ (x - eta * g)


def gecl_numpy(w: Csr, flux: EdgeFlux, x, c, g, eta_p):
    xt = w.dense @ x
    xn = xt - eta_p[:, None] * (g - c)
    cn = w.dense @ (c - g) + g + 0.5 * (flux.incidence @ (xt[flux.j] - xt[flux.i]))
    return xn, cn, xt


def gt_numpy(w: Csr, x, p, g, g_next_fn, eta):
    xn = w.dense @ (x - eta * p)
    gn = g_next_fn(xn)
    pn = w.dense @ p + gn - g
    return xn, pn, gn


def ecl_numpy(ei: EdgeIndex, x, z, g, denom, eta, theta):
    xn = (x - eta * (g - ei.incidence @ z)) / denom[:, None]
    y = z - 2.0 * ei.sign[:, None] * xn[ei.src]
    zn = (1.0 - theta) * z + theta * y[ei.rev]
    return xn, zn


def metrics_numpy(x, x_opt):
    """(error to x_opt, consensus distance, node average)."""
    n = x.shape[0]
    xbar = x.mean(axis=0)
    e = x - x_opt
    c = x - xbar
    return float(np.sum(e * e) / n), float(np.sum(c * c) / n), xbar


# ---------------------------------------------------------------- numba

@njit
def _metrics_nb(x, x_opt):
    n, d = x.shape
    xbar = np.zeros(d)
    for i in range(n):
        for t in range(d):
            xbar[t] += x[i, t]
    xbar /= n
    err = 0.0
    cons = 0.0
    for i in range(n):
        for t in range(d):
            a = x[i, t] - x_opt[t]
            b = x[i, t] - xbar[t]
            err += a * a
            cons += b * b
    return err / n, cons / n, xbar


@njit
def _spmm(ptr, idx, val, x):
    n, d = ptr.shape[0] - 1, x.shape[1]
    out = np.zeros((n, d))
    for i in range(n):
        for k in range(ptr[i], ptr[i + 1]):
            j = idx[k]
            a = val[k]
            for t in range(d):
                out[i, t] += a * x[j, t]
    return out


@njit
def _dpsgd_nb(ptr, idx, val, x, g, eta):
    n, d = x.shape
    out = np.zeros((n, d))
    for i in range(n):
        for k in range(ptr[i], ptr[i + 1]):
            j = idx[k]
            a = val[k]
            for t in range(d):
                out[i, t] += a * (x[j, t] - eta * g[j, t])
    return out


@njit
def _gecl_nb(wp, wi, wv, fi, fj, fa_ij, fa_ji, x, c, g, eta_p):
    n, d = x.shape
    xt = _spmm(wp, wi, wv, x)
    xn = np.empty((n, d))
    cn = np.empty((n, d))
    for i in range(n):
        for t in range(d):
            xn[i, t] = xt[i, t] - eta_p[i] * (g[i, t] - c[i, t])
            cn[i, t] = g[i, t]
        for k in range(wp[i], wp[i + 1]):
            j = wi[k]
            a = wv[k]
            for t in range(d):
                cn[i, t] += a * (c[j, t] - g[j, t])
    for e in range(fi.shape[0]):
        i = fi[e]
        j = fj[e]
        for t in range(d):
            delta = xt[j, t] - xt[i, t]
            cn[i, t] += 0.5 * fa_ij[e] * delta
            cn[j, t] -= 0.5 * fa_ji[e] * delta
    return xn, cn, xt


@njit
def _ecl_nb(src, sign, rev, alpha, x, z, g, denom, eta, theta):
    n, d = x.shape
    m = src.shape[0]
    acc = np.zeros((n, d))
    for e in range(m):
        i = src[e]
        a = alpha[e] * sign[e]
        for t in range(d):
            acc[i, t] += a * z[e, t]
    xn = np.empty((n, d))
    for i in range(n):
        for t in range(d):
            xn[i, t] = (x[i, t] - eta * (g[i, t] - acc[i, t])) / denom[i]
    y = np.empty((m, d))
    for e in range(m):
        i = src[e]
        for t in range(d):
            y[e, t] = z[e, t] - 2.0 * sign[e] * xn[i, t]
    zn = np.empty((m, d))
    for e in range(m):
        r = rev[e]
        for t in range(d):
            zn[e, t] = (1.0 - theta) * z[e, t] + theta * y[r, t]
    return xn, zn


def metrics_numba(x, x_opt):
    return _metrics_nb(x, x_opt)


def dpsgd_numba(w: Csr, x, g, eta):
    return _dpsgd_nb(w.ptr, w.idx, w.val, x, g, float(eta))


def gecl_numba(w: Csr, flux: EdgeFlux, x, c, g, eta_p):
    return _gecl_nb(w.ptr, w.idx, w.val, flux.i, flux.j, flux.a_ij, flux.a_ji, x, c, g,
                    np.ascontiguousarray(eta_p, dtype=np.float64))


def gt_numba(w: Csr, x, p, g, g_next_fn, eta):
    xn = _dpsgd_nb(w.ptr, w.idx, w.val, x, p, float(eta))
    gn = g_next_fn(xn)
    pn = _spmm(w.ptr, w.idx, w.val, p) + gn - g
    return xn, pn, gn


def ecl_numba(ei: EdgeIndex, x, z, g, denom, eta, theta):
    return _ecl_nb(ei.src, ei.sign, ei.rev, ei.alpha, x, z, g, denom, float(eta), float(theta))


BACKENDS = {
    "numpy": {"dpsgd": dpsgd_numpy, "gecl": gecl_numpy, "gt": gt_numpy, "ecl": ecl_numpy,
              "metrics": metrics_numpy},
    "numba": {"dpsgd": dpsgd_numba, "gecl": gecl_numba, "gt": gt_numba, "ecl": ecl_numba,
              "metrics": metrics_numba},
}


def get_kernels(backend: str | None = None) -> dict:
    backend = backend or DEFAULT_BACKEND
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable or disabled")
    return BACKENDS[backend]
