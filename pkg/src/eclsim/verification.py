"""Coupled-run checks of the structural identities between ECL, G-ECL and GT."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algorithms import (RunRecord, ecl_step, gecl_step, init_ecl, init_gecl, as_csr)
from .mixing import alpha_induced, alpha_matrix, example1_alpha, validate_mixing
from .objectives import NoiseStream, Objective, stochastic_grads
from .topology import Graph, build_complete, build_ring, build_torus, regularity

THEOREM1_TOL = 1e-9
LEMMA1_TOL = 1e-10
GT_FORM_TOL = 1e-9


class TheoremPremiseError(ValueError):
    pass


@dataclass
class EquivalenceReport:
    rounds: int
    max_x_deviation: float
    per_round_deviation: np.ndarray
    tol: float = THEOREM1_TOL
    eta_prime: np.ndarray = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return bool(self.max_x_deviation <= self.tol)


@dataclass
class Lemma1Report:
    max_csum_norm: float
    max_avg_residual: float
    tol: float = LEMMA1_TOL

    @property
    def passed(self) -> bool:
        return bool(self.max_csum_norm <= self.tol and self.max_avg_residual <= self.tol)


@dataclass
class GtFormReport:
    rounds: int
    max_residual: float
    per_round_residual: np.ndarray
    t_norm: np.ndarray  # max_i ||T_i|| per round
    tol: float = GT_FORM_TOL

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tol)


def check_theorem1(problem: Objective, g: Graph, a, eta: float, rounds: int, seed: int,
                   theta: float = 0.5, x0=None, allow_premise_violation: bool = False,
                   backend: str | None = None) -> EquivalenceReport:
    """Run ECL and its gossip-plus-correction form side by side on shared noise.

    Both consume eps(seed, i, r) at round r. The G-ECL side uses the W and
    per-node eta' induced by (eta, alpha). A theta other than 1/2 raises
    unless ``allow_premise_violation`` is set, in which case the deviation
    is simply reported (negative control).
    """
    if theta != 0.5 and not allow_premise_violation:
        raise TheoremPremiseError(f"the reformulation needs theta = 1/2, got {theta}")
    n, d = problem.n, problem.d
    ns = NoiseStream(seed, getattr(problem, "sigma", 0.0), n, d)
    x0 = np.zeros((n, d)) if x0 is None else np.broadcast_to(np.asarray(x0, float), (n, d)).copy()
    w, eta_p = alpha_induced(g, a, eta)
    ecl = init_ecl(g, a, eta, x0, theta, z_init="theorem1")
    gecl = init_gecl(w, eta_p, a, x0, c_init="theorem1")
    dev = np.zeros(rounds + 1)
    for r in range(rounds):
        ecl = ecl_step(ecl, stochastic_grads(problem, ns, r, ecl.xs), backend)
        gecl = gecl_step(gecl, stochastic_grads(problem, ns, r, gecl.xs), backend)
        dev[r + 1] = np.max(np.linalg.norm(ecl.xs - gecl.xs, axis=1))
    return EquivalenceReport(rounds, float(dev.max()), dev, eta_prime=eta_p)


def check_lemma1(record: RunRecord, tol: float = LEMMA1_TOL) -> Lemma1Report:
    """Conservation of sum_i c_i and the SGD-like average recursion for a G-ECL run."""
    if record.meta.get("algorithm") != "gecl":
        raise ValueError("check_lemma1 needs a G-ECL run record")
    csum = np.asarray(record.rows["csum_norm"])
    avg = np.asarray(record.rows["avg_residual"])[1:]
    if np.any(np.isnan(avg)):
        raise ValueError("average residual missing; the run needs a single eta'")
    return Lemma1Report(float(np.max(csum)), float(np.max(avg, initial=0.0)), tol)


def check_gt_form(problem: Objective, g: Graph, a, eta: float, rounds: int, seed: int,
                  x0=None, backend: str | None = None) -> GtFormReport:
    """Verify the tracking recursion p' = W p + (g' - g) - T with p = g - c.

    Also checks x' = x~ - eta' p each round. The residual is the largest
    entrywise defect of either identity.
    """
    n, d = problem.n, problem.d
    ns = NoiseStream(seed, getattr(problem, "sigma", 0.0), n, d)
    x0 = np.zeros((n, d)) if x0 is None else np.broadcast_to(np.asarray(x0, float), (n, d)).copy()
    w, eta_p = alpha_induced(g, a, eta)
    d_mat = alpha_matrix(a)
    lap = d_mat - np.diag(d_mat.sum(axis=1))
    s = init_gecl(w, eta_p, a, x0, c_init="theorem1")
    grads = stochastic_grads(problem, ns, 0, s.xs)
    p = grads - s.cs
    res = np.zeros(rounds)
    t_norm = np.zeros(rounds)
    for r in range(rounds):
        new, xt = gecl_step(s, grads, backend, return_mixed=True)
        grads_next = stochastic_grads(problem, ns, r + 1, new.xs)
        p_next = grads_next - new.cs
        t = 0.5 * lap @ xt
        pred = w @ p + (grads_next - grads) - t
        res[r] = max(np.max(np.abs(p_next - pred)),
                     np.max(np.abs(new.xs - (xt - eta_p[:, None] * p))))
        t_norm[r] = np.max(np.linalg.norm(t, axis=1))
        s, grads, p = new, grads_next, p_next
    return GtFormReport(rounds, float(res.max(initial=0.0)), res, t_norm)


def regular_topologies(n: int = 25) -> dict:
    side = int(round(np.sqrt(n)))
    tops = {"ring": build_ring(n), "complete": build_complete(n)}
    if side * side == n and side >= 3:
        tops[f"torus:{side}x{side}"] = build_torus(side, side)
    return tops


def check_mixing(topologies: dict | None = None, etas=(0.5, 0.01), alpha_total: float = 1e3) -> list:
    """Induced-W mixing property and equal eta' for each k-regular topology x eta."""
    topologies = topologies or regular_topologies()
    rows = []
    for name, g in topologies.items():
        if regularity(g) is None:
            continue
        a = example1_alpha(g, alpha_total)
        for eta in etas:
            w, eta_p = alpha_induced(g, a, eta)
            rep = validate_mixing(w)
            spread = float(np.ptp(eta_p))
            rows.append({"topology": name, "eta": eta, **rep, "eta_prime": float(eta_p[0]),
                         "eta_prime_spread": spread,
                         "passed": rep["symmetric"] and rep["doubly_stochastic"] and rep["nonneg"]
                         and rep["max_violation"] <= 1e-12 and spread <= 1e-14})
    return rows
