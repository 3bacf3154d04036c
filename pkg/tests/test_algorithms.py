import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eclsim.algorithms import (ConfigError, dpsgd_step, ecl_step, edge_sign, gecl_step, gt_step,
                               init_dpsgd, init_ecl, init_gecl, init_gt, run)
from eclsim.mixing import AlphaWeights, alpha_induced, example1_alpha, metropolis
from eclsim.objectives import generate_quadratic
from eclsim.topology import Graph, build_complete, build_ring, build_torus

from conftest import BACKENDS


def random_graph(rng, n):
    edges = {(i - 1, i) for i in range(1, n)}
    for _ in range(n):
        a, b = rng.integers(0, n, 2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return Graph.from_edges(n, edges)


def random_alpha(rng, g):
    return AlphaWeights(g.n, {e: float(rng.uniform(0, 3)) for e in g.edges})


def ecl_oracle(g, alpha, eta, theta, x, z, grads):
    """Dictionary-based ECL round, written node by node."""
    n = g.n
    xn = np.empty_like(x)
    for i in range(n):
        s = sum(alpha.values[tuple(sorted((i, j)))] for j in g.neighbors(i))
        acc = sum(alpha.values[tuple(sorted((i, j)))] * edge_sign(i, j) * z[(i, j)] for j in g.neighbors(i))
        xn[i] = (x[i] - eta * (grads[i] - acc)) / (1 + eta * s)
    y = {(i, j): z[(i, j)] - 2 * edge_sign(i, j) * xn[i] for (i, j) in z}
    zn = {(i, j): (1 - theta) * z[(i, j)] + theta * y[(j, i)] for (i, j) in z}
    return xn, zn


def gecl_oracle(g, w, alpha, eta_p, x, c, grads):
    n = g.n
    xt = np.array([sum(w[i, j] * x[j] for j in range(n)) for i in range(n)])
    xn = np.array([xt[i] - eta_p[i] * (grads[i] - c[i]) for i in range(n)])
    cn = np.empty_like(c)
    for i in range(n):
        cn[i] = sum(w[i, j] * (c[j] - grads[j]) for j in range(n)) + grads[i]
        for j in g.neighbors(i):
            cn[i] += alpha.values[tuple(sorted((i, j)))] / 2 * (xt[j] - xt[i])
    return xn, cn


def test_edge_sign():
    assert edge_sign(3, 1) == 1 and edge_sign(1, 3) == -1
    with pytest.raises(ValueError):
        edge_sign(2, 2)


# ---------------------------------------------------------------- D-PSGD

@pytest.mark.parametrize("backend", BACKENDS)
def test_dpsgd_examples(backend):
    x = np.array([[0.0], [2.0]])
    g = np.array([[0.3], [-0.4]])
    assert np.allclose(dpsgd_step(init_dpsgd(x), np.eye(2), 0.1, g, backend).xs, x - 0.1 * g)
    avg = np.full((2, 2), 0.5)
    assert np.allclose(dpsgd_step(init_dpsgd(x), avg, 0.0, g, backend).xs, 1.0)
    assert np.allclose(dpsgd_step(init_dpsgd(x), avg, 0.7, np.zeros((2, 1)), backend).xs, 1.0)


# ---------------------------------------------------------------- ECL

@pytest.mark.parametrize("backend", BACKENDS)
def test_ecl_zero_alpha_is_local_sgd(backend, rng):
    g = build_ring(5)
    x = rng.normal(size=(5, 3))
    s = init_ecl(g, AlphaWeights.zeros(g), 0.2, x)
    grads = rng.normal(size=(5, 3))
    new = ecl_step(s, grads, backend)
    assert np.allclose(new.xs, x - 0.2 * grads, rtol=0, atol=1e-15)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ecl_consensus_fixed_point(backend):
    g = build_ring(3)
    s = init_ecl(g, example1_alpha(g, 1000), 0.5, np.ones((3, 1)))
    new = ecl_step(s, np.zeros((3, 1)), backend)
    assert np.allclose(new.xs, 1.0, rtol=0, atol=1e-14)
    assert np.allclose(new.z, s.z, rtol=0, atol=1e-12)


def test_ecl_initial_duals():
    g = build_ring(4)
    x = np.arange(8.0).reshape(4, 2)
    s = init_ecl(g, example1_alpha(g, 2.0), 0.5, x)
    for i in range(4):
        for j in g.neighbors(i):
            assert np.array_equal(s.z_of(i, j), edge_sign(i, j) * x[j])
    with pytest.raises(KeyError):
        s.z_of(0, 2)


def test_ecl_rejects_bad_hyperparameters():
    g = build_ring(4)
    with pytest.raises(ConfigError):
        init_ecl(g, AlphaWeights.zeros(g), 0.0, np.zeros((4, 1)))
    with pytest.raises(ConfigError):
        init_ecl(g, AlphaWeights.zeros(g), 0.5, np.zeros((4, 1)), theta=1.5)
    with pytest.raises(ConfigError):
        init_ecl(g, AlphaWeights.zeros(g), 0.5, np.zeros((4, 1)), z_init="random")


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("seed", range(4))
def test_ecl_matches_loop_oracle(backend, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 7)
    a = random_alpha(rng, g)
    eta, theta = rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)
    x = rng.normal(size=(7, 3))
    s = init_ecl(g, a, eta, x, theta, z_init="zero")
    s = type(s)(**{**s.__dict__, "z": rng.normal(size=s.z.shape)})
    z = {(int(i), int(j)): s.z[e].copy() for e, (i, j) in enumerate(zip(s.edges.src, s.edges.dst))}
    xo = x.copy()
    for _ in range(5):
        grads = rng.normal(size=(7, 3))
        s = ecl_step(s, grads, backend)
        xo, z = ecl_oracle(g, a, eta, theta, xo, z, grads)
        assert np.allclose(s.xs, xo, rtol=1e-12, atol=1e-12)
        for (i, j), v in z.items():
            assert np.allclose(s.z_of(i, j), v, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------- G-ECL

@pytest.mark.parametrize("backend", BACKENDS)
def test_gecl_identity_w_zero_alpha_is_local_sgd(backend, rng):
    g = build_ring(5)
    x = rng.normal(size=(5, 3))
    s = init_gecl(np.eye(5), 0.3, AlphaWeights.zeros(g), x)
    for _ in range(10):
        grads = rng.normal(size=(5, 3))
        new = gecl_step(s, grads, backend)
        assert np.allclose(new.xs, s.xs - 0.3 * grads, rtol=0, atol=1e-14)
        assert not new.cs.any()
        s = new


@pytest.mark.parametrize("backend", BACKENDS)
def test_gecl_two_node_hand_example(backend):
    g = build_complete(2)
    s = init_gecl(np.full((2, 2), 0.5), 1.0, AlphaWeights.zeros(g), np.zeros((2, 1)))
    new = gecl_step(s, np.array([[1.0], [-1.0]]), backend)
    assert np.array_equal(new.xs, np.array([[-1.0], [1.0]]))
    assert np.array_equal(new.cs, np.array([[1.0], [-1.0]]))
    assert new.cs.sum() == 0.0


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("seed", range(4))
def test_gecl_matches_loop_oracle(backend, seed):
    rng = np.random.default_rng(100 + seed)
    g = random_graph(rng, 6)
    a = random_alpha(rng, g)
    w = metropolis(g).w
    eta_p = rng.uniform(0.01, 0.5, size=6)
    x = rng.normal(size=(6, 2))
    c = rng.normal(size=(6, 2))
    s = init_gecl(w, eta_p, a, x)
    s = type(s)(**{**s.__dict__, "cs": c.copy()})
    for _ in range(5):
        grads = rng.normal(size=(6, 2))
        s = gecl_step(s, grads, backend)
        x, c = gecl_oracle(g, w, a, eta_p, x, c, grads)
        assert np.allclose(s.xs, x, rtol=1e-12, atol=1e-12)
        assert np.allclose(s.cs, c, rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(3, 9))
def test_gecl_conserves_sum_of_corrections(seed, n):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    a = random_alpha(rng, g)
    x = rng.normal(size=(n, 3)) * 10
    s = init_gecl(metropolis(g).w, rng.uniform(0.01, 1), a, x, c_init="theorem1")
    total = s.cs.sum(axis=0)
    assert np.allclose(total, 0, atol=1e-12)
    for _ in range(20):
        s = gecl_step(s, rng.normal(size=(n, 3)) * 10, "numpy")
        scale = max(1.0, np.abs(s.cs).max())
        assert np.allclose(s.cs.sum(axis=0), total, rtol=0, atol=1e-13 * n * scale)


def test_gecl_rejects_bad_inputs():
    g = build_ring(4)
    with pytest.raises(ConfigError):
        init_gecl(np.eye(4), 0.0, AlphaWeights.zeros(g), np.zeros((4, 1)))
    with pytest.raises(ConfigError):
        init_gecl(np.eye(4), 0.1, AlphaWeights.zeros(g), np.zeros((4, 1)), c_init="ones")


# ---------------------------------------------------------------- gradient tracking

@pytest.mark.parametrize("backend", BACKENDS)
def test_gt_tracker_conservation(backend, rng):
    g = build_ring(6)
    w = metropolis(g).w
    x = rng.normal(size=(6, 2))
    g0 = rng.normal(size=(6, 2))
    s = init_gt(w, 0.1, x, g0)
    for _ in range(50):
        s = gt_step(s, w, 0.1, rng.normal(size=(6, 2)), backend)
        assert np.allclose(s.ps.sum(axis=0), s.gs.sum(axis=0), rtol=0, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gt_zero_step_only_averages(backend, rng):
    g = build_ring(5)
    w = metropolis(g).w
    x = rng.normal(size=(5, 2))
    p0 = rng.normal(size=(5, 2))
    gn = rng.normal(size=(5, 2))
    s = gt_step(init_gt(w, 0.0, x, p0), w, 0.0, gn, backend)
    assert np.allclose(s.xs, w @ x)
    assert np.allclose(s.ps, w @ p0 + gn - p0)


def test_gt_uniform_mixing_converges_despite_heterogeneity():
    g = build_complete(25)
    p = generate_quadratic(50, 25, np.sqrt(10), 0.0, 5)
    rec = run("gt", p, g, {"w": np.full((25, 25), 1 / 25), "eta": 0.1}, 10_000, 5)
    assert rec.final() < 1e-20


# ---------------------------------------------------------------- run()

def test_run_zero_rounds_single_row():
    g = build_ring(5)
    p = generate_quadratic(3, 5, 1.0, 1.0, 0)
    rec = run("dpsgd", p, g, {"w": metropolis(g).w, "eta": 0.1}, 0, 0)
    assert rec.rounds == 0
    assert all(len(v) == 1 for v in rec.rows.values())


@pytest.mark.parametrize("algo", ["dpsgd", "ecl", "gecl", "gt"])
def test_run_stays_at_optimum(algo):
    g = build_torus(3, 3)
    p = generate_quadratic(4, 9, 0.0, 0.0, 0)
    params = {"w": metropolis(g).w, "eta": 0.5, "eta_prime": 0.1, "alpha": example1_alpha(g, 10)}
    rec = run(algo, p, g, params, 50, 0)
    assert not np.any(rec.rows["error"])


def test_run_missing_parameter_named():
    g = build_ring(4)
    p = generate_quadratic(2, 4, 1.0, 0.0, 0)
    with pytest.raises(ConfigError, match="eta_prime"):
        run("gecl", p, g, {"w": np.eye(4)}, 3, 0)
    with pytest.raises(ConfigError, match="alpha"):
        run("ecl", p, g, {"eta": 0.5}, 3, 0)
    with pytest.raises(ConfigError, match="unknown algorithm"):
        run("admm", p, g, {}, 3, 0)
    with pytest.raises(ConfigError):
        run("dpsgd", p, build_ring(5), {"w": np.eye(5), "eta": 0.1}, 3, 0)


@pytest.mark.parametrize("algo", ["dpsgd", "ecl", "gecl", "gt"])
def test_run_deterministic_and_backend_agreement(algo):
    g = build_ring(8)
    p = generate_quadratic(5, 8, 1.0, 1.0, 3)
    params = {"w": metropolis(g).w, "eta": 0.2, "eta_prime": 0.1, "alpha": example1_alpha(g, 4.0)}
    a = run(algo, p, g, params, 300, 9, x0=1.0, backend="numpy")
    b = run(algo, p, g, params, 300, 9, x0=1.0, backend="numpy")
    for col in a.rows:
        assert np.array_equal(a.rows[col], b.rows[col], equal_nan=True)
    for other in BACKENDS[1:]:
        c = run(algo, p, g, params, 300, 9, x0=1.0, backend=other)
        assert np.allclose(a.rows["error"], c.rows["error"], rtol=1e-9, atol=1e-14)


@pytest.mark.parametrize("algo,step_key", [("dpsgd", "eta"), ("gecl", "eta_prime")])
def test_average_sequence_identity(algo, step_key):
    g = build_torus(3, 3)
    p = generate_quadratic(4, 9, 2.0, 3.0, 1)
    params = {"w": metropolis(g).w, step_key: 0.05, "alpha": example1_alpha(g, 8.0)}
    rec = run(algo, p, g, params, 500, 1, x0=np.random.default_rng(0).normal(size=(9, 4)))
    assert np.nanmax(rec.rows["avg_residual"][1:]) <= 1e-10


def test_gecl_conservation_in_run():
    g = build_complete(25)
    p = generate_quadratic(50, 25, np.sqrt(10), np.sqrt(10), 2)
    w, eta_p = alpha_induced(g, example1_alpha(g, 1e3), 0.5)
    rec = run("gecl", p, g, {"w": w, "eta_prime": eta_p, "alpha": example1_alpha(g, 1e3)}, 2000, 2)
    assert np.max(rec.rows["csum_norm"]) <= 1e-10


@pytest.mark.parametrize("x0", [np.zeros(3), np.ones((4, 3)), 2.5])
def test_x0_shapes(x0):
    g = build_ring(4)
    p = generate_quadratic(3, 4, 1.0, 0.0, 0)
    rec = run("dpsgd", p, g, {"w": metropolis(g).w, "eta": 0.1}, 1, 0, x0=x0)
    assert rec.rounds == 1
    with pytest.raises(ValueError):
        run("dpsgd", p, g, {"w": metropolis(g).w, "eta": 0.1}, 1, 0, x0=np.zeros(5))
