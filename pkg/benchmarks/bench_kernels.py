"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--rounds 2000] [--repeat 5]

Per-kernel timings use the acceptance problem size (n=25, d=50) on each
topology; the last block times complete run() calls. Numba compile time is
excluded by a warm-up call.
"""
import argparse
import time
import timeit

import numpy as np

from eclsim._jit import HAVE_NUMBA
from eclsim.algorithms import as_csr, init_ecl, init_gecl, run
from eclsim.kernels import BACKENDS
from eclsim.mixing import alpha_induced, example1_alpha, metropolis
from eclsim.objectives import generate_quadratic
from eclsim.verification import regular_topologies


def kernel_cases(g, rng):
    n, d = g.n, 50
    a = example1_alpha(g, 1e3)
    w = as_csr(metropolis(g).w)
    wi, eta_p = alpha_induced(g, a, 0.5)
    x, gr = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    ecl = init_ecl(g, a, 0.5, x)
    gecl = init_gecl(wi, eta_p, a, x)
    opt = np.zeros(d)
    return {
        "dpsgd": lambda k: k["dpsgd"](w, x, gr, 1e-3),
        "ecl": lambda k: k["ecl"](ecl.edges, x, ecl.z, gr, ecl.denom, 0.5, 0.5),
        "gecl": lambda k: k["gecl"](gecl.w, gecl.flux, x, gecl.cs, gr, gecl.eta_prime),
        "gt": lambda k: k["gt"](w, x, gr, gr, lambda y: y, 1e-3),
        "metrics": lambda k: k["metrics"](x, opt),
    }


def best(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rounds", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    if not HAVE_NUMBA:
        print("numba unavailable or disabled; timing numpy only")
    rng = np.random.default_rng(0)

    print(f"{'topology':<10} {'kernel':<8} " + " ".join(f"{b + ' us':>10}" for b in backends) + "   speedup")
    for name, g in regular_topologies(25).items():
        for kname, call in kernel_cases(g, rng).items():
            times = []
            for b in backends:
                k = BACKENDS[b]
                call(k)  # warm-up / compile
                times.append(best(lambda: call(k), 200, args.repeat) * 1e6)
            ratio = f"{times[0] / times[1]:8.2f}x" if len(times) > 1 else ""
            print(f"{name:<10} {kname:<8} " + " ".join(f"{t:10.1f}" for t in times) + f"  {ratio}")

    print(f"\nfull run(), ring, {args.rounds} rounds, sigma^2 = zeta^2 = 10")
    g = regular_topologies(25)["ring"]
    p = generate_quadratic(50, 25, np.sqrt(10), np.sqrt(10), 0)
    a = example1_alpha(g, 1e3)
    wi, eta_p = alpha_induced(g, a, 0.5)
    params = {"dpsgd": {"w": metropolis(g).w, "eta": 1e-3}, "ecl": {"alpha": a, "eta": 0.5},
              "gecl": {"w": wi, "eta_prime": eta_p, "alpha": a}, "gt": {"w": metropolis(g).w, "eta": 0.1}}
    for algo, prm in params.items():
        row = []
        for b in backends:
            run(algo, p, g, prm, 5, 0, backend=b)
            t0 = time.perf_counter()
            rec = run(algo, p, g, prm, args.rounds, 0, backend=b)
            row.append(time.perf_counter() - t0)
            final = rec.final()
        print(f"{algo:<6} " + " ".join(f"{b} {t:6.3f}s" for b, t in zip(backends, row)) + f"  final {final:.3e}")


if __name__ == "__main__":
    main()
