"""Experiment configuration, sweeps, CSV records and figure presets."""
from __future__ import annotations

import csv
import itertools
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .algorithms import ALGORITHMS, ConfigError, RunRecord, run
from .mixing import AlphaWeights, alpha_induced, example1_alpha, frobenius_consts, parse_mixing, spectral_gap
from .objectives import generate_quadratic
from .topology import Graph, parse_topology


# parameter -> algorithms that accept it
ALGO_PARAMS = {
    "eta": ("dpsgd", "ecl", "gt", "gecl"),
    "eta_prime": ("gecl",),
    "theta": ("ecl",),
    "alpha_total": ("ecl", "gecl"),
    "mixing": ("dpsgd", "gecl", "gt"),
    "z_init": ("ecl",),
}
REQUIRED = {"dpsgd": ("eta",), "ecl": ("eta", "alpha_total"), "gecl": ("eta_prime",), "gt": ("eta",)}
DEFAULTS = {
    "dpsgd": {"mixing": "metropolis"},
    "ecl": {"theta": 0.5, "z_init": "theorem1"},
    "gecl": {"mixing": "metropolis", "alpha_total": 0.0},
    "gt": {"mixing": "metropolis"},
}
GLOBAL_KEYS = {"algorithm", "topology", "d", "n", "rounds", "zeta_sq", "sigma_sq",
               "seed", "repetitions", "out", "x0"}
_ALIASES = {"algorithms": "algorithm", "topologies": "topology", "r": "rounds", "reps": "repetitions"}


@dataclass
class ExperimentConfig:
    algorithms: list
    topologies: list
    d: int = 50
    n: int = 25
    rounds: int = 10_000
    zeta_sq: list = field(default_factory=lambda: [0.0])
    sigma_sq: list = field(default_factory=lambda: [0.0])
    params: dict = field(default_factory=dict)  # algorithm -> resolved hyperparameters
    seed: int = 0
    repetitions: int = 1
    out: str | None = None
    x0: float = 0.0
    name: str = "custom"

    def points(self):
        """Sweep points in canonical order: algorithm x topology x zeta^2 x sigma^2 x rep."""
        return list(itertools.product(self.algorithms, self.topologies, self.zeta_sq,
                                      self.sigma_sq, range(self.repetitions)))

    def echo(self) -> dict:
        return {"experiment": self.name, "d": self.d, "n": self.n, "rounds": self.rounds,
                "master_seed": self.seed, "repetitions": self.repetitions, "x0": self.x0}


def _split_list(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [s.strip() for s in str(v).split(",") if s.strip()]


def _floats(v):
    return [float(s) for s in _split_list(v)]


def _coerce(param, v):
    if param in ("mixing", "z_init"):
        return str(v).strip()
    return float(v)


def config_from_dict(raw: dict, name: str = "custom") -> ExperimentConfig:
    """Validate a flat key/value mapping into an ExperimentConfig.

    Algorithm hyperparameters may be given bare (``eta = 0.5``), applying to
    every selected algorithm that takes them, or prefixed (``ecl.eta = 0.5``).
    All problems are collected and raised together.
    """
    errors = []
    keys = {}
    for k, v in raw.items():
        k = k.strip().lower()
        keys[_ALIASES.get(k, k)] = v

    algos = _split_list(keys.get("algorithm", ""))
    if not algos:
        errors.append("algorithm: missing")
    for a in algos:
        if a not in ALGORITHMS:
            errors.append(f"algorithm: unknown {a!r}")
    topos = _split_list(keys.get("topology", ""))
    if not topos:
        errors.append("topology: missing")

    params = {a: dict(DEFAULTS.get(a, {})) for a in algos if a in ALGORITHMS}
    bare, prefixed = [], []
    for k, v in keys.items():
        if k in GLOBAL_KEYS:
            continue
        prefix, dot, pname = k.partition(".")
        if dot:
            if prefix not in params:
                errors.append(f"{k}: algorithm {prefix!r} is not selected")
            elif prefix not in ALGO_PARAMS.get(pname, ()):
                errors.append(f"{k}: {prefix} takes no parameter {pname!r}")
            else:
                prefixed.append((k, [prefix], pname, v))
        elif k not in ALGO_PARAMS:
            errors.append(f"{k}: unknown key")
        else:
            targets = [a for a in params if a in ALGO_PARAMS[k]]
            if targets:
                bare.append((k, targets, k, v))
            else:
                errors.append(f"{k}: not used by any selected algorithm")
    # prefixed keys win over bare ones
    for k, targets, pname, v in bare + prefixed:
        for a in targets:
            try:
                params[a][pname] = _coerce(pname, v)
            except ValueError:
                errors.append(f"{k}: bad value {v!r}")

    for a, p in params.items():
        for req in REQUIRED[a]:
            if req not in p:
                errors.append(f"{a}.{req}: missing")
        if str(p.get("mixing", "")).startswith("alpha") and "eta" not in p:
            errors.append(f"{a}.eta: needed by mixing {p['mixing']!r}")

    cfg = None
    try:
        cfg = ExperimentConfig(
            algorithms=algos, topologies=topos, params=params, name=name,
            d=int(keys.get("d", 50)), n=int(keys.get("n", 25)),
            rounds=int(keys.get("rounds", 10_000)),
            zeta_sq=_floats(keys.get("zeta_sq", "0")), sigma_sq=_floats(keys.get("sigma_sq", "0")),
            seed=int(keys.get("seed", 0)), repetitions=int(keys.get("repetitions", 1)),
            out=keys.get("out"), x0=float(keys.get("x0", 0.0)))
    except ValueError as exc:
        errors.append(f"bad numeric value: {exc}")
    if cfg is not None:
        if not cfg.zeta_sq:
            errors.append("zeta_sq: empty sweep")
        if not cfg.sigma_sq:
            errors.append("sigma_sq: empty sweep")
        if any(v < 0 for v in cfg.zeta_sq + cfg.sigma_sq):
            errors.append("zeta_sq/sigma_sq: must be nonnegative")
        if cfg.rounds < 0 or cfg.repetitions < 1:
            errors.append("rounds/repetitions: out of range")
        for t in topos:
            try:
                parse_topology(t, cfg.n)
            except ValueError as exc:
                errors.append(f"topology: {exc}")
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read ``key = value`` lines (``#`` comments) or a flat JSON object."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return config_from_dict(json.loads(text), name=path.stem)
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        raw[k.strip()] = v.strip()
    return config_from_dict(raw, name=path.stem)


def point_seed(master: int, rep: int) -> int:
    """Seed for repetition ``rep``; shared by every sweep point of that repetition."""
    return int(np.random.SeedSequence([master, rep]).generate_state(1, np.uint64)[0])


def resolve_params(algo: str, p: dict, g: Graph):
    """Turn config hyperparameters into run() parameters plus diagnostics."""
    if algo == "ecl":
        alpha = example1_alpha(g, p["alpha_total"])
        w, eta_p = alpha_induced(g, alpha, p["eta"])
        params = {"alpha": alpha, "eta": p["eta"], "theta": p["theta"], "z_init": p["z_init"]}
        return params, w, alpha, float(eta_p[0])
    w = parse_mixing(p["mixing"], g, p.get("eta"))
    if algo == "gecl":
        total = p.get("alpha_total", 0.0)
        alpha = AlphaWeights.zeros(g) if total == 0 else example1_alpha(g, total)
        return {"w": w, "eta_prime": p["eta_prime"], "alpha": alpha}, w, alpha, p["eta_prime"]
    return {"w": w, "eta": p["eta"]}, w, AlphaWeights.zeros(g), float("nan")


def run_point(cfg: ExperimentConfig, point, backend: str | None = None) -> RunRecord:
    algo, topo, zeta_sq, sigma_sq, rep = point
    seed = point_seed(cfg.seed, rep)
    g = parse_topology(topo, cfg.n)
    problem = generate_quadratic(cfg.d, cfg.n, math.sqrt(zeta_sq), math.sqrt(sigma_sq), seed)
    params, w, alpha, eta_p = resolve_params(algo, cfg.params[algo], g)
    rec = run(algo, problem, g, params, cfg.rounds, seed, x0=cfg.x0, backend=backend)
    b_prime, b = frobenius_consts(w, alpha)
    hyper = {k: v for k, v in cfg.params[algo].items()}
    rec.meta = {**cfg.echo(), **rec.meta, "topology": topo, "zeta_sq": zeta_sq,
                "sigma_sq": sigma_sq, "rep": rep, "p": spectral_gap(w), "b": b, "b_prime": b_prime,
                "eta_prime": eta_p, "vectors_per_round": _vectors_per_round(algo),
                **{f"param.{k}": v for k, v in hyper.items()}}
    return rec


def _vectors_per_round(algo):
    # d-vectors each node sends per neighbor per round
    return {"dpsgd": 1, "ecl": 1, "gecl": 3, "gt": 2}[algo]


def _run_point_star(args):
    return run_point(*args)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, backend: str | None = None) -> list:
    """Run every sweep point; write one CSV per record plus index.csv if ``cfg.out``."""
    points = cfg.points()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_point_star, [(cfg, pt, backend) for pt in points]))
    else:
        records = [run_point(cfg, pt, backend) for pt in points]
    if cfg.out:
        write_records(records, cfg.out)
    return records


def record_filename(rec: RunRecord) -> str:
    m = rec.meta
    raw = f"{m['algorithm']}_{m['topology']}_z{m['zeta_sq']:g}_s{m['sigma_sq']:g}_rep{m['rep']}.csv"
    return re.sub(r"[^A-Za-z0-9_.\-]", "-", raw)


def write_record(rec: RunRecord, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for k, v in rec.meta.items():
            fh.write(f"# {k}={json.dumps(v)}\n")
        wr = csv.writer(fh)
        cols = list(rec.rows)
        wr.writerow(cols)
        for row in zip(*(rec.rows[c] for c in cols)):
            wr.writerow([repr(float(v)) for v in row])


def read_record(path) -> RunRecord:
    meta, lines = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("# "):
                k, _, v = line[2:].rstrip("\n").partition("=")
                meta[k] = json.loads(v)
            else:
                lines.append(line)
    rd = csv.reader(lines)
    cols = next(rd)
    data = np.array([[float(x) for x in row] for row in rd]).reshape(-1, len(cols))
    return RunRecord(meta, {c: data[:, k].copy() for k, c in enumerate(cols)})


def write_records(records, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    index = out / "index.csv"
    with index.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["file", "algorithm", "topology", "zeta_sq", "sigma_sq", "rep", "seed", "final_error"])
        for rec in records:
            name = record_filename(rec)
            write_record(rec, out / name)
            m = rec.meta
            wr.writerow([name, m["algorithm"], m["topology"], m["zeta_sq"], m["sigma_sq"],
                         m["rep"], m["seed"], repr(rec.final())])
    return index


def summarize(records) -> dict:
    """Final-round error per (algorithm, topology, zeta^2, sigma^2), averaged over reps."""
    rounds = {r.rounds for r in records}
    if len(rounds) > 1:
        raise ValueError(f"records disagree on the number of rounds: {sorted(rounds)}")
    groups = {}
    for r in records:
        m = r.meta
        groups.setdefault((m["algorithm"], m["topology"], m["zeta_sq"], m["sigma_sq"]), []).append(r.final())
    return {k: float(np.mean(v)) for k, v in groups.items()}


def format_summary(table: dict) -> str:
    lines = [f"{'algorithm':<8} {'topology':<12} {'zeta^2':>7} {'sigma^2':>8} {'final error':>14}"]
    for (a, t, z, s), e in sorted(table.items()):
        lines.append(f"{a:<8} {t:<12} {z:>7g} {s:>8g} {e:>14.4e}")
    return "\n".join(lines)


# hyperparameters of the synthetic experiments: D-PSGD with Metropolis
# weights and eta = 1e-3; ECL with eta = 0.5, alpha = 1e3 split evenly over
# edges; G-ECL with Metropolis weights, eta' = 1e-3 and zero alpha
REFERENCE_PARAMS = {
    "dpsgd": {"mixing": "metropolis", "eta": 1e-3},
    "ecl": {"eta": 0.5, "alpha_total": 1e3, "theta": 0.5, "z_init": "theorem1"},
    "gecl": {"mixing": "metropolis", "eta_prime": 1e-3, "alpha_total": 0.0},
}
REFERENCE_TOPOLOGIES = ["ring", "torus:5x5", "complete"]
PRESETS = {
    "fig2": {"zeta_sq": [0.0, 10.0], "sigma_sq": [0.0, 10.0]},
    "fig3": {"zeta_sq": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0], "sigma_sq": [0.0]},
    "fig4": {"zeta_sq": [0.0], "sigma_sq": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]},
    "fig5": {"zeta_sq": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0], "sigma_sq": [10.0]},
    "fig6": {"zeta_sq": [10.0], "sigma_sq": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]},
}


def preset(name: str, seed: int = 0, repetitions: int = 1, rounds: int = 10_000,
           out: str | None = None, algorithms=("gecl", "ecl", "dpsgd"), topologies=None) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    grid = PRESETS[name]
    return ExperimentConfig(
        algorithms=list(algorithms), topologies=list(topologies or REFERENCE_TOPOLOGIES),
        d=50, n=25, rounds=rounds, zeta_sq=list(grid["zeta_sq"]), sigma_sq=list(grid["sigma_sq"]),
        params={a: dict(REFERENCE_PARAMS[a]) for a in algorithms}, seed=seed,
        repetitions=repetitions, out=out, name=name)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
