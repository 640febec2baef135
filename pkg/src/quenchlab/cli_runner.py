"""Experiment orchestration: YAML configs, a catalog of named experiments, CSV/JSON artifacts.

Precedence for every setting: command-line flag > config file > catalog default.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import __version__
from .assumption_checker import build_ak_spec, cesaro_limit, hoeffding_check, quenched_bound_report
from .correlation_lab import (
    correlation_curve,
    decay_fit,
    equivariance_residual,
    equivariant_density,
    identity_observable,
    sign_observable,
)
from .distortion_lab import distortion_scan, koebe_ratio_scan, schwarzian_scan
from .errors import QuenchLabError, ValidationError
from .map_families import GH_PARAMETER_GRID, GHParams, gh_build
from .numerics import log_grid, loglog_fit
from .random_cocycle import ParamDistribution, sample_omega
from .tower_builder import (
    _write_csv,
    annealed_tail,
    build_ladder,
    build_partition,
    exact_tail,
    tower_mass,
)

MANIFEST_SCHEMA = "quenchlab.manifest/1"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


# ------------------------------------------------------------------ config


def parse_distribution(raw: dict | None, family: str) -> ParamDistribution:
    """Build a distribution from its dict form (the inverse of ``ParamDistribution.to_dict``)."""
    if raw is None:
        if family == "gh":
            return ParamDistribution.discrete([(GH_PARAMETER_GRID[0], 0.5), (GH_PARAMETER_GRID[1], 0.5)])
        return ParamDistribution.discrete([(1.5, 0.5), (2.5, 0.5)])
    kind = raw.get("kind")
    if kind == "uniform":
        return ParamDistribution.uniform(raw["lo"], raw["hi"])
    if kind == "discrete":
        atoms = []
        for a in raw.get("atoms", []):
            v = a["value"]
            if isinstance(v, (list, tuple)):
                v = GHParams(*map(float, v))
            elif isinstance(v, dict):
                v = GHParams(**{k: float(x) for k, x in v.items()})
            atoms.append((v, float(a["p"])))
        return ParamDistribution.discrete(atoms, sanity=bool(raw.get("sanity", False)))
    raise ValidationError(f"unknown distribution kind {kind!r}")


@dataclass
class ExperimentConfig:
    experiment: str
    family: str = "pik"
    distribution: dict | None = None
    params: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    out: str = "results"
    workers: int = 1
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a mapping")
        return cls.from_dict(data)

    def resolved_params(self) -> dict:
        exp = EXPERIMENTS[self.experiment]
        unknown = set(self.params) - set(exp.defaults)
        if unknown:
            raise ValidationError(f"unknown parameters for {self.experiment}: {sorted(unknown)}")
        return {**exp.defaults, **self.params}

    def validate(self) -> ParamDistribution:
        """Check everything that can be checked before computing; returns the distribution."""
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}; see `quenchlab list`")
        if self.family not in ("pik", "gh"):
            raise ValidationError("family must be 'pik' or 'gh'")
        if not self.seeds:
            raise ValidationError("seed list is empty; seeds must be given explicitly")
        if any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in self.seeds):
            raise ValidationError("seeds must be non-negative integers")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ValidationError("workers must be a positive integer")
        d = parse_distribution(self.distribution, self.family)
        if d.family != self.family:
            raise ValidationError(f"distribution family {d.family} does not match family {self.family}")
        params = self.resolved_params()
        for k, v in params.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v < 0:
                raise ValidationError(f"parameter {k} must be non-negative")
        return d


@dataclass
class RunManifest:
    schema: str
    config: dict
    software: dict
    status: str
    started: float
    wall_time: float | None = None
    tasks: int = 0
    workers: int = 1
    derived: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    def write(self, path: Path):
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable))
        tmp.replace(path)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.bool_):
        return bool(v)
    return str(v)


# --------------------------------------------------------------- task results


@dataclass
class TaskResult:
    """Rows per output table plus scalar summaries, from one task."""

    key: object
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    summary: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    name: str
    claim: str
    doc: str
    defaults: dict
    runner: Callable = field(repr=False)
    tasks: Callable | None = field(default=None, repr=False)
    aggregate: Callable | None = field(default=None, repr=False)


def _window(d, seed, past, future):
    return sample_omega(d, past, future, seed)


# ---------------------------------------------------------------- runners


def _run_ladder(cfg, d, seed, p):
    w = _window(d, seed, 0, p["depth"] + 1)
    lad = build_ladder(cfg.family, w, p["depth"])
    rows = list(zip(range(lad.depth + 1), lad.x_minus, lad.x_plus, lad.y_minus, lad.y_plus))
    return TaskResult(seed, {"ladder": (["n", "x_minus", "x_plus", "y_minus", "y_plus"], rows)},
                      {"max_residual": lad.max_residual})


def _run_partition(cfg, d, seed, p):
    w = _window(d, seed, 0, p["N_R"] + 1)
    part = build_partition(cfg.family, w, p["N_R"])
    rows = list(zip(part.i, part.j, part.left, part.right, part.return_time))
    return TaskResult(seed, {"partition": (["i", "j", "left", "right", "return_time"], rows)},
                      {"cells": len(part), "covered_mass": part.covered_mass, "lambda_length": part.lambda_length})


def _run_tails(cfg, d, seed, p):
    ns = log_grid(p["n_lo"], p["N_R"], p["points"])
    w = _window(d, seed, 0, p["N_R"] + 1)
    t = exact_tail(cfg.family, w, ns)
    fit = loglog_fit(ns, t)
    return TaskResult(seed, {"tails": (["n", "tail"], list(zip(ns, t))),
                             "tails_fit": (["slope", "intercept", "r2"], [(fit.exponent, fit.intercept, fit.r2)])},
                      {"slope": fit.exponent})


def _agg_slopes(results, p):
    s = np.array([r.summary["slope"] for r in results])
    return {}, {"mean_slope": float(s.mean()), "slope_stderr": float(s.std(ddof=1) / math.sqrt(s.size)) if s.size > 1
                else 0.0}


def _run_annealed(cfg, d, seed, p):
    ns = log_grid(p["n_lo"], p["n_hi"], p["points"])
    est = annealed_tail(cfg.family, d, ns, p["n_samples"], seed)
    rows = [(e.n, e.mean, e.stderr, e.ci_low, e.ci_high) for e in est]
    fit = loglog_fit(ns, [e.mean for e in est])
    return TaskResult(seed, {"annealed": (["n", "mean", "stderr", "ci_low", "ci_high"], rows)}, {"slope": fit.exponent})


def _run_assumption(cfg, d, seed, p):
    spec = build_ak_spec(d, p["n_max"], corrected=bool(p["corrected"]))
    res = cesaro_limit(spec, p["n_max"], q=p["q"])
    rows = list(zip(res.ns, res.averages))
    limits = {"c_k_low_last": float(spec.c_k("low")[-1]), "c_k_high_last": float(spec.c_k("high")[-1])}
    return TaskResult(seed, {"cesaro": (["n", "average"], rows)},
                      {"limit": res.limit, "last_average": res.last_average, "reference": res.reference, "q": res.q,
                       "cauchy": res.cauchy},
                      {"M": spec.M, "span": spec.span, **limits})


def _run_hoeffding(cfg, d, seed, p):
    spec = build_ak_spec(d, p["n"], corrected=bool(p["corrected"]))
    ts = np.linspace(p["t_min"], p["t_max"], p["t_points"])
    rows = hoeffding_check(spec, p["n"], ts, p["trials"], seed)
    out = [(r.t, r.frequency, r.bound, int(r.satisfied)) for r in rows]
    return TaskResult(seed, {"hoeffding": (["t", "frequency", "bound", "satisfied"], out)},
                      {"violations": sum(1 for r in rows if not r.satisfied)}, {"M": spec.M, "span": spec.span})


def _run_quenched(cfg, d, seed, p):
    spec = build_ak_spec(d, p["n_max"])
    rep = quenched_bound_report(spec, p["n_max"], p["trials"], p["c_fraction"], seed)
    rows = list(zip(range(p["trials"]), rep.n1, rep.censored.astype(int), rep.limsup_stat))
    return TaskResult(seed, {"quenched": (["trial", "n1", "censored", "limsup_stat"], rows)},
                      {"c_nu": rep.c_nu, "censored_fraction": rep.censored_fraction,
                       "limsup_mean": float(rep.limsup_stat.mean()), "limsup_bound": rep.limsup_bound},
                      {"M": spec.M, "span": spec.span})


def _run_distortion(cfg, d, seed, p):
    w = _window(d, seed, 0, p["window"])
    part = build_partition(cfg.family, w, p["N_R"])
    rep = distortion_scan(cfg.family, w, part, p["pairs_per_cell"], seed, max_return=p["max_return"] or None)
    D = rep.D_hat
    rows = [(q.i, q.j, q.s, q.ratio, D * 0.5**q.s, int(q.ratio - 1.0 <= D * 0.5**q.s)) for q in rep.samples]
    return TaskResult(seed, {"distortion": (["i", "j", "s", "ratio", "bound", "satisfied"], rows)},
                      {"D_hat": D, "D_image": rep.D_image, "max_ratio": rep.max_ratio, "censored": rep.censored})


def _schwarzian_tasks(cfg, p):
    if cfg.family == "gh":
        return list(range(len(GH_PARAMETER_GRID)))
    return [float(a) for a in np.linspace(p["alpha_lo"], p["alpha_hi"], p["alphas"])]


def _run_schwarzian(cfg, d, key, p):
    param = GH_PARAMETER_GRID[key] if cfg.family == "gh" else key
    rep = schwarzian_scan(cfg.family, param, p["grid"])
    label = "/".join(f"{v:g}" for v in param.key()) if cfg.family == "gh" else f"{param:g}"
    return TaskResult(key, {"schwarzian": (["param", "max_S", "argmax", "negative"],
                                           [(label, rep.max_value, rep.argmax, int(rep.negative))])},
                      {"negative": rep.negative})


def _run_koebe(cfg, d, seed, p):
    w = _window(d, seed, 0, p["N"] + 4)
    rep = koebe_ratio_scan(cfg.family, w, p["N"])
    return TaskResult(seed, {"koebe": (["n", "ratio"], list(enumerate(rep.ratios)))},
                      {"max_ratio": rep.max_ratio, "spacing_ok": rep.spacing_ok,
                       "spacing_margins": rep.spacing_margins.tolist()})


def _run_correlations(cfg, d, seed, p):
    w = _window(d, seed, 0, p["nmax"])
    v, e = correlation_curve(cfg.family, w, p["nmax"], sign_observable(), identity_observable(),
                             samples=p["samples"], seed=seed)
    return TaskResult(seed, {"correlations_per_omega": (["n", "cor", "mc_stderr"], list(zip(range(v.size), v, e)))},
                      {"values": v.tolist()})


def _agg_correlations(results, p):
    a = np.abs(np.array([r.summary.pop("values") for r in results]))
    ns = np.arange(a.shape[1])
    se = a.std(axis=0, ddof=1) / math.sqrt(a.shape[0]) if a.shape[0] > 1 else np.zeros(a.shape[1])
    rows = list(zip(ns, a.mean(axis=0), se, a.min(axis=0), a.max(axis=0)))
    table = {"correlations": (["n", "mean_abs_cor", "stderr", "per_omega_min", "per_omega_max"], rows)}
    summ = {}
    try:
        fit = decay_fit(ns, a.mean(axis=0), burn_in=p["burn_in"], min_decades=p["min_decades"])
        summ = {"exponent": fit.exponent, "envelope_exponent": fit.envelope_exponent, "r2": fit.r2,
                "super_polynomial": fit.super_polynomial}
    except ValidationError as exc:
        summ = {"fit_skipped": str(exc)}
    return table, summ


def _gh_validate_tasks(cfg, p):
    return list(range(len(GH_PARAMETER_GRID)))


def _run_gh_validate(cfg, d, key, p):
    par = GH_PARAMETER_GRID[key]
    m = gh_build(par)
    r = m.report
    row = (*par.key(), m.eps, m.rho, int(r["ok"]))
    return TaskResult(key, {"gh_validate": (["gamma", "k", "a", "b", "eps", "rho", "ok"], [row])}, {"ok": r["ok"]})


def _run_density(cfg, d, seed, p):
    w = _window(d, seed, p["depth"] + 1, 2)
    D = equivariant_density(cfg.family, w, p["depth"], p["bins"], p["samples"], seed,
                            cauchy_depth=p["cauchy_depth"] or None)
    res = equivariance_residual(cfg.family, w, D, p["samples"], seed + 1)
    rows = list(zip(D.edges[:-1], D.edges[1:], D.masses, [D.depth] * D.bins))
    return TaskResult(seed, {"density": (["bin_left", "bin_right", "mass", "depth"], rows)},
                      {"equivariance_residual": res, "cauchy_increment": D.cauchy_increment, "flagged": D.flagged})


def _run_tower(cfg, d, seed, p):
    L, Kc, step = p["L"], p["K"], p["step"]
    w = _window(d, seed, L + 1, L + Kc + 1)
    cache: dict = {}
    rows = []
    prev = None
    # the last two levels give the unit increment (L-1, K-1) -> (L, K)
    for ell in sorted(set(range(step, L + 1, step)) | {max(L - 1, 1), L}):
        k = min(Kc, ell * Kc // L)
        tm = tower_mass(cfg.family, w, ell, k, cache)
        inc = float("nan") if prev is None else tm.value - prev
        rows.append((ell, k, tm.value, inc))
        prev = tm.value
    return TaskResult(seed, {"tower_mass": (["L", "K", "value", "increment"], rows)},
                      {"final_value": rows[-1][2], "final_increment": rows[-1][3]})


EXPERIMENTS: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment("ladder", "power-law asymptotics of the preimages of 0 and of the neutral points",
                   "boundary sequences x_n, y_n of Delta_n^+- for each seed", {"depth": 1000}, _run_ladder),
        Experiment("partition", "first-return partition of Lambda into cells (i, j) with return time i + j",
                   "all cells with return time <= N_R", {"N_R": 100}, _run_partition),
        Experiment("tails", "quenched polynomial tail of the return time m(R_omega > n)",
                   "exact tails on a log grid and the fitted log-log slope per seed",
                   {"N_R": 10_000, "n_lo": 100, "points": 8}, _run_tails, aggregate=_agg_slopes),
        Experiment("annealed-tails", "annealed return-time law E_P m(R_omega = n)",
                   "Monte Carlo over omega with confidence intervals",
                   {"n_lo": 10, "n_hi": 1000, "points": 8, "n_samples": 100}, _run_annealed),
        Experiment("assumption", "Assumption (A)/(B): weighted Cesaro limit c(nu) of E_nu A_k / E_nu B_k",
                   "Cesaro averages on a log grid and the extrapolated limit",
                   {"n_max": 100_000, "q": None, "corrected": False}, _run_assumption),
        Experiment("hoeffding", "Hoeffding concentration of the partial sums of A_k around their mean",
                   "empirical exceedance frequency against the analytic bound on a t grid",
                   {"n": 10_000, "trials": 10_000, "t_min": 0.01, "t_max": 0.1, "t_points": 10, "corrected": False},
                   _run_hoeffding),
        Experiment("quenched-bound", "pathwise preimage bound for n >= n_1(omega) with constant c < c(nu)",
                   "n_1(omega) distribution, censoring and the limsup statistic",
                   {"n_max": 10_000, "trials": 100, "c_fraction": 0.5}, _run_quenched),
        Experiment("distortion", "bounded distortion of the induced map in the separation-time metric",
                   "Jacobian ratios against D (1/2)^s on sampled pairs",
                   {"N_R": 50, "pairs_per_cell": 2, "max_return": 30, "window": 20_000}, _run_distortion),
        Experiment("schwarzian", "negative Schwarzian derivative of each fiber map away from Delta_0",
                   "max Sg over a grid of I+ minus Delta_0^+ per parameter",
                   {"grid": 10_000, "alpha_lo": 1.1, "alpha_hi": 2.9, "alphas": 10}, _run_schwarzian,
                   tasks=_schwarzian_tasks),
        Experiment("koebe", "uniformly bounded ratio of consecutive preimage gaps near 0 (Koebe)",
                   "gap ratios of the minus ladder and the spacing hypothesis",
                   {"N": 1000}, _run_koebe),
        Experiment("correlations", "polynomial decay of quenched future correlations",
                   "Monte Carlo future correlations per omega, averaged |Cor_n| and a decay fit",
                   {"nmax": 64, "samples": 100_000, "burn_in": 4, "min_decades": 1.2}, _run_correlations,
                   aggregate=_agg_correlations),
        Experiment("gh-validate", "admissible GH maps: convex branches, expansion and exact local forms",
                   "glue construction and validation report per parameter tuple", {}, _run_gh_validate,
                   tasks=_gh_validate_tasks),
        Experiment("density", "existence of equivariant absolutely continuous measures for GH cocycles",
                   "pushforward histogram, Cauchy increment in depth and equivariance residual",
                   {"depth": 40, "bins": 512, "samples": 1_000_000, "cauchy_depth": 30}, _run_density),
        Experiment("tower-mass", "finiteness of the random tower mass",
                   "partial sums over (L, K) and their increments",
                   {"L": 200, "K": 200, "step": 25}, _run_tower),
    ]
}


def list_experiments() -> list[dict]:
    """Static catalog: name, claim exercised, description and parameter defaults."""
    return [{"name": e.name, "claim": e.claim, "doc": e.doc, "defaults": dict(e.defaults)} for e in EXPERIMENTS.values()]


# -------------------------------------------------------------------- run


def _execute(args):
    cfg, d, key, params = args
    try:
        return _runner(cfg)(cfg, d, key, params), None
    except (QuenchLabError, ArithmeticError, ValueError) as exc:
        return None, {"task": key, "error": type(exc).__name__, "message": str(exc)}


def _runner(cfg):
    return EXPERIMENTS[cfg.experiment].runner


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(config: ExperimentConfig) -> RunManifest:
    """Validate, execute every task, write sorted CSVs atomically and the manifest."""
    d = config.validate()
    exp = EXPERIMENTS[config.experiment]
    params = config.resolved_params()
    keys = exp.tasks(config, params) if exp.tasks else sorted(config.seeds)
    outdir = Path(config.out) / config.experiment
    outdir.mkdir(parents=True, exist_ok=True)
    mpath = outdir / "manifest.json"
    man = RunManifest(MANIFEST_SCHEMA, {**asdict(config), "params": params}, _software(), "running", time.time(),
                      tasks=len(keys), workers=config.workers)
    man.write(mpath)
    t0 = time.perf_counter()
    jobs = [(config, d, k, params) for k in keys]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            outcomes = list(pool.map(_execute, jobs))
    else:
        outcomes = [_execute(j) for j in jobs]
    results = [r for r, _ in outcomes if r is not None]
    man.failures = [f for _, f in outcomes if f is not None]
    results.sort(key=lambda r: r.key)

    tables: dict = {}
    for r in results:
        for name, (header, rows) in r.tables.items():
            h, acc = tables.setdefault(name, (["task", *header], []))
            acc.extend((_task_cell(r.key), *row) for row in rows)
        man.derived.update(r.derived)
    if exp.aggregate and results:
        extra, summ = exp.aggregate(results, params)
        for name, (header, rows) in extra.items():
            tables[name] = (header, rows)
        man.summary["aggregate"] = summ
    man.summary["tasks"] = {str(r.key): r.summary for r in results}
    for name, (header, rows) in tables.items():
        path = outdir / f"{name}.csv"
        _write_csv(path, header, rows)
        man.outputs[path.name] = _sha256(path)
    man.wall_time = time.perf_counter() - t0
    man.status = "failed" if man.failures else "ok"
    man.write(mpath)
    return man


def _task_cell(key):
    return key if isinstance(key, (int, float, str)) else str(key)


def _software():
    import numba
    import scipy

    return {"quenchlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


# --------------------------------------------------------------------- CLI


def _parser():
    ap = argparse.ArgumentParser(prog="quenchlab", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", help="experiment name, or 'list' for the catalog")
    ap.add_argument("--config", help="YAML config file")
    ap.add_argument("--seed", type=int, action="append", help="seed (repeatable); replaces the config seeds")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--family", choices=["pik", "gh"])
    ap.add_argument("--workers", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override an experiment parameter (value parsed as YAML)")
    return ap


def config_from_args(ns) -> ExperimentConfig:
    data = {}
    if ns.config:
        with open(ns.config) as fh:
            data = yaml.safe_load(fh) or {}
    data["experiment"] = ns.experiment
    if ns.seed:
        data["seeds"] = ns.seed
    if ns.out:
        data["out"] = ns.out
    if ns.family:
        data["family"] = ns.family
    if ns.workers:
        data["workers"] = ns.workers
    params = dict(data.get("params") or {})
    for item in ns.set:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        params[k] = yaml.safe_load(v)
    data["params"] = params
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    ns = _parser().parse_args(argv)
    if ns.experiment == "list":
        for e in list_experiments():
            print(f"{e['name']:15s} {e['claim']}")
            print(f"{'':15s} {e['doc']}; defaults {e['defaults']}")
        return EXIT_OK
    try:
        man = run(config_from_args(ns))
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (QuenchLabError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"status": man.status, "outputs": man.outputs, "summary": man.summary.get("aggregate") or man.summary["tasks"]},
                     default=_jsonable))
    return EXIT_OK if man.status == "ok" else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
