"""Experiment recipes, result files and the command-line entry point.

Config files are flat ``key = value`` text.  Blank lines and anything after
``#`` are ignored, lists are comma separated, and fixed-boundary points are
written ``eta = 0,-1; 3,4`` (points split by ``;``, coordinates by ``,``).
Command-line ``--set key=value`` and the dedicated flags override the file.

Every run writes into ``output_dir``:

* ``results.jsonl``: a config header line, then one record per work unit in
  index order.  No timestamps, so identical configs give identical bytes.
* ``summary.json``: config plus the aggregate verdict.
* CSV plot tables, each opening with a ``# config:`` comment line.
* ``manifest.json``: wall-clock times, backend and versions.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from glauberspec import __version__
from glauberspec._backend import BACKEND
from glauberspec.forms import (append_audit, check_lemma_comparison, check_relative_bound,
                               dirichlet_form_hat, dirichlet_form_tilde, random_vectors,
                               sweep_lemma, sweep_relative_bound, sweep_tilde_below_hat)
from glauberspec.generator import (RateFamily, assemble_generator, assemble_hat, assemble_tilde,
                                   symmetrize)
from glauberspec.hamiltonian import flip_delta_table, gibbs_table
from glauberspec.kmc import (autocorrelation_gap, gap_upper_bound_exact, matching_rate,
                             simulate, spectral_autocorrelation)
from glauberspec.lattice import (Lattice, build_lattice, constant_disorder, derive_seed,
                                 sample_disorder)
from glauberspec.perturbation import (band_bounds, band_deviation, band_tolerance,
                                      first_order_matrix, relative_bound_envelope)
from glauberspec.spectral import BandReport, band_spectrum, dense_spectrum, extract_band

EXPERIMENTS = ("band_check", "band_union", "perturbation_scaling", "form_audit", "mc_gap",
               "gap_bound", "export_ops")
COMMANDS = {"band-check": "band_check", "band-union": "band_union",
            "perturb-scaling": "perturbation_scaling", "form-audit": "form_audit",
            "mc-gap": "mc_gap", "gap-bound": "gap_bound", "export-ops": "export_ops"}

EXIT_PASS, EXIT_VIOLATIONS, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "band_check"
    d: int = 1
    lengths: tuple = (8,)
    bc: str = "periodic"
    eta: tuple = ()
    j_minus: float = -1.0
    j_plus: float = 1.0
    n_realizations: int = 10
    base_seed: int = 0
    betas: tuple = (0.02,)
    operator: str = "tilde"
    family: str = "heat_bath"
    solver: str = "auto"
    c2: float = 10.0
    violation_threshold: int = 0
    workers: int = 1
    output_dir: str = "results"
    # band_union
    n_ensembles: int = 2
    hausdorff_fraction: float = 0.01
    n_zeta: int = 5
    # perturbation_scaling
    ratio_low: float = 3.0
    ratio_high: float = 5.0
    ratio_fraction: float = 0.9
    scaling_operator: str = "hat"
    # form_audit
    n_vectors: int = 1000
    n_lemma_vectors: int = 10000
    # mc_gap
    replicas: int = 8
    events: int = 0
    t_max: float = 0.0
    burn_in: float = 50.0
    dt: float = 0.0
    tagged_site: int = 0
    max_sigma: float = 3.0
    max_relative: float = 0.15

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)
        need(self.experiment in EXPERIMENTS, f"experiment must be one of {EXPERIMENTS}")
        need(len(self.lengths) == self.d, "lengths must list one side per dimension")
        try:
            self.lattice()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        need(self.j_minus <= self.j_plus, "j_minus exceeds j_plus")
        need(self.n_realizations >= 0, "n_realizations must be >= 0")
        need(self.base_seed >= 0, "base_seed must be >= 0")
        need(len(self.betas) > 0 and all(b >= 0 for b in self.betas), "betas must be >= 0")
        need(self.operator in ("tilde", "hat"), "operator must be tilde or hat")
        need(self.scaling_operator in ("tilde", "hat"), "scaling_operator must be tilde or hat")
        need(self.family in ("heat_bath", "cosh_quarter"), "family must be heat_bath or cosh_quarter")
        need(self.solver in ("auto", "dense", "iterative"), "solver must be auto, dense or iterative")
        need(self.workers >= 1, "workers must be >= 1")
        need(self.n_ensembles >= 2, "band_union needs at least two ensembles")
        need(self.replicas >= 1, "replicas must be >= 1")
        n = math.prod(self.lengths)
        need(n <= 20, "at most 20 sites")
        if self.experiment == "perturbation_scaling":
            need(len(self.betas) == 2 and math.isclose(self.betas[1], 2 * self.betas[0]),
                 "perturbation_scaling needs betas = (b, 2b)")
        if self.experiment == "mc_gap":
            need(self.events > 0 or self.t_max > self.burn_in,
                 "mc_gap needs events > 0 or t_max > burn_in")
            need(n <= 12, "mc_gap compares against a dense spectrum: at most 12 sites")
        if self.experiment in ("form_audit", "gap_bound"):
            need(n <= 16, f"{self.experiment} enumerates states: at most 16 sites")
        need(0 <= self.tagged_site < n, "tagged_site out of range")
        return self

    def lattice(self) -> Lattice:
        return build_lattice(self.d, self.lengths, self.bc, self.eta)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = [list(p) if isinstance(p, tuple) else p for p in v]
        return out

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls().with_overrides(parse_config_text(text))

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def with_overrides(self, pairs: dict[str, str]) -> "RunConfig":
        kinds = {f.name: f.default for f in dataclasses.fields(self)}
        values = {}
        for key, raw in pairs.items():
            key = key.strip().replace("-", "_")
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw, kinds[key])
        if "d" not in values and len(values.get("lengths", ())) > 1:
            values["d"] = len(values["lengths"])
        if "d" in values and "lengths" in values and len(values["lengths"]) == 1:
            values["lengths"] = values["lengths"] * values["d"]
        elif "d" in values and "lengths" not in values:
            values["lengths"] = (self.lengths[0],) * values["d"]
        return dataclasses.replace(self, **values)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _coerce(key: str, raw: Any, default: Any):
    if not isinstance(raw, str):
        return raw
    try:
        if key == "eta":
            return tuple(tuple(int(c) for c in p.split(",")) for p in raw.split(";") if p.strip())
        if isinstance(default, tuple):
            cast = int if key == "lengths" else float
            return tuple(cast(s) for s in raw.split(",") if s.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


# ---------------------------------------------------------------- work units

def _field_for(cfg: RunConfig, lattice: Lattice, index: int):
    seed = derive_seed(cfg.base_seed, index)
    return seed, sample_disorder(lattice, cfg.j_minus, cfg.j_plus, seed)


def _symmetrized(cfg: RunConfig, field, beta: float):
    if cfg.operator == "hat":
        return assemble_hat(field, beta)
    if cfg.family == "heat_bath":
        return assemble_tilde(field, beta)
    gen = assemble_generator(field, beta, RateFamily.named(cfg.family))
    return symmetrize(gen, gibbs_table(field, beta))


def _band_unit(cfg: RunConfig, index: int, beta: float, field=None, seed=None) -> dict:
    lattice = cfg.lattice()
    if field is None:
        seed, field = _field_for(cfg, lattice, index)
    op = _symmetrized(cfg, field, beta)
    spec = band_spectrum(op, field.n_sites, cfg.solver, seed=index % 2 ** 32)
    band = extract_band(spec, field.n_sites)
    lo, hi = band_tolerance(beta, lattice.d, field.J, cfg.c2)
    g_minus, g_plus = band_bounds(beta, lattice.d, field.J)
    rec = {"realization": index, "seed": seed, "beta": beta, "J": field.J,
           "ground": band.ground, "band": list(band.band), "band_min": band.band_min,
           "band_max": band.band_max, "gap_below": band.gap_below, "gap_above": band.gap_above,
           "isolated": band.isolated, "g_minus": g_minus, "g_plus": g_plus,
           "tolerance_low": lo, "tolerance_high": hi, "violations": band.within(lo, hi),
           "envelope_high": relative_bound_envelope(beta, lattice.d, field.J),
           "method": spec.method, "residual_bound": spec.residual_bound}
    return rec


def _scaling_unit(cfg: RunConfig, index: int) -> dict:
    lattice = cfg.lattice()
    seed, field = _field_for(cfg, lattice, index)
    t1 = first_order_matrix(field)
    devs = []
    for beta in cfg.betas:
        op = assemble_hat(field, beta) if cfg.scaling_operator == "hat" else assemble_tilde(field, beta)
        band = extract_band(band_spectrum(op, field.n_sites, cfg.solver, seed=index), field.n_sites)
        devs.append(band_deviation(band.band, beta, t1))
    fine, coarse = devs
    ratio = coarse / fine if fine > 0 else math.inf
    return {"realization": index, "seed": seed, "betas": list(cfg.betas), "deviations": devs,
            "constants": [dv / b ** 2 for dv, b in zip(devs, cfg.betas)], "ratio": ratio,
            "in_window": bool(cfg.ratio_low <= ratio <= cfg.ratio_high)}


def _gap_bound_unit(cfg: RunConfig, index: int, beta: float) -> dict:
    lattice = cfg.lattice()
    seed, field = _field_for(cfg, lattice, index)
    family = RateFamily.named(cfg.family)
    bound = gap_upper_bound_exact(field, beta, family)
    op = symmetrize(assemble_generator(field, beta, family), gibbs_table(field, beta))
    ev = dense_spectrum(op).eigenvalues
    gap = float(ev[1] - ev[0])
    violated = bool(bound.available and gap > bound.bound * (1 + 1e-12))
    return {"realization": index, "seed": seed, "beta": beta, "gap": gap, **bound.to_dict(),
            "violated": violated}


def _mc_unit(cfg: RunConfig, index: int, beta: float) -> dict:
    lattice = cfg.lattice()
    seed, field = _field_for(cfg, lattice, index)
    family = RateFamily.named(cfg.family)
    table = gibbs_table(field, beta)
    mean_rate = float(table.gibbs @ family.psi(beta * flip_delta_table(field)).sum(axis=0))
    t_max = cfg.t_max if cfg.t_max > 0 else cfg.burn_in + cfg.events / mean_rate
    dt = cfg.dt if cfg.dt > 0 else None
    trajs = [simulate(field, beta, family, t_max, derive_seed(seed, r), cfg.burn_in, dt,
                      cfg.tagged_site, record_events=False) for r in range(cfg.replicas)]
    est = autocorrelation_gap(trajs, seed=seed % (2 ** 32))
    exact = spectral_autocorrelation(field, beta, family, cfg.tagged_site)
    target = matching_rate(exact, est)
    sigma = abs(est.rate - target) / est.stderr if est.stderr > 0 else math.inf
    rel = abs(est.rate - target) / target
    return {"realization": index, "seed": seed, "beta": beta, "t_max": t_max,
            "events": [tr.n_events for tr in trajs], "estimate": est.to_dict(),
            "matching_rate": target, "slowest_rate": exact.slowest_rate(),
            "sigma_distance": sigma, "relative_error": rel,
            "passed": bool(sigma <= cfg.max_sigma and rel <= cfg.max_relative)}


def _form_unit(cfg: RunConfig, index: int, audit_path: str | None) -> dict:
    lattice = cfg.lattice()
    seed, field = _field_for(cfg, lattice, index)
    n = field.n_sites
    out = {"realization": index, "seed": seed, "checks": {}}
    vseed = seed % (2 ** 32)

    def record(name, results):
        results = list(results)
        if audit_path:
            append_audit(audit_path, results, f"{name}:{index}")
        out["checks"][name] = {"count": len(results),
                               "failures": sum(not r.passed for r in results),
                               "min_margin": min((r.margin for r in results), default=None)}

    record("lemma", sweep_lemma(n, cfg.n_lemma_vectors, vseed))
    for beta in cfg.betas:
        record(f"relative_bound@{beta!r}", sweep_relative_bound(field, beta, cfg.n_vectors, vseed))
        record(f"tilde_below_hat@{beta!r}", sweep_tilde_below_hat(field, beta, cfg.n_vectors, vseed))
        u = random_vectors(1 << n, min(cfg.n_vectors, 200), vseed + 1)
        for name, op, form in (("tilde", assemble_tilde(field, beta), dirichlet_form_tilde),
                               ("hat", assemble_hat(field, beta), dirichlet_form_hat)):
            direct = form(u, field, beta)
            via = np.einsum("ij,ij->j", u, op.matrix @ u)
            err = float(np.max(np.abs(direct - via) / (1 + np.abs(direct))))
            out["checks"][f"form_matrix_{name}@{beta!r}"] = {"max_error": err,
                                                            "failures": int(err > 1e-10)}
    empty = np.zeros(1 << n)
    empty[0] = 1.0
    counter = check_lemma_comparison(empty, enforce_parity=False)
    out["counterexample"] = {"lhs": counter.lhs, "rhs": counter.rhs,
                             "reproduced": bool(counter.lhs == n / 2 and counter.rhs == 0.0)}
    beta_max = max(cfg.betas)
    if beta_max > 0:
        t, h = check_relative_bound(empty, field, beta_max)
        out["relative_bound_counterexample"] = {"tilde_margin": t.margin, "hat_margin": h.margin}
    return out


# ---------------------------------------------------------------- reports

def hausdorff_interval(a: Sequence[float], b: Sequence[float]) -> float:
    """Hausdorff distance between two closed intervals."""
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


@dataclass
class EnsembleReport:
    config: RunConfig
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    passed: bool = True

    @property
    def bands(self) -> list[BandReport]:
        return [BandReport(r["ground"], tuple(r["band"]), r["gap_below"], r["gap_above"],
                           r["isolated"], 0.0, 0.0) for r in self.records if "band" in r]

    def union_band(self, beta: float | None = None) -> tuple[float, float] | None:
        rows = [r for r in self.records if "band_min" in r and (beta is None or r["beta"] == beta)]
        if not rows:
            return None
        return min(r["band_min"] for r in rows), max(r["band_max"] for r in rows)

    @property
    def bound_violations(self) -> int:
        return sum(r.get("violations", 0) for r in self.records)

    def exit_code(self) -> int:
        return EXIT_PASS if self.passed else EXIT_VIOLATIONS


def _map(fn: Callable, args: list[tuple], workers: int) -> list:
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


class _Guarded:
    """Records a failing unit instead of aborting the run."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, *args):
        try:
            return self.fn(*args)
        except Exception as exc:  # noqa: BLE001 - per-unit failures are data
            return {"args": [a for a in args if not isinstance(a, RunConfig)],
                    "error": f"{type(exc).__name__}: {exc}"}


def _run_band_check(cfg: RunConfig) -> EnsembleReport:
    args = [(cfg, i, b) for b in cfg.betas for i in range(cfg.n_realizations)]
    recs = _map(_Guarded(_band_unit), args, cfg.workers)
    report = EnsembleReport(cfg, recs)
    errors = sum("error" in r for r in recs)
    per_beta = {}
    for b in cfg.betas:
        rows = [r for r in recs if r.get("beta") == b and "error" not in r]
        per_beta[repr(b)] = {"union_band": report.union_band(b),
                             "violations": sum(r["violations"] for r in rows),
                             "non_isolated": sum(not r["isolated"] for r in rows)}
    v = report.bound_violations
    report.passed = v <= cfg.violation_threshold and errors == 0
    report.summary = {"violations": v, "errors": errors, "per_beta": per_beta,
                      "threshold": cfg.violation_threshold}
    return report


def _run_band_union(cfg: RunConfig) -> EnsembleReport:
    lattice = cfg.lattice()
    n_total = cfg.n_ensembles * cfg.n_realizations
    args = [(cfg, i, b) for b in cfg.betas for i in range(n_total)]
    recs = _map(_Guarded(_band_unit), args, cfg.workers)
    for r in recs:
        if "realization" in r:
            r["ensemble"] = r["realization"] // max(cfg.n_realizations, 1)
    J = max(abs(cfg.j_minus), abs(cfg.j_plus))
    zetas = np.linspace(cfg.j_minus, cfg.j_plus, cfg.n_zeta) if cfg.n_zeta else []
    zeta_recs = []
    for b in cfg.betas:
        for k, z in enumerate(zetas):
            f = constant_disorder(lattice, float(z), cfg.j_minus, cfg.j_plus)
            rec = _band_unit(cfg, -1 - k, b, f, f.seed)
            rec["zeta"] = float(z)
            zeta_recs.append(rec)
    report = EnsembleReport(cfg, recs + zeta_recs)
    errors = sum("error" in r for r in recs)
    per_beta, ok = {}, errors == 0
    for b in cfg.betas:
        unions = []
        for e in range(cfg.n_ensembles):
            rows = [r for r in recs if r.get("beta") == b and r.get("ensemble") == e
                    and "error" not in r]
            unions.append((min(r["band_min"] for r in rows), max(r["band_max"] for r in rows))
                          if rows else None)
        width = 2 * 2 * lattice.d * J * b
        dists = [hausdorff_interval(unions[0], u) for u in unions[1:] if u and unions[0]]
        limit = cfg.hausdorff_fraction * width
        stable = bool(dists) and max(dists) <= limit
        entry = {"unions": unions, "hausdorff": dists, "limit": limit, "stable": stable}
        contained = True
        zrows = [r for r in zeta_recs if r["beta"] == b]
        if zrows:
            zu = (min(r["band_min"] for r in zrows), max(r["band_max"] for r in zrows))
            full = (min(u[0] for u in unions if u), max(u[1] for u in unions if u))
            slack = cfg.c2 * b * b
            entry["zeta_union"] = zu
            entry["zeta_within_ensemble_union"] = bool(zu[0] >= full[0] - slack
                                                       and zu[1] <= full[1] + slack)
            entry["ensemble_within_zeta_union"] = bool(full[0] >= zu[0] - slack
                                                       and full[1] <= zu[1] + slack)
            contained = entry["zeta_within_ensemble_union"]
            entry["zeta_coverage"] = (min(full[1], zu[1]) - max(full[0], zu[0])) / (zu[1] - zu[0]) \
                if zu[1] > zu[0] else 1.0
        ok = ok and stable and contained
        per_beta[repr(b)] = entry
    report.passed = ok
    report.summary = {"errors": errors, "per_beta": per_beta}
    return report


def _run_scaling(cfg: RunConfig) -> EnsembleReport:
    recs = _map(_Guarded(_scaling_unit), [(cfg, i) for i in range(cfg.n_realizations)], cfg.workers)
    good = [r for r in recs if "error" not in r]
    frac = sum(r["in_window"] for r in good) / len(good) if good else 0.0
    worst = max((max(r["constants"]) for r in good), default=None)
    report = EnsembleReport(cfg, recs)
    # the remainder constant shares c2 with the band tolerance
    report.passed = (len(good) == len(recs) and frac >= cfg.ratio_fraction
                     and worst is not None and worst <= cfg.c2)
    report.summary = {"fraction_in_window": frac, "required": cfg.ratio_fraction,
                      "max_constant": worst, "constant_limit": cfg.c2,
                      "errors": len(recs) - len(good)}
    return report


def _run_gap_bound(cfg: RunConfig) -> EnsembleReport:
    args = [(cfg, i, b) for b in cfg.betas for i in range(cfg.n_realizations)]
    recs = _map(_Guarded(_gap_bound_unit), args, cfg.workers)
    good = [r for r in recs if "error" not in r]
    report = EnsembleReport(cfg, recs)
    viol = sum(r["violated"] for r in good)
    report.passed = viol == 0 and len(good) == len(recs)
    report.summary = {"violations": viol, "unavailable": sum(not r["available"] for r in good),
                      "errors": len(recs) - len(good)}
    return report


def _run_mc(cfg: RunConfig) -> EnsembleReport:
    args = [(cfg, i, b) for b in cfg.betas for i in range(cfg.n_realizations)]
    recs = _map(_Guarded(_mc_unit), args, cfg.workers)
    good = [r for r in recs if "error" not in r]
    report = EnsembleReport(cfg, recs)
    report.passed = len(good) == len(recs) and all(r["passed"] for r in good)
    report.summary = {"failures": sum(not r["passed"] for r in good),
                      "errors": len(recs) - len(good)}
    return report


def _run_forms(cfg: RunConfig, out_dir: Path | None) -> EnsembleReport:
    audit = None
    if out_dir is not None:
        audit = out_dir / "forms_audit.jsonl"
        audit.write_text(_dumps({"config": _record_config(cfg)}) + "\n")
    # the audit log has a single writer, so units run in order here
    recs = [_Guarded(_form_unit)(cfg, i, str(audit) if audit else None)
            for i in range(cfg.n_realizations)]
    good = [r for r in recs if "error" not in r]
    fails = sum(c["failures"] for r in good for c in r["checks"].values())
    report = EnsembleReport(cfg, recs)
    report.passed = fails == 0 and len(good) == len(recs) and all(
        r["counterexample"]["reproduced"] for r in good)
    report.summary = {"failures": fails, "errors": len(recs) - len(good)}
    return report


def _run_export(cfg: RunConfig, out_dir: Path | None) -> EnsembleReport:
    lattice = cfg.lattice()
    recs = []
    for b in cfg.betas:
        for i in range(cfg.n_realizations):
            seed, field = _field_for(cfg, lattice, i)
            files = {}
            if out_dir is not None:
                stem = f"r{i:04d}_beta{b!r}"
                for name, op in (("tilde", assemble_tilde(field, b)), ("hat", assemble_hat(field, b)),
                                 ("generator", assemble_generator(field, b,
                                                                  RateFamily.named(cfg.family)))):
                    path = out_dir / f"{stem}_{name}.txt"
                    op.write_text(path)
                    files[name] = path.name
                gibbs_table(field, b).write_csv(out_dir / f"{stem}_gibbs.csv")
                files["gibbs"] = f"{stem}_gibbs.csv"
                (out_dir / f"{stem}_disorder.json").write_text(field.to_json())
                files["disorder"] = f"{stem}_disorder.json"
            recs.append({"realization": i, "seed": seed, "beta": b, "files": files})
    return EnsembleReport(cfg, recs, {"exported": len(recs)}, True)


def run(config: RunConfig, out_dir: str | Path | None = None) -> EnsembleReport:
    """Validate, execute the experiment and write its files to ``out_dir`` (default ``output_dir``)."""
    cfg = config.validate()
    target = Path(cfg.output_dir if out_dir is None else out_dir)
    target.mkdir(parents=True, exist_ok=True)
    started = time.time()
    exp = cfg.experiment
    if exp == "band_check":
        report = _run_band_check(cfg)
    elif exp == "band_union":
        report = _run_band_union(cfg)
    elif exp == "perturbation_scaling":
        report = _run_scaling(cfg)
    elif exp == "gap_bound":
        report = _run_gap_bound(cfg)
    elif exp == "mc_gap":
        report = _run_mc(cfg)
    elif exp == "form_audit":
        report = _run_forms(cfg, target)
    else:
        report = _run_export(cfg, target)
    write_outputs(report, target, started)
    return report


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_json_default, allow_nan=True)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, (np.ndarray, tuple)):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _record_config(cfg: RunConfig) -> dict:
    # where the files land is not part of what was computed
    out = cfg.to_dict()
    del out["output_dir"]
    return out


def write_outputs(report: EnsembleReport, out_dir: Path, started: float | None = None) -> dict:
    cfg = _record_config(report.config)
    paths = {"results": out_dir / "results.jsonl", "summary": out_dir / "summary.json",
             "manifest": out_dir / "manifest.json"}
    with open(paths["results"], "w") as fh:
        fh.write(_dumps({"type": "config", "config": cfg}) + "\n")
        for rec in report.records:
            fh.write(_dumps({"type": "record", **rec}) + "\n")
    paths["summary"].write_text(_dumps({"config": cfg, "passed": report.passed,
                                        "summary": report.summary}) + "\n")
    paths.update(emit_plots(report, out_dir))
    now = time.time()
    manifest = {"finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(now)),
                "elapsed_s": None if started is None else now - started,
                "backend": BACKEND, "version": __version__, "python": platform.python_version(),
                "numpy": np.__version__, "output_dir": str(out_dir),
                "files": sorted(p.name for p in paths.values())}
    paths["manifest"].write_text(_dumps(manifest) + "\n")
    return paths


def emit_plots(report: EnsembleReport, out_dir: str | Path) -> dict:
    """Band-vs-beta and per-realization scatter tables (header only when empty)."""
    out_dir = Path(out_dir)
    header = "# config: " + _dumps(_record_config(report.config)) + "\n"
    rows = [r for r in report.records if "band_min" in r]
    vs_beta = out_dir / "band_vs_beta.csv"
    scatter = out_dir / "band_scatter.csv"
    with open(vs_beta, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh)
        w.writerow(["beta", "g_minus", "band_min", "band_max", "g_plus"])
        for b in sorted({r["beta"] for r in rows}):
            sel = [r for r in rows if r["beta"] == b and "zeta" not in r]
            if not sel:
                continue
            w.writerow([repr(b), repr(sel[0]["g_minus"]), repr(min(r["band_min"] for r in sel)),
                        repr(max(r["band_max"] for r in sel)), repr(sel[0]["g_plus"])])
    with open(scatter, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh)
        w.writerow(["realization", "beta", "band_min", "band_max", "isolated"])
        for r in rows:
            w.writerow([r["realization"], repr(r["beta"]), repr(r["band_min"]),
                        repr(r["band_max"]), int(r["isolated"])])
    return {"band_vs_beta": vs_beta, "band_scatter": scatter}


# ---------------------------------------------------------------- CLI

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glauberspec",
                                description="Spectral checks for disordered Glauber dynamics.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat key = value config file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        s.add_argument("--output", help="output directory")
        s.add_argument("--workers", type=int)
        s.add_argument("--seed", type=int, help="base seed")
        s.add_argument("--realizations", type=int)
        s.add_argument("--betas", help="comma separated inverse temperatures")
        if name == "mc-gap":
            s.add_argument("--t-max", type=float)
            s.add_argument("--burn-in", type=float)
            s.add_argument("--replicas", type=int)
            s.add_argument("--dt", type=float)
            s.add_argument("--events", type=int)
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    pairs = {"experiment": COMMANDS[args.command]}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    flags = {"output_dir": args.output, "workers": args.workers, "base_seed": args.seed,
             "n_realizations": args.realizations, "betas": args.betas}
    for key in ("t_max", "burn_in", "replicas", "dt", "events"):
        flags[key] = getattr(args, key, None)
    pairs.update({k: str(v) for k, v in flags.items() if v is not None})
    return cfg.with_overrides(pairs)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    try:
        cfg = config_from_args(args).validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run(cfg)
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{cfg.experiment}: {verdict} -> {cfg.output_dir}")
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
