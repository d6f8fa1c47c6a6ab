"""Acceptance criteria at their stated sizes and tolerances.

Each test records a verdict line, printed in the terminal summary.  Disorder
comes from base seed 1, fixed before any of these runs.
"""
import json
import time

import numpy as np
import pytest

from conftest import CRITERIA
from glauberspec.generator import (RateFamily, assemble_generator, assemble_hat, assemble_tilde,
                                   commutator_norm, detailed_balance_residual, entrywise_gap)
from glauberspec.hamiltonian import gibbs_table
from glauberspec.lattice import build_lattice, derive_seed, ring, sample_disorder
from glauberspec.runner import RunConfig, run
from glauberspec.spectral import dense_spectrum

BASE_SEED = 1
GEOMETRIES = {"ring12": dict(d=1, lengths=(12,)), "torus3x3": dict(d=2, lengths=(3, 3))}

pytestmark = pytest.mark.acceptance


def record(k, ok, detail):
    CRITERIA[k] = (bool(ok), detail)
    assert ok, detail


def test_criterion_1_beta_zero_spectrum():
    start = time.perf_counter()
    worst = 0.0
    for lat in (ring(4), ring(8), build_lattice(2, (3, 3))):
        n = lat.n_sites
        f = sample_disorder(lat, -1, 1, derive_seed(BASE_SEED, 0))
        ev = dense_spectrum(assemble_tilde(f, 0.0)).eigenvalues
        mult = [int(np.prod(range(n - k + 1, n + 1)) // np.prod(range(1, k + 1))) for k in range(n + 1)]
        expected = np.repeat(np.arange(n + 1.0), mult)
        worst = max(worst, float(np.abs(ev - expected).max()))
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-10 and elapsed < 10,
           f"max deviation {worst:.1e} (limit 1e-10), {elapsed:.1f} s (limit 10 s)")


def test_criterion_2_band_inside_tolerance(tmp_path):
    start = time.perf_counter()
    parts = []
    ok = True
    for name, geom in GEOMETRIES.items():
        cfg = RunConfig(experiment="band_check", n_realizations=50, base_seed=BASE_SEED,
                        betas=(0.01, 0.02, 0.05), **geom)
        rep = run(cfg, tmp_path / name)
        ok = ok and rep.passed
        parts.append(f"{name}: {rep.summary['violations']} violations, "
                     f"{rep.summary['errors']} errors")
    elapsed = time.perf_counter() - start
    record(2, ok and elapsed < 600, "; ".join(parts) + f"; {elapsed:.0f} s (limit 600 s)")


def test_criterion_3_first_order_scaling(tmp_path):
    parts = []
    ok = True
    for name, geom in GEOMETRIES.items():
        cfg = RunConfig(experiment="perturbation_scaling", n_realizations=50,
                        base_seed=BASE_SEED, betas=(0.02, 0.04), **geom)
        rep = run(cfg, tmp_path / name)
        ok = ok and rep.passed
        s = rep.summary
        parts.append(f"{name}: ratio in [3, 5] for {s['fraction_in_window']:.0%} "
                     f"(need 90%), max deviation/beta^2 {s['max_constant']:.2f} (C = 10)")
    record(3, ok, "; ".join(parts))


def test_criterion_4_operator_hygiene():
    worst = {"symmetry": 0.0, "balance": 0.0, "ground": 0.0, "commutator": 0.0, "paths": 0.0}
    rng = np.random.default_rng(BASE_SEED)
    lattices = (ring(8), build_lattice(2, (3, 3)), ring(12))
    for lat in lattices:
        probes = rng.standard_normal((1 << lat.n_sites, 1000))
        probes /= np.linalg.norm(probes, axis=0)
        for i in range(3):
            f = sample_disorder(lat, -1, 1, derive_seed(BASE_SEED, i))
            for beta in (0.01, 0.05, 0.3, 1.0):
                tilde = assemble_tilde(f, beta, "similarity")
                hat = assemble_hat(f, beta)
                closed = assemble_tilde(f, beta, "closed_form")
                root = np.sqrt(gibbs_table(f, beta).gibbs)
                # symmetry is measured before the triangles are averaged
                gen = assemble_generator(f, beta).matrix
                s = np.sqrt(gibbs_table(f, beta).gibbs)
                raw = gen.multiply(s[:, None]).multiply(1 / s[None, :]).tocsr()
                raw_asym = abs(raw - raw.T).max() / abs(raw).max()
                worst["symmetry"] = max(worst["symmetry"], raw_asym, tilde.asymmetry(),
                                        hat.asymmetry())
                for fam in ("heat_bath", "cosh_quarter"):
                    worst["balance"] = max(worst["balance"], detailed_balance_residual(
                        f, beta, RateFamily.named(fam)))
                worst["ground"] = max(worst["ground"], float(np.linalg.norm(tilde.matrix @ root)))
                worst["commutator"] = max(worst["commutator"], commutator_norm(tilde, probes),
                                          commutator_norm(hat, probes))
                worst["paths"] = max(worst["paths"], entrywise_gap(tilde, closed))
    limits = {"symmetry": 1e-12, "balance": 1e-12, "ground": 1e-11, "commutator": 1e-12,
              "paths": 1e-10}
    ok = all(worst[k] <= limits[k] for k in limits)
    record(4, ok, ", ".join(f"{k} {worst[k]:.1e} (limit {limits[k]:.0e})" for k in limits))


def test_criterion_5_quadratic_forms(tmp_path):
    parts = []
    ok = True
    for name, geom in (("ring10", dict(d=1, lengths=(10,))),
                       ("torus3x3", dict(d=2, lengths=(3, 3)))):
        cfg = RunConfig(experiment="form_audit", n_realizations=1, base_seed=BASE_SEED,
                        betas=(0.05, 0.1, 0.3), n_vectors=1000, n_lemma_vectors=10000, **geom)
        rep = run(cfg, tmp_path / name)
        r = rep.records[0]
        margin = min(c["min_margin"] for c in r["checks"].values() if "min_margin" in c)
        lemma = r["checks"]["lemma"]["count"]
        ce = r["counterexample"]
        ok = ok and rep.passed and lemma == 10000
        parts.append(f"{name}: {rep.summary['failures']} failures, min margin {margin:.2e}, "
                     f"counterexample lhs {ce['lhs']} rhs {ce['rhs']}")
    record(5, ok, "; ".join(parts))


def test_criterion_6_mc_against_spectrum(tmp_path):
    start = time.perf_counter()
    cfg = RunConfig(experiment="mc_gap", d=1, lengths=(8,), n_realizations=1,
                    base_seed=BASE_SEED, betas=(0.2,), family="heat_bath",
                    events=10_000_000, replicas=8)
    rep = run(cfg, tmp_path)
    elapsed = time.perf_counter() - start
    r = rep.records[0]
    est = r["estimate"]
    record(6, rep.passed and elapsed < 300,
           f"estimate {est['rate']:.5f} +- {est['stderr']:.5f}, matching eigenvalue "
           f"{r['matching_rate']:.5f}: {r['sigma_distance']:.2f} SE (limit 3), "
           f"{r['relative_error']:.2%} (limit 15%); {elapsed:.0f} s (limit 300 s)")


def test_criterion_7_gap_upper_bound(tmp_path):
    parts = []
    ok = True
    for name, geom in (("ring6", dict(d=1, lengths=(6,))), ("ring8", dict(d=1, lengths=(8,))),
                       ("torus3x3", dict(d=2, lengths=(3, 3)))):
        cfg = RunConfig(experiment="gap_bound", n_realizations=20, base_seed=BASE_SEED,
                        betas=(0.1, 0.2), j_minus=0.5, j_plus=1.0, **geom)
        rep = run(cfg, tmp_path / name)
        checked = sum(r["available"] for r in rep.records)
        ok = ok and rep.passed
        parts.append(f"{name}: {rep.summary['violations']} violations in {checked} cases")
    record(7, ok, "; ".join(parts))


def test_criterion_8_union_band_stability(tmp_path):
    start = time.perf_counter()
    cfg = RunConfig(experiment="band_union", d=1, lengths=(12,), n_realizations=200,
                    n_ensembles=2, base_seed=BASE_SEED, betas=(0.05,))
    rep = run(cfg, tmp_path)
    elapsed = time.perf_counter() - start
    entry = rep.summary["per_beta"]["0.05"]
    record(8, rep.passed and elapsed < 900,
           f"Hausdorff distance {entry['hausdorff'][0]:.2e} (limit {entry['limit']:.2e}); "
           f"{elapsed:.0f} s (limit 900 s)")


DETERMINISM_CONFIGS = {
    "band_check": dict(lengths=(8,), n_realizations=4, betas=(0.02, 0.05)),
    "band_union": dict(lengths=(8,), n_realizations=4, betas=(0.05,), hausdorff_fraction=1.0),
    "perturbation_scaling": dict(lengths=(8,), n_realizations=4, betas=(0.02, 0.04)),
    "form_audit": dict(lengths=(6,), n_realizations=2, betas=(0.1,), n_vectors=100,
                       n_lemma_vectors=200),
    "mc_gap": dict(lengths=(6,), n_realizations=1, betas=(0.2,), events=300_000, replicas=2),
    "gap_bound": dict(lengths=(8,), n_realizations=4, betas=(0.1, 0.2)),
    "export_ops": dict(lengths=(4,), n_realizations=2, betas=(0.1,)),
}


def test_criterion_9_determinism(tmp_path):
    differing = []
    for exp, kw in DETERMINISM_CONFIGS.items():
        cfg = RunConfig(experiment=exp, base_seed=BASE_SEED, **kw)
        a = tmp_path / exp / "a"
        b = tmp_path / exp / "b"
        run(cfg, a)
        run(cfg, b)
        names = ["results.jsonl", "summary.json"]
        if exp == "form_audit":
            names.append("forms_audit.jsonl")
        if any((a / n).read_bytes() != (b / n).read_bytes() for n in names):
            differing.append(exp)
        header = json.loads((a / "results.jsonl").read_text().splitlines()[0])
        assert header["config"]["experiment"] == exp
    record(9, not differing,
           f"{len(DETERMINISM_CONFIGS) - len(differing)}/{len(DETERMINISM_CONFIGS)} experiments "
           f"byte-identical on rerun" + (f"; differing: {differing}" if differing else ""))
