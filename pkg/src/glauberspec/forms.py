"""Dirichlet forms evaluated from their site sums, and the quadratic-form inequalities.

The forms never touch an assembled matrix, which is what makes
``form(u) == <u|A|u>`` a meaningful check of the generator construction.
Every function accepts one vector or a ``(2^|Λ|, k)`` batch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterable

import numpy as np

from glauberspec.hamiltonian import flip_delta_table
from glauberspec.lattice import DisorderField
from glauberspec.perturbation import relative_bound_constants
from glauberspec.states import apply_complement, apply_hadamard, n_sites_of, popcounts

PARITY_TOL = 1e-10


@dataclass(frozen=True)
class FormCheckResult:
    lhs: float
    rhs: float
    context: dict = dc_field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -1e-12 * max(abs(self.lhs), abs(self.rhs), 1.0)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "passed": self.passed, "context": self.context}


def _flipped(u: np.ndarray, n: int) -> np.ndarray:
    """``out[x] = u[α △ {x}]`` stacked over sites."""
    a = np.arange(1 << n, dtype=np.int64)
    return np.stack([u[a ^ (1 << x)] for x in range(n)])


def _reduce(vals: np.ndarray, u: np.ndarray):
    # vals has shape (n, dim) or (n, dim, k)
    out = vals.sum(axis=(0, 1))
    return float(out) if u.ndim == 1 else out


def _deltas(u: np.ndarray, field: DisorderField, deltas) -> np.ndarray:
    if n_sites_of(u) != field.n_sites:
        raise ValueError("vector does not match the lattice")
    D = flip_delta_table(field) if deltas is None else deltas
    return D if u.ndim == 1 else D[:, :, None]


def dirichlet_form_tilde(u: np.ndarray, field: DisorderField, beta: float,
                         deltas: np.ndarray | None = None):
    """``Σ_α Σ_x [((u_α - u_α^x)/2)² + u_α²(e^{βΔ/2} - 1)/2] / cosh(βΔ/2)``."""
    u = np.asarray(u, dtype=float)
    D = _deltas(u, field, deltas)
    half = 0.5 * beta * D
    du = 0.5 * (u[None] - _flipped(u, field.n_sites))
    return _reduce((du * du + 0.5 * u[None] ** 2 * np.expm1(half)) / np.cosh(half), u)


def dirichlet_form_hat(u: np.ndarray, field: DisorderField, beta: float,
                       deltas: np.ndarray | None = None):
    """Same sum with ``cosh(βΔ/2)`` multiplying instead of dividing."""
    u = np.asarray(u, dtype=float)
    D = _deltas(u, field, deltas)
    half = 0.5 * beta * D
    du = 0.5 * (u[None] - _flipped(u, field.n_sites))
    return _reduce((du * du + 0.5 * u[None] ** 2 * np.expm1(half)) * np.cosh(half), u)


def flip_form(u: np.ndarray):
    """``<u|Σ_x Ū_x|u> = ¼ Σ_α Σ_x (u_α - u_α^x)²``, the ``β = 0`` generator."""
    u = np.asarray(u, dtype=float)
    n = n_sites_of(u)
    du = u[None] - _flipped(u, n)
    return _reduce(0.25 * du * du, u)


def number_form(u: np.ndarray):
    """``<u|L|u> = Σ_α |α| u_α²``."""
    u = np.asarray(u, dtype=float)
    w = popcounts(n_sites_of(u)).astype(float)
    out = (w if u.ndim == 1 else w[:, None]) * u * u
    return float(out.sum()) if u.ndim == 1 else out.sum(axis=0)


def parity_sector(u: np.ndarray, tol: float = PARITY_TOL) -> int:
    """``+1`` or ``-1`` if ``E u = ±u`` up to ``tol`` (relative), else ``0``."""
    u = np.asarray(u, dtype=float)
    nrm = np.linalg.norm(u)
    if nrm == 0:
        return 1
    eu = apply_complement(u)
    if np.linalg.norm(u - eu) <= tol * nrm:
        return 1
    if np.linalg.norm(u + eu) <= tol * nrm:
        return -1
    return 0


def check_lemma_comparison(u: np.ndarray, enforce_parity: bool = True,
                           context: dict | None = None) -> FormCheckResult:
    """``<u|Σ_x Ū_x|u> <= 2 <u|L|u>`` for ``u`` in an ``E`` sector.

    The bound is false off the sectors: ``u = δ_∅`` gives ``|Λ|/2`` against 0.
    ``enforce_parity=False`` skips the sector test so that case can be shown.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError("check one vector at a time")
    ctx = dict(context or {})
    if enforce_parity:
        sign = parity_sector(u)
        if sign == 0:
            raise ValueError("vector mixes the E-even and E-odd sectors")
        ctx["sector"] = "even" if sign > 0 else "odd"
        u = (u + sign * apply_complement(u)) / 2
        nrm = np.linalg.norm(u)
        if nrm > 0:
            u = u / nrm
    else:
        ctx["sector"] = "unrestricted"
    return FormCheckResult(flip_form(u), 2.0 * number_form(u), ctx)


def check_relative_bound(v: np.ndarray, field: DisorderField, beta: float,
                         context: dict | None = None,
                         deltas: np.ndarray | None = None) -> tuple[FormCheckResult, FormCheckResult]:
    """``<Uv|L̃|Uv> <= (1+2b)<v|L|v>`` and ``<Uv|L̂|Uv> <= (1+2b')<v|L|v>``.

    Random vectors satisfy both; ``v = δ_∅`` violates both for ``β > 0``
    (the left side is positive while ``<v|L|v> = 0``).
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("check one vector at a time")
    D = flip_delta_table(field) if deltas is None else deltas
    b, bp = relative_bound_constants(beta, field.lattice.d, field.J)
    uv = apply_hadamard(v)
    nf = number_form(v)
    ctx = dict(context or {}, beta=beta)
    tilde = FormCheckResult(dirichlet_form_tilde(uv, field, beta, D), (1 + 2 * b) * nf,
                            dict(ctx, form="tilde", constant=b))
    hat = FormCheckResult(dirichlet_form_hat(uv, field, beta, D), (1 + 2 * bp) * nf,
                          dict(ctx, form="hat", constant=bp))
    return tilde, hat


def check_tilde_below_hat(u: np.ndarray, field: DisorderField, beta: float,
                          context: dict | None = None,
                          deltas: np.ndarray | None = None) -> FormCheckResult:
    """``<u|L̃|u> <= <u|L̂|u>``."""
    D = flip_delta_table(field) if deltas is None else deltas
    return FormCheckResult(dirichlet_form_tilde(u, field, beta, D),
                           dirichlet_form_hat(u, field, beta, D), dict(context or {}, beta=beta))


def random_vectors(dim: int, count: int, seed: int, parity: int | None = None) -> np.ndarray:
    """``(dim, count)`` standard normal columns, optionally projected on ``E = parity``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((dim, count))
    if parity is not None:
        if parity not in (1, -1):
            raise ValueError("parity must be +1 or -1")
        v = (v + parity * apply_complement(v)) / 2
        v /= np.linalg.norm(v, axis=0)
    return v


def sweep_lemma(n_sites: int, count: int, seed: int, chunk: int = 1000) -> list[FormCheckResult]:
    """Flip-versus-number comparison on ``count`` random vectors, half in each ``E`` sector."""
    out = []
    for sign, total, sub in ((1, (count + 1) // 2, 0), (-1, count // 2, 1)):
        for start in range(0, total, chunk):
            k = min(chunk, total - start)
            batch_seed = seed + 2 * start + sub
            batch = random_vectors(1 << n_sites, k, batch_seed, sign)
            lhs, rhs = flip_form(batch), 2.0 * number_form(batch)
            sector = "even" if sign > 0 else "odd"
            out += [FormCheckResult(float(lhs[j]), float(rhs[j]),
                                    {"seed": batch_seed, "column": j, "sector": sector})
                    for j in range(k)]
    return out


def sweep_relative_bound(field: DisorderField, beta: float, count: int,
                         seed: int) -> list[FormCheckResult]:
    """Both relative bounds on ``count`` random vectors (batched)."""
    D = flip_delta_table(field)
    b, bp = relative_bound_constants(beta, field.lattice.d, field.J)
    v = random_vectors(1 << field.n_sites, count, seed)
    uv = apply_hadamard(v)
    nf = number_form(v)
    lt = dirichlet_form_tilde(uv, field, beta, D)
    lh = dirichlet_form_hat(uv, field, beta, D)
    out = []
    for j in range(count):
        ctx = {"beta": beta, "seed": seed, "column": j}
        out.append(FormCheckResult(float(lt[j]), float((1 + 2 * b) * nf[j]), dict(ctx, form="tilde")))
        out.append(FormCheckResult(float(lh[j]), float((1 + 2 * bp) * nf[j]), dict(ctx, form="hat")))
    return out


def sweep_tilde_below_hat(field: DisorderField, beta: float, count: int,
                          seed: int) -> list[FormCheckResult]:
    D = flip_delta_table(field)
    v = random_vectors(1 << field.n_sites, count, seed)
    lt = dirichlet_form_tilde(v, field, beta, D)
    lh = dirichlet_form_hat(v, field, beta, D)
    return [FormCheckResult(float(lt[j]), float(lh[j]), {"beta": beta, "seed": seed, "column": j})
            for j in range(count)]


def append_audit(path: str | Path, results: Iterable[FormCheckResult], label: str = "") -> int:
    """Append one JSON line per result; returns the number written."""
    count = 0
    with open(path, "a") as fh:
        for r in results:
            rec = r.to_dict()
            if label:
                rec["check"] = label
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            count += 1
    return count
