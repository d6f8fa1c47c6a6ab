"""Glauber generators in the lattice-gas basis and their Gibbs symmetrizations.

The stored generator is the positive operator acting on functions,

    (L f)(α) = Σ_x w(α → α△{x}) [f(α) - f(α△{x})],

so the diagonal is non-negative, off-diagonals are non-positive, constants are
in the kernel and the semigroup is ``exp(-tL)``.  Rates are
``w(α → α△{x}) = ψ(β Δ_x H_α)``.

Two independent constructions exist for each symmetrized operator:

* ``L̃`` (heat bath): the similarity transform ``D^{1/2} L D^{-1/2}`` with
  ``D = diag(gibbs)``, and the closed form with off-diagonals
  ``-1 / (2 cosh(β Δ/2))``;
* ``L̂`` (rate ``(1 + e^{βΔ})/4``): the factorized product
  ``Σ_x e^{βH/2} Ū_x e^{-βH} Ū_x e^{βH/2}`` with ``Ū_x = U ℓ_x U`` applied via
  the butterfly, and the closed form with off-diagonals ``-cosh(β Δ/2) / 2``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from glauberspec.hamiltonian import energies, flip_delta_table, gibbs_table, EnergyTable
from glauberspec.lattice import DisorderField
from glauberspec.operators import SparseOperator
from glauberspec.states import (MAX_SITES, apply_complement, apply_hadamard, occupation,
                                site_projector_apply)

HAT_MAX_SITES = 16


class NonReversibleError(ValueError):
    """The generator is not reversible with respect to the supplied Gibbs table."""


def _psi_heat_bath(u):
    return expit(u)


def _psi_cosh_quarter(u):
    return (1.0 + np.exp(u)) / 4.0


@dataclass(frozen=True)
class RateFamily:
    kind: str
    psi: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def heat_bath(cls) -> "RateFamily":
        return cls("heat_bath", _psi_heat_bath)

    @classmethod
    def cosh_quarter(cls) -> "RateFamily":
        return cls("cosh_quarter", _psi_cosh_quarter)

    @classmethod
    def custom(cls, psi: Callable[[np.ndarray], np.ndarray]) -> "RateFamily":
        return cls("custom_monotone", psi)

    @classmethod
    def named(cls, kind: str) -> "RateFamily":
        if kind == "heat_bath":
            return cls.heat_bath()
        if kind == "cosh_quarter":
            return cls.cosh_quarter()
        raise ValueError(f"unknown rate family {kind!r}")

    def envelope(self, beta: float, d: int, J: float) -> tuple[float, float]:
        """``[ψ(-4dJβ) ∧ ψ(4dJβ), ψ(-4dJβ) ∨ ψ(4dJβ)]``."""
        lo, hi = (float(v) for v in self.psi(np.array([-4 * d * J * beta, 4 * d * J * beta])))
        return min(lo, hi), max(lo, hi)

    def validate(self, beta: float, d: int, J: float, n_grid: int = 1001) -> bool:
        """Check positivity and monotonicity of ``ψ`` on ``[-4dJβ, 4dJβ]``.

        Non-positive rates raise.  A non-monotone custom ``ψ`` only warns and
        returns ``False``: envelope-based statements no longer apply.
        """
        u = np.linspace(-4 * d * J * beta, 4 * d * J * beta, n_grid)
        vals = np.asarray(self.psi(u), dtype=float)
        if not np.all(vals > 0):
            raise ValueError(f"rate function of {self.kind} is not strictly positive")
        diffs = np.diff(vals)
        if np.all(diffs >= 0) or np.all(diffs <= 0):
            return True
        if self.kind != "custom_monotone":
            raise ValueError(f"built-in family {self.kind} failed the monotonicity check")
        warnings.warn("custom rate function is not monotone; envelope bounds downgraded",
                      RuntimeWarning, stacklevel=2)
        return False


def rate(family: RateFamily, delta, beta: float):
    """``ψ(β Δ)``: heat bath ``1/(1+e^{-βΔ})``, cosh_quarter ``(1+e^{βΔ})/4``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    out = family.psi(beta * np.asarray(delta, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def rate_table(field: DisorderField, beta: float, family: RateFamily,
               deltas: np.ndarray | None = None) -> np.ndarray:
    """``(|Λ|, 2^|Λ|)`` array of ``w(α → α△{x})``."""
    deltas = flip_delta_table(field) if deltas is None else deltas
    return rate(family, deltas, beta)


def _check_size(field: DisorderField, cap: int) -> int:
    n = field.n_sites
    if n > cap:
        raise ValueError(f"|Λ|={n} exceeds the assembly cap of {cap} sites")
    return n


def _generator_from_rates(w: np.ndarray, label: str) -> SparseOperator:
    n, dim = w.shape
    a = np.arange(dim, dtype=np.int64)
    rows = [a]
    cols = [a]
    vals = [w.sum(axis=0)]
    for x in range(n):
        rows.append(a)
        cols.append(a ^ (1 << x))
        vals.append(-w[x])
    return SparseOperator.from_coo(np.concatenate(rows), np.concatenate(cols),
                                   np.concatenate(vals), dim, label=label)


def assemble_generator(field: DisorderField, beta: float,
                       family: RateFamily | None = None) -> SparseOperator:
    """``L̄``: diagonal ``Σ_x w(α→α^x)``, entry ``-w(α→α^x)`` at column ``α^x``."""
    family = family or RateFamily.heat_bath()
    _check_size(field, MAX_SITES)
    family.validate(beta, field.lattice.d, field.J)
    return _generator_from_rates(rate_table(field, beta, family), f"Lbar[{family.kind}]")


def birth_death_parts(field: DisorderField, beta: float,
                      family: RateFamily | None = None) -> tuple[SparseOperator, SparseOperator]:
    """Split ``L̄`` into the death part (``x ∈ α``) and the birth part (``x ∉ α``).

    Each part is itself generator-shaped; their sum is ``L̄``.
    """
    family = family or RateFamily.heat_bath()
    n = _check_size(field, MAX_SITES)
    w = rate_table(field, beta, family)
    death = np.stack([np.where(occupation(n, x), w[x], 0.0) for x in range(n)])
    birth = w - death
    return (_generator_from_rates(death, "death"), _generator_from_rates(birth, "birth"))


def detailed_balance_residual(field: DisorderField, beta: float, family: RateFamily,
                              table: EnergyTable | None = None) -> float:
    """``max |π_α w(α→α^x) - π_{α^x} w(α^x→α)| / max π_α w(α→α^x)``."""
    table = table or gibbs_table(field, beta)
    w = rate_table(field, beta, family)
    n, dim = w.shape
    a = np.arange(dim, dtype=np.int64)
    flux = table.gibbs[None, :] * w
    worst = 0.0
    for x in range(n):
        worst = max(worst, float(np.abs(flux[x] - flux[x][a ^ (1 << x)]).max()))
    return worst / float(flux.max())


def symmetrize(gen: SparseOperator, table: EnergyTable, tol: float = 1e-12) -> SparseOperator:
    """``D^{1/2} L̄ D^{-1/2}`` with ``D = diag(gibbs)``; rejects non-reversible input."""
    if gen.dim != table.gibbs.shape[0]:
        raise ValueError("generator and Gibbs table dimensions differ")
    s = np.sqrt(table.gibbs)
    coo = gen.matrix.tocoo()
    vals = coo.data * s[coo.row] / s[coo.col]
    out = SparseOperator.from_coo(coo.row, coo.col, vals, gen.dim, label=f"sym({gen.label})")
    asym = out.asymmetry()
    if asym > tol:
        raise NonReversibleError(f"symmetrized operator has relative asymmetry {asym:.3e}")
    # exact symmetry: average the two triangles
    m = (out.matrix + out.matrix.T) * 0.5
    return SparseOperator(m.tocsr(), symmetric=True, label=out.label)


def _symmetric_from_parts(diag: np.ndarray, off: np.ndarray, label: str) -> SparseOperator:
    n, dim = off.shape
    a = np.arange(dim, dtype=np.int64)
    rows = [a] + [a] * n
    cols = [a] + [a ^ (1 << x) for x in range(n)]
    vals = [diag] + [off[x] for x in range(n)]
    return SparseOperator.from_coo(np.concatenate(rows), np.concatenate(cols),
                                   np.concatenate(vals), dim, symmetric=True, label=label)


def tilde_closed_form(field: DisorderField, beta: float,
                      deltas: np.ndarray | None = None) -> SparseOperator:
    """Heat-bath ``L̃``: diagonal ``Σ_x 1/(1+e^{-βΔ})``, off ``-1/(2 cosh(βΔ/2))``."""
    _check_size(field, MAX_SITES)
    D = flip_delta_table(field) if deltas is None else deltas
    diag = expit(beta * D).sum(axis=0)
    off = -0.5 / np.cosh(0.5 * beta * D)
    return _symmetric_from_parts(diag, off, "Ltilde[closed]")


def assemble_tilde(field: DisorderField, beta: float, method: str = "similarity") -> SparseOperator:
    """Heat-bath ``L̃^s`` by similarity transform or by closed-form matrix elements."""
    if method == "similarity":
        gen = assemble_generator(field, beta, RateFamily.heat_bath())
        return symmetrize(gen, gibbs_table(field, beta))
    if method == "closed_form":
        return tilde_closed_form(field, beta)
    raise ValueError(f"unknown construction {method!r}")


def hat_direct(field: DisorderField, beta: float,
               deltas: np.ndarray | None = None) -> SparseOperator:
    """``L̂^s`` from its matrix elements: diagonal ``Σ_x (1+e^{βΔ})/4``, off ``-cosh(βΔ/2)/2``."""
    _check_size(field, MAX_SITES)
    D = flip_delta_table(field) if deltas is None else deltas
    diag = ((1.0 + np.exp(beta * D)) / 4.0).sum(axis=0)
    off = -0.5 * np.cosh(0.5 * beta * D)
    return _symmetric_from_parts(diag, off, "Lhat[direct]")


def _lbar_x(x: int, v: np.ndarray) -> np.ndarray:
    """``Ū_x = U ℓ_x U`` through the butterfly."""
    return apply_hadamard(site_projector_apply(x, apply_hadamard(v)))


def hat_factorized(field: DisorderField, beta: float) -> SparseOperator:
    """``L̂^s = Σ_x e^{βH/2} Ū_x e^{-βH} Ū_x e^{βH/2}`` read off by probing.

    Each summand only couples ``α`` with itself and ``α△{x}``; applying it to
    the indicator vectors of ``{α : x ∉ α}`` and ``{α : x ∈ α}`` recovers all of
    its entries.
    """
    n = _check_size(field, HAT_MAX_SITES)
    H = energies(field)
    H = H - 0.5 * (H.max() + H.min())
    half = np.exp(0.5 * beta * H)[:, None]
    full = np.exp(-beta * H)[:, None]
    dim = 1 << n
    diag = np.zeros(dim)
    off = np.zeros((n, dim))
    for x in range(n):
        occ = occupation(n, x)
        probes = np.stack([~occ, occ], axis=1).astype(float)
        r = half * _lbar_x(x, full * _lbar_x(x, half * probes))
        # row α: same-side probe gives the diagonal, other side the α^x entry
        diag += np.where(occ, r[:, 1], r[:, 0])
        off[x] = np.where(occ, r[:, 0], r[:, 1])
    return _symmetric_from_parts(diag, off, "Lhat[factorized]")


def assemble_hat(field: DisorderField, beta: float, method: str = "factorized",
                 cross_check: bool = True, rtol: float = 1e-10) -> SparseOperator:
    """``L̂^s``; the factorized path is checked entrywise against the direct one."""
    if method == "direct":
        return hat_direct(field, beta)
    if method != "factorized":
        raise ValueError(f"unknown construction {method!r}")
    op = hat_factorized(field, beta)
    if cross_check:
        ref = hat_direct(field, beta)
        err = entrywise_gap(op, ref)
        if err > rtol:
            raise RuntimeError(f"factorized and direct L̂ disagree: relative gap {err:.3e}")
    return op


def entrywise_gap(a: SparseOperator, b: SparseOperator) -> float:
    """``max |a - b| / max |b|``."""
    diff = abs(a.matrix - b.matrix)
    scale = abs(b.matrix).max() if b.nnz else 1.0
    return float(diff.max() / scale) if diff.nnz else 0.0


def commutator_norm(op: SparseOperator, v: np.ndarray,
                    involution: Callable[[np.ndarray], np.ndarray] = apply_complement) -> float:
    """``||(A E - E A) v||`` for a vector or a batch of vectors (max over columns)."""
    lhs = op.matrix @ involution(v)
    rhs = involution(op.matrix @ v)
    return float(np.linalg.norm(lhs - rhs, axis=0).max())
