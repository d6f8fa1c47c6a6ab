"""Configuration energies, flip energies and Gibbs weights.

``H_α = -Σ_{bonds {x,y}} ω_xy σ_x σ_y + Σ_{x, y exterior} σ_x ω_xy ξ_y``, the
boundary sum present only for fixed boundary conditions.  The flip energy is
``Δ_x H_α = H_α - H_{α△{x}} = -2 σ_x (Σ_y ω_xy σ_y - Σ_{y ext} ω_xy ξ_y)``,
which obeys ``|Δ_x H| <= 4dJ`` for periodic boxes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from glauberspec._backend import kernels
from glauberspec.lattice import DisorderField
from glauberspec.operators import SparseOperator
from glauberspec.states import MAX_SITES, SubsetState, apply_hadamard


def _check_size(field: DisorderField, cap: int = MAX_SITES) -> int:
    n = field.n_sites
    if n > cap:
        raise ValueError(f"|Λ|={n} exceeds the enumeration cap of {cap} sites")
    return n


def site_tables(field: DisorderField):
    """Padded neighbour lists for the kernels: ``(nbr, nbr_w, deg, bfield)``."""
    lat = field.lattice
    nbrs = lat.neighbours()
    maxdeg = max((len(v) for v in nbrs), default=0)
    n = lat.n_sites
    nbr = np.zeros((n, max(maxdeg, 1)), dtype=np.int32)
    nbr_w = np.zeros((n, max(maxdeg, 1)))
    deg = np.zeros(n, dtype=np.int32)
    for x, lst in enumerate(nbrs):
        deg[x] = len(lst)
        for m, (y, b) in enumerate(lst):
            nbr[x, m] = y
            nbr_w[x, m] = field.couplings[b]
    return nbr, nbr_w, deg, np.ascontiguousarray(field.boundary_field())


def _check_state(alpha, field: DisorderField) -> int:
    if isinstance(alpha, SubsetState):
        if alpha.n_sites != field.n_sites:
            raise ValueError("state and field live on different lattices")
        return alpha.bits
    bits = int(alpha)
    if bits < 0 or bits >> field.n_sites:
        raise ValueError(f"subset {bits:#x} does not fit {field.n_sites} sites")
    return bits


def energy(alpha, field: DisorderField) -> float:
    bits = _check_state(alpha, field)
    s = lambda y: 1.0 if bits >> y & 1 else -1.0  # noqa: E731
    e = 0.0
    for (i, j), w in zip(field.lattice.bonds, field.couplings):
        e -= w * s(i) * s(j)
    for x, b in enumerate(field.boundary_field()):
        e += s(x) * b
    return e


def flip_delta(alpha, x: int, field: DisorderField) -> float:
    bits = _check_state(alpha, field)
    if not 0 <= x < field.n_sites:
        raise ValueError(f"site {x} out of range")
    s = lambda y: 1.0 if bits >> y & 1 else -1.0  # noqa: E731
    local = -field.boundary_field()[x]
    for y, b in field.lattice.neighbours()[x]:
        local += field.couplings[b] * s(y)
    return -2.0 * s(x) * local


def energies(field: DisorderField) -> np.ndarray:
    """``H_α`` for every subset, indexed by bit-set value."""
    n = _check_size(field)
    bonds = np.array(field.lattice.bonds, dtype=np.int32).reshape(-1, 2)
    return kernels.energies(n, np.ascontiguousarray(bonds[:, 0]), np.ascontiguousarray(bonds[:, 1]),
                            np.ascontiguousarray(field.couplings, dtype=float), site_tables(field)[3])


def flip_delta_table(field: DisorderField) -> np.ndarray:
    """``(|Λ|, 2^|Λ|)`` array of ``Δ_x H_α``."""
    n = _check_size(field)
    return kernels.flip_delta_table(n, *site_tables(field))


@dataclass(frozen=True, eq=False)
class EnergyTable:
    beta: float
    energies: np.ndarray
    gibbs: np.ndarray
    log_z: float

    @property
    def n_sites(self) -> int:
        return self.energies.shape[0].bit_length() - 1

    def sqrt_gibbs(self) -> np.ndarray:
        return np.sqrt(self.gibbs)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subset", "energy", "gibbs"])
            for a, (e, g) in enumerate(zip(self.energies, self.gibbs)):
                w.writerow([a, repr(float(e)), repr(float(g))])


def gibbs_table(field: DisorderField, beta: float, H: np.ndarray | None = None) -> EnergyTable:
    """Gibbs weights against the uniform reference measure on subsets.

    ``log_z = log μ_Λ(e^{-βH})`` so that ``log_z = 0`` at ``β = 0``.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    H = energies(field) if H is None else np.array(H, dtype=float)
    n = _check_size(field)
    a = -beta * H
    lse = logsumexp(a)
    g = np.exp(a - lse)
    g /= g.sum()
    for arr in (H, g):
        arr.setflags(write=False)
    return EnergyTable(float(beta), H, g, float(lse - n * np.log(2.0)))


def hamiltonian_operator(field: DisorderField) -> SparseOperator:
    """Diagonal ``Σ_α H_α |α><α|``."""
    H = energies(field)
    dim = H.shape[0]
    idx = np.arange(dim)
    return SparseOperator.from_coo(idx, idx, H, dim, symmetric=True, label="H")


def conjugated_hamiltonian(field: DisorderField) -> SparseOperator:
    """``U H U`` assembled directly from its bond structure.

    With ``σ_x = -Z_x`` and ``U Z_x U = X_x`` (the flip), this is
    ``-Σ_b ω_b X_i X_j - Σ_x h_x X_x`` where ``h_x`` is the exterior field; so
    ``<{z}| U H U |{y}> = -ω_zy`` on bonds.
    """
    n = _check_size(field)
    dim = 1 << n
    a = np.arange(dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for (i, j), w in zip(field.lattice.bonds, field.couplings):
        rows.append(a)
        cols.append(a ^ ((1 << i) | (1 << j)))
        vals.append(np.full(dim, -w))
    for x, h in enumerate(field.boundary_field()):
        if h != 0.0:
            rows.append(a)
            cols.append(a ^ (1 << x))
            vals.append(np.full(dim, -h))
    if not rows:
        return SparseOperator.from_coo([], [], [], dim, symmetric=True, label="UHU")
    return SparseOperator.from_coo(np.concatenate(rows), np.concatenate(cols),
                                   np.concatenate(vals), dim, symmetric=True, label="UHU")


def conjugated_hamiltonian_apply(field: DisorderField, v: np.ndarray,
                                 H: np.ndarray | None = None) -> np.ndarray:
    """``U H U v`` through two butterflies and a diagonal product."""
    H = energies(field) if H is None else H
    w = apply_hadamard(v)
    w = w * (H if w.ndim == 1 else H[:, None])
    return apply_hadamard(w)
