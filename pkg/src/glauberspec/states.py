"""Lattice-gas configuration space as bit-sets, and the structural operators on it.

A subset ``α ⊆ Λ`` is the integer whose bit ``x`` is set iff site ``x`` is in
``α``; amplitude vectors of length ``2^|Λ|`` are indexed by that integer.  The
spin convention is fixed once here: site in ``α`` means spin +1.

All operators accept a 1-D vector or a 2-D ``(2^|Λ|, k)`` batch and act along
axis 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from glauberspec._backend import kernels

MAX_SITES = 20


@dataclass(frozen=True)
class SubsetState:
    bits: int
    n_sites: int

    def __post_init__(self):
        if not 0 <= self.n_sites <= MAX_SITES:
            raise ValueError(f"n_sites must be in [0, {MAX_SITES}]")
        if self.bits < 0 or self.bits >> self.n_sites:
            raise ValueError(f"bits {self.bits:#x} exceed {self.n_sites} sites")

    @classmethod
    def from_sites(cls, sites: Iterable[int], n_sites: int) -> "SubsetState":
        bits = 0
        for x in sites:
            if not 0 <= x < n_sites:
                raise ValueError(f"site {x} out of range")
            bits |= 1 << x
        return cls(bits, n_sites)

    @property
    def particles(self) -> int:
        return bin(self.bits).count("1")

    def sites(self) -> list[int]:
        return [x for x in range(self.n_sites) if self.bits >> x & 1]

    def spins(self) -> np.ndarray:
        return np.array([1 if self.bits >> x & 1 else -1 for x in range(self.n_sites)])

    def spin(self, y: int) -> int:
        return 1 if self.bits >> y & 1 else -1

    def flip(self, x: int) -> "SubsetState":
        return SubsetState(self.bits ^ (1 << x), self.n_sites)

    def complement(self) -> "SubsetState":
        return SubsetState(self.bits ^ ((1 << self.n_sites) - 1), self.n_sites)


def n_sites_of(v: np.ndarray) -> int:
    dim = v.shape[0]
    n = dim.bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise ValueError(f"vector length {dim} is not a power of two")
    if n > MAX_SITES:
        raise ValueError(f"|Λ|={n} exceeds the dense cap of {MAX_SITES} sites")
    return n


@lru_cache(maxsize=32)
def popcounts(n: int) -> np.ndarray:
    a = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n, dtype=np.int64)
    for x in range(n):
        out += (a >> x) & 1
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def occupation(n: int, x: int) -> np.ndarray:
    """Boolean mask of the subsets containing site ``x``."""
    if not 0 <= x < n:
        raise ValueError(f"site {x} out of range for {n} sites")
    mask = ((np.arange(1 << n, dtype=np.int64) >> x) & 1).astype(bool)
    mask.setflags(write=False)
    return mask


def _expand(mask: np.ndarray, v: np.ndarray) -> np.ndarray:
    return mask if v.ndim == 1 else mask[:, None]


def apply_hadamard(v: np.ndarray, return_norm: bool = False):
    """``U_Λ v`` with ``<γ|U|α> = 2^{-|Λ|/2} (-1)^{|α ∩ γ|}``; an involution.

    With ``return_norm`` the pair ``(Uv, ||Uv|| - ||v||)`` is returned for drift
    monitoring.
    """
    v = np.asarray(v, dtype=np.float64)
    n = n_sites_of(v)
    work = np.array(v.reshape(v.shape[0], -1), dtype=np.float64, order="C")
    kernels.fwht_inplace(work)
    work *= 2.0 ** (-n / 2)
    out = work.reshape(v.shape)
    if return_norm:
        return out, float(np.linalg.norm(out) - np.linalg.norm(v))
    return out


def apply_complement(v: np.ndarray) -> np.ndarray:
    """``E_Λ``: the amplitude at ``α`` moves to ``Λ \\ α``."""
    n_sites_of(v)
    # complement of a is (2^n - 1) - a, i.e. index reversal
    return np.array(v[::-1], copy=True)


def apply_parity(v: np.ndarray) -> np.ndarray:
    """``Ē_Λ = U E U``, diagonal with sign ``(-1)^{|α|}``."""
    n = n_sites_of(v)
    sign = np.where(popcounts(n) % 2, -1.0, 1.0)
    return v * _expand(sign, v)


def site_projector_apply(x: int, v: np.ndarray) -> np.ndarray:
    """``ℓ_x``: keeps amplitudes of subsets containing ``x``."""
    n = n_sites_of(v)
    if not 0 <= x < n:
        raise ValueError(f"site {x} out of range for {n} sites")
    return np.where(_expand(occupation(n, x), v), v, 0.0)


def site_projector_perp_apply(x: int, v: np.ndarray) -> np.ndarray:
    """``ℓ_x^⊥ = I - ℓ_x``."""
    n = n_sites_of(v)
    if not 0 <= x < n:
        raise ValueError(f"site {x} out of range for {n} sites")
    return np.where(_expand(occupation(n, x), v), 0.0, v)


def number_operator_apply(v: np.ndarray) -> np.ndarray:
    """``L_Λ = Σ_x ℓ_x``, i.e. multiplication by ``|α|``."""
    n = n_sites_of(v)
    return v * _expand(popcounts(n).astype(float), v)


def flip_apply(x: int, v: np.ndarray) -> np.ndarray:
    """Spin flip at ``x``: amplitude at ``α`` moves to ``α △ {x}``."""
    n = n_sites_of(v)
    if not 0 <= x < n:
        raise ValueError(f"site {x} out of range for {n} sites")
    idx = np.arange(1 << n, dtype=np.int64) ^ (1 << x)
    return v[idx]


def sector_split(v: np.ndarray, mode: str) -> list[np.ndarray]:
    """Decompose ``v`` into orthogonal symmetry components that sum to ``v``.

    ``parity_E``: ``[(v+Ev)/2, (v-Ev)/2]``; ``parity_Ebar``: even / odd particle
    number; ``particle_number``: one component per ``|α| = 0..|Λ|``.
    """
    n = n_sites_of(v)
    if mode == "parity_E":
        ev = apply_complement(v)
        plus = (v + ev) / 2
        return [plus, v - plus]
    pc = popcounts(n)
    if mode == "parity_Ebar":
        odd = _expand(pc % 2 == 1, v)
        return [np.where(odd, 0.0, v), np.where(odd, v, 0.0)]
    if mode == "particle_number":
        return [np.where(_expand(pc == k, v), v, 0.0) for k in range(n + 1)]
    raise ValueError(f"unknown sector mode {mode!r}")


def parity_project(u: np.ndarray, sign: int, normalize: bool = True) -> np.ndarray:
    """Project on the ``E_Λ u = sign·u`` sector."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    p = (u + sign * apply_complement(u)) / 2
    if normalize:
        norm = np.linalg.norm(p)
        if norm == 0:
            raise ValueError("projection vanishes")
        p = p / norm
    return p


class TaggedVector(NamedTuple):
    amplitudes: np.ndarray
    boundary: frozenset


def subbox_involution(v: np.ndarray, lattice, eta: Sequence[Sequence[int]] = ()) -> TaggedVector:
    """``ι_Λ^η`` at the vector level: relabel ``α ↦ Λ \\ α``, carrying ``η``.

    ``η`` is a set of exterior lattice points; overlap with the box is an error.
    """
    n = n_sites_of(v)
    if n != lattice.n_sites:
        raise ValueError("vector does not match the lattice")
    eta_set = frozenset(tuple(int(c) for c in p) for p in eta)
    inside = set(lattice.sites)
    overlap = [p for p in eta_set if p in inside]
    if overlap:
        raise ValueError(f"η overlaps Λ at {sorted(overlap)}")
    return TaggedVector(apply_complement(v), eta_set)
