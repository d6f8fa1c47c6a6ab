"""Finite lattice geometry and bounded random coupling fields.

Sites are enumerated lexicographically in their coordinates and bonds are
ordered by ``(min site index, axis, max site index)`` so that matrix layouts
are stable across runs.  Couplings are drawn from a counter-based Philox
stream: bond ``b`` always receives word ``b`` of the stream keyed by the
seed, independently of how many bonds are sampled or in which order.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BC_MODES = ("periodic", "free", "fixed")
DISTRIBUTION = "uniform"


@dataclass(frozen=True)
class Lattice:
    """A box ``Λ ⊂ Z^d`` with its nearest-neighbour bonds.

    For ``bc="fixed"`` the exterior neighbours of the box are listed in
    ``boundary_bonds`` as ``(site index, exterior coordinate)`` and ``eta`` is
    the set of exterior points carrying spin +1 (all others carry -1).
    """

    d: int
    lengths: tuple[int, ...]
    bc: str
    sites: tuple[tuple[int, ...], ...]
    bonds: tuple[tuple[int, int], ...]
    bond_axes: tuple[int, ...]
    boundary_bonds: tuple[tuple[int, tuple[int, ...]], ...] = ()
    eta: frozenset = field(default_factory=frozenset)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    @property
    def dim(self) -> int:
        """Dimension ``2^|Λ|`` of the configuration space."""
        return 1 << self.n_sites

    def index(self, coord: Sequence[int]) -> int:
        idx = 0
        for c, n in zip(coord, self.lengths):
            idx = idx * n + c
        return idx

    def boundary_spins(self) -> np.ndarray:
        """Spin value (+1/-1) of the exterior end of every boundary bond."""
        return np.array(
            [1.0 if tuple(y) in self.eta else -1.0 for _, y in self.boundary_bonds]
        )

    def neighbours(self) -> list[list[tuple[int, int]]]:
        """Per site, the list of ``(neighbour site, bond index)`` pairs."""
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.n_sites)]
        for b, (i, j) in enumerate(self.bonds):
            out[i].append((j, b))
            out[j].append((i, b))
        return out

    def metric_distance(self, i: int, j: int) -> int:
        """L1 distance between two sites, with wrap-around for periodic bc."""
        dist = 0
        for a, b, n in zip(self.sites[i], self.sites[j], self.lengths):
            delta = abs(a - b)
            if self.bc == "periodic":
                delta = min(delta, n - delta)
            dist += delta
        return dist

    def describe(self) -> dict:
        return {"d": self.d, "lengths": list(self.lengths), "bc": self.bc,
                "eta": sorted(list(p) for p in self.eta)}


def build_lattice(d: int, lengths: Sequence[int] | int, bc: str = "periodic",
                  eta: Iterable[Sequence[int]] = ()) -> Lattice:
    """Enumerate sites and bonds of a ``d``-dimensional box.

    ``lengths`` may be a single int (cubic box).  Periodic boxes need every
    side ``>= 3`` so that no pair of sites is joined twice.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if isinstance(lengths, (int, np.integer)):
        lengths = (int(lengths),) * d
    lengths = tuple(int(n) for n in lengths)
    if len(lengths) != d:
        raise ValueError(f"expected {d} side lengths, got {len(lengths)}")
    if bc not in BC_MODES:
        raise ValueError(f"unknown boundary mode {bc!r}; expected one of {BC_MODES}")
    if any(n < 2 for n in lengths):
        raise ValueError(f"side lengths must be >= 2, got {lengths}")
    if bc == "periodic" and any(n < 3 for n in lengths):
        raise ValueError(f"periodic boxes need side lengths >= 3, got {lengths}")

    sites = tuple(itertools.product(*(range(n) for n in lengths)))
    lat_index = {c: k for k, c in enumerate(sites)}

    bonds: set[tuple[int, int, int]] = set()
    boundary: list[tuple[int, tuple[int, ...]]] = []
    for k, c in enumerate(sites):
        for axis in range(d):
            for step in (-1, 1):
                nb = list(c)
                nb[axis] += step
                if 0 <= nb[axis] < lengths[axis]:
                    j = lat_index[tuple(nb)]
                elif bc == "periodic":
                    nb[axis] %= lengths[axis]
                    j = lat_index[tuple(nb)]
                else:
                    if bc == "fixed":
                        boundary.append((k, tuple(nb)))
                    continue
                bonds.add((min(k, j), axis, max(k, j)))
    ordered = sorted(bonds)

    eta_set = frozenset(tuple(int(v) for v in p) for p in eta)
    if eta_set and bc != "fixed":
        raise ValueError("a boundary subset eta only makes sense for bc='fixed'")
    exterior = {y for _, y in boundary}
    stray = eta_set - exterior
    if stray:
        raise ValueError(f"eta contains points that are not exterior neighbours: {sorted(stray)}")

    return Lattice(
        d=d,
        lengths=lengths,
        bc=bc,
        sites=sites,
        bonds=tuple((i, j) for i, _, j in ordered),
        bond_axes=tuple(a for _, a, _ in ordered),
        boundary_bonds=tuple(boundary),
        eta=eta_set,
    )


def ring(n: int, bc: str = "periodic") -> Lattice:
    return build_lattice(1, [n], bc)


@dataclass(frozen=True, eq=False)
class DisorderField:
    """One coupling per bond (and per boundary bond for fixed bc)."""

    lattice: Lattice
    couplings: np.ndarray
    j_minus: float
    j_plus: float
    seed: int | str
    boundary_couplings: np.ndarray = field(default_factory=lambda: np.zeros(0))
    distribution: str = DISTRIBUTION

    def __post_init__(self):
        for arr in (self.couplings, self.boundary_couplings):
            arr.setflags(write=False)
        if len(self.couplings) != self.lattice.n_bonds:
            raise ValueError("one coupling per bond required")
        if len(self.boundary_couplings) != len(self.lattice.boundary_bonds):
            raise ValueError("one coupling per boundary bond required")

    @property
    def J(self) -> float:
        return max(abs(self.j_minus), abs(self.j_plus))

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    def boundary_field(self) -> np.ndarray:
        """Per-site sum of ``ω_{xy} ξ_y`` over exterior neighbours ``y``."""
        b = np.zeros(self.n_sites)
        if len(self.boundary_couplings):
            spins = self.lattice.boundary_spins()
            for (x, _), w, s in zip(self.lattice.boundary_bonds, self.boundary_couplings, spins):
                b[x] += w * s
        return b

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric ``|Λ| x |Λ|`` matrix with ``ω_{xy}`` on bonds."""
        n = self.n_sites
        m = np.zeros((n, n))
        for (i, j), w in zip(self.lattice.bonds, self.couplings):
            m[i, j] += w
            m[j, i] += w
        return m

    def to_dict(self) -> dict:
        return {
            "d": self.lattice.d,
            "lengths": list(self.lattice.lengths),
            "bc": self.lattice.bc,
            "eta": sorted(list(p) for p in self.lattice.eta),
            "j_minus": self.j_minus,
            "j_plus": self.j_plus,
            "seed": self.seed,
            "distribution": self.distribution,
            "couplings": [float(w) for w in self.couplings],
            "boundary_couplings": [float(w) for w in self.boundary_couplings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "DisorderField":
        lattice = build_lattice(doc["d"], doc["lengths"], doc["bc"], doc.get("eta", ()))
        return cls(
            lattice=lattice,
            couplings=np.array(doc["couplings"], dtype=float),
            j_minus=float(doc["j_minus"]),
            j_plus=float(doc["j_plus"]),
            seed=doc["seed"],
            boundary_couplings=np.array(doc.get("boundary_couplings", []), dtype=float),
            distribution=doc.get("distribution", DISTRIBUTION),
        )

    @classmethod
    def from_json(cls, text: str) -> "DisorderField":
        return cls.from_dict(json.loads(text))


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """First ``count`` uniforms on [0, 1) of the Philox stream keyed by ``seed``.

    Word ``k`` depends only on ``(seed, k)``; the top 53 bits of each 64-bit
    word are used.
    """
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    raw = np.random.Philox(key=seed).random_raw(count)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def sample_disorder(lattice: Lattice, j_minus: float, j_plus: float, seed: int) -> DisorderField:
    """I.i.d. couplings, uniform on ``[j_minus, j_plus)``."""
    if j_minus > j_plus:
        raise ValueError(f"j_minus={j_minus} exceeds j_plus={j_plus}")
    if not (math.isfinite(j_minus) and math.isfinite(j_plus)):
        raise ValueError("coupling bounds must be finite")
    nb, nbd = lattice.n_bonds, len(lattice.boundary_bonds)
    u = uniform_stream(int(seed), nb + nbd)
    w = j_minus + (j_plus - j_minus) * u
    # guard against rounding past the upper end
    w = np.minimum(w, j_plus) if j_plus > j_minus else np.full_like(w, j_minus)
    return DisorderField(lattice, w[:nb].copy(), float(j_minus), float(j_plus), int(seed),
                         boundary_couplings=w[nb:].copy())


def constant_disorder(lattice: Lattice, zeta: float, j_minus: float | None = None,
                      j_plus: float | None = None) -> DisorderField:
    """Every bond (boundary bonds included) carries ``zeta``."""
    lo = zeta if j_minus is None else j_minus
    hi = zeta if j_plus is None else j_plus
    if not lo <= zeta <= hi:
        raise ValueError(f"zeta={zeta} outside [{lo}, {hi}]")
    return DisorderField(
        lattice,
        np.full(lattice.n_bonds, float(zeta)),
        float(lo),
        float(hi),
        f"constant({zeta!r})",
        boundary_couplings=np.full(len(lattice.boundary_bonds), float(zeta)),
    )


def derive_seed(base_seed: int, index: int) -> int:
    """Seed of realization ``index``; independent of worker count and order."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
