"""Spectra of the assembled operators and extraction of the one-flip band.

Dense solves go through LAPACK (``numpy.linalg.eigh``).  The iterative solver
is a block Lanczos with full reorthogonalization and thick restarts; blocks
let it resolve the near-degenerate cluster near 1 that a single-vector
recursion would collapse.  The window mode runs the same recursion on the
folded operator ``(A - c)^2`` and finishes with a Rayleigh-Ritz step on ``A``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from glauberspec.operators import SparseOperator
from glauberspec.states import n_sites_of

DENSE_MAX_DIM = 4096
DEGENERACY_TOL = 1e-10
DENSE_RESIDUAL_TOL = 1e-11
ITERATIVE_RESIDUAL_TOL = 1e-8
SYMMETRY_TOL = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    method: str
    residual_bound: float
    sector_labels: tuple | None = None
    residuals: np.ndarray | None = None
    eigenvectors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.size > 1 and np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be sorted ascending")

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def to_dict(self) -> dict:
        out = {"method": self.method, "residual_bound": self.residual_bound,
               "eigenvalues": [float(v) for v in self.eigenvalues]}
        if self.sector_labels is not None:
            out["sector_labels"] = list(self.sector_labels)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue", "sector"])
            labels = self.sector_labels or [""] * len(self)
            for i, (v, s) in enumerate(zip(self.eigenvalues, labels)):
                w.writerow([i, repr(float(v)), s])


def _symmetric_dense(op: SparseOperator) -> np.ndarray:
    if op.dim > DENSE_MAX_DIM:
        raise ValueError(f"dense solve capped at dimension {DENSE_MAX_DIM}, got {op.dim}")
    asym = op.asymmetry()
    if asym > SYMMETRY_TOL:
        raise ValueError(f"symmetric solver needs a symmetric operator (asymmetry {asym:.2e})")
    a = op.to_dense()
    return (a + a.T) * 0.5


def dense_spectrum(op: SparseOperator, vectors: bool = False, n_checks: int = 10,
                   seed: int = 0) -> SpectrumResult:
    """Full spectrum; residuals ``||Av - λv|| / ||A||`` verified on sampled pairs."""
    a = _symmetric_dense(op)
    w, v = np.linalg.eigh(a)
    scale = max(op.norm_inf(), 1.0)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(w), size=min(n_checks, len(w)), replace=False)
    res = np.linalg.norm(a @ v[:, picks] - v[:, picks] * w[picks], axis=0) / scale
    bound = float(res.max(initial=0.0))
    if bound > DENSE_RESIDUAL_TOL:
        raise ConvergenceError(f"dense residual {bound:.2e} above tolerance", res)
    return SpectrumResult(w, "dense", bound, residuals=res, eigenvectors=v if vectors else None)


def _orthonormalize(V: np.ndarray, Q: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Orthonormalize ``V`` against ``Q`` and itself; dependent columns are replaced."""
    dim = V.shape[0]
    for _ in range(2):
        if Q.shape[1]:
            V = V - Q @ (Q.T @ V)
    out = []
    basis = Q
    for j in range(V.shape[1]):
        col = V[:, j]
        ref = max(np.linalg.norm(col), 1.0)
        for attempt in range(4):
            for _ in range(2):
                if basis.shape[1]:
                    col = col - basis @ (basis.T @ col)
                for c in out:
                    col = col - c * (c @ col)
            nrm = np.linalg.norm(col)
            if nrm > 1e-10 * ref:
                break
            col = rng.standard_normal(dim)
            ref = np.linalg.norm(col)
        else:
            continue
        out.append(col / nrm)
    return np.column_stack(out) if out else np.zeros((dim, 0))


def block_lanczos(apply: Callable[[np.ndarray], np.ndarray], dim: int, k: int,
                  select: Callable[[np.ndarray], np.ndarray], tol: float,
                  block: int | None = None, max_basis: int | None = None,
                  max_restarts: int = 500, seed: int = 0):
    """Thick-restart block Lanczos with full reorthogonalization.

    ``select(theta)`` returns the indices of the ``k`` wanted Ritz values among
    ``theta``.  Returns ``(theta, X, residual_norms)`` for the wanted pairs of
    the operator ``apply``.
    """
    rng = np.random.default_rng(seed)
    p = block or k
    m_max = min(dim, max_basis or max(k + 4 * p, 3 * k))
    if k > dim:
        raise ValueError("more eigenpairs requested than the dimension")
    Q = np.zeros((dim, 0))
    AQ = np.zeros((dim, 0))
    V = rng.standard_normal((dim, p))
    res = np.full(k, np.inf)
    for _ in range(max_restarts):
        while Q.shape[1] < m_max:
            V = _orthonormalize(V[:, : m_max - Q.shape[1]], Q, rng)
            if V.shape[1] == 0:
                break
            AV = apply(V)
            Q = np.hstack([Q, V])
            AQ = np.hstack([AQ, AV])
            V = AV
        T = Q.T @ AQ
        theta, Y = np.linalg.eigh((T + T.T) * 0.5)
        want = np.asarray(select(theta))
        X = Q @ Y[:, want]
        R = AQ @ Y[:, want] - X * theta[want]
        res = np.linalg.norm(R, axis=0)
        if np.all(res <= tol) or Q.shape[1] >= dim:
            return theta[want], X, res
        # keep the wanted pairs plus a buffer of their nearest competitors
        order = list(want) + [i for i in np.argsort(np.abs(theta - theta[want].mean()))
                              if i not in set(want)]
        keep = order[: min(len(order), k + p // 2 + 1)]
        Q = Q @ Y[:, keep]
        AQ = AQ @ Y[:, keep]
        V = R[:, res > tol]
    raise ConvergenceError(f"block Lanczos did not converge in {max_restarts} restarts", res)


def iterative_extremes(op: SparseOperator, k: int, which: str | tuple = "smallest",
                       tol: float = 1e-10, seed: int = 0, block: int | None = None) -> SpectrumResult:
    """The ``k`` smallest eigenvalues, or those within ``radius`` of ``center``.

    ``which`` is ``"smallest"`` or ``("window", center, radius)``.  In window mode
    ``k`` bounds the number of eigenvalues searched for; only those inside the
    window are returned.
    """
    if op.asymmetry() > SYMMETRY_TOL:
        raise ValueError("iterative solver needs a symmetric operator")
    if k < 1 or k > max(op.dim // 4, 1):
        raise ValueError(f"k must be in [1, dim/4]; got k={k}, dim={op.dim}")
    scale = max(op.norm_inf(), 1.0)
    A = op.matrix
    if which == "smallest":
        theta, X, _ = block_lanczos(lambda v: A @ v, op.dim, k, lambda t: np.arange(k),
                                    tol * scale, block=block, seed=seed)
    elif isinstance(which, tuple) and which[0] == "window":
        _, center, radius = which
        shifted = (A - center * sp.identity(op.dim, format="csr")).tocsr()
        fold_scale = (scale + abs(center)) ** 2
        mu, X, _ = block_lanczos(lambda v: shifted @ (shifted @ v), op.dim, k,
                                 lambda t: np.arange(k), tol * fold_scale, block=block,
                                 seed=seed)
        # select on the folded values: a mix of c - s and c + s has a Rayleigh
        # quotient near c on A but folded value s^2
        inside = mu <= radius ** 2 * (1 + 1e-12)
        if inside.all():
            raise ConvergenceError(f"all {k} values fall inside the window; raise k", np.zeros(k))
        X = X[:, inside]
        # Rayleigh-Ritz on A separates pairs folded onto the same value
        AX = A @ X
        theta, Y = np.linalg.eigh(((X.T @ AX) + (X.T @ AX).T) * 0.5)
        X = X @ Y
    else:
        raise ValueError(f"unknown selection {which!r}")
    res = np.linalg.norm(A @ X - X * theta, axis=0) / scale
    bound = float(res.max(initial=0.0))
    if bound > ITERATIVE_RESIDUAL_TOL:
        raise ConvergenceError(f"iterative residual {bound:.2e} above tolerance", res)
    order = np.argsort(theta)
    return SpectrumResult(theta[order], "iterative", bound, residuals=res[order],
                          eigenvectors=X[:, order])


def _parity_basis(dim: int, sign: int) -> sp.csr_matrix:
    """Orthonormal basis of the ``E v = sign·v`` sector as sparse columns."""
    a = np.arange(dim // 2, dtype=np.int64)
    c = dim - 1 - a
    s = 1 / math.sqrt(2)
    rows = np.concatenate([a, c])
    cols = np.concatenate([a, a])
    vals = np.concatenate([np.full(a.size, s), np.full(a.size, sign * s)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim // 2))


def sector_blocks(op: SparseOperator) -> dict[str, SparseOperator]:
    """Restrictions of an ``E``-commuting operator to the even and odd sectors."""
    n_sites_of(np.empty(op.dim))
    out = {}
    for label, sign in (("even", 1), ("odd", -1)):
        P = _parity_basis(op.dim, sign)
        out[label] = SparseOperator((P.T @ op.matrix @ P).tocsr(), op.symmetric,
                                    f"{op.label}|{label}")
    return out


def sector_spectrum(op: SparseOperator) -> SpectrumResult:
    """Dense spectrum assembled from the ``E``-even and ``E``-odd blocks, labelled."""
    vals, labels, bound = [], [], 0.0
    for label, blk in sector_blocks(op).items():
        r = dense_spectrum(blk)
        vals.append(r.eigenvalues)
        labels += [label] * len(r)
        bound = max(bound, r.residual_bound)
    vals = np.concatenate(vals)
    order = np.argsort(vals, kind="stable")
    return SpectrumResult(vals[order], "dense", bound, tuple(np.array(labels)[order]))


@dataclass(frozen=True)
class BandReport:
    ground: float
    band: tuple
    gap_below: float
    gap_above: float
    isolated: bool
    margin_below: float
    margin_above: float

    @property
    def band_min(self) -> float:
        return self.band[0]

    @property
    def band_max(self) -> float:
        return self.band[-1]

    @property
    def width(self) -> float:
        return self.band[-1] - self.band[0]

    def within(self, lo: float, hi: float) -> int:
        """Number of band values outside ``[lo, hi]``."""
        return sum(1 for v in self.band if v < lo or v > hi)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band"] = list(self.band)
        d["band_min"], d["band_max"] = self.band_min, self.band_max
        return d


def extract_band(spec: SpectrumResult | Sequence[float], n_sites: int) -> BandReport:
    """The ``n_sites`` eigenvalues nearest 1 after dropping the ground value.

    Isolation asks both neighbouring gaps to exceed half the band width;
    values closer than the degeneracy tolerance count as touching.
    """
    ev = np.sort(np.asarray(getattr(spec, "eigenvalues", spec), dtype=float))
    if ev.size < n_sites + 1:
        raise ValueError(f"need at least {n_sites + 1} eigenvalues, got {ev.size}")
    ground = float(ev[0])
    rest = ev[1:]
    pick = np.sort(np.argsort(np.abs(rest - 1.0), kind="stable")[:n_sites])
    band = rest[pick]
    others = np.delete(rest, pick)
    below = others[others <= band[0]]
    above = others[others >= band[-1]]
    lower_nbr = below.max() if below.size else ground
    upper_gap = float(above.min() - band[-1]) if above.size else math.inf
    lower_gap = float(band[0] - lower_nbr)
    half = 0.5 * float(band[-1] - band[0])
    inner = others[(others > band[0]) & (others < band[-1])]
    touching = lambda g: g <= DEGENERACY_TOL  # noqa: E731
    isolated = (inner.size == 0 and not touching(lower_gap) and not touching(upper_gap)
                and lower_gap > half and upper_gap > half)
    return BandReport(ground, tuple(float(v) for v in band), float(band[0] - ground),
                      upper_gap, bool(isolated), lower_gap - half, upper_gap - half)


def band_spectrum(op: SparseOperator, n_sites: int, solver: str = "auto",
                  seed: int = 0) -> SpectrumResult:
    """Enough of the low spectrum to extract the band: ground, band, one more."""
    if solver == "auto":
        solver = "dense" if op.dim <= 1024 else "iterative"
    if solver == "dense":
        return dense_spectrum(op)
    if solver == "iterative":
        return iterative_extremes(op, n_sites + 2, "smallest", seed=seed)
    raise ValueError(f"unknown solver {solver!r}")
