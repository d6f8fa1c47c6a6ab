"""Continuous-time Glauber simulation and relaxation-rate estimates.

The event loop lives in the kernels.  Each site's rate is looked up in a
per-site table indexed by its own spin (bit 0) and its neighbours' spins
(bits 1..deg); a binary sum tree over sites gives ``O(log|Λ|)`` selection and
local updates.  All randomness is drawn here from ``numpy.random.default_rng``
in chunks, so both kernel backends produce the same trajectory bit for bit.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from glauberspec import _backend
from glauberspec.generator import RateFamily, assemble_generator, symmetrize
from glauberspec.hamiltonian import flip_delta_table, gibbs_table, site_tables
from glauberspec.lattice import DisorderField
from glauberspec.spectral import dense_spectrum
from glauberspec.states import MAX_SITES, SubsetState

FIT_WINDOW = (0.05, 0.5)
EXACT_BOUND_MAX_SITES = 16
CHUNK_PAIRS = 1 << 18


class InsufficientDecayError(RuntimeError):
    """The autocorrelation never left the fit window inside the trajectory."""


def site_rate_tables(field: DisorderField, beta: float, family: RateFamily) -> np.ndarray:
    """``(|Λ|, 2^(maxdeg+1))`` rates indexed by own spin (bit 0) and neighbour spins."""
    nbr, nbr_w, deg, bfield = site_tables(field)
    n, maxdeg = nbr.shape
    width = 1 << (maxdeg + 1)
    idx = np.arange(width)
    own = np.where(idx & 1, 1.0, -1.0)
    out = np.empty((n, width))
    for x in range(n):
        local = np.full(width, -bfield[x])
        for m in range(deg[x]):
            local += nbr_w[x, m] * np.where((idx >> (m + 1)) & 1, 1.0, -1.0)
        out[x] = family.psi(beta * (-2.0 * own * local))
    return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    initial: SubsetState
    t_start: float
    t_end: float
    dt: float
    tagged_site: int
    tagged: np.ndarray
    magnetization: np.ndarray
    n_events: int
    event_times: np.ndarray | None = None
    event_sites: np.ndarray | None = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def grid(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(len(self.tagged))

    def replay(self) -> np.ndarray:
        """Bit-set after each recorded event (needs event records)."""
        if self.event_sites is None:
            raise ValueError("trajectory was run without event records")
        steps = np.left_shift(np.int64(1), self.event_sites.astype(np.int64))
        return np.bitwise_xor.accumulate(np.concatenate([[self.initial.bits], steps]))[1:]

    def occupation_measure(self) -> np.ndarray:
        """Fraction of recorded time spent in each configuration."""
        states = np.concatenate([[self.initial.bits], self.replay()])
        edges = np.concatenate([[self.t_start], self.event_times, [self.t_end]])
        hist = np.bincount(states, weights=np.diff(edges), minlength=1 << self.initial.n_sites)
        return hist / (self.t_end - self.t_start)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "tagged_spin", "magnetization"])
            for t, s, m in zip(self.grid, self.tagged, self.magnetization):
                w.writerow([repr(float(t)), int(s), int(m)])


def simulate(field: DisorderField, beta: float, family: RateFamily | None = None,
             t_max: float = 1e3, seed: int = 0, burn_in: float = 0.0, dt: float | None = None,
             tagged_site: int = 0, record_events: bool = True, backend: str | None = None,
             initial: SubsetState | None = None) -> Trajectory:
    """Run the dynamics to ``t_max`` and record ``[burn_in, t_max]``.

    The starting configuration is uniform at random unless given.  ``dt``
    defaults to ``0.1 / max rate``.
    """
    family = family or RateFamily.heat_bath()
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if not t_max > burn_in >= 0:
        raise ValueError("need t_max > burn_in >= 0")
    n = field.n_sites
    if n > MAX_SITES:
        raise ValueError(f"|Λ|={n} exceeds {MAX_SITES}")
    if not 0 <= tagged_site < n:
        raise ValueError("tagged site out of range")
    kern = _backend.kernels if backend is None else _backend.load(backend)
    nbr, _, deg, _ = site_tables(field)
    table = site_rate_tables(field, beta, family)
    if not np.all(table > 0):
        raise AssertionError("non-positive flip rate")
    dt = 0.1 / float(table.max()) if dt is None else float(dt)

    rng = np.random.default_rng(seed)
    if initial is None:
        bits = int(rng.integers(0, 1 << n))
    else:
        if initial.n_sites != n:
            raise ValueError("initial state does not match the lattice")
        bits = initial.bits
    spins = np.array([1 if bits >> x & 1 else -1 for x in range(n)], dtype=np.int8)
    P = 1 << max(n - 1, 0).bit_length()
    tree = np.zeros(2 * P)
    index = np.zeros(n, dtype=np.int64)
    for x in range(n):
        idx = 1 if spins[x] > 0 else 0
        for m in range(deg[x]):
            if spins[nbr[x, m]] > 0:
                idx |= 1 << (m + 1)
        index[x] = idx
    tree[P:P + n] = table[np.arange(n), index]
    for i in range(P - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]

    grid_len = int(math.floor((t_max - burn_in) / dt)) + 1
    grid_tag = np.zeros(grid_len, dtype=np.int8)
    grid_mag = np.zeros(grid_len, dtype=np.int16)
    ev_times = np.zeros(CHUNK_PAIRS if record_events else 1)
    ev_sites = np.zeros(CHUNK_PAIRS if record_events else 1, dtype=np.int32)
    empty_tag = np.zeros(1, dtype=np.int8)
    empty_mag = np.zeros(1, dtype=np.int16)

    t = 0.0
    mag = int(spins.sum())
    initial_state = None
    ev_count = 0
    grid_next = 0
    for phase_stop, recording in ((burn_in, False), (t_max, True)):
        if recording:
            initial_state = SubsetState(
                sum(1 << x for x in range(n) if spins[x] > 0), n)
            ev_count = 0
        finished = t >= phase_stop
        while not finished:
            u = rng.random(2 * CHUNK_PAIRS)
            if recording and record_events and ev_count + CHUNK_PAIRS > len(ev_times):
                cap = max(2 * len(ev_times), ev_count + CHUNK_PAIRS)
                ev_times = np.resize(ev_times, cap)
                ev_sites = np.resize(ev_sites, cap)
            rec = recording and record_events
            t, _, g_next, mag, ev_count, finished = kern.kmc_advance(
                spins, nbr, deg, table, tree, u, t, phase_stop,
                grid_next if recording else 0, burn_in, dt,
                grid_len if recording else 0, tagged_site,
                grid_tag if recording else empty_tag, grid_mag if recording else empty_mag,
                mag, ev_times if rec else ev_times[:1], ev_sites if rec else ev_sites[:1],
                ev_count, rec)
            if recording:
                grid_next = g_next
    meta = {"beta": beta, "family": family.kind, "seed": seed, "t_max": t_max,
            "burn_in": burn_in, "backend": kern.__name__.rsplit(".", 1)[-1]}
    return Trajectory(initial_state, float(burn_in), float(t_max), dt, tagged_site,
                      grid_tag[:grid_next], grid_mag[:grid_next], int(ev_count),
                      ev_times[:ev_count].copy() if record_events else None,
                      ev_sites[:ev_count].copy() if record_events else None, meta)


def autocovariance(series: np.ndarray, max_lag: int, mean: float | None = None) -> np.ndarray:
    """``C(k) = mean_s (x_s - m)(x_{s+k} - m)`` for ``k = 0..max_lag``."""
    x = np.asarray(series, dtype=float)
    m = x.mean() if mean is None else mean
    x = x - m
    max_lag = min(max_lag, len(x) - 1)
    return np.array([np.dot(x[: len(x) - k], x[k:]) / (len(x) - k) for k in range(max_lag + 1)])


def _fit_window(c: np.ndarray, window=FIT_WINDOW) -> tuple[int, int]:
    lo_frac, hi_frac = window
    c0 = c[0]
    start = next((k for k in range(len(c)) if c[k] <= hi_frac * c0), None)
    if start is None:
        raise InsufficientDecayError("autocorrelation never fell to the upper window edge")
    stop = start
    while stop + 1 < len(c) and c[stop + 1] >= lo_frac * c0:
        stop += 1
    if stop + 1 >= len(c):
        raise InsufficientDecayError("autocorrelation never fell below the lower window edge")
    if stop - start < 2:
        raise InsufficientDecayError("fit window holds fewer than three points")
    return start, stop


def fit_log_linear(times: np.ndarray, c: np.ndarray) -> tuple[float, float, float]:
    """Least squares ``log c = a - r t``; returns ``(r, a, rms residual)``."""
    y = np.log(c)
    A = np.column_stack([np.ones_like(times), times])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(-coef[1]), float(coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def _lag_range(trajs: Sequence[Trajectory], mean: float, lo_frac: float) -> int:
    """Smallest doubling of 16 lags that reaches well below the lower window edge."""
    cap = min(len(tr.tagged) for tr in trajs) // 20
    k = 16
    while True:
        c = np.mean([autocovariance(tr.tagged, k, mean) for tr in trajs], axis=0)
        if np.any(c[1:] < 0.5 * lo_frac * c[0]) or k >= cap:
            return min(2 * k, cap) if k < cap else cap
        k *= 2


@dataclass(frozen=True)
class GapEstimate:
    rate: float
    stderr: float
    window: tuple[float, float]
    fit_residual: float
    lag_window: tuple[int, int]
    dt: float
    n_blocks: int

    def to_dict(self) -> dict:
        return {"rate": self.rate, "stderr": self.stderr, "window": list(self.window),
                "fit_residual": self.fit_residual, "lag_window": list(self.lag_window),
                "dt": self.dt, "n_blocks": self.n_blocks}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def autocorrelation_gap(trajs: Trajectory | Sequence[Trajectory], max_lag: int | None = None,
                        blocks_per_replica: int = 10, n_boot: int = 200,
                        seed: int = 0, window=FIT_WINDOW) -> GapEstimate:
    """Decay rate of the tagged-spin autocovariance, with block-bootstrap error.

    Replicas are pooled.  The fit window is fixed from the pooled estimate and
    reused for every bootstrap resample of non-overlapping blocks.
    """
    trajs = [trajs] if isinstance(trajs, Trajectory) else list(trajs)
    dts = {tr.dt for tr in trajs}
    if len(dts) != 1:
        raise ValueError("replicas must share the sampling step")
    dt = dts.pop()
    mean = float(np.mean([tr.tagged.astype(float).mean() for tr in trajs]))
    if max_lag is None:
        max_lag = _lag_range(trajs, mean, window[0])
    blocks = []
    for tr in trajs:
        x = tr.tagged
        size = len(x) // blocks_per_replica
        if size <= max_lag:
            raise InsufficientDecayError("blocks shorter than the lag range")
        for b in range(blocks_per_replica):
            blocks.append(autocovariance(x[b * size:(b + 1) * size], max_lag, mean))
    blocks = np.array(blocks)
    c = blocks.mean(axis=0)
    start, stop = _fit_window(c, window)
    lags = np.arange(start, stop + 1)
    rate, _, resid = fit_log_linear(lags * dt, c[start:stop + 1])
    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(n_boot):
        pick = rng.integers(0, len(blocks), len(blocks))
        cb = blocks[pick].mean(axis=0)[start:stop + 1]
        if np.all(cb > 0):
            boot.append(fit_log_linear(lags * dt, cb)[0])
    stderr = float(np.std(boot, ddof=1)) if len(boot) > 1 else math.inf
    if not rate > 0:
        raise InsufficientDecayError(f"fitted rate {rate} is not positive")
    return GapEstimate(rate, stderr, (float(start * dt), float(stop * dt)), resid,
                       (int(start), int(stop)), dt, len(blocks))


@dataclass(frozen=True, eq=False)
class SpectralAutocorrelation:
    eigenvalues: np.ndarray
    weights: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(-np.multiply.outer(t, self.eigenvalues)) @ self.weights

    def slowest_rate(self, rel_tol: float = 1e-12) -> float:
        """Smallest eigenvalue carrying a non-negligible share of ``C(0)``."""
        keep = self.weights > rel_tol * self.weights.sum()
        return float(self.eigenvalues[keep].min())


def spectral_autocorrelation(field: DisorderField, beta: float, family: RateFamily | None = None,
                             site: int = 0) -> SpectralAutocorrelation:
    """Exact ``C(t) = Σ_k e^{-λ_k t} <ψ_k|g>²`` with ``g = √π (σ_site - <σ_site>)``."""
    family = family or RateFamily.heat_bath()
    table = gibbs_table(field, beta)
    op = symmetrize(assemble_generator(field, beta, family), table)
    spec = dense_spectrum(op, vectors=True)
    n = field.n_sites
    sigma = np.where((np.arange(1 << n) >> site) & 1, 1.0, -1.0)
    g = np.sqrt(table.gibbs) * (sigma - table.gibbs @ sigma)
    w = (spec.eigenvectors.T @ g) ** 2
    ev = np.clip(spec.eigenvalues, 0.0, None)
    return SpectralAutocorrelation(ev, w)


def matching_rate(exact: SpectralAutocorrelation, estimate: GapEstimate) -> float:
    """The log-linear fit applied to the exact ``C`` on the estimate's lag window."""
    lo, hi = estimate.lag_window
    t = np.arange(lo, hi + 1) * estimate.dt
    return fit_log_linear(t, exact(t))[0]


@dataclass(frozen=True)
class GapBound:
    bound: float | None
    numerator: float
    susceptibility: float
    available: bool

    def to_dict(self) -> dict:
        return {"bound": self.bound, "numerator": self.numerator,
                "susceptibility": self.susceptibility, "available": self.available}


def gap_upper_bound_exact(field: DisorderField, beta: float,
                          family: RateFamily | None = None) -> GapBound:
    """``2 E[Σ_x w_x] / Var(Σ_x σ_x)`` from exact enumeration.

    This is the Rayleigh quotient of the magnetization, so it bounds the gap
    whenever the variance is positive.
    """
    family = family or RateFamily.heat_bath()
    n = field.n_sites
    if n > EXACT_BOUND_MAX_SITES:
        raise ValueError(f"exact bound capped at {EXACT_BOUND_MAX_SITES} sites")
    table = gibbs_table(field, beta)
    w = family.psi(beta * flip_delta_table(field))
    numerator = 2.0 * float(table.gibbs @ w.sum(axis=0))
    a = np.arange(1 << n)
    mag = sum(np.where((a >> x) & 1, 1.0, -1.0) for x in range(n))
    chi = float(table.gibbs @ mag ** 2 - (table.gibbs @ mag) ** 2)
    if chi <= 0:
        return GapBound(None, numerator, chi, False)
    return GapBound(numerator / chi, numerator, chi, True)
