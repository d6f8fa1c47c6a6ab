"""First-order perturbation of the one-flip band and the analytic bounds around it.

At ``β = 0`` the conjugated generator ``U L̂ U`` is the number operator and the
one-particle sector ``span{|{y}>}`` is its eigenvalue-1 eigenspace.  The
first-order correction restricted there is the one-particle matrix
``½ Σ_x [[UHU, ℓ_x], ℓ_x]``.  With ``H = -Σ ω σσ`` its entry on a bond is
``-ω_zy``; the predicted band is ``1 + β·eig``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from glauberspec.hamiltonian import conjugated_hamiltonian_apply, energies
from glauberspec.lattice import DisorderField
from glauberspec.states import site_projector_apply

ORACLE_MAX_SITES = 16
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class OneParticleMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = self.entries
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("one-particle matrix must be square")
        m.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def gershgorin_radius(self) -> float:
        """``max_z Σ_y |T_zy|``; the spectrum lies in ``[-r, r]``."""
        return float(np.abs(self.entries).sum(axis=1).max(initial=0.0))

    def asymmetry(self) -> float:
        return float(np.abs(self.entries - self.entries.T).max(initial=0.0))


def first_order_matrix(field: DisorderField) -> OneParticleMatrix:
    """``T_zy = -ω_zy`` on bonds, zero elsewhere.

    Boundary fields couple ``|{y}>`` to ``|∅>`` and ``|{x, y}>`` only, so they
    do not enter the one-particle block.
    """
    n = field.n_sites
    t = np.zeros((n, n))
    for (i, j), w in zip(field.lattice.bonds, field.couplings):
        t[i, j] -= w
        t[j, i] -= w
    return OneParticleMatrix(t)


def double_commutator_matrix(field: DisorderField) -> OneParticleMatrix:
    """Oracle: ``½ Σ_x [[UHU, ℓ_x], ℓ_x]`` applied to each ``|{y}>``.

    ``UHU`` is applied through the butterfly from the energy table, so this
    path shares nothing with the bond-list construction above.
    """
    n = field.n_sites
    if n > ORACLE_MAX_SITES:
        raise ValueError(f"oracle capped at {ORACLE_MAX_SITES} sites")
    H = energies(field)
    dim = 1 << n
    singles = 1 << np.arange(n)
    basis = np.zeros((dim, n))
    basis[singles, np.arange(n)] = 1.0
    hv = conjugated_hamiltonian_apply(field, basis, H)
    acc = np.zeros_like(basis)
    for x in range(n):
        lv = site_projector_apply(x, basis)
        acc += conjugated_hamiltonian_apply(field, lv, H)
        acc += site_projector_apply(x, hv)
        acc -= 2.0 * site_projector_apply(x, conjugated_hamiltonian_apply(field, lv, H))
    return OneParticleMatrix(0.5 * acc[singles, :])


def band_bounds(beta: float, d: int, J: float) -> tuple[float, float]:
    """First-order band edges ``1 ∓ 2dJβ``."""
    if beta < 0 or d < 1 or J < 0:
        raise ValueError("beta, J must be non-negative and d positive")
    r = 2.0 * d * J * beta
    return 1.0 - r, 1.0 + r


def band_tolerance(beta: float, d: int, J: float, c2: float = 10.0) -> tuple[float, float]:
    """``1 ∓ (2dJβ + c2·β²)``: the first-order edges widened by a second-order allowance."""
    lo, hi = band_bounds(beta, d, J)
    return lo - c2 * beta * beta, hi + c2 * beta * beta


def golden_section_max(f: Callable[[float], float], a: float, b: float,
                       tol: float = 1e-12, max_iter: int = 200) -> tuple[float, float]:
    """Maximize ``f`` on ``[a, b]``; the endpoints are compared as well."""
    if b < a:
        raise ValueError("empty interval")
    lo, hi = a, b
    c = hi - _INV_PHI * (hi - lo)
    e = lo + _INV_PHI * (hi - lo)
    fc, fe = f(c), f(e)
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(lo) + abs(hi)):
            break
        if fc < fe:
            lo, c, fc = c, e, fe
            e = lo + _INV_PHI * (hi - lo)
            fe = f(e)
        else:
            hi, e, fe = e, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
    candidates = [(f(a), a), (f(b), b), (fc, c), (fe, e)]
    val, arg = max(candidates)
    return arg, val


def _b_integrand(x: float) -> float:
    return math.expm1(x) / math.cosh(x)


def _b_prime_integrand(x: float) -> float:
    return math.expm1(x) * math.cosh(x) + (math.cosh(x) - 1.0)


def relative_bound_constants(beta: float, d: int, J: float) -> tuple[float, float]:
    """``(b, b')``: maxima of ``(e^x-1)/cosh x`` and ``(e^x-1)cosh x + cosh x - 1`` on ``[0, 2dJβ]``.

    The interval is the range of ``β|Δ|/2`` over single flips.
    """
    if beta < 0 or d < 1 or J < 0:
        raise ValueError("beta, J must be non-negative and d positive")
    top = 2.0 * d * J * beta
    _, b = golden_section_max(_b_integrand, 0.0, top)
    _, bp = golden_section_max(_b_prime_integrand, 0.0, top)
    return b, bp


def relative_bound_envelope(beta: float, d: int, J: float) -> float:
    """``1 + 2 min(b, b')``, the band ceiling the relative form bounds would imply.

    The form bounds fail for some vectors outside the one-particle sector (see
    ``forms.check_relative_bound``), so this is reported, not asserted.
    """
    b, bp = relative_bound_constants(beta, d, J)
    return 1.0 + 2.0 * min(b, bp)


def predicted_band(beta: float, t1: OneParticleMatrix) -> np.ndarray:
    """Sorted ``1 + β·θ_i`` over the eigenvalues ``θ_i`` of ``t1``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return np.sort(1.0 + beta * t1.eigenvalues())


def band_deviation(exact_band, beta: float, t1: OneParticleMatrix) -> float:
    """``max |sorted exact - sorted prediction|``."""
    exact = np.sort(np.asarray(exact_band, dtype=float))
    pred = predicted_band(beta, t1)
    if exact.shape != pred.shape:
        raise ValueError("band and prediction sizes differ")
    return float(np.abs(exact - pred).max(initial=0.0))


def second_order_constant(exact_band, beta: float, t1: OneParticleMatrix) -> float:
    """Empirical remainder constant ``deviation / β²``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return band_deviation(exact_band, beta, t1) / (beta * beta)


def richardson_ratio(dev_coarse: float, dev_fine: float) -> float:
    """Deviation at ``2β`` over deviation at ``β``; 4 for a clean ``O(β²)`` remainder."""
    if dev_fine <= 0:
        return math.inf
    return dev_coarse / dev_fine
