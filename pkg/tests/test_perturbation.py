import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glauberspec.generator import assemble_tilde, hat_direct
from glauberspec.lattice import build_lattice, ring, sample_disorder
from glauberspec.perturbation import (band_bounds, band_deviation, band_tolerance,
                                      double_commutator_matrix, first_order_matrix,
                                      golden_section_max, predicted_band, relative_bound_constants,
                                      relative_bound_envelope, richardson_ratio,
                                      second_order_constant)
from glauberspec.spectral import dense_spectrum, extract_band


@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, (6,)), (2, (3, 3)), (1, (5,))]))
def test_first_order_matrix_matches_commutator_oracle(seed, geom):
    f = sample_disorder(build_lattice(geom[0], geom[1]), -1, 1, seed)
    t1 = first_order_matrix(f)
    oracle = double_commutator_matrix(f)
    assert np.abs(t1.entries - oracle.entries).max() < 1e-12
    assert t1.asymmetry() == 0.0


@given(st.integers(0, 2**32 - 1))
def test_first_order_spectrum_inside_gershgorin_and_bounds(seed):
    f = sample_disorder(build_lattice(2, (3, 3)), -1, 1, seed)
    t1 = first_order_matrix(f)
    r = t1.gershgorin_radius()
    assert r <= 2 * 2 * f.J + 1e-12
    assert np.all(np.abs(t1.eigenvalues()) <= r + 1e-12)
    lo, hi = band_bounds(0.1, 2, f.J)
    band = predicted_band(0.1, t1)
    assert lo - 1e-12 <= band[0] and band[-1] <= hi + 1e-12


def test_boundary_fields_do_not_enter_first_order():
    lat = build_lattice(1, 5, "fixed", eta=[(5,)])
    f = sample_disorder(lat, -1, 1, 3)
    assert np.abs(first_order_matrix(f).entries - double_commutator_matrix(f).entries).max() < 1e-12


def test_band_bounds_and_tolerance():
    assert band_bounds(0.1, 2, 1.0) == pytest.approx((0.6, 1.4))
    assert band_tolerance(0.1, 2, 1.0, c2=10) == pytest.approx((0.5, 1.5))
    with pytest.raises(ValueError):
        band_bounds(-1, 1, 1)


def test_golden_section_checks_endpoints():
    x, v = golden_section_max(lambda t: -(t - 0.3) ** 2, 0, 1)
    assert x == pytest.approx(0.3, abs=1e-6)
    x, v = golden_section_max(lambda t: t, 0, 2)
    assert x == 2 and v == 2


def test_relative_bound_constants():
    b, bp = relative_bound_constants(0.0, 1, 1.0)
    assert b == 0 and bp == 0
    b, bp = relative_bound_constants(1e-4, 1, 1.0)
    # both integrands have slope 1 at the origin; the interval is [0, 2e-4]
    assert b / 1e-4 == pytest.approx(2.0, rel=1e-3)
    assert bp / 1e-4 == pytest.approx(2.0, rel=1e-3)
    # (e^x - 1)/cosh x peaks near x = 1.06 at about 1.09
    b, _ = relative_bound_constants(5.0, 1, 1.0)
    xs = np.linspace(0, 10, 200001)
    assert b == pytest.approx((np.expm1(xs) / np.cosh(xs)).max(), rel=1e-9)
    assert relative_bound_envelope(0.1, 1, 1.0) == pytest.approx(1 + 2 * min(
        relative_bound_constants(0.1, 1, 1.0)))


@pytest.mark.parametrize("builder", [assemble_tilde, hat_direct])
def test_exact_band_within_second_order_of_prediction(builder):
    f = sample_disorder(ring(8), -1, 1, 2)
    t1 = first_order_matrix(f)
    for beta in (0.02, 0.05):
        band = extract_band(dense_spectrum(builder(f, beta)), 8).band
        assert second_order_constant(band, beta, t1) < 10


def test_hat_remainder_is_second_order():
    f = sample_disorder(build_lattice(2, (3, 3)), -1, 1, 5)
    t1 = first_order_matrix(f)
    dev = [band_deviation(extract_band(dense_spectrum(hat_direct(f, b)), 9).band, b, t1)
           for b in (0.02, 0.01)]
    assert 3.0 < richardson_ratio(*dev) < 5.0


def test_helpers_reject_bad_input():
    t1 = first_order_matrix(sample_disorder(ring(4), -1, 1, 0))
    with pytest.raises(ValueError):
        band_deviation([1.0, 1.0], 0.1, t1)
    with pytest.raises(ValueError):
        second_order_constant([1.0] * 4, 0.0, t1)
    assert richardson_ratio(1.0, 0.0) == math.inf


def test_hat_derivative_on_conjugated_one_particle_sector():
    from glauberspec.states import apply_hadamard
    f = sample_disorder(build_lattice(2, (3, 3)), -1, 1, 6)
    t1 = first_order_matrix(f).entries
    singles = 1 << np.arange(9)
    basis = np.zeros((512, 9))
    basis[singles, np.arange(9)] = 1.0
    base = hat_direct(f, 0.0).matrix
    errs = []
    for beta in (0.01, 0.005):
        diff = hat_direct(f, beta).matrix - base
        block = apply_hadamard(diff @ apply_hadamard(basis))[singles] / beta
        errs.append(np.abs(block - t1).max())
    # the remainder is linear in beta
    assert errs[0] < 10 * 0.01
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
