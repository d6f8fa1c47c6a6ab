import numpy as np
import pytest
from hypothesis import given, strategies as st

from glauberspec.generator import (HAT_MAX_SITES, NonReversibleError, RateFamily, assemble_generator,
                                   assemble_hat, assemble_tilde, birth_death_parts, commutator_norm,
                                   detailed_balance_residual, entrywise_gap, hat_direct,
                                   hat_factorized, rate, symmetrize)
from glauberspec.hamiltonian import gibbs_table
from glauberspec.lattice import build_lattice, ring, sample_disorder
from glauberspec.operators import SparseOperator
from glauberspec.states import apply_complement, popcounts


def dense_complement(dim):
    return np.eye(dim)[::-1]


def test_rate_values():
    hb, cq = RateFamily.heat_bath(), RateFamily.cosh_quarter()
    assert rate(hb, 0.0, 1.0) == 0.5
    assert rate(cq, 0.0, 1.0) == 0.5
    assert rate(hb, 2.0, 1.0) == pytest.approx(1 / (1 + np.exp(-2.0)))
    assert rate(cq, 2.0, 0.5) == pytest.approx((1 + np.e) / 4)
    with pytest.raises(ValueError):
        rate(hb, 1.0, -0.1)


@given(st.floats(-30, 30), st.floats(0, 3))
def test_rate_ratio_is_boltzmann(delta, beta):
    for fam in (RateFamily.heat_bath(), RateFamily.cosh_quarter()):
        ratio = rate(fam, delta, beta) / rate(fam, -delta, beta)
        assert ratio == pytest.approx(np.exp(beta * delta), rel=1e-10)


def test_family_validation():
    assert RateFamily.heat_bath().validate(1.0, 2, 1.0)
    with pytest.raises(ValueError):
        RateFamily.custom(lambda u: u).validate(1.0, 1, 1.0)
    bumpy = RateFamily.custom(lambda u: 1.0 + 0.5 * np.sin(u))
    with pytest.warns(RuntimeWarning):
        assert bumpy.validate(2.0, 1, 1.0) is False
    with pytest.raises(ValueError):
        RateFamily.named("metropolis")
    lo, hi = RateFamily.heat_bath().envelope(0.5, 1, 1.0)
    assert lo == pytest.approx(1 / (1 + np.e ** 2)) and hi == pytest.approx(1 / (1 + np.e ** -2))


def test_beta_zero_spectrum_is_binomial(ring4):
    f = sample_disorder(ring4, -1, 1, 0)
    ev = np.linalg.eigvalsh(assemble_tilde(f, 0.0).to_dense())
    expected = np.repeat([0, 1, 2, 3, 4], [1, 4, 6, 4, 1]).astype(float)
    assert np.allclose(ev, expected, atol=1e-12)


@pytest.mark.parametrize("kind", ["heat_bath", "cosh_quarter"])
def test_generator_structure(torus_field, kind):
    L = assemble_generator(torus_field, 0.4, RateFamily.named(kind)).to_dense()
    assert np.allclose(L @ np.ones(512), 0, atol=1e-12)
    off = L - np.diag(np.diag(L))
    assert np.all(off <= 0) and np.all(np.diag(L) >= 0)
    # stationarity of the Gibbs measure: π L = 0
    pi = gibbs_table(torus_field, 0.4).gibbs
    assert np.abs(pi @ L).max() < 1e-14
    assert detailed_balance_residual(torus_field, 0.4, RateFamily.named(kind)) < 1e-13


def test_birth_and_death_sum_and_are_swapped_by_complement(ring6_field):
    L = assemble_generator(ring6_field, 0.5)
    death, birth = birth_death_parts(ring6_field, 0.5)
    assert np.allclose(death.to_dense() + birth.to_dense(), L.to_dense())
    E = dense_complement(64)
    assert np.allclose(E @ death.to_dense() @ E, birth.to_dense(), atol=1e-14)
    # death lowers the particle number, so it only fills the upper triangle of the
    # number-ordered off-diagonal part
    pc = popcounts(6)
    d = death.to_dense()
    r, c = np.nonzero(d - np.diag(np.diag(d)))
    assert np.all(pc[c] == pc[r] - 1)


def test_tilde_routes_agree(torus_field):
    for beta in (0.0, 0.1, 1.3):
        a = assemble_tilde(torus_field, beta, "similarity")
        b = assemble_tilde(torus_field, beta, "closed_form")
        assert entrywise_gap(a, b) < 1e-13
        assert a.asymmetry() == 0.0


def test_hat_routes_agree(torus_field):
    for beta in (0.0, 0.2, 1.0):
        assert entrywise_gap(hat_factorized(torus_field, beta), hat_direct(torus_field, beta)) < 1e-10
    assemble_hat(torus_field, 0.5)


def test_hat_is_cosh_quarter_symmetrization(ring6_field):
    gen = assemble_generator(ring6_field, 0.7, RateFamily.cosh_quarter())
    sym = symmetrize(gen, gibbs_table(ring6_field, 0.7))
    assert entrywise_gap(sym, hat_direct(ring6_field, 0.7)) < 1e-13


def test_symmetrize_rejects_non_reversible(ring6_field):
    gen = assemble_generator(ring6_field, 0.7)
    wrong = gibbs_table(ring6_field, 0.2)
    with pytest.raises(NonReversibleError):
        symmetrize(gen, wrong)


def test_tilde_and_hat_agree_to_first_order(ring6_field):
    # same value and derivative at beta = 0, so the gap shrinks like beta^2
    gaps = []
    for beta in (0.02, 0.01):
        t = assemble_tilde(ring6_field, beta).to_dense()
        h = hat_direct(ring6_field, beta).to_dense()
        gaps.append(np.abs(t - h).max())
    assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=0.02)
    assert np.allclose(assemble_tilde(ring6_field, 0.0).to_dense(),
                       hat_direct(ring6_field, 0.0).to_dense())


@given(st.integers(0, 2**32 - 1), st.floats(0, 2))
def test_symmetrized_operators_commute_with_complement(seed, beta):
    f = sample_disorder(ring(6), -1, 1, seed)
    v = np.random.default_rng(seed).normal(size=(64, 3))
    for op in (assemble_tilde(f, beta, "closed_form"), hat_direct(f, beta)):
        assert commutator_norm(op, v) < 1e-10 * (1 + op.norm_inf())


@given(st.integers(0, 2**32 - 1), st.floats(0, 1.5))
def test_symmetrized_operators_are_positive_semidefinite(seed, beta):
    f = sample_disorder(ring(5), -1, 1, seed)
    for op in (assemble_tilde(f, beta, "closed_form"), hat_direct(f, beta)):
        ev = np.linalg.eigvalsh(op.to_dense())
        assert ev[0] >= -1e-10 * (1 + ev[-1])


def test_ground_state_is_root_gibbs(ring6_field):
    t = assemble_tilde(ring6_field, 0.8).to_dense()
    root = np.sqrt(gibbs_table(ring6_field, 0.8).gibbs)
    assert np.abs(t @ root).max() < 1e-13


def test_fixed_boundary_breaks_complement_symmetry():
    lat = build_lattice(1, 5, "fixed", eta=[(5,)])
    f = sample_disorder(lat, 0.5, 1, 0)
    v = np.random.default_rng(0).normal(size=32)
    assert commutator_norm(assemble_tilde(f, 0.5), v) > 1e-3


def test_size_caps():
    big = sample_disorder(build_lattice(1, HAT_MAX_SITES + 1, "free"), -1, 1, 0)
    with pytest.raises(ValueError):
        hat_factorized(big, 0.1)
    with pytest.raises(ValueError):
        assemble_tilde(big, 0.1, "bogus")


def test_operator_text_roundtrip(tmp_path, ring6_field):
    op = assemble_tilde(ring6_field, 0.3)
    op.write_text(tmp_path / "op.txt")
    back = SparseOperator.read_text(tmp_path / "op.txt", symmetric=True)
    assert entrywise_gap(back, op) == 0.0
    assert op.max_row_nnz() <= 7


def test_matrix_element_domination_holds_on_diagonal_and_in_magnitude():
    # exhaustive on ring8; off the diagonal the signed inequality reverses,
    # since -1/(2 cosh) >= -cosh/2
    f = sample_disorder(ring(8), -1, 1, 9)
    for beta in (0.1, 0.7):
        t = assemble_tilde(f, beta, "closed_form").to_dense()
        h = hat_direct(f, beta).to_dense()
        assert np.all(np.diag(t) <= np.diag(h) + 1e-14)
        assert np.all(np.abs(t) <= np.abs(h) + 1e-14)
        off = ~np.eye(256, dtype=bool) & (h != 0)
        assert np.all(t[off] >= h[off])
