import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from glauberspec.lattice import build_lattice, ring
from glauberspec.states import (SubsetState, apply_complement, apply_hadamard, apply_parity,
                                flip_apply, number_operator_apply, parity_project, popcounts,
                                sector_split, site_projector_apply, site_projector_perp_apply,
                                subbox_involution)


def vectors(max_n=6):
    return st.integers(1, max_n).flatmap(
        lambda n: arrays(np.float64, 1 << n, elements=st.floats(-10, 10)))


def dense_hadamard(n):
    a = np.arange(1 << n)
    signs = np.array([[(-1) ** bin(x & y).count("1") for y in a] for x in a], dtype=float)
    return signs / 2 ** (n / 2)


def test_subset_state_basics():
    s = SubsetState.from_sites([0, 2], 4)
    assert s.bits == 0b0101 and s.particles == 2
    assert list(s.spins()) == [1, -1, 1, -1]
    assert s.complement().bits == 0b1010
    assert s.flip(1).sites() == [0, 1, 2]
    with pytest.raises(ValueError):
        SubsetState(16, 4)


def test_hadamard_matches_dense_matrix():
    v = np.random.default_rng(0).normal(size=32)
    assert np.allclose(apply_hadamard(v), dense_hadamard(5) @ v, atol=1e-12)


@given(vectors())
def test_hadamard_is_an_isometric_involution(v):
    w, drift = apply_hadamard(v, return_norm=True)
    assert abs(drift) <= 1e-12 * (1 + np.linalg.norm(v))
    assert np.allclose(apply_hadamard(w), v, atol=1e-10 * (1 + np.abs(v).max()))


@given(vectors())
def test_complement_and_parity_are_involutions(v):
    assert np.array_equal(apply_complement(apply_complement(v)), v)
    assert np.array_equal(apply_parity(apply_parity(v)), v)


@given(vectors(5))
def test_parity_is_conjugated_complement(v):
    lhs = apply_hadamard(apply_complement(apply_hadamard(v)))
    assert np.allclose(lhs, apply_parity(v), atol=1e-10 * (1 + np.abs(v).max()))


@given(vectors(5))
def test_site_projectors_sum_to_number_operator(v):
    n = int(np.log2(len(v)))
    total = sum(site_projector_apply(x, v) for x in range(n))
    assert np.allclose(total, number_operator_apply(v))
    for x in range(n):
        assert np.array_equal(site_projector_apply(x, v) + site_projector_perp_apply(x, v), v)


@given(vectors(5), st.sampled_from(["parity_E", "parity_Ebar", "particle_number"]))
def test_sector_split_is_orthogonal_and_complete(v, mode):
    parts = sector_split(v, mode)
    assert np.allclose(sum(parts), v)
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            assert abs(parts[i] @ parts[j]) <= 1e-9 * (1 + v @ v)


def test_particle_sectors_have_binomial_sizes():
    n = 6
    pc = popcounts(n)
    assert [int((pc == k).sum()) for k in range(n + 1)] == [1, 6, 15, 20, 15, 6, 1]


def test_flip_moves_amplitude():
    v = np.zeros(8)
    v[0b010] = 1.0
    assert flip_apply(0, v)[0b011] == 1.0


def test_batches_act_columnwise():
    rng = np.random.default_rng(3)
    b = rng.normal(size=(16, 3))
    for op in (apply_hadamard, apply_complement, apply_parity, number_operator_apply):
        assert np.allclose(op(b), np.column_stack([op(b[:, k]) for k in range(3)]))


def test_parity_projection():
    u = np.random.default_rng(4).normal(size=16)
    p = parity_project(u, -1)
    assert np.allclose(apply_complement(p), -p)
    assert np.isclose(np.linalg.norm(p), 1.0)
    with pytest.raises(ValueError):
        parity_project(np.ones(16), -1)


def test_subbox_involution_carries_boundary_and_rejects_overlap():
    lat = build_lattice(1, 4, "fixed")
    v = np.arange(16.0)
    tagged = subbox_involution(v, lat, [(-1,)])
    assert np.array_equal(tagged.amplitudes, v[::-1])
    assert tagged.boundary == frozenset({(-1,)})
    with pytest.raises(ValueError):
        subbox_involution(v, lat, [(1,)])
    with pytest.raises(ValueError):
        subbox_involution(np.zeros(8), ring(4))


def test_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        apply_complement(np.zeros(12))
