import numpy as np
import pytest

from glauberspec import _backend
from glauberspec.generator import RateFamily
from glauberspec.hamiltonian import site_tables
from glauberspec.kmc import simulate
from glauberspec.lattice import build_lattice, ring, sample_disorder

BACKENDS = _backend.available()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert _backend.BACKEND in BACKENDS


@pytest.mark.parametrize("name", BACKENDS)
def test_fwht_matches_definition(name):
    k = _backend.load(name)
    v = np.random.default_rng(0).normal(size=(16, 2))
    a = v.copy()
    k.fwht_inplace(a)
    idx = np.arange(16)
    signs = np.array([[(-1) ** bin(x & y).count("1") for y in idx] for x in idx])
    assert np.allclose(a, signs @ v)


@needs_both
@pytest.mark.parametrize("geom", [(1, (8,), "periodic"), (2, (3, 3), "periodic"),
                                  (1, (5,), "fixed")])
def test_tables_are_identical(geom):
    f = sample_disorder(build_lattice(*geom), -1, 1, 4)
    c, p = _backend.load("cython"), _backend.load("python")
    nbr, nbr_w, deg, bfield = site_tables(f)
    n = f.n_sites
    assert np.array_equal(c.flip_delta_table(n, nbr, nbr_w, deg, bfield),
                          p.flip_delta_table(n, nbr, nbr_w, deg, bfield))
    bonds = np.array(f.lattice.bonds, dtype=np.int32).reshape(-1, 2)
    bi, bj = np.ascontiguousarray(bonds[:, 0]), np.ascontiguousarray(bonds[:, 1])
    bw = np.ascontiguousarray(f.couplings, dtype=float)
    assert np.array_equal(c.energies(n, bi, bj, bw, bfield), p.energies(n, bi, bj, bw, bfield))


@needs_both
@pytest.mark.parametrize("family", ["heat_bath", "cosh_quarter"])
def test_trajectories_are_bit_identical(family):
    f = sample_disorder(ring(8), -1, 1, 3)
    kw = dict(t_max=60.0, seed=7, burn_in=5.0, family=RateFamily.named(family))
    a = simulate(f, 0.4, backend="cython", **kw)
    b = simulate(f, 0.4, backend="python", **kw)
    assert a.n_events == b.n_events
    assert np.array_equal(a.event_times, b.event_times)
    assert np.array_equal(a.event_sites, b.event_sites)
    assert np.array_equal(a.tagged, b.tagged)
    assert np.array_equal(a.magnetization, b.magnetization)
