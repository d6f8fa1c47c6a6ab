# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; ``_pykernels`` holds the reference twins of every routine."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def fwht_inplace(double[:, ::1] a):
    """Unnormalized Walsh-Hadamard butterfly along axis 0 of a (2^n, k) array."""
    cdef Py_ssize_t dim = a.shape[0], k = a.shape[1]
    cdef Py_ssize_t h = 1, i, j, c
    cdef double x, y
    with nogil:
        while h < dim:
            i = 0
            while i < dim:
                for j in range(i, i + h):
                    for c in range(k):
                        x = a[j, c]
                        y = a[j + h, c]
                        a[j, c] = x + y
                        a[j + h, c] = x - y
                i += 2 * h
            h *= 2


def flip_delta_table(int n, const int[:, ::1] nbr, const double[:, ::1] nbr_w, const int[::1] deg,
                     const double[::1] bfield):
    """Table ``out[x, a] = H(a) - H(a ^ (1 << x))`` for every site and subset."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    out_arr = np.empty((n, dim), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t a
    cdef int x, m, y
    cdef double local, sx
    with nogil:
        for x in range(n):
            for a in range(dim):
                local = -bfield[x]
                for m in range(deg[x]):
                    y = nbr[x, m]
                    if (a >> y) & 1:
                        local = local + nbr_w[x, m]
                    else:
                        local = local - nbr_w[x, m]
                sx = 1.0 if (a >> x) & 1 else -1.0
                out[x, a] = -2.0 * sx * local
    return out_arr


def energies(int n, const int[::1] bi, const int[::1] bj, const double[::1] bw,
             const double[::1] bfield):
    """``H(a) = -sum_b w_b s_i s_j + sum_x s_x bfield_x`` for every subset."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t nb = bi.shape[0]
    out_arr = np.empty(dim, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t a, b
    cdef int x
    cdef double e
    with nogil:
        for a in range(dim):
            e = 0.0
            for b in range(nb):
                if ((a >> bi[b]) & 1) == ((a >> bj[b]) & 1):
                    e = e - bw[b]
                else:
                    e = e + bw[b]
            for x in range(n):
                if (a >> x) & 1:
                    e = e + bfield[x]
                else:
                    e = e - bfield[x]
            out[a] = e
    return out_arr


cdef inline int _table_index(signed char[::1] spins, const int[:, ::1] nbr, const int[::1] deg,
                             int x) noexcept nogil:
    cdef int idx = 1 if spins[x] > 0 else 0
    cdef int m
    for m in range(deg[x]):
        if spins[nbr[x, m]] > 0:
            idx |= 1 << (m + 1)
    return idx


cdef inline void _tree_set(double[::1] tree, Py_ssize_t P, int x, double r) noexcept nogil:
    cdef Py_ssize_t i = P + x
    tree[i] = r
    i >>= 1
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i >>= 1


def kmc_advance(signed char[::1] spins, const int[:, ::1] nbr, const int[::1] deg,
                const double[:, ::1] rate_table, double[::1] tree, const double[::1] uniforms,
                double t, double t_stop, long long grid_next, double grid_t0, double dt,
                long long grid_len, int tagged, signed char[::1] grid_tag,
                short[::1] grid_mag, long mag, double[::1] ev_times, int[::1] ev_sites,
                long long ev_count, bint record_events):
    """Advance the continuous-time dynamics using pairs of uniforms.

    Returns ``(t, pairs_used, grid_next, mag, ev_count, finished)``.
    """
    cdef Py_ssize_t P = tree.shape[0] // 2
    cdef Py_ssize_t n_pairs = uniforms.shape[0] // 2
    cdef Py_ssize_t e = 0, i
    cdef int n = spins.shape[0]
    cdef int x, m, y
    cdef double W, t_new, target, g
    cdef bint finished = False
    with nogil:
        while e < n_pairs:
            W = tree[1]
            t_new = t - log(1.0 - uniforms[2 * e]) / W
            if t_new > t_stop:
                while grid_next < grid_len:
                    g = grid_t0 + grid_next * dt
                    if g > t_stop:
                        break
                    grid_tag[grid_next] = spins[tagged]
                    grid_mag[grid_next] = <short>mag
                    grid_next += 1
                t = t_stop
                e += 1
                finished = True
                break
            while grid_next < grid_len:
                g = grid_t0 + grid_next * dt
                if g >= t_new:
                    break
                grid_tag[grid_next] = spins[tagged]
                grid_mag[grid_next] = <short>mag
                grid_next += 1
            target = uniforms[2 * e + 1] * W
            i = 1
            while i < P:
                if target < tree[2 * i]:
                    i = 2 * i
                else:
                    target = target - tree[2 * i]
                    i = 2 * i + 1
            x = <int>(i - P)
            if x >= n:
                x = n - 1
            spins[x] = -spins[x]
            mag += 2 * spins[x]
            _tree_set(tree, P, x, rate_table[x, _table_index(spins, nbr, deg, x)])
            for m in range(deg[x]):
                y = nbr[x, m]
                _tree_set(tree, P, y, rate_table[y, _table_index(spins, nbr, deg, y)])
            t = t_new
            if record_events:
                ev_times[ev_count] = t
                ev_sites[ev_count] = x
            ev_count += 1
            e += 1
    return t, e, grid_next, mag, ev_count, finished
