"""Pure-Python/numpy twins of the routines in ``_ckernels.pyx``.

Same signatures, same floating-point operation order, so trajectories from
``kmc_advance`` are bit-identical between the two backends.
"""
import math

import numpy as np


def fwht_inplace(a):
    dim = a.shape[0]
    h = 1
    while h < dim:
        v = a.reshape(dim // (2 * h), 2, h, -1)
        x = v[:, 0].copy()
        y = v[:, 1]
        v[:, 0] += y
        v[:, 1] = x - y
        h *= 2


def flip_delta_table(n, nbr, nbr_w, deg, bfield):
    dim = 1 << n
    a = np.arange(dim, dtype=np.int64)
    out = np.empty((n, dim))
    for x in range(n):
        local = np.full(dim, -bfield[x])
        for m in range(deg[x]):
            y = nbr[x, m]
            occ = ((a >> y) & 1).astype(bool)
            local = np.where(occ, local + nbr_w[x, m], local - nbr_w[x, m])
        sx = np.where((a >> x) & 1, 1.0, -1.0)
        out[x] = -2.0 * sx * local
    return out


def energies(n, bi, bj, bw, bfield):
    dim = 1 << n
    a = np.arange(dim, dtype=np.int64)
    e = np.zeros(dim)
    for i, j, w in zip(bi, bj, bw):
        same = ((a >> i) & 1) == ((a >> j) & 1)
        e = np.where(same, e - w, e + w)
    for x in range(n):
        e = np.where((a >> x) & 1, e + bfield[x], e - bfield[x])
    return e


def _table_index(spins, nbr, deg, x):
    idx = 1 if spins[x] > 0 else 0
    for m in range(deg[x]):
        if spins[nbr[x][m]] > 0:
            idx |= 1 << (m + 1)
    return idx


def _tree_set(tree, P, x, r):
    i = P + x
    tree[i] = r
    i >>= 1
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i >>= 1


def kmc_advance(spins, nbr, deg, rate_table, tree, uniforms, t, t_stop, grid_next,
                grid_t0, dt, grid_len, tagged, grid_tag, grid_mag, mag, ev_times,
                ev_sites, ev_count, record_events):
    P = tree.shape[0] // 2
    n_pairs = uniforms.shape[0] // 2
    n = spins.shape[0]
    # plain Python floats/lists keep the loop tolerable without numpy scalar overhead
    tr = tree.tolist()
    sp = spins.tolist()
    nb = nbr.tolist()
    dg = deg.tolist()
    rt = rate_table.tolist()
    u = uniforms.tolist()
    log = math.log
    e = 0
    finished = False
    while e < n_pairs:
        W = tr[1]
        t_new = t - log(1.0 - u[2 * e]) / W
        if t_new > t_stop:
            while grid_next < grid_len:
                g = grid_t0 + grid_next * dt
                if g > t_stop:
                    break
                grid_tag[grid_next] = sp[tagged]
                grid_mag[grid_next] = mag
                grid_next += 1
            t = t_stop
            e += 1
            finished = True
            break
        while grid_next < grid_len:
            g = grid_t0 + grid_next * dt
            if g >= t_new:
                break
            grid_tag[grid_next] = sp[tagged]
            grid_mag[grid_next] = mag
            grid_next += 1
        target = u[2 * e + 1] * W
        i = 1
        while i < P:
            if target < tr[2 * i]:
                i = 2 * i
            else:
                target = target - tr[2 * i]
                i = 2 * i + 1
        x = i - P
        if x >= n:
            x = n - 1
        sp[x] = -sp[x]
        mag += 2 * sp[x]
        _tree_set(tr, P, x, rt[x][_table_index(sp, nb, dg, x)])
        for m in range(dg[x]):
            y = nb[x][m]
            _tree_set(tr, P, y, rt[y][_table_index(sp, nb, dg, y)])
        t = t_new
        if record_events:
            ev_times[ev_count] = t
            ev_sites[ev_count] = x
        ev_count += 1
        e += 1
    spins[:] = sp
    tree[:] = tr
    return t, e, grid_next, mag, ev_count, finished
