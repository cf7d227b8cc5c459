"""Hot inner loops: sector enumeration, bond-operator assembly, CSR products
and the fused Chebyshev recurrence step.

Every kernel exists twice, a numba version and a vectorised numpy/scipy
version.  The public names at the bottom are bound once at import time
according to :mod:`ladder_eth._accel`.
"""
from math import comb

import numpy as np
import scipy.sparse as sp

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

@njit
def _sector_states_nb(n_sites, n_up):
    dim = 1
    for k in range(n_up):
        dim = dim * (n_sites - k) // (k + 1)
    out = np.empty(dim, np.int64)
    s = np.int64((1 << n_up) - 1)
    for k in range(dim):
        out[k] = s
        if k + 1 < dim:
            # Gosper's hack: next integer with the same popcount
            c = s & -s
            r = s + c
            s = (((r ^ s) >> 2) // c) | r
    return out


@njit
def _bond_rows_nb(states, bond_i, bond_j, w_xy, w_zz):
    dim = states.size
    nb = bond_i.size
    cols = np.empty((dim, nb + 1), np.int64)
    vals = np.zeros((dim, nb + 1))
    counts = np.empty(dim, np.int64)
    for r in range(dim):
        s = states[r]
        diag = 0.0
        k = 1
        for b in range(nb):
            si = (s >> bond_i[b]) & 1
            sj = (s >> bond_j[b]) & 1
            if si == sj:
                diag += 0.25 * w_zz[b]
            else:
                diag -= 0.25 * w_zz[b]
                if w_xy[b] != 0.0:
                    t = s ^ ((np.int64(1) << bond_i[b]) | (np.int64(1) << bond_j[b]))
                    cols[r, k] = np.searchsorted(states, t)
                    vals[r, k] = 0.5 * w_xy[b]
                    k += 1
        cols[r, 0] = r
        vals[r, 0] = diag
        counts[r] = k
    return cols, vals, counts


@njit
def _csr_matvec_nb(indptr, indices, data, x):
    n = indptr.size - 1
    out = np.empty(n, x.dtype)
    for r in range(n):
        acc = x[0] * 0.0
        for p in range(indptr[r], indptr[r + 1]):
            acc += data[p] * x[indices[p]]
        out[r] = acc
    return out


@njit
def _csr_matmat_nb(indptr, indices, data, x):
    n = indptr.size - 1
    m = x.shape[1]
    out = np.zeros((n, m), x.dtype)
    for r in range(n):
        for p in range(indptr[r], indptr[r + 1]):
            c = indices[p]
            d = data[p]
            for j in range(m):
                out[r, j] += d * x[c, j]
    return out


@njit
def _cheb_step_nb(indptr, indices, data, alpha, beta, cur, prev, coeff, acc):
    """Return t_{k+1} = 2 (alpha A - beta) t_k - t_{k-1}; acc += coeff t_{k+1}."""
    n = indptr.size - 1
    nxt = np.empty_like(cur)
    for r in range(n):
        s = cur[0] * 0.0
        for p in range(indptr[r], indptr[r + 1]):
            s += data[p] * cur[indices[p]]
        v = 2.0 * (alpha * s - beta * cur[r]) - prev[r]
        nxt[r] = v
        acc[r] += coeff * v
    return nxt


# --------------------------------------------------------------------------
# numpy / scipy fallbacks
# --------------------------------------------------------------------------

def _sector_states_np(n_sites, n_up):
    if n_sites <= 24:
        allstates = np.arange(1 << n_sites, dtype=np.int64)
        pop = np.zeros(allstates.size, np.int64)
        for b in range(n_sites):
            pop += (allstates >> b) & 1
        return allstates[pop == n_up]
    from itertools import combinations
    out = np.fromiter(
        (sum(1 << b for b in c) for c in combinations(range(n_sites), n_up)),
        dtype=np.int64, count=comb(n_sites, n_up),
    )
    return np.sort(out)


def _bond_rows_np(states, bond_i, bond_j, w_xy, w_zz):
    dim = states.size
    nb = bond_i.size
    cols = np.empty((dim, nb + 1), np.int64)
    vals = np.zeros((dim, nb + 1))
    present = np.zeros((dim, nb + 1), bool)
    rows = np.arange(dim)
    diag = np.zeros(dim)
    for b in range(nb):
        si = (states >> bond_i[b]) & 1
        sj = (states >> bond_j[b]) & 1
        same = si == sj
        diag += np.where(same, 0.25 * w_zz[b], -0.25 * w_zz[b])
        if w_xy[b] != 0.0:
            flip = (np.int64(1) << bond_i[b]) | (np.int64(1) << bond_j[b])
            cols[:, b + 1] = np.searchsorted(states, states ^ flip)
            vals[:, b + 1] = 0.5 * w_xy[b]
            present[:, b + 1] = ~same
    cols[:, 0] = rows
    vals[:, 0] = diag
    present[:, 0] = True
    # left-pack the present entries of each row, preserving bond order
    order = np.argsort(~present, axis=1, kind="stable")
    cols = np.take_along_axis(cols, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)
    counts = present.sum(axis=1)
    return cols, vals, counts


def _csr(indptr, indices, data):
    n = indptr.size - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def _csr_matvec_np(indptr, indices, data, x):
    return _csr(indptr, indices, data) @ x


def _csr_matmat_np(indptr, indices, data, x):
    return np.asarray(_csr(indptr, indices, data) @ x)


def _cheb_step_np(indptr, indices, data, alpha, beta, cur, prev, coeff, acc):
    nxt = 2.0 * (alpha * (_csr(indptr, indices, data) @ cur) - beta * cur) - prev
    acc += coeff * nxt
    return nxt


if USE_NUMBA:
    sector_states = _sector_states_nb
    bond_rows = _bond_rows_nb
    csr_matvec = _csr_matvec_nb
    csr_matmat = _csr_matmat_nb
    cheb_step = _cheb_step_nb
else:
    sector_states = _sector_states_np
    bond_rows = _bond_rows_np
    csr_matvec = _csr_matvec_np
    csr_matmat = _csr_matmat_np
    cheb_step = _cheb_step_np


def compress_rows(cols, vals, counts):
    """Turn the padded per-row tables from ``bond_rows`` into sorted CSR arrays."""
    dim = counts.size
    indptr = np.zeros(dim + 1, np.int64)
    np.cumsum(counts, out=indptr[1:])
    mask = np.arange(cols.shape[1])[None, :] < counts[:, None]
    rows = np.repeat(np.arange(dim), counts)
    c = cols[mask]
    v = vals[mask]
    order = np.lexsort((c, rows))
    return indptr, c[order], v[order]
