# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stage-partition DP sweep.

Semantics and float expression shapes must match dp_py.dp_sweep exactly;
see that module for the state encoding.  The compiled version walks the
pre-built CSR index of feasible spans instead of masking dense tables.
"""

from libc.math cimport ceil, INFINITY

import numpy as np


def dp_sweep(double t_max,
             double[:, :, ::1] t_tab,
             double[:, :, ::1] mp_tab,
             double[:, :, ::1] ma_tab,
             double[::1] opt_cap,
             int[::1] opt_mesh,
             int[::1] opt_devs,
             int[::1] opt_off,
             double[:, ::1] cb_same,
             double[:, ::1] cb_next,
             int[::1] g_mesh,
             int[::1] g_avail,
             int s_max,
             int[::1] span_off,
             int[::1] span_items):
    cdef int L = t_tab.shape[1] - 2
    cdef int G = g_mesh.shape[0] - 1
    cdef int stride = L + 2

    F_arr = np.full((s_max + 1, L + 2, G + 1), np.inf)
    N_arr = np.zeros((s_max + 1, L + 2, G + 1))
    bpi_arr = np.full((s_max + 1, L + 2, G + 1), -1, dtype=np.int32)
    bpo_arr = np.full((s_max + 1, L + 2, G + 1), -1, dtype=np.int32)
    cdef double[:, :, ::1] F = F_arr
    cdef double[:, :, ::1] N = N_arr
    cdef int[:, :, ::1] bp_i = bpi_arr
    cdef int[:, :, ::1] bp_o = bpo_arr
    F[0, L + 1, 0] = 0.0

    cdef int s, k, g, r, avail, o, devs, g2, r2, idx, i
    cdef int best_i, best_o
    cdef double best, best_n, fc, c, tt, kk, cand
    cdef bint same_mesh

    with nogil:
        for s in range(1, s_max + 1):
            for k in range(L, 0, -1):
                for g in range(1, G + 1):
                    r = g_mesh[g]
                    avail = g_avail[g]
                    best = INFINITY
                    best_n = 0.0
                    best_i = -1
                    best_o = -1
                    for o in range(opt_off[r], opt_off[r + 1]):
                        devs = opt_devs[o]
                        if devs > avail:
                            continue
                        g2 = g - devs
                        if g2 >= 1:
                            same_mesh = g_mesh[g2] == r
                        else:
                            same_mesh = False
                        for idx in range(span_off[o * stride + k],
                                         span_off[o * stride + k + 1]):
                            i = span_items[idx]
                            fc = F[s - 1, i + 1, g2]
                            if fc == INFINITY:
                                continue
                            if same_mesh:
                                c = cb_same[r, i]
                            else:
                                c = cb_next[r, i]
                            if c > t_max:
                                continue
                            tt = t_tab[o, k, i]
                            if tt > t_max:
                                continue
                            kk = ceil(2.0 * c / t_max) + 1.0 + N[s - 1, i + 1, g2]
                            if mp_tab[o, k, i] + kk * ma_tab[o, k, i] > opt_cap[o]:
                                continue
                            cand = tt + (2.0 * c + fc)
                            if cand < best:
                                best = cand
                                best_n = kk
                                best_i = i
                                best_o = o
                    if best_i >= 0:
                        F[s, k, g] = best
                        N[s, k, g] = best_n
                        bp_i[s, k, g] = best_i
                        bp_o[s, k, g] = best_o

    return F_arr, N_arr, bpi_arr, bpo_arr
