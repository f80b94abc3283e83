# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled membership sweep over the edges of a priority graph."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor

cnp.import_array()

cdef enum:
    ELLIPSE = 0
    STRIP = 1
    GRID = 2


cdef inline bint _inside(long kind, const double[:] p, const double[:] table, long off,
                         double ya, double v, double margin) nogil:
    cdef double dv, disc, w, idx
    if kind == ELLIPSE:
        if v <= p[6]:
            return False
        if v < p[7]:
            dv = v - p[1]
            disc = p[3] * p[3] * dv * dv - p[2] * (p[4] * dv * dv - p[5])
            if disc < 0.0:
                disc = 0.0
            w = p[0] + (-p[3] * dv + sqrt(disc)) / p[2]
        else:
            w = p[8]
        return ya < w + margin
    if kind == STRIP:
        return ya < v + p[0] + margin
    idx = floor((v - p[0]) / p[1])
    if idx < 0.0:
        return False
    if idx > p[2] - 1.0:
        idx = p[2] - 1.0
    return ya < table[off + <long>idx] + margin


def first_hits(const double[:, :] ahead_pos, const double[:, :] behind_pos,
               const long[:] src, const long[:] dst, const long[:] kind,
               const double[:, :] params, const double[:] table, const long[:] table_off,
               double margin=0.0, bint skip_blocked=False):
    cdef Py_ssize_t E = src.shape[0]
    cdef Py_ssize_t K = ahead_pos.shape[1]
    cdef Py_ssize_t n = behind_pos.shape[0]
    cdef Py_ssize_t e, k
    cdef long a, b
    out_arr = np.full(E, -1, dtype=np.int64)
    cdef long[:] out = out_arr
    blocked_arr = np.zeros(max(n, 1), dtype=np.uint8)
    cdef unsigned char[:] blocked = blocked_arr
    with nogil:
        for e in range(E):
            a = src[e]
            b = dst[e]
            if skip_blocked and blocked[b]:
                out[e] = -2
                continue
            for k in range(K):
                # margin grows the region along both axes (W is nondecreasing)
                if _inside(kind[e], params[e], table, table_off[e],
                           ahead_pos[a, k], behind_pos[b, k] + margin, margin):
                    out[e] = k
                    blocked[b] = 1
                    break
    return out_arr
