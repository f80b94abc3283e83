"""Pure-numpy fallback for the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same semantics.
"""

import numpy as np

ELLIPSE, STRIP, GRID = 0, 1, 2


def _w(kind, params, table, table_off, v):
    """``W`` for a batch of edges of one kind; ``v`` has shape (E, K)."""
    if kind == ELLIPSE:
        cu, cv, A, B, C, k, v_lo, v_star, u_sup = (params[:, c:c + 1] for c in range(9))
        dv = v - cv
        disc = np.maximum(B * B * dv * dv - A * (C * dv * dv - k), 0.0)
        w = np.where(v < v_star, cu + (-B * dv + np.sqrt(disc)) / A, u_sup)
        return np.where(v > v_lo, w, np.nan)
    if kind == STRIP:
        return v + params[:, 0:1]
    v0, cell, n = params[:, 0:1], params[:, 1:2], params[:, 2:3]
    idx = np.minimum(np.floor((v - v0) / cell), n - 1)
    ok = idx >= 0
    flat = np.where(ok, idx, 0).astype(np.int64) + table_off[:, None]
    return np.where(ok, table[flat], np.nan)


def first_hits(ahead_pos, behind_pos, src, dst, kind, params, table, table_off,
               margin=0.0, skip_blocked=False):
    """First sample index at which each edge's shifted region is entered, else -1.

    Edge ``e`` compares ``ahead_pos[src[e], k]`` against ``W(behind_pos[dst[e], k])``;
    ``margin`` enlarges the region by that much along both coordinates.
    With ``skip_blocked`` an edge whose ``dst`` is already hit by an earlier edge may be
    reported as -2 (not evaluated); the compiled kernel does skip, this one never needs to.
    """
    E = len(src)
    out = np.full(E, -1, dtype=np.int64)
    if E == 0:
        return out
    for kd in (ELLIPSE, STRIP, GRID):
        sel = np.nonzero(kind == kd)[0]
        if len(sel) == 0:
            continue
        ya = ahead_pos[src[sel]]
        yb = behind_pos[dst[sel]] + margin
        w = _w(kd, params[sel], table, table_off[sel], yb)
        with np.errstate(invalid="ignore"):
            hit = ya < w + margin
        any_hit = hit.any(axis=1)
        out[sel] = np.where(any_hit, np.argmax(hit, axis=1), -1)
    return out
