"""Compiled loops for the generalized-coherence sums.

These mirror :func:`csdesign.linalg.batched_residuals` term by term; the
vectorized numpy path stays the reference used by gradients and tests.
"""

import numpy as np
from numba import njit

SINGULAR_RTOL = 1e-10
ZERO_COLUMN_TOL = 1e-12


@njit(cache=True)
def _pinv_quad(h, g):
    vals, vecs = np.linalg.eigh(h)
    top = np.max(np.abs(vals))
    out = 0.0
    for a in range(vals.shape[0]):
        if top > 0.0 and abs(vals[a]) > SINGULAR_RTOL * top:
            proj = 0.0
            for b in range(vals.shape[0]):
                proj += vecs[b, a] * g[b]
            out += proj * proj / vals[a]
    return out


@njit(cache=True)
def order1_sum(G, W, weighted):
    d = G.shape[0]
    total = 0.0
    for i in range(d):
        gii = G[i, i]
        for j in range(i + 1, d):
            hjj = G[j, j]
            if hjj >= ZERO_COLUMN_TOL:
                res = gii - G[j, i] * G[j, i] / hjj
            else:
                res = gii
            if res < 0.0:
                res = 0.0
            if weighted:
                res = np.sqrt(W[i] * W[j]) * res
            total += res
    return total


@njit(cache=True)
def order2_sum(G, W, weighted):
    d = G.shape[0]
    total = 0.0
    third = 1.0 / 3.0
    h = np.empty((2, 2))
    gv = np.empty(2)
    for i in range(d):
        gii = G[i, i]
        for j in range(i + 1, d):
            h00 = G[j, j]
            g0 = G[j, i]
            for k in range(j + 1, d):
                h01 = G[j, k]
                h11 = G[k, k]
                g1 = G[k, i]
                det = h00 * h11 - h01 * h01
                scale = 0.5 * (h00 + h11)
                if abs(det) <= SINGULAR_RTOL * scale * scale:
                    h[0, 0] = h00
                    h[0, 1] = h01
                    h[1, 0] = h01
                    h[1, 1] = h11
                    gv[0] = g0
                    gv[1] = g1
                    quad = _pinv_quad(h, gv)
                else:
                    quad = (h11 * g0 * g0 - 2.0 * h01 * g0 * g1 + h00 * g1 * g1) / det
                res = gii - quad
                if res < 0.0:
                    res = 0.0
                if weighted:
                    res = (W[i] * W[j] * W[k]) ** third * res
                total += res
    return total


@njit(cache=True)
def order3_sum(G, W, weighted):
    d = G.shape[0]
    total = 0.0
    h = np.empty((3, 3))
    gv = np.empty(3)
    for i in range(d):
        gii = G[i, i]
        for j in range(i + 1, d):
            h00 = G[j, j]
            g0 = G[j, i]
            for k in range(j + 1, d):
                h01 = G[j, k]
                h11 = G[k, k]
                g1 = G[k, i]
                for l in range(k + 1, d):
                    h02 = G[j, l]
                    h12 = G[k, l]
                    h22 = G[l, l]
                    g2 = G[l, i]
                    c00 = h11 * h22 - h12 * h12
                    c11 = h00 * h22 - h02 * h02
                    c22 = h00 * h11 - h01 * h01
                    c01 = h02 * h12 - h01 * h22
                    c02 = h01 * h12 - h02 * h11
                    c12 = h01 * h02 - h00 * h12
                    det = h00 * c00 + h01 * c01 + h02 * c02
                    scale = (h00 + h11 + h22) / 3.0
                    if abs(det) <= SINGULAR_RTOL * scale * scale * scale:
                        h[0, 0] = h00
                        h[0, 1] = h01
                        h[0, 2] = h02
                        h[1, 0] = h01
                        h[1, 1] = h11
                        h[1, 2] = h12
                        h[2, 0] = h02
                        h[2, 1] = h12
                        h[2, 2] = h22
                        gv[0] = g0
                        gv[1] = g1
                        gv[2] = g2
                        quad = _pinv_quad(h, gv)
                    else:
                        quad = (c00 * g0 * g0 + c11 * g1 * g1 + c22 * g2 * g2
                                + 2.0 * (c01 * g0 * g1 + c02 * g0 * g2 + c12 * g1 * g2)) / det
                    res = gii - quad
                    if res < 0.0:
                        res = 0.0
                    if weighted:
                        res = (W[i] * W[j] * W[k] * W[l]) ** 0.25 * res
                    total += res
    return total


ORDER_SUMS = {1: order1_sum, 2: order2_sum, 3: order3_sum}


@njit(cache=True)
def project_pinned(v, t, radius, steps):
    """Project ``v`` onto ``{z : z_t = 1, |z_k| <= 1, sum_{k != t} |z_k| <= radius}``.

    The free part is ``sign(v) * clip(|v| - tau, 0, 1)`` with the shrinkage
    threshold ``tau >= 0`` found by bisection.
    """
    d = v.shape[0]
    total = 0.0
    hi = 0.0
    for k in range(d):
        if k != t:
            a = abs(v[k])
            total += min(a, 1.0)
            hi = max(hi, a)
    tau = 0.0
    if total > radius:
        lo = 0.0
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            s = 0.0
            for k in range(d):
                if k != t:
                    s += min(max(abs(v[k]) - mid, 0.0), 1.0)
            if s > radius:
                lo = mid
            else:
                hi = mid
        tau = hi
    z = np.empty(d)
    for k in range(d):
        a = min(max(abs(v[k]) - tau, 0.0), 1.0)
        z[k] = a if v[k] >= 0.0 else -a
    z[t] = 1.0
    return z


@njit(cache=True)
def pinned_descent(g, t, radius, iters, steps):
    """Smallest ``||g z||`` over FISTA iterates (adaptive restart) for
    ``min ||g z||^2 / 2`` over the pinned feasible set of :func:`project_pinned`."""
    d = g.shape[0]
    q = g.T @ g
    lip = np.linalg.norm(g, 2) ** 2
    z = np.zeros(d)
    z[t] = 1.0
    y = z.copy()
    mom = 1.0
    best = np.linalg.norm(g @ z)
    for _ in range(iters):
        z_next = project_pinned(y - (q @ y) / lip, t, radius, steps)
        # restart momentum when the step points uphill
        if np.dot(y - z_next, z_next - z) > 0.0:
            mom = 1.0
            y = z_next
        else:
            mom_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * mom * mom))
            y = z_next + ((mom - 1.0) / mom_next) * (z_next - z)
            mom = mom_next
        z = z_next
        best = min(best, np.linalg.norm(g @ z))
    return best
