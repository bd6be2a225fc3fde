"""Compiled per-pixel loops for the two decode passes."""

from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange

THREADS_ENV = "TOFUNWRAP_NUM_THREADS"

# skip the TBB probe; older system TBB builds only produce a warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def configure_threads(n: int | None = None) -> int:
    """Set the numba worker count from ``n`` or ``$TOFUNWRAP_NUM_THREADS``."""
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if not env:
            return numba.get_num_threads()
        n = int(env)
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


@njit(parallel=True, cache=True)
def hypotheses_pass(phi, valid, k, vectors, pair_i, pair_j, inv_var, n_keep, t_out, cost_out, vec_out):
    """Exhaustive J evaluation; keeps the ``n_keep`` lowest-cost vectors.

    ``t_out``/``cost_out``/``vec_out`` have shape ``(H, W, n_keep)`` and are
    filled in place; invalid pixels get NaN / -1.
    """
    H, W, M = phi.shape
    V = vectors.shape[0]
    P = pair_i.shape[0]
    two_pi = 2.0 * math.pi
    wsum = 0.0
    for m in range(M):
        wsum += 1.0 / (k[m] * k[m])
    pair_order = np.argsort(-inv_var)
    # integer part of each pair constraint for every vector
    D = np.empty((V, P))
    base_t = np.empty(V)
    for v in range(V):
        for p in range(P):
            i = pair_i[p]
            j = pair_j[p]
            D[v, p] = k[i] * vectors[v, i] - k[j] * vectors[v, j]
        acc = 0.0
        for m in range(M):
            acc += two_pi * vectors[v, m] / k[m]
        base_t[v] = acc / wsum
    for y in prange(H):
        c = np.empty(P)
        best_cost = np.empty(n_keep)
        best_t = np.empty(n_keep)
        best_v = np.empty(n_keep, dtype=np.int64)
        for x in range(W):
            if not valid[y, x]:
                for s in range(n_keep):
                    t_out[y, x, s] = np.nan
                    cost_out[y, x, s] = np.nan
                    vec_out[y, x, s] = -1
                continue
            t0 = 0.0
            for m in range(M):
                t0 += phi[y, x, m] / k[m]
            t0 /= wsum
            for p in range(P):
                i = pair_i[p]
                j = pair_j[p]
                c[p] = (k[j] * phi[y, x, j] - k[i] * phi[y, x, i]) / two_pi
            for s in range(n_keep):
                best_cost[s] = np.inf
                best_t[s] = np.inf
                best_v[s] = -1
            last = n_keep - 1
            for v in range(V):
                # pairs visited tightest-first so hopeless vectors exit early
                J = 0.0
                for q in range(P):
                    p = pair_order[q]
                    e = c[p] - D[v, p]
                    J += e * e * inv_var[p]
                    if J > best_cost[last]:
                        break
                if J > best_cost[last]:
                    continue
                t = t0 + base_t[v]
                if J == best_cost[last] and t >= best_t[last]:
                    continue
                s = last
                while s > 0 and (J < best_cost[s - 1] or (J == best_cost[s - 1] and t < best_t[s - 1])):
                    best_cost[s] = best_cost[s - 1]
                    best_t[s] = best_t[s - 1]
                    best_v[s] = best_v[s - 1]
                    s -= 1
                best_cost[s] = J
                best_t[s] = t
                best_v[s] = v
            for s in range(n_keep):
                t_out[y, x, s] = best_t[s]
                cost_out[y, x, s] = best_cost[s]
                vec_out[y, x, s] = best_v[s]


# kernel terms with exponent beyond this are below 4e-18 of their weight
KERNEL_CUTOFF = 40.0


@njit(parallel=True, cache=True, fastmath=True)
def kde_select_pass(t, weight, valid, spatial, r, inv_2h2, p_min, sel_out, conf_out, dens_out):
    """Spatial KDE over neighbor hypotheses and argmax selection.

    ``weight`` holds unwrap likelihood times phase likelihood per
    hypothesis; ``spatial`` is the ``(2r+1, 2r+1)`` Gaussian table.
    """
    H, W, n_hyp = t.shape
    for y in prange(H):
        num = np.empty(n_hyp)
        for x in range(W):
            if not valid[y, x]:
                sel_out[y, x] = -1
                conf_out[y, x] = 0.0
                dens_out[y, x] = 0.0
                continue
            for i in range(n_hyp):
                num[i] = 0.0
            den = 0.0
            y0 = max(0, y - r)
            y1 = min(H - 1, y + r)
            x0 = max(0, x - r)
            x1 = min(W - 1, x + r)
            for yy in range(y0, y1 + 1):
                for xx in range(x0, x1 + 1):
                    if not valid[yy, xx]:
                        continue
                    g = spatial[yy - y + r, xx - x + r]
                    for j in range(n_hyp):
                        w = g * weight[yy, xx, j]
                        if w == 0.0:
                            continue
                        den += w
                        tj = t[yy, xx, j]
                        for i in range(n_hyp):
                            d = t[y, x, i] - tj
                            q = d * d * inv_2h2
                            if q < KERNEL_CUTOFF:
                                num[i] += w * math.exp(-q)
            best = 0
            for i in range(1, n_hyp):
                if num[i] > num[best]:
                    best = i
            sel_out[y, x] = best
            dens_out[y, x] = num[best] / den if den > 0.0 else 0.0
            conf_out[y, x] = num[best] / max(p_min, den)
