"""Pure numpy fallback for :mod:`mfpmp._ckernels`.

Loop order mirrors the compiled kernels exactly (source particle outermost,
then the contracted index), so both backends round identically.
"""

from __future__ import annotations

import numpy as np


def covector_pair_average(psi, G, threads=1):
    n, _, da, db = G.shape
    acc = np.zeros((n, db))
    for j in range(n):
        for a in range(da):
            acc += psi[j, a] * G[j, :, a, :]
    return acc * (1.0 / n)


def vector_pair_average(G, y, threads=1):
    n, _, da, db = G.shape
    acc = np.zeros((n, da))
    for j in range(n):
        for b in range(db):
            acc += G[:, j, :, b] * y[j, b]
    return acc * (1.0 / n)


def pair_average(g, threads=1):
    n = g.shape[0]
    acc = np.zeros(g.shape[1:])
    for j in range(n):
        acc += g[j]
    return acc * (1.0 / n)


def linear_assignment(cost):
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            better = free[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=np.intp)
    perm[p[1:] - 1] = np.arange(n)
    return perm
