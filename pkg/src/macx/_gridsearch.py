"""Branch-and-bound kernels for the exhaustive grid oracle."""
from __future__ import annotations

import numpy as np
from numba import njit

from ._kernels import (
    component_infos,
    infos,
    row_divergences,
    timeshare_lp,
)

FEAS_SLOP = 1e-12


@njit(cache=True)
def har_margin(p, v, nx, ny, rho):
    """min_k (I_k - rho_k); the Haroutunian constraint holds iff this is <= 0."""
    i = infos(p, v, nx, ny)
    return min(i[0] - rho[0], min(i[1] - rho[1], i[2] - rho[2]))


@njit(cache=True)
def pool_bounds(pgrid, pool, w, nx, ny, rho):
    """Upper bound on the Haroutunian inner value at each grid P from a pool of V."""
    npg = pgrid.shape[0]
    npool = pool.shape[0]
    ub = np.full(npg, np.inf)
    arg = np.full(npg, -1, dtype=np.int64)
    dtab = np.empty((npool, w.shape[0]))
    for q in range(npool):
        dtab[q] = row_divergences(pool[q], w)
    for a in range(npg):
        p = pgrid[a]
        for q in range(npool):
            d = 0.0
            for i in range(p.shape[0]):
                if p[i] > 0.0:
                    d += p[i] * dtab[q, i]
            if d < ub[a] and har_margin(p, pool[q], nx, ny, rho) <= FEAS_SLOP:
                ub[a] = d
                arg[a] = q
    return ub, arg


@njit(cache=True)
def _lex_less(a, b):
    fa = a.ravel()
    fb = b.ravel()
    for i in range(fa.shape[0]):
        if fa[i] < fb[i] - 1e-15:
            return True
        if fa[i] > fb[i] + 1e-15:
            return False
    return False


@njit(cache=True)
def _assemble(p, w, opts, choice, v):
    for i in range(p.shape[0]):
        if p[i] > 0.0:
            v[i] = opts[i, choice[i]]
        else:
            v[i] = w[i]


@njit(cache=True)
def enumerate_below(p, w, opts, dvals, nopt, bound, cap):
    """All grid V (as option indices) with D(V||W|P) < bound, plus their D.

    Rows are visited by depth-first search over per-row options sorted by
    divergence; a branch is cut once its optimistic completion reaches ``bound``.
    Returns (choices, dsum, count, overflow).
    """
    m = p.shape[0]
    rows = np.empty(m, dtype=np.int64)
    nr = 0
    for i in range(m):
        if p[i] > 0.0:
            rows[nr] = i
            nr += 1
    out = np.zeros((cap, m), dtype=np.int64)
    dsum = np.empty(cap)
    cnt = 0
    overflow = False
    if nr == 0:
        out[0, :] = 0
        dsum[0] = 0.0
        return out, dsum, 1, False
    # optimistic tail: sum of row minima
    tail = np.zeros(nr + 1)
    for l in range(nr - 1, -1, -1):
        i = rows[l]
        tail[l] = tail[l + 1] + p[i] * dvals[i, 0]
    idx = np.zeros(nr, dtype=np.int64)
    part = np.zeros(nr + 1)
    level = 0
    while level >= 0:
        i = rows[level]
        if idx[level] >= nopt[i]:
            idx[level] = 0
            level -= 1
            if level >= 0:
                idx[level] += 1
            continue
        val = part[level] + p[i] * dvals[i, idx[level]]
        if val + tail[level + 1] >= bound:
            # sorted options: no later option at this level can help
            idx[level] = 0
            level -= 1
            if level >= 0:
                idx[level] += 1
            continue
        if level == nr - 1:
            if cnt < cap:
                for l in range(nr):
                    out[cnt, rows[l]] = idx[l]
                dsum[cnt] = val
                cnt += 1
            else:
                overflow = True
                return out, dsum, cnt, overflow
            idx[level] += 1
        else:
            part[level + 1] = val
            level += 1
            idx[level] = 0
    return out, dsum, cnt, overflow


@njit(cache=True)
def har_exact(p, w, opts, dvals, nopt, nx, ny, rho, bound, stop_at):
    """Exact on-grid min of D(V||W|P) over V meeting the Haroutunian constraint.

    Depth-first branch and bound over per-row options sorted by divergence.
    Only V with D < bound are examined. The search stops early once a
    feasible V with D <= stop_at is seen (the caller then only needs to know
    the value is at most stop_at). Ties within 1e-12 go to the
    lexicographically smallest V. Returns (value, choice, found, nodes).
    """
    m, nz = w.shape
    rows = np.empty(m, dtype=np.int64)
    nr = 0
    for i in range(m):
        if p[i] > 0.0:
            rows[nr] = i
            nr += 1
    best = np.inf
    bestc = np.zeros(m, dtype=np.int64)
    found = False
    v = w.copy()
    vb = w.copy()
    if nr == 0:
        if har_margin(p, v, nx, ny, rho) <= FEAS_SLOP:
            return 0.0, bestc, True, 1
        return np.inf, bestc, False, 1
    tail = np.zeros(nr + 1)
    for l in range(nr - 1, -1, -1):
        tail[l] = tail[l + 1] + p[rows[l]] * dvals[rows[l], 0]
    cut = bound
    idx = np.zeros(nr, dtype=np.int64)
    part = np.zeros(nr + 1)
    level = 0
    nodes = 0
    while level >= 0:
        i = rows[level]
        if idx[level] >= nopt[i]:
            idx[level] = 0
            level -= 1
            if level >= 0:
                idx[level] += 1
            continue
        val = part[level] + p[i] * dvals[i, idx[level]]
        if val + tail[level + 1] > cut:
            idx[level] = 0
            level -= 1
            if level >= 0:
                idx[level] += 1
            continue
        nodes += 1
        if level == nr - 1:
            for l in range(nr):
                v[rows[l]] = opts[rows[l], idx[l]]
            if har_margin(p, v, nx, ny, rho) <= FEAS_SLOP:
                take = False
                if not found or val < best - 1e-12:
                    take = True
                elif _lex_less(v, vb):
                    take = True
                if take:
                    if (not found) or val < best:
                        best = val
                    for l in range(nr):
                        bestc[rows[l]] = idx[l]
                    vb[:] = v
                    found = True
                    cut = min(cut, best + 1e-12)
                    if best <= stop_at:
                        return best, bestc, True, nodes
            idx[level] += 1
        else:
            part[level + 1] = val
            level += 1
            idx[level] = 0
    return best, bestc, found, nodes


@njit(cache=True)
def sp_exact(p, w, opts, dvals, nopt, nx, ny, rho, bound, cap, comps, corners, stop_at, max_lp):
    """Exact on-grid min of D(V||W|P) over V with rates outside the grid region.

    Candidates are scanned in increasing divergence. A candidate is accepted
    when it meets the Haroutunian constraint (cheap sufficient test) or when the
    time-sharing LP margin is <= 0. Inside-certificates from earlier LPs are
    reused to skip candidates. The scan stops at the first feasible candidate;
    if that candidate's divergence is <= ``stop_at`` the caller only learns an
    upper bound.  Returns (value, choice, found, overflow, lp_calls).
    """
    m, nz = w.shape
    choices, dsum, cnt, overflow = enumerate_below(p, w, opts, dvals, nopt, bound, cap)
    order = np.argsort(dsum[:cnt], kind="mergesort")
    v = np.empty((m, nz))
    ncache = 12
    cache = np.zeros((ncache, comps.shape[0]))
    csupp = np.zeros((ncache, 16), dtype=np.int64)
    clen = np.zeros(ncache, dtype=np.int64)
    nc = 0
    head = 0
    lp_calls = 0
    for t in range(cnt):
        a = order[t]
        _assemble(p, w, opts, choices[a], v)
        if har_margin(p, v, nx, ny, rho) <= FEAS_SLOP:
            return dsum[a], choices[a].copy(), True, overflow, lp_calls
        inside = False
        for c in range(nc):
            acc = np.zeros(3)
            for s in range(clen[c]):
                j = csupp[c, s]
                acc += cache[c, j] * infos(comps[j], v, nx, ny)
            if min(acc[0] - rho[0], min(acc[1] - rho[1], acc[2] - rho[2])) > FEAS_SLOP:
                inside = True
                break
        if inside:
            continue
        if lp_calls >= max_lp:
            return dsum[a], choices[a].copy(), False, True, lp_calls
        f = component_infos(comps, v, nx, ny)
        slack, mu, eta, lam, status = timeshare_lp(comps, f, p, rho, corners, False, 20000)
        lp_calls += 1
        if slack <= FEAS_SLOP:
            return dsum[a], choices[a].copy(), True, overflow, lp_calls
        # remember this certificate
        cache[head] = mu
        n = 0
        for j in range(mu.shape[0]):
            if mu[j] > 0.0 and n < 16:
                csupp[head, n] = j
                n += 1
        clen[head] = n
        head = (head + 1) % ncache
        nc = min(nc + 1, ncache)
    return np.inf, np.zeros(m, dtype=np.int64), False, overflow, lp_calls
