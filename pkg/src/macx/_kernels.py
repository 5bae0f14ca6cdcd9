"""Numba kernels shared by the region and exponent code.

Conventions: an input joint is flattened to ``p[m]`` with ``m = x*ny + y``; a
test channel to ``v[m, nz]``. Rates and informations are in bits.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)
INV_LN2 = 1.0 / LN2
TINY = 1e-300


@njit(cache=True)
def _xlogx(a):
    return a * math.log(a) if a > 0.0 else 0.0


@njit(cache=True)
def infos(p, v, nx, ny):
    """(I(X;Z|Y), I(Y;Z|X), I(XY;Z)) in bits for joint p and channel v."""
    nz = v.shape[1]
    hcond = 0.0
    for i in range(nx * ny):
        if p[i] > 0.0:
            h = 0.0
            for z in range(nz):
                h -= _xlogx(v[i, z])
            hcond += p[i] * h
    # H(Z)
    hz = 0.0
    for z in range(nz):
        s = 0.0
        for i in range(nx * ny):
            s += p[i] * v[i, z]
        hz -= _xlogx(s)
    # sum_y p(y) H(Z|Y=y)
    hy = 0.0
    for y in range(ny):
        py = 0.0
        for x in range(nx):
            py += p[x * ny + y]
        if py <= 0.0:
            continue
        h = 0.0
        for z in range(nz):
            s = 0.0
            for x in range(nx):
                s += p[x * ny + y] * v[x * ny + y, z]
            h -= _xlogx(s / py)
        hy += py * h
    hx = 0.0
    for x in range(nx):
        px = 0.0
        for y in range(ny):
            px += p[x * ny + y]
        if px <= 0.0:
            continue
        h = 0.0
        for z in range(nz):
            s = 0.0
            for y in range(ny):
                s += p[x * ny + y] * v[x * ny + y, z]
            h -= _xlogx(s / px)
        hx += px * h
    out = np.empty(3)
    out[0] = max(0.0, (hy - hcond) * INV_LN2)
    out[1] = max(0.0, (hx - hcond) * INV_LN2)
    out[2] = max(0.0, (hz - hcond) * INV_LN2)
    return out


@njit(cache=True)
def row_divergences(v, w):
    """D(v_i || w_i) per row in bits, +inf on support violation."""
    m, nz = v.shape
    out = np.zeros(m)
    for i in range(m):
        d = 0.0
        for z in range(nz):
            a = v[i, z]
            if a > 0.0:
                if w[i, z] <= 0.0:
                    d = np.inf
                    break
                d += a * math.log(a / w[i, z])
        out[i] = max(0.0, d * INV_LN2) if d < np.inf else np.inf
    return out


@njit(cache=True)
def cond_divergence(p, v, w):
    d = row_divergences(v, w)
    s = 0.0
    for i in range(p.shape[0]):
        if p[i] > 0.0:
            s += p[i] * d[i]
    return s


@njit(cache=True)
def info_gradients(p, v, nx, ny, lam, out):
    """Accumulate sum_k lam[k] * dI_k/dv into ``out`` (same shape as v)."""
    nz = v.shape[1]
    pz = np.zeros(nz)
    for i in range(nx * ny):
        for z in range(nz):
            pz[z] += p[i] * v[i, z]
    qy = np.zeros((ny, nz))
    for y in range(ny):
        py = 0.0
        for x in range(nx):
            py += p[x * ny + y]
        if py > 0.0:
            for z in range(nz):
                s = 0.0
                for x in range(nx):
                    s += p[x * ny + y] * v[x * ny + y, z]
                qy[y, z] = s / py
    sx = np.zeros((nx, nz))
    for x in range(nx):
        px = 0.0
        for y in range(ny):
            px += p[x * ny + y]
        if px > 0.0:
            for z in range(nz):
                s = 0.0
                for y in range(ny):
                    s += p[x * ny + y] * v[x * ny + y, z]
                sx[x, z] = s / px
    for x in range(nx):
        for y in range(ny):
            i = x * ny + y
            if p[i] <= 0.0:
                continue
            for z in range(nz):
                lv = math.log(max(v[i, z], TINY))
                g = lam[0] * (lv - math.log(max(qy[y, z], TINY)))
                g += lam[1] * (lv - math.log(max(sx[x, z], TINY)))
                g += lam[2] * (lv - math.log(max(pz[z], TINY)))
                out[i, z] += p[i] * g * INV_LN2


@njit(cache=True)
def divergence_gradient(p, v, w, out):
    m, nz = v.shape
    for i in range(m):
        for z in range(nz):
            if p[i] > 0.0 and w[i, z] > 0.0:
                out[i, z] = p[i] * (math.log(max(v[i, z], TINY) / w[i, z]) + 1.0) * INV_LN2
            else:
                out[i, z] = 0.0


# ---------------------------------------------------------------------------
# product components and the time-sharing linear program


@njit(cache=True)
def component_joints(alphas, betas):
    """All products alpha (x) beta, flattened; shape (na*nb, nx*ny)."""
    na, nx = alphas.shape
    nb, ny = betas.shape
    out = np.empty((na * nb, nx * ny))
    for a in range(na):
        for b in range(nb):
            j = a * nb + b
            for x in range(nx):
                for y in range(ny):
                    out[j, x * ny + y] = alphas[a, x] * betas[b, y]
    return out


@njit(cache=True)
def component_infos(comps, v, nx, ny):
    """Informations of every product component; point masses give exact zeros."""
    g = comps.shape[0]
    m, nz = v.shape
    hrow = np.empty(m)
    for i in range(m):
        h = 0.0
        for z in range(nz):
            h -= _xlogx(v[i, z])
        hrow[i] = h
    out = np.empty((g, 3))
    pz = np.empty(nz)
    for j in range(g):
        c = comps[j]
        mx = 0.0
        hcond = 0.0
        for i in range(m):
            mx = max(mx, c[i])
            hcond += c[i] * hrow[i]
        if mx >= 1.0:
            out[j, 0] = 0.0
            out[j, 1] = 0.0
            out[j, 2] = 0.0
            continue
        hz = 0.0
        for z in range(nz):
            s = 0.0
            for i in range(m):
                s += c[i] * v[i, z]
            hz -= _xlogx(s)
        hy = 0.0
        for y in range(ny):
            py = 0.0
            for x in range(nx):
                py += c[x * ny + y]
            if py <= 0.0:
                continue
            for z in range(nz):
                s = 0.0
                for x in range(nx):
                    s += c[x * ny + y] * v[x * ny + y, z]
                hy -= _xlogx(s) - s * math.log(py)
        hx = 0.0
        for x in range(nx):
            px = 0.0
            for y in range(ny):
                px += c[x * ny + y]
            if px <= 0.0:
                continue
            for z in range(nz):
                s = 0.0
                for y in range(ny):
                    s += c[x * ny + y] * v[x * ny + y, z]
                hx -= _xlogx(s) - s * math.log(px)
        out[j, 0] = max(0.0, (hy - hcond) * INV_LN2)
        out[j, 1] = max(0.0, (hx - hcond) * INV_LN2)
        out[j, 2] = max(0.0, (hz - hcond) * INV_LN2)
    return out


@njit(cache=True)
def _column(j, comps, f, m, col):
    g = comps.shape[0]
    col[:] = 0.0
    if j < g:
        for i in range(m):
            col[i] = comps[j, i]
        for k in range(3):
            col[m + k] = f[j, k]
    elif j == g:
        for k in range(3):
            col[m + k] = -1.0
    else:
        col[m + (j - g - 1)] = -1.0


@njit(cache=True)
def timeshare_lp(comps, f, p, rho, corners, free_marginal, max_iter):
    """Maximize the worst pentagon margin over mixtures of components.

    Solves  max t  s.t.  sum_j mu_j comps_j = p,  sum_j mu_j f_jk >= rho_k + t,
    mu >= 0.  With ``free_marginal`` the marginal rows collapse to sum mu = 1.
    Returns (t, mu, eta, lam, status) where (eta, lam) are optimal duals:
    eta . comps_j >= lam . f_j for every j, lam in the simplex, t = eta.p - lam.rho.
    status 0 optimal, 1 iteration cap.
    """
    g, mfull = comps.shape
    if free_marginal:
        cm = np.ones((g, 1))
        pp = np.ones(1)
        m = 1
    else:
        cm = comps
        pp = p
        m = mfull
    nrow = m + 3
    ncol = g + 4
    rmax = max(rho[0], max(rho[1], rho[2]))
    kstar = 0
    for k in range(3):
        if rho[k] == rmax:
            kstar = k
            break
    b = np.empty(nrow)
    b[:m] = pp
    for k in range(3):
        b[m + k] = rho[k] - rmax
    basis = np.empty(nrow, dtype=np.int64)
    if free_marginal:
        basis[0] = corners[0]
    else:
        for i in range(m):
            basis[i] = corners[i]
    basis[m + kstar] = g
    for k in range(3):
        if k != kstar:
            basis[m + k] = g + 1 + k
    col = np.empty(nrow)
    bmat = np.empty((nrow, nrow))
    for r in range(nrow):
        _column(basis[r], cm, f, m, col)
        bmat[:, r] = col
    binv = np.linalg.inv(bmat)
    xb = binv @ b
    cb = np.zeros(nrow)
    status = 1
    stall = 0
    last_obj = -np.inf
    for it in range(max_iter):
        if it % 40 == 39:
            for r in range(nrow):
                _column(basis[r], cm, f, m, col)
                bmat[:, r] = col
            binv = np.linalg.inv(bmat)
            xb = binv @ b
            for r in range(nrow):
                if xb[r] < 0.0 and xb[r] > -1e-11:
                    xb[r] = 0.0
        for r in range(nrow):
            cb[r] = 1.0 if basis[r] == g else 0.0
        y = cb @ binv
        obj = 0.0
        for r in range(nrow):
            if basis[r] == g:
                obj = xb[r]
        if obj > last_obj + 1e-13:
            last_obj = obj
            stall = 0
        else:
            stall += 1
        bland = stall > 30
        enter = -1
        best = 1e-11
        for j in range(ncol):
            # reduced cost c_j - y.a_j
            if j < g:
                s = 0.0
                for i in range(m):
                    s += y[i] * cm[j, i]
                for k in range(3):
                    s += y[m + k] * f[j, k]
                rc = -s
            elif j == g:
                rc = 1.0 + y[m] + y[m + 1] + y[m + 2]
            else:
                rc = y[m + (j - g - 1)]
            if rc > best:
                enter = j
                if bland:
                    break
                best = rc
        if enter < 0:
            status = 0
            break
        _column(enter, cm, f, m, col)
        d = binv @ col
        leave = -1
        ratio = np.inf
        for r in range(nrow):
            if d[r] > 1e-12:
                q = max(xb[r], 0.0) / d[r]
                if q < ratio - 1e-15 or (abs(q - ratio) <= 1e-15 and leave >= 0 and basis[r] < basis[leave]):
                    ratio = q
                    leave = r
        if leave < 0:
            status = 2
            break
        piv = d[leave]
        xb -= ratio * d
        xb[leave] = ratio
        rowp = binv[leave] / piv
        for r in range(nrow):
            if r != leave:
                binv[r] -= d[r] * rowp
        binv[leave] = rowp
        basis[leave] = enter
    for r in range(nrow):
        cb[r] = 1.0 if basis[r] == g else 0.0
    y = cb @ binv
    mu = np.zeros(g)
    t = 0.0
    for r in range(nrow):
        if basis[r] < g:
            mu[basis[r]] = max(xb[r], 0.0)
        elif basis[r] == g:
            t = xb[r]
    eta = y[:m].copy()
    lam = np.empty(3)
    for k in range(3):
        lam[k] = max(-y[m + k], 0.0)
    return t - rmax, mu, eta, lam, status


@njit(cache=True)
def slack_gradient(comps, mu, lam, v, nx, ny):
    """Envelope gradient of the LP optimum with respect to v."""
    out = np.zeros(v.shape)
    for j in range(comps.shape[0]):
        if mu[j] > 0.0:
            lj = lam * mu[j]
            info_gradients(comps[j], v, nx, ny, lj, out)
    return out


@njit(cache=True)
def mixture_slack(comps, mu, v, nx, ny, rho):
    """Worst margin of a fixed mixture under channel v (a lower bound on the LP)."""
    acc = np.zeros(3)
    for j in range(comps.shape[0]):
        if mu[j] > 0.0:
            acc += mu[j] * infos(comps[j], v, nx, ny)
    return min(acc[0] - rho[0], min(acc[1] - rho[1], acc[2] - rho[2]))


# ---------------------------------------------------------------------------
# alternating minimization for  min D(V||W|P) + s * I_k


@njit(cache=True)
def _group(k, x, y, ny):
    if k == 0:
        return y
    if k == 1:
        return x
    return 0


@njit(cache=True)
def ba_tilted(p, w, nx, ny, k, s, v0, iters, tol):
    """Minimize D(V||W|P) + s*I_k(V) by alternating over V and the group means."""
    m, nz = w.shape
    ng = ny if k == 0 else (nx if k == 1 else 1)
    v = v0.copy()
    q = np.zeros((ng, nz))
    pg = np.zeros(ng)
    a = 1.0 / (1.0 + s)
    bexp = s / (1.0 + s)
    for x in range(nx):
        for y in range(ny):
            pg[_group(k, x, y, ny)] += p[x * ny + y]
    for it in range(iters):
        q[:] = 0.0
        for x in range(nx):
            for y in range(ny):
                i = x * ny + y
                gi = _group(k, x, y, ny)
                for z in range(nz):
                    q[gi, z] += p[i] * v[i, z]
        for gi in range(ng):
            if pg[gi] > 0.0:
                q[gi] /= pg[gi]
        change = 0.0
        for x in range(nx):
            for y in range(ny):
                i = x * ny + y
                if p[i] <= 0.0:
                    continue
                gi = _group(k, x, y, ny)
                tot = 0.0
                for z in range(nz):
                    if w[i, z] > 0.0 and q[gi, z] > 0.0:
                        val = math.exp(a * math.log(w[i, z]) + bexp * math.log(q[gi, z]))
                    else:
                        val = 0.0
                    v[i, z] = val if val > 0.0 else 0.0
                    tot += v[i, z]
                if tot <= 0.0:
                    for z in range(nz):
                        v[i, z] = w[i, z]
                    tot = 1.0
                for z in range(nz):
                    nv = v[i, z] / tot
                    change = max(change, abs(nv - v0[i, z]))
                    v[i, z] = nv
                    v0[i, z] = nv
        if change < tol:
            break
    return v


@njit(cache=True)
def constrained_min(p, w, nx, ny, k, rho, iters, tol):
    """min D(V||W|P) subject to I_k(V) <= rho, by bisection on the multiplier.

    Returns (value, v, feasible). ``feasible`` is False when no V meets the
    constraint (the value is then +inf).
    """
    m, nz = w.shape
    v = w.copy()
    ik = infos(p, v, nx, ny)[k]
    if ik <= rho:
        return 0.0, v, True
    # expand s until the constraint is met
    lo = 0.0
    hi = 1.0
    vhi = ba_tilted(p, w, nx, ny, k, hi, w.copy(), iters, tol)
    while infos(p, vhi, nx, ny)[k] > rho:
        lo = hi
        hi *= 4.0
        if hi > 1e7:
            return np.inf, vhi, False
        vhi = ba_tilted(p, w, nx, ny, k, hi, vhi.copy(), iters, tol)
    vlo = w.copy()
    for it in range(60):
        mid = 0.5 * (lo + hi)
        vm = ba_tilted(p, w, nx, ny, k, mid, vhi.copy(), iters, tol)
        if infos(p, vm, nx, ny)[k] > rho:
            lo = mid
            vlo = vm
        else:
            hi = mid
            vhi = vm
        if hi - lo < 1e-10 * max(1.0, hi):
            break
    return cond_divergence(p, vhi, w), vhi, True


@njit(cache=True)
def common_support_value(p, w, nx, ny, k):
    """min D(V||W|P) subject to I_k(V) = 0 (closed form); +inf if impossible."""
    m, nz = w.shape
    ng = ny if k == 0 else (nx if k == 1 else 1)
    total = 0.0
    v = w.copy()
    for gi in range(ng):
        pg = 0.0
        for x in range(nx):
            for y in range(ny):
                if _group(k, x, y, ny) == gi:
                    pg += p[x * ny + y]
        if pg <= 0.0:
            continue
        q = np.zeros(nz)
        for z in range(nz):
            lq = 0.0
            ok = True
            for x in range(nx):
                for y in range(ny):
                    i = x * ny + y
                    if _group(k, x, y, ny) == gi and p[i] > 0.0:
                        if w[i, z] <= 0.0:
                            ok = False
                        else:
                            lq += p[i] / pg * math.log(w[i, z])
            q[z] = math.exp(lq) if ok else 0.0
        sq = q.sum()
        if sq <= 0.0:
            return np.inf, v
        total += -pg * math.log(sq) * INV_LN2
        for x in range(nx):
            for y in range(ny):
                if _group(k, x, y, ny) == gi and p[x * ny + y] > 0.0:
                    v[x * ny + y] = q / sq
    return max(total, 0.0), v
