"""Exhaustive grid oracle for both exponents.

P ranges over the simplex grid with spacing 1/resolution, each row of V over
the |Z|-simplex grid with the same spacing (restricted to the support of the
matching row of W; rows with P(x,y)=0 are pinned to W). For the sphere-packing
exponent, C_V(P) is the region generated by mixtures of product components
whose marginals lie on the same grid. The search is exact on the grid:
branch and bound only discards points that provably cannot change the max-min.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import _gridsearch as G
from . import _kernels as K
from .channel import Mac, RatePair, SearchOptions, component_grid, region_lp, validate_mac
from .probability import simplex_grid
from .results import ExponentResult

ORACLE_CAP = 4_000_000
ORACLE_MAX_LP = 200_000


class OracleGuardError(ValueError):
    """The requested oracle run exceeds its size guard."""


def _row_options(w_flat: np.ndarray, resolution: int):
    m, nz = w_flat.shape
    zgrid = simplex_grid(nz, resolution)
    tables = []
    for i in range(m):
        ok = np.all((zgrid == 0) | (w_flat[i] > 0), axis=1)
        cand = zgrid[ok]
        d = K.row_divergences(np.ascontiguousarray(cand), np.repeat(w_flat[i : i + 1], len(cand), axis=0))
        order = np.lexsort(tuple(cand.T[::-1]) + (d,))
        tables.append((cand[order], d[order]))
    width = max(len(t[0]) for t in tables)
    opts = np.zeros((m, width, nz))
    dvals = np.full((m, width), np.inf)
    nopt = np.zeros(m, dtype=np.int64)
    for i, (c, d) in enumerate(tables):
        opts[i, : len(c)] = c
        dvals[i, : len(c)] = d
        nopt[i] = len(c)
    return opts, dvals, nopt


def _snap(v: np.ndarray, w_flat: np.ndarray, resolution: int) -> np.ndarray:
    """Round each row to the grid, keeping it inside the support of W's row."""
    out = np.empty_like(v)
    for i, row in enumerate(v):
        row = np.where(w_flat[i] > 0, row, 0.0)
        row = row / row.sum()
        c = np.floor(row * resolution)
        frac = row * resolution - c
        short = resolution - int(c.sum())
        for z in np.argsort(-frac, kind="stable"):
            if short == 0:
                break
            if w_flat[i, z] > 0:
                c[z] += 1
                short -= 1
        out[i] = c / resolution
    return out


def _seed_pool(w_flat, nx, ny, rho, resolution):
    pool = [w_flat.copy()]
    coarse = simplex_grid(nx * ny, 4)
    for p in coarse:
        for k in range(3):
            if rho[k] <= 0:
                val, v = K.common_support_value(p, w_flat, nx, ny, k)
            else:
                val, v, ok = K.constrained_min(p, w_flat, nx, ny, k, rho[k], 500, 1e-10)
            if np.isfinite(val):
                pool.append(_snap(v, w_flat, resolution))
    pool = np.unique(np.array(pool), axis=0)
    return np.ascontiguousarray(pool)


def _is_product(p: np.ndarray, nx: int, ny: int) -> bool:
    pm = p.reshape(nx, ny)
    return bool(np.abs(pm - np.outer(pm.sum(1), pm.sum(0))).max() < 1e-12)


def exponent_grid_oracle(w: Mac, r: RatePair, method: str = "haroutunian", resolution: int = 32,
                         search: Optional[SearchOptions] = None) -> ExponentResult:
    """Exact on-grid max over P of min over feasible V of D(V||W|P)."""
    if method not in ("haroutunian", "sphere_packing"):
        raise ValueError(f"oracle method must be haroutunian or sphere_packing, got {method!r}")
    if w.nx * w.ny > 4 or w.nz > 3:
        raise OracleGuardError(
            f"grid oracle needs |X||Y| <= 4 and |Z| <= 3, got {w.nx}x{w.ny}x{w.nz}"
        )
    if resolution < 1:
        raise ValueError("resolution must be positive")
    nx, ny = w.nx, w.ny
    w_flat = np.ascontiguousarray(w.flat)
    rho = r.rho
    sp = method == "sphere_packing"
    grid = component_grid(nx, ny, resolution)
    diag = {"resolution": resolution, "exact_p": 0, "lp_calls": 0, "overflow": False}
    if sp and grid.resolution != resolution:
        raise OracleGuardError("component grid would exceed its budget at this resolution")
    if sp:
        cap_slack = region_lp(w_flat, None, rho, grid).slack
        if cap_slack < -G.FEAS_SLOP:
            p0 = np.full((nx, ny), 1.0 / (nx * ny))
            diag["capacity_slack"] = cap_slack
            return ExponentResult(0.0, p0, w, "grid_oracle", True, diag | {"target": method})
    opts, dvals, nopt = _row_options(w_flat, resolution)
    pgrid = np.ascontiguousarray(simplex_grid(nx * ny, resolution))
    pool = _seed_pool(w_flat, nx, ny, rho, resolution)
    ub, arg = G.pool_bounds(pgrid, pool, w_flat, nx, ny, rho)
    is_prod = np.array([_is_product(p, nx, ny) for p in pgrid])
    # stable: larger bound first, grid order among ties
    order = np.lexsort((np.arange(len(pgrid)), -ub))
    if sp:
        # product inputs first: there both exponents coincide and no LP is needed
        segments = [order[is_prod[order]], order[~is_prod[order]]]
    else:
        segments = [order]
    best_val = -math.inf
    best_p = -1
    best_choice = None
    tiny = 1e-12
    visit = []
    for seg in segments:
        for a in seg:
            visit.append(a)
    for a in visit:
        if ub[a] <= best_val + tiny:
            continue
        p = pgrid[a]
        bound = ub[a] + tiny if np.isfinite(ub[a]) else np.inf
        stop = best_val + tiny if np.isfinite(best_val) else -1.0
        # Haroutunian value at P: exact answer for that method, and an upper
        # bound for the sphere-packing one (its feasible set is larger)
        hval, hch, found, nodes = G.har_exact(p, w_flat, opts, dvals, nopt, nx, ny, rho, bound, stop)
        if found and hval <= best_val + tiny:
            continue
        diag["exact_p"] += 1
        if found:
            val = hval
            vsel = np.empty_like(w_flat)
            G._assemble(p, w_flat, opts, hch, vsel)
        elif arg[a] >= 0:
            val = ub[a]
            vsel = pool[arg[a]].copy()
        else:
            val = math.inf
            vsel = w_flat.copy()
        if sp and not is_prod[a]:
            sbound = val + tiny if np.isfinite(val) else np.inf
            sval, sch, sfound, over, calls = G.sp_exact(p, w_flat, opts, dvals, nopt, nx, ny, rho, sbound,
                                                        ORACLE_CAP, grid.comps, grid.corners, best_val,
                                                        ORACLE_MAX_LP)
            diag["lp_calls"] += calls
            diag["overflow"] |= bool(over)
            if sfound and sval < val:
                val = sval
                G._assemble(p, w_flat, opts, sch, vsel)
        if val > best_val + tiny:
            best_val = val
            best_p = a
            best_choice = vsel
    p = pgrid[best_p].reshape(nx, ny)
    v = best_choice.copy()
    v[pgrid[best_p] == 0] = w_flat[pgrid[best_p] == 0]
    wv = validate_mac(v.reshape(nx, ny, w.nz))
    diag["target"] = method
    return ExponentResult(float(max(best_val, 0.0)), p, wv, "grid_oracle", not diag["overflow"], diag)
