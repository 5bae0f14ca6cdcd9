"""Haroutunian's exponent and the sphere-packing exponent built on C_V(P).

Both are max over input joints P of an inner minimum of D(V||W|P):

* Haroutunian: V ranges over channels with I_V(X;Z|Y) <= r1, or
  I_V(Y;Z|X) <= r2, or I_V(XY;Z) <= r1+r2 (no time sharing).
* sphere packing: V ranges over channels with (r1, r2) outside C_V(P), the
  union of pentagons over time-sharing decompositions of P.

Each Haroutunian branch is a convex problem solved exactly through its
Lagrangian dual (alternating minimization plus bisection on the multiplier).
The sphere-packing inner problem is nonconvex; it is solved by SLSQP on the
rows of V with the time-sharing LP margin as a constraint, started from the
Haroutunian minimizers (which are always feasible for it).
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .channel import (
    MEMBERSHIP_SLOP,
    Mac,
    RatePair,
    SearchOptions,
    component_grid,
    epsilon_n,
    region_lp,
    validate_mac,
)
from .probability import simplex_grid
from .results import ExponentResult

BA_ITERS = 3000
BA_TOL = 1e-13
SEED_RESOLUTION = 8
BOUNDARY_SLOP = 1e-12  # same closure slop as the grid oracle


# ---------------------------------------------------------------------------
# Haroutunian inner problem


def branch_value(p_flat, w_flat, nx, ny, k, rate):
    """min D(V||W|P) subject to I_k(V) <= rate; (value, V)."""
    if rate <= 0:
        val, v = K.common_support_value(p_flat, w_flat, nx, ny, k)
        if not np.isfinite(val):
            return math.inf, w_flat.copy()
        return float(val), v
    val, v, ok = K.constrained_min(p_flat, w_flat, nx, ny, k, rate, BA_ITERS, BA_TOL)
    if not ok:
        # the rate is below what any V with W's support can reach
        return math.inf, w_flat.copy()
    return float(val), v


def haroutunian_inner(p_flat, w_flat, nx, ny, rho, shrink: float = 0.0):
    """min over the three branches; returns (value, V, branch).

    ``shrink`` tightens every rate by that amount so the returned V is
    strictly feasible (used to seed the sphere-packing search).
    """
    best = (math.inf, w_flat.copy(), -1)
    for k in range(3):
        rate = rho[k] - shrink
        if rate < 0:
            continue
        val, v = branch_value(p_flat, w_flat, nx, ny, k, rate)
        if val < best[0]:
            best = (val, v, k)
    if best[2] >= 0 and best[0] == 0.0:
        best = (0.0, w_flat.copy(), best[2])
    return best


# ---------------------------------------------------------------------------
# sphere-packing inner problem


def _free_mask(p_flat, w_flat):
    return (p_flat[:, None] > 0) & (w_flat > 0)


def sp_slack(v_flat, p_flat, rho, grid):
    return region_lp(v_flat, p_flat, rho, grid)


def sphere_packing_inner(p_flat, w_flat, nx, ny, rho, grid, opts: SearchOptions, starts=None):
    """min D(V||W|P) over V whose grid region at P misses the rates by at least ``tol``.

    Returns (value, V, slack, converged). ``value`` is +inf when no start is
    feasible.
    """
    tol = opts.tolerance
    base = sp_slack(w_flat, p_flat, rho, grid)
    if base.slack < -MEMBERSHIP_SLOP:
        return 0.0, w_flat.copy(), base.slack, True
    mask = _free_mask(p_flat, w_flat)
    rows = [np.flatnonzero(mask[i]) for i in range(mask.shape[0])]
    nfree = int(mask.sum())
    if starts is None:
        starts = []
    seeds = list(starts)
    for k in range(3):
        rate = rho[k] - 2 * tol
        if rate < 0:
            continue
        val, v = branch_value(p_flat, w_flat, nx, ny, k, rate)
        if np.isfinite(val):
            seeds.append(v)
    if not seeds:
        return _boundary_candidate(p_flat, w_flat, nx, ny, rho, grid, (math.inf, w_flat.copy(), base.slack, False))

    def unpack(x):
        v = w_flat.copy()
        v[mask] = np.clip(x, 1e-15, 1.0)
        return v

    def obj(x):
        v = unpack(x)
        return K.cond_divergence(p_flat, v, w_flat), _grad_d(v)

    def _grad_d(v):
        g = np.empty_like(v)
        K.divergence_gradient(p_flat, v, w_flat, g)
        return g[mask]

    cache = {}

    def lp_at(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = sp_slack(unpack(x), p_flat, rho, grid)
        return cache[key]

    def con(x):
        return np.array([-lp_at(x).slack - tol])

    def con_jac(x):
        sol = lp_at(x)
        g = K.slack_gradient(grid.comps, sol.mu, sol.lam, unpack(x), nx, ny)
        return -g[mask][None, :]

    eq_rows = []
    for i, cols in enumerate(rows):
        if cols.size:
            eq_rows.append(i)
    row_index = np.cumsum(mask.ravel()).reshape(mask.shape) - 1

    def eq(x):
        v = unpack(x)
        return np.array([v[i, rows[i]].sum() - 1.0 for i in eq_rows])

    jac_eq = np.zeros((len(eq_rows), nfree))
    for r, i in enumerate(eq_rows):
        jac_eq[r, row_index[i, rows[i]]] = 1.0

    best = (math.inf, w_flat.copy(), base.slack, False)
    seen = []
    for v0 in seeds:
        d0 = K.cond_divergence(p_flat, v0, w_flat)
        s0 = sp_slack(np.ascontiguousarray(v0), p_flat, rho, grid).slack
        if s0 <= -tol + 1e-12 and d0 < best[0]:
            best = (d0, v0.copy(), s0, True)
        if any(np.abs(v0 - s).max() < 1e-9 for s in seen):
            continue
        seen.append(v0)
        x0 = v0[mask]
        try:
            res = minimize(
                obj, x0, jac=True, method="SLSQP",
                bounds=[(1e-15, 1.0)] * nfree,
                constraints=[{"type": "ineq", "fun": con, "jac": con_jac},
                             {"type": "eq", "fun": eq, "jac": lambda x: jac_eq}],
                options={"maxiter": opts.max_iterations, "ftol": 1e-14},
            )
            x = res.x
        except (ValueError, np.linalg.LinAlgError):
            continue
        v = unpack(x)
        v /= v.sum(axis=1, keepdims=True)
        s = sp_slack(v, p_flat, rho, grid).slack
        d = K.cond_divergence(p_flat, v, w_flat)
        if s <= -tol + 1e-12 and d < best[0]:
            best = (d, v, s, bool(res.success))
    if not np.isfinite(best[0]):
        best = _boundary_candidate(p_flat, w_flat, nx, ny, rho, grid, best)
    return best


def _boundary_candidate(p_flat, w_flat, nx, ny, rho, grid, best):
    """Fallback when no V misses the rates by tol: Haroutunian minimizers at the exact rates.

    These have slack <= 0, i.e. the rates are not interior to C_V(P). This is
    the only kind of feasible V when a rate is zero, e.g. at r = (0, 0).
    """
    for k in range(3):
        if rho[k] < 0:
            continue
        val, v = branch_value(p_flat, w_flat, nx, ny, k, rho[k])
        if not np.isfinite(val) or val >= best[0]:
            continue
        s = sp_slack(np.ascontiguousarray(v), p_flat, rho, grid).slack
        if s <= BOUNDARY_SLOP:
            best = (val, v, s, True)
    return best


# ---------------------------------------------------------------------------
# outer search over input joints


def _compass(p0: np.ndarray, f: Callable[[np.ndarray], float], fp0: float, step: float,
             min_step: float, max_evals: int, accept: Optional[Callable[[np.ndarray, float], bool]] = None):
    """Maximize f on the simplex by moving mass between coordinate pairs."""
    p, fp = p0.copy(), fp0
    m = p.size
    evals = 0
    while step >= min_step and evals < max_evals:
        improved = False
        for i in range(m):
            for j in range(m):
                if i == j or p[j] <= 0:
                    continue
                q = p.copy()
                d = min(step, q[j])
                q[i] += d
                q[j] -= d
                if accept is not None and not accept(q, fp):
                    continue
                fq = f(q)
                evals += 1
                if fq > fp + 1e-13:
                    p, fp, improved = q, fq, True
        if not improved:
            step /= 2
    return p, fp, evals, step < min_step


def _product_compass(a0, b0, f, fp0, step, min_step, max_evals):
    """Compass search over (alpha, beta) with P = alpha x beta."""
    a, b, fp = a0.copy(), b0.copy(), fp0
    evals = 0
    while step >= min_step and evals < max_evals:
        improved = False
        for which in (0, 1):
            vec = a if which == 0 else b
            for i in range(vec.size):
                for j in range(vec.size):
                    if i == j or vec[j] <= 0:
                        continue
                    q = vec.copy()
                    d = min(step, q[j])
                    q[i] += d
                    q[j] -= d
                    na, nb = (q, b) if which == 0 else (a, q)
                    fq = f(na, nb)
                    evals += 1
                    if fq > fp + 1e-13:
                        a, b, fp, improved = na, nb, fq, True
                        vec = a if which == 0 else b
        if not improved:
            step /= 2
    return a, b, fp, evals, step < min_step


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _nelder_mead(p0: np.ndarray, f: Callable[[np.ndarray], float], max_evals: int, split=None):
    """Nelder-Mead on softmax coordinates; handles the ridges where compass stalls.

    ``split`` = (nx, ny) searches over products alpha x beta instead.
    """
    if split is None:
        z0 = np.log(np.clip(p0, 1e-12, None))
        to_p = _softmax
    else:
        nx, ny = split
        pm = p0.reshape(nx, ny)
        z0 = np.concatenate([np.log(np.clip(pm.sum(1), 1e-12, None)), np.log(np.clip(pm.sum(0), 1e-12, None))])
        to_p = lambda z: np.outer(_softmax(z[:nx]), _softmax(z[nx:])).ravel()
    res = minimize(lambda z: -f(to_p(z)), z0, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-13, "maxfev": max_evals})
    p = to_p(res.x)
    # snap negligible masses to exact zeros so pinned rows stay pinned
    p = np.where(p < 1e-11, 0.0, p)
    p = p / p.sum()
    return p, f(p), res.nfev


def _seed_order(vals: np.ndarray, count: int) -> np.ndarray:
    return np.lexsort((np.arange(vals.size), -vals))[:count]


def _har_outer(w: Mac, rho, opts: SearchOptions, product_only: bool):
    nx, ny = w.nx, w.ny
    wf = np.ascontiguousarray(w.flat)
    f = lambda p: haroutunian_inner(p, wf, nx, ny, rho)[0]
    evals = 0
    if product_only:
        ga = simplex_grid(nx, SEED_RESOLUTION)
        gb = simplex_grid(ny, SEED_RESOLUTION)
        pairs = [(a, b) for a in ga for b in gb]
        vals = np.array([f(np.outer(a, b).ravel()) for a, b in pairs])
        evals += len(pairs)
        best = (-math.inf, None)
        conv = True
        for s in _seed_order(vals, opts.multistart_count):
            a, b = pairs[s]
            if not np.isfinite(vals[s]):
                return math.inf, np.outer(a, b).ravel(), evals, True
            if vals[s] <= 0 and best[1] is not None:
                continue
            fa = lambda x, y: f(np.outer(x, y).ravel())
            a2, b2, fv, n, ok = _product_compass(a, b, fa, vals[s], 1.0 / SEED_RESOLUTION, 1e-6,
                                                 opts.max_iterations * 20)
            evals += n
            conv &= ok
            pp = np.outer(a2, b2).ravel()
            if fv > 0:
                p3, f3, n = _nelder_mead(pp, f, opts.max_iterations * 10, split=(nx, ny))
                evals += n
                if f3 > fv:
                    pp, fv = p3, f3
            if fv > best[0] + 1e-13:
                best = (fv, pp)
        return best[0], best[1], evals, conv
    grid = simplex_grid(nx * ny, SEED_RESOLUTION)
    vals = np.array([f(p) for p in grid])
    evals += len(grid)
    best = (-math.inf, None)
    conv = True
    for s in _seed_order(vals, opts.multistart_count):
        if not np.isfinite(vals[s]):
            return math.inf, grid[s], evals, True
        if vals[s] <= 0 and best[1] is not None:
            continue
        p, fv, n, ok = _compass(grid[s], f, vals[s], 1.0 / SEED_RESOLUTION, 1e-6, opts.max_iterations * 20)
        evals += n
        conv &= ok
        if fv > 0:
            p3, f3, n = _nelder_mead(p, f, opts.max_iterations * 10)
            evals += n
            if f3 > fv:
                p, fv = p3, f3
        if fv > best[0] + 1e-13:
            best = (fv, p)
    return best[0], best[1], evals, conv


def _result(w: Mac, p_flat, v_flat, method, converged, diag) -> ExponentResult:
    p = np.asarray(p_flat, float).reshape(w.nx, w.ny)
    v = np.asarray(v_flat, float).copy()
    v[p.ravel() == 0] = w.flat[p.ravel() == 0]
    wv = w if np.array_equal(v, w.flat) else validate_mac(v.reshape(w.shape))
    value = K.cond_divergence(p.ravel(), np.ascontiguousarray(wv.flat), np.ascontiguousarray(w.flat))
    return ExponentResult(float(value), p, wv, method, converged, diag)


def haroutunian_exponent(w: Mac, r: RatePair, opts: Optional[SearchOptions] = None,
                         product_only: bool = False) -> ExponentResult:
    """max over P of min over the three Haroutunian constraint sets of D(V||W|P)."""
    opts = opts or SearchOptions()
    rho = r.rho
    wf = np.ascontiguousarray(w.flat)
    value, p, evals, conv = _har_outer(w, rho, opts, product_only)
    if not product_only and np.isfinite(value):
        # product inputs are a subset; their dedicated search sometimes climbs higher
        v2, p2, n2, c2 = _har_outer(w, rho, opts, True)
        evals += n2
        if v2 > value + 1e-13:
            value, p, conv = v2, p2, c2
    diag = {"evaluations": evals, "product_only": product_only}
    if not np.isfinite(value):
        diag["infinite"] = True
        return ExponentResult(math.inf, p.reshape(w.nx, w.ny), w, "haroutunian", True, diag)
    val, v, k = haroutunian_inner(p, wf, w.nx, w.ny, rho)
    diag["branch"] = int(k)
    return _result(w, p, v, "haroutunian", conv, diag)


def sphere_packing_exponent(w: Mac, r: RatePair, opts: Optional[SearchOptions] = None,
                            product_only: bool = False) -> ExponentResult:
    """max over P of min over {V : r outside C_V(P)} of D(V||W|P).

    Product inputs are handled exactly through the Haroutunian branches (the
    two feasible sets coincide there); other inputs are only examined where
    their Haroutunian value exceeds the best value found so far, because it
    upper-bounds the sphere-packing inner minimum.
    """
    opts = opts or SearchOptions()
    nx, ny = w.nx, w.ny
    rho = r.rho
    wf = np.ascontiguousarray(w.flat)
    grid = component_grid(nx, ny, opts.grid_resolution)
    diag = {"product_only": product_only, "component_resolution": grid.resolution}
    cap = region_lp(wf, None, rho, grid)
    diag["capacity_slack"] = cap.slack
    if cap.slack < -MEMBERSHIP_SLOP:
        p0 = np.full(nx * ny, 1.0 / (nx * ny))
        return _result(w, p0, wf, "sphere_packing", True, diag | {"outside_capacity": True})

    tol = opts.tolerance
    har = lambda p: haroutunian_inner(p, wf, nx, ny, rho)[0]
    # product stage
    lval, lp_, evals, conv = _har_outer(w, rho, opts, product_only=True)
    diag["product_value"] = lval
    if not np.isfinite(lval):
        diag["infinite"] = True
        return ExponentResult(math.inf, lp_.reshape(nx, ny), w, "sphere_packing", True, diag)
    best_val, best_p, best_v = lval, lp_, None
    sp_evals = 0
    if not product_only:
        cache = {}

        def fsp(p):
            nonlocal sp_evals
            key = np.round(p, 12).tobytes()
            if key not in cache:
                sp_evals += 1
                cache[key] = sphere_packing_inner(p, wf, nx, ny, rho, grid, opts)
            return cache[key][0]

        # the Haroutunian maximizer is the natural first seed: its value
        # bounds everything nearby from above
        hval, hp, n, _ = _har_outer(w, rho, opts, product_only=False)
        evals += n
        grid_seeds = simplex_grid(nx * ny, SEED_RESOLUTION)
        seeds = np.vstack([hp[None, :], grid_seeds])
        hv = np.concatenate([[hval], [har(p) for p in grid_seeds]])
        evals += len(grid_seeds)
        for s in _seed_order(hv, opts.multistart_count):
            if hv[s] <= best_val + 1e-9:
                break
            p0 = seeds[s]
            f0 = fsp(p0)
            accept = lambda q, fcur: har(q) > max(fcur, best_val) + 1e-9
            p, fv, n, ok = _compass(p0, fsp, f0, 1.0 / SEED_RESOLUTION, 1.0 / 512,
                                    opts.max_iterations, accept)
            if fv > best_val + 1e-12:
                best_val, best_p = fv, p
                best_v = cache[np.round(p, 12).tobytes()][1]
    diag["evaluations"] = evals
    diag["sp_inner_calls"] = sp_evals
    if not np.isfinite(best_val):
        diag["infinite"] = True
        return ExponentResult(math.inf, best_p.reshape(nx, ny), w, "sphere_packing", True, diag)
    if best_v is None:
        # product optimum: strictly feasible Haroutunian minimizer
        val, best_v, k = haroutunian_inner(best_p, wf, nx, ny, rho, shrink=2 * tol)
        if not np.isfinite(val) or sp_slack(best_v, best_p, rho, grid).slack > -tol + 1e-12:
            val, best_v, s, ok = sphere_packing_inner(best_p, wf, nx, ny, rho, grid, opts)
    slack = sp_slack(np.ascontiguousarray(best_v), best_p, rho, grid).slack
    diag["witness_slack"] = slack
    # a zero rate admits only boundary witnesses (slack exactly 0)
    boundary = bool(np.any(rho < 2 * tol)) and slack <= BOUNDARY_SLOP
    diag["boundary_witness"] = boundary and slack >= -MEMBERSHIP_SLOP
    res = _result(w, best_p, best_v, "sphere_packing", conv and (slack < -MEMBERSHIP_SLOP or boundary), diag)
    return res


# ---------------------------------------------------------------------------
# sweeps


SURFACE_HEADER = ("r1", "r2", "value", "method", "converged")


def exponent_surface(w: Mac, r1_grid: Sequence[float], r2_grid: Sequence[float], method: str,
                     opts: Optional[SearchOptions] = None, resolution: Optional[int] = None,
                     threads: int = 1):
    """One exponent per rate pair, rows in row-major order (r1 outer, r2 inner)."""
    r1_grid = [float(x) for x in r1_grid]
    r2_grid = [float(x) for x in r2_grid]
    for g in (r1_grid, r2_grid):
        if not g or any(b < a for a, b in zip(g, g[1:])):
            raise ValueError("rate grids must be nonempty and sorted")
    opts = opts or SearchOptions()
    cells = [(a, b) for a in r1_grid for b in r2_grid]

    def run(cell):
        return compute_exponent(w, RatePair(*cell), method, opts, resolution)

    if threads > 1 and len(cells) > 1:
        # cells are independent and deterministic; map keeps cell order
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]
    return [(a, b, res) for (a, b), res in zip(cells, results)]


def compute_exponent(w: Mac, r: RatePair, method: str, opts: Optional[SearchOptions] = None,
                     resolution: Optional[int] = None, target: str = "haroutunian") -> ExponentResult:
    opts = opts or SearchOptions()
    if method == "haroutunian":
        return haroutunian_exponent(w, r, opts)
    if method == "sphere_packing":
        return sphere_packing_exponent(w, r, opts)
    if method == "grid_oracle":
        from .oracle import exponent_grid_oracle

        return exponent_grid_oracle(w, r, target, resolution or opts.grid_resolution)
    raise ValueError(f"unknown method {method!r}")


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.9g}"


def surface_csv(rows, method: str) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(SURFACE_HEADER)
    for a, b, res in rows:
        out.writerow([_fmt(a), _fmt(b), _fmt(res.value), method, "true" if res.converged else "false"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# finite-length gap


@dataclass(frozen=True)
class GapReport:
    n_values: tuple
    alpha_n: tuple
    alpha_star: float
    eps_values: tuple

    @property
    def gaps(self) -> tuple:
        return tuple(a - self.alpha_star for a in self.alpha_n)

    def to_json(self) -> dict:
        return {
            "n": list(self.n_values),
            "alpha_n": list(self.alpha_n),
            "alpha_star": self.alpha_star,
            "epsilon_n": list(self.eps_values),
        }


def finite_n_gap(w: Mac, p, r: RatePair, n_list: Iterable[int], opts: Optional[SearchOptions] = None,
                 eps_model: Optional[Callable[[int], float]] = None) -> GapReport:
    """alpha_n = min{D(V||W|P): r outside C^n_V(P)} for each n, and alpha* (no slack).

    C^n inflates every pentagon constraint by eps_n, so r is outside C^n_V(P)
    exactly when (r1-eps, r2-eps, r1+r2-eps) misses the region. When no V
    achieves that (eps_n too large), alpha_n is +inf.
    """
    opts = opts or SearchOptions()
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("block lengths must be increasing")
    if eps_model is None:
        eps_model = lambda n: epsilon_n(n, w.nx, w.ny)
    p_flat = np.asarray(p, float).ravel()
    wf = np.ascontiguousarray(w.flat)
    grid = component_grid(w.nx, w.ny, opts.grid_resolution)

    def alpha(eps):
        # a negative right side just means that constraint can never bind
        rho = r.rho - eps
        if np.all(rho <= 0) and eps > 0:
            return math.inf
        val = sphere_packing_inner(p_flat, wf, w.nx, w.ny, rho, grid, opts)[0]
        return float(val)

    star = alpha(0.0)
    eps_vals = [float(eps_model(n)) for n in n_list]
    alphas = []
    for eps in eps_vals:
        alphas.append(star if eps == 0 else alpha(eps))
    return GapReport(tuple(n_list), tuple(alphas), star, tuple(eps_vals))
