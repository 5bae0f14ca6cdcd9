"""Two-user discrete memoryless multiple-access channels and their rate regions."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .probability import (
    RENORM_TOL,
    AlphabetMismatch,
    SymbolError,
    as_joint,
    simplex_grid,
)

MEMBERSHIP_SLOP = 1e-9
MAX_COMPONENTS = 4
COMPONENT_BUDGET = 4500


class ChannelFormatError(ValueError):
    """A channel description is malformed; the message names the index path."""


class DecompositionError(ValueError):
    """No time-sharing decomposition with at most four components reproduces P."""


@dataclass(frozen=True)
class SearchOptions:
    """Knobs shared by the region search, the exponent solvers and the oracle."""

    grid_resolution: int = 32
    multistart_count: int = 8
    seed: int = 0
    tolerance: float = 1e-6
    max_iterations: int = 200

    def __post_init__(self):
        for name in ("grid_resolution", "multistart_count", "max_iterations"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 < self.tolerance <= 1e-2:
            raise ValueError("tolerance must lie in (0, 1e-2]")


@dataclass(frozen=True, eq=False)
class Mac:
    """Channel W(z|x,y) stored as an (|X|, |Y|, |Z|) array."""

    w: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.w.shape

    @property
    def nx(self) -> int:
        return self.w.shape[0]

    @property
    def ny(self) -> int:
        return self.w.shape[1]

    @property
    def nz(self) -> int:
        return self.w.shape[2]

    @property
    def flat(self) -> np.ndarray:
        """Rows indexed by x*|Y|+y."""
        return self.w.reshape(self.nx * self.ny, self.nz)

    def __eq__(self, other):
        return isinstance(other, Mac) and self.w.shape == other.w.shape and bool(np.all(self.w == other.w))

    def __hash__(self):
        return hash((self.w.shape, self.w.tobytes()))

    def to_json(self) -> dict:
        return {"x_size": self.nx, "y_size": self.ny, "z_size": self.nz, "w": self.w.tolist()}


def validate_mac(raw) -> Mac:
    """Check a raw |X|x|Y|x|Z| tensor and return a (renormalized) Mac."""
    arr = np.array(raw, dtype=float)
    if arr.ndim != 3 or 0 in arr.shape:
        raise ValueError(f"channel must be a nonempty 3-d tensor, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("channel has a non-finite entry")
    if np.any(arr < 0):
        x, y, z = np.argwhere(arr < 0)[0]
        raise ValueError(f"negative entry at w[{x}][{y}][{z}]")
    sums = arr.sum(axis=2)
    dev = np.abs(sums - 1.0)
    if np.any(dev > RENORM_TOL):
        x, y = np.argwhere(dev > RENORM_TOL)[0]
        raise ValueError(f"row w[{x}][{y}] sums to {sums[x, y]:.12g}, not 1")
    arr = arr / sums[:, :, None]
    arr.flags.writeable = False
    return Mac(arr)


def _check_shape(node, path: str, depth: int, sizes: Sequence[int]):
    if depth == len(sizes):
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            raise ChannelFormatError(f"{path}: expected a number, got {type(node).__name__}")
        return
    if not isinstance(node, list):
        raise ChannelFormatError(f"{path}: expected an array of length {sizes[depth]}")
    if len(node) != sizes[depth]:
        raise ChannelFormatError(f"{path}: expected length {sizes[depth]}, got {len(node)}")
    for i, child in enumerate(node):
        _check_shape(child, f"{path}[{i}]", depth + 1, sizes)


def parse_channel(doc) -> Mac:
    """Build a Mac from a decoded channel document (dict with x_size, y_size, z_size, w)."""
    if not isinstance(doc, dict):
        raise ChannelFormatError("channel document must be a JSON object")
    sizes = []
    for key in ("x_size", "y_size", "z_size"):
        val = doc.get(key)
        if isinstance(val, bool) or not isinstance(val, int) or val < 1:
            raise ChannelFormatError(f"{key}: expected a positive integer, got {val!r}")
        sizes.append(val)
    if "w" not in doc:
        raise ChannelFormatError("w: missing")
    _check_shape(doc["w"], "w", 0, sizes)
    try:
        return validate_mac(doc["w"])
    except ValueError as exc:
        raise ChannelFormatError(str(exc)) from None


def load_channel(path) -> Mac:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChannelFormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_channel(doc)


@dataclass(frozen=True)
class RatePair:
    r1: float
    r2: float

    def __post_init__(self):
        if not (math.isfinite(self.r1) and math.isfinite(self.r2)) or self.r1 < 0 or self.r2 < 0:
            raise ValueError(f"rates must be finite and nonnegative, got ({self.r1}, {self.r2})")

    @property
    def rho(self) -> np.ndarray:
        """Right-hand sides of the three pentagon constraints."""
        return np.array([self.r1, self.r2, self.r1 + self.r2])


@dataclass(frozen=True, eq=False)
class TimeSharingDecomposition:
    q_weights: np.ndarray
    px_given_q: np.ndarray
    py_given_q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q_weights, float)
        a = np.asarray(self.px_given_q, float)
        b = np.asarray(self.py_given_q, float)
        if q.ndim != 1 or not 1 <= q.size <= MAX_COMPONENTS:
            raise ValueError(f"time-sharing alphabet must have 1 to {MAX_COMPONENTS} symbols")
        if a.ndim != 2 or b.ndim != 2 or a.shape[0] != q.size or b.shape[0] != q.size:
            raise AlphabetMismatch("component matrices must have one row per time-sharing symbol")
        for name, arr, axis in (("q_weights", q, None), ("px_given_q", a, 1), ("py_given_q", b, 1)):
            if np.any(arr < -1e-12) or np.any(np.abs(arr.sum(axis=axis) - 1) > 1e-9):
                raise ValueError(f"{name} is not a valid distribution")
        object.__setattr__(self, "q_weights", np.clip(q, 0, None))
        object.__setattr__(self, "px_given_q", np.clip(a, 0, None))
        object.__setattr__(self, "py_given_q", np.clip(b, 0, None))

    @property
    def size(self) -> int:
        return int(self.q_weights.size)

    def to_json(self) -> dict:
        return {
            "q_weights": self.q_weights.tolist(),
            "px_given_q": self.px_given_q.tolist(),
            "py_given_q": self.py_given_q.tolist(),
        }


@dataclass(frozen=True)
class RegionVerdict:
    inside: bool
    slack: float
    witness: Optional[TimeSharingDecomposition] = None
    diagnostics: dict = field(default_factory=dict)


def product_channel_prob(w: Mac, x, y, z) -> float:
    """W^n(z|x,y) as a product of per-letter probabilities."""
    xs, ys, zs = (np.asarray(s, dtype=np.int64) for s in (x, y, z))
    if not xs.shape == ys.shape == zs.shape or xs.ndim != 1:
        raise AlphabetMismatch(f"sequence lengths differ: {xs.size}, {ys.size}, {zs.size}")
    if xs.size == 0:
        raise ValueError("sequences must be nonempty")
    for name, seq, k in (("x", xs, w.nx), ("y", ys, w.ny), ("z", zs, w.nz)):
        bad = (seq < 0) | (seq >= k)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise SymbolError(f"{name}[{i}] = {int(seq[i])} outside alphabet of size {k}")
    return float(np.prod(w.w[xs, ys, zs]))


def decomposition_marginal(d: TimeSharingDecomposition) -> np.ndarray:
    return np.einsum("q,qx,qy->xy", d.q_weights, d.px_given_q, d.py_given_q)


def pentagon_rates(v: Mac, d: TimeSharingDecomposition) -> tuple[float, float, float]:
    """(I(X;Z|Y,Q), I(Y;Z|X,Q), I(XY;Z|Q)) in bits."""
    if d.px_given_q.shape[1] != v.nx or d.py_given_q.shape[1] != v.ny:
        raise AlphabetMismatch(
            f"decomposition alphabets ({d.px_given_q.shape[1]}, {d.py_given_q.shape[1]}) "
            f"do not match channel inputs ({v.nx}, {v.ny})"
        )
    acc = np.zeros(3)
    vf = np.ascontiguousarray(v.flat)
    for q, a, b in zip(d.q_weights, d.px_given_q, d.py_given_q):
        if q > 0:
            acc += q * K.infos(np.outer(a, b).ravel(), vf, v.nx, v.ny)
    return float(acc[0]), float(acc[1]), float(acc[2])


def _pentagon_margin(rates, rho, eps) -> float:
    return float(min(rates[0] + eps - rho[0], rates[1] + eps - rho[1], rates[2] + eps - rho[2]))


def haroutunian_feasible(v: Mac, p, r: RatePair) -> bool:
    """True iff at least one of the three informations under P x V is at most its rate."""
    p = _joint_for(v, p)
    i = K.infos(p.ravel(), np.ascontiguousarray(v.flat), v.nx, v.ny)
    rho = r.rho
    return bool(np.any(i <= rho + MEMBERSHIP_SLOP))


def _joint_for(v: Mac, p) -> np.ndarray:
    p = as_joint(p)
    if p.shape != (v.nx, v.ny):
        raise AlphabetMismatch(f"input distribution shape {p.shape} does not match channel inputs ({v.nx}, {v.ny})")
    return p


# ---------------------------------------------------------------------------
# component grids and the time-sharing LP


def component_resolution(nx: int, ny: int, requested: int) -> int:
    """Largest resolution <= requested whose product-component grid fits the budget."""
    res = requested
    while res > 1 and math.comb(res + nx - 1, nx - 1) * math.comb(res + ny - 1, ny - 1) > COMPONENT_BUDGET:
        res -= 1
    return res


@dataclass(frozen=True, eq=False)
class ComponentGrid:
    nx: int
    ny: int
    resolution: int
    alphas: np.ndarray
    betas: np.ndarray
    comps: np.ndarray
    corners: np.ndarray

    def split(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        nb = self.betas.shape[0]
        return self.alphas[j // nb], self.betas[j % nb]


@lru_cache(maxsize=16)
def component_grid(nx: int, ny: int, resolution: int) -> ComponentGrid:
    res = component_resolution(nx, ny, resolution)
    alphas = simplex_grid(nx, res)
    betas = simplex_grid(ny, res)
    comps = K.component_joints(alphas, betas)
    eye = np.eye(nx * ny)
    corners = np.array([int(np.flatnonzero(np.all(comps == e, axis=1))[0]) for e in eye], dtype=np.int64)
    for arr in (alphas, betas, comps, corners):
        arr.flags.writeable = False
    return ComponentGrid(nx, ny, res, alphas, betas, comps, corners)


@dataclass
class LpSolution:
    slack: float
    mu: np.ndarray
    eta: np.ndarray
    lam: np.ndarray
    status: int


def region_lp(v_flat: np.ndarray, p_flat: Optional[np.ndarray], rho: np.ndarray, grid: ComponentGrid) -> LpSolution:
    """Best worst-margin over mixtures of grid components (marginal pinned to p unless None)."""
    f = K.component_infos(grid.comps, v_flat, grid.nx, grid.ny)
    free = p_flat is None
    pp = np.ones(1) if free else p_flat
    t, mu, eta, lam, status = K.timeshare_lp(grid.comps, f, pp, rho, grid.corners, free, 50000)
    return LpSolution(float(t), mu, eta, lam, int(status))


# ---------------------------------------------------------------------------
# reduction of an LP mixture to at most four components and local polishing


def _mixture_margin(weights, alphas, betas, v_flat, nx, ny, rho, eps):
    acc = np.zeros(3)
    for q, a, b in zip(weights, alphas, betas):
        if q > 0:
            acc += q * K.infos(np.outer(a, b).ravel(), v_flat, nx, ny)
    return _pentagon_margin(acc, rho, eps)


def _restricted_weights(cols: np.ndarray, target: np.ndarray) -> Optional[np.ndarray]:
    """Nonnegative weights reproducing ``target`` from the given component columns."""
    sol, *_ = np.linalg.lstsq(cols.T, target, rcond=None)
    if np.any(sol < -1e-10) or np.abs(cols.T @ sol - target).sum() > 1e-9:
        return None
    return np.clip(sol, 0, None)


def _polish(weights, alphas, betas, v_flat, nx, ny, rho, eps, p_flat, iters):
    """Local SLSQP on (weights, alphas, betas) maximizing the worst margin."""
    nq = len(weights)

    def unpack(z):
        wq = z[:nq]
        a = z[nq : nq + nq * nx].reshape(nq, nx)
        b = z[nq + nq * nx : nq + nq * nx + nq * ny].reshape(nq, ny)
        return wq, a, b

    def margins(z):
        wq, a, b = unpack(np.clip(z[:-1], 0, 1))
        acc = np.zeros(3)
        for q in range(nq):
            acc += wq[q] * K.infos(np.outer(a[q], b[q]).ravel(), v_flat, nx, ny)
        return acc + eps - rho - z[-1]

    cons = [{"type": "ineq", "fun": margins}]
    if p_flat is not None:
        def marg(z):
            wq, a, b = unpack(z[:-1])
            return np.einsum("q,qx,qy->xy", wq, a, b).ravel() - p_flat
        cons.append({"type": "eq", "fun": marg})
    else:
        cons.append({"type": "eq", "fun": lambda z: np.sum(z[:nq]) - 1.0})

    def simplex_rows(z):
        wq, a, b = unpack(z[:-1])
        return np.concatenate([a.sum(1) - 1, b.sum(1) - 1])

    cons.append({"type": "eq", "fun": simplex_rows})
    z0 = np.concatenate([weights, np.ravel(alphas), np.ravel(betas), [0.0]])
    z0[-1] = _mixture_margin(weights, alphas, betas, v_flat, nx, ny, rho, eps)
    bounds = [(0.0, 1.0)] * (len(z0) - 1) + [(None, None)]
    try:
        res = minimize(lambda z: -z[-1], z0, method="SLSQP", bounds=bounds, constraints=cons,
                       options={"maxiter": iters, "ftol": 1e-12})
        z = res.x
    except (ValueError, np.linalg.LinAlgError):
        return None
    wq, a, b = unpack(np.clip(z[:-1], 0, 1))
    a = a / a.sum(1, keepdims=True)
    b = b / b.sum(1, keepdims=True)
    wq = wq / wq.sum()
    return wq, a, b


def _reduce_to_decomposition(sol: LpSolution, grid: ComponentGrid, v_flat, p_flat, rho, eps, iters):
    """Best decomposition with at most four components found from an LP mixture."""
    nx, ny = grid.nx, grid.ny
    support = np.flatnonzero(sol.mu > 1e-14)
    support = support[np.argsort(-sol.mu[support], kind="stable")]
    candidates = []
    if support.size <= MAX_COMPONENTS:
        candidates.append((support, sol.mu[support] / sol.mu[support].sum()))
    else:
        target = p_flat if p_flat is not None else None
        for size in range(MAX_COMPONENTS, 0, -1):
            for sub in itertools.combinations(support, size):
                sub = np.array(sub)
                if target is None:
                    wts = sol.mu[sub] / sol.mu[sub].sum()
                else:
                    wts = _restricted_weights(grid.comps[sub], target)
                    if wts is None:
                        continue
                candidates.append((sub, wts))
            if candidates:
                break
    best = None
    for sub, wts in candidates:
        alphas = np.array([grid.split(j)[0] for j in sub])
        betas = np.array([grid.split(j)[1] for j in sub])
        m = _mixture_margin(wts, alphas, betas, v_flat, nx, ny, rho, eps)
        if best is None or m > best[0]:
            best = (m, wts, alphas, betas)
    if best is None:
        return None
    if best[0] < 0 and support.size > MAX_COMPONENTS:
        pol = _polish(best[1], best[2], best[3], v_flat, nx, ny, rho, eps, p_flat, iters)
        if pol is not None:
            wts, alphas, betas = pol
            marg = np.einsum("q,qx,qy->xy", wts, alphas, betas).ravel()
            if p_flat is None or np.abs(marg - p_flat).sum() <= 1e-6:
                m = _mixture_margin(wts, alphas, betas, v_flat, nx, ny, rho, eps)
                if m > best[0]:
                    best = (m, wts, alphas, betas)
    return best


def _drop_empty(wts, alphas, betas):
    keep = wts > 0
    return TimeSharingDecomposition(wts[keep] / wts[keep].sum(), alphas[keep], betas[keep])


def _region_verdict(v: Mac, p_flat, r: RatePair, eps: float, search: SearchOptions) -> RegionVerdict:
    if eps < 0:
        raise ValueError("slack must be nonnegative")
    grid = component_grid(v.nx, v.ny, search.grid_resolution)
    v_flat = np.ascontiguousarray(v.flat)
    rho = r.rho
    sol = region_lp(v_flat, p_flat, rho - eps, grid)
    diag = {"lp_slack": sol.slack, "lp_support": int(np.count_nonzero(sol.mu > 1e-14)),
            "component_resolution": grid.resolution}
    best = _reduce_to_decomposition(sol, grid, v_flat, p_flat, rho, eps, search.max_iterations)
    if best is None:
        return RegionVerdict(False, sol.slack, None, diag)
    margin, wts, alphas, betas = best
    dec = _drop_empty(wts, alphas, betas)
    if margin >= -MEMBERSHIP_SLOP:
        return RegionVerdict(True, float(margin), dec, diag)
    return RegionVerdict(False, float(margin), None, diag)


def region_membership(v: Mac, p, r: RatePair, eps: float = 0.0,
                      search: Optional[SearchOptions] = None) -> RegionVerdict:
    """Is r in C_V(P) inflated by eps?  Inside verdicts carry a checked witness.

    The search maximizes the worst pentagon margin over mixtures of product
    components on a grid (a linear program), then reduces the optimal mixture
    to at most four components. An outside verdict means the search found no
    containing pentagon; it is not a proof.
    """
    search = search or SearchOptions()
    p = _joint_for(v, p)
    if v.nx * v.ny > MAX_COMPONENTS:
        check_decomposable(p, search)
    return _region_verdict(v, p.ravel(), r, eps, search)


def capacity_membership(v: Mac, r: RatePair, search: Optional[SearchOptions] = None) -> RegionVerdict:
    """Is r in the capacity region (union of pentagons, input marginal free)?"""
    search = search or SearchOptions()
    return _region_verdict(v, None, r, 0.0, search)


def capacity_slack(v: Mac, r: RatePair, search: Optional[SearchOptions] = None) -> float:
    """LP value of the best worst-margin with free inputs (negative means outside)."""
    search = search or SearchOptions()
    grid = component_grid(v.nx, v.ny, search.grid_resolution)
    return region_lp(np.ascontiguousarray(v.flat), None, r.rho, grid).slack


def check_decomposable(p, search: Optional[SearchOptions] = None) -> TimeSharingDecomposition:
    """Find a mixture of at most four product distributions equal to p (L1 within 1e-6)."""
    search = search or SearchOptions()
    p = np.asarray(p, float)
    nx, ny = p.shape
    if nx * ny <= MAX_COMPONENTS:
        q = p.ravel()
        keep = q > 0
        eye_x = np.repeat(np.eye(nx), ny, axis=0)
        eye_y = np.tile(np.eye(ny), (nx, 1))
        return TimeSharingDecomposition(q[keep], eye_x[keep], eye_y[keep])
    if min(nx, ny) <= MAX_COMPONENTS:
        # condition on the smaller input: P = sum_x P(x) delta_x (x) P(.|x)
        if nx <= ny:
            px = p.sum(1)
            keep = px > 0
            return TimeSharingDecomposition(px[keep], np.eye(nx)[keep], p[keep] / px[keep, None])
        py = p.sum(0)
        keep = py > 0
        return TimeSharingDecomposition(py[keep], (p[:, keep] / py[keep]).T, np.eye(ny)[keep])
    # nonnegative rank <= 4 test: multiplicative updates, multistart
    rng = np.random.default_rng(search.seed)
    best = None
    for _ in range(max(4, search.multistart_count)):
        a = rng.random((nx, MAX_COMPONENTS)) + 1e-3
        b = rng.random((MAX_COMPONENTS, ny)) + 1e-3
        for _ in range(2000):
            b *= (a.T @ p) / np.maximum(a.T @ a @ b, 1e-300)
            a *= (p @ b.T) / np.maximum(a @ b @ b.T, 1e-300)
        err = np.abs(a @ b - p).sum()
        if best is None or err < best[0]:
            best = (err, a.copy(), b.copy())
        if err <= 1e-7:
            break
    err, a, b = best
    if err > 1e-6:
        raise DecompositionError(
            f"no decomposition of P with at most {MAX_COMPONENTS} components found (best L1 error {err:.3g})"
        )
    sa = a.sum(0)
    sb = b.sum(1)
    wts = sa * sb
    keep = wts > 1e-15
    return TimeSharingDecomposition(wts[keep] / wts[keep].sum(), (a[:, keep] / sa[keep]).T, b[keep] / sb[keep, None])


# ---------------------------------------------------------------------------
# finite-length slack


def epsilon_n(n: int, nx: int, ny: int, lam: float = 0.1, k: Optional[float] = None) -> float:
    """Default slack model for the finite-length region C^n (bits).

    eps_n = 3/(1-lam') * max(|X|,|Y|,|X||Y|) / sqrt(n)
            + (k/n) log2(2 sigma |X||Y| sqrt(n))
            + (|X||Y| log2(n+1) + log2 n - log2(1-lam*)) / n
    with lam' = (1+lam)/2, lam* = 2 lam/(1+lam), sigma = -log2(1-lam*) + |X||Y| log2(n+1)
    and k defaulting to its cap 2 sigma sqrt(n) (wringing with delta = n^-1/2).
    """
    if n < 1:
        raise ValueError("block length must be positive")
    if not 0 <= lam < 1:
        raise ValueError("error level must lie in [0, 1)")
    lam_p = (1 + lam) / 2
    lam_s = 2 * lam / (1 + lam)
    xy = nx * ny
    sigma = -math.log2(1 - lam_s) + xy * math.log2(n + 1)
    if k is None:
        k = 2 * sigma * math.sqrt(n)
    term1 = 3 / (1 - lam_p) * max(nx, ny, xy) / math.sqrt(n)
    term2 = (k / n) * math.log2(2 * sigma * xy * math.sqrt(n)) if k > 0 else 0.0
    term3 = (xy * math.log2(n + 1) + math.log2(n) - math.log2(1 - lam_s)) / n
    return term1 + term2 + term3
