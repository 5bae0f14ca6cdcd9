"""Explicit (n, M, N) codes for the MAC at desk scale.

Everything is exact: error probabilities come from enumerating Z^n, and the
subcode checks (dominant type, wringing, per-letter independence, single-user
rate bounds) are evaluated directly on the codeword lists.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .channel import Mac, RatePair, SearchOptions, epsilon_n, region_membership
from .probability import EmpiricalType, joint_type, l1_distance, mutual_information, type_class_size
from .results import ExponentResult

DECODE_GUARD = 10_000_000
TIE_TOL = 1e-9  # log2-likelihood gap below which two pairs count as tied
CLASS_LIMIT = 200_000
RESTARTS = 64


class CodeFormatError(ValueError):
    """A code description is malformed; the message names the index path."""


class PreconditionError(ValueError):
    """The code's rates do not exceed the target rates by the required margin."""


class ConstructionError(ValueError):
    """No constant-composition code with the requested sizes was found."""


def _words(raw, k: int, n: int, name: str) -> np.ndarray:
    if not isinstance(raw, (list, tuple, np.ndarray)) or len(raw) == 0:
        raise CodeFormatError(f"{name}: expected a nonempty list of codewords")
    out = np.zeros((len(raw), n), dtype=np.int64)
    for i, word in enumerate(raw):
        if not isinstance(word, (list, tuple, np.ndarray)) or len(word) != n:
            raise CodeFormatError(f"{name}[{i}]: expected length {n}")
        for t, s in enumerate(word):
            if isinstance(s, bool) or not isinstance(s, (int, np.integer)):
                raise CodeFormatError(f"{name}[{i}][{t}]: expected an integer symbol")
            if not 0 <= s < k:
                raise CodeFormatError(f"{name}[{i}][{t}]: symbol {s} outside alphabet of size {k}")
            out[i, t] = s
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MultiUserCode:
    """Codewords u (M x n over X) and v (N x n over Y), plus an optional decode table.

    decode[z] is the pair index i*N + j, or -1 for reject, with z the base-|Z|
    index of the output sequence (first letter most significant).
    """

    n: int
    u: np.ndarray
    v: np.ndarray
    nx: int
    ny: int
    decode: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1:
            raise CodeFormatError("n: block length must be positive")
        object.__setattr__(self, "u", _words(np.asarray(self.u).tolist(), self.nx, self.n, "u"))
        object.__setattr__(self, "v", _words(np.asarray(self.v).tolist(), self.ny, self.n, "v"))
        if self.decode is not None:
            d = np.asarray(self.decode, dtype=np.int64)
            if d.ndim != 1 or np.any(d < -1) or np.any(d >= self.m * self.n_y):
                raise CodeFormatError("decode: entries must be pair indices or -1")
            d.setflags(write=False)
            object.__setattr__(self, "decode", d)

    @property
    def m(self) -> int:
        return len(self.u)

    @property
    def n_y(self) -> int:
        return len(self.v)

    @property
    def rates(self) -> RatePair:
        return RatePair(math.log2(self.m) / self.n, math.log2(self.n_y) / self.n)

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.m) for j in range(self.n_y)]

    def with_decoder(self, decode: np.ndarray) -> "MultiUserCode":
        return MultiUserCode(self.n, self.u, self.v, self.nx, self.ny, decode)

    def to_json(self) -> dict:
        return {"n": self.n, "u": self.u.tolist(), "v": self.v.tolist()}


def parse_code(doc, nx: int, ny: int) -> MultiUserCode:
    if not isinstance(doc, dict):
        raise CodeFormatError("code: expected an object with n, u, v")
    for key in ("n", "u", "v"):
        if key not in doc:
            raise CodeFormatError(f"{key}: missing")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise CodeFormatError("n: expected a positive integer")
    return MultiUserCode(n, _words(doc["u"], nx, n, "u"), _words(doc["v"], ny, n, "v"), nx, ny)


def load_code(path, nx: int, ny: int) -> MultiUserCode:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CodeFormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_code(doc, nx, ny)


# ---------------------------------------------------------------- construction


def _type_counts(p, n: Optional[int]) -> np.ndarray:
    if isinstance(p, EmpiricalType):
        if n is not None and n != p.n:
            raise ValueError(f"type has length {p.n}, requested n={n}")
        return p.array
    if n is None:
        # an integer count table carries its own length
        arr = np.asarray(p)
        if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.integer) or np.any(arr < 0) or arr.sum() < 1:
            raise ValueError("block length n is required when p is a distribution")
        return arr.astype(np.int64)
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 2 or np.any(arr < 0) or abs(arr.sum() - 1) > 1e-9:
        raise ValueError("p must be a joint distribution on X x Y")
    scaled = arr * n
    counts = np.rint(scaled)
    if np.abs(scaled - counts).max() > 1e-9:
        raise ValueError(f"p is not a joint type at length {n}: n*p is not integral")
    return counts.astype(np.int64)


def _type_class(counts: np.ndarray, n: int) -> np.ndarray:
    """All sequences with the given symbol counts, lexicographic."""
    size = type_class_size(counts)
    if size > CLASS_LIMIT:
        raise ConstructionError(f"type class has {size} members, above the limit {CLASS_LIMIT}")
    out = []

    def rec(prefix, left):
        if len(prefix) == n:
            out.append(prefix)
            return
        for s, c in enumerate(left):
            if c:
                left[s] -= 1
                rec(prefix + [s], left)
                left[s] += 1

    rec([], [int(c) for c in counts])
    return np.array(out, dtype=np.int64)


def _compatible(cands: np.ndarray, other: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rows of cands (x-words) whose joint type with the y-word `other` equals target."""
    codes = cands * target.shape[1] + other[None, :]
    size = target.size
    counts = np.zeros((len(cands), size), dtype=np.int64)
    for s in range(size):
        counts[:, s] = (codes == s).sum(axis=1)
    return np.all(counts == target.ravel()[None, :], axis=1)


def constant_composition_code(p, n: Optional[int], m: int, n_codewords: int, seed: int = 0) -> MultiUserCode:
    """Distinct codewords u_1..u_M, v_1..v_N with every pair (u_i, v_j) of joint type p.

    The pair constraint is a biclique in the compatibility graph between the two
    marginal type classes. Seeded greedy: draw v_1, keep the u compatible with it,
    then repeatedly add the v that keeps the most of them; restart on failure.
    """
    counts = _type_counts(p, n)
    n = int(counts.sum())
    nx, ny = counts.shape
    if m < 1 or n_codewords < 1:
        raise ValueError("codebook sizes must be positive")
    ua = _type_class(counts.sum(axis=1), n)
    vb = _type_class(counts.sum(axis=0), n)
    if len(ua) < m or len(vb) < n_codewords:
        raise ConstructionError(
            f"type classes hold {len(ua)} x-words and {len(vb)} y-words, need {m} and {n_codewords}"
        )
    rng = np.random.default_rng(seed)
    for _ in range(RESTARTS):
        order = rng.permutation(len(vb))
        chosen = [int(order[0])]
        alive = _compatible(ua, vb[order[0]], counts)
        for _ in range(n_codewords - 1):
            best, best_keep = -1, None
            for b in order:
                if b in chosen:
                    continue
                keep = alive & _compatible(ua, vb[b], counts)
                if best_keep is None or keep.sum() > best_keep.sum():
                    best, best_keep = int(b), keep
            chosen.append(best)
            alive = best_keep
            if alive.sum() < m:
                break
        if len(chosen) == n_codewords and alive.sum() >= m:
            pick = rng.choice(np.flatnonzero(alive), size=m, replace=False)
            return MultiUserCode(n, ua[pick], vb[chosen], nx, ny)
    raise ConstructionError(f"no code with M={m}, N={n_codewords} found in joint type {counts.tolist()}")


# ---------------------------------------------------------------- decoding


def _guard(nz: int, n: int) -> int:
    size = nz**n
    if size > DECODE_GUARD:
        raise ValueError(f"|Z|^n = {nz}^{n} exceeds the enumeration guard {DECODE_GUARD}")
    return size


def _loglik(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lw = np.log2(w)
    out = np.zeros(1)
    for a, b in zip(x, y):
        out = (out[:, None] + lw[a, b][None, :]).ravel()
    return out


def _likelihood(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.ones(1)
    for a, b in zip(x, y):
        out = (out[:, None] * w[a, b][None, :]).ravel()
    return out


def _check_alphabets(w: Mac, code: MultiUserCode) -> None:
    if (w.nx, w.ny) != (code.nx, code.ny):
        raise ValueError(f"code alphabets {code.nx}x{code.ny} do not match channel {w.nx}x{w.ny}")


def ml_decode(w: Mac, u, v) -> np.ndarray:
    """Maximum-likelihood decode table over Z^n; ties go to the smallest (i, j)."""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    n = u.shape[1]
    _guard(w.nz, n)
    best = None
    table = None
    nv = len(v)
    for i in range(len(u)):
        for j in range(nv):
            ll = _loglik(w.w, u[i], v[j])
            if best is None:
                best = ll
                table = np.zeros(ll.size, dtype=np.int64)
                continue
            better = ll > best + TIE_TOL
            best = np.where(better, ll, best)
            table[better] = i * nv + j
    return table


@dataclass(frozen=True, eq=False)
class CodeStats:
    per_pair_error: np.ndarray
    max_error: float
    avg_error: float

    def to_json(self) -> dict:
        return {"per_pair_error": self.per_pair_error.tolist(), "max_error": self.max_error,
                "avg_error": self.avg_error}


def error_probabilities(w: Mac, code: MultiUserCode) -> CodeStats:
    """Exact per-pair error 1 - W^n(D_ij | u_i, v_j) by enumeration of Z^n."""
    _check_alphabets(w, code)
    _guard(w.nz, code.n)
    decode = code.decode if code.decode is not None else ml_decode(w, code.u, code.v)
    if decode.size != w.nz**code.n:
        raise ValueError(f"decode table has {decode.size} entries, expected {w.nz ** code.n}")
    err = np.zeros((code.m, code.n_y))
    for i in range(code.m):
        for j in range(code.n_y):
            like = _likelihood(w.w, code.u[i], code.v[j])
            err[i, j] = 1.0 - like[decode == i * code.n_y + j].sum()
    err = np.clip(err, 0.0, 1.0)
    err.setflags(write=False)
    return CodeStats(err, float(err.max()), float(err.mean()))


# ---------------------------------------------------------------- subcodes


@dataclass(frozen=True)
class DominantType:
    type: EmpiricalType
    pairs: tuple
    threshold: float

    @property
    def size(self) -> int:
        return len(self.pairs)


def dominance_threshold(m: int, n_codewords: int, n: int, nx: int, ny: int, lam: float) -> float:
    return m * n_codewords * (1 - 2 * lam / (1 + lam)) / (n + 1) ** (nx * ny)


def pair_type(code: MultiUserCode, i: int, j: int) -> EmpiricalType:
    return joint_type(code.u[i], code.v[j], code.nx, code.ny)


def dominant_type(code: MultiUserCode, stats: CodeStats, lam: float) -> Optional[DominantType]:
    """The joint type with the most pairs decoded correctly w.p. >= (1-lam)/2, if it is large enough."""
    if not 0 <= lam < 1:
        raise ValueError("error level must lie in [0, 1)")
    good = 1.0 - stats.per_pair_error >= (1 - lam) / 2 - 1e-12
    groups: dict[tuple, list] = {}
    for i, j in code.pairs():
        if good[i, j]:
            groups.setdefault(pair_type(code, i, j).counts, []).append((i, j))
    if not groups:
        return None
    # most pairs first, then the lexicographically smallest count table
    key = min(groups, key=lambda c: (-len(groups[c]), c))
    thr = dominance_threshold(code.m, code.n_y, code.n, code.nx, code.ny, lam)
    if len(groups[key]) < thr:
        return None
    return DominantType(EmpiricalType(key, code.n), tuple(groups[key]), thr)


def _pair_list(pairs) -> list[tuple[int, int]]:
    if isinstance(pairs, DominantType):
        pairs = pairs.pairs
    out = [(int(i), int(j)) for i, j in pairs]
    if not out:
        raise ValueError("pair set is empty")
    return out


@dataclass(frozen=True, eq=False)
class FanoDistribution:
    """Uniform distribution on a list of codeword pairs (x_k, y_k)."""

    x: np.ndarray
    y: np.ndarray
    nx: int
    ny: int

    @property
    def size(self) -> int:
        return len(self.x)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def letter_joint(self, t: int) -> np.ndarray:
        """Distribution of (X_t, Y_t), 0-based position."""
        counts = np.bincount(self.x[:, t] * self.ny + self.y[:, t], minlength=self.nx * self.ny)
        return counts.reshape(self.nx, self.ny) / self.size

    def average_joint(self) -> np.ndarray:
        return sum(self.letter_joint(t) for t in range(self.n)) / self.n

    def letter_informations(self) -> np.ndarray:
        return np.array([mutual_information(self.letter_joint(t)) for t in range(self.n)])

    def mutual_information(self) -> float:
        """I(X^n ^ Y^n) on the sparse support."""
        _, xi = np.unique(self.x, axis=0, return_inverse=True)
        _, yi = np.unique(self.y, axis=0, return_inverse=True)
        joint = np.zeros((xi.max() + 1, yi.max() + 1))
        np.add.at(joint, (xi.ravel(), yi.ravel()), 1.0)
        return mutual_information(joint / self.size)


def fano_distribution(code: MultiUserCode, pairs) -> FanoDistribution:
    pl = _pair_list(pairs)
    idx_u = np.array([i for i, _ in pl])
    idx_v = np.array([j for _, j in pl])
    return FanoDistribution(code.u[idx_u], code.v[idx_v], code.nx, code.ny)


def lemma1_rhs(n: int, nx: int, ny: int, lam: float) -> float:
    """-log2(1 - 2 lam/(1+lam)) + |X||Y| log2(n+1); the default wringing budget sigma."""
    if not 0 <= lam < 1:
        raise ValueError("error level must lie in [0, 1)")
    return -math.log2(1 - 2 * lam / (1 + lam)) + nx * ny * math.log2(n + 1)


@dataclass(frozen=True)
class Lemma1Report:
    lhs: float
    rhs: float
    passed: bool


def lemma1_check(code: MultiUserCode, pairs, lam: float) -> Lemma1Report:
    lhs = fano_distribution(code, pairs).mutual_information()
    rhs = lemma1_rhs(code.n, code.nx, code.ny, lam)
    return Lemma1Report(lhs, rhs, bool(lhs <= rhs + 1e-9))


@dataclass(frozen=True)
class WringingResult:
    coords: tuple  # (t, x, y) with t 1-based
    k: int
    subcode_indices: tuple
    retained_fraction: float
    delta: float
    sigma: float
    cap: int
    cap_hit: bool
    floor: float
    floor_ok: bool
    max_information: float

    @property
    def flagged(self) -> bool:
        return self.cap_hit or not self.floor_ok

    def to_json(self) -> dict:
        return {
            "coords": [list(c) for c in self.coords],
            "k": self.k,
            "subcode_indices": [list(p) for p in self.subcode_indices],
            "retained_fraction": self.retained_fraction,
            "delta": self.delta,
            "sigma": self.sigma,
            "cap": self.cap,
            "cap_hit": self.cap_hit,
            "floor": self.floor,
            "floor_ok": self.floor_ok,
            "max_information": self.max_information,
        }


def wring(code: MultiUserCode, pairs, delta: Optional[float] = None, sigma: Optional[float] = None,
          lam: float = 0.1) -> WringingResult:
    """Greedy wringing: condition on the most dependent position until all I(X_t ^ Y_t) <= delta.

    Each step fixes position t (largest per-letter information, smallest t on
    ties) to its most probable symbol pair (row-major first on ties). The loop
    stops after ceil(2 sigma/delta) steps at most.
    """
    current = _pair_list(pairs)
    start = len(current)
    if delta is None:
        delta = code.n ** -0.5
    if sigma is None:
        sigma = lemma1_rhs(code.n, code.nx, code.ny, lam)
    if not 0 < delta < sigma:
        raise ValueError(f"need 0 < delta < sigma, got delta={delta}, sigma={sigma}")
    cap = math.ceil(2 * sigma / delta)
    coords = []
    cap_hit = False
    while True:
        fano = fano_distribution(code, current)
        info = fano.letter_informations()
        t = int(np.argmax(info))
        if info[t] <= delta:
            break
        if len(coords) >= 2 * sigma / delta:
            cap_hit = True
            break
        joint = fano.letter_joint(t)
        a, b = np.unravel_index(int(np.argmax(joint)), joint.shape)
        current = [(i, j) for i, j in current if code.u[i, t] == a and code.v[j, t] == b]
        coords.append((t + 1, int(a), int(b)))
    k = len(coords)
    floor = (delta / (code.nx * code.ny * (2 * sigma - delta))) ** k
    frac = len(current) / start
    return WringingResult(tuple(coords), k, tuple(current), frac, float(delta), float(sigma), cap,
                          cap_hit, float(floor), bool(frac >= floor), float(info.max()))


def independence_gap(code: MultiUserCode, pairs) -> float:
    """max_t || P(X_t, Y_t) - P(X_t) P(Y_t) ||_1 under the Fano distribution."""
    fano = fano_distribution(code, pairs)
    gap = 0.0
    for t in range(fano.n):
        j = fano.letter_joint(t)
        gap = max(gap, l1_distance(j, np.outer(j.sum(1), j.sum(0))))
    return gap


def pinsker_gap_bound(delta: float) -> float:
    """2 sqrt(delta in nats): L1 bound implied by I(X_t ^ Y_t) <= delta bits."""
    return 2 * math.sqrt(delta * math.log(2))


# ---------------------------------------------------------------- single-user bound


@dataclass(frozen=True)
class AugustinReport:
    log_m: float
    rhs: float
    information_sum: float
    passed: bool


def row_subcode(w: Mac, code: MultiUserCode, j: int, rows: Optional[Sequence[int]] = None):
    """Codewords u_i (i in rows) with the position-t channels W(.|., v_jt)."""
    rows = list(range(code.m)) if rows is None else list(rows)
    slices = np.stack([w.w[:, code.v[j, t], :] for t in range(code.n)])
    return code.u[rows], slices


def column_subcode(w: Mac, code: MultiUserCode, i: int, cols: Optional[Sequence[int]] = None):
    """Codewords v_j (j in cols) with the position-t channels W(.|u_it, .)."""
    cols = list(range(code.n_y)) if cols is None else list(cols)
    slices = np.stack([w.w[code.u[i, t], :, :] for t in range(code.n)])
    return code.v[cols], slices


def augustin_check(words, slices, lam: float) -> AugustinReport:
    """log2 M < sum_t I(X_t ^ Z_t) + 3/(1-lam) |X| sqrt(n) for a non-stationary single-user code."""
    if not 0 <= lam < 1:
        raise ValueError("error level must lie in [0, 1)")
    words = np.asarray(words, dtype=np.int64)
    slices = np.asarray(slices, dtype=float)
    mcount, n = words.shape
    kx = slices.shape[1]
    total = 0.0
    for t in range(n):
        px = np.bincount(words[:, t], minlength=kx) / mcount
        total += mutual_information(px[:, None] * slices[t])
    rhs = total + 3 / (1 - lam) * kx * math.sqrt(n)
    log_m = math.log2(mcount)
    return AugustinReport(log_m, rhs, total, bool(log_m < rhs))


# ---------------------------------------------------------------- converse and bound checks


@dataclass(frozen=True, eq=False)
class ConverseReport:
    hypothesis_met: bool
    rates: tuple
    eps: float
    inside: Optional[bool] = None
    slack: Optional[float] = None
    joint_type: Optional[list] = None
    pair_count: int = 0

    def to_json(self) -> dict:
        return {
            "hypothesis_met": self.hypothesis_met,
            "rates": list(self.rates),
            "eps": self.eps,
            "inside": self.inside,
            "slack": self.slack,
            "joint_type": self.joint_type,
            "pair_count": self.pair_count,
        }


def strong_converse_check(w: Mac, code: MultiUserCode, lam: float, stats: Optional[CodeStats] = None,
                          search: Optional[SearchOptions] = None, eps: Optional[float] = None) -> ConverseReport:
    """Are the code's rates inside the eps_n-inflated region of its dominant type?"""
    _check_alphabets(w, code)
    stats = stats or error_probabilities(w, code)
    rates = code.rates
    if eps is None:
        eps = epsilon_n(code.n, code.nx, code.ny, lam)
    dom = dominant_type(code, stats, lam)
    if dom is None:
        return ConverseReport(False, (rates.r1, rates.r2), eps)
    verdict = region_membership(w, dom.type.distribution, rates, eps, search)
    return ConverseReport(True, (rates.r1, rates.r2), eps, verdict.inside, verdict.slack,
                          dom.type.distribution.tolist(), dom.size)


@dataclass(frozen=True)
class SpherePackingCheck:
    max_error: float
    bound: float
    passed: bool


def sphere_packing_bound(n: int, exponent: float, delta: float) -> float:
    if math.isinf(exponent):
        return 0.0
    return 0.5 * 2.0 ** (-n * exponent * (1 + delta))


def sphere_packing_verify(w: Mac, code: MultiUserCode, r: RatePair, delta: float, e_sp: ExponentResult,
                          stats: Optional[CodeStats] = None) -> SpherePackingCheck:
    """P_e^m >= (1/2) 2^{-n E (1+delta)} for a code whose rates exceed r by delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    rates = code.rates
    if rates.r1 < r.r1 + delta - 1e-12 or rates.r2 < r.r2 + delta - 1e-12:
        raise PreconditionError(
            f"code rates ({rates.r1:.6g}, {rates.r2:.6g}) do not exceed ({r.r1:.6g}, {r.r2:.6g}) by {delta}"
        )
    stats = stats or error_probabilities(w, code)
    bound = sphere_packing_bound(code.n, e_sp.value, delta)
    return SpherePackingCheck(stats.max_error, bound, bool(stats.max_error >= bound - 1e-12))
