"""Finite-alphabet probability primitives.

Distributions are plain numpy arrays; the ``as_*`` constructors validate them
and return read-only float64 copies. Information quantities are in bits unless
``base`` says otherwise.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-12
RENORM_TOL = 1e-9


class AlphabetMismatch(ValueError):
    """Two objects that must share an alphabet (or shape) do not."""


class SymbolError(ValueError):
    """A sequence symbol lies outside its declared alphabet."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _normalize(arr: np.ndarray, axes: tuple[int, ...], what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: non-finite entry")
    if np.any(arr < 0):
        idx = tuple(int(i) for i in np.argwhere(arr < 0)[0])
        raise ValueError(f"{what}: negative entry at index {list(idx)}")
    sums = arr.sum(axis=axes, keepdims=True)
    dev = np.abs(sums - 1.0)
    if np.any(dev > RENORM_TOL):
        bad = np.argwhere(dev > RENORM_TOL)[0]
        raise ValueError(
            f"{what}: sum {float(sums[tuple(bad)]):.12g} at index {list(map(int, bad))} "
            f"deviates from 1 by more than {RENORM_TOL:g}"
        )
    if np.any(dev > 0):
        arr = arr / sums
    return arr


def as_distribution(probs: Iterable[float]) -> np.ndarray:
    """Validate a probability vector; small rounding (<= 1e-9) is renormalized."""
    arr = np.array(probs, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("distribution must be a nonempty 1-d vector")
    return _freeze(_normalize(arr, (0,), "distribution"))


def as_stochastic_matrix(rows) -> np.ndarray:
    """Validate a row-stochastic matrix (one distribution per input symbol)."""
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or 0 in arr.shape:
        raise ValueError("stochastic matrix must be a nonempty 2-d array")
    return _freeze(_normalize(arr, (1,), "stochastic matrix row"))


def as_joint(probs) -> np.ndarray:
    """Validate a joint distribution over the product of 2 to 4 alphabets."""
    arr = np.array(probs, dtype=float)
    if not 2 <= arr.ndim <= 4 or 0 in arr.shape:
        raise ValueError("joint distribution must have 2 to 4 nonempty axes")
    return _freeze(_normalize(arr, tuple(range(arr.ndim)), "joint distribution"))


def _log(x: np.ndarray, base: float) -> np.ndarray:
    return np.log(x) / math.log(base)


def entropy(p, base: float = 2.0) -> float:
    p = np.asarray(p, dtype=float).ravel()
    nz = p[p > 0]
    return float(max(0.0, -np.sum(nz * _log(nz, base))))


def kl_divergence(p, q, base: float = 2.0) -> float:
    """D(p||q); +inf when p puts mass where q does not."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise AlphabetMismatch(f"alphabet mismatch: {p.shape} vs {q.shape}")
    p = p.ravel()
    q = q.ravel()
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(max(0.0, np.sum(p[mask] * _log(p[mask] / q[mask], base))))


def conditional_kl(v, w, p, base: float = 2.0) -> float:
    """D(v||w|p) = sum_x p(x) D(v(.|x)||w(.|x)); rows with p(x)=0 contribute 0."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    p = np.asarray(p, dtype=float)
    if v.shape != w.shape:
        raise AlphabetMismatch(f"channel shapes differ: {v.shape} vs {w.shape}")
    if p.shape != v.shape[:-1]:
        raise AlphabetMismatch(f"input distribution shape {p.shape} does not match {v.shape[:-1]}")
    total = 0.0
    for idx in zip(*np.nonzero(p)):
        d = kl_divergence(v[idx], w[idx], base)
        if math.isinf(d):
            return math.inf
        total += p[idx] * d
    return total


def mutual_information(pxy, base: float = 2.0) -> float:
    """I(X;Y) = D(p_XY || p_X x p_Y) for a 2-axis joint."""
    pxy = np.asarray(pxy, dtype=float)
    if pxy.ndim != 2:
        raise ValueError("mutual_information expects a joint over exactly 2 alphabets")
    px = pxy.sum(1)
    py = pxy.sum(0)
    a, b = np.nonzero(pxy > 0)
    p = pxy[a, b]
    # logs of the marginals separately: their product can underflow
    val = np.sum(p * (np.log(p) - np.log(px[a]) - np.log(py[b]))) / math.log(base)
    return float(max(0.0, val))


def _axes(role, ndim: int) -> tuple[int, ...]:
    axes = (role,) if isinstance(role, (int, np.integer)) else tuple(role)
    if not axes:
        raise ValueError("empty axis role")
    for a in axes:
        if not 0 <= a < ndim:
            raise ValueError(f"axis {a} out of range for a {ndim}-axis joint")
    return tuple(int(a) for a in axes)


def conditional_mutual_information(joint, first, second, given, base: float = 2.0) -> float:
    """I(A;B|C) for axis roles of a joint; each role is an axis or a tuple of axes.

    Axes not named in any role are marginalized out.
    """
    joint = np.asarray(joint, dtype=float)
    a, b, c = (_axes(r, joint.ndim) for r in (first, second, given))
    named = a + b + c
    if len(set(named)) != len(named):
        raise ValueError(f"axis roles overlap: {a}, {b}, {c}")
    rest = tuple(i for i in range(joint.ndim) if i not in named)
    marg = joint.sum(axis=rest) if rest else joint
    # re-index the kept axes as (A..., B..., C...) then flatten each role
    kept = [i for i in range(joint.ndim) if i not in rest]
    order = [kept.index(i) for i in named]
    marg = np.transpose(marg, order)
    sa = int(np.prod([joint.shape[i] for i in a]))
    sb = int(np.prod([joint.shape[i] for i in b]))
    sc = int(np.prod([joint.shape[i] for i in c]))
    abc = marg.reshape(sa, sb, sc)
    total = 0.0
    for k in range(sc):
        pc = abc[:, :, k].sum()
        if pc > 0:
            total += pc * mutual_information(abc[:, :, k] / pc, base)
    return total


def l1_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise AlphabetMismatch(f"shape mismatch: {p.shape} vs {q.shape}")
    return float(np.abs(p - q).sum())


@dataclass(frozen=True)
class EmpiricalType:
    """Occurrence counts of a length-n sequence (or sequence pair)."""

    counts: tuple
    n: int

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if self.n < 1:
            raise ValueError("block length must be positive")
        if np.any(arr < 0) or int(arr.sum()) != self.n:
            raise ValueError(f"counts {self.counts} do not sum to n={self.n}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    @property
    def distribution(self) -> np.ndarray:
        return self.array / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape


def _nested(arr: np.ndarray):
    return tuple(_nested(a) for a in arr) if arr.ndim > 1 else tuple(int(v) for v in arr)


def _check_symbols(seq: np.ndarray, k: int, name: str) -> None:
    bad = (seq < 0) | (seq >= k)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SymbolError(f"{name}[{i}] = {int(seq[i])} outside alphabet of size {k}")


def empirical_type(seq: Sequence[int], k: int) -> EmpiricalType:
    """Type of a sequence over the alphabet {0, ..., k-1}."""
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("sequence must be nonempty and 1-d")
    _check_symbols(arr, k, "seq")
    return EmpiricalType(_nested(np.bincount(arr, minlength=k)), int(arr.size))


def joint_type(x: Sequence[int], y: Sequence[int], kx: int, ky: int) -> EmpiricalType:
    """Joint type of a sequence pair; counts have shape (kx, ky)."""
    xa = np.asarray(x, dtype=np.int64)
    ya = np.asarray(y, dtype=np.int64)
    if xa.shape != ya.shape:
        raise AlphabetMismatch(f"length mismatch: {xa.size} vs {ya.size}")
    if xa.ndim != 1 or xa.size == 0:
        raise ValueError("sequences must be nonempty and 1-d")
    _check_symbols(xa, kx, "x")
    _check_symbols(ya, ky, "y")
    counts = np.bincount(xa * ky + ya, minlength=kx * ky).reshape(kx, ky)
    return EmpiricalType(_nested(counts), int(xa.size))


def compositions(n: int, k: int):
    """All k-tuples of nonnegative integers summing to n, lexicographically descending."""
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in compositions(n - first, k - 1):
            yield (first,) + rest


def enumerate_types(n: int, k: int) -> list[EmpiricalType]:
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    return [EmpiricalType(c, n) for c in compositions(n, k)]


def simplex_grid(k: int, resolution: int) -> np.ndarray:
    """All points of the (k-1)-simplex with coordinates in (1/resolution)Z."""
    pts = np.array(list(compositions(resolution, k)), dtype=float)
    return pts / resolution


def type_class_size(counts) -> int:
    """Number of sequences with the given counts (multinomial coefficient)."""
    c = [int(v) for v in np.asarray(counts).ravel()]
    out = math.factorial(sum(c))
    for v in c:
        out //= math.factorial(v)
    return out


def product(px, py) -> np.ndarray:
    return np.outer(np.asarray(px, float), np.asarray(py, float))


def iter_sequences(k: int, n: int):
    """All sequences of length n over {0..k-1}, lexicographic."""
    return itertools.product(range(k), repeat=n)
