"""Acceptance criteria, each reported as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
terminal summary. A red criterion here is a finding, see README.
"""
import math
import time

import numpy as np
import pytest

from macx.channel import RatePair, capacity_membership
from macx.cli import main
from macx.codes import (
    augustin_check,
    column_subcode,
    constant_composition_code,
    dominant_type,
    error_probabilities,
    fano_distribution,
    independence_gap,
    lemma1_check,
    row_subcode,
    sphere_packing_verify,
    wring,
)
from macx.exponents import finite_n_gap, haroutunian_exponent, sphere_packing_exponent
from macx.oracle import exponent_grid_oracle
from macx.probability import mutual_information
from macx.suite import adder_like, binary_adder, suite, symmetric_noise

LINES: list[str] = []

SUITE_RATES = [(0.1, 0.1), (0.25, 0.25), (0.5, 0.5)]
METHODS = {"haroutunian": haroutunian_exponent, "sphere_packing": sphere_packing_exponent}


def report(k: int, passed: bool, detail: str) -> None:
    line = f"CRITERION {k}: {'PASS' if passed else 'FAIL'} ({detail})"
    LINES.append(line)
    print(line, flush=True)


def oracle_resolution(w) -> int:
    # the |Z| = 3 oracle at resolution 32 is too slow for a desk run
    return 32 if w.nz == 2 else 16


# --- shared fixtures


@pytest.fixture(scope="module")
def code_family():
    """Criterion 5 codes: (channel name, channel, code, target rates)."""
    chans = dict(suite())
    chans["binary_adder"] = binary_adder(0.0)
    chans["noisy_adder"] = binary_adder(0.1)
    designs = [
        (np.array([[1, 2], [1, 2]]), 4, (0.25, 0.25)),
        (np.array([[1, 1], [2, 2]]), 4, (0.25, 0.25)),
        (np.array([[1, 2], [1, 2]]), 2, (0.1, 0.1)),
    ]
    family = []
    for name, w in chans.items():
        for k, (counts, size, r) in enumerate(designs):
            code = constant_composition_code(counts, None, size, size, seed=k)
            family.append((name, w, code, r))
    return family


# --- criteria


def test_criterion_1_oracle_equivalence():
    t0 = time.time()
    worst = (0.0, None)
    misses = []
    for name, w in suite().items():
        for r in SUITE_RATES:
            rp = RatePair(*r)
            for method, solver in METHODS.items():
                o = exponent_grid_oracle(w, rp, method, 32).value
                s = solver(w, rp).value
                d = abs(o - s)
                if d > worst[0]:
                    worst = (d, (name, r, method))
                if not d <= 1e-2:
                    misses.append(f"{name} {r} {method}: oracle {o:.5f} solver {s:.5f}")
    ok = not misses
    detail = f"max |solver - oracle| = {worst[0]:.4f} at {worst[1]}, {time.time() - t0:.0f}s"
    if misses:
        detail += "; misses: " + "; ".join(misses)
    report(1, ok, detail)
    assert ok, detail


def test_criterion_2_zero_outside_capacity():
    grid = np.linspace(0, 1.2, 7)
    checked = 0
    bad = []
    for name, w in suite().items():
        for a in grid:
            for b in grid:
                r = RatePair(float(a), float(b))
                if capacity_membership(w, r).inside:
                    continue
                for method, solver in METHODS.items():
                    res = solver(w, r)
                    checked += 1
                    if not (res.value == 0.0 and np.array_equal(res.witness_v.w, w.w)):
                        bad.append(f"{name} {(a, b)} {method} -> {res.value}")
    ok = not bad and checked > 0
    detail = f"{checked} outside evaluations"
    if bad:
        detail += "; nonzero: " + "; ".join(bad[:5])
    report(2, ok, detail)
    assert ok, detail


def test_criterion_3_product_ordering():
    worst = math.inf
    bad = []
    for name, w in suite().items():
        for r in SUITE_RATES:
            rp = RatePair(*r)
            h = haroutunian_exponent(w, rp, product_only=True).value
            s = sphere_packing_exponent(w, rp, product_only=True).value
            margin = s - h
            worst = min(worst, margin)
            if not margin >= -1e-6:
                bad.append(f"{name} {r}: sp {s:.6g} < h {h:.6g}")
    ok = not bad
    detail = f"min(sp - h) = {worst:.3g} over 15 points"
    if bad:
        detail += "; " + "; ".join(bad)
    report(3, ok, detail)
    assert ok, detail


def _max_increase(vals: np.ndarray) -> float:
    finite = np.where(np.isinf(vals), 1e300, vals)
    return float(max(np.diff(finite, axis=0).max(), np.diff(finite, axis=1).max()))


def test_criterion_4_monotonicity():
    t0 = time.time()
    parts = []
    ok = True
    cases = [(adder_like(), "adder_like", np.linspace(0, 0.28, 8)), (binary_adder(), "binary_adder", np.linspace(0, 1, 8))]
    for w, name, g in cases:
        res = oracle_resolution(w)
        for method, solver in METHODS.items():
            orc = np.array([[exponent_grid_oracle(w, RatePair(a, b), method, res).value for b in g] for a in g])
            sol = np.array([[solver(w, RatePair(a, b)).value for b in g] for a in g])
            inc_o = _max_increase(orc)
            inc_s = _max_increase(sol)
            good = inc_o <= 0.0 and inc_s <= 1e-3
            ok &= good
            parts.append(f"{name}/{method}: oracle max increase {inc_o:.3g}, solver {inc_s:.3g}")
    detail = "; ".join(parts) + f", {time.time() - t0:.0f}s"
    report(4, ok, detail)
    assert ok, detail


def test_criterion_5_sphere_packing_bound(code_family):
    exps = {}
    failures = []
    passes = 0
    for name, w, code, r in code_family:
        key = (name, r)
        if key not in exps:
            exps[key] = exponent_grid_oracle(w, RatePair(*r), "sphere_packing", oracle_resolution(w))
        chk = sphere_packing_verify(w, code, RatePair(*r), 0.05, exps[key])
        if chk.passed:
            passes += 1
        else:
            failures.append(f"{name} {r} M={code.m}: P_e^m {chk.max_error:.4f} < bound {chk.bound:.4f}")
    ok = not failures and len(code_family) >= 20
    detail = f"{passes}/{len(code_family)} codes meet the bound at n=6"
    if failures:
        detail += "; violations: " + "; ".join(failures)
    report(5, ok, detail)
    assert ok, detail


def test_criterion_6_subcode_checks(code_family):
    counts = {"lemma1": 0, "wring": 0, "gap": 0, "augustin": 0, "fano": 0, "flagged": 0}
    bad = []
    for name, w, code, _ in code_family:
        stats = error_probabilities(w, code)
        lam = stats.avg_error
        dom = dominant_type(code, stats, lam)
        if dom is None:
            continue
        n = code.n
        rep = lemma1_check(code, dom, lam)
        counts["lemma1"] += 1
        if not rep.passed:
            bad.append(f"{name}: lemma1 {rep.lhs:.4f} > {rep.rhs:.4f}")
        fano = fano_distribution(code, dom)
        counts["fano"] += 1
        if np.abs(fano.average_joint() - dom.type.distribution).max() > 1e-12:
            bad.append(f"{name}: Fano marginal differs from the joint type")
        res = wring(code, dom, delta=n**-0.5, lam=lam)
        counts["wring"] += 1
        if res.k > res.cap:
            bad.append(f"{name}: wringing exceeded its cap")
        if res.flagged:
            counts["flagged"] += 1
        else:
            counts["gap"] += 1
            gap = independence_gap(code, res.subcode_indices)
            if gap > 2 * n**-0.25 + 1e-9:
                bad.append(f"{name}: independence gap {gap:.4f}")
        pairs = set(dom.pairs)
        for j in sorted({j for _, j in pairs}):
            rows = [i for i, jj in sorted(pairs) if jj == j]
            level = float(stats.per_pair_error[rows, j].max())
            words, slices = row_subcode(w, code, j, rows)
            counts["augustin"] += 1
            if level >= 1 or not augustin_check(words, slices, level).passed:
                bad.append(f"{name}: augustin row {j}")
        for i in sorted({i for i, _ in pairs}):
            cols = [j for ii, j in sorted(pairs) if ii == i]
            level = float(stats.per_pair_error[i, cols].max())
            words, slices = column_subcode(w, code, i, cols)
            counts["augustin"] += 1
            if level >= 1 or not augustin_check(words, slices, level).passed:
                bad.append(f"{name}: augustin column {i}")
    ok = not bad and counts["lemma1"] > 0
    detail = ", ".join(f"{k} {v}" for k, v in counts.items())
    if bad:
        detail += "; failures: " + "; ".join(bad[:5])
    report(6, ok, detail)
    assert ok, detail


def test_criterion_7_finite_length_convergence():
    p = np.full((2, 2), 0.25)
    r = RatePair(0.1, 0.1)
    parts = []
    ok = True
    for name, w in (("adder_like", adder_like()), ("symmetric_noise", symmetric_noise())):
        rep = finite_n_gap(w, p, r, [10, 100, 1000, 10000])
        a = rep.alpha_n
        nonincreasing = all(y <= x + 1e-9 for x, y in zip(a, a[1:]))
        above = all(x >= rep.alpha_star - 1e-9 for x in a)
        final = a[-1] - rep.alpha_star
        good = nonincreasing and above and final < 0.05
        ok &= good
        eps = ", ".join(f"{e:.3g}" for e in rep.eps_values)
        parts.append(f"{name}: alpha* {rep.alpha_star:.5f}, alpha_n {list(a)}, eps_n [{eps}], final gap {final}")
    detail = "; ".join(parts)
    report(7, ok, detail)
    assert ok, detail


def test_criterion_8_determinism(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"surface{k}.csv"
        code = main(["surface", "--channel", "builtin:random", "--r1", "0:0.3:4", "--r2", "0:0.3:4",
                     "--method", "sphere_packing", "--seed", "11", "--out", str(path)])
        assert code == 0
        outs.append(path.read_bytes())
    capsys.readouterr()
    identical = outs[0] == outs[1]
    # a sample of the frozen derived fixtures, recomputed by their oracles
    frozen = {
        "symmetric oracle res16 (0.1,0.1)": (
            exponent_grid_oracle(symmetric_noise(), RatePair(0.1, 0.1), "haroutunian", 16).value,
            0.13320621934649515,
        ),
        "adder_like oracle (0,0)": (
            exponent_grid_oracle(adder_like(), RatePair(0, 0), "haroutunian", 32).value,
            0.2435367296532876,
        ),
        "MI [[.4,.1],[.1,.4]]": (mutual_information(np.array([[0.4, 0.1], [0.1, 0.4]])), 0.2780719051126377),
    }
    drift = {k: abs(a - b) for k, (a, b) in frozen.items()}
    ok = identical and all(d <= 1e-12 for d in drift.values())
    detail = f"surface byte-identical: {identical}; fixture drift max {max(drift.values()):.2g}"
    report(8, ok, detail)
    assert ok, detail
