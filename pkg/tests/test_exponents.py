import math

import numpy as np
import pytest

from macx.channel import RatePair, SearchOptions, capacity_membership, region_membership, validate_mac
from macx.exponents import (
    GapReport,
    compute_exponent,
    exponent_surface,
    finite_n_gap,
    haroutunian_exponent,
    sphere_packing_exponent,
    surface_csv,
)
from macx.oracle import exponent_grid_oracle
from macx.probability import conditional_kl
from macx.results import ExponentResult
from macx.suite import adder_like, binary_adder, input_independent, random_channel, symmetric_noise, z_equals_x

# frozen after computing with exponent_grid_oracle at resolution 32
ADDER_LIKE_ZERO_RATE = 0.2435367296532876  # both methods agree at r=(0,0)
SYMMETRIC_SP_ZERO_RATE = 0.7369655941662062
RANDOM_ZERO_RATE = 0.15992550595697674


def divergence_of(res: ExponentResult, w) -> float:
    p = np.asarray(res.witness_p).ravel()
    return conditional_kl(res.witness_v.w.reshape(-1, w.nz), w.w.reshape(-1, w.nz), p)


# --- trivial regimes


@pytest.mark.parametrize("solver", [haroutunian_exponent, sphere_packing_exponent])
def test_outside_capacity_is_zero_with_w_witness(solver):
    w = adder_like()
    res = solver(w, RatePair(1.0, 1.0))
    assert res.value == 0.0
    assert res.witness_v is w or np.array_equal(res.witness_v.w, w.w)


@pytest.mark.parametrize("solver", [haroutunian_exponent, sphere_packing_exponent])
@pytest.mark.parametrize("r", [(0.0, 0.0), (0.1, 0.3), (0.5, 0.5)])
def test_input_independent_channel_is_zero(solver, r):
    assert solver(input_independent(), RatePair(*r)).value == 0.0


def test_noiseless_adder_inside_capacity_is_infinite():
    # no V other than W is absolutely continuous to a deterministic channel
    w = binary_adder()
    r = RatePair(0.25, 0.25)
    h = haroutunian_exponent(w, r)
    o = exponent_grid_oracle(w, r, "haroutunian", 32)
    assert h.value == math.inf and o.value == math.inf


# --- oracle agreement at derived points


def test_haroutunian_zero_rate_matches_oracle():
    res = haroutunian_exponent(adder_like(), RatePair(0, 0))
    assert res.value == pytest.approx(ADDER_LIKE_ZERO_RATE, abs=1e-2)


def test_sphere_packing_zero_rate_matches_oracle():
    w = symmetric_noise()
    oracle = exponent_grid_oracle(w, RatePair(0, 0), "sphere_packing", 32)
    assert oracle.value == pytest.approx(SYMMETRIC_SP_ZERO_RATE, abs=1e-12)
    res = sphere_packing_exponent(w, RatePair(0, 0))
    assert res.value == pytest.approx(SYMMETRIC_SP_ZERO_RATE, abs=1e-2)
    # at zero rates only boundary channels (empty pentagons) qualify
    assert res.diagnostics["boundary_witness"]


def test_random_channel_zero_rate_matches_oracle():
    res = sphere_packing_exponent(random_channel(), RatePair(0, 0))
    assert res.value == pytest.approx(RANDOM_ZERO_RATE, abs=1e-2)


def test_one_sided_zero_rate_close_to_oracle():
    w = random_channel()
    r = RatePair(0.0, 0.1)
    o = exponent_grid_oracle(w, r, "sphere_packing", 32)
    s = sphere_packing_exponent(w, r)
    assert abs(o.value - s.value) <= 1e-2


# --- witness validity


@pytest.mark.parametrize(
    "w,r",
    [(adder_like(), (0.25, 0.25)), (random_channel(), (0.1, 0.1)), (symmetric_noise(), (0.5, 0.5))],
)
def test_witness_reproduces_value(w, r):
    for solver in (haroutunian_exponent, sphere_packing_exponent):
        res = solver(w, RatePair(*r))
        assert res.value >= 0
        assert divergence_of(res, w) == pytest.approx(res.value, abs=1e-9)


def test_sphere_packing_witness_is_outside():
    w = random_channel()
    r = RatePair(0.1, 0.1)
    res = sphere_packing_exponent(w, r)
    assert res.converged
    assert not region_membership(res.witness_v, res.witness_p, r).inside


def test_haroutunian_witness_meets_one_constraint():
    from macx.channel import haroutunian_feasible

    w = adder_like()
    r = RatePair(0.25, 0.25)
    res = haroutunian_exponent(w, r)
    # tolerance: the returned V sits on a constraint boundary
    bumped = RatePair(0.25 + 1e-7, 0.25 + 1e-7)
    assert haroutunian_feasible(res.witness_v, res.witness_p, bumped)


# --- ordering and monotonicity


@pytest.mark.parametrize("w", [adder_like(), random_channel(), symmetric_noise()])
def test_product_ordering(w):
    r = RatePair(0.25, 0.25)
    h = haroutunian_exponent(w, r, product_only=True)
    s = sphere_packing_exponent(w, r, product_only=True)
    assert s.value >= h.value - 1e-6


def test_sphere_packing_never_exceeds_haroutunian():
    # C_V(P) sits inside the Haroutunian pentagon, so every sphere-packing
    # candidate V is Haroutunian-feasible
    w = random_channel()
    r = RatePair(0.1, 0.1)
    assert sphere_packing_exponent(w, r).value <= haroutunian_exponent(w, r).value + 1e-6


def test_rate_monotonicity_along_diagonal():
    w = random_channel()
    vals = [haroutunian_exponent(w, RatePair(a, a)).value for a in (0.0, 0.05, 0.1, 0.2, 0.3)]
    assert all(b <= a + 1e-3 for a, b in zip(vals, vals[1:]))


# --- surfaces


def test_surface_single_cell():
    rows = exponent_surface(adder_like(), [0.25], [0.25], "haroutunian")
    assert len(rows) == 1
    assert rows[0][2].value == pytest.approx(haroutunian_exponent(adder_like(), RatePair(0.25, 0.25)).value)


def test_surface_outside_cell_is_zero():
    rows = exponent_surface(z_equals_x(), [0.5], [0.0, 0.2], "haroutunian")
    assert rows[1][2].value == 0.0
    assert not capacity_membership(z_equals_x(), RatePair(0.5, 0.2)).inside


def test_surface_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        exponent_surface(adder_like(), [0.2, 0.1], [0.0], "haroutunian")


def test_noiseless_adder_surface_monotone():
    g = np.linspace(0, 1, 8)
    rows = exponent_surface(binary_adder(), g, g, "haroutunian")
    vals = np.array([res.value for _, _, res in rows]).reshape(8, 8)
    with np.errstate(invalid="ignore"):
        for axis in (0, 1):
            d = np.diff(vals, axis=axis)
            assert np.all((d <= 1e-3) | np.isnan(d))


def test_surface_threads_preserve_order():
    g = [0.0, 0.3, 0.6]
    a = surface_csv(exponent_surface(random_channel(), g, g, "haroutunian"), "haroutunian")
    b = surface_csv(exponent_surface(random_channel(), g, g, "haroutunian", threads=3), "haroutunian")
    assert a == b


def test_surface_csv_format():
    rows = exponent_surface(input_independent(), [0.1], [0.2], "haroutunian")
    text = surface_csv(rows, "haroutunian")
    assert text.splitlines() == ["r1,r2,value,method,converged", "0.1,0.2,0,haroutunian,true"]


def test_compute_exponent_dispatch():
    w = input_independent()
    assert compute_exponent(w, RatePair(0.1, 0.1), "grid_oracle", resolution=8).method == "grid_oracle"
    with pytest.raises(ValueError):
        compute_exponent(w, RatePair(0.1, 0.1), "nope")


def test_options_validation():
    with pytest.raises(ValueError):
        SearchOptions(tolerance=0.1)
    with pytest.raises(ValueError):
        SearchOptions(multistart_count=0)


# --- finite-length gap


def test_gap_with_zero_slack_equals_limit():
    w = random_channel()
    rep = finite_n_gap(w, np.full((2, 2), 0.25), RatePair(0.1, 0.1), [10, 100], eps_model=lambda n: 0.0)
    assert rep.alpha_n == (rep.alpha_star, rep.alpha_star)


def test_gap_decreases_with_vanishing_slack():
    w = random_channel()
    rep = finite_n_gap(w, np.full((2, 2), 0.25), RatePair(0.1, 0.1), [10, 100, 1000], eps_model=lambda n: 0.5 / n)
    gaps = rep.gaps
    assert all(g >= -1e-6 for g in gaps)
    assert all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.1


def test_gap_default_slack_is_infinite_at_small_n():
    # the default slack model exceeds log|X| at these lengths, so no V can
    # push the rates outside the inflated region
    rep = finite_n_gap(input_independent(), np.full((2, 2), 0.25), RatePair(0.1, 0.1), [10, 100])
    assert rep.alpha_star == 0.0
    assert rep.alpha_n == (math.inf, math.inf)


def test_gap_rejects_unsorted_lengths():
    with pytest.raises(ValueError):
        finite_n_gap(adder_like(), np.full((2, 2), 0.25), RatePair(0.1, 0.1), [100, 10])


def test_gap_report_json():
    rep = GapReport((10,), (0.5,), 0.25, (0.1,))
    assert rep.gaps == (0.25,)
    assert rep.to_json()["alpha_star"] == 0.25


def test_result_rejects_negative_value():
    w = adder_like()
    with pytest.raises(ValueError):
        ExponentResult(-1.0, np.full((2, 2), 0.25), w, "haroutunian")
    with pytest.raises(ValueError):
        ExponentResult(0.0, np.full((2, 2), 0.25), w, "other")


def test_mac_validate_used_for_witness():
    res = haroutunian_exponent(adder_like(), RatePair(0.1, 0.1))
    validate_mac(res.witness_v.w)
