from __future__ import annotations

import math

import numpy as np
import pytest

from arwsim.chains import SleepRates, build_ball, build_interval
from arwsim.experiments import (
    TailEstimate,
    coupon_bound,
    density_probe,
    divisible_sandpile,
    divisible_sandpile_check,
    exit_sum_check,
    fill_lower_bound_probe,
    fill_tail,
    harmonic_table,
    hitting_frequency,
    hyperuniformity_probe,
    lower_exponent,
    mixing_profile,
    tail_bound,
    torus_mixing_budget,
    wired_tree_fill,
)
from arwsim.process import DrivingSequence


def test_coupon_bound():
    assert coupon_bound(100, 0.01) == 922
    assert coupon_bound(1, 0.5) == 1
    vals = [coupon_bound(50, e) for e in (0.01, 0.1, 0.3, 0.9)]
    assert vals == sorted(vals, reverse=True)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            coupon_bound(10, bad)


def test_torus_budget():
    # 100 + sqrt(2) * 100**(5/6) = 165.64...
    assert torus_mixing_budget(2, 10) == 166
    assert torus_mixing_budget(1, 100) == 122
    vals = [torus_mixing_budget(2, n) for n in range(2, 30)]
    assert vals == sorted(vals)


def test_tail_estimate_invariants():
    est = TailEstimate("c", "d", 10.0, 20, 3, 0)
    assert 0 <= est.ci[0] <= est.frequency <= est.ci[1] <= 1
    with pytest.raises(ValueError):
        TailEstimate("c", "d", 10.0, 5, 6, 0)


def test_fill_tail_threshold_below_size():
    c = build_ball(2, 4)
    est = fill_tail(c, DrivingSequence.uniform(1), alpha=0.5, coefficient=-1.0 * c.num_vertices**0.5, trials=50, seed=1)
    assert est.exceed == est.trials
    with pytest.raises(ValueError):
        fill_tail(c, DrivingSequence.uniform(1), 0.5, trials=0)
    with pytest.raises(ValueError):
        fill_tail(c, DrivingSequence.permutation(c.num_vertices, 1), 0.5, trials=5)


def test_fill_tail_reproducible():
    c = build_interval(20)
    a = fill_tail(c, DrivingSequence.central(c.origin()), 0.75, trials=300, seed=4)
    b = fill_tail(c, DrivingSequence.central(c.origin()), 0.75, trials=300, seed=4, workers=2)
    assert a.row() == b.row()


def test_fill_lower_b_zero():
    c = build_ball(2, 5)
    est = fill_lower_bound_probe(c, DrivingSequence.uniform(2), lower_exponent(2), b=0.0, trials=200, seed=2)
    assert est.frequency >= 0.5


def test_fill_lower_d1_positive():
    for r in (20, 40):
        c = build_interval(r)
        est = fill_lower_bound_probe(c, DrivingSequence.central(c.origin()), 0.5, 1.0, trials=300, seed=3)
        assert est.frequency >= 0.01


def test_tail_bound_values():
    assert tail_bound(1, 200, 0.75) == pytest.approx(math.exp(-(200**0.25) / 41))
    assert tail_bound(2, 30, 5 / 6) == pytest.approx(math.exp(-(30**0.25) / 5))
    assert lower_exponent(1) == 0.5 and lower_exponent(3) == pytest.approx(2 / 3)


def test_wired_tree_small():
    res = wired_tree_fill(1, trials=200, seed=1)
    assert res.times.min() >= 2
    res8 = wired_tree_fill(6, trials=60, seed=2)
    res4 = wired_tree_fill(4, trials=60, seed=2)
    assert np.median(res8.ratios) >= np.median(res4.ratios) - 0.1


def test_harmonic_interval():
    t = harmonic_table(build_interval(2))
    assert t.green[1, 1] == pytest.approx(2.0)
    assert t.hitting[:, 1].sum() == pytest.approx(2.0)
    assert np.allclose(np.diag(t.hitting), 1.0)


@pytest.mark.parametrize("r", [3, 5, 8])
def test_exit_time_is_r_squared(r):
    t = harmonic_table(build_interval(r))
    assert t.exit_times[build_interval(r).origin()] == pytest.approx(r * r, abs=1e-9)


def test_harmonic_identities_d2():
    t = harmonic_table(build_ball(2, 10))
    g = t.green
    assert np.abs(g - g.T).max() < 1e-10
    assert np.abs(np.diag(g)[None, :] * t.hitting - g).max() < 1e-10
    assert np.abs(g.sum(axis=0) - t.exit_times).max() < 1e-10
    assert (g >= 0).all()
    assert t.index((0, 0)) == t.chain.origin()


def test_hitting_monte_carlo():
    c = build_ball(2, 10)
    t = harmonic_table(c)
    rng = np.random.default_rng(0)
    for _ in range(5):
        y, z = (int(x) for x in rng.integers(c.num_vertices, size=2))
        f = hitting_frequency(c, y, z, 100_000, 5)
        p = t.hitting[y, z]
        assert abs(f - p) <= 4 * math.sqrt(max(p * (1 - p), 1e-12) / 100_000)


def test_exit_sum_rows():
    rows = exit_sum_check(2, [4, 8])
    assert all(r.min_sum_ratio > 0 and r.max_green_ratio > 0 for r in rows)


def test_divisible_sandpile():
    m, odo, leaked, sweeps, ok = divisible_sandpile(2, 50.0, 8)
    assert ok and leaked == 0.0
    assert abs(m.sum() - 50.0) < 1e-9
    assert (odo >= 0).all() and m.max() <= 1 + 1e-12


def test_sandpile_check():
    rep = divisible_sandpile_check(2, 6, 5 / 6)
    assert rep.converged and rep.fills_ball
    assert rep.mass_error < 1e-9 and rep.min_odometer >= 0
    t = harmonic_table(build_ball(2, 6))
    o = t.chain.origin()
    assert rep.kappa_origin == pytest.approx(t.exit_times[o] / t.green[o, o])


def test_density_probe_extremes():
    assert [r.mean for r in density_probe(1, [3, 5], math.inf, 20, 1)] == [1.0, 1.0]
    assert [r.mean for r in density_probe(1, [3, 5], 0.0, 20, 1)] == [0.0, 0.0]
    rows = density_probe(1, [5, 10], 1.0, 200, 1)
    assert all(0 < r.mean < 1 and r.stderr > 0 for r in rows)


def test_hyperuniformity_extremes():
    rows, slope = hyperuniformity_probe([4, 8], math.inf, 30, 1)
    assert all(r.variance == 0 for r in rows) and math.isnan(slope)
    rows, slope = hyperuniformity_probe([8, 16, 32], 1.0, 200, 1)
    assert all(r.variance >= 0 and r.ci_low <= r.ci_high for r in rows)
    assert math.isfinite(slope)


def test_mixing_profile_shape():
    c = build_interval(2)
    rows = mixing_profile(c, SleepRates.constant(1.0, 3), DrivingSequence.central(1), [0, 4, 12], 20_000, 3)
    assert len(rows) == 3 * 8
    late = [r for r in rows if r.t == 12]
    assert all(r.tv < 0.03 for r in late)
    assert all(r.within_bound for r in rows)


def test_mixing_profile_projection_needed():
    c = build_ball(2, 3)
    with pytest.raises(ValueError):
        mixing_profile(c, SleepRates.constant(1.0, 25), DrivingSequence.uniform(1), [5], 100, 1)
    rows = mixing_profile(c, SleepRates.constant(1.0, 25), DrivingSequence.uniform(1), [0, 200], 2000, 1,
                          projection=True)
    assert len(rows) == 4
