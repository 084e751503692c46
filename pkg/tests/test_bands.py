import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaband.bands import (
    BandConstants,
    BandResult,
    GridS,
    build_grid,
    cap_bump,
    chi_square_distance,
    chi_square_monte_carlo,
    grid_band,
    grid_instance,
    max_separation,
    model_grid,
    separated_bump,
    testing_risk as band_test_risk,
    two_class_band,
)
from adaband.bands import _tested_separation
from adaband.estimation import exact_state
from adaband.holder import HolderBall
from adaband.estimation import rate
from adaband.models import Sample, draw, make_bump, uniform
from adaband.seeds import derive_seed
from adaband.wavelets import GridFunction

TWO = BandConstants(L=2.0, L_prime=1.0, kappa=0.5, C_L=1.4, k=1.9)
GRID = BandConstants(L=0.7, L0=1.5, M=4.0, C_L=1.4, k=0.9)


def test_chi_square_examples():
    assert chi_square_distance(2, 1, 1.0) == 0.5
    assert chi_square_distance(7, 11, 0.0) == 0.0
    assert chi_square_distance(4, 3, 0.2) == pytest.approx((1.04**3 - 1) / 4, rel=1e-14)
    with pytest.raises(ValueError):
        chi_square_distance(0, 1, 0.1)


def test_chi_square_monte_carlo_agrees(d4):
    mc, se = chi_square_monte_carlo(4, 3, 0.2, 20000, 1, d4)
    assert abs(mc - chi_square_distance(4, 3, 0.2)) < 3 * se


def test_build_grid_gaps():
    for n in (2**10, 2**13, 2**16):
        g = build_grid(0.5, 2.0, 3.5, n)
        gaps = np.diff(g.points)
        lo, hi = 3.5 / math.log(n), 7.0 / math.log(n)
        assert g.points[0] == 0.5 and g.points[-1] == 2.0
        assert np.all(gaps >= lo - 1e-12) and np.all(gaps <= hi + 1e-12)
    assert build_grid(0.5, 2.0, 3.5, 2**13).points == (0.5, 1.0, 1.5, 2.0)


def test_build_grid_rejects_infeasible_window():
    with pytest.raises(ValueError, match="too large"):
        build_grid(0.5, 0.6, 3.5, 2**13)
    with pytest.raises(ValueError):
        build_grid(1.0, 0.5, 1.0, 100)


def test_grid_rate_comparability():
    n = 2**13
    g = build_grid(0.5, 2.0, 3.5, n)
    worst = 0.0
    for lo, hi in zip(g.points, g.points[1:]):
        for s in np.linspace(lo, hi, 20, endpoint=False):
            worst = max(worst, rate(n, lo) / rate(n, s))
    assert 1.0 <= worst < 3.0


def _sample(model, n, i):
    return draw(model, n, derive_seed(77, i))


def test_two_class_width_dichotomy(d4):
    n = 2**13
    widths = {TWO.L * rate(n, 0.5), TWO.L * rate(n, 1.0)}
    for i, model in enumerate([uniform(d4), make_bump(1.0, 0.5, 2, basis=d4)]):
        band = two_class_band(_sample(model, n, i), 0.5, 1.0, 1.0, 0.1, TWO, d4)
        assert band.half_width in widths
        assert band.half_width <= TWO.L * rate(n, 0.5)
        assert band.selected_s in (0.5, 1.0)
        assert band.diameter == 2 * band.half_width
        j, stat, tau = band.test_values[0]
        assert (stat > tau) == (band.selected_s == 0.5)


def test_two_class_branches(d4):
    n = 2**13
    smooth = [two_class_band(_sample(uniform(d4), n, i), 0.5, 1.0, 1.0, 0.1, TWO, d4).selected_s for i in range(40)]
    rough = [two_class_band(_sample(make_bump(1.0, 0.5, 2, basis=d4), n, i), 0.5, 1.0, 1.0, 0.1, TWO, d4).selected_s for i in range(40)]
    assert np.mean(np.array(smooth) == 1.0) >= 0.9
    assert np.mean(np.array(rough) == 0.5) >= 0.9


def test_two_class_requires_order(d4):
    with pytest.raises(ValueError):
        two_class_band(_sample(uniform(d4), 100, 0), 1.0, 0.5, 1.0, 0.1, TWO, d4)


def test_dishonest_band_follows_lepski(d4):
    n = 2**13
    band = two_class_band(_sample(uniform(d4), n, 0), 0.5, 1.0, 1.0, 0.1, TWO, d4, dishonest=True)
    assert band.test_values == [] and band.selected_s == 1.0


def test_grid_band_uniform_selects_top(d4):
    n = 2**13
    g = build_grid(0.5, 2.0, 3.5, n)
    picks = [grid_band(_sample(uniform(d4), n, i), g, 2.25, GRID, d4) for i in range(30)]
    assert np.mean([b.selected_s == 2.0 for b in picks]) >= 0.9
    assert all(b.half_width == GRID.M * rate(n, b.selected_s) for b in picks)


def test_grid_band_first_rejection_wins(d4):
    n = 2**13
    g = build_grid(0.5, 2.0, 3.5, n)
    f = grid_instance(g, 0, 2.25, 0.0, n, d4)
    band = grid_band(_sample(f, n, 1), g, 2.25, GRID, d4)
    assert band.selected_s == 0.5
    assert len(band.test_values) == 1


def test_two_point_grid_matches_two_class(d4):
    n = 2**13
    g = GridS((0.5, 2.0), 3.5, n)
    grid_consts = BandConstants(L=0.5, M=1.0, C_L=1.4, k=1.0)
    two_consts = BandConstants(L=1.0, kappa=0.5, C_L=1.4, k=1.0)
    for i, model in enumerate([uniform(d4), make_bump(1.0, 0.5, 3, basis=d4)]):
        sample = _sample(model, n, i)
        a = grid_band(sample, g, 1.0, grid_consts, d4)
        b = two_class_band(sample, 0.5, 2.0, 1.0, 0.1, two_consts, d4)
        assert a.test_values == b.test_values
        assert a.selected_s == b.selected_s


def test_selector_monotone_on_noiseless_surrogate(d4):
    n = 2**13
    g = build_grid(0.5, 2.0, 3.5, n)
    chosen = []
    for eps in (0.0, 0.5, 1.0, 1.5, 2.0, 2.25):
        state = exact_state(make_bump(eps, 1.0, 3, basis=d4), n, 5)
        s_hat = g.R
        for i, j_i in enumerate((5, 4, 3)):
            if _tested_separation(state, j_i, HolderBall(g.points[i + 1], 2.25)) > 0:
                s_hat = g.points[i]
                break
        chosen.append(s_hat)
    assert all(a >= b for a, b in zip(chosen, chosen[1:]))


def test_enlarging_multiplier_increases_coverage_and_diameter(d4):
    n = 2**12
    f = make_bump(1.0, 1.0, 4, basis=d4)
    truth = None
    cov = {}
    for L in (0.5, 1.0, 2.0):
        consts = BandConstants(L=L, L_prime=1.0, kappa=0.5, C_L=1.4, k=1.9)
        hits, widths = 0, []
        for i in range(40):
            band = two_class_band(_sample(f, n, i), 0.5, 1.0, 1.0, 0.1, consts, d4)
            truth = model_grid(f, band.center.q) if truth is None else truth
            hits += band.contains(truth)
            widths.append(band.diameter)
        cov[L] = (hits, np.mean(widths))
    assert cov[0.5][0] <= cov[1.0][0] <= cov[2.0][0]
    assert cov[0.5][1] < cov[1.0][1] < cov[2.0][1]


def test_band_contains_is_sup_distance():
    center = GridFunction(np.zeros(8), 3)
    band = BandResult(center, 1.0, 1.0)
    assert band.contains(np.full(8, 1.0))
    assert not band.contains(np.r_[np.zeros(7), 1.0 + 1e-12])


def _fixed_band(center_values, hw):
    return lambda sample: BandResult(GridFunction(center_values, 8), hw, 1.0)


def test_testing_risk_degenerate_alternative_gives_one(d4):
    f0 = uniform(d4)
    proc = lambda sample: two_class_band(sample, 0.5, 1.0, 1.0, 0.1, TWO, d4, q=8)
    res = band_test_risk(proc, f0, [f0], 2**10, 30, seed=1)
    assert res.risk == pytest.approx(1.0)


def test_testing_risk_soundness(d4):
    f0 = uniform(d4)
    alt = make_bump(1.0, 0.5, 3, basis=d4)
    # band around f0 so narrow it excludes the alternative: Psi = 0 always
    res = band_test_risk(_fixed_band(np.ones(256), 1e-3), f0, [alt], 100, 5)
    assert res.type_one == 0 and res.type_two == 1
    # band wide enough for everything: Psi = 1 always
    res = band_test_risk(_fixed_band(np.ones(256), 10.0), f0, [alt], 100, 5)
    assert res.type_one == 1 and res.type_two == 0


def test_testing_risk_separated_alternatives_small(d4):
    f0 = uniform(d4)
    alts = [make_bump(1.0, 0.5, 2, m, d4) for m in (0, 2)]
    proc = lambda sample: two_class_band(sample, 0.5, 1.0, 1.0, 0.1, TWO, d4, q=8)
    res = band_test_risk(proc, f0, alts, 2**13, 40, seed=3)
    assert res.risk <= 0.25


def test_calibration_helpers(d4):
    cap = cap_bump(1.0, 1.0, 4, d4)
    assert cap.exact_coeffs.level(4).max() == pytest.approx(2.0**-6)
    sep, j = max_separation(0.5, 1.0, 1.0, range(2, 5), d4)
    f = separated_bump(0.5, 1.0, 1.0, sep, j, d4)
    assert f is not None and f.params["eps"] == pytest.approx(1.0)
    assert separated_bump(0.5, 1.0, 1.0, 2 * sep, j, d4) is None
    g = build_grid(0.5, 2.0, 3.5, 2**13)
    assert grid_instance(g, 3, 2.25, 1.0, 2**13, d4).kind == "uniform"
    assert grid_instance(g, 2, 2.25, 100.0, 2**13, d4) is None
