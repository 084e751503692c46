import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaband.wavelets import (
    DAUBECHIES_FILTERS,
    SUPPORTED_ORDERS,
    CoeffTree,
    GridFunction,
    analyze,
    build_basis,
    evaluate,
    gram_matrix,
    grid_points,
    sup_norm,
    synthesize,
)

SQ3 = math.sqrt(3.0)
D4_CLOSED_FORM = np.array([1 + SQ3, 3 + SQ3, 3 - SQ3, 1 - SQ3]) / (4 * math.sqrt(2.0))


def test_d4_filter_matches_closed_form():
    np.testing.assert_allclose(DAUBECHIES_FILTERS[2], D4_CLOSED_FORM, atol=1e-15)


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_filter_sum_and_orthogonality(order):
    h = np.asarray(DAUBECHIES_FILTERS[order])
    assert len(h) == 2 * order
    assert abs(h.sum() - math.sqrt(2)) < 1e-12
    assert abs(h @ h - 1) < 1e-12
    for shift in range(1, order):
        assert abs(h[2 * shift :] @ h[: -2 * shift]) < 1e-12


def test_table_length_and_support():
    b = build_basis(2, 8)
    assert b.support_len == 3
    assert b.phi_table.shape == (3 * 2**8 + 1,)
    assert b.phi_table[0] == 0 and b.phi_table[-1] == 0


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_partition_of_unity_every_order(order):
    b = build_basis(order, 8)
    step = 2**b.depth
    total = sum(b.phi_table[o * step : (o + 1) * step] for o in range(b.support_len))
    assert np.max(np.abs(total - 1)) < 1e-8
    assert abs(sum(float(b.phi(np.array([0.5 + k]))[0]) for k in range(b.support_len)) - 1) < 1e-8


def test_unsupported_order_names_supported():
    with pytest.raises(ValueError, match="supported"):
        build_basis(5)
    with pytest.raises(ValueError):
        build_basis(2, depth=4)


def test_refinement_consistency_is_exact():
    coarse, fine = build_basis(3, 8), build_basis(3, 9)
    assert np.array_equal(coarse.phi_table, fine.phi_table[::2])


def test_psi_moments(d8):
    t = np.arange(d8.psi_table.size) / 2.0**d8.depth
    h = 2.0**-d8.depth
    assert abs(np.trapezoid(d8.psi_table, dx=h)) < 1e-10
    assert abs(np.trapezoid(d8.psi_table * t, dx=h)) < 1e-6
    assert abs(np.trapezoid(d8.psi_table**2, dx=h) - 1) < 1e-4


def test_psi_energy_fine_table(d4):
    h = 2.0**-d4.depth
    assert abs(np.trapezoid(d4.psi_table**2, dx=h) - 1) < 1e-6


def test_gram_matrix_orthonormal(d4):
    g = gram_matrix(d4, 5, 17)
    assert np.max(np.abs(g - np.eye(32))) < 1e-5


def test_analyze_constant_has_no_details(d4):
    c = analyze(lambda x: np.ones_like(x), d4, 6)
    assert np.max(np.abs(c.flat()[4:])) < 1e-12
    np.testing.assert_allclose(c.alpha, 0.5, atol=1e-12)


def test_analyze_single_wavelet(d4):
    q = 10
    c = CoeffTree.zeros(d4.J0, 6).with_beta(4, 5, 1.0)
    g = synthesize(c, 6, q, d4)
    back = analyze(g, d4, 6)
    expected = np.zeros(64)
    expected[16 + 5] = 1.0
    np.testing.assert_allclose(back.flat(), expected, atol=1e-6)


def test_analyze_bump_coefficient(d4):
    # f = 1 + 0.1 2^{-3(0.5 + 1/2)} psi_{3,2}
    c = CoeffTree.zeros(d4.J0, 5).with_beta(3, 2, 0.1 * 2.0**-3)
    c = CoeffTree(c.J0, c.j_max, np.full(4, 0.5), c.beta)
    f = lambda x: evaluate(c, x, d4)
    got = analyze(f, d4, 5)
    assert abs(got.level(3)[2] - 0.0125) < 1e-10


def test_analyze_resolution_guard(d4):
    with pytest.raises(ValueError):
        analyze(GridFunction(np.ones(2**6), 6), d4, 5)


def test_synthesize_reproduces_constant(d4):
    c = analyze(lambda x: np.ones_like(x), d4, 5)
    for j in (3, 4, 5):
        np.testing.assert_allclose(synthesize(c, j, 9, d4).values, 1.0, atol=1e-6)


def test_synthesize_excludes_levels_at_and_above_j(d4):
    c = CoeffTree(d4.J0, 6, np.full(4, 0.5), CoeffTree.zeros(d4.J0, 6).beta).with_beta(4, 3, 1.0)
    np.testing.assert_allclose(synthesize(c, 4, 9, d4).values, 1.0, atol=1e-12)
    assert sup_norm(synthesize(c, 5, 9, d4) - synthesize(c, 4, 9, d4)) > 1


def test_synthesize_level_range(d4):
    c = CoeffTree.zeros(d4.J0, 5)
    with pytest.raises(ValueError):
        synthesize(c, 2, 8, d4)
    with pytest.raises(ValueError):
        synthesize(c, 6, 8, d4)


def test_sup_norm_examples(d4):
    assert sup_norm(GridFunction(np.zeros(8), 3)) == 0
    c = CoeffTree.zeros(d4.J0, 4).with_beta(3, 2, 1.0)
    q = 9
    f = synthesize(c, 4, q, d4)
    assert sup_norm(f - f) == 0
    dense = np.max(np.abs(evaluate(c, grid_points(q + 3), d4)))
    assert abs(sup_norm(f) - dense) < 0.02 * dense
    assert abs(dense - 2**1.5 * d4.psi_max) < 0.01 * dense


def test_coeff_tree_validates_level_sizes():
    with pytest.raises(ValueError):
        CoeffTree(2, 4, np.zeros(4), (np.zeros(4), np.zeros(7)))
    with pytest.raises(ValueError):
        GridFunction(np.zeros(5), 3)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=16, max_size=16))
def test_round_trip_in_span(d4, coeffs):
    c = CoeffTree.from_flat(np.asarray(coeffs), d4.J0, 4)
    g = synthesize(c, 4, 8, d4)
    back = analyze(g, d4, 4)
    np.testing.assert_allclose(back.flat(), c.flat(), atol=1e-8)
    np.testing.assert_allclose(synthesize(back, 4, 8, d4).values, g.values, atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_idempotence(d4, seed):
    rng = np.random.default_rng(seed)
    c = CoeffTree.from_flat(rng.normal(size=32), d4.J0, 5)
    back = analyze(synthesize(c, 4, 9, d4), d4, 4)
    np.testing.assert_allclose(back.flat(), c.flat()[:16], atol=1e-8)
