import itertools
from math import gamma, pi, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srwcap.exceptions import NumericalError
from srwcap import green_kernel as gk
from srwcap.green_kernel import (asymptotic_coefficient, build_kernel_table, canonical_offsets,
                                 far_field_inverse, green, green_asymptotic, green_continuum,
                                 green_exact, green_quadrature)
from srwcap.lattice_walk import derive_stream
from srwcap.potential import green_origin_mc

# Watson's closed form for the simple cubic lattice
WATSON = sqrt(6) / (32 * pi ** 3) * gamma(1 / 24) * gamma(5 / 24) * gamma(7 / 24) * gamma(11 / 24)


def test_constants():
    assert asymptotic_coefficient(3) == pytest.approx(3 / (2 * pi), rel=1e-15)
    assert asymptotic_coefficient(4) == pytest.approx(2 / pi ** 2, rel=1e-15)
    assert far_field_inverse(4) == pytest.approx(pi ** 2 / 2, rel=1e-15)


def test_origin_d3_matches_watson():
    assert abs(green_exact(3, [0, 0, 0]) - WATSON) < 1e-9
    assert abs(green_exact(3, [0, 0, 0]) - 1.5163860592) < 1e-8


def test_neighbour_d3_by_harmonicity():
    assert abs(green_exact(3, [1, 0, 0]) - (green_exact(3, [0, 0, 0]) - 1)) < 1e-9


@pytest.mark.slow
def test_origin_d4_against_return_mc():
    g, se, _ = green_origin_mc(4, 10 ** 7, 1000, derive_stream(21, 0))
    assert abs(g - green_exact(4, [0, 0, 0, 0])) < 3 * se


def test_asymptotic_examples():
    assert green_asymptotic(3, [99, 0, 0]) == pytest.approx(3 / (2 * pi) / 100, rel=1e-12)
    assert green_asymptotic(3, [99, 0, 0]) == pytest.approx(4.7746e-3, abs=1e-7)
    assert green_asymptotic(4, [9, 0, 0, 0]) == pytest.approx(2.0264e-3, abs=1e-7)
    with pytest.raises(ValueError):
        green_asymptotic(3, [1, 0, 0], form="nope")


@pytest.mark.xfail(strict=True, reason="the (|x|+1)^{2-d} form has an O(1/|x|) relative "
                   "offset, about 3% at |x| = 30")
def test_shifted_asymptotic_within_half_percent_at_30():
    x = [30, 0, 0]
    exact = green_exact(3, x)
    assert abs(exact - green_asymptotic(3, x)) / exact < 5e-3


def test_corrected_asymptotic_within_half_percent_at_30():
    for x in ([30, 0, 0], [17, 17, 17], [25, 12, 3]):
        exact = green_exact(3, x)
        assert abs(exact - green_asymptotic(3, x, form="corrected")) / exact < 5e-3
        assert abs(exact - green_asymptotic(3, x, form="leading")) / exact < 5e-3


def test_hybrid_dispatch(kernel3, kernel4):
    for x in ([0, 0, 0], [3, -1, 2], [30, 30, -30], [0, 0, 7]):
        assert green(kernel3, x) == pytest.approx(green_exact(3, x), abs=1e-9)
    for x in ([31, 0, 0], [-40, 5, 2], [100, 100, 100]):
        assert green(kernel3, x) == pytest.approx(
            green_asymptotic(3, np.array(x), form="corrected"), rel=1e-14)
    assert green(kernel4, [2, 1, 0, 0]) == pytest.approx(green_exact(4, [2, 1, 0, 0]), abs=1e-9)
    assert green(kernel4, [21, 0, 0, 0]) == pytest.approx(
        green_asymptotic(4, np.array([21, 0, 0, 0]), form="corrected"), rel=1e-14)


def test_symmetry_exhaustive_d3(kernel3):
    box = np.array(list(itertools.product(range(-5, 6), repeat=3)))
    base = kernel3.values(box)
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            assert np.array_equal(kernel3.values(box[:, perm] * np.array(signs)), base)


@given(st.lists(st.integers(-60, 60), min_size=4, max_size=4), st.permutations(range(4)),
       st.lists(st.sampled_from([1, -1]), min_size=4, max_size=4))
def test_symmetry_property_d4(kernel4, x, perm, signs):
    x = np.array(x)
    assert kernel4(x) == kernel4(x[list(perm)] * np.array(signs))


@pytest.mark.parametrize("d", [3, 4])
def test_discrete_harmonicity(d, kernel3, kernel4):
    kernel = kernel3 if d == 3 else kernel4
    r = kernel.crossover
    pts = np.array(list(itertools.product(range(-(r - 1), r), repeat=d))) if d == 3 else \
        np.array(list(itertools.product(range(0, r), repeat=d)))
    lap = kernel.values(pts)
    for e in np.vstack([np.eye(d, dtype=int), -np.eye(d, dtype=int)]):
        lap = lap - kernel.values(pts + e) / (2 * d)
    delta = (np.abs(pts).sum(axis=1) == 0).astype(float)
    assert np.abs(lap - delta).max() < 1e-8


@pytest.mark.parametrize("d", [3, 4])
def test_axis_decay_and_sandwich(d, kernel3, kernel4):
    kernel = kernel3 if d == 3 else kernel4
    axis = np.zeros((kernel.crossover + 1, d), dtype=int)
    axis[:, 0] = np.arange(kernel.crossover + 1)
    vals = kernel.values(axis)
    assert np.all(vals > 0) and np.all(np.diff(vals) < 0)
    offsets = canonical_offsets(d, kernel.crossover)
    ratio = kernel.values(offsets) * (1 + offsets.max(axis=1)) ** (d - 2)
    assert 0 < ratio.min() <= ratio.max() < np.inf


def test_canonical_offset_count():
    brute = {tuple(sorted(map(abs, x), reverse=True))
             for x in itertools.product(range(-2, 3), repeat=3)}
    assert len(brute) == 10
    assert len(canonical_offsets(3, 2)) == len(brute)
    assert {tuple(o) for o in canonical_offsets(3, 2).tolist()} == brute


def test_small_table_and_rebuild(tmp_path, monkeypatch):
    monkeypatch.setenv("SRWCAP_CACHE_DIR", str(tmp_path))
    k1 = build_kernel_table(3, crossover=2, use_cache=False)
    k2 = build_kernel_table(3, crossover=2, use_cache=False)
    assert np.array_equal(k1.table, k2.table)
    assert k1.metadata["n_canonical"] == 10
    cached = build_kernel_table(3, crossover=2)
    again = build_kernel_table(3, crossover=2)
    assert (tmp_path / "green_d3_r2_q1.npz").exists()
    assert np.array_equal(cached.table, again.table) and np.array_equal(cached.table, k1.table)
    with pytest.raises(ValueError):
        build_kernel_table(3, crossover=1)


def test_matching_tolerance_recorded(kernel3, kernel4):
    assert kernel3.matching_tolerance < 1e-5
    assert kernel4.matching_tolerance < 1e-4


def test_quadrature_failure_is_numerical_error(monkeypatch):
    monkeypatch.setattr(gk, "_ABS_TOL", 0.0)
    with pytest.raises(NumericalError) as info:
        green_quadrature(3, [[0, 0, 0]])
    assert info.value.residual > 0


def test_continuum_green():
    assert green_continuum([0, 0, 0], [1, 0, 0]) == pytest.approx(1 / (2 * pi), rel=1e-15)
    assert green_continuum([0, 0, 0], [0, 2, 0]) == pytest.approx(1 / (4 * pi), rel=1e-15)
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=3), rng.normal(size=3)
    assert green_continuum(3.7 * x, 3.7 * y) == pytest.approx(green_continuum(x, y) / 3.7, rel=1e-13)
    with pytest.raises(ValueError):
        green_continuum([1, 1, 1], [1, 1, 1])
