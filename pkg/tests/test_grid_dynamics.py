from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kantlab.grid_dynamics import (
    CellCapError,
    Grid,
    Region,
    StepFunction,
    floor_sum,
    h_value,
    inverse_step,
    orbit_balance,
    orbit_sum,
    orbit_sum_fast,
    oscillation_report,
    phi_at,
    phi_level,
    region_flags,
    shift_cells,
)
from kantlab.number_tower import PrimeTower, alpha, fast_growth_tower

T5 = PrimeTower((5,))
T11 = PrimeTower((11,))
T5_11 = PrimeTower((5, 11))
T5_11_89 = PrimeTower((5, 11, 89))


def rotation_phi(tower, level):
    """phi by rotating the exact point alpha_n around the circle, no modular shortcuts."""
    M = tower.M(level)
    a = alpha(tower, level)
    half_lo, half_hi = Fraction((M - 1) // 2, M), Fraction((M + 1) // 2, M)
    out = [None] * M
    x, acc = Fraction(0), 0
    for _ in range(M):
        cell = int(x * M)
        out[cell] = acc
        acc += 1 if x < half_lo else (-1 if x >= half_hi else 0)
        x = (x + a) % 1
    return out


@pytest.mark.parametrize("t, shift", [(5, 5), (9, -2), (23, 1)])
def test_shift_cells_level2_examples(t, shift):
    g = Grid(T5_11, 2)
    for f in (0, 17, 54):
        assert shift_cells(g.cell(f), t).flat == (f + shift) % 55


def test_orbit_balance_and_h_examples():
    g = Grid(T5, 1)
    for f in range(5):
        assert orbit_balance(g.cell(f), 0) == 1
        assert h_value(g.cell(f), 0) == 1
    # left cell counts +1, right cell -1
    assert orbit_balance(g.cell(0), 1) == 2
    assert orbit_balance(g.cell(3), 1) == 0
    # cost along one step: 0 from a left cell, 2 from a right cell
    assert h_value(g.cell(0), 1) == 0
    assert h_value(g.cell(3), 1) == 2


@pytest.mark.parametrize("tower, want", [(T5, [0, 1, 2, 2, 1]), (T11, [0, 1, 2, 3, 4, 5, 5, 4, 3, 2, 1])])
def test_phi_level1(tower, want):
    phi, psi = phi_level(tower, 1)
    assert phi.values.tolist() == want
    assert (psi.values == 1 - phi.values).all()


@pytest.mark.parametrize("tower, level", [(T5, 1), (T11, 1), (T5_11, 2), (T5_11_89, 3), (PrimeTower((7, 29)), 2)])
def test_phi_matches_exact_rotation(tower, level):
    phi, _ = phi_level(tower, level)
    assert phi.values.tolist() == rotation_phi(tower, level)


@pytest.mark.parametrize("tower, level, want", [(T5, 1, 4), (T5_11, 2, 32), (T11, 1, 10)])
def test_inverse_step(tower, level, want):
    q = inverse_step(tower, level)
    assert q == want
    assert q * tower.P(level) % tower.M(level) == tower.M(level) - 1


def test_region_flags_level1():
    flags = region_flags(Grid(T5, 1))
    assert flags.tolist() == [Region.L, Region.L, Region.MIDDLE, Region.R, Region.R]


def test_nested_indices_round_trip():
    g = Grid(T5_11_89, 3)
    for f in (0, 1, 88, 89, 4894, 2447):
        c = g.cell(f)
        assert g.cell_nested(c.nested).flat == f
    assert g.cell(0).nested == (1, 1, 1)
    assert Grid(T5_11, 2).cell(13).nested == (2, 3)


def test_oscillation_report_small_tower():
    rep = oscillation_report(T5_11, 2)
    assert rep["max_neighbor_delta"] <= 4 * 25
    phi, _ = phi_level(T5_11, 2)
    v = phi.values.tolist()
    assert rep["max_neighbor_delta"] == max(abs(v[f] - v[(f + 1) % 55]) for f in range(55))


def test_oscillation_half_rise_on_fast_tower():
    t = fast_growth_tower(5, 2)
    rep = oscillation_report(t, 2)
    assert rep["min_half_rise"] >= Fraction(t.m(2), 10) - 10 * 125 > 0


def test_cell_cap(monkeypatch):
    monkeypatch.setenv("KANTLAB_CELL_CAP", "50")
    with pytest.raises(CellCapError):
        phi_level(T5_11, 2)
    phi_level(T5, 1)


def test_step_function_csv_round_trip(tmp_path):
    phi, _ = phi_level(T5_11, 2)
    path = phi.to_csv(tmp_path / "phi.csv")
    back = StepFunction.from_csv(path, 2)
    assert back == phi
    header, first = path.read_text().splitlines()[:2]
    assert header == "flat_index,left_endpoint,value"
    assert first == "0,0/1,0/1"


def test_step_function_total():
    phi, _ = phi_level(T11, 1)
    assert phi.total() == Fraction(30, 11)


# ---------------------------------------------------------------- properties

towers = st.sampled_from([(T5, 1), (T11, 1), (T5_11, 2), (PrimeTower((7, 29)), 2), (T5_11_89, 3)])


@settings(max_examples=60, deadline=None)
@given(towers, st.data())
def test_shift_is_bijection_and_additive(tl, data):
    tower, level = tl
    g = Grid(tower, level)
    s = data.draw(st.integers(-3 * g.M, 3 * g.M))
    t = data.draw(st.integers(-3 * g.M, 3 * g.M))
    images = {shift_cells(g.cell(f), t).flat for f in range(g.M)}
    assert images == set(range(g.M))
    f = data.draw(st.integers(0, g.M - 1))
    assert shift_cells(shift_cells(g.cell(f), s), t) == shift_cells(g.cell(f), s + t)


@settings(max_examples=60, deadline=None)
@given(towers, st.data())
def test_orbit_sum_cocycle(tl, data):
    tower, level = tl
    g = Grid(tower, level)
    f = data.draw(st.integers(0, g.M - 1))
    a = data.draw(st.integers(-g.M, g.M))
    b = data.draw(st.integers(-g.M, g.M))
    i = g.cell(f)
    assert orbit_sum(i, a + b) == orbit_sum(i, a) + orbit_sum(shift_cells(i, a), b)
    assert orbit_balance(i, a + b) - orbit_balance(i, a) == orbit_sum(shift_cells(i, a), b)


@pytest.mark.parametrize("tower, level", [(T5, 1), (T11, 1), (T5_11, 2), (T5_11_89, 3)])
def test_full_orbit_returns_to_zero(tower, level):
    g = Grid(tower, level)
    for f in (0, g.mid, g.M - 1):
        assert orbit_sum(g.cell(f), g.M) == 0
    assert int((region_flags(g) == Region.L).sum()) == int((region_flags(g) == Region.R).sum()) == (g.M - 1) // 2


@settings(max_examples=60, deadline=None)
@given(towers, st.data())
def test_phi_difference_is_orbit_sum(tl, data):
    tower, level = tl
    g = Grid(tower, level)
    phi, _ = phi_level(tower, level)
    f = data.draw(st.integers(0, g.M - 1))
    k = data.draw(st.integers(-g.M, g.M))
    i = g.cell(f)
    j = shift_cells(i, k)
    assert phi.values[j.flat] - phi.values[f] == orbit_sum(i, k)
    assert h_value(i, k) == 1 + phi.values[f] - phi.values[j.flat]


@settings(max_examples=60, deadline=None)
@given(towers, st.data())
def test_fast_orbit_sum_matches_walk(tl, data):
    tower, level = tl
    g = Grid(tower, level)
    f = data.draw(st.integers(0, g.M - 1))
    t = data.draw(st.integers(0, g.M))
    assert orbit_sum_fast(g, f, t) == orbit_sum(g.cell(f), t)
    phi, _ = phi_level(tower, level)
    assert phi_at(g, f) == phi.values[f]


@given(st.integers(0, 60), st.integers(1, 40), st.integers(-80, 80), st.integers(-80, 80))
def test_floor_sum_brute_force(n, m, a, b):
    assert floor_sum(n, m, a, b) == sum((a * s + b) // m for s in range(n))


def test_phi_at_on_a_huge_level():
    # level 3 of the fast tower is far above any dense cap; phi_at stays exact
    t = fast_growth_tower(5, 3)
    g = Grid(t, 3)
    x = g.M // 3
    assert phi_at(g, x) - phi_at(g, 0) == orbit_sum_fast(g, 0, g.orbit_time(0, x))
    with pytest.raises(CellCapError):
        g.require_dense()

