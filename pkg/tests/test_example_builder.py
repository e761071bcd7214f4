from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kantlab import example_builder as eb
from kantlab.grid_dynamics import Grid, h_value, phi_level
from kantlab.number_tower import PrimeTower, extend_tower, fast_growth_tower, is_prime

T5_11 = PrimeTower((5, 11))
T5_31_1489 = PrimeTower((5, 31, 1489))


def levels(tower, depth=None):
    return list(eb.build_refined_rotation(tower, depth))


def quasi_by_orbit_walk(perm):
    """1 + defect recomputed cell by cell from orbit counts along the orbit time to the image."""
    g = perm.grid
    return [h_value(g.cell(x), g.orbit_time(x, int(perm.image[x]))) for x in range(g.M)]


# ---------------------------------------------------------------- level 1


def test_tau_level1_m5():
    perm = eb.tau_level1(5)
    assert perm.tau.tolist() == [1, -1, 0, 1, -1]
    assert perm.image.tolist() == [1, 0, 2, 4, 3]


def test_tau_level1_m11():
    perm = eb.tau_level1(11)
    assert perm.tau.tolist() == [4, -1, -1, -1, -1, 0, 1, 1, 1, 1, -4]


def test_level1_quasi_cost_m11():
    _, ledger, report = eb.build_level1(PrimeTower.single(11))
    q = report.quasi_cost.values.tolist()
    assert [k + 1 for k, v in enumerate(q) if v == 2] == [2, 3, 4, 5, 7, 8, 9, 10]
    assert [k + 1 for k, v in enumerate(q) if v == -3] == [1, 11]
    assert [k + 1 for k, v in enumerate(q) if v == 1] == [6]
    assert ledger.singular_mass == Fraction(-8, 11)


@pytest.mark.parametrize("M1", [4, 9, 3, 15])
def test_tau_level1_rejects_bad_sizes(M1):
    with pytest.raises(eb.ConstructionError):
        eb.tau_level1(M1)


@pytest.mark.parametrize("M1", [p for p in range(5, 200) if is_prime(p)])
def test_level1_singular_mass_identity(M1):
    _, ledger, _ = eb.build_level1(PrimeTower.single(M1))
    assert eb.singular_mass(ledger) == -1 + Fraction(3, M1)


# ---------------------------------------------------------------- level 2 on (5, 11)


def test_level2_structure_on_minimal_pair():
    (p1, l1, _), (p2, l2, r2) = levels(T5_11)
    assert p2.M == 55 and p2.is_permutation()
    assert p2.respects_blocks(p1) and p2.avoids_middle() and p2.matches_shifts()
    assert len(l2.singular_cells) == 20
    # singular parent cell 1: one good subcell (k_2 = 5) on the left, none on the right, 10 singular
    row = l2.kind.reshape(5, 11)[0]
    assert np.flatnonzero(row == eb.GOOD).tolist() == [4]
    assert int((row == eb.SINGULAR).sum()) == 10
    assert l2.defect.values[4] == 0


def test_level2_defect_zero_on_good_subcells_of_singular_parents():
    (_, l1, _), (_, l2, _) = levels(T5_11)
    block = np.arange(55) // 11
    mask = (l2.kind == eb.GOOD) & np.isin(block, l1.singular_cells)
    assert mask.any()
    assert (l2.defect.values[mask] == 0).all()


def test_level2_singular_mass_exact():
    (_, _, _), (_, l2, _) = levels(T5_11)
    assert l2.singular_mass == Fraction(-4, 11)


@pytest.mark.parametrize("m2", [11, 31, 41, 61, 71, 101])
def test_level2_singular_mass_closed_form(m2):
    # frozen from exact evaluation: -1 + 3/M_1 + (M_1 - 3)/M_2 at M_1 = 5
    *_, (_, ledger, _) = levels(PrimeTower((5, m2)))
    assert ledger.singular_mass == Fraction(-2, 5) + Fraction(2, 5 * m2)
    assert abs(ledger.singular_mass + Fraction(2, 5)) * m2 == Fraction(2, 5)


def test_quasi_cost_agrees_with_orbit_walk():
    for tower in (PrimeTower.single(11), T5_11, PrimeTower((7, 43))):
        for perm, _, report in levels(tower):
            assert report.quasi_cost.values.tolist() == quasi_by_orbit_walk(perm)


def test_change_fraction_bound_on_good_parents():
    for tower in (T5_11, PrimeTower((5, 31)), T5_31_1489):
        for perm, _, report in levels(tower)[1:]:
            n = perm.level
            assert report.change_fraction <= Fraction(tower.M(n - 1), tower.m(n))


# ---------------------------------------------------------------- deeper levels and errors


def test_parent_side_failure_names_least_prime():
    with pytest.raises(eb.ConstructionError) as err:
        levels(PrimeTower((5, 11, 89)))
    assert err.value.level == 2
    assert err.value.minimal_prime == 31
    assert "least feasible m_2 is 31" in str(err.value)


def test_child_side_failure_names_least_prime():
    with pytest.raises(eb.ConstructionError) as err:
        levels(PrimeTower((5, 41, 739)))
    assert err.value.level == 3
    assert err.value.minimal_prime == 2789
    levels(PrimeTower((5, 41, 2789)))


def test_least_prime_is_least_by_scan():
    # every admissible prime between the failing one and the reported one fails too
    base = PrimeTower((5, 41))
    p = extend_tower(base).m(3)
    tried = 0
    while p < 2789:
        with pytest.raises(eb.ConstructionError):
            levels(PrimeTower((5, 41, p)))
        tried += 1
        p = extend_tower(base, p + 1).m(3)
    assert p == 2789 and tried >= 1


def test_minimal_towers():
    assert eb.minimal_tower(5, 3, "s3") == T5_31_1489
    assert eb.minimal_tower(5, 2, "s3") == T5_11
    assert eb.minimal_tower(5, 3, "s4") == PrimeTower((5, 11, 199))


def test_depth3_invariants_on_minimal_tower():
    out = levels(T5_31_1489)
    for (parent, _, _), (child, ledger, report) in zip(out, out[1:]):
        child.validate(parent)
        assert (report.quasi_cost.values - ledger.defect.values == 1).all()
        n = child.level
        assert len(ledger.singular_cells) <= 2 * T5_31_1489.M(n - 1) ** 2


def test_middle_block_is_fixed():
    for perm, ledger, _ in levels(T5_31_1489):
        mid = ledger.middle_cells
        assert (perm.tau[mid] == 0).all()


# ---------------------------------------------------------------- level totals, two routes


@pytest.mark.parametrize("tower", [T5_31_1489, PrimeTower((5, 71, 6959)), PrimeTower((5, 41, 2789))])
def test_implicit_totals_match_dense(tower):
    (_, _, _), (p2, l2, _), (p3, l3, _) = levels(tower)
    implicit = eb.implicit_level_totals(tower, 3, p2, l2)
    assert implicit.implicit
    assert implicit.n_singular == len(l3.singular_cells)
    assert implicit.n_good == len(l3.good_cells)
    assert implicit.n_middle == len(l3.middle_cells)
    assert implicit.singular_mass == l3.singular_mass


def test_buildup_profile_values():
    assert eb.buildup_profile(PrimeTower.single(5)) == [(Fraction(2, 5), Fraction(-2, 5))]
    prof = eb.buildup_profile(T5_11)
    assert prof[1] == (Fraction(20, 55), Fraction(-4, 11))
    for n, (measure, _) in enumerate(eb.buildup_profile(T5_31_1489), start=1):
        if n > 1:
            assert measure <= Fraction(2 * T5_31_1489.M(n - 1) ** 2, T5_31_1489.M(n))


def test_buildup_profile_on_fast_tower_level2():
    t = fast_growth_tower(5, 2)
    (m1, i1), (m2, i2) = eb.buildup_profile(t)
    assert m2 * 10 <= m1
    assert i2 == Fraction(-2, 5) + Fraction(2, 5 * t.m(2))


# ---------------------------------------------------------------- corrected potentials


def test_correct_phi_level1_is_uncorrected():
    t = PrimeTower.single(5)
    perm = eb.tau_level1(5)
    phi, psi = phi_level(t, 1)
    assert (phi.values + psi.values == 1).all()
    assert eb.correct_phi(t, 1, perm) == phi
    assert eb.correction_norm(t, 1, perm) == 0


def test_correct_phi_is_dual_feasible_on_three_graphs():
    t = T5_31_1489
    *_, (perm3, ledger3, _) = levels(t)
    g = Grid(t, 3)
    phi3, _ = phi_level(t, 3)
    for level in (1, 2):
        corrected = eb.correct_phi(t, level, perm3).values
        phi_l, _ = phi_level(t, level)
        psi = 1 - np.repeat(phi_l.values, g.M // t.M(level))
        src = np.arange(g.M)
        for img in (src, (src + g.P) % g.M, perm3.image):
            c = np.maximum(1 + phi3.values - phi3.values[img], 0)
            assert (corrected + psi[img] <= c).all()
        # no tau correction on the fixed middle block
        mid = ledger3.middle_cells
        over_shift = np.maximum(np.repeat(phi_l.values, g.M // t.M(level)) + psi[(src + g.P) % g.M]
                                - np.maximum(1 + phi3.values - phi3.values[(src + g.P) % g.M], 0), 0)
        lifted = np.repeat(phi_l.values, g.M // t.M(level))
        assert (lifted[mid] - over_shift[mid] == corrected[mid]).all()


def test_correction_norm_decreases_with_level():
    t = T5_31_1489
    *_, (perm3, _, _) = levels(t)
    norms = [eb.correction_norm(t, n, perm3) for n in (1, 2)]
    assert norms[0] > norms[1] > 0


# ---------------------------------------------------------------- concentrating family


def test_zigzag_family_level1():
    fam = eb.build_zigzag_family(PrimeTower.single(5))
    rep = fam.diagonal(1)
    assert rep.quasi_cost.values.tolist() == [0, 2, 1, 2, 0]
    # the inverse zig-zag; at M_1 = 5 the zig-zag is an involution
    assert rep.perm.tau.tolist() == [1, -1, 0, 1, -1]
    assert (rep.perm.image == eb.tau_level1(5).inverse().image).all()
    # negating the shift counts instead would send two cells onto the middle one
    assert not eb.IntervalPermutation.from_tau(PrimeTower.single(5), 1, np.array([-1, 1, 0, -1, 1])).is_permutation()
    prof = eb.concentration_profile(rep)
    assert prof.eta == Fraction(3, 5) and prof.peak == 2 and prof.residual == 0


def test_zigzag_diagonal_is_inverse_zigzag():
    t = PrimeTower((5, 31))
    z = eb.zigzag_level(t, 2)
    fam = eb.build_zigzag_family(t)
    inv = fam.diagonal(2).perm
    assert (z.image[inv.image] == np.arange(t.M(2))).all()
    assert (eb.zigzag_level(PrimeTower.single(5), 1).image == eb.tau_level1(5).image).all()


@pytest.mark.parametrize("tower", [PrimeTower((5, 11, 199)), PrimeTower((5, 31)), PrimeTower((7, 43))])
def test_zigzag_family_identities(tower):
    fam = eb.build_zigzag_family(tower)
    for (n, j), rep in fam.maps.items():
        assert rep.transport_cost == 1
        assert rep.perm.is_permutation()
        # each map moves a cell by less than one level-(n-1) cell
        assert rep.displacement < Fraction(1, tower.M(n - 1))
        if n < j:
            rep.perm.validate(fam.maps[(n, j - 1)].perm)
    for j in range(1, tower.depth + 1):
        prof = eb.concentration_profile(fam.diagonal(j))
        assert prof.eta <= Fraction(2 * tower.M(j - 1) + 1, tower.m(j))
        assert prof.residual == 0


def test_zigzag_identity_at_tightest_prime():
    # m_2 = 2 M_1 + 1 leaves no room to move: the level-2 zig-zag is the identity
    fam = eb.build_zigzag_family(T5_11)
    assert (fam.diagonal(2).perm.tau == 0).all()
    assert eb.concentration_profile(fam.diagonal(2)).eta == 1


def test_zigzag_eta_shrinks_on_growing_towers():
    etas = []
    for m2 in (31, 61, 101, 151):
        fam = eb.build_zigzag_family(PrimeTower((5, m2)))
        etas.append(eb.concentration_profile(fam.diagonal(2)).eta)
    assert etas == sorted(etas, reverse=True) and etas[-1] < etas[0]


def test_zigzag_too_small_prime_error():
    with pytest.raises(eb.ConstructionError) as err:
        eb.zigzag_level(PrimeTower((5, 11, 89)), 3)
    assert err.value.minimal_prime == 199


def test_build_report_json():
    *_, (_, _, report) = levels(T5_11)
    d = report.to_dict("x.csv")
    assert d == {"level": 2, "M_n": 55, "singular_mass": "-4/11", "change_fraction": "1/11",
                 "quasi_cost_csv_path": "x.csv"}


def test_tau_plan_cost_small_tower():
    *_, (p2, _, _) = levels(T5_11)
    assert eb.tau_plan_cost(p2) == Fraction(59, 55)


# ---------------------------------------------------------------- properties


small_towers = st.sampled_from([PrimeTower.single(5), PrimeTower.single(13), T5_11, PrimeTower((5, 31)),
                                PrimeTower((7, 43)), PrimeTower((5, 41))])


@settings(max_examples=25, deadline=None)
@given(small_towers, st.randoms(use_true_random=False))
def test_every_level_is_measure_preserving(tower, rnd):
    for perm, ledger, report in levels(tower):
        F = np.array([rnd.randint(-50, 50) for _ in range(perm.M)])
        assert F[perm.image].sum() == F.sum()
        assert (report.quasi_cost.values - ledger.defect.values == 1).all()
        assert perm.avoids_middle() and perm.is_permutation()


@settings(max_examples=25, deadline=None)
@given(small_towers)
def test_inverse_round_trip(tower):
    for perm, _, _ in levels(tower):
        inv = perm.inverse()
        assert (inv.image[perm.image] == np.arange(perm.M)).all()
        assert inv.matches_shifts()
        assert eb.IntervalPermutation.from_tau(tower, perm.level, perm.tau).image.tolist() == perm.image.tolist()


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([5, 7, 11, 13, 17, 19]))
def test_level1_zigzag_cost_and_displacement(M1):
    t = PrimeTower.single(M1)
    fam = eb.build_zigzag_family(t)
    assert fam.diagonal(1).transport_cost == 1
    assert fam.diagonal(1).displacement == Fraction((M1 - 3) // 2, M1)
