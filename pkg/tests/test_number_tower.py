import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kantlab.number_tower import (
    PrimeTower,
    TowerError,
    alpha,
    alternating_residue,
    circle_add,
    circle_dist,
    crt_solve,
    extend_tower,
    fast_growth_tower,
    grow_tower,
    is_prime,
    next_prime_in_progression,
)


def _sieve(n):
    flags = [True] * (n + 1)
    flags[0] = flags[1] = False
    for p in range(2, int(n**0.5) + 1):
        if flags[p]:
            flags[p * p :: p] = [False] * len(flags[p * p :: p])
    return flags


def test_is_prime_matches_sieve():
    flags = _sieve(20000)
    assert [n for n in range(20001) if is_prime(n)] == [n for n, f in enumerate(flags) if f]


def test_is_prime_strong_pseudoprimes():
    # composites that fool small-base Miller-Rabin
    for n in (2047, 1373653, 25326001, 3215031751, 2152302898747, 3474749660383, 341550071728321,
              3825123056546413051, 318665857834031151167461):
        assert not is_prime(n)
    assert is_prime(2**61 - 1)
    assert is_prime(2**89 - 1)


@pytest.mark.parametrize("residues, want", [([(0, 5)], 0), ([(4, 5), (1, 11)], 34), ([(1, 5)], 1)])
def test_crt_solve_examples(residues, want):
    assert crt_solve(residues) == want


def test_crt_solve_brute_force_oracle():
    # scan 0..54 for the pair (x = -1 mod 5, x = 1 mod 11)
    scan = [x for x in range(55) if x % 5 == 4 and x % 11 == 1]
    assert crt_solve([(-1 % 5, 5), (1, 11)]) == scan[0]


def test_crt_solve_rejects_common_factor():
    with pytest.raises(TowerError):
        crt_solve([(1, 6), (1, 4)])


@pytest.mark.parametrize("args, want", [((1, 5, 7), 11), ((34, 55, 0), 89), ((1, 2, 3), 3)])
def test_next_prime_in_progression(args, want):
    assert next_prime_in_progression(*args) == want


def test_next_prime_in_progression_scan_oracle():
    for r, q, lo in [(1, 5, 7), (34, 55, 0), (3, 7, 100), (1, 11, 12)]:
        n = lo
        while not (n % q == r % q and all(n % d for d in range(2, int(n**0.5) + 1)) and n > 1):
            n += 1
        assert next_prime_in_progression(r, q, lo) == n


def test_next_prime_rejects_non_coprime_residue():
    with pytest.raises(TowerError):
        next_prime_in_progression(5, 10, 0)


def test_extend_tower_examples():
    t1 = PrimeTower.single(5)
    t2 = extend_tower(t1)
    t3 = extend_tower(t2)
    assert t2.primes == (5, 11)
    assert t3.primes == (5, 11, 89)
    assert Fraction(t3.P(3), t3.M(3)) == Fraction(1069, 4895)
    assert math.gcd(t3.P(3), t3.M(3)) == 1


def test_extend_tower_is_least_admissible_prime():
    # search oracle: scan every integer above m_2 for the congruences
    t = PrimeTower((5, 11))
    n = 12
    while not (is_prime(n) and n % 11 == 1 and n % 5 == 4):
        n += 1
    assert extend_tower(t).m(3) == n


def test_extend_tower_respects_floor():
    t = extend_tower(PrimeTower.single(5), 100)
    assert t.m(2) >= 100 and t.m(2) % 5 == 1
    assert t.m(2) == next_prime_in_progression(1, 5, 100)


@pytest.mark.parametrize("level, want", [(1, Fraction(1, 5)), (2, Fraction(12, 55)), (3, Fraction(1069, 4895))])
def test_alpha(level, want):
    assert alpha(PrimeTower((5, 11, 89)), level) == want


def test_alpha_is_partial_sum_of_reciprocal_products():
    t = PrimeTower((5, 11, 89))
    for n in range(1, 4):
        assert alpha(t, n) == sum(Fraction(1, t.M(j)) for j in range(1, n + 1))


def test_circle_arithmetic():
    assert circle_add(Fraction(9, 10), Fraction(1, 5)) == Fraction(1, 10)
    assert circle_dist(Fraction(0), Fraction(9, 10)) == Fraction(1, 10)
    assert circle_dist(Fraction(3, 7), Fraction(3, 7)) == 0


@pytest.mark.parametrize("primes", [(4,), (9,), (3,), (5, 13), (5, 11, 67), (7, 11)])
def test_invalid_towers_rejected(primes):
    with pytest.raises(TowerError):
        PrimeTower(primes)


def test_level_bounds_and_json_round_trip():
    t = PrimeTower((5, 11, 89))
    assert t.M(0) == 1 and t.P(0) == 0
    with pytest.raises(TowerError):
        t.M(4)
    assert PrimeTower.from_json(t.to_json()) == t
    with pytest.raises(TowerError):
        PrimeTower.from_json("[5, 11]")


def test_grow_tower_and_fast_growth():
    assert grow_tower(5, 3).primes == (5, 11, 89)
    assert grow_tower(5, 1).primes == (5,)
    t = fast_growth_tower(5, 2)
    assert t.m(2) > 40 * 5**5
    assert t.m(2) == next_prime_in_progression(1, 5, 40 * 5**5 + 1) == 125101


def test_fast_growth_depth_three():
    t = fast_growth_tower(5, 3)
    assert t.m(3) > 40 * t.M(2) ** 5
    t.validate()


# ---------------------------------------------------------------- properties

tower_depth = st.integers(min_value=1, max_value=4)
first_prime = st.sampled_from([5, 7, 11, 13, 17, 19, 23])


@settings(max_examples=40, deadline=None)
@given(first_prime, tower_depth, st.integers(min_value=0, max_value=500))
def test_grown_towers_satisfy_congruences(m1, depth, floor):
    t = grow_tower(m1, depth, floor)
    for i in range(1, depth + 1):
        assert math.gcd(t.P(i), t.M(i)) == 1
        for j in range(i + 1, depth + 1):
            assert t.m(j) % t.m(i) == (1 if j == i + 1 else t.m(i) - 1)


@settings(max_examples=40, deadline=None)
@given(first_prime, st.integers(min_value=2, max_value=4))
def test_alternating_residue_pattern(m1, depth):
    t = grow_tower(m1, depth)
    for k in range(1, depth):
        want = t.m(k) - 1 if (depth - k) % 2 == 0 else 2
        assert alternating_residue(t, k, depth) == want


@given(st.lists(st.tuples(st.integers(0, 10**6), st.sampled_from([3, 5, 7, 11, 13, 17, 19])),
                min_size=1, max_size=4, unique_by=lambda rq: rq[1]))
def test_crt_solution_satisfies_all_congruences(pairs):
    x = crt_solve(pairs)
    assert 0 <= x < math.prod(q for _, q in pairs)
    for r, q in pairs:
        assert x % q == r % q


fractions = st.fractions(min_value=0, max_value=1).filter(lambda f: f < 1)


@given(fractions, fractions)
def test_circle_dist_symmetric_and_bounded(x, y):
    d = circle_dist(x, y)
    assert d == circle_dist(y, x)
    assert 0 <= d <= Fraction(1, 2)
    assert circle_dist(circle_add(x, y), y) == circle_dist(x, Fraction(0))
