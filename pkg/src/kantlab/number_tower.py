"""Exact number theory for the rotation towers.

A tower is a list of primes m_1, m_2, ... chosen so that the rational
rotation numbers alpha_n = 1/M_1 + 1/M_2 + ... + 1/M_n stay in lowest
terms, where M_n = m_1 * ... * m_n.  Each new prime is taken from the
residue class that is +1 modulo the previous prime and -1 modulo every
earlier one, which is what keeps gcd(P_n, M_n) = 1.

Everything here is pure integer / Fraction arithmetic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

__all__ = [
    "PrimeTower",
    "TowerError",
    "is_prime",
    "crt_solve",
    "next_prime_in_progression",
    "extend_tower",
    "alpha",
    "circle_add",
    "circle_dist",
    "alternating_residue",
    "grow_tower",
    "fast_growth_tower",
    "GROWTH_FACTOR",
    "GROWTH_POWER",
]

# m_n > 40 * M_{n-1}^5 is the explicit growth condition used for the second level.
GROWTH_FACTOR = 40
GROWTH_POWER = 5

# Miller-Rabin with these bases is deterministic below 3.3e24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_MR_DETERMINISTIC_LIMIT = 3_317_044_064_679_887_385_961_981
_MR_EXTRA_BASES = (43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97)


class TowerError(ValueError):
    """Raised for invalid towers or out-of-range levels."""


def is_prime(n: int) -> bool:
    """Miller-Rabin test; exact for n < 3.3e24, probable-prime above."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    bases = _MR_BASES if n < _MR_DETERMINISTIC_LIMIT else _MR_BASES + _MR_EXTRA_BASES
    for a in bases:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def crt_solve(residues: Sequence[tuple[int, int]]) -> int:
    """Smallest x >= 0 with x = r (mod q) for every (r, q) pair."""
    x, mod = 0, 1
    for r, q in residues:
        if q <= 0:
            raise TowerError(f"modulus must be positive, got {q}")
        if math.gcd(mod, q) != 1:
            raise TowerError(f"moduli not pairwise coprime (modulus {q})")
        # x + mod * t = r (mod q)
        t = ((r - x) * pow(mod, -1, q)) % q
        x += mod * t
        mod *= q
    return x % mod


def next_prime_in_progression(residue: int, modulus: int, lower_bound: int) -> int:
    """Smallest prime p >= lower_bound with p = residue (mod modulus)."""
    if modulus <= 0:
        raise TowerError("modulus must be positive")
    if math.gcd(residue, modulus) != 1:
        raise TowerError(f"gcd({residue}, {modulus}) != 1: progression holds at most one prime")
    start = max(lower_bound, 0)
    p = start + ((residue - start) % modulus)
    while not is_prime(p):
        p += modulus
    return p


@dataclass(frozen=True)
class PrimeTower:
    """Primes m_1..m_n with their products M_j and numerators P_j."""

    primes: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "primes", tuple(int(p) for p in self.primes))
        self.validate()

    @property
    def depth(self) -> int:
        return len(self.primes)

    @cached_property
    def products(self) -> tuple[int, ...]:
        out, acc = [], 1
        for m in self.primes:
            acc *= m
            out.append(acc)
        return tuple(out)

    @cached_property
    def numerators(self) -> tuple[int, ...]:
        out, acc = [], 0
        for m in self.primes:
            acc = acc * m + 1
            out.append(acc)
        return tuple(out)

    def M(self, level: int) -> int:
        """M_level, with M_0 = 1."""
        if level == 0:
            return 1
        self._check_level(level)
        return self.products[level - 1]

    def P(self, level: int) -> int:
        """P_level, with P_0 = 0."""
        if level == 0:
            return 0
        self._check_level(level)
        return self.numerators[level - 1]

    def m(self, level: int) -> int:
        self._check_level(level)
        return self.primes[level - 1]

    def prefix(self, depth: int) -> "PrimeTower":
        self._check_level(depth)
        return PrimeTower(self.primes[:depth])

    def _check_level(self, level: int) -> None:
        if not 1 <= level <= self.depth:
            raise TowerError(f"level {level} outside 1..{self.depth}")

    def validate(self) -> None:
        if not self.primes:
            raise TowerError("tower needs at least one prime")
        for j, p in enumerate(self.primes, start=1):
            if p < 5 or not is_prime(p):
                raise TowerError(f"m_{j} = {p} is not a prime >= 5")
        for i in range(len(self.primes)):
            mi = self.primes[i]
            for j in range(i + 1, len(self.primes)):
                want = 1 if j == i + 1 else mi - 1
                if self.primes[j] % mi != want:
                    sign = "+1" if j == i + 1 else "-1"
                    raise TowerError(
                        f"m_{j + 1} = {self.primes[j]} is not {sign} mod m_{i + 1} = {mi}"
                    )
        for M, P in zip(self.products, self.numerators):
            if math.gcd(P, M) != 1:
                raise TowerError(f"gcd(P, M) != 1 for M = {M}")

    def to_json(self) -> str:
        return json.dumps({"primes": list(self.primes)})

    @classmethod
    def from_json(cls, text: str) -> "PrimeTower":
        data = json.loads(text)
        if not isinstance(data, dict) or "primes" not in data:
            raise TowerError('tower JSON must be an object with a "primes" list')
        return cls(tuple(int(p) for p in data["primes"]))

    @classmethod
    def single(cls, m1: int) -> "PrimeTower":
        return cls((m1,))


def extend_tower(tower: PrimeTower, min_next: int = 0) -> PrimeTower:
    """Append the least admissible prime >= min_next."""
    *earlier, last = tower.primes
    congruences = [(-1 % q, q) for q in earlier] + [(1, last)]
    residue = crt_solve(congruences)
    modulus = math.prod(tower.primes)
    p = next_prime_in_progression(residue, modulus, max(min_next, 5))
    return PrimeTower(tower.primes + (p,))


def grow_tower(m1: int, depth: int, min_next: Iterable[int] | int = 0) -> PrimeTower:
    """Tower of the given depth, each new prime the least admissible one >= its floor."""
    if depth < 1:
        raise TowerError("depth must be >= 1")
    floors = [min_next] * (depth - 1) if isinstance(min_next, int) else list(min_next)
    if len(floors) < depth - 1:
        floors += [0] * (depth - 1 - len(floors))
    tower = PrimeTower.single(m1)
    for floor in floors[: depth - 1]:
        tower = extend_tower(tower, floor)
    return tower


def fast_growth_tower(m1: int, depth: int) -> PrimeTower:
    """Tower with m_n > 40 * M_{n-1}^5 at every level n >= 2."""
    tower = PrimeTower.single(m1)
    while tower.depth < depth:
        bound = GROWTH_FACTOR * tower.M(tower.depth) ** GROWTH_POWER + 1
        tower = extend_tower(tower, bound)
    return tower


def alpha(tower: PrimeTower, level: int) -> Fraction:
    """alpha_level = P_level / M_level (already in lowest terms)."""
    return Fraction(tower.P(level), tower.M(level))


def alternating_residue(tower: PrimeTower, k: int, n: int) -> int:
    """(m_{k+1}...m_n + m_{k+2}...m_n + ... + m_n + 1) mod m_k.

    Equals m_k - 1 when n - k is even and 2 when it is odd.
    """
    total, prod = 1, 1
    for j in range(n, k, -1):
        prod *= tower.m(j)
        total += prod
    return total % tower.m(k)


def circle_add(x: Fraction, y: Fraction) -> Fraction:
    """x + y reduced to [0, 1)."""
    return (Fraction(x) + Fraction(y)) % 1


def circle_dist(x: Fraction, y: Fraction) -> Fraction:
    """Distance on the circle R/Z, in [0, 1/2]."""
    d = abs(Fraction(x) - Fraction(y)) % 1
    return min(d, 1 - d)
