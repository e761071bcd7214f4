"""Level-n grids, the rotation T_{alpha_n} as a cell permutation, and the
potentials phi^n / psi^n built from orbit counts.

At level n the circle is cut into M_n cells I_f = [f/M_n, (f+1)/M_n).
Because alpha_n = P_n/M_n with gcd(P_n, M_n) = 1, the rotation moves cell f
to cell f + P_n (mod M_n) and a single orbit visits every cell once.

Cells left of the middle cell count +1, cells right of it count -1, the
middle cell counts 0.  phi^n is the running count along the orbit started
at cell 0.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .number_tower import PrimeTower

__all__ = [
    "DEFAULT_CELL_CAP",
    "CellCapError",
    "cell_cap",
    "Region",
    "Grid",
    "CellIndex",
    "StepFunction",
    "region_flags",
    "shift_cells",
    "orbit_sum",
    "orbit_balance",
    "h_value",
    "phi_level",
    "phi_at",
    "orbit_sum_fast",
    "floor_sum",
    "inverse_step",
    "oscillation_report",
]

DEFAULT_CELL_CAP = 10_000_000


class CellCapError(RuntimeError):
    """A dense array would exceed the configured cell cap."""


def cell_cap() -> int:
    """Dense-array cap, overridable with KANTLAB_CELL_CAP."""
    raw = os.environ.get("KANTLAB_CELL_CAP")
    if raw is None or raw.strip() == "":
        return DEFAULT_CELL_CAP
    try:
        return int(float(raw))
    except ValueError as exc:
        raise CellCapError(f"KANTLAB_CELL_CAP is not a number: {raw!r}") from exc


class Region(IntEnum):
    """Orbit weight of a cell: +1 left of the middle, 0 middle, -1 right."""

    L = 1
    MIDDLE = 0
    R = -1


@dataclass(frozen=True)
class Grid:
    """The M_level cells of a tower at a given level."""

    tower: PrimeTower
    level: int

    def __post_init__(self) -> None:
        self.tower._check_level(self.level)

    @cached_property
    def M(self) -> int:
        return self.tower.M(self.level)

    @cached_property
    def P(self) -> int:
        return self.tower.P(self.level)

    @cached_property
    def m(self) -> int:
        """Number of subcells per parent cell."""
        return self.tower.m(self.level)

    @cached_property
    def Q(self) -> int:
        """Orbit time of a +1 cell move: Q * P = 1 (mod M)."""
        return pow(self.P, -1, self.M)

    @cached_property
    def mid(self) -> int:
        return (self.M - 1) // 2

    def region(self, flat: int) -> Region:
        if flat < self.mid:
            return Region.L
        if flat == self.mid:
            return Region.MIDDLE
        return Region.R

    def cell(self, flat: int) -> "CellIndex":
        return CellIndex(self, flat)

    def cell_nested(self, nested: Sequence[int]) -> "CellIndex":
        return CellIndex.from_nested(self, nested)

    def orbit_time(self, src: int, dst: int) -> int:
        """Least t >= 0 with src + t*P = dst (mod M)."""
        return (dst - src) * self.Q % self.M

    def left_endpoint(self, flat: int) -> Fraction:
        return Fraction(flat, self.M)

    def require_dense(self) -> None:
        cap = cell_cap()
        if self.M > cap:
            raise CellCapError(
                f"level {self.level} has M = {self.M} cells, above the cap {cap} "
                "(set KANTLAB_CELL_CAP to raise it)"
            )


@dataclass(frozen=True)
class CellIndex:
    """A level-n cell, addressed by its flat index."""

    grid: Grid
    flat: int

    def __post_init__(self) -> None:
        if not 0 <= self.flat < self.grid.M:
            raise IndexError(f"cell {self.flat} outside [0, {self.grid.M})")

    @property
    def level(self) -> int:
        return self.grid.level

    @property
    def nested(self) -> tuple[int, ...]:
        """(k_1, ..., k_n) with 1 <= k_j <= m_j."""
        out = []
        rest = self.flat
        for j in range(self.level, 0, -1):
            m = self.grid.tower.m(j)
            out.append(rest % m + 1)
            rest //= m
        return tuple(reversed(out))

    @classmethod
    def from_nested(cls, grid: Grid, nested: Sequence[int]) -> "CellIndex":
        if len(nested) != grid.level:
            raise ValueError(f"expected {grid.level} indices, got {len(nested)}")
        flat = 0
        for j, k in enumerate(nested, start=1):
            m = grid.tower.m(j)
            if not 1 <= k <= m:
                raise IndexError(f"k_{j} = {k} outside 1..{m}")
            flat = flat * m + (k - 1)
        return cls(grid, flat)

    @property
    def region(self) -> Region:
        return self.grid.region(self.flat)

    @property
    def interval(self) -> tuple[Fraction, Fraction]:
        M = self.grid.M
        return Fraction(self.flat, M), Fraction(self.flat + 1, M)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """A function constant on the cells of one level, stored densely."""

    level: int
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, flat: int):
        return self.values[flat]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StepFunction):
            return NotImplemented
        return self.level == other.level and np.array_equal(self.values, other.values)

    def total(self) -> Fraction:
        """Integral over [0, 1): sum of values / number of cells."""
        return Fraction(_exact_sum(self.values), len(self.values))

    def to_csv(self, path: str | Path) -> Path:
        """Write flat_index, left_endpoint, value (rationals as p/q)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        M = len(self.values)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["flat_index", "left_endpoint", "value"])
            for f, v in enumerate(self.values.tolist()):
                w.writerow([f, _frac_str(Fraction(f, M)), _frac_str(Fraction(v))])
        return path

    @classmethod
    def from_csv(cls, path: str | Path, level: int) -> "StepFunction":
        vals = []
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                vals.append(Fraction(row["value"]))
        if all(v.denominator == 1 for v in vals):
            arr = np.array([int(v) for v in vals], dtype=np.int64)
        else:
            arr = np.array(vals, dtype=object)
        return cls(level, arr)


def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _exact_sum(values: np.ndarray) -> int | Fraction:
    if values.dtype == object:
        return sum(values.tolist(), Fraction(0))
    return int(values.sum(dtype=np.int64))


def region_flags(grid: Grid) -> np.ndarray:
    """Per-cell Region values (+1 / 0 / -1) as an int8 array."""
    grid.require_dense()
    flags = np.full(grid.M, Region.R, dtype=np.int8)
    flags[: grid.mid] = Region.L
    flags[grid.mid] = Region.MIDDLE
    return flags


def shift_cells(i: CellIndex, t: int) -> CellIndex:
    """Image of cell i under T_{alpha_n}^t."""
    g = i.grid
    return CellIndex(g, (i.flat + t * g.P) % g.M)


def orbit_sum(i: CellIndex, k: int) -> int:
    """#L - #R along the orbit segment of length k starting at i.

    For k >= 0 the visited cells are T^j i, 0 <= j < k.  For k < 0 the sum
    over T^j i, k <= j < 0, is subtracted, so that
    orbit_sum(i, a + b) = orbit_sum(i, a) + orbit_sum(T^a i, b).
    """
    g = i.grid
    step = g.P
    total = 0
    if k >= 0:
        f = i.flat
        for _ in range(k):
            total += g.region(f)
            f = (f + step) % g.M
        return total
    f = i.flat
    for _ in range(-k):
        f = (f - step) % g.M
        total -= g.region(f)
    return total


def orbit_balance(i: CellIndex, k: int) -> int:
    """1 + (#L - #R) over the orbit segment of length k from cell i."""
    return 1 + orbit_sum(i, k)


def h_value(i: CellIndex, k: int) -> int:
    """Cost h(x, T^k x) = 1 + phi(x) - phi(T^k x) = 1 - orbit_sum(i, k).

    Diagonal value 1; along one step it is 0 from L cells and 2 from R cells.
    """
    return 1 - orbit_sum(i, k)


def phi_level(tower: PrimeTower, level: int) -> tuple[StepFunction, StepFunction]:
    """phi^n (0 on cell 0, orbit increments +1/0/-1) and psi^n = 1 - phi^n."""
    g = Grid(tower, level)
    g.require_dense()
    M, P = g.M, g.P
    order = (np.arange(M, dtype=np.int64) * P) % M
    weights = region_flags(g).astype(np.int64)
    phi = np.empty(M, dtype=np.int64)
    phi[order[0]] = 0
    phi[order[1:]] = np.cumsum(weights[order[:-1]])
    return StepFunction(level, phi), StepFunction(level, 1 - phi)


def floor_sum(n: int, m: int, a: int, b: int) -> int:
    """sum_{s=0}^{n-1} floor((a*s + b) / m) for n >= 0, m >= 1."""
    total = 0
    while True:
        if a >= m or a < 0:
            q, a = divmod(a, m)
            total += q * n * (n - 1) // 2
        if b >= m or b < 0:
            q, b = divmod(b, m)
            total += q * n
        y_max = a * n + b
        if y_max < m:
            return total
        n, b = divmod(y_max, m)
        m, a = a, m


def _count_below(g: Grid, x: int, t: int, c: int) -> int:
    """#{0 <= s < t : (x + s*P) mod M < c} for 0 <= c <= M."""
    M, P = g.M, g.P
    return floor_sum(t, M, P, x) - floor_sum(t, M, P, x + M - c) + t


def orbit_sum_fast(g: Grid, x: int, t: int) -> int:
    """orbit_sum for 0 <= t <= M in O(log M) integer operations."""
    below_mid = _count_below(g, x, t, g.mid)
    upto_mid = _count_below(g, x, t, g.mid + 1)
    return below_mid - (t - upto_mid)


def phi_at(g: Grid, flat: int) -> int:
    """phi^n at one cell without building the whole array."""
    return orbit_sum_fast(g, 0, g.orbit_time(0, flat))


def inverse_step(tower: PrimeTower, level: int) -> int:
    """The q in [1, M) with q * P = -1 (mod M): T^q moves one cell left."""
    g = Grid(tower, level)
    return (-g.Q) % g.M


def oscillation_report(tower: PrimeTower, level: int) -> dict[str, int]:
    """Neighbour oscillation of phi and the rise from block start to block middle.

    max_neighbor_delta: max |phi(f) - phi(f + 1)| over all cells.
    min_half_rise: min over parent blocks b', b'' of
        phi(b', middle subcell) - phi(b'', first subcell).
    """
    if level < 2:
        raise ValueError("oscillation report needs level >= 2")
    g = Grid(tower, level)
    phi, _ = phi_level(tower, level)
    v = phi.values
    neighbor = int(np.abs(v - np.roll(v, -1)).max())
    blocks = v.reshape(-1, g.m)
    rise = int(blocks[:, (g.m + 1) // 2 - 1].min() - blocks[:, 0].max())
    return {"max_neighbor_delta": neighbor, "min_half_rise": rise}
