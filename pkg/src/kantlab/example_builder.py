"""Inductive construction of the transport maps T^(tau_n) at truncation depth n.

Level 1 is the explicit zig-zag tau_1.  Each later level refines the previous
map inside every parent cell:

* good parents keep their shift count on all but |tau| boundary subcells,
  which are rotated into the gaps left at the opposite end of the image block;
* singular parents shift their inner subcells by an extra -/+ dphi * M_{n-1}
  steps so that the defect becomes exactly 0 there, and the 2 * dphi * M_{n-1}
  boundary subcells left over become the new singular cells, sent
  order-preservingly into the middle of the image block;
* the block above the middle cell stays fixed.

Here dphi = phi^{n-1}(image) - phi^{n-1}(source) on the singular parent and
the defect of a cell is phi^n(x) - phi^n(T^(tau_n) x).  Its quasi-cost is
1 + defect.

The second family (tau_{n,j}) uses the inverse zig-zag in every block and
propagates older levels by good-only refinement.  Its quasi-costs vanish
off a small set and integrate to exactly 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from .grid_dynamics import Grid, StepFunction, orbit_sum_fast, phi_level
from .number_tower import PrimeTower, extend_tower, grow_tower, is_prime

__all__ = [
    "GOOD",
    "SINGULAR",
    "MIDDLE",
    "ConstructionError",
    "IntervalPermutation",
    "SingularLedger",
    "BuildReport",
    "LevelTotals",
    "tau_level1",
    "level1_ledger",
    "build_level1",
    "refine",
    "refine_good",
    "build_refined_rotation",
    "singular_mass",
    "correct_phi",
    "correction_norm",
    "implicit_level_totals",
    "buildup_profile",
    "zigzag_level",
    "build_zigzag_family",
    "ZigzagFamily",
    "MapReport",
    "ConcentrationProfile",
    "concentration_profile",
    "refine_min_prime",
    "zigzag_min_prime",
    "minimal_tower",
    "tau_plan_cost",
]

GOOD, SINGULAR, MIDDLE = 0, 1, 2


class ConstructionError(ValueError):
    """The requested level cannot be built with the given prime."""

    def __init__(self, message: str, level: int, minimal_prime: int | None = None):
        super().__init__(message)
        self.level = level
        self.minimal_prime = minimal_prime


# --------------------------------------------------------------------------
# permutations
# --------------------------------------------------------------------------


def _canonical_tau(g: Grid, image: np.ndarray) -> np.ndarray:
    """Shift counts in (-M, M) whose orbit segment misses the middle cell."""
    M = g.M
    src = np.arange(M, dtype=np.int64)
    t = ((image - src) % M) * g.Q % M
    s0 = ((g.mid - src) % M) * g.Q % M
    return np.where(t == 0, 0, np.where(s0 > t, t, t - M)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class IntervalPermutation:
    """A bijection of the level-n cells, given by per-cell shift counts."""

    tower: PrimeTower
    level: int
    tau: np.ndarray
    image: np.ndarray

    @property
    def grid(self) -> Grid:
        return Grid(self.tower, self.level)

    @property
    def M(self) -> int:
        return self.tower.M(self.level)

    @classmethod
    def from_image(cls, tower: PrimeTower, level: int, image: np.ndarray) -> "IntervalPermutation":
        g = Grid(tower, level)
        image = np.asarray(image, dtype=np.int64)
        return cls(tower, level, _canonical_tau(g, image), image)

    @classmethod
    def from_tau(cls, tower: PrimeTower, level: int, tau: np.ndarray) -> "IntervalPermutation":
        g = Grid(tower, level)
        tau = np.asarray(tau, dtype=np.int64)
        image = (np.arange(g.M, dtype=np.int64) + (tau % g.M) * g.P) % g.M
        return cls(tower, level, tau, image)

    def tau_function(self) -> StepFunction:
        return StepFunction(self.level, self.tau)

    def inverse(self) -> "IntervalPermutation":
        inv = np.empty_like(self.image)
        inv[self.image] = np.arange(self.M, dtype=np.int64)
        return IntervalPermutation.from_image(self.tower, self.level, inv)

    def is_permutation(self) -> bool:
        return bool(np.array_equal(np.sort(self.image), np.arange(self.M)))

    def matches_shifts(self) -> bool:
        g = self.grid
        expect = (np.arange(g.M, dtype=np.int64) + (self.tau % g.M) * g.P) % g.M
        return bool(np.array_equal(expect, self.image)) and bool(np.all(np.abs(self.tau) < g.M))

    def avoids_middle(self) -> bool:
        """Orbit segments between x and its image never touch the middle cell."""
        g = self.grid
        src = np.arange(g.M, dtype=np.int64)
        s0 = ((g.mid - src) % g.M) * g.Q % g.M
        tau = self.tau
        pos = tau > 0
        neg = tau < 0
        # forward segment 0..tau hits the middle iff its orbit time s0 <= tau
        bad_pos = pos & (s0 <= tau)
        # backward segment tau..0 hits it iff s0 == 0 or s0 >= M + tau
        bad_neg = neg & ((s0 == 0) | (s0 >= g.M + tau))
        return not bool(np.any(bad_pos | bad_neg))

    def respects_blocks(self, parent: "IntervalPermutation") -> bool:
        """Every parent cell's subcells land inside the parent's image cell."""
        ratio = self.M // parent.M
        src_block = np.arange(self.M, dtype=np.int64) // ratio
        return bool(np.array_equal(self.image // ratio, parent.image[src_block]))

    def displacement(self) -> Fraction:
        """max over cells of circle_dist(x, image x), exact."""
        d = (self.image - np.arange(self.M, dtype=np.int64)) % self.M
        worst = int(np.minimum(d, self.M - d).max())
        return Fraction(worst, self.M)

    def validate(self, parent: "IntervalPermutation | None" = None) -> None:
        if not self.is_permutation():
            raise ConstructionError("image is not a permutation", self.level)
        if not self.matches_shifts():
            raise ConstructionError("shift counts do not reproduce the image", self.level)
        if not self.avoids_middle():
            raise ConstructionError("an orbit segment crosses the middle cell", self.level)
        if parent is not None and not self.respects_blocks(parent):
            raise ConstructionError("refinement does not respect parent blocks", self.level)


# --------------------------------------------------------------------------
# ledgers and reports
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SingularLedger:
    """Good / singular / middle-block classification with exact defects."""

    level: int
    kind: np.ndarray
    defect: StepFunction

    @property
    def good_cells(self) -> np.ndarray:
        return np.flatnonzero(self.kind == GOOD)

    @property
    def singular_cells(self) -> np.ndarray:
        return np.flatnonzero(self.kind == SINGULAR)

    @property
    def middle_cells(self) -> np.ndarray:
        return np.flatnonzero(self.kind == MIDDLE)

    @property
    def singular_mass(self) -> Fraction:
        v = self.defect.values[self.kind == SINGULAR]
        return Fraction(int(v.sum(dtype=np.int64)), len(self.kind))


@dataclass(frozen=True, eq=False)
class BuildReport:
    level: int
    M: int
    ledger: SingularLedger
    quasi_cost: StepFunction
    change_fraction: Fraction
    changed_measure: Fraction

    def to_dict(self, quasi_cost_csv_path: str | None = None) -> dict:
        sm = self.ledger.singular_mass
        return {
            "level": self.level,
            "M_n": self.M,
            "singular_mass": f"{sm.numerator}/{sm.denominator}",
            "change_fraction": f"{self.change_fraction.numerator}/{self.change_fraction.denominator}",
            "quasi_cost_csv_path": quasi_cost_csv_path,
        }

    def to_json(self, quasi_cost_csv_path: str | None = None) -> str:
        return json.dumps(self.to_dict(quasi_cost_csv_path), sort_keys=True)


def _report(perm: IntervalPermutation, kind: np.ndarray, phi: np.ndarray,
            parent: IntervalPermutation | None, parent_kind: np.ndarray | None) -> tuple[SingularLedger, BuildReport]:
    defect = phi - phi[perm.image]
    ledger = SingularLedger(perm.level, kind, StepFunction(perm.level, defect))
    quasi = StepFunction(perm.level, 1 + defect)
    M = perm.M
    if parent is None:
        change_fraction = Fraction(0)
        changed = Fraction(int(np.count_nonzero(perm.tau)), M)
    else:
        ratio = M // parent.M
        inherited = np.repeat(parent.tau, ratio)
        differs = (perm.tau != inherited).reshape(parent.M, ratio)
        changed = Fraction(int(differs.sum()), M)
        good_parents = parent_kind == GOOD
        if good_parents.any():
            change_fraction = Fraction(int(differs[good_parents].sum(axis=1).max()), ratio)
        else:
            change_fraction = Fraction(0)
    return ledger, BuildReport(perm.level, M, ledger, quasi, change_fraction, changed)


# --------------------------------------------------------------------------
# level 1
# --------------------------------------------------------------------------


def tau_level1(M1: int) -> IntervalPermutation:
    """The level-1 zig-zag on M1 cells."""
    if M1 < 5 or M1 % 2 == 0 or not is_prime(M1):
        raise ConstructionError(f"M_1 = {M1} must be an odd prime >= 5", 1)
    tower = PrimeTower.single(M1)
    half = (M1 - 1) // 2  # 0-based index of the middle cell
    tau = np.zeros(M1, dtype=np.int64)
    tau[1:half] = -1
    tau[half + 1 : M1 - 1] = 1
    tau[0] = (M1 - 3) // 2
    tau[M1 - 1] = -(M1 - 3) // 2
    perm = IntervalPermutation.from_tau(tower, 1, tau)
    perm.validate()
    return perm


def level1_ledger(perm: IntervalPermutation) -> SingularLedger:
    M = perm.M
    kind = np.full(M, GOOD, dtype=np.int8)
    kind[[0, M - 1]] = SINGULAR
    kind[(M - 1) // 2] = MIDDLE
    phi, _ = phi_level(perm.tower, 1)
    return SingularLedger(1, kind, StepFunction(1, phi.values - phi.values[perm.image]))


def build_level1(tower: PrimeTower) -> tuple[IntervalPermutation, SingularLedger, BuildReport]:
    base = tau_level1(tower.m(1))
    perm = IntervalPermutation(tower, 1, base.tau, base.image)
    kind = level1_ledger(perm).kind
    phi, _ = phi_level(tower, 1)
    ledger, report = _report(perm, kind, phi.values, None, None)
    return perm, ledger, report


# --------------------------------------------------------------------------
# level n >= 2
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _SingularSplit:
    """Subcell ranges (1-based, inclusive) inside one singular parent."""

    tau: int
    dphi: int
    D: int
    left: tuple[int, int]
    right: tuple[int, int]

    @property
    def left_shift(self) -> int:
        return self.tau - self.D

    @property
    def right_shift(self) -> int:
        return self.tau + self.D

    @property
    def n_singular(self) -> int:
        n_left = max(0, self.left[1] - self.left[0] + 1)
        n_right = max(0, self.right[1] - self.right[0] + 1)
        return self.m - n_left - n_right

    m: int = 0


def _split_singular(m: int, tau: int, dphi: int, M_prev: int) -> _SingularSplit:
    D = dphi * M_prev
    # the middle subcell joins the side the parent shift points away from
    if tau > 0:
        half_l, half_r = (m - 1) // 2, (m + 1) // 2
    else:
        half_l, half_r = (m + 1) // 2, (m + 3) // 2
    left = (D - tau + 1, half_l)
    right = (half_r, m - tau - D)
    return _SingularSplit(tau, dphi, D, left, right, m)


def _split_feasible(s: _SingularSplit) -> bool:
    lo_l, hi_l = s.left
    lo_r, hi_r = s.right
    return s.dphi >= 0 and 1 <= lo_l <= hi_l + 1 and lo_r - 1 <= hi_r <= s.m


def _split_min_prime(tau: int, D: int) -> int:
    """Smallest odd m for which the ranges of a singular parent are well formed."""
    if tau > 0:
        need = max(2 * (D - tau) + 1, 2 * (tau + D) - 1)
    else:
        need = max(2 * (D - tau) - 1, 2 * (tau + D) + 1)
    return max(need, 5)


def _singular_parents(tower: PrimeTower, level: int, parent: IntervalPermutation,
                      parent_ledger: SingularLedger, hint: bool = True) -> list[tuple[int, int, int]]:
    """(cell, shift, potential gain) for every singular parent cell.

    A parent with negative gain, or with gain * M_{level-1} below its own
    |shift|, cannot be split for any m_level; that is a level-(level-1) failure.
    """
    phi_prev, _ = phi_level(tower, level - 1)
    M_prev = tower.M(level - 1)
    out = []
    for b in parent_ledger.singular_cells.tolist():
        tau = int(parent.tau[b])
        dphi = int(phi_prev.values[parent.image[b]] - phi_prev.values[b])
        if dphi < 0 or dphi * M_prev < abs(tau):
            least = _least_continuable_prime(tower, level - 1) if hint else None
            note = f"; least feasible m_{level - 1} is {least}" if least else ""
            raise ConstructionError(
                f"singular cell {b} at level {level - 1} has shift {tau} but potential gain {dphi}; "
                f"m_{level - 1} = {tower.m(level - 1)} is too small to continue to level {level}{note}",
                level - 1, least)
        out.append((b, tau, dphi))
    return out


def _singular_targets(s: _SingularSplit) -> tuple[np.ndarray, np.ndarray]:
    """0-based target subcell and GOOD/SINGULAR tag for every subcell."""
    m = s.m
    k = np.arange(1, m + 1, dtype=np.int64)
    target = np.full(m, -1, dtype=np.int64)
    in_left = (k >= s.left[0]) & (k <= s.left[1])
    in_right = (k >= s.right[0]) & (k <= s.right[1])
    target[in_left] = k[in_left] + s.left_shift
    target[in_right] = k[in_right] + s.right_shift
    placed = in_left | in_right
    gaps = np.setdiff1d(np.arange(1, m + 1, dtype=np.int64), target[placed], assume_unique=True)
    target[~placed] = gaps
    tag = np.where(placed, GOOD, SINGULAR).astype(np.int8)
    return target - 1, tag


def refine_min_prime(tower: PrimeTower, level: int, parent: IntervalPermutation,
                       parent_ledger: SingularLedger) -> int:
    """Least admissible m_level for which the singular parents can be split."""
    M_prev = tower.M(level - 1)
    need = 5
    for _, tau, dphi in _singular_parents(tower, level, parent, parent_ledger):
        need = max(need, _split_min_prime(tau, dphi * M_prev))
    return extend_tower(tower.prefix(level - 1), need).m(level)


def refine(tower: PrimeTower, level: int, parent: IntervalPermutation,
           parent_ledger: SingularLedger) -> tuple[IntervalPermutation, SingularLedger, BuildReport]:
    """One step of the good / singular refinement."""
    if level != parent.level + 1:
        raise ConstructionError("refine goes exactly one level down", level)
    if parent.tower.primes[: parent.level] != tower.primes[: parent.level]:
        raise ConstructionError("parent permutation comes from a different tower", level)
    g = Grid(tower, level)
    g.require_dense()
    M_prev, m = tower.M(level - 1), g.m
    pkind = parent_ledger.kind
    sub = np.arange(m, dtype=np.int64)

    target_sub = np.tile(sub, (M_prev, 1))
    kind = np.repeat(pkind, m).reshape(M_prev, m).copy()

    good = np.flatnonzero(pkind == GOOD)
    tau_good = parent.tau[good]
    rotate = np.abs(tau_good) < m
    rows = good[rotate]
    target_sub[rows] = (sub[None, :] + tau_good[rotate][:, None]) % m

    for b, tau, dphi in _singular_parents(tower, level, parent, parent_ledger):
        split = _split_singular(m, tau, dphi, M_prev)
        if not _split_feasible(split):
            minimal = refine_min_prime(tower, level, parent, parent_ledger)
            raise ConstructionError(
                f"m_{level} = {m} is too small to split singular cell {b} "
                f"(shift {tau}, potential gain {dphi}); least feasible m_{level} is {minimal}",
                level, minimal)
        target_sub[b], kind[b] = _singular_targets(split)

    image = (parent.image[:, None] * m + target_sub).reshape(-1)
    perm = IntervalPermutation.from_image(tower, level, image)
    perm.validate(parent)
    phi, _ = phi_level(tower, level)
    ledger, report = _report(perm, kind.reshape(-1), phi.values, parent, pkind)
    return perm, ledger, report


def refine_good(tower: PrimeTower, level: int, parent: IntervalPermutation) -> IntervalPermutation:
    """Block-respecting refinement treating every parent cell as good."""
    g = Grid(tower, level)
    g.require_dense()
    m = g.m
    sub = np.arange(m, dtype=np.int64)
    tau = parent.tau
    shift = np.where(np.abs(tau) < m, tau, 0)
    target_sub = (sub[None, :] + shift[:, None]) % m
    image = (parent.image[:, None] * m + target_sub).reshape(-1)
    perm = IntervalPermutation.from_image(tower, level, image)
    perm.validate(parent)
    return perm


def build_refined_rotation(tower: PrimeTower, depth: int | None = None
                   ) -> Iterator[tuple[IntervalPermutation, SingularLedger, BuildReport]]:
    """Yield (perm, ledger, report) for levels 1..depth."""
    depth = tower.depth if depth is None else depth
    perm, ledger, report = build_level1(tower)
    yield perm, ledger, report
    for level in range(2, depth + 1):
        perm, ledger, report = refine(tower, level, perm, ledger)
        yield perm, ledger, report


def singular_mass(ledger: SingularLedger) -> Fraction:
    """Sum of the defect over singular cells, divided by the cell count."""
    return ledger.singular_mass


# --------------------------------------------------------------------------
# corrected dual functions
# --------------------------------------------------------------------------


def _lift(values: np.ndarray, ratio: int) -> np.ndarray:
    return np.repeat(values, ratio)


def correct_phi(tower: PrimeTower, level: int, perm_tau: IntervalPermutation) -> StepFunction:
    """phi_level minus its excess over the cost on the shift and tau graphs.

    perm_tau may live on a finer level r >= level; the cost there is
    c = (1 + phi^r(x) - phi^r(y))_+ and the result is a level-r step function.
    With r == level the correction vanishes identically.
    """
    r = perm_tau.level
    if r < level:
        raise ValueError("the tau map must be at least as fine as the corrected level")
    g = Grid(tower, r)
    phi_r, _ = phi_level(tower, r)
    phi_l, _ = phi_level(tower, level)
    ratio = g.M // tower.M(level)
    a = _lift(phi_l.values, ratio)
    psi = 1 - a
    src = np.arange(g.M, dtype=np.int64)
    shift = (src + g.P) % g.M
    c_shift = np.maximum(1 + phi_r.values - phi_r.values[shift], 0)
    c_tau = np.maximum(1 + phi_r.values - phi_r.values[perm_tau.image], 0)
    over_shift = np.maximum(a + psi[shift] - c_shift, 0)
    over_tau = np.maximum(a + psi[perm_tau.image] - c_tau, 0)
    return StepFunction(r, a - over_shift - over_tau)


def correction_norm(tower: PrimeTower, level: int, perm_tau: IntervalPermutation) -> Fraction:
    """|| phi^level - phi_level ||_{L^1} with the cost taken at perm_tau's level."""
    corrected = correct_phi(tower, level, perm_tau)
    phi_l, _ = phi_level(tower, level)
    a = _lift(phi_l.values, len(corrected) // tower.M(level))
    return Fraction(int((a - corrected.values).sum(dtype=np.int64)), len(corrected))


# --------------------------------------------------------------------------
# ledger totals without dense arrays
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelTotals:
    """Counts and singular mass of one level, however it was obtained."""

    level: int
    M: int
    n_singular: int
    n_good: int
    n_middle: int
    singular_mass: Fraction
    implicit: bool = False

    @property
    def singular_measure(self) -> Fraction:
        return Fraction(self.n_singular, self.M)


def _run_defect_sum(g: Grid, x0: int, y0: int, length: int) -> int:
    """sum_{i<length} phi(x0+i) - phi(y0+i) for runs moved by one fixed shift."""
    M, Q, mid = g.M, g.Q, g.mid
    t = (y0 - x0) * Q % M
    if t == 0 or length == 0:
        return 0
    s = orbit_sum_fast(g, x0, t)
    total = s
    # orbit times from the current x to the three cells that change the count
    r_top = (M - 1 - x0) * Q % M
    r_lo = (mid - 1 - x0) * Q % M
    r_mid = (mid - x0) * Q % M
    for _ in range(length - 1):
        s += 2 * (r_top < t) - (r_lo < t) - (r_mid < t)
        total += s
        r_top -= Q
        if r_top < 0:
            r_top += M
        r_lo -= Q
        if r_lo < 0:
            r_lo += M
        r_mid -= Q
        if r_mid < 0:
            r_mid += M
    # defect = phi(x) - phi(y) = -orbit_sum(x, t)
    return -total


def implicit_level_totals(tower: PrimeTower, level: int, parent: IntervalPermutation,
                          parent_ledger: SingularLedger, max_run: int = 50_000_000) -> LevelTotals:
    """Singular count and mass of the next level without materialising it.

    Unchanged subcells of good parents inherit the parent defect, good
    subcells of singular parents have defect 0, the middle block is fixed,
    and the defect sums to 0 over all cells; only the |tau| rotated
    subcells of each good parent are summed one by one.
    """
    g = Grid(tower, level)
    M_prev, m = tower.M(level - 1), g.m
    pkind = parent_ledger.kind
    pdef = parent_ledger.defect.values

    n_singular = 0
    for b, tau, dphi in _singular_parents(tower, level, parent, parent_ledger):
        split = _split_singular(m, tau, dphi, M_prev)
        if not _split_feasible(split):
            minimal = refine_min_prime(tower, level, parent, parent_ledger)
            raise ConstructionError(
                f"m_{level} = {m} is too small to split singular cell {b}; "
                f"least feasible m_{level} is {minimal}", level, minimal)
        n_singular += split.n_singular

    good = np.flatnonzero(pkind == GOOD)
    taus = parent.tau[good]
    abs_t = np.abs(taus)
    if np.any(abs_t >= m):
        raise ConstructionError(f"shift counts reach m_{level}; use the dense builder", level)
    # unchanged subcells: (m - |tau|) copies of the parent defect
    rest = m * int(pdef[good].sum(dtype=np.int64)) - int((abs_t * pdef[good]).sum(dtype=np.int64))
    if int(abs_t.sum()) > max_run:
        raise ConstructionError("too many rotated subcells for the implicit path", level)
    for b, tau in zip(good.tolist(), taus.tolist()):
        if tau == 0:
            continue
        base_x = b * m
        base_y = int(parent.image[b]) * m
        if tau > 0:
            rest += _run_defect_sum(g, base_x + m - tau, base_y, tau)
        else:
            rest += _run_defect_sum(g, base_x, base_y + m + tau, -tau)

    n_middle = int(np.count_nonzero(pkind == MIDDLE)) * m
    M = g.M
    return LevelTotals(level, M, n_singular, M - n_singular - n_middle, n_middle,
                       Fraction(-rest, M), implicit=True)


def _dense_totals(ledger: SingularLedger, M: int) -> LevelTotals:
    return LevelTotals(ledger.level, M, len(ledger.singular_cells), len(ledger.good_cells),
                       len(ledger.middle_cells), ledger.singular_mass)


def buildup_profile(tower: PrimeTower, depth: int | None = None) -> list[tuple[Fraction, Fraction]]:
    """Per level: (measure of the singular set, integral of the defect over it).

    The singular cells are where the candidate pair phi^n (+) psi^n drops
    below the cost along the tau-graph.  Levels too large for dense arrays
    are summarised implicitly from the level above.
    """
    return [(t.singular_measure, t.singular_mass) for t in level_totals(tower, depth)]


def level_totals(tower: PrimeTower, depth: int | None = None) -> list[LevelTotals]:
    depth = tower.depth if depth is None else depth
    out: list[LevelTotals] = []
    perm, ledger, _ = build_level1(tower)
    out.append(_dense_totals(ledger, perm.M))
    for level in range(2, depth + 1):
        g = Grid(tower, level)
        try:
            g.require_dense()
        except Exception:
            if level != depth:
                raise
            out.append(implicit_level_totals(tower, level, perm, ledger))
            break
        perm, ledger, _ = refine(tower, level, perm, ledger)
        out.append(_dense_totals(ledger, perm.M))
    return out


# --------------------------------------------------------------------------
# the concentrating family tau_{n,j}
# --------------------------------------------------------------------------


def zigzag_min_prime(tower: PrimeTower, level: int) -> int:
    """Least admissible m_level >= 2 M_{level-1} + 1."""
    return extend_tower(tower.prefix(level - 1), 2 * tower.M(level - 1) + 1).m(level)


def zigzag_level(tower: PrimeTower, level: int) -> IntervalPermutation:
    """Zig-zag inside every level-(j-1) cell, moving by M_{j-1} cells.

    Subcells 1..M' and m-M'+1..m (M' = M_{j-1}) jump to the gaps next to
    the middle subcell, the others move M' subcells outwards, the middle
    subcell stays.  At level 1 this is tau_1.
    """
    g = Grid(tower, level)
    g.require_dense()
    m, Mp = g.m, tower.M(level - 1)
    if m < 2 * Mp + 1:
        minimal = zigzag_min_prime(tower, level) if level > 1 else 5
        raise ConstructionError(
            f"m_{level} = {m} < 2 M_{level - 1} + 1 = {2 * Mp + 1}; least feasible m_{level} is {minimal}",
            level, minimal)
    k = np.arange(1, m + 1, dtype=np.int64)
    target = np.full(m, -1, dtype=np.int64)
    mid = (m + 1) // 2
    left = (k > Mp) & (k < mid)
    right = (k > mid) & (k <= m - Mp)
    target[left] = k[left] - Mp
    target[right] = k[right] + Mp
    target[mid - 1] = mid
    ends = target < 0
    gaps = np.setdiff1d(k, target[~ends], assume_unique=True)
    target[ends] = gaps
    image = (np.arange(tower.M(level - 1), dtype=np.int64)[:, None] * m + (target - 1)[None, :]).reshape(-1)
    perm = IntervalPermutation.from_image(tower, level, image)
    perm.validate()
    return perm


@dataclass(frozen=True, eq=False)
class MapReport:
    """tau_{n,j} at level j with its quasi-cost 1 + phi^j - phi^j o T."""

    n: int
    j: int
    perm: IntervalPermutation
    quasi_cost: StepFunction

    @property
    def transport_cost(self) -> Fraction:
        return self.quasi_cost.total()

    @property
    def displacement(self) -> Fraction:
        return self.perm.displacement()


@dataclass(frozen=True, eq=False)
class ZigzagFamily:
    tower: PrimeTower
    depth: int
    maps: dict[tuple[int, int], MapReport] = field(default_factory=dict)

    @property
    def perms(self) -> list[IntervalPermutation]:
        return [self.maps[(j, j)].perm for j in range(1, self.depth + 1)]

    def diagonal(self, j: int) -> MapReport:
        return self.maps[(j, j)]


def build_zigzag_family(tower: PrimeTower, depth: int | None = None) -> ZigzagFamily:
    """tau_{j,j} = inverse zig-zag at level j, and tau_{n,j} (n < j) by good refinement."""
    depth = tower.depth if depth is None else depth
    out = ZigzagFamily(tower, depth)
    rows: dict[int, IntervalPermutation] = {}
    for j in range(1, depth + 1):
        phi, _ = phi_level(tower, j)
        for n in range(1, j):
            rows[n] = refine_good(tower, j, rows[n])
        rows[j] = zigzag_level(tower, j).inverse()
        rows[j].validate()
        for n in range(1, j + 1):
            perm = rows[n]
            quasi = StepFunction(j, 1 + phi.values - phi.values[perm.image])
            out.maps[(n, j)] = MapReport(n, j, perm, quasi)
    return out


@dataclass(frozen=True)
class ConcentrationProfile:
    eta: Fraction
    peak: Fraction
    mean_nonzero: Fraction
    residual: Fraction


def concentration_profile(report: MapReport) -> ConcentrationProfile:
    """Fraction of cells carrying quasi-cost and how high it piles up.

    residual = 1 - eta * mean_nonzero is 0 exactly when the cost
    integrates to 1.
    """
    v = report.quasi_cost.values
    nz = v[v != 0]
    M = len(v)
    eta = Fraction(len(nz), M)
    peak = Fraction(int(nz.max())) if len(nz) else Fraction(0)
    mean = Fraction(int(nz.sum(dtype=np.int64)), len(nz)) if len(nz) else Fraction(0)
    return ConcentrationProfile(eta, peak, mean, 1 - eta * mean)


# --------------------------------------------------------------------------
# towers and plan costs
# --------------------------------------------------------------------------


def minimal_tower(m1: int, depth: int, section: str = "s3", max_tries: int = 10_000) -> PrimeTower:
    """Smallest admissible primes for which the chosen construction goes through.

    For the good / singular refinement each m_n is the least admissible
    prime that both splits the level-(n-1) singular cells and leaves
    level-n singular cells that can themselves be split further.
    """
    if section == "s4":
        tower = PrimeTower.single(m1)
        while tower.depth < depth:
            tower = extend_tower(tower, 2 * tower.M(tower.depth) + 1)
        return tower
    if section != "s3":
        raise ValueError(f"unknown section {section!r}")
    tower = PrimeTower.single(m1)
    perm, ledger, _ = build_level1(tower)
    while tower.depth < depth:
        tower, perm, ledger = _least_prime(tower, perm, ledger, tower.depth < depth - 1, max_tries)
    return tower


def _least_prime(tower: PrimeTower, perm: IntervalPermutation, ledger: SingularLedger,
                 continuable: bool, max_tries: int = 10_000
                 ) -> tuple[PrimeTower, IntervalPermutation, SingularLedger]:
    """Append the least prime for which the next refinement works.

    With continuable=True the new singular cells must also admit a further
    split for a large enough following prime.
    """
    level = tower.depth + 1
    candidate = extend_tower(tower, 0)
    for _ in range(max_tries):
        try:
            lifted = IntervalPermutation(candidate, perm.level, perm.tau, perm.image)
            nxt, nledger, _ = refine(candidate, level, lifted, ledger)
            if continuable:
                _singular_parents(extend_tower(candidate, 0), level + 1, nxt, nledger, hint=False)
            return candidate, nxt, nledger
        except ConstructionError:
            candidate = extend_tower(tower, candidate.m(level) + 1)
    raise ConstructionError(f"no feasible m_{level} found", level)


def _least_continuable_prime(tower: PrimeTower, level: int) -> int | None:
    """Least m_level (earlier primes fixed) whose level can be refined further."""
    if level < 2 or tower.M(level - 1) > 100_000:
        return None
    perm = ledger = None
    for perm, ledger, _ in build_refined_rotation(tower.prefix(level - 1)):
        pass
    try:
        return _least_prime(tower.prefix(level - 1), perm, ledger, True, 2_000)[0].m(level)
    except ConstructionError:
        return None


def tau_plan_cost(perm: IntervalPermutation) -> Fraction:
    """<c, pi_tau> with c = (1 + phi(x) - phi(y))_+ on the graph of perm."""
    phi, _ = phi_level(perm.tower, perm.level)
    q = 1 + phi.values - phi.values[perm.image]
    return Fraction(int(np.maximum(q, 0).sum(dtype=np.int64)), perm.M)


__all__ += ["level_totals", "grow_tower"]
