"""Finite Monge-Kantorovich duality in exact arithmetic.

Costs take values in [0, inf]; infinite entries are simply missing arcs.
Plans, potentials and every reported value are Fractions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._flow import BipartiteFlow, InfeasibleError
from .grid_dynamics import Grid, orbit_sum_fast, phi_level
from .number_tower import PrimeTower, circle_dist

__all__ = [
    "INF",
    "InfeasibleError",
    "CostMatrix",
    "TransportPlan",
    "Potentials",
    "SupportSet",
    "SlacknessReport",
    "parse_rational",
    "format_rational",
    "solve",
    "solve_primal",
    "solve_dual",
    "verify_slackness",
    "perturbation_value",
    "perturbation_subgradient",
    "is_cyclically_monotone",
    "strong_monotone_witness",
    "discretized_example_cost",
    "graph_plan",
    "restricted_primal",
    "epsilon_relaxed_dual",
    "completion_feasibility",
    "uniform",
]

INF = math.inf


def parse_rational(x) -> Fraction | float:
    """Fraction from int / Fraction / "p/q" / decimal string; "inf" gives INF."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float) and math.isinf(x):
        if x < 0:
            raise ValueError("costs must be >= 0")
        return INF
    if isinstance(x, str) and x.strip().lower() in ("inf", "infinity", "+inf"):
        return INF
    return Fraction(x)


def format_rational(x) -> str:
    if x == INF:
        return "inf"
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def uniform(n: int) -> tuple[Fraction, ...]:
    return tuple(Fraction(1, n) for _ in range(n))


def _fracs(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(Fraction(v) for v in values)


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Rows of finite entries; anything not listed is +inf."""

    n_rows: int
    n_cols: int
    rows: tuple[dict[int, Fraction], ...]

    def __post_init__(self) -> None:
        if len(self.rows) != self.n_rows:
            raise ValueError("row count mismatch")
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                if not 0 <= j < self.n_cols:
                    raise ValueError(f"column {j} out of range in row {i}")
                if v < 0:
                    raise ValueError(f"negative cost at ({i}, {j})")

    @classmethod
    def from_dense(cls, entries: Sequence[Sequence]) -> "CostMatrix":
        n_rows = len(entries)
        n_cols = len(entries[0]) if n_rows else 0
        rows = []
        for i, r in enumerate(entries):
            if len(r) != n_cols:
                raise ValueError(f"row {i} has {len(r)} entries, expected {n_cols}")
            row = {}
            for j, v in enumerate(r):
                q = parse_rational(v)
                if q != INF:
                    row[j] = q
            rows.append(row)
        return cls(n_rows, n_cols, tuple(rows))

    def __getitem__(self, ij: tuple[int, int]):
        i, j = ij
        return self.rows[i].get(j, INF)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CostMatrix):
            return NotImplemented
        return (self.n_rows, self.n_cols, self.rows) == (other.n_rows, other.n_cols, other.rows)

    def finite(self, i: int, j: int) -> bool:
        return j in self.rows[i]

    def arcs(self) -> list[tuple[int, int, Fraction]]:
        return [(i, j, self.rows[i][j]) for i in range(self.n_rows) for j in sorted(self.rows[i])]

    def dense(self) -> list[list]:
        return [[self[i, j] for j in range(self.n_cols)] for i in range(self.n_rows)]

    def to_dict(self) -> dict:
        if self.n_rows * self.n_cols <= 400:
            return {"n_rows": self.n_rows, "n_cols": self.n_cols,
                    "entries": [[format_rational(v) for v in row] for row in self.dense()]}
        return {"n_rows": self.n_rows, "n_cols": self.n_cols,
                "finite": [[i, j, format_rational(c)] for i, j, c in self.arcs()]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "CostMatrix":
        if "entries" in data:
            return cls.from_dense(data["entries"])
        n_rows, n_cols = int(data["n_rows"]), int(data["n_cols"])
        rows: list[dict[int, Fraction]] = [dict() for _ in range(n_rows)]
        for i, j, v in data["finite"]:
            rows[int(i)][int(j)] = Fraction(v)
        return cls(n_rows, n_cols, tuple(rows))


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse nonnegative matrix; mu and nu are its row and column sums."""

    n_rows: int
    n_cols: int
    entries: dict[tuple[int, int], Fraction]

    def __post_init__(self) -> None:
        clean = {}
        for (i, j), v in self.entries.items():
            v = Fraction(v)
            if v < 0:
                raise ValueError(f"negative mass at ({i}, {j})")
            if not (0 <= i < self.n_rows and 0 <= j < self.n_cols):
                raise ValueError(f"entry ({i}, {j}) out of range")
            if v:
                clean[(int(i), int(j))] = v
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransportPlan):
            return NotImplemented
        return (self.n_rows, self.n_cols, self.entries) == (other.n_rows, other.n_cols, other.entries)

    @property
    def mu(self) -> tuple[Fraction, ...]:
        out = [Fraction(0)] * self.n_rows
        for (i, _), v in self.entries.items():
            out[i] += v
        return tuple(out)

    @property
    def nu(self) -> tuple[Fraction, ...]:
        out = [Fraction(0)] * self.n_cols
        for (_, j), v in self.entries.items():
            out[j] += v
        return tuple(out)

    @property
    def mass(self) -> Fraction:
        return sum(self.entries.values(), Fraction(0))

    def cost(self, c: CostMatrix):
        total = Fraction(0)
        for (i, j), v in self.entries.items():
            cij = c[i, j]
            if cij == INF:
                return INF
            total += v * cij
        return total

    def support(self) -> "SupportSet":
        return SupportSet(frozenset(self.entries))

    def has_marginals(self, mu: Sequence, nu: Sequence) -> bool:
        return self.mu == _fracs(mu) and self.nu == _fracs(nu)

    def dense(self) -> list[list[Fraction]]:
        out = [[Fraction(0)] * self.n_cols for _ in range(self.n_rows)]
        for (i, j), v in self.entries.items():
            out[i][j] = v
        return out

    def to_dict(self) -> dict:
        return {"n_rows": self.n_rows, "n_cols": self.n_cols,
                "entries": [[i, j, format_rational(v)] for (i, j), v in self.entries.items()]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "TransportPlan":
        return cls(int(data["n_rows"]), int(data["n_cols"]),
                   {(int(i), int(j)): Fraction(v) for i, j, v in data["entries"]})


@dataclass(frozen=True)
class Potentials:
    phi: tuple[Fraction, ...]
    psi: tuple[Fraction, ...]

    def value(self, mu: Sequence, nu: Sequence) -> Fraction:
        return (sum((p * Fraction(m) for p, m in zip(self.phi, mu)), Fraction(0))
                + sum((q * Fraction(n) for q, n in zip(self.psi, nu)), Fraction(0)))

    def violations(self, c: CostMatrix) -> list[tuple[int, int]]:
        return [(i, j) for i, j, cij in c.arcs() if self.phi[i] + self.psi[j] > cij]

    def is_feasible(self, c: CostMatrix) -> bool:
        return not self.violations(c)

    def to_dict(self) -> dict:
        return {"phi": [format_rational(x) for x in self.phi], "psi": [format_rational(x) for x in self.psi]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Potentials":
        return cls(_fracs(data["phi"]), _fracs(data["psi"]))


@dataclass(frozen=True)
class SupportSet:
    pairs: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if not self.pairs:
            raise ValueError("support set must be nonempty")

    @classmethod
    def of(cls, pairs: Iterable[tuple[int, int]]) -> "SupportSet":
        return cls(frozenset((int(i), int(j)) for i, j in pairs))

    def sorted(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)

    def check(self, c: CostMatrix) -> None:
        for i, j in self.pairs:
            if not (0 <= i < c.n_rows and 0 <= j < c.n_cols):
                raise ValueError(f"pair ({i}, {j}) out of range")
            if not c.finite(i, j):
                raise ValueError(f"pair ({i}, {j}) sits on an infinite cost")


@dataclass(frozen=True)
class SlacknessReport:
    """Pairs where mass sits on a slack entry, and pairs where phi + psi > c."""

    slack_with_mass: tuple[tuple[int, int], ...]
    dual_infeasible: tuple[tuple[int, int], ...] = ()

    @property
    def violations(self) -> list[tuple[int, int]]:
        return sorted(set(self.slack_with_mass) | set(self.dual_infeasible))

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class Solution:
    plan: TransportPlan
    potentials: Potentials
    value: Fraction


# --------------------------------------------------------------------------
# the solver
# --------------------------------------------------------------------------


def _check_marginals(c: CostMatrix, mu: Sequence, nu: Sequence, normalized: bool) -> tuple[tuple, tuple]:
    mu, nu = _fracs(mu), _fracs(nu)
    if len(mu) != c.n_rows or len(nu) != c.n_cols:
        raise ValueError("marginal lengths do not match the cost matrix")
    if any(x < 0 for x in mu + nu):
        raise ValueError("marginals must be nonnegative")
    if sum(mu) != sum(nu):
        raise ValueError("marginals have different total mass")
    if normalized and sum(mu) != 1:
        raise ValueError("marginals must be probability vectors")
    return mu, nu


def solve(c: CostMatrix, mu: Sequence, nu: Sequence, normalized: bool = True) -> Solution:
    """Optimal vertex plan, optimal potentials (phi[0] = 0) and the common value."""
    mu, nu = _check_marginals(c, mu, nu, normalized)
    net = BipartiteFlow(c.n_rows, c.n_cols, [(i, j, cij, None) for i, j, cij in c.arcs()])
    net.run(mu, nu)
    net.cancel_support_cycles()
    phi, psi = net.potentials()
    if phi:
        shift = phi[0]
        phi = [p - shift for p in phi]
        psi = [q + shift for q in psi]
    plan = TransportPlan(c.n_rows, c.n_cols, {(a.tail, a.head): a.flow for a in net.arcs if a.flow})
    value = plan.cost(c)
    return Solution(plan, Potentials(tuple(phi), tuple(psi)), value)


def solve_primal(c: CostMatrix, mu: Sequence, nu: Sequence) -> tuple[TransportPlan, Fraction]:
    sol = solve(c, mu, nu)
    return sol.plan, sol.value


def solve_dual(c: CostMatrix, mu: Sequence, nu: Sequence) -> tuple[Potentials, Fraction]:
    sol = solve(c, mu, nu)
    return sol.potentials, sol.potentials.value(mu, nu)


def verify_slackness(plan: TransportPlan, pots: Potentials, c: CostMatrix) -> SlacknessReport:
    slack = tuple(sorted((i, j) for (i, j), v in plan.entries.items()
                         if v > 0 and (c[i, j] == INF or c[i, j] != pots.phi[i] + pots.psi[j])))
    return SlacknessReport(slack, tuple(pots.violations(c)))


# --------------------------------------------------------------------------
# perturbation map
# --------------------------------------------------------------------------


def _check_e_plus(f: Sequence, g: Sequence) -> tuple[tuple, tuple]:
    f, g = _fracs(f), _fracs(g)
    if any(x < 0 for x in f + g):
        raise ValueError("(f, g) must be componentwise nonnegative")
    if sum(f) != sum(g):
        raise ValueError("(f, g) must have equal totals")
    return f, g


def perturbation_value(c: CostMatrix, f: Sequence, g: Sequence):
    """Least transport cost with marginals (f, g); INF when no finite plan exists."""
    f, g = _check_e_plus(f, g)
    if sum(f) == 0:
        return Fraction(0)
    try:
        return solve(c, f, g, normalized=False).value
    except InfeasibleError:
        return INF


def perturbation_subgradient(c: CostMatrix, f0: Sequence, g0: Sequence) -> Potentials:
    f0, g0 = _check_e_plus(f0, g0)
    return solve(c, f0, g0, normalized=False).potentials


# --------------------------------------------------------------------------
# cyclical monotonicity
# --------------------------------------------------------------------------


def _has_negative_cycle(n: int, edges: list[tuple[int, int, Fraction]]) -> tuple[bool, list[Fraction]]:
    dist = [Fraction(0)] * n
    for _ in range(n):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            return False, dist
    return True, dist


def is_cyclically_monotone(gamma: SupportSet, c: CostMatrix) -> bool:
    """No cyclic rerouting of targets inside gamma lowers the total cost.

    Exchange graph on the pairs of gamma: p -> q with weight
    c(i_p, j_q) - c(i_p, j_p) whenever c(i_p, j_q) is finite.
    """
    gamma.check(c)
    pairs = gamma.sorted()
    edges = []
    for p, (ip, jp) in enumerate(pairs):
        for q, (_, jq) in enumerate(pairs):
            if p != q and c.finite(ip, jq):
                edges.append((p, q, c[ip, jq] - c[ip, jp]))
    neg, _ = _has_negative_cycle(len(pairs), edges)
    return not neg


def strong_monotone_witness(gamma: SupportSet, c: CostMatrix) -> Potentials | None:
    """phi, psi with phi + psi <= c on finite entries and equality on gamma, or None.

    Difference constraints over x = (phi_0.., -psi_0..): an edge col j -> row i
    of weight c(i, j) for every finite entry and row i -> col j of weight
    -c(i, j) for every pair of gamma; shortest distances are a solution.
    """
    gamma.check(c)
    n = c.n_rows + c.n_cols
    edges = [(c.n_rows + j, i, cij) for i, j, cij in c.arcs()]
    edges += [(i, c.n_rows + j, -c[i, j]) for i, j in gamma.sorted()]
    neg, dist = _has_negative_cycle(n, edges)
    if neg:
        return None
    phi = dist[: c.n_rows]
    psi = [-d for d in dist[c.n_rows:]]
    shift = phi[0]
    return Potentials(tuple(p - shift for p in phi), tuple(q + shift for q in psi))


# --------------------------------------------------------------------------
# costs from the rotation example
# --------------------------------------------------------------------------


def discretized_example_cost(tower: PrimeTower, level: int, graphs: Sequence = ()) -> CostMatrix:
    """h_+ on the identity, the single shift and the given permutation graphs.

    Each entry is 1 - (orbit count from x to y) clipped at 0; every other
    entry is infinite.  Graph entries hitting the same cell must agree.
    """
    g = Grid(tower, level)
    g.require_dense()
    phi, _ = phi_level(tower, level)
    v = phi.values
    M = g.M
    src = np.arange(M, dtype=np.int64)
    images = [src, (src + g.P) % M]
    for perm in graphs:
        if perm.level != level:
            raise ValueError("all graphs must live on the requested level")
        images.append(np.asarray(perm.image, dtype=np.int64))
    rows: list[dict[int, Fraction]] = [dict() for _ in range(M)]
    for img in images:
        h = np.maximum(1 + v - v[img], 0)
        for i, (j, hij) in enumerate(zip(img.tolist(), h.tolist())):
            val = Fraction(hij)
            old = rows[i].get(j)
            if old is not None and old != val:
                raise ValueError(f"graphs disagree on the cost of ({i}, {j}): {old} vs {val}")
            rows[i][j] = val
    return CostMatrix(M, M, tuple(rows))


def example_cost_entry(tower: PrimeTower, level: int, i: int, t: int) -> Fraction:
    """h_+ for the pair (cell i, T^t cell i) straight from an orbit count."""
    g = Grid(tower, level)
    return Fraction(max(1 - orbit_sum_fast(g, i, t % g.M), 0))


def graph_plan(image: Sequence[int] | np.ndarray, weight: Fraction | None = None) -> TransportPlan:
    """Uniform plan 1/M on the graph of a cell permutation."""
    image = [int(x) for x in image]
    M = len(image)
    w = Fraction(1, M) if weight is None else Fraction(weight)
    return TransportPlan(M, M, {(i, j): w for i, j in enumerate(image)})


# --------------------------------------------------------------------------
# restricted problems
# --------------------------------------------------------------------------


def restricted_primal(c: CostMatrix, pi0: TransportPlan, density_cap) -> Fraction:
    """min <c, pi> over plans with pi0's marginals and pi <= density_cap * pi0."""
    cap = Fraction(density_cap)
    if cap < 1:
        raise ValueError("density cap must be >= 1")
    if pi0.cost(c) == INF:
        raise InfeasibleError("pi0 has infinite cost")
    arcs = [(i, j, c[i, j], cap * v) for (i, j), v in pi0.entries.items()]
    net = BipartiteFlow(c.n_rows, c.n_cols, arcs)
    net.run(pi0.mu, pi0.nu)
    return sum((a.flow * a.cost for a in net.arcs), Fraction(0))


def epsilon_relaxed_dual(c: CostMatrix, pi0: TransportPlan, eps) -> Fraction:
    """max sum phi mu + sum psi nu with int (phi + psi - c)_+ d pi0 <= eps.

    Solved as an exact rational LP with a slack s_ij >= phi_i + psi_j - c_ij
    for each support pair of pi0.
    """
    from sympy import Rational
    from sympy.solvers.simplex import linprog

    eps = Fraction(eps)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if pi0.cost(c) == INF:
        raise InfeasibleError("pi0 has infinite cost")
    R = lambda q: Rational(q.numerator, q.denominator)  # noqa: E731
    n, m = c.n_rows, c.n_cols
    support = list(pi0.entries.items())
    k = len(support)
    n_var = n + m + k
    mu, nu = pi0.mu, pi0.nu
    obj = [-R(x) for x in mu] + [-R(x) for x in nu] + [0] * k
    A, b = [], []
    for s, ((i, j), _) in enumerate(support):
        row = [0] * n_var
        row[i] = 1
        row[n + j] = 1
        row[n + m + s] = -1
        A.append(row)
        b.append(R(c[i, j]))
    budget = [0] * (n + m) + [R(v) for _, v in support]
    A.append(budget)
    b.append(R(eps))
    bounds = [(None, None)] * (n + m) + [(0, None)] * k
    best, _ = linprog(obj, A, b, bounds=bounds)
    best = -best
    return Fraction(int(best.p), int(best.q))


def completion_feasibility(sigma: TransportPlan, beta, mu: Sequence, nu: Sequence,
                           points: Sequence | None = None) -> bool:
    """Can sigma be completed to a plan in Pi(mu, nu) using only pairs closer than beta?

    Cells are the points k / n on the circle unless explicit points are given.
    """
    mu, nu = _fracs(mu), _fracs(nu)
    beta = Fraction(beta)
    if len(mu) != sigma.n_rows or len(nu) != sigma.n_cols:
        raise ValueError("marginal lengths do not match sigma")
    row_left = [a - b for a, b in zip(mu, sigma.mu)]
    col_left = [a - b for a, b in zip(nu, sigma.nu)]
    if any(x < 0 for x in row_left + col_left):
        raise ValueError("sigma exceeds the marginals")
    if sum(row_left) != sum(col_left):
        raise ValueError("marginals have different total mass")
    if sum(row_left) == 0:
        return True
    if points is None:
        xs = [Fraction(i, sigma.n_rows) for i in range(sigma.n_rows)]
        ys = [Fraction(j, sigma.n_cols) for j in range(sigma.n_cols)]
    else:
        xs = ys = [Fraction(p) for p in points]

    def close(x: Fraction, y: Fraction) -> bool:
        # beta >= 1/2 allows every pair, antipodal ones included
        return beta * 2 >= 1 or circle_dist(x, y) < beta

    arcs = [(i, j, Fraction(0), None)
            for i in range(sigma.n_rows) if row_left[i] > 0
            for j in range(sigma.n_cols) if col_left[j] > 0 and close(xs[i], ys[j])]
    net = BipartiteFlow(sigma.n_rows, sigma.n_cols, arcs)
    try:
        net.run(row_left, col_left)
    except InfeasibleError:
        return False
    return True


__all__ += ["Solution", "example_cost_entry"]
