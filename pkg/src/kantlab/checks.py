"""The acceptance suite, shared by the test-suite and `kantlab check`."""
from __future__ import annotations

import itertools
import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import example_builder as eb
from . import ot_duality as ot
from .grid_dynamics import Grid, phi_level
from .number_tower import PrimeTower, alternating_residue, extend_tower, fast_growth_tower


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _fmt(x) -> str:
    return ot.format_rational(x)


# --------------------------------------------------------------------------
# random instances
# --------------------------------------------------------------------------


def random_cost(rng: random.Random, n: int, inf_rate: float = 0.2) -> ot.CostMatrix:
    """Rational costs k/10 in [0, 10]; a hidden permutation stays finite."""
    perm = list(range(n))
    rng.shuffle(perm)
    rows = [[Fraction(rng.randint(0, 100), 10) if (perm[i] == j or rng.random() >= inf_rate) else "inf"
             for j in range(n)] for i in range(n)]
    return ot.CostMatrix.from_dense(rows)


def brute_force_assignment(c: ot.CostMatrix) -> Fraction:
    """Minimum over all permutation plans with uniform marginals."""
    n = c.n_rows
    best = None
    for p in itertools.permutations(range(n)):
        if all(c.finite(i, p[i]) for i in range(n)):
            v = sum((c[i, p[i]] for i in range(n)), Fraction(0)) / n
            best = v if best is None or v < best else best
    return best


def random_marginal(rng: random.Random, n: int, total: Fraction = Fraction(1)) -> tuple[Fraction, ...]:
    w = [rng.randint(0, 6) for _ in range(n)]
    if sum(w) == 0:
        w[rng.randrange(n)] = 1
    s = sum(w)
    return tuple(Fraction(x, s) * total for x in w)


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------


def criterion_1(seed: int = 0) -> tuple[bool, str]:
    rng = random.Random(seed)
    mismatches = slack = oracle_bad = oracle_runs = 0
    for _ in range(200):
        n = rng.randint(1, 8)
        c = random_cost(rng, n)
        mu = nu = ot.uniform(n)
        sol = ot.solve(c, mu, nu)
        if sol.potentials.value(mu, nu) != sol.value:
            mismatches += 1
        if not ot.verify_slackness(sol.plan, sol.potentials, c).ok:
            slack += 1
        if n <= 6:
            oracle_runs += 1
            if brute_force_assignment(c) != sol.value:
                oracle_bad += 1
    ok = mismatches == slack == oracle_bad == 0
    return ok, (f"200 instances: {mismatches} P != D, {slack} slackness reports non-empty, "
                f"{oracle_bad}/{oracle_runs} brute-force disagreements")


def criterion_2(seed: int = 0) -> tuple[bool, str]:
    rng = random.Random(seed)
    cells = [(i, j) for i in range(3) for j in range(3)]
    disagree = n_cm = 0
    for _ in range(20):
        c = ot.CostMatrix.from_dense([[Fraction(rng.randint(0, 100), 10) for _ in range(3)] for _ in range(3)])
        for mask in range(1, 512):
            gamma = ot.SupportSet.of(cells[k] for k in range(9) if mask >> k & 1)
            cm = ot.is_cyclically_monotone(gamma, c)
            w = ot.strong_monotone_witness(gamma, c)
            n_cm += cm
            if cm != (w is not None):
                disagree += 1
    return disagree == 0, f"20 x 511 support sets, {n_cm} monotone, {disagree} disagreements"


def criterion_3(seed: int = 0) -> tuple[bool, str]:
    rng = random.Random(seed)
    homog = convex = subgrad = 0
    for _ in range(20):
        n = rng.randint(2, 5)
        c = random_cost(rng, n)
        f0 = g0 = ot.uniform(n)
        pots = ot.perturbation_subgradient(c, f0, g0)
        base = ot.perturbation_value(c, f0, g0)
        if base != pots.value(f0, g0):
            subgrad += 1
        for lam in (Fraction(0), Fraction(2), Fraction(1, 3)):
            scaled = ot.perturbation_value(c, [lam * x for x in f0], [lam * x for x in g0])
            if scaled != lam * base:
                homog += 1
        for _ in range(100):
            total = Fraction(rng.randint(1, 5), rng.randint(1, 3))
            f, g = random_marginal(rng, n, total), random_marginal(rng, n, total)
            val = ot.perturbation_value(c, f, g)
            if val != ot.INF and val < pots.value(f, g):
                subgrad += 1
        for _ in range(10):
            t1 = Fraction(rng.randint(1, 4))
            t2 = Fraction(rng.randint(1, 4))
            f1, g1 = random_marginal(rng, n, t1), random_marginal(rng, n, t1)
            f2, g2 = random_marginal(rng, n, t2), random_marginal(rng, n, t2)
            mid = ot.perturbation_value(c, [(a + b) / 2 for a, b in zip(f1, f2)], [(a + b) / 2 for a, b in zip(g1, g2)])
            v1, v2 = ot.perturbation_value(c, f1, g1), ot.perturbation_value(c, f2, g2)
            if v1 != ot.INF and v2 != ot.INF and mid > (v1 + v2) / 2:
                convex += 1
    ok = homog == convex == subgrad == 0
    return ok, f"20 instances: {homog} homogeneity, {convex} convexity, {subgrad} subgradient failures"


def criterion_4(seed: int = 0) -> tuple[bool, str]:
    tower = PrimeTower.single(11)
    phi, _ = phi_level(tower, 1)
    perm, ledger, report = eb.build_level1(tower)
    want_phi = [0, 1, 2, 3, 4, 5, 5, 4, 3, 2, 1]
    want_tau = [4, -1, -1, -1, -1, 0, 1, 1, 1, 1, -4]
    want_image = [4, 0, 1, 2, 3, 5, 7, 8, 9, 10, 6]
    q = report.quasi_cost.values.tolist()
    dist = {v: q.count(v) for v in set(q)}
    checks = {
        "phi": phi.values.tolist() == want_phi,
        "tau": perm.tau.tolist() == want_tau,
        "image": perm.image.tolist() == want_image,
        "quasi": dist == {2: 8, -3: 2, 1: 1},
        "mass": ledger.singular_mass == Fraction(-8, 11) == Fraction(-1) + Fraction(3, 11),
    }
    bad = [k for k, v in checks.items() if not v]
    return not bad, f"quasi-cost counts {dict(sorted(dist.items()))}, singular mass {_fmt(ledger.singular_mass)}" + (
        f"; mismatched: {bad}" if bad else "")


def criterion_5(seed: int = 0) -> tuple[bool, str]:
    tower = PrimeTower((5, 11))
    (p1, l1, _), (p2, l2, r2) = list(eb.build_refined_rotation(tower))
    sing_parents = set(l1.singular_cells.tolist())
    block = np.arange(55) // 11
    good_under_singular = (l2.kind == eb.GOOD) & np.isin(block, list(sing_parents))
    sm = l2.singular_mass
    checks = {
        "permutation": p2.is_permutation() and p2.M == 55,
        "block-respecting": p2.respects_blocks(p1),
        "middle-avoiding": p2.avoids_middle(),
        "defect 0 on good subcells of singular parents": bool(np.all(l2.defect.values[good_under_singular] == 0)),
        "20 singular cells": len(l2.singular_cells) == 2 * 5 * (5 - 3),
        "singular mass in (-1, -2/5)": Fraction(-1) < sm < Fraction(-2, 5),
    }
    bad = [k for k, v in checks.items() if not v]
    return not bad, (f"{len(l2.singular_cells)} singular cells, singular mass {_fmt(sm)}"
                     + (f"; failed: {bad}" if bad else ""))


def criterion_6(seed: int = 0) -> tuple[bool, str]:
    fitted = {}
    for m2 in (11, 31, 41, 61, 71):
        *_, (_, ledger, _) = eb.build_refined_rotation(PrimeTower((5, m2)))
        fitted[m2] = abs(ledger.singular_mass - (Fraction(-1) + Fraction(3, 5))) * m2
    C = max(fitted.values())
    lo = min(fitted.values())
    ratio = C / lo if lo else (Fraction(1) if C == 0 else math.inf)
    ok = ratio < 3 and all(abs(v) <= C for v in fitted.values())
    return ok, f"fitted C = {_fmt(C)}, per-m2 C = {[ _fmt(v) for v in fitted.values()]}, max/min = {float(ratio):.3f}"


def criterion_7(seed: int = 0) -> tuple[bool, str]:
    tower = PrimeTower((5, 11))
    *_, (p2, _, _) = eb.build_refined_rotation(tower)
    c = ot.discretized_example_cost(tower, 2, [p2])
    M = 55
    src = np.arange(M)
    g = Grid(tower, 2)
    pi0 = ot.graph_plan(src)
    pi1 = ot.graph_plan((src + g.P) % M)
    pit = ot.graph_plan(p2.image)
    sol = ot.solve(c, ot.uniform(M), ot.uniform(M))
    small = {
        "<c,pi_0> = 1": pi0.cost(c) == 1,
        "<c,pi_1> = 1": pi1.cost(c) == 1,
        "LP optimum = 1": sol.value == 1 and sol.potentials.value(ot.uniform(M), ot.uniform(M)) == 1,
        "<c,pi_tau> > 1": pit.cost(c) > 1,
    }
    big = fast_growth_tower(5, 2)
    *_, (pb, _, _) = eb.build_refined_rotation(big)
    gb = Grid(big, 2)
    phi, _ = phi_level(big, 2)
    v = phi.values
    shift = (np.arange(gb.M) + gb.P) % gb.M
    c0 = Fraction(int(gb.M), gb.M)  # diagonal cost is 1 everywhere
    c1 = Fraction(int(np.maximum(1 + v - v[shift], 0).sum()), gb.M)
    ct = eb.tau_plan_cost(pb)
    small["fast-growth tower <c,pi_0> = <c,pi_1> = 1"] = c0 == 1 and c1 == 1
    small["fast-growth tower <c,pi_tau> >= 3/2"] = ct >= Fraction(3, 2)
    bad = [k for k, ok in small.items() if not ok]
    return not bad, (f"(5,11): <c,pi_tau> = {_fmt(pit.cost(c))}, LP = {_fmt(sol.value)}; "
                     f"m_2 = {big.m(2)}: <c,pi_tau> = {_fmt(ct)} ~ {float(ct):.6f}"
                     + (f"; failed: {bad}" if bad else ""))


def criterion_8(seed: int = 0) -> tuple[bool, str]:
    tower = fast_growth_tower(5, 3)
    prof = eb.buildup_profile(tower, 3)
    measures = [m for m, _ in prof]
    integrals = [i for _, i in prof]
    drop_ok = all(measures[k] * 10 <= measures[k - 1] for k in range(1, len(prof)))
    base = integrals[0]
    band_ok = all(abs(x - base) <= abs(base) / 4 for x in integrals)
    desc = ", ".join(f"n={k + 1}: {float(m):.3e} / {float(i):.7f}" for k, (m, i) in enumerate(prof))
    return drop_ok and band_ok, f"measure / integral per level: {desc}"


def criterion_9(seed: int = 0) -> tuple[bool, str]:
    tower = eb.minimal_tower(5, 3, "s4")
    build = eb.build_zigzag_family(tower, 3)
    cost_bad, disp_bad, eta_bad = [], [], []
    for (n, j), rep in sorted(build.maps.items()):
        if rep.transport_cost != 1:
            cost_bad.append((n, j))
        if not rep.displacement < Fraction(1, tower.M(n)):
            disp_bad.append((n, j, _fmt(rep.displacement)))
    for j in range(1, 4):
        prof = eb.concentration_profile(build.diagonal(j))
        if prof.eta > Fraction(2 * tower.M(j - 1) + 1, tower.m(j)):
            eta_bad.append(j)
    ok = not (cost_bad or disp_bad or eta_bad)
    return ok, (f"tower {list(tower.primes)}: cost != 1 at {cost_bad}, eta bound broken at {eta_bad}, "
                f"displacement >= 1/M_n at {disp_bad}")


def completion_sigma(tower: PrimeTower, seed: int, n_diag: int = 16) -> ot.TransportPlan:
    """Shift plan on the left cells plus a seeded set of diagonal cells."""
    g = Grid(tower, 2)
    M = g.M
    rng = random.Random(seed)
    left = range(g.mid)
    entries = {(i, (i + g.P) % M): Fraction(1, M) for i in left}
    used_cols = {j for _, j in entries}
    free = [i for i in range(M) if i >= g.mid and i not in used_cols]
    for i in sorted(rng.sample(free, min(n_diag, len(free)))):
        entries[(i, i)] = Fraction(1, M)
    return ot.TransportPlan(M, M, entries)


def criterion_10(seed: int = 0) -> tuple[bool, str]:
    tower = PrimeTower((5, 11))
    build = eb.build_zigzag_family(tower, 2)
    c = ot.discretized_example_cost(tower, 2, [build.diagonal(2).perm])
    M = 55
    u = ot.uniform(M)
    sol = ot.solve(c, u, u)
    lp_ok = sol.value == 1 and sol.potentials.value(u, u) == 1
    beta = Fraction(1, 2 * M)
    found = None
    for s in range(seed, seed + 5):
        sigma = completion_sigma(tower, s)
        mass, cost = sigma.mass, sigma.cost(c)
        if mass >= Fraction(2, 3) and cost <= Fraction(1, 2):
            if not ot.completion_feasibility(sigma, beta, u, u):
                found = (s, mass, cost)
                break
    ok = lp_ok and found is not None
    detail = f"P = {_fmt(sol.value)}, D = {_fmt(sol.potentials.value(u, u))}; "
    detail += (f"seed {found[0]}: |sigma| = {_fmt(found[1])}, cost {_fmt(found[2])}, no completion at beta = {_fmt(beta)}"
               if found else "no infeasible sigma found")
    return ok, detail


def criterion_11(seed: int = 0) -> tuple[bool, str]:
    t2 = PrimeTower((5, 11))
    t3 = PrimeTower((5, 11, 89))
    rebuilt = extend_tower(extend_tower(PrimeTower.single(5)))
    ok = rebuilt == t3 and extend_tower(PrimeTower.single(5)) == t2
    for t in (t2, t3):
        t.validate()
        for n in range(1, t.depth + 1):
            ok &= math.gcd(t.P(n), t.M(n)) == 1
        for i in range(1, t.depth + 1):
            for j in range(i + 1, t.depth + 1):
                want = 1 if j == i + 1 else t.m(i) - 1
                ok &= t.m(j) % t.m(i) == want
        for k in range(1, t.depth):
            r = alternating_residue(t, k, t.depth)
            ok &= r == (t.m(k) - 1 if (t.depth - k) % 2 == 0 else 2)
    return ok, f"P_3/M_3 = {t3.P(3)}/{t3.M(3)}, congruences and gcd checked for n <= 3"


CRITERIA: dict[int, tuple[str, Callable[[int], tuple[bool, str]], float]] = {
    1: ("strong duality on random instances", criterion_1, 30),
    2: ("cyclical vs strong cyclical monotonicity", criterion_2, 10),
    3: ("perturbation map properties", criterion_3, math.inf),
    4: ("level-1 reproduction at M_1 = 11", criterion_4, 1),
    5: ("level-2 construction on (5, 11)", criterion_5, 1),
    6: ("singular-mass trend", criterion_6, 10),
    7: ("example transport values", criterion_7, 60),
    8: ("build-up profile to depth 3", criterion_8, math.inf),
    9: ("concentrating family identities", criterion_9, 10),
    10: ("discrete completion gap", criterion_10, 60),
    11: ("prime tower congruences", criterion_11, 1),
}


def run_criterion(number: int, seed: int = 0) -> CheckResult:
    name, fn, limit = CRITERIA[number]
    t0 = time.perf_counter()
    try:
        ok, detail = fn(seed)
    except Exception as exc:  # report, never crash the suite
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    dt = time.perf_counter() - t0
    if dt > limit:
        ok = False
        detail += f"; over the {limit:g}s budget"
    return CheckResult(number, name, ok, detail, dt)


def run_all(seed: int = 0, only: list[int] | None = None) -> list[CheckResult]:
    return [run_criterion(k, seed) for k in (only or sorted(CRITERIA))]
