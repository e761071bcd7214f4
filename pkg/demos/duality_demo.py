"""Exact discrete duality: primal plan, dual potentials, and where they touch.

Run:  python demos/duality_demo.py
"""
import random
from fractions import Fraction

from kantlab import ot_duality as ot
from kantlab.example_builder import build_refined_rotation
from kantlab.grid_dynamics import Grid
from kantlab.number_tower import PrimeTower


def small_random_instance(seed: int = 3):
    rng = random.Random(seed)
    dense = [[Fraction(rng.randint(0, 9)) if rng.random() > 0.25 else ot.INF for _ in range(4)]
             for _ in range(4)]
    for i in range(4):
        dense[i][i] = Fraction(rng.randint(0, 9))  # keep a feasible plan around
    return ot.CostMatrix.from_dense(dense)


def main():
    c = small_random_instance()
    mu = nu = ot.uniform(4)
    sol = ot.solve(c, mu, nu)
    print("primal value :", sol.value)
    print("dual value   :", sol.potentials.value(mu, nu))
    print("plan support :", sol.plan.support().sorted())
    print("slackness ok :", ot.verify_slackness(sol.plan, sol.potentials, c).ok)
    print("support is cyclically monotone:", ot.is_cyclically_monotone(sol.plan.support(), c))

    # the discretized cost on the level-2 grid of (5, 11)
    tower = PrimeTower((5, 11))
    *_, (perm, _, _) = build_refined_rotation(tower, 2)
    cost = ot.discretized_example_cost(tower, 2, [perm])
    M = cost.n_rows
    sol = ot.solve(cost, ot.uniform(M), ot.uniform(M))
    src = list(range(M))
    step = Grid(tower, 2).P
    print()
    print(f"level-2 grid, {M} cells: optimal value {sol.value}")
    for name, image in [("identity", src), ("one step", [(x + step) % M for x in src]), ("tau", perm.image)]:
        print(f"  <c, {name}> = {ot.graph_plan(image).cost(cost)}")


if __name__ == "__main__":
    main()
