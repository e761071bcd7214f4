"""Walk through the refined rotation on a small prime tower.

Run:  python demos/rotation_construction.py
"""
from collections import Counter

from kantlab.example_builder import build_refined_rotation, minimal_tower, tau_plan_cost
from kantlab.grid_dynamics import phi_level
from kantlab.number_tower import PrimeTower, alpha


def show_level1(m1: int) -> None:
    tower = PrimeTower((m1,))
    phi, _ = phi_level(tower, 1)
    (perm, ledger, report), = build_refined_rotation(tower, 1)
    print(f"M_1 = {m1}, alpha_1 = {alpha(tower, 1)}")
    print("  phi   :", phi.values.tolist())
    print("  tau   :", perm.tau.tolist())
    print("  quasi :", report.quasi_cost.values.tolist())
    print("  counts:", dict(sorted(Counter(report.quasi_cost.values.tolist()).items())))
    print("  singular mass:", ledger.singular_mass)


def show_tower(tower: PrimeTower) -> None:
    print(f"tower {list(tower.primes)}")
    for perm, ledger, report in build_refined_rotation(tower):
        print(f"  level {report.level}: M = {report.M:>6}, "
              f"{len(ledger.singular_cells):>4} singular cells, "
              f"singular mass {ledger.singular_mass}, "
              f"changed fraction {report.change_fraction}, "
              f"<c, pi_tau> = {tau_plan_cost(perm)}")


def main():
    show_level1(5)
    show_level1(11)
    print()
    show_tower(PrimeTower((5, 11)))
    # the least admissible primes for three levels
    show_tower(minimal_tower(5, 3))


if __name__ == "__main__":
    main()
