"""The zig-zag maps: each one moves mass by about one cell but still costs 1.

Run:  python demos/zigzag_family.py
"""
from kantlab.example_builder import build_zigzag_family, concentration_profile, minimal_tower


def main():
    tower = minimal_tower(5, 3, section="s4")
    fam = build_zigzag_family(tower)
    print(f"tower {list(tower.primes)}")
    for (n, j), rep in sorted(fam.maps.items()):
        prof = concentration_profile(rep)
        print(f"  tau_{n},{j}: cost {rep.transport_cost}, displacement {rep.displacement}, "
              f"support fraction {prof.eta}, peak {prof.peak}")


if __name__ == "__main__":
    main()
