"""kantlab command line: tower | build | otsolve | monotone | check."""
from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checks
from . import example_builder as eb
from . import ot_duality as ot
from .grid_dynamics import Grid
from .number_tower import PrimeTower, TowerError, grow_tower, fast_growth_tower

SCHEMA_VERSION = "1.0"


class InputError(ValueError):
    """A malformed instance or flag combination."""


def _fmt(x) -> str:
    return ot.format_rational(x)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# tower selection
# --------------------------------------------------------------------------


def _parse_primes(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.replace(" ", "").split(",") if p)
    except ValueError as exc:
        raise InputError(f"--primes expects a comma separated list of integers, got {text!r}") from exc


def _tower_from_args(args, section: str = "none") -> PrimeTower:
    if getattr(args, "primes", None):
        tower = PrimeTower(_parse_primes(args.primes))
        if tower.depth < args.depth:
            raise InputError(f"--primes gives {tower.depth} primes but --depth is {args.depth}")
        return tower.prefix(args.depth)
    if args.depth < 1:
        raise InputError("--depth must be >= 1")
    PrimeTower.single(args.m1)  # validates m1
    preset = getattr(args, "preset", None) or ("paper" if getattr(args, "paper_schedule", False) else None)
    if preset == "paper":
        return fast_growth_tower(args.m1, args.depth)
    if preset == "minimal" and section in ("s3", "s4"):
        return eb.minimal_tower(args.m1, args.depth, section)
    return grow_tower(args.m1, args.depth, getattr(args, "min_growth", 0) or 0)


# --------------------------------------------------------------------------
# tower
# --------------------------------------------------------------------------


def cmd_tower(args) -> int:
    tower = _tower_from_args(args)
    tower.validate()
    out = {
        "primes": list(tower.primes),
        "M": [tower.M(n) for n in range(1, tower.depth + 1)],
        "P": [tower.P(n) for n in range(1, tower.depth + 1)],
        "alpha": [f"{tower.P(n)}/{tower.M(n)}" for n in range(1, tower.depth + 1)],
    }
    print(_dump(out) if args.verbose else json.dumps({"primes": out["primes"]}))
    return 0


# --------------------------------------------------------------------------
# build
# --------------------------------------------------------------------------


def _build_s3(tower: PrimeTower, depth: int, out_dir: Path | None) -> tuple[dict, bool]:
    levels, ok = [], True
    for perm, ledger, report in eb.build_refined_rotation(tower, depth):
        csv_path = None
        if out_dir is not None:
            csv_path = str(report.quasi_cost.to_csv(out_dir / f"s3_quasi_cost_level{report.level}.csv"))
        row = report.to_dict(csv_path)
        row["n_singular"] = int(len(ledger.singular_cells))
        row["tau_plan_cost"] = _fmt(eb.tau_plan_cost(perm))
        qc = report.quasi_cost.values
        row["invariants"] = {
            "permutation": perm.is_permutation(),
            "middle_avoiding": perm.avoids_middle(),
            "quasi_plus_defect_is_1": bool(np.all(qc == 1 + ledger.defect.values)),
            "singular_bound": len(ledger.singular_cells) <= max(2 * tower.M(report.level - 1) ** 2, 2),
        }
        ok &= all(row["invariants"].values())
        levels.append(row)
        print(f"level {report.level}: M = {report.M}, singular cells = {row['n_singular']}, "
              f"singular mass = {row['singular_mass']}, change fraction = {row['change_fraction']}, "
              f"<c, pi_tau> = {row['tau_plan_cost']}")
    profile = [[_fmt(m), _fmt(i)] for m, i in eb.buildup_profile(tower, depth)]
    return {"levels": levels, "buildup_profile": profile}, ok


def _build_s4(tower: PrimeTower, depth: int, out_dir: Path | None) -> tuple[dict, bool]:
    build = eb.build_zigzag_family(tower, depth)
    maps, ok = [], True
    for (n, j), rep in sorted(build.maps.items()):
        csv_path = None
        if out_dir is not None:
            csv_path = str(rep.quasi_cost.to_csv(out_dir / f"s4_quasi_cost_n{n}_j{j}.csv"))
        prof = eb.concentration_profile(rep)
        row = {
            "n": n, "j": j,
            "transport_cost": _fmt(rep.transport_cost),
            "displacement": _fmt(rep.displacement),
            "eta": _fmt(prof.eta),
            "peak": _fmt(prof.peak),
            "quasi_cost_csv_path": csv_path,
        }
        ok &= rep.transport_cost == 1
        maps.append(row)
        if n == j:
            print(f"j = {j}: transport cost {row['transport_cost']}, eta = {row['eta']}, peak = {row['peak']}, "
                  f"displacement = {row['displacement']}")
    return {"maps": maps}, ok


def cmd_build(args) -> int:
    tower = _tower_from_args(args, args.section)
    out_dir = Path(args.output_dir) if args.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if args.section == "s3":
        body, ok = _build_s3(tower, args.depth, out_dir)
    else:
        body, ok = _build_s4(tower, args.depth, out_dir)
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": {"section": args.section, "primes": list(tower.primes), "depth": args.depth, "seed": args.seed},
        args.section: body,
        "invariants_passed": bool(ok),
        "timings": {"build_seconds": round(time.perf_counter() - t0, 3)},
    }
    if out_dir is not None:
        (out_dir / "run_report.json").write_text(_dump(report) + "\n")
    elif args.json:
        print(_dump(report))
    return 0 if ok else 1


# --------------------------------------------------------------------------
# instances
# --------------------------------------------------------------------------


def _load_json(path: str) -> dict:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be an object")
    return data


def _read_cost(data: dict, where: str) -> ot.CostMatrix:
    if "cost" not in data:
        raise InputError(f"{where}: missing key 'cost'")
    raw = data["cost"]
    try:
        if isinstance(raw, list):
            return ot.CostMatrix.from_dense(raw)
        if isinstance(raw, dict):
            return ot.CostMatrix.from_dict(raw)
    except (ValueError, KeyError, TypeError, ZeroDivisionError) as exc:
        raise InputError(f"{where}: bad 'cost': {exc}") from exc
    raise InputError(f"{where}: 'cost' must be a matrix or an object")


def _read_marginal(data: dict, key: str, n: int, where: str) -> tuple[Fraction, ...]:
    if key not in data:
        return ot.uniform(n)
    try:
        vals = tuple(Fraction(x) for x in data[key])
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise InputError(f"{where}: bad '{key}': {exc}") from exc
    if len(vals) != n:
        raise InputError(f"{where}: '{key}' has {len(vals)} entries, expected {n}")
    return vals


def _example_instance(args) -> tuple[ot.CostMatrix, tuple, tuple, list[tuple[str, ot.TransportPlan]]]:
    tower = _tower_from_args(args, args.example)
    level = args.depth
    if args.example == "s3":
        *_, (perm, _, _) = eb.build_refined_rotation(tower, level)
    else:
        perm = eb.build_zigzag_family(tower, level).diagonal(level).perm
    c = ot.discretized_example_cost(tower, level, [perm])
    M = c.n_rows
    g = Grid(tower, level)
    src = np.arange(M)
    named = [("pi_0", ot.graph_plan(src)), ("pi_1", ot.graph_plan((src + g.P) % M)),
             ("pi_tau", ot.graph_plan(perm.image))]
    return c, ot.uniform(M), ot.uniform(M), named


def cmd_otsolve(args) -> int:
    if args.example:
        c, mu, nu, named = _example_instance(args)
    elif args.instance:
        data = _load_json(args.instance)
        c = _read_cost(data, args.instance)
        mu = _read_marginal(data, "mu", c.n_rows, args.instance)
        nu = _read_marginal(data, "nu", c.n_cols, args.instance)
        named = []
    else:
        raise InputError("give an instance file or --example")
    sol = ot.solve(c, mu, nu)
    dual = sol.potentials.value(mu, nu)
    rep = ot.verify_slackness(sol.plan, sol.potentials, c)
    line = f"P = D = {sol.value}" if dual == sol.value else f"P = {sol.value}, D = {dual}"
    optimal = [name for name, plan in named if plan.cost(c) == sol.value]
    if optimal:
        line += "; plan " + ", ".join(f"{n}" for n in optimal) + " optimal"
    print(line)
    for name, plan in named:
        print(f"<c, {name}> = {plan.cost(c)}")
    print("slackness: ok" if rep.ok else f"slackness violations: {rep.violations}")
    if args.output:
        Path(args.output).write_text(_dump({
            "schema_version": SCHEMA_VERSION,
            "primal_value": _fmt(sol.value),
            "dual_value": _fmt(dual),
            "plan": sol.plan.to_dict(),
            "potentials": sol.potentials.to_dict(),
            "slackness_violations": [list(p) for p in rep.violations],
        }) + "\n")
    return 0 if dual == sol.value and rep.ok else 1


def cmd_monotone(args) -> int:
    data = _load_json(args.instance)
    c = _read_cost(data, args.instance)
    if "gamma" not in data:
        raise InputError(f"{args.instance}: missing key 'gamma'")
    base = 0 if data.get("zero_based", False) else 1
    try:
        gamma = ot.SupportSet.of((int(i) - base, int(j) - base) for i, j in data["gamma"])
        gamma.check(c)
    except (ValueError, TypeError) as exc:
        raise InputError(f"{args.instance}: bad 'gamma': {exc}") from exc
    cm = ot.is_cyclically_monotone(gamma, c)
    w = ot.strong_monotone_witness(gamma, c)
    if cm and w is not None:
        print(f"cyclically monotone; witness phi = {[_fmt(x) for x in w.phi]}, psi = {[_fmt(x) for x in w.psi]}")
    elif not cm and w is None:
        print("not cyclically monotone; no witness")
    else:
        print(f"inconsistent: cycle check says {cm}, witness {'found' if w else 'missing'}")
        return 1
    return 0


def cmd_check(args) -> int:
    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = checks.run_all(args.seed, only)
    for r in results:
        print(r.line())
    if args.json:
        Path(args.json).write_text(_dump({
            "schema_version": SCHEMA_VERSION,
            "seed": args.seed,
            "results": [{"criterion": r.number, "name": r.name, "passed": r.passed, "detail": r.detail}
                        for r in results],
            "timings": {str(r.number): round(r.seconds, 3) for r in results},
        }) + "\n")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return 0 if n_fail == 0 else 1


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_tower_flags(p: argparse.ArgumentParser, presets: bool = False) -> None:
    p.add_argument("--m1", type=int, default=5, help="first prime (default 5)")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--primes", help="explicit comma separated primes, overrides --m1")
    p.add_argument("--min-growth", type=int, default=0, help="lower bound for every new prime")
    if presets:
        p.add_argument("--preset", choices=["minimal", "paper"], default="minimal",
                       help="minimal: smallest primes the construction accepts; "
                            "paper: m_n > 40 M_{n-1}^5")
    else:
        p.add_argument("--paper-schedule", action="store_true", help="use m_n > 40 M_{n-1}^5")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kantlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tower", help="print an admissible prime tower")
    _add_tower_flags(p)
    p.add_argument("-v", "--verbose", action="store_true", help="also print M_n, P_n and alpha_n")
    p.set_defaults(func=cmd_tower)

    p = sub.add_parser("build", help="run a construction and write its reports")
    p.add_argument("--section", choices=["s3", "s4"], default="s3",
                   help="s3: refined rotation with singular cells; s4: zig-zag family")
    _add_tower_flags(p, presets=True)
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", help="print the run report when no output dir is given")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("otsolve", help="solve a transport instance exactly")
    p.add_argument("instance", nargs="?", help="JSON file with cost, mu, nu")
    p.add_argument("--example", choices=["s3", "s4"], help="discretized example cost; s3 uses the refined rotation, s4 the zig-zag map")
    _add_tower_flags(p, presets=True)
    p.add_argument("--output", help="write the solution JSON here")
    p.set_defaults(func=cmd_otsolve)

    p = sub.add_parser("monotone", help="cyclical monotonicity of a support set")
    p.add_argument("instance", help="JSON file with cost and gamma (1-based pairs)")
    p.set_defaults(func=cmd_monotone)

    p = sub.add_parser("check", help="run the acceptance suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", help="comma separated criterion numbers")
    p.add_argument("--json", help="write results JSON here")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, TowerError, eb.ConstructionError, ot.InfeasibleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
