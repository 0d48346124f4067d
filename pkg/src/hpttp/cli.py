"""Command-line interface: ``hpttp gen|net stats|prep|solve|validate|report``."""
from __future__ import annotations

import argparse
import logging
import sys
import time

from hpttp.benders import MODES, BendersConfig, BendersSolver
from hpttp.instance import (InstanceError, generate_micro, generate_peaked, generate_toy,
                            load_instance)
from hpttp.model import PREP_ALL, SolveReport, build_problem, solve_monolithic
from hpttp.pricing import CG_MODES
from hpttp.solver import SolverError, Status, set_seed
from hpttp.tsnet import (build_extra_subnetwork, build_network, build_passenger_subnetworks,
                         build_train_subnetworks)

EXIT = {Status.OPTIMAL.value: 0, Status.FEASIBLE.value: 2, Status.INFEASIBLE.value: 3,
        Status.LIMIT.value: 4}


def _prep(text: str) -> tuple[str, ...]:
    if text in ("", "none"):
        return ()
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = set(items) - set(PREP_ALL)
    if bad:
        raise argparse.ArgumentTypeError(f"unknown reduction(s) {sorted(bad)}; choose from {','.join(PREP_ALL)}")
    return items


def _table(rows: list[tuple], header: tuple) -> str:
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    out += [fmt.format(*r) for r in rows]
    return "\n".join(out)


# -- subcommands -----------------------------------------------------------

def cmd_gen(args) -> int:
    if args.kind == "toy":
        kw = {}
        for name in ("tau", "xi", "budget"):
            if getattr(args, name) is not None:
                kw[name] = getattr(args, name)
        inst = generate_toy(args.seed, args.scale, with_extra=not args.no_extra, **kw)
    elif args.kind == "micro":
        inst = generate_micro(args.seed, tau=args.tau, xi=args.xi)
    else:
        inst = generate_peaked(args.seed, xi=1.0 if args.xi is None else args.xi, extra=not args.no_extra)
    inst.dump(args.out)
    print(f"wrote {args.out}: {len(inst.stations)} stations, {len(inst.trains)} trains, "
          f"{len(inst.groups)} groups")
    return 0


def cmd_net_stats(args) -> int:
    inst = load_instance(args.instance)
    net = build_network(inst)
    subs = build_train_subnetworks(net, inst)
    extra = build_extra_subnetwork(net, inst)
    pax = build_passenger_subnetworks(net, inst)
    counts = net.counts()
    rows = sorted(counts.items())
    rows.append(("train subnetwork arcs", sum(len(s.arcs) for s in subs.values())))
    rows.append(("extra subnetwork arcs", len(extra.arcs)))
    rows.append(("passenger subnetwork arcs", sum(len(s.arcs) for s in pax.values())))
    print(_table(rows, ("item", "count")))
    return 0


def cmd_prep(args) -> int:
    inst = load_instance(args.instance)
    t0 = time.perf_counter()
    base = build_problem(inst, prep=())
    before = {"train": sum(len(s.arcs) for s in base.train_subs.values()) + len(base.extra.arcs),
              "passenger": sum(len(s.arcs) for s in base.pax_subs.values())}
    prob = build_problem(inst, prep=args.prep, backend=args.solver, bounds_lp=args.bounds_lp)
    rows = []
    for fam in ("train", "passenger"):
        removed = prob.report.arcs_removed.get(fam, 0)
        rows.append((fam, before[fam], removed, before[fam] - removed))
    print(_table(rows, ("arcs", "before", "removed", "after")))
    bounds = prob.report.inventory_bounds
    if bounds:
        fleet = {u: inst.total_fleet(u) for u in inst.rsu_types}
        tight = sum(1 for (u, _), b in bounds.items() if b < fleet[u])
        print(f"inventory bounds: {len(bounds)} variables, {tight} below fleet size")
    for note in prob.report.notes:
        print(f"note: {note}")
    print(f"time: {time.perf_counter() - t0:.2f}s")
    return 0


def _config(args) -> BendersConfig:
    return BendersConfig(mode=args.mode, cg=args.cg, klp=args.klp, lp_gap=args.lp_gap, gap=args.gap,
                         alpha0=args.alpha0, alphabar=args.alphabar, eps=args.eps,
                         time_limit=args.timelimit, backend=args.solver, threads=args.threads)


def _finish(inst, rep: SolveReport, out: str | None) -> int:
    from hpttp.report import write_report
    from hpttp.validate import validate

    code = EXIT.get(rep.status, 1)
    obj = "-" if rep.objective is None else f"{rep.objective:.6g}"
    print(f"status {rep.status}  objective {obj}  lower bound {rep.lower_bound}  gap {rep.gap}")
    if rep.objective is None or not rep.trains:
        return code
    verdict = validate(inst, rep)
    print(f"validation {verdict.summary()}")
    for v in verdict.violations[:20]:
        print(f"  {v}")
    if not verdict.ok:
        print("no report written: the solution failed validation", file=sys.stderr)
        return 1
    if out:
        for f in write_report(inst, rep, out):
            print(f"wrote {f}")
    return code


def cmd_solve(args) -> int:
    from hpttp.psr import PsrSolver, select_fixed_groups, solve_delete

    inst = load_instance(args.instance)
    t0 = time.perf_counter()
    prob = build_problem(inst, prep=args.prep, backend=args.solver, bounds_lp=args.bounds_lp)
    t_build = time.perf_counter() - t0
    cfg = _config(args)
    if args.formulation in ("arc", "path"):
        rep = solve_monolithic(prob, args.formulation, args.gap, args.timelimit, args.solver, args.threads)
    elif args.psr_fix:
        res = PsrSolver(prob, select_fixed_groups(prob, args.psr_fix), cfg).run()
        print(f"fixed-route solve: {res.psr.status} objective {res.psr.objective}")
        rep = res.post or res.psr
    elif args.psr_delete or args.none_routed:
        res = solve_delete(prob, None if args.none_routed else args.psr_delete, cfg)
        print(f"solve without dropped groups: {res.psr.status} objective {res.psr.objective}")
        rep = res.post or res.psr
    else:
        rep = BendersSolver(prob, cfg).run()
    rep.timings = dict(rep.timings, build=t_build)
    return _finish(inst, rep, args.out)


def cmd_validate(args) -> int:
    from hpttp.validate import validate

    inst = load_instance(args.instance)
    rep = SolveReport.load(args.report)
    verdict = validate(inst, rep)
    print(verdict.summary())
    for v in verdict.violations:
        print(f"  {v}  witness={v.witness}")
    return 0 if verdict.ok else 1


def cmd_report(args) -> int:
    inst = load_instance(args.instance)
    rep = SolveReport.load(args.report)
    return 1 if _finish(inst, rep, args.out) == 1 else 0


# -- parser ----------------------------------------------------------------

def _solver_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", default=None, help="backend: highs (default) or lp-exec")
    p.add_argument("--threads", type=int, default=None, help="solver threads")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hpttp", description="Hybrid periodic train timetabling")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("kind", choices=["toy", "micro", "peaked"])
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--tau", type=float, default=None)
    g.add_argument("--xi", type=float, default=None)
    g.add_argument("--budget", type=float, default=None)
    g.add_argument("--no-extra", action="store_true", help="no extra-train paths")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    n = sub.add_parser("net", help="time-space network information")
    nsub = n.add_subparsers(dest="net_command", required=True)
    ns = nsub.add_parser("stats", help="vertex and arc counts")
    ns.add_argument("--instance", required=True)
    ns.set_defaults(func=cmd_net_stats)

    pr = sub.add_parser("prep", help="run the network reductions and print what they removed")
    pr.add_argument("--instance", required=True)
    pr.add_argument("--prep", type=_prep, default=PREP_ALL)
    pr.add_argument("--bounds-lp", action="store_true", help="inventory bounds from LP optima")
    _solver_opts(pr)
    pr.set_defaults(func=cmd_prep)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--formulation", choices=["arc", "path", "benders"], default="benders")
    s.add_argument("--mode", choices=MODES, default="lp-pareto")
    s.add_argument("--cg", choices=CG_MODES, default="cc+pp")
    s.add_argument("--klp", type=int, default=50, help="LP-phase iteration cap")
    s.add_argument("--gap", type=float, default=0.0, help="target relative gap")
    s.add_argument("--lp-gap", type=float, default=0.01, help="LP-phase stopping gap")
    s.add_argument("--alpha0", type=float, default=0.04)
    s.add_argument("--alphabar", type=float, default=0.01)
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--timelimit", type=float, default=None, help="seconds")
    s.add_argument("--psr-fix", type=int, default=0, help="fix this many small direct groups")
    s.add_argument("--psr-delete", type=int, default=0, help="ignore this many small groups, reroute afterwards")
    s.add_argument("--none-routed", action="store_true", help="timetable without passengers, route afterwards")
    s.add_argument("--prep", type=_prep, default=PREP_ALL)
    s.add_argument("--bounds-lp", action="store_true", help="inventory bounds from LP optima")
    s.add_argument("--out", default=None, help="directory for report files")
    _solver_opts(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a solution report against an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--report", required=True)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("report", help="write JSON, trace CSV and diagrams for a solution report")
    r.add_argument("--instance", required=True)
    r.add_argument("--report", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "seed") and args.command != "gen":
        set_seed(args.seed)
    try:
        return args.func(args)
    except (InstanceError, SolverError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
