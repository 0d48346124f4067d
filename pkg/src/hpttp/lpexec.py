"""Command-line LP/MIP executable used by the ``lp-exec`` backend.

Usage: ``python -m hpttp.lpexec MODEL.lp SOLUTION.json [--gap G] [--time-limit S] [--relax]``

Reads a CPLEX-LP file, solves it with HiGHS and writes a JSON document with
keys ``status``, ``objective``, ``bound``, ``values`` (by column name) and
``duals`` (by row name, LP solves only).
"""
from __future__ import annotations

import argparse
import json
import math
import sys


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="hpttp-lpexec")
    ap.add_argument("model")
    ap.add_argument("solution")
    ap.add_argument("--gap", type=float, default=0.0)
    ap.add_argument("--time-limit", type=float, default=None)
    ap.add_argument("--relax", action="store_true")
    args = ap.parse_args(argv)

    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    h.setOptionValue("dual_feasibility_tolerance", 1e-9)
    h.setOptionValue("mip_feasibility_tolerance", 1e-9)
    h.setOptionValue("mip_rel_gap", max(args.gap, 0.0))
    h.setOptionValue("mip_abs_gap", 1e-7)
    if args.time_limit:
        h.setOptionValue("time_limit", args.time_limit)
    if h.readModel(args.model) != highspy.HighsStatus.kOk:
        print(f"cannot read {args.model}", file=sys.stderr)
        return 1
    lp = h.getLp()
    is_mip = any(t != highspy.HighsVarType.kContinuous for t in (lp.integrality_ or []))
    if args.relax and is_mip:
        for j in range(lp.num_col_):
            h.changeColIntegrality(j, highspy.HighsVarType.kContinuous)
        is_mip = False
    h.run()
    M = highspy.HighsModelStatus
    ms = h.getModelStatus()
    info = h.getInfo()
    out: dict = {"status": "error"}
    if ms == M.kInfeasible:
        out = {"status": "infeasible"}
    elif ms in (M.kUnbounded, M.kUnboundedOrInfeasible):
        out = {"status": "unbounded"}
    else:
        sol = h.getSolution()
        has_primal = info.primal_solution_status == 2
        cols = list(h.getLp().col_names_)
        rows = list(h.getLp().row_names_)
        obj = float(info.objective_function_value) if has_primal else math.nan
        if ms == M.kOptimal:
            bound = float(info.mip_dual_bound) if is_mip else obj
            status = "optimal"
            if is_mip and abs(obj - bound) > max(1e-9, 1e-9 * abs(obj)):
                status = "feasible-with-gap"
        elif has_primal:
            bound = float(info.mip_dual_bound) if is_mip else math.nan
            status = "limit"
        else:
            json_dump(args.solution, {"status": "limit"})
            return 0
        out = {"status": status, "objective": obj,
               "bound": None if math.isnan(bound) else bound,
               "values": dict(zip(cols, map(float, sol.col_value)))}
        if not is_mip and sol.dual_valid:
            out["duals"] = dict(zip(rows, map(float, sol.row_dual)))
    json_dump(args.solution, out)
    return 0


def json_dump(path: str, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh)


if __name__ == "__main__":
    sys.exit(main())
