"""Acceptance suite: one test (or a few) per criterion; the terminal summary prints one
PASS/FAIL line per criterion.  Run alone with ``pytest tests/test_acceptance.py``."""
from __future__ import annotations

import math
import random
import time
from collections import Counter

import numpy as np
import pytest

from _shared import (MICRO_SEEDS, benders, enumerate_best, enumerate_masters, micro, oracle, peaked,
                     random_dag, random_masters, rel_close)
from hpttp.benders import (PBSP, BendersConfig, BendersSolver, make_open_close_cut,
                           make_pareto_cut, make_standard_cut, solve_pbsp)
from hpttp.instance import generate_toy
from hpttp.model import build_arc_oracle, solve_monolithic
from hpttp.pricing import label_correcting_rcsp
from hpttp.psr import solve_delete, solve_psr
from hpttp.solver import open_handle
from hpttp.validate import validate

criterion = pytest.mark.criterion
TOL = 1e-6


def tol(v: float) -> float:
    return TOL * max(1.0, abs(v))


# ---------------------------------------------------------------------------
# 1. Benders at gap 0 equals the arc-flow optimum
# ---------------------------------------------------------------------------

@criterion(1, "benders --gap 0 equals the arc-flow optimum on micro instances")
def test_benders_matches_arc_oracle(record_property):
    worst = 0.0
    for seed in MICRO_SEEDS:
        inst, prob = micro(seed)
        assert len(inst.stations) <= 4 and inst.params.periods <= 2
        assert len(inst.trains) <= 6 and len(inst.groups) <= 12
        assert inst.params.costs.max_transfers >= 2
        ref = oracle(seed)
        t0 = time.perf_counter()
        _, rep = benders(seed)
        wall = time.perf_counter() - t0
        assert ref.status == "optimal" and rep.status == "optimal", seed
        assert wall < 60.0, (seed, wall)
        assert rel_close(rep.objective, ref.objective), (seed, rep.objective, ref.objective)
        worst = max(worst, abs(rep.objective - ref.objective) / max(1.0, abs(ref.objective)))
    record_property("detail", f"{len(MICRO_SEEDS)} instances, worst relative difference {worst:.1e}")


# ---------------------------------------------------------------------------
# 2. Cuts are tight at the master point and valid elsewhere
# ---------------------------------------------------------------------------

CUT_MODES = ("standard", "lp", "lp-pareto", "lp-pareto-2", "lp-oc", "lp-oc-2")


@criterion(2, "cuts tight at every master point and valid at random feasible masters")
def test_cut_tightness_and_validity(record_property):
    n_iter = n_checks = 0
    for seed in MICRO_SEEDS[:10]:
        _, prob = micro(seed)
        _, alt = random_masters(prob, 5, seed)
        assert len(alt) >= 1
        for mode in CUT_MODES:
            solver, rep = benders(seed, mode)
            assert rep.status == "optimal"
            for d in solver.diagnostics:
                n_iter += 1
                for kind, val in d["cut_at_x"].items():
                    assert abs(val - d["q"]) <= tol(d["q"]), (seed, mode, d["iteration"], kind, val, d["q"])
            for x in alt:
                q, _, _ = solve_pbsp(prob, solver.master, x)
                for cut in solver.cuts:
                    n_checks += 1
                    assert cut.value(solver.master, x) <= q + tol(q), (seed, mode, cut.kind)
    record_property("detail", f"{n_iter} iterations, {n_checks} cut checks at alternative masters")


# ---------------------------------------------------------------------------
# 3. Label-correcting pricing equals exhaustive enumeration
# ---------------------------------------------------------------------------

@criterion(3, "label-correcting pricing equals enumeration on 100 random DAGs")
def test_rcsp_matches_enumeration(record_property):
    rng = random.Random(31)
    mismatches = 0
    reachable = 0
    for _ in range(100):
        g = random_dag(rng)
        for limit in (0, 1, 2):
            want = enumerate_best(g, limit)
            path, got, tr = label_correcting_rcsp(g, g.cost, limit)
            if math.isinf(want):
                mismatches += path is not None
                continue
            reachable += 1
            ok = path is not None and abs(got - want) <= 1e-9 and tr <= limit
            if ok:
                pos = {a: k for k, a in enumerate(g.arc_ids)}
                idx = [pos[a] for a in path]
                ok = (g.tail[idx[0]] == g.source and g.head[idx[-1]] == g.target
                      and all(g.head[i] == g.tail[j] for i, j in zip(idx, idx[1:]))
                      and abs(sum(g.cost[i] for i in idx) - got) <= 1e-9
                      and sum(g.walk[i] for i in idx) == tr)
            mismatches += not ok
    assert mismatches == 0
    record_property("detail", f"300 comparisons ({reachable} with a feasible path), 0 mismatches")


# ---------------------------------------------------------------------------
# 4. Reductions keep optima; inventory bounds hold at every optimum
# ---------------------------------------------------------------------------

REDUCTIONS = (("trains",), ("pax",), ("bounds",), ("trains", "pax", "bounds"))


@criterion(4, "reductions keep micro optima; inventory bounds hold at all oracle optima")
def test_preprocessing_safety(record_property):
    for seed in MICRO_SEEDS[:20]:
        base = oracle(seed, ())
        assert base.status == "optimal"
        for prep in REDUCTIONS:
            rep = oracle(seed, prep)
            assert rep.status == "optimal"
            assert rel_close(rep.objective, base.objective), (seed, prep, rep.objective, base.objective)
    n_bounds = 0
    for seed in MICRO_SEEDS[:8]:
        _, bounded = micro(seed)
        _, free = micro(seed, ())
        assert free.inv_arcs == bounded.inv_arcs
        opt = oracle(seed, ()).objective
        master, _ = build_arc_oracle(free)
        model = master.model.copy()
        model.add_constr({j: v.obj for j, v in enumerate(model.variables) if v.obj}, "<=", opt + tol(opt))
        for v in model.variables:
            v.obj = 0.0
        # largest value each inventory variable takes over the optimal face
        for key, j in master.w.items():
            model.variables[j].obj = -1.0
            out = open_handle(model).solve(gap=0.0)
            model.variables[j].obj = 0.0
            assert out.has_solution
            top = -out.objective
            n_bounds += 1
            assert top <= bounded.inv_bounds.get(key, math.inf) + 1e-6, (seed, key, top)
    record_property("detail", f"20 instances x {len(REDUCTIONS)} reduction sets; {n_bounds} bounds "
                              f"checked against the optimal face")


# ---------------------------------------------------------------------------
# 5. Validator: accepted solutions pass, planted headway conflicts are caught
# ---------------------------------------------------------------------------

def accepted_reports():
    for seed in MICRO_SEEDS:
        inst, _ = micro(seed)
        yield inst, oracle(seed)
        yield inst, benders(seed)[1]
    for seed in MICRO_SEEDS[:6]:
        inst, prob = micro(seed)
        res = solve_psr(prob, 2, BendersConfig(gap=0.0))
        yield inst, res.post
        yield inst, solve_delete(prob, None, BendersConfig(gap=0.0)).post
    for seed in range(3):
        for hybrid in (False, True):
            inst, prob = peaked(seed, hybrid)
            yield inst, BendersSolver(prob, BendersConfig(gap=0.0)).run()


def planned_timetable(inst) -> dict:
    u = sorted(inst.rsu_types)[0]
    trains = []
    for k in sorted(inst.trains):
        tr = inst.trains[k]
        line = inst.lines[tr.line]
        ev = [{"station": m, "arr": a, "dep": d, "stop": s}
              for m, s, (a, d) in zip(line.route, line.stops, tr.schedule)]
        trains.append({"id": k, "line": tr.line, "rsu": u, "operated": True, "events": ev})
    return {"trains": trains, "objective": None}


def event_pairs(rep: dict):
    """(side, key, (train, index)) for every departure and arrival on a section."""
    table: dict[tuple, list] = {}
    for t in rep["trains"]:
        if not t.get("operated"):
            continue
        ev = t["events"]
        for i in range(len(ev) - 1):
            table.setdefault(("dep", ev[i]["station"], ev[i + 1]["station"]), []).append((t["id"], i))
            table.setdefault(("arr", ev[i + 1]["station"], ev[i]["station"]), []).append((t["id"], i + 1))
    return {k: v for k, v in table.items() if len({x[0] for x in v}) >= 2}


def plant_headway(inst, rep: dict, rng: random.Random):
    """Shift one whole train so that one of its events follows another train's event on the
    same boundary closer than the leader's headway.  Returns the corrupted report and the
    planted (side, station, leader, follower)."""
    import copy
    h = inst.params.headways
    step = inst.params.step
    pairs = event_pairs(rep)
    trains = {t["id"]: t for t in rep["trains"]}
    keys = sorted(pairs)
    skipping = [k for k in keys if any(not trains[t]["events"][i]["stop"] for t, i in pairs[k])]
    side, m, other = key = rng.choice(skipping if skipping and rng.random() < 0.6 else keys)
    members = pairs[key]
    (k1, i1), (k2, i2) = rng.sample(members, 2)
    while k1 == k2:
        (k1, i1), (k2, i2) = rng.sample(members, 2)
    e1 = trains[k1]["events"][i1]
    e2 = trains[k2]["events"][i2]
    field = "dep" if side == "dep" else "arr"
    lead_stop = bool(e1["stop"])
    if side == "dep":
        need = max(h.dd, h.dp) if lead_stop else max(h.pd, h.pp)
    else:
        need = max(h.aa, h.ap) if lead_stop else max(h.pa, h.pp)
    gaps = [g * step for g in range(int(math.ceil(need / step))) if g * step < need]
    gap = rng.choice(gaps)
    delta = e1[field] + gap - e2[field]
    bad = copy.deepcopy(rep)
    for t in bad["trains"]:
        if t["id"] == k2:
            for e in t["events"]:
                for f in ("arr", "dep"):
                    if e[f] is not None:
                        e[f] += delta
    stop_mark = "d" if side == "dep" else "a"
    kind = (stop_mark if lead_stop else "p") + (stop_mark if e2["stop"] else "p")
    return bad, (side, m, k1, k2, kind)


@criterion(5, "validator: no headway violations in accepted solutions, all 50 plants flagged")
def test_headway_soundness(record_property):
    n_rep = n_pairs = 0
    bases = []
    for inst, rep in accepted_reports():
        v = validate(inst, rep)
        assert v.ok, (rep.formulation, v.summary(), [str(x) for x in v.violations[:5]])
        n_rep += 1
        n_pairs += v.checked.get("headway", 0)
        d = rep.to_dict()
        if event_pairs(d):
            bases.append((inst, d))
    toy = generate_toy(1)
    plan = planned_timetable(toy)
    assert "headway" not in validate(toy, plan).families()
    bases.append((toy, plan))
    rng = random.Random(2024)
    caught = 0
    kinds: Counter = Counter()
    for i in range(50):
        inst, base = bases[-1] if i % 2 == 0 else rng.choice(bases)
        bad, (side, m, k1, k2, kind) = plant_headway(inst, base, rng)
        kinds[kind] += 1
        v = validate(inst, bad)
        hits = [x for x in v.violations if x.family == "headway" and x.witness.get("station") == m
                and set(x.witness.get("trains", ())) == {k1, k2}
                and x.witness.get("side") == ("departure" if side == "dep" else "arrival")]
        caught += bool(hits)
    assert caught == 50, f"{caught}/50 planted headway violations flagged"
    record_property("detail", f"{n_rep} accepted reports PASS ({n_pairs} event pairs inside a headway window); "
                              f"50/50 plants flagged; leader/follower types {dict(sorted(kinds.items()))}")


# ---------------------------------------------------------------------------
# 6. Pareto and Open-Close cut strengthening
# ---------------------------------------------------------------------------

@criterion(6, "Pareto core value, Open-Close lifting, pointwise dominance")
def test_pareto_core_value(record_property):
    n = 0
    for seed in MICRO_SEEDS[:15]:
        for mode in ("lp-pareto", "lp-pareto-2"):
            solver, _ = benders(seed, mode)
            for d in solver.diagnostics:
                if d["core"]:
                    n += 1
                    s, p = d["core"]["standard"], d["core"]["pareto"]
                    assert p >= s - tol(s), (seed, mode, d["iteration"], p, s)
    assert n > 0
    record_property("detail", f"{n} iterations with Pareto cut value >= standard at the core point")


@criterion(6, "Pareto core value, Open-Close lifting, pointwise dominance")
def test_open_close_lifting(record_property):
    n = 0
    for seed in MICRO_SEEDS[:15]:
        solver, _ = benders(seed, "lp-oc-2")
        for d in solver.diagnostics:
            base, lifted = d["lift"]["base"], d["lift"]["lifted"]
            for a in set(base) | set(lifted):
                n += 1
                assert lifted.get(a, 0.0) >= base.get(a, 0.0) - 1e-9, (seed, a)
        _, prob = micro(seed)
        _, pts = random_masters(prob, 5, seed + 100)
        pb = PBSP(prob, solver.master, cg="standard")
        for x in pts:
            q, duals = pb.solve(x)
            std = make_standard_cut(prob, duals)
            oc = make_open_close_cut(pb, x, duals)
            caps = pb.capacities(x)
            for a in pb.pax_travel:
                if caps.get(a, 0.0) > 1e-9:
                    assert oc.lam.get(a, 0.0) == std.lam.get(a, 0.0), (seed, a)
                else:
                    assert oc.lam.get(a, 0.0) >= std.lam.get(a, 0.0) - 1e-9, (seed, a)
            assert oc.const == std.const
            assert abs(oc.value(solver.master, x) - q) <= tol(q)
    record_property("detail", f"{n} lifted duals >= original; open duals and demand duals unchanged")


@criterion(6, "Pareto core value, Open-Close lifting, pointwise dominance")
def test_strengthened_cuts_dominate_pointwise(record_property):
    """Enumerate every feasible master of small micro instances and compare each strengthened
    cut with the standard cut from the same dual solve at every enumerated point."""
    stats = {"pareto": [0, 0], "open-close": [0, 0]}   # [cuts, cuts below standard somewhere]
    witness = []
    done = 0
    for seed in MICRO_SEEDS[:12]:
        _, prob = micro(seed)
        master, pts, complete = enumerate_masters(prob, cap=120)
        if not complete or len(pts) < 2:
            continue
        done += 1
        core = np.mean(pts, axis=0)
        pb = PBSP(prob, master, cg="standard")
        for xb in pts:
            q, duals = pb.solve(xb)
            std = make_standard_cut(prob, duals)
            sv = np.array([std.value(master, x) for x in pts])
            for kind, cut in (("pareto", make_pareto_cut(pb, xb, core, q)),
                              ("open-close", make_open_close_cut(pb, xb, duals))):
                if cut is None:
                    continue
                cv = np.array([cut.value(master, x) for x in pts])
                stats[kind][0] += 1
                below = cv < sv - np.maximum(1.0, np.abs(sv)) * TOL
                if below.any():
                    stats[kind][1] += 1
                    j = int(np.argmax(sv - cv))
                    if len(witness) < 3:
                        witness.append(f"seed {seed} {kind}: {cv[j]:.1f} < standard {sv[j]:.1f}")
    assert done >= 3
    summary = ", ".join(f"{k} below standard in {b}/{c}" for k, (c, b) in stats.items())
    record_property("detail", f"{done} enumerated instances; {summary}")
    assert stats["open-close"][1] == 0, summary
    assert stats["pareto"][1] == 0, f"{summary}; e.g. {'; '.join(witness)}"


# ---------------------------------------------------------------------------
# 7. Adaptive master gap
# ---------------------------------------------------------------------------

def aog_reference(rhos: list[float], alpha0: float, alphabar: float, eps: float) -> list[float]:
    out = [alpha0]
    for rho in rhos[:-1]:
        prev = out[-1]
        out.append(max(alphabar, prev * (1 - eps)) if rho >= 2 * alphabar else 0.5 * rho)
    return out


@criterion(7, "logged master gaps follow the adaptive rule (4%, 1%, 5%)")
def test_adaptive_gap_trace(record_property):
    traces = []
    for seed in MICRO_SEEDS[:12]:
        _, prob = micro(seed)
        solver = BendersSolver(prob, BendersConfig(mode="standard", gap=0.0,
                                                   alpha0=0.04, alphabar=0.01, eps=0.05))
        solver.run()
        traces.append([r for r in solver.trace.rows if r["phase"] == "ip"])
    for seed in range(3):
        _, prob = peaked(seed, True)
        solver = BendersSolver(prob, BendersConfig(mode="standard", gap=0.0))
        solver.run()
        traces.append([r for r in solver.trace.rows if r["phase"] == "ip"])
    steps = 0
    for rows in traces:
        alphas = [r["alpha"] for r in rows]
        assert alphas == aog_reference([r["gap"] for r in rows], 0.04, 0.01, 0.05)
        steps += len(rows)
    longest = max(len(r) for r in traces)
    record_property("detail", f"{len(traces)} traces, {steps} iterations, longest {longest}; exact match")


# ---------------------------------------------------------------------------
# 8. Hybrid periodicity lowers passenger cost
# ---------------------------------------------------------------------------

@criterion(8, "xi=0.6 with extra trains beats the periodic baseline on the peaked instance")
def test_hybrid_periodicity_direction(record_property):
    out = []
    for seed in range(3):
        res = {}
        for hybrid in (False, True):
            inst, prob = peaked(seed, hybrid)
            assert inst.params.periods == 4
            rep = BendersSolver(prob, BendersConfig(gap=0.0)).run()
            ref = solve_monolithic(prob, "arc")
            assert rep.status == "optimal" and rel_close(rep.objective, ref.objective)
            assert rel_close(sum(rep.costs.values()), rep.objective)
            res[hybrid] = rep
        base, hyb = res[False].objective, res[True].objective
        out.append(f"seed {seed}: {base:g} -> {hyb:g} ({(hyb - base) / base:+.1%})")
        assert hyb < base - tol(base), out[-1]
    record_property("detail", "; ".join(out))


# ---------------------------------------------------------------------------
# 9. Passenger subset routing sits between the optimum and None-Routed
# ---------------------------------------------------------------------------

@criterion(9, "PSR post-optimised objective between the optimum and None-Routed")
def test_psr_ordering(record_property):
    rows = []
    for seed in MICRO_SEEDS[:12]:
        _, prob = micro(seed)
        full = oracle(seed).objective
        cfg = BendersConfig(gap=0.0)
        psr = solve_psr(prob, 2, cfg)
        none = solve_delete(prob, None, cfg)
        assert psr.post is not None and none.post is not None
        p, nr = psr.post.objective, none.post.objective
        assert p >= full - tol(full), (seed, p, full)
        assert p <= nr + tol(nr), (seed, p, nr)
        rows.append((full, p, nr))
    strict = sum(1 for f, p, n in rows if p < n - tol(n))
    record_property("detail", f"{len(rows)} instances; PSR strictly below None-Routed on {strict}")


# ---------------------------------------------------------------------------
# 10. Column copying with partial pricing versus standard column generation
# ---------------------------------------------------------------------------

@criterion(10, "cc+pp column count within 20% of standard, same objective")
def test_cg_acceleration(record_property):
    inst, prob = peaked(0, True)
    reps = {cg: BendersSolver(prob, BendersConfig(gap=0.0, cg=cg)).run() for cg in ("standard", "cc+pp")}
    a, b = reps["standard"], reps["cc+pp"]
    assert a.status == b.status == "optimal"
    ca, cb = a.counts["columns"], b.counts["columns"]
    record_property("detail", f"columns standard {ca}, cc+pp {cb} ({(cb - ca) / ca:+.0%}); "
                              f"objectives {a.objective:g} / {b.objective:g}")
    assert abs(a.objective - b.objective) <= TOL
    assert abs(cb - ca) <= 0.2 * ca, (ca, cb)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
