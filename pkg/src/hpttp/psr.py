"""Routing only a subset of passengers: small direct groups ride a fixed train whose
seats they occupy when served, the rest are routed by the subproblem as usual."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

from hpttp.benders import BendersConfig, BendersSolver
from hpttp.model import Master, Problem, SolveReport
from hpttp.pricing import GroupGraph, cheapest_path
from hpttp.tsnet import ArcKind, NodeKind, TRAVEL_KINDS

log = logging.getLogger(__name__)


@dataclass
class FixedAssignment:
    group: str
    train: str
    ori: list[int]          # qualified first-section arcs of the train
    des: list[int]          # qualified last-section arcs
    ride: list[int]         # every travel arc of the train between origin and destination
    cost: dict[int, float]  # per-passenger cost carried by each ride arc
    best_cost: float = 0.0


@dataclass
class PsrVars:
    chi: dict[str, int] = field(default_factory=dict)
    omega: dict[str, int] = field(default_factory=dict)
    v: dict[tuple[str, str, int], int] = field(default_factory=dict)


def _segment(problem: Problem, r: str, k: str) -> FixedAssignment | None:
    """Arcs of train ``k`` that a direct ride of group ``r`` would use, or ``None``."""
    inst, net = problem.inst, problem.net
    g = inst.groups[r]
    line = inst.lines[inst.trains[k].line]
    route = list(line.route)
    if g.origin not in route or g.destination not in route:
        return None
    io, id_ = route.index(g.origin), route.index(g.destination)
    if io >= id_ or not (line.stops[io] and line.stops[id_]):
        return None
    allowed = problem.pax_subs[r].arc_set()
    if not allowed:
        return None
    lo, hi = inst.group_ticks(r)
    t_arr = inst.tick(g.latest_arrival)
    ori, des, ride = [], [], []
    cost: dict[int, float] = {}
    for a in problem.train_subs[k].arcs:
        kind = net.a_kind[a]
        if kind not in TRAVEL_KINDS or a not in allowed:
            continue
        m0, m1 = net.arc_stations(a)
        i0 = route.index(m0)
        if kind == ArcKind.SECTION:
            if not io <= i0 < id_:
                continue
        elif not io < i0 < id_:
            continue
        ride.append(a)
        cost[a] = net.a_cost[a]
        tail, head = net.vnode(net.a_tail[a]), net.vnode(net.a_head[a])
        if kind == ArcKind.SECTION and i0 == io and tail.kind == NodeKind.DEP_STOP:
            t = net.tail_tick(a)
            if lo <= t <= hi and _origin_arc(problem, r, a) is not None:
                ori.append(a)
                cost[a] += net.a_cost[_origin_arc(problem, r, a)]
        if kind == ArcKind.SECTION and i0 == id_ - 1 and head.kind == NodeKind.ARR_STOP:
            if net.head_tick(a) <= t_arr and _dest_arc(problem, r, a) is not None:
                des.append(a)
    if not ori or not des:
        return None
    return FixedAssignment(r, k, sorted(ori), sorted(des), sorted(ride), cost)


def _origin_arc(problem: Problem, r: str, a: int) -> int | None:
    return problem.net.find_arc(problem.net.origin_vertex[r], problem.net.a_tail[a])


def _dest_arc(problem: Problem, r: str, a: int) -> int | None:
    return problem.net.find_arc(problem.net.a_head[a], problem.net.dest_vertex[r])


def direct_cost(problem: Problem, fa: FixedAssignment) -> float:
    """Cheapest uncapacitated direct trip of the group on its train (``inf`` if none)."""
    net = problem.net
    r = fa.group
    g = GroupGraph(net, problem.pax_subs[r], net.origin_vertex[r], net.dest_vertex[r])
    ride = set(fa.ride)
    forbidden = [(net.a_kind[a] in TRAVEL_KINDS and a not in ride) or net.a_kind[a] == ArcKind.WALK
                 for a in g.arc_ids]
    path, val, _ = cheapest_path(g, g.cost, forbidden=forbidden)
    return math.inf if path is None else val


def select_fixed_groups(problem: Problem, n: int) -> list[FixedAssignment]:
    """The ``n`` smallest groups that can ride an original train directly.

    Each group is assigned the direct train with the cheapest uncapacitated trip; ties go
    to the train with the earlier scheduled departure.
    """
    inst = problem.inst
    if n <= 0:
        return []
    order = sorted(problem.groups, key=lambda r: (inst.groups[r].size, r))
    chosen: list[FixedAssignment] = []
    for r in order:
        best = None
        for k in problem.trains:
            fa = _segment(problem, r, k)
            if fa is None:
                continue
            fa.best_cost = direct_cost(problem, fa)
            if not math.isfinite(fa.best_cost):
                continue
            key = (fa.best_cost, inst.trains[k].schedule[0][1], k)
            if best is None or key < best[0]:
                best = (key, fa)
        if best is not None:
            chosen.append(best[1])
            if len(chosen) == n:
                break
    if len(chosen) < n:
        log.warning("only %d of %d requested groups can be fixed to a direct train", len(chosen), n)
    return chosen


def add_psr(master: Master, fixed: Sequence[FixedAssignment]) -> PsrVars:
    """Add service flags, linearised flag-times-arc products, consistency rows, fixed-group
    costs and the seat deduction to a master model.  Must run before any cut is added."""
    m, problem = master.model, master.problem
    inst = problem.inst
    integer = not master.relax
    pv = PsrVars()
    load: dict[tuple[str, str, int], dict[int, float]] = {}
    for fa in fixed:
        r, k = fa.group, fa.train
        g = inst.groups[r]
        pv.chi[r] = chi = m.add_var(f"chi[{r}]", 0, 1, integer)
        pv.omega[r] = om = m.add_var(f"omega[{r}]", 0, 1, integer, g.penalty * g.size)
        m.add_constr({chi: 1.0, om: 1.0}, "=", 1, f"served[{r}]")
        for name, arcs in (("ori", fa.ori), ("des", fa.des)):
            row = {chi: 1.0}
            for a in arcs:
                for u in problem.types:
                    row[master.x[(k, u, a)]] = -1.0
            m.add_constr(row, "<=", 0, f"{name}[{r}]")
        for a in fa.ride:
            for u in problem.types:
                x = master.x[(k, u, a)]
                v = m.add_var(f"v[{r}|{u}|{a}]", 0, 1, integer, fa.cost[a] * g.size)
                pv.v[(r, u, a)] = v
                m.add_constr({v: 1.0, chi: -1.0}, "<=", 0, f"v_chi[{r}|{u}|{a}]")
                m.add_constr({v: 1.0, x: -1.0}, "<=", 0, f"v_x[{r}|{u}|{a}]")
                m.add_constr({v: 1.0, chi: -1.0, x: -1.0}, ">=", -1, f"v_and[{r}|{u}|{a}]")
                master.cap_extra[a][v] = master.cap_extra[a].get(v, 0.0) - g.size
                load.setdefault((k, u, a), {})[v] = g.size
    for (k, u, a), row in sorted(load.items()):
        row = dict(row)
        row[master.x[(k, u, a)]] = -float(problem.seats[u])
        m.add_constr(row, "<=", 0, f"fixed_seats[{k}|{u}|{a}]")
    master._cap_cache.clear()
    return pv


def fixed_flows(problem: Problem, master: Master, fixed: Sequence[FixedAssignment], pv: PsrVars,
                xvec: Sequence[float]) -> tuple[list, dict[str, float]]:
    """Decode fixed groups into (group, path, volume) flows and unserved volumes."""
    inst, net = problem.inst, problem.net
    flows, unserved = [], {}
    for fa in fixed:
        r, k = fa.group, fa.train
        size = inst.groups[r].size
        if xvec[pv.chi[r]] < 0.5:
            unserved[r] = size
            continue
        used = [a for a in fa.ride if any(xvec[master.x[(k, u, a)]] > 0.5 for u in problem.types)]
        first = [a for a in used if a in set(fa.ori)]
        if len(first) != 1:
            raise RuntimeError(f"fixed group {r} served but train {k} has {len(first)} qualified departures")
        path = [_origin_arc(problem, r, first[0])]
        cur = first[0]
        nxt = {net.a_tail[a]: a for a in used}
        while True:
            path.append(cur)
            if cur in fa.des:
                break
            cur = nxt.get(net.a_head[cur])
            if cur is None:
                raise RuntimeError(f"ride of fixed group {r} on train {k} is broken")
        path.append(_dest_arc(problem, r, path[-1]))
        flows.append((r, tuple(path), size))
        unserved[r] = 0.0
    return flows, unserved


@dataclass
class PsrResult:
    psr: SolveReport
    post: SolveReport | None
    fixed: list[FixedAssignment]


def selected_structure(problem: Problem, master: Master, xvec: Sequence[float]
                       ) -> tuple[dict[str, set[int]], set[int]]:
    """Arcs (virtual arcs included) chosen for each train and for extra trains."""
    trains: dict[str, set[int]] = {}
    for k in problem.trains:
        trains[k] = {a for a in problem.train_subs[k].arcs
                     if any(xvec[master.x[(k, u, a)]] > 0.5 for u in problem.types)}
    extra = {a for a in problem.extra.arcs if any(xvec[master.y[(u, a)]] > 0.5 for u in problem.types)}
    return trains, extra


def post_optimize(problem: Problem, master: Master, xvec: Sequence[float],
                  config: BendersConfig | None = None) -> SolveReport:
    """Keep only the arcs of the given timetable and re-optimise rolling stock types and the
    routing of every group."""
    trains, extra = selected_structure(problem, master, xvec)
    restricted = problem.restricted(trains, extra, groups=problem.inst.groups)
    rep = BendersSolver(restricted, config).run()
    rep.notes.append("post-optimised on the fixed timetable")
    return rep


class PsrSolver:
    """Benders decomposition with some groups fixed to direct trains in the master."""

    def __init__(self, problem: Problem, fixed: Sequence[FixedAssignment],
                 config: BendersConfig | None = None):
        self.problem = problem
        self.fixed = list(fixed)
        self.config = config or BendersConfig()
        fixed_ids = {fa.group for fa in self.fixed}
        self.routed = [r for r in problem.groups if r not in fixed_ids]
        self.pv: PsrVars | None = None

        def hook(master: Master) -> None:
            self.pv = add_psr(master, self.fixed)

        def decoder(master: Master, xvec: Sequence[float]):
            return fixed_flows(problem, master, self.fixed, self.pv, xvec)

        self.solver = BendersSolver(problem, self.config, master_hook=hook, groups=self.routed,
                                    fixed_decoder=decoder)

    def run(self, post: bool = True) -> PsrResult:
        rep = self.solver.run()
        rep.formulation = "benders-psr"
        rep.notes.append(f"{len(self.fixed)} groups fixed to direct trains")
        post_rep = None
        if post and self.solver.incumbent is not None:
            post_rep = post_optimize(self.problem, self.solver.master, self.solver.incumbent, self.config)
        return PsrResult(rep, post_rep, self.fixed)


def solve_psr(problem: Problem, n: int, config: BendersConfig | None = None, post: bool = True) -> PsrResult:
    return PsrSolver(problem, select_fixed_groups(problem, n), config).run(post)


def smallest_groups(problem: Problem, n: int) -> list[str]:
    inst = problem.inst
    return sorted(problem.groups, key=lambda r: (inst.groups[r].size, r))[:max(0, n)]


def solve_delete(problem: Problem, n: int | None, config: BendersConfig | None = None) -> PsrResult:
    """Solve without the ``n`` smallest groups (all groups when ``n`` is None), then route
    every group on the resulting timetable."""
    drop = set(problem.groups) if n is None else set(smallest_groups(problem, n))
    kept = [r for r in problem.groups if r not in drop]
    solver = BendersSolver(problem, config, groups=kept)
    rep = solver.run()
    rep.formulation = "benders-none-routed" if n is None else "benders-delete"
    rep.notes.append(f"{len(drop)} groups ignored while timetabling")
    post_rep = None
    if solver.incumbent is not None:
        post_rep = post_optimize(problem, solver.master, solver.incumbent, config)
    return PsrResult(rep, post_rep, [])
