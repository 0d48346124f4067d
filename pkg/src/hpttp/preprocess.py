"""Network reductions: dead train arcs, useless passenger arcs, inventory upper bounds."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

from hpttp.tsnet import ArcKind, Subnetwork, TimeSpaceNetwork, TRAVEL_KINDS

log = logging.getLogger(__name__)


@dataclass
class PreprocessReport:
    arcs_removed: dict[str, int] = field(default_factory=dict)
    inventory_bounds: dict[tuple[str, int], int] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def merge(self, other: "PreprocessReport") -> "PreprocessReport":
        for k, v in other.arcs_removed.items():
            self.arcs_removed[k] = self.arcs_removed.get(k, 0) + v
        self.inventory_bounds.update(other.inventory_bounds)
        self.notes.extend(other.notes)
        return self


def _backward_reach(net: TimeSpaceNetwork, arcs: list[int], targets: set[int]) -> set[int]:
    """Vertices that reach ``targets`` using only ``arcs``."""
    into: dict[int, list[int]] = defaultdict(list)
    for a in arcs:
        into[net.a_head[a]].append(a)
    seen = set(targets)
    stack = list(targets)
    while stack:
        v = stack.pop()
        for a in into.get(v, ()):
            t = net.a_tail[a]
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


def _forward_reach(net: TimeSpaceNetwork, arcs: list[int], sources: set[int]) -> set[int]:
    out: dict[int, list[int]] = defaultdict(list)
    for a in arcs:
        out[net.a_tail[a]].append(a)
    seen = set(sources)
    stack = list(sources)
    while stack:
        v = stack.pop()
        for a in out.get(v, ()):
            h = net.a_head[a]
            if h not in seen:
                seen.add(h)
                stack.append(h)
    return seen


def _restrict(net: TimeSpaceNetwork, sub: Subnetwork, keep: list[int]) -> Subnetwork:
    keep_set = set(keep)
    verts = set()
    for a in keep:
        verts.add(net.a_tail[a])
        verts.add(net.a_head[a])
    return Subnetwork(sub.owner, verts, sorted(keep_set), sorted(set(sub.virtual) & keep_set))


def eliminate_train_arcs(subs: dict[str, Subnetwork], net: TimeSpaceNetwork,
                         extra: Subnetwork | None = None):
    """Drop train arcs whose head cannot reach an RSU sign-off within the subnetwork.

    Returns ``(subs, extra, report)`` with new subnetwork objects.
    """
    rep = PreprocessReport()
    removed = 0

    def reduce(sub: Subnetwork) -> Subnetwork:
        nonlocal removed
        sinks = {net.a_head[a] for a in sub.virtual if net.a_kind[a] == ArcKind.SINK}
        reach = _backward_reach(net, sub.arcs, sinks)
        keep = [a for a in sub.arcs if net.a_head[a] in reach]
        removed += len(sub.arcs) - len(keep)
        return _restrict(net, sub, keep)

    out = {k: reduce(s) for k, s in subs.items()}
    ex = reduce(extra) if extra is not None else None
    rep.arcs_removed["train"] = removed
    return out, ex, rep


def eliminate_passenger_arcs(pax: dict[str, Subnetwork], net: TimeSpaceNetwork,
                             active_travel: set[int]):
    """Keep train-travel arcs some train can use, then only arcs on an origin-destination path."""
    rep = PreprocessReport()
    removed = 0
    out = {}
    for r, sub in pax.items():
        keep = [a for a in sub.arcs if net.a_kind[a] not in TRAVEL_KINDS or a in active_travel]
        o, d = net.origin_vertex[r], net.dest_vertex[r]
        fwd = _forward_reach(net, keep, {o})
        bwd = _backward_reach(net, keep, {d})
        keep = [a for a in keep if net.a_tail[a] in fwd and net.a_head[a] in bwd]
        removed += len(sub.arcs) - len(keep)
        new = _restrict(net, sub, keep)
        new.vertices.add(o)
        out[r] = new
    rep.arcs_removed["passenger"] = removed
    return out, rep


def inventory_arcs(net: TimeSpaceNetwork) -> dict[str, list[int]]:
    """Inventory arcs per terminal in tick order."""
    out: dict[str, list[int]] = defaultdict(list)
    for a in range(net.num_arcs):
        if net.a_kind[a] == ArcKind.INVENTORY:
            out[net.vnode(net.a_tail[a]).station].append(a)
    for m in out:
        out[m].sort(key=net.tail_tick)
    return dict(out)


def bound_inventory(problem, use_lp: bool = False, backend: str | None = None,
                    time_limit: float | None = None) -> PreprocessReport:
    """Upper bound every inventory variable by maximising it in a circulation relaxation.

    The relaxation keeps train type choice, periodicity, budget, extra-train flow and
    inventory balance, but reduces original trains to their source and sink arcs
    (linked through the type variable) and ignores headways and passengers.  Ticks at
    which no train can leave or reach a terminal inherit the previous bound, since the
    stock cannot change there.  On solver failure the fleet size is used.
    """
    from hpttp.model import Master
    from hpttp.solver import SolverError, Status, open_handle

    inst, net = problem.inst, problem.net
    rep = PreprocessReport()
    fleet = {u: inst.total_fleet(u) for u in inst.rsu_types}
    try:
        master = Master(problem, inventory_relaxation=True, with_bounds=False)
        handle = open_handle(master.model, backend)
    except SolverError as exc:
        rep.notes.append(f"inventory bounding skipped: {exc}")
        for (u, a) in problem.inventory_vars():
            rep.inventory_bounds[(u, a)] = fleet[u]
        return rep
    # vertices where some source/sink arc of a usable train touches the inventory node
    active: set[int] = set()
    for sub in list(problem.train_subs.values()) + [problem.extra]:
        for a in sub.virtual:
            v = net.a_tail[a] if net.a_kind[a] == ArcKind.SOURCE else net.a_head[a]
            active.add(v)
    last_j = None
    for m, arcs in inventory_arcs(net).items():
        for u in sorted(inst.rsu_types):
            prev = None
            for a in arcs:
                tail = net.a_tail[a]
                if prev is not None and tail not in active:
                    rep.inventory_bounds[(u, a)] = prev
                    continue
                j = master.w[(u, a)]
                if last_j is not None:
                    handle.set_obj(last_j, 0.0)
                handle.set_obj(j, -1.0)
                last_j = j
                out = handle.solve(relax=use_lp, time_limit=time_limit)
                if out.status == Status.OPTIMAL:
                    val = -out.bound if not use_lp else -out.objective
                    bnd = int(min(fleet[u], max(0, _floor(val))))
                elif out.status == Status.INFEASIBLE:
                    rep.notes.append("inventory relaxation infeasible; the instance has no feasible timetable")
                    bnd = fleet[u]
                else:
                    bnd = fleet[u]
                rep.inventory_bounds[(u, a)] = bnd
                prev = bnd
    return rep


def _floor(v: float) -> int:
    import math
    return int(math.floor(v + 1e-6))
