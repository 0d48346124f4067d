"""Optimization models: the timetable/rolling-stock master, path and arc routing, decoding."""
from __future__ import annotations

import json
import logging
import math
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from hpttp.instance import Instance
from hpttp.preprocess import (PreprocessReport, bound_inventory, eliminate_passenger_arcs,
                              eliminate_train_arcs, inventory_arcs)
from hpttp.solver import INF, Constraint, LinearModel, SolveOutcome, Status, solve
from hpttp.tsnet import (ArcKind, NodeKind, Subnetwork, TimeSpaceNetwork, TRAVEL_KINDS,
                         build_extra_subnetwork, build_incompatible_sets, build_network,
                         build_passenger_subnetworks, build_train_subnetworks, train_travel_arcs)

log = logging.getLogger(__name__)

INT_TOL = 1e-6
PREP_ALL = ("trains", "pax", "bounds")


class DecodeError(RuntimeError):
    """A solution vector that does not describe a valid timetable."""


@dataclass(frozen=True)
class Column:
    """A passenger path: arcs in travel order."""
    group: str
    arcs: tuple[int, ...]
    cost: float
    transfers: int

    @property
    def key(self) -> tuple[str, tuple[int, ...]]:
        return (self.group, tuple(sorted(self.arcs)))


def make_column(net: TimeSpaceNetwork, group: str, arcs: Sequence[int]) -> Column:
    cost = sum(net.a_cost[a] for a in arcs)
    transfers = sum(1 for a in arcs if net.a_kind[a] == ArcKind.WALK)
    return Column(group, tuple(arcs), cost, transfers)


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------

class Problem:
    """Network, subnetworks and derived index sets shared by every model."""

    def __init__(self, inst: Instance, net: TimeSpaceNetwork, train_subs: dict[str, Subnetwork],
                 extra: Subnetwork, pax_subs: dict[str, Subnetwork],
                 inv_bounds: dict[tuple[str, int], int] | None = None,
                 report: PreprocessReport | None = None):
        self.inst = inst
        self.net = net
        self.train_subs = train_subs
        self.extra = extra
        self.pax_subs = pax_subs
        self.inv_bounds = inv_bounds or {}
        self.report = report or PreprocessReport()
        self.types = sorted(inst.rsu_types)
        self.seats = {u: inst.rsu_types[u].seats for u in self.types}
        self.trains = sorted(train_subs)
        self.groups = sorted(pax_subs)
        self.travel = train_travel_arcs(train_subs, extra)
        self.extra_travel = set(extra.arcs) - set(extra.virtual)
        self.arc_trains: dict[int, list[str]] = defaultdict(list)
        for k in self.trains:
            sub = train_subs[k]
            virt = set(sub.virtual)
            for a in sub.arcs:
                if a not in virt:
                    self.arc_trains[a].append(k)
        sections = [a for a in self.travel if net.a_kind[a] == ArcKind.SECTION]
        self.phi = build_incompatible_sets(net, sections)
        self.inv_arcs = inventory_arcs(net)

    def inventory_vars(self) -> list[tuple[str, int]]:
        return [(u, a) for m in sorted(self.inv_arcs) for a in self.inv_arcs[m] for u in self.types]

    def restricted(self, train_arcs: dict[str, set[int]] | None = None,
                   extra_arcs: set[int] | None = None, groups: Iterable[str] | None = None) -> "Problem":
        """Copy with train subnetworks, the extra subnetwork or the routed groups cut down."""
        def cut(sub: Subnetwork, keep: set[int]) -> Subnetwork:
            arcs = [a for a in sub.arcs if a in keep]
            verts = {self.net.a_tail[a] for a in arcs} | {self.net.a_head[a] for a in arcs}
            return Subnetwork(sub.owner, verts, arcs, [a for a in sub.virtual if a in keep])

        subs = self.train_subs
        if train_arcs is not None:
            subs = {k: cut(s, train_arcs.get(k, set())) for k, s in subs.items()}
        extra = self.extra if extra_arcs is None else cut(self.extra, extra_arcs)
        pax = self.pax_subs if groups is None else {r: self.pax_subs[r] for r in groups}
        return Problem(self.inst, self.net, subs, extra, pax, dict(self.inv_bounds), self.report)


def build_problem(inst: Instance, prep: Iterable[str] = PREP_ALL, backend: str | None = None,
                  groups: Iterable[str] | None = None, bounds_lp: bool = False) -> Problem:
    """Build the network and subnetworks, applying the named reductions.

    ``prep`` may contain ``"trains"``, ``"pax"`` and ``"bounds"``.  With ``bounds_lp``
    the inventory bounds come from LP optima (weaker but much faster than the MIPs).
    """
    prep = set(prep)
    unknown = prep - set(PREP_ALL)
    if unknown:
        raise ValueError(f"unknown preprocessing step(s): {sorted(unknown)}")
    net = build_network(inst)
    subs = build_train_subnetworks(net, inst)
    extra = build_extra_subnetwork(net, inst)
    report = PreprocessReport()
    if "trains" in prep:
        subs, extra, rep = eliminate_train_arcs(subs, net, extra)
        report.merge(rep)
    travel = train_travel_arcs(subs, extra)
    pax = build_passenger_subnetworks(net, inst, groups=groups)
    if "pax" in prep:
        pax, rep = eliminate_passenger_arcs(pax, net, travel)
        report.merge(rep)
    problem = Problem(inst, net, subs, extra, pax, report=report)
    if "bounds" in prep:
        rep = bound_inventory(problem, use_lp=bounds_lp, backend=backend)
        problem.inv_bounds = rep.inventory_bounds
        report.merge(rep)
    return problem


# ---------------------------------------------------------------------------
# Master model
# ---------------------------------------------------------------------------

class Master:
    """Train selection, timetable, rolling stock and inventory model with an optional
    epigraph variable ``eta`` for the passenger cost.

    ``inventory_relaxation`` keeps only the source and sink arcs of original trains,
    couples them through the type variables and drops flow balance and headways; it
    is the model used to bound inventory variables.
    """

    def __init__(self, problem: Problem, *, relax: bool = False, inventory_relaxation: bool = False,
                 with_bounds: bool = True, with_eta: bool = True):
        self.problem = problem
        self.relax = relax
        self.model = m = LinearModel("master")
        self.x: dict[tuple[str, str, int], int] = {}
        self.theta: dict[tuple[str, str], int] = {}
        self.y: dict[tuple[str, int], int] = {}
        self.w: dict[tuple[str, int], int] = {}
        self.eta: int | None = None
        self.cap_extra: dict[int, dict[int, float]] = defaultdict(dict)
        self.cuts: list[int] = []
        self._cap_cache: dict[int, dict[int, float]] = {}
        inst, net = problem.inst, problem.net
        integer = not relax
        U = problem.types
        sub_arcs = {}
        for k in problem.trains:
            sub = problem.train_subs[k]
            sub_arcs[k] = sub.virtual if inventory_relaxation else sub.arcs
            for u in U:
                self.theta[(k, u)] = m.add_var(f"th[{k}|{u}]", 0, 1, integer)
                for a in sub_arcs[k]:
                    self.x[(k, u, a)] = m.add_var(f"x[{k}|{u}|{a}]", 0, 1, integer)
        for u in U:
            for a in problem.extra.arcs:
                self.y[(u, a)] = m.add_var(f"y[{u}|{a}]", 0, 1, integer)
        for u, a in problem.inventory_vars():
            ub = inst.total_fleet(u)
            if with_bounds and (u, a) in problem.inv_bounds:
                ub = problem.inv_bounds[(u, a)]
            self.w[(u, a)] = m.add_var(f"w[{u}|{a}]", 0, ub, integer)
        if with_eta and not inventory_relaxation:
            self.eta = m.add_var("eta", 0, INF, False, 1.0)

        kind = net.a_kind
        for k in problem.trains:
            for u in U:
                src = {self.x[(k, u, a)]: -1.0 for a in sub_arcs[k] if kind[a] == ArcKind.SOURCE}
                src[self.theta[(k, u)]] = 1.0
                m.add_constr(src, "=", 0, f"type_src[{k}|{u}]")
                if inventory_relaxation:
                    snk = {self.x[(k, u, a)]: -1.0 for a in sub_arcs[k] if kind[a] == ArcKind.SINK}
                    snk[self.theta[(k, u)]] = 1.0
                    m.add_constr(snk, "=", 0, f"type_snk[{k}|{u}]")
            m.add_constr({self.theta[(k, u)]: 1.0 for u in U}, "<=", 1, f"one_type[{k}]")
        xi = inst.params.xi
        for l in sorted(inst.lines):
            ks = [k for k in inst.lines[l].trains if k in problem.train_subs]
            need = math.ceil(xi * len(inst.lines[l].trains) - 1e-9)
            if need > 0:
                m.add_constr({self.theta[(k, u)]: 1.0 for k in ks for u in U}, ">=", need, f"periodicity[{l}]")

        def is_inv(v: int) -> bool:
            return net.nodes[net.v_node[v]].kind == NodeKind.INVENTORY

        if not inventory_relaxation:
            for k in problem.trains:
                self._balance(sub_arcs[k], lambda u, a, k=k: self.x[(k, u, a)], f"flow[{k}", is_inv)
        self._balance(problem.extra.arcs, lambda u, a: self.y[(u, a)], "xflow[", is_inv)

        if not inventory_relaxation:
            for v in sorted(problem.phi):
                row: dict[int, float] = {}
                owners = set()
                for a in problem.phi[v]:
                    for k in problem.arc_trains.get(a, ()):
                        owners.add((k, a))
                        for u in U:
                            row[self.x[(k, u, a)]] = 1.0
                    if a in problem.extra_travel:
                        for u in U:  # each type is a separate extra train
                            owners.add((u, a))
                            row[self.y[(u, a)]] = 1.0
                if len(owners) > 1:
                    m.add_constr(row, "<=", 1, f"headway[{v}]")

        budget = inst.params.budget
        if budget is not None and math.isfinite(budget):
            row = {}
            for u in U:
                p = problem.seats[u]
                for k in problem.trains:
                    row[self.theta[(k, u)]] = p * inst.train_distance(k)
                for a in problem.extra_travel:
                    if net.a_len[a]:
                        row[self.y[(u, a)]] = p * net.a_len[a]
            m.add_constr(row, "<=", budget, "budget")

        # inventory: initial stock and balance, all but the last inventory vertex
        touch_in: dict[int, list[tuple[str, int, int]]] = defaultdict(list)
        touch_out: dict[int, list[tuple[str, int, int]]] = defaultdict(list)
        for k in problem.trains:
            for u in U:
                for a in sub_arcs[k]:
                    if kind[a] == ArcKind.SOURCE:
                        touch_out[net.a_tail[a]].append((u, a, self.x[(k, u, a)]))
                    elif kind[a] == ArcKind.SINK:
                        touch_in[net.a_head[a]].append((u, a, self.x[(k, u, a)]))
        for u in U:
            for a in problem.extra.virtual:
                if kind[a] == ArcKind.SOURCE:
                    touch_out[net.a_tail[a]].append((u, a, self.y[(u, a)]))
                elif kind[a] == ArcKind.SINK:
                    touch_in[net.a_head[a]].append((u, a, self.y[(u, a)]))
        for st in sorted(problem.inv_arcs):
            arcs = problem.inv_arcs[st]
            verts = [net.a_tail[a] for a in arcs] + [net.a_head[arcs[-1]]]
            for u in U:
                stock = inst.rsu_types[u].inventory.get(st, 0)
                for i, v in enumerate(verts[:-1]):
                    row = defaultdict(float)
                    row[self.w[(u, arcs[i])]] += 1.0
                    for uu, _, j in touch_out.get(v, ()):
                        if uu == u:
                            row[j] += 1.0
                    if i == 0:
                        m.add_constr(dict(row), "=", stock, f"inv0[{st}|{u}]")
                        continue
                    row[self.w[(u, arcs[i - 1])]] -= 1.0
                    for uu, _, j in touch_in.get(v, ()):
                        if uu == u:
                            row[j] -= 1.0
                    m.add_constr(dict(row), "=", 0, f"inv[{st}|{u}|{i}]")

    def _balance(self, arcs: Sequence[int], var, prefix: str, is_inv) -> None:
        net = self.problem.net
        touches: dict[int, list[tuple[int, float]]] = defaultdict(list)
        for a in arcs:
            touches[net.a_tail[a]].append((a, 1.0))
            touches[net.a_head[a]].append((a, -1.0))
        for u in self.problem.types:
            for v in sorted(touches):
                if is_inv(v):
                    continue
                row = {var(u, a): c for a, c in touches[v]}
                self.model.add_constr(row, "=", 0, f"{prefix}|{u}|{v}]")

    # -- capacity and cuts -------------------------------------------------
    def cap_coeffs(self, a: int) -> dict[int, float]:
        """Seat capacity of travel arc ``a`` as a linear expression over master columns."""
        c = self._cap_cache.get(a)
        if c is None:
            c = {}
            for k in self.problem.arc_trains.get(a, ()):
                for u in self.problem.types:
                    c[self.x[(k, u, a)]] = float(self.problem.seats[u])
            if a in self.problem.extra_travel:
                for u in self.problem.types:
                    c[self.y[(u, a)]] = float(self.problem.seats[u])
            for j, v in self.cap_extra.get(a, {}).items():
                c[j] = c.get(j, 0.0) + v
            self._cap_cache[a] = c
        return c

    def cap_value(self, a: int, xvec: Sequence[float]) -> float:
        return sum(c * xvec[j] for j, c in self.cap_coeffs(a).items())

    def capacities(self, xvec: Sequence[float], arcs: Iterable[int] | None = None) -> dict[int, float]:
        arcs = self.problem.travel if arcs is None else arcs
        return {a: max(0.0, self.cap_value(a, xvec)) for a in arcs}

    def cut_row(self, lam: dict[int, float], const: float) -> tuple[dict[int, float], float]:
        row: dict[int, float] = defaultdict(float)
        row[self.eta] = 1.0
        for a, la in lam.items():
            if la == 0.0:
                continue
            for j, c in self.cap_coeffs(a).items():
                row[j] -= la * c
        return {j: v for j, v in row.items() if v != 0.0 or j == self.eta}, const

    def add_cut(self, lam: dict[int, float], const: float, handle=None, name: str | None = None) -> int:
        """Append ``eta >= sum_a lam_a cap_a + const``, through ``handle`` when one is open."""
        row, rhs = self.cut_row(lam, const)
        con = Constraint(name or f"cut[{len(self.cuts)}]", ">=", rhs, row)
        if handle is not None:
            i = handle.add_rows([con])[0]
        else:
            i = self.model.add_constr(con.coeffs, con.sense, con.rhs, con.name)
        self.cuts.append(i)
        return i

    def cut_value(self, lam: dict[int, float], const: float, xvec: Sequence[float]) -> float:
        return const + sum(la * self.cap_value(a, xvec) for a, la in lam.items() if la)

    def design_cost(self, xvec: Sequence[float]) -> float:
        """Objective without the passenger epigraph term."""
        val = self.model.objective_value(xvec)
        if self.eta is not None:
            val -= xvec[self.eta]
        return float(val)

    def check_integral(self, xvec: Sequence[float]) -> None:
        for name, idx in (("x", self.x), ("theta", self.theta), ("y", self.y), ("w", self.w)):
            for key, j in idx.items():
                v = xvec[j]
                if abs(v - round(v)) > INT_TOL:
                    raise DecodeError(f"fractional {name}{list(key)} = {v:.9g}")


# ---------------------------------------------------------------------------
# Routing models
# ---------------------------------------------------------------------------

@dataclass
class Routing:
    """Indices of routing variables added to a master model."""
    z: dict = field(default_factory=dict)
    q: dict[str, int] = field(default_factory=dict)
    columns: list[Column] = field(default_factory=list)
    kind: str = "path"


def attach_routing(master: Master, columns: Sequence[Column], groups: Iterable[str] | None = None) -> Routing:
    """Add path flows, unrouted volumes, demand rows and seat capacity rows."""
    problem, m = master.problem, master.model
    inst = problem.inst
    groups = list(problem.groups if groups is None else groups)
    rt = Routing(kind="path", columns=list(columns))
    demand: dict[str, dict[int, float]] = {}
    for r in groups:
        g = inst.groups[r]
        rt.q[r] = m.add_var(f"q[{r}]", 0, INF, False, g.penalty)
        demand[r] = {rt.q[r]: 1.0}
    load: dict[int, dict[int, float]] = defaultdict(dict)
    for i, col in enumerate(columns):
        if col.group not in demand:
            continue
        j = m.add_var(f"z[{i}]", 0, INF, False, col.cost)
        rt.z[i] = j
        demand[col.group][j] = 1.0
        for a in col.arcs:
            if problem.net.a_kind[a] in TRAVEL_KINDS:
                load[a][j] = 1.0
    for r in groups:
        m.add_constr(demand[r], "=", inst.groups[r].size, f"demand[{r}]")
    for a in sorted(load):
        row = dict(load[a])
        for j, c in master.cap_coeffs(a).items():
            row[j] = row.get(j, 0.0) - c
        m.add_constr(row, "<=", 0, f"seats[{a}]")
    return rt


def enumerate_paths(net: TimeSpaceNetwork, sub: Subnetwork, origin: int, dest: int, max_transfers: int,
                    limit: int = 200_000) -> list[list[int]]:
    """All origin-destination paths in a subnetwork with at most ``max_transfers`` walks."""
    arcs = sub.arc_set()
    out: dict[int, list[int]] = defaultdict(list)
    for a in sorted(arcs):
        out[net.a_tail[a]].append(a)
    paths: list[list[int]] = []
    stack: list[tuple[int, int, list[int]]] = [(origin, 0, [])]
    while stack:
        v, tr, path = stack.pop()
        if v == dest:
            paths.append(path)
            if len(paths) > limit:
                raise ValueError(f"more than {limit} paths; use the arc or benders formulation")
            continue
        for a in out.get(v, ()):
            t2 = tr + (net.a_kind[a] == ArcKind.WALK)
            if t2 <= max_transfers:
                stack.append((net.a_head[a], t2, path + [a]))
    return paths


def all_columns(problem: Problem, limit: int = 200_000) -> list[Column]:
    net = problem.net
    ups = problem.inst.params.costs.max_transfers
    cols = []
    for r in problem.groups:
        sub = problem.pax_subs[r]
        if not sub.arcs:
            continue
        for p in enumerate_paths(net, sub, net.origin_vertex[r], net.dest_vertex[r], ups, limit):
            cols.append(make_column(net, r, p))
            if len(cols) > limit:
                raise ValueError(f"more than {limit} paths; use the arc or benders formulation")
    return cols


def attach_arc_routing(master: Master, groups: Iterable[str] | None = None) -> Routing:
    """Arc-flow routing: per-group arc flows with balance, demand and shared seat capacities.

    The number of transfers is not limited in this form.
    """
    problem, m, net = master.problem, master.model, master.problem.net
    inst = problem.inst
    groups = list(problem.groups if groups is None else groups)
    rt = Routing(kind="arc")
    load: dict[int, dict[int, float]] = defaultdict(dict)
    for r in groups:
        g = inst.groups[r]
        sub = problem.pax_subs[r]
        o, d = net.origin_vertex[r], net.dest_vertex[r]
        rt.q[r] = m.add_var(f"q[{r}]", 0, INF, False, g.penalty)
        touches: dict[int, dict[int, float]] = defaultdict(dict)
        for a in sub.arcs:
            j = m.add_var(f"f[{r}|{a}]", 0, INF, False, net.a_cost[a])
            rt.z[(r, a)] = j
            touches[net.a_tail[a]][j] = 1.0
            touches[net.a_head[a]][j] = -1.0
            if net.a_kind[a] in TRAVEL_KINDS:
                load[a][j] = 1.0
        row = dict(touches.get(o, {}))
        row[rt.q[r]] = 1.0
        m.add_constr(row, "=", g.size, f"demand[{r}]")
        for v in sorted(touches):
            if v not in (o, d):
                m.add_constr(touches[v], "=", 0, f"pflow[{r}|{v}]")
    for a in sorted(load):
        row = dict(load[a])
        for j, c in master.cap_coeffs(a).items():
            row[j] = row.get(j, 0.0) - c
        m.add_constr(row, "<=", 0, f"seats[{a}]")
    return rt


def build_arc_oracle(problem: Problem, relax: bool = False) -> tuple[Master, Routing]:
    master = Master(problem, relax=relax, with_eta=False)
    return master, attach_arc_routing(master)


def build_path_model(problem: Problem, columns: Sequence[Column] | None = None,
                     relax: bool = False) -> tuple[Master, Routing]:
    master = Master(problem, relax=relax, with_eta=False)
    cols = all_columns(problem) if columns is None else columns
    return master, attach_routing(master, cols)


def routing_flows(problem: Problem, rt: Routing, xvec: Sequence[float],
                  tol: float = 1e-7) -> list[tuple[str, tuple[int, ...], float]]:
    """Passenger flows as (group, arcs, volume); arc flows are decomposed into paths."""
    net = problem.net
    if rt.kind == "path":
        return [(rt.columns[i].group, rt.columns[i].arcs, xvec[j])
                for i, j in rt.z.items() if xvec[j] > tol]
    per_group: dict[str, dict[int, float]] = defaultdict(dict)
    for (r, a), j in rt.z.items():
        if xvec[j] > tol:
            per_group[r][a] = xvec[j]
    out = []
    for r in sorted(per_group):
        flow = per_group[r]
        o, d = net.origin_vertex[r], net.dest_vertex[r]
        for path, vol in decompose_flow(net, flow, o, d, tol):
            out.append((r, tuple(path), vol))
    return out


def decompose_flow(net: TimeSpaceNetwork, flow: dict[int, float], o: int, d: int,
                   tol: float = 1e-7) -> list[tuple[list[int], float]]:
    flow = dict(flow)
    out: dict[int, list[int]] = defaultdict(list)
    for a in sorted(flow):
        out[net.a_tail[a]].append(a)
    paths = []
    while True:
        start = [a for a in out.get(o, ()) if flow.get(a, 0.0) > tol]
        if not start:
            break
        path, v = [], o
        while v != d:
            nxt = max((a for a in out.get(v, ()) if flow.get(a, 0.0) > tol), key=lambda a: flow[a], default=None)
            if nxt is None:
                raise DecodeError(f"passenger flow of group at vertex {v} does not reach its destination")
            path.append(nxt)
            v = net.a_head[nxt]
        vol = min(flow[a] for a in path)
        for a in path:
            flow[a] -= vol
        paths.append((path, vol))
    return paths


# ---------------------------------------------------------------------------
# Solution decoding
# ---------------------------------------------------------------------------

@dataclass
class SolveReport:
    status: str
    objective: float | None
    lower_bound: float | None = None
    upper_bound: float | None = None
    gap: float | None = None
    formulation: str = ""
    trains: list[dict] = field(default_factory=list)
    passengers: list[dict] = field(default_factory=list)
    served: dict[str, float] = field(default_factory=dict)
    unserved: dict[str, float] = field(default_factory=dict)
    costs: dict[str, float] = field(default_factory=dict)
    inventory: dict[str, dict[str, list[int]]] = field(default_factory=dict)
    rsu_usage: dict[str, int] = field(default_factory=dict)
    lines: dict[str, dict[str, int]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    trace: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolveReport":
        return cls(**d)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "SolveReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def timetable(self) -> dict:
        """The part read by the validator."""
        return {"trains": self.trains, "passengers": self.passengers, "unserved": self.unserved}


def _chain(net: TimeSpaceNetwork, arcs: list[int], owner: str) -> list[list[int]]:
    """Split a set of selected arcs into source-to-sink chains."""
    by_tail: dict[int, list[int]] = defaultdict(list)
    for a in sorted(arcs, key=lambda a: (net.tail_tick(a), a)):
        by_tail[net.a_tail[a]].append(a)
    used = set()
    chains = []
    for a0 in sorted((a for a in arcs if net.a_kind[a] == ArcKind.SOURCE), key=lambda a: (net.tail_tick(a), a)):
        chain = [a0]
        used.add(a0)
        v = net.a_head[a0]
        while True:
            nxt = [a for a in by_tail.get(v, ()) if a not in used]
            if not nxt:
                break
            a = nxt[0]
            chain.append(a)
            used.add(a)
            if net.a_kind[a] == ArcKind.SINK:
                break
            v = net.a_head[a]
        if net.a_kind[chain[-1]] != ArcKind.SINK:
            raise DecodeError(f"{owner}: selected arcs do not end in a sink arc")
        chains.append(chain)
    left = set(arcs) - used
    if left:
        raise DecodeError(f"{owner}: {len(left)} selected arcs are not on a source-sink chain")
    return chains


def chain_events(net: TimeSpaceNetwork, chain: Sequence[int]) -> list[dict]:
    """Station events (minutes) of a train arc chain."""
    inst = net.inst
    events: list[dict] = []
    for a in chain:
        if net.a_kind[a] != ArcKind.SECTION:
            continue
        tn, hn = net.vnode(net.a_tail[a]), net.vnode(net.a_head[a])
        dep = inst.minutes(net.tail_tick(a))
        if not events:
            events.append({"station": tn.station, "arr": None, "dep": dep, "stop": True})
        else:
            events[-1]["dep"] = dep
        events.append({"station": hn.station, "arr": inst.minutes(net.head_tick(a)), "dep": None,
                       "stop": hn.kind == NodeKind.ARR_STOP})
    return events


def _ride_legs(problem: Problem, path: Sequence[int], owner: dict[int, str]) -> list[dict]:
    net, inst = problem.net, problem.inst
    legs: list[dict] = []
    cur: dict | None = None
    for a in path:
        if net.a_kind[a] not in TRAVEL_KINDS:
            cur = None
            continue
        k = owner.get(a)
        if k is None:
            raise DecodeError(f"passenger flow on arc {net.arc_label(a)} that no train serves")
        if cur is None or cur["train"] != k:
            if net.a_kind[a] != ArcKind.SECTION:
                raise DecodeError(f"passenger ride starts on non-section arc {net.arc_label(a)}")
            m = net.vnode(net.a_tail[a]).station
            cur = {"train": k, "board": m, "dep": inst.minutes(net.tail_tick(a))}
            legs.append(cur)
        if net.a_kind[a] == ArcKind.SECTION:
            cur["alight"] = net.vnode(net.a_head[a]).station
            cur["arr"] = inst.minutes(net.head_tick(a))
    return legs


COST_FAMILY = {ArcKind.ORIGIN: "shift", ArcKind.WAIT: "wait", ArcKind.SECTION: "in_vehicle",
               ArcKind.DWELL: "in_vehicle", ArcKind.PASSING: "in_vehicle", ArcKind.WALK: "transfer"}


def extract_solution(problem: Problem, master: Master, xvec: Sequence[float],
                     flows: Sequence[tuple[str, Sequence[int], float]],
                     unserved: dict[str, float], status: str = Status.OPTIMAL.value,
                     objective: float | None = None, fixed_groups: Iterable[str] = ()) -> SolveReport:
    """Decode trains, extra trains, inventories and passenger paths from a master vector.

    ``flows`` lists (group, path arcs, volume); ``unserved`` maps group to its unrouted volume.
    """
    master.check_integral(xvec)
    net, inst = problem.net, problem.inst
    rep = SolveReport(status=str(status), objective=None if objective is None else float(objective))
    unserved = {r: float(q) for r, q in unserved.items()}
    owner: dict[int, str] = {}
    usage = {u: 0 for u in problem.types}
    lines: dict[str, dict[str, int]] = {l: {"operated": 0, "cancelled": 0} for l in inst.lines}
    for k in sorted(inst.trains):
        tr = inst.trains[k]
        chosen = [u for u in problem.types if (k, u) in master.theta and xvec[master.theta[(k, u)]] > 0.5]
        entry = {"id": k, "line": tr.line, "rsu": None, "operated": False, "events": []}
        if chosen:
            u = chosen[0]
            arcs = [a for a in problem.train_subs[k].arcs if xvec[master.x[(k, u, a)]] > 0.5]
            chains = _chain(net, arcs, k)
            if len(chains) != 1:
                raise DecodeError(f"train {k} decodes to {len(chains)} chains")
            for a in chains[0]:
                if net.a_kind[a] in TRAVEL_KINDS:
                    owner[a] = k
            entry.update(rsu=u, operated=True, events=chain_events(net, chains[0]))
            usage[u] += 1
            lines[tr.line]["operated"] += 1
        else:
            lines[tr.line]["cancelled"] += 1
        rep.trains.append(entry)
    extras = []
    for u in problem.types:
        arcs = [a for a in problem.extra.arcs if xvec[master.y[(u, a)]] > 0.5]
        for chain in _chain(net, arcs, f"extra/{u}"):
            extras.append((net.tail_tick(chain[0]), net.vnode(net.a_head[chain[0]]).station, u, chain))
    for i, (_, _, u, chain) in enumerate(sorted(extras, key=lambda e: e[:3]), 1):
        kid = f"X{i}"
        for a in chain:
            if net.a_kind[a] in TRAVEL_KINDS:
                if a in owner:
                    raise DecodeError(f"arc {net.arc_label(a)} used by {owner[a]} and {kid}")
                owner[a] = kid
        rep.trains.append({"id": kid, "line": None, "rsu": u, "operated": True,
                           "events": chain_events(net, chain)})
        usage[u] += 1
    rep.rsu_usage = usage
    rep.lines = lines
    for st in sorted(problem.inv_arcs):
        rep.inventory[st] = {u: [int(round(xvec[master.w[(u, a)]])) for a in problem.inv_arcs[st]]
                             for u in problem.types}
    costs = {"shift": 0.0, "wait": 0.0, "in_vehicle": 0.0, "transfer": 0.0, "penalty": 0.0}
    served: dict[str, float] = defaultdict(float)
    for r, path, vol in flows:
        vol = float(vol)
        for a in path:
            fam = COST_FAMILY.get(net.a_kind[a])
            if fam:
                costs[fam] += vol * net.a_cost[a]
        served[r] += vol
        rep.passengers.append({"group": r, "volume": vol, "depart": inst.minutes(net.head_tick(path[0])),
                               "transfers": sum(1 for a in path if net.a_kind[a] == ArcKind.WALK),
                               "cost": sum(net.a_cost[a] for a in path),
                               "legs": _ride_legs(problem, path, owner)})
    for r, q in unserved.items():
        costs["penalty"] += q * inst.groups[r].penalty
    rep.costs = costs
    groups = set(problem.groups) | set(fixed_groups)
    rep.served = {r: served.get(r, 0.0) for r in sorted(groups)}
    rep.unserved = {r: unserved.get(r, 0.0) for r in sorted(groups)}
    if objective is None:
        rep.objective = sum(costs.values())
    return rep


def solve_monolithic(problem: Problem, formulation: str = "arc", gap: float = 0.0,
                     time_limit: float | None = None, backend: str | None = None,
                     threads: int | None = None) -> SolveReport:
    """Solve the whole model in one MIP (``arc`` flows or enumerated ``path`` columns)."""
    t0 = time.perf_counter()
    if formulation == "arc":
        master, rt = build_arc_oracle(problem)
    elif formulation == "path":
        master, rt = build_path_model(problem)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    t_build = time.perf_counter() - t0
    out = solve(master.model, gap=gap, time_limit=time_limit, backend=backend, threads=threads)
    return report_from_outcome(problem, master, rt, out, formulation, {"build": t_build, "solve": out.wall_time})


def report_from_outcome(problem: Problem, master: Master, rt: Routing, out: SolveOutcome,
                        formulation: str, timings: dict[str, float]) -> SolveReport:
    if not out.has_solution:
        rep = SolveReport(status=out.status.value, objective=None, lower_bound=out.bound,
                          formulation=formulation, timings=timings)
        rep.notes.append(out.message)
        return rep
    flows = routing_flows(problem, rt, out.x)
    unserved = {r: out.x[j] for r, j in rt.q.items()}
    rep = extract_solution(problem, master, out.x, flows, unserved, out.status.value, out.objective)
    rep.formulation = formulation
    rep.upper_bound = float(out.objective)
    rep.lower_bound = None if out.bound is None else float(out.bound)
    rep.gap = out.gap
    rep.timings = timings
    rep.counts = {"columns": len(rt.columns), "variables": master.model.num_vars,
                  "constraints": master.model.num_constrs}
    return rep
