"""Column generation for passenger routing: shortest-path pricing with a transfer limit,
partial pricing, time-shifted column copies and the restricted routing LP."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from hpttp.model import Column, Problem, make_column
from hpttp.solver import INF, LinearModel, SolveOutcome, Status, Variable, Constraint, open_handle
from hpttp.tsnet import ArcKind, Subnetwork, TimeSpaceNetwork, TRAVEL_KINDS

log = logging.getLogger(__name__)

RC_TOL = 1e-6
COST_TOL = 1e-9
CG_MODES = ("standard", "pp", "cc", "cc+pp")


@dataclass
class DualPrices:
    lam: dict[int, float] = field(default_factory=dict)  # capacity rows, <= 0
    mu: dict[str, float] = field(default_factory=dict)   # demand rows

    def arc(self, a: int) -> float:
        return self.lam.get(a, 0.0)


@dataclass
class PricingOutcome:
    group: str
    path: tuple[int, ...]
    rc: float
    cost: float = 0.0
    transfers: int = 0


class GroupGraph:
    """A subnetwork laid out for dynamic programming: vertices in topological order,
    arcs sorted by tail position."""

    def __init__(self, net: TimeSpaceNetwork, sub: Subnetwork, source: int, target: int):
        verts = sorted(sub.vertices | {source, target}, key=lambda v: (net.order_key(v), v))
        pos = {v: i for i, v in enumerate(verts)}
        arcs = sorted(sub.arcs, key=lambda a: (pos[net.a_tail[a]], a))
        self.n = len(verts)
        self.source = pos[source]
        self.target = pos[target]
        self.arc_ids = arcs
        self.tail = [pos[net.a_tail[a]] for a in arcs]
        self.head = [pos[net.a_head[a]] for a in arcs]
        self.cost = [net.a_cost[a] for a in arcs]
        self.walk = [1 if net.a_kind[a] == ArcKind.WALK else 0 for a in arcs]
        for t, h in zip(self.tail, self.head):
            if h <= t:
                raise ValueError("subnetwork is not in topological order")


def _path_back(pred_arc: list[int], pred_state: list[int], state: int, arc_ids: list[int]) -> list[int]:
    out = []
    while pred_arc[state] >= 0:
        out.append(arc_ids[pred_arc[state]])
        state = pred_state[state]
    out.reverse()
    return out


def cheapest_path(g: GroupGraph, costs: Sequence[float], marked: Sequence[bool] | None = None,
                  forbidden: Sequence[bool] | None = None) -> tuple[list[int] | None, float, int]:
    """Lexicographic (cost, transfers) shortest path ignoring the transfer limit.

    With ``marked`` the path must use at least one marked arc.  Returns (arcs, cost, transfers).
    """
    layers = 2 if marked is not None else 1
    size = g.n * layers
    best = [math.inf] * size
    trn = [0] * size
    pred_arc = [-1] * size
    pred_state = [-1] * size
    best[g.source] = 0.0
    tail, head, walk, ids = g.tail, g.head, g.walk, g.arc_ids
    n = g.n
    for i in range(len(ids)):
        if forbidden is not None and forbidden[i]:
            continue
        t = tail[i]
        for layer in range(layers):
            s = t + layer * n
            c = best[s]
            if c == math.inf:
                continue
            nl = 1 if (layer == 1 or (marked is not None and marked[i])) else 0
            h = head[i] + nl * n
            nc = c + costs[i]
            nt = trn[s] + walk[i]
            bh = best[h]
            if nc < bh - COST_TOL or (nc <= bh + COST_TOL and (
                    nt < trn[h] or (nt == trn[h] and pred_arc[h] >= 0 and ids[i] < ids[pred_arc[h]]))):
                best[h] = nc
                trn[h] = nt
                pred_arc[h] = i
                pred_state[h] = s
    goal = g.target + (n if marked is not None else 0)
    if best[goal] == math.inf:
        return None, math.inf, 0
    return _path_back(pred_arc, pred_state, goal, ids), best[goal], trn[goal]


def label_correcting_rcsp(g: GroupGraph, costs: Sequence[float], max_transfers: int,
                          marked: Sequence[bool] | None = None,
                          forbidden: Sequence[bool] | None = None) -> tuple[list[int] | None, float, int]:
    """Cheapest path with at most ``max_transfers`` transfer arcs.

    Labels (cost, transfers, marked-flag) are extended along arcs in topological order;
    a label is dropped when another label at the same vertex with the same flag has no
    larger cost and no more transfers.
    """
    # label: (cost, transfers, flag, arc index, parent label)
    labels: list[list[tuple]] = [[] for _ in range(g.n)]
    labels[g.source].append((0.0, 0, 0, -1, None))
    tail, head, walk = g.tail, g.head, g.walk

    def insert(bucket: list[tuple], lab: tuple) -> None:
        c, tr, fl = lab[0], lab[1], lab[2]
        for o in bucket:
            if o[2] == fl and o[0] <= c + COST_TOL and o[1] <= tr:
                return
        bucket[:] = [o for o in bucket if not (o[2] == fl and c <= o[0] + COST_TOL and tr <= o[1])]
        bucket.append(lab)

    for i in range(len(g.arc_ids)):
        if forbidden is not None and forbidden[i]:
            continue
        src = labels[tail[i]]
        if not src:
            continue
        w = walk[i]
        ci = costs[i]
        mi = 1 if (marked is not None and marked[i]) else 0
        dst = labels[head[i]]
        for lab in list(src):
            tr = lab[1] + w
            if tr > max_transfers:
                continue
            insert(dst, (lab[0] + ci, tr, lab[2] | mi, i, lab))
    want = 1 if marked is not None else 0
    cands = [lab for lab in labels[g.target] if lab[2] == want]
    if not cands:
        return None, math.inf, 0

    def arcs_of(lab) -> list[int]:
        out = []
        while lab[3] >= 0:
            out.append(g.arc_ids[lab[3]])
            lab = lab[4]
        out.reverse()
        return out

    best = min(cands, key=lambda l: (l[0], l[1]))
    ties = [l for l in cands if l[0] <= best[0] + COST_TOL and l[1] == best[1]]
    path = min((arcs_of(l) for l in ties))
    return path, best[0], best[1]


class Pricer:
    """Per-group pricing against a dual snapshot."""

    def __init__(self, problem: Problem, max_transfers: int | None = None):
        self.problem = problem
        self.net = problem.net
        self.max_transfers = (problem.inst.params.costs.max_transfers
                              if max_transfers is None else max_transfers)
        self._graphs: dict[str, GroupGraph | None] = {}
        self.calls = 0

    def graph(self, r: str) -> GroupGraph | None:
        if r not in self._graphs:
            sub = self.problem.pax_subs[r]
            net = self.net
            self._graphs[r] = (GroupGraph(net, sub, net.origin_vertex[r], net.dest_vertex[r])
                               if sub.arcs else None)
        return self._graphs[r]

    def price(self, r: str, duals: DualPrices, marked: set[int] | None = None,
              forbidden: set[int] | None = None) -> PricingOutcome:
        """Minimum reduced-cost path of group ``r``; ``rc = inf`` when there is none."""
        self.calls += 1
        g = self.graph(r)
        if g is None:
            return PricingOutcome(r, (), math.inf)
        lam = duals.lam
        costs = [c - lam.get(a, 0.0) for c, a in zip(g.cost, g.arc_ids)] if lam else g.cost
        mk = [a in marked for a in g.arc_ids] if marked is not None else None
        fb = [a in forbidden for a in g.arc_ids] if forbidden else None
        path, val, tr = cheapest_path(g, costs, mk, fb)
        if path is not None and tr > self.max_transfers:
            path, val, tr = label_correcting_rcsp(g, costs, self.max_transfers, mk, fb)
        if path is None:
            return PricingOutcome(r, (), math.inf)
        base = sum(self.net.a_cost[a] for a in path)
        return PricingOutcome(r, tuple(path), val - duals.mu.get(r, 0.0), base, tr)

    def column(self, out: PricingOutcome) -> Column:
        return Column(out.group, out.path, out.cost, out.transfers)


def price_group(pricer: Pricer, r: str, duals: DualPrices, **kw) -> PricingOutcome:
    return pricer.price(r, duals, **kw)


class PartialPricing:
    """Cyclic scan over groups that stops after ``s`` improving columns and remembers where."""

    def __init__(self, groups: Sequence[str], s: int | None = None):
        self.groups = list(groups)
        self.s = s if s is not None else max(1, math.ceil(len(self.groups) / 10))
        self.pos = 0

    def scan(self, pricer: Pricer, duals: DualPrices, **kw) -> tuple[list[PricingOutcome], bool]:
        """Returns (improving outcomes, full_scan) where ``full_scan`` means every group was priced."""
        found: list[PricingOutcome] = []
        n = len(self.groups)
        for step in range(n):
            r = self.groups[(self.pos + step) % n]
            out = pricer.price(r, duals, **kw)
            if out.rc < -RC_TOL:
                found.append(out)
                if len(found) >= self.s:
                    self.pos = (self.pos + step + 1) % n
                    return found, step + 1 == n
        return found, True


def copy_targets(problem: Problem) -> dict[str, list[tuple[str, int]]]:
    """For each group, the same-OD groups with the tick offset of their period start."""
    inst = problem.inst
    cycle = inst.params.cycle
    ticks = int(round(cycle / inst.step)) if cycle else 0
    by_od: dict[tuple[str, str], list[str]] = defaultdict(list)
    for r in problem.groups:
        g = inst.groups[r]
        by_od[(g.origin, g.destination)].append(r)
    out: dict[str, list[tuple[str, int]]] = {}
    for r in problem.groups:
        g = inst.groups[r]
        out[r] = [(r2, (inst.groups[r2].period - g.period) * ticks)
                  for r2 in by_od[(g.origin, g.destination)] if inst.groups[r2].period >= g.period]
    return out


def copy_columns(problem: Problem, col: Column, targets: dict[str, list[tuple[str, int]]] | None = None,
                 max_dev: int | None = None) -> list[Column]:
    """Time-shifted copies of a column for same-OD groups of the same and later periods.

    Offsets are period multiples of the cycle plus every deviation in [-tau, tau] ticks.
    A copy is kept only if every shifted arc lies in the target group's subnetwork.
    """
    net, inst = problem.net, problem.inst
    targets = targets if targets is not None else copy_targets(problem)
    if max_dev is None:
        max_dev = int(math.floor(inst.params.tau / inst.step + 1e-9))
    ups = inst.params.costs.max_transfers
    out = []
    seen = {col.key}
    sets: dict[str, set[int]] = {}
    for r2, base in targets.get(col.group, ()):
        allowed = sets.get(r2)
        if allowed is None:
            allowed = sets[r2] = problem.pax_subs[r2].arc_set()
        if not allowed:
            continue
        for d in range(-max_dev, max_dev + 1):
            delta = base + d
            arcs = []
            for a in col.arcs:
                b = net.shifted_arc(a, delta, r2)
                if b is None or b not in allowed:
                    break
                arcs.append(b)
            else:
                new = make_column(net, r2, arcs)
                if new.transfers <= ups and new.key not in seen:
                    seen.add(new.key)
                    out.append(new)
    return out


# ---------------------------------------------------------------------------
# Restricted routing LP
# ---------------------------------------------------------------------------

class RoutingLP:
    """Path-flow routing LP with capacity rows created on first use.

    Rows: ``sum z_p over paths through a (+ kcap[a]*kappa) <= rhs[a]`` and
    ``sum z_p + q_r (+ g_r*kappa) = g_r``.  The optional free variable ``kappa`` (with
    objective ``kappa_obj``) turns the model into the auxiliary problem for
    Pareto-optimal cuts.
    """

    def __init__(self, problem: Problem, groups: Iterable[str] | None = None,
                 backend: str | None = None, threads: int | None = None,
                 kappa: tuple[float, dict[int, float]] | None = None,
                 rhs: dict[int, float] | None = None):
        self.problem = problem
        inst = problem.inst
        self.groups = list(problem.groups if groups is None else groups)
        self.model = m = LinearModel("routing")
        self.rhs: dict[int, float] = dict(rhs or {})
        self.row_of: dict[int, int] = {}
        self.demand_row: dict[str, int] = {}
        self.q: dict[str, int] = {}
        self.columns: list[Column] = []
        self.col_var: list[int] = []
        self.keys: set = set()
        self.kappa: int | None = None
        self.kcap: dict[int, float] = {}
        for r in self.groups:
            self.q[r] = m.add_var(f"q[{r}]", 0, INF, False, inst.groups[r].penalty)
        if kappa is not None:
            kobj, self.kcap = kappa[0], dict(kappa[1])
            self.kappa = m.add_var("kappa", -INF, INF, False, kobj)
        for r in self.groups:
            row = {self.q[r]: 1.0}
            if self.kappa is not None:
                row[self.kappa] = inst.groups[r].size
            self.demand_row[r] = m.add_constr(row, "=", inst.groups[r].size, f"demand[{r}]")
        if self.kappa is not None:
            for a in sorted(a for a, c in self.kcap.items() if c > 0):
                self.row_of[a] = m.add_constr({self.kappa: self.kcap[a]}, "<=", self.rhs.get(a, 0.0), f"cap[{a}]")
        self.handle = open_handle(m, backend, threads=threads)
        self.last: SolveOutcome | None = None

    @property
    def num_columns(self) -> int:
        return len(self.columns)

    def set_capacities(self, cap: dict[int, float]) -> None:
        self.rhs = dict(cap)
        for a, i in self.row_of.items():
            self.handle.set_rhs(i, self.rhs.get(a, 0.0))

    def add_columns(self, cols: Iterable[Column]) -> int:
        net = self.problem.net
        fresh = []
        for c in cols:
            if c.key in self.keys or c.group not in self.demand_row:
                continue
            self.keys.add(c.key)
            fresh.append(c)
        if not fresh:
            return 0
        new_rows = []
        new_arcs = []
        for c in fresh:
            for a in c.arcs:
                if net.a_kind[a] in TRAVEL_KINDS and a not in self.row_of and a not in new_arcs:
                    new_arcs.append(a)
        for a in new_arcs:
            coeffs = {self.kappa: self.kcap[a]} if (self.kappa is not None and self.kcap.get(a)) else {}
            new_rows.append(Constraint(f"cap[{a}]", "<=", self.rhs.get(a, 0.0), coeffs))
        if new_rows:
            idx = self.handle.add_rows(new_rows)
            for a, i in zip(new_arcs, idx):
                self.row_of[a] = i
        specs = []
        for c in fresh:
            coefs = {self.demand_row[c.group]: 1.0}
            for a in c.arcs:
                if net.a_kind[a] in TRAVEL_KINDS:
                    coefs[self.row_of[a]] = 1.0
            specs.append((Variable(f"z[{len(self.columns) + len(specs)}]", 0.0, INF, False, c.cost), coefs))
        idx = self.handle.add_columns(specs)
        self.columns.extend(fresh)
        self.col_var.extend(idx)
        return len(fresh)

    def solve(self) -> SolveOutcome:
        if not self.groups and not self.columns and self.kappa is None:
            n = len(self.row_of)
            self.last = SolveOutcome(Status.OPTIMAL, x=np.zeros(0), duals=np.zeros(n), objective=0.0, bound=0.0)
            return self.last
        out = self.handle.solve(relax=True)
        if out.status != Status.OPTIMAL or out.duals is None:
            raise RuntimeError(f"routing LP not solved to optimality: {out.status.value} {out.message}")
        self.last = out
        return out

    def duals(self) -> DualPrices:
        d = self.last.duals
        lam = {a: min(0.0, float(d[i])) for a, i in self.row_of.items() if d[i] != 0.0}
        mu = {r: float(d[i]) for r, i in self.demand_row.items()}
        return DualPrices(lam, mu)

    @property
    def objective(self) -> float:
        return float(self.last.objective)

    def flows(self, tol: float = 1e-9) -> list[tuple[str, tuple[int, ...], float]]:
        x = self.last.x
        return [(c.group, c.arcs, float(x[j])) for c, j in zip(self.columns, self.col_var) if x[j] > tol]

    def unserved(self) -> dict[str, float]:
        x = self.last.x
        return {r: float(x[j]) for r, j in self.q.items()}


# ---------------------------------------------------------------------------
# Column generation driver
# ---------------------------------------------------------------------------

@dataclass
class CGStats:
    iterations: int = 0
    columns: int = 0
    copies: int = 0
    phase_switch: int | None = None
    bounds: list[tuple[float, float]] = field(default_factory=list)  # (objective, lagrangian bound)


def lagrangian_bound(z: float, problem: Problem, duals: DualPrices, best_rc: dict[str, float]) -> float:
    """``z + sum_r g_r min(0, rc_r)``; groups not priced use ``-mu_r`` (paths cost at least 0)."""
    inst = problem.inst
    lb = z
    for r, mu in duals.mu.items():
        rc = best_rc.get(r, -mu)
        if rc < 0:
            lb += inst.groups[r].size * rc
    return lb


def hybrid_cg(lp: RoutingLP, pricer: Pricer, mode: str = "cc+pp", s: int | None = None,
              partial: PartialPricing | None = None, marked: set[int] | None = None,
              forbidden: set[int] | None = None, switch_ratio: float = 0.9,
              max_iter: int = 100_000, on_iter: Callable[[RoutingLP], None] | None = None) -> CGStats:
    """Run column generation on ``lp`` until no group has a path with negative reduced cost.

    ``standard`` prices every group each round; ``pp`` uses partial pricing; ``cc`` first
    prices only earliest-period groups and copies their columns to other periods, until
    the Lagrangian bound reaches ``switch_ratio`` of the LP value, then prices fully;
    ``cc+pp`` does the same but finishes with partial pricing.
    """
    if mode not in CG_MODES:
        raise ValueError(f"unknown column generation mode {mode!r}")
    problem = lp.problem
    inst = problem.inst
    stats = CGStats()
    groups = lp.groups
    kw = {"marked": marked, "forbidden": forbidden}
    use_copy = mode in ("cc", "cc+pp")
    use_pp = mode in ("pp", "cc+pp")
    pp = partial or PartialPricing(groups, s)
    targets = copy_targets(problem) if use_copy else None
    first = min((inst.groups[r].period for r in groups), default=0)
    phase1 = [r for r in groups if inst.groups[r].period == first] if use_copy else []
    in_phase1 = use_copy and bool(groups)
    lp.solve()
    while stats.iterations < max_iter:
        stats.iterations += 1
        duals = lp.duals()
        if on_iter:
            on_iter(lp)
        if in_phase1:
            outs = [pricer.price(r, duals, **kw) for r in phase1]
            best = {o.group: o.rc for o in outs}
            lb = lagrangian_bound(lp.objective, problem, duals, best)
            stats.bounds.append((lp.objective, lb))
            new = [pricer.column(o) for o in outs if o.rc < -RC_TOL]
            copies = []
            for c in new:
                copies.extend(copy_columns(problem, c, targets))
            added = lp.add_columns(new)
            nc = lp.add_columns(copies)
            stats.columns += added + nc
            stats.copies += nc
            if added + nc == 0 or lb >= switch_ratio * lp.objective - 1e-9:
                in_phase1 = False
                stats.phase_switch = stats.iterations
            if added + nc:
                lp.solve()
            continue
        if use_pp:
            outs, full = pp.scan(pricer, duals, **kw)
        else:
            outs = [o for o in (pricer.price(r, duals, **kw) for r in groups) if o.rc < -RC_TOL]
            full = True
        if full and not outs:
            break
        added = lp.add_columns(pricer.column(o) for o in outs)
        stats.columns += added
        if added == 0:
            if full:
                log.warning("pricing returned only known columns; stopping column generation")
                break
            continue
        lp.solve()
    return stats
