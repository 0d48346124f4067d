"""Time-space network: vertices, typed arcs, subnetworks and headway conflict sets."""
from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

from hpttp.instance import Instance


class NodeKind(IntEnum):
    DEP_STOP = 0
    ARR_STOP = 1
    DEP_SKIP = 2
    ARR_SKIP = 3
    TRANSFER = 4
    INVENTORY = 5
    ORIGIN = 6
    DEST = 7


class ArcKind(IntEnum):
    SECTION = 0
    DWELL = 1
    PASSING = 2
    INVENTORY = 3
    SOURCE = 4
    SINK = 5
    WALK = 6
    WAIT = 7
    BOARD = 8
    ORIGIN = 9
    DEST = 10


TRAVEL_KINDS = frozenset({ArcKind.SECTION, ArcKind.DWELL, ArcKind.PASSING})
DEPARTURES = (NodeKind.DEP_STOP, NodeKind.DEP_SKIP)
ARRIVALS = (NodeKind.ARR_STOP, NodeKind.ARR_SKIP)
BOUNDARY = frozenset({NodeKind.DEP_STOP, NodeKind.ARR_STOP, NodeKind.DEP_SKIP, NodeKind.ARR_SKIP})

# order of node kinds inside one tick; every zero-duration arc goes forward in it
_RANK = {NodeKind.ORIGIN: -1, NodeKind.ARR_STOP: 0, NodeKind.ARR_SKIP: 1, NodeKind.TRANSFER: 2,
         NodeKind.INVENTORY: 3, NodeKind.DEP_SKIP: 4, NodeKind.DEP_STOP: 5, NodeKind.DEST: 6}


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    station: str
    other: str | None = None  # adjacent station, or group id for od nodes

    def label(self) -> str:
        k = self.kind.name.lower()
        return f"{k}[{self.station}|{self.other}]" if self.other is not None else f"{k}[{self.station}]"


@dataclass
class Subnetwork:
    owner: str
    vertices: set[int] = field(default_factory=set)
    arcs: list[int] = field(default_factory=list)
    virtual: list[int] = field(default_factory=list)

    def arc_set(self) -> set[int]:
        return set(self.arcs)


class TimeSpaceNetwork:
    """Directed acyclic time-space graph with dense integer vertex and arc ids."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.nodes: list[Node] = []
        self.node_id: dict[Node, int] = {}
        self.v_node: list[int] = []
        self.v_tick: list[int] = []
        self.vid: dict[tuple[int, int], int] = {}
        self.a_kind: list[ArcKind] = []
        self.a_tail: list[int] = []
        self.a_head: list[int] = []
        self.a_dur: list[int] = []
        self.a_len: list[float] = []
        self.a_cost: list[float] = []
        self.a_group: list[str | None] = []
        self.out_arcs: list[list[int]] = []
        self.in_arcs: list[list[int]] = []
        self.arc_of: dict[tuple[int, int], int] = {}
        self.origin_vertex: dict[str, int] = {}
        self.dest_vertex: dict[str, int] = {}

    # -- primitive construction -------------------------------------------
    def node(self, kind: NodeKind, station: str, other: str | None = None) -> int:
        n = Node(kind, station, other)
        nid = self.node_id.get(n)
        if nid is None:
            nid = len(self.nodes)
            self.nodes.append(n)
            self.node_id[n] = nid
        return nid

    def vertex(self, node: int, tick: int) -> int:
        key = (node, tick)
        v = self.vid.get(key)
        if v is None:
            v = len(self.v_node)
            self.vid[key] = v
            self.v_node.append(node)
            self.v_tick.append(tick)
            self.out_arcs.append([])
            self.in_arcs.append([])
        return v

    def add_arc(self, kind: ArcKind, tail: int, head: int, dur: int, length: float = 0.0,
                cost: float = 0.0, group: str | None = None) -> int:
        a = len(self.a_kind)
        self.a_kind.append(kind)
        self.a_tail.append(tail)
        self.a_head.append(head)
        self.a_dur.append(dur)
        self.a_len.append(length)
        self.a_cost.append(cost)
        self.a_group.append(group)
        self.out_arcs[tail].append(a)
        self.in_arcs[head].append(a)
        self.arc_of[(tail, head)] = a
        return a

    # -- queries --------------------------------------------------------------
    @property
    def num_arcs(self) -> int:
        return len(self.a_kind)

    @property
    def num_vertices(self) -> int:
        return len(self.v_node)

    def vnode(self, v: int) -> Node:
        return self.nodes[self.v_node[v]]

    def find_vertex(self, kind: NodeKind, station: str, other: str | None, tick: int) -> int | None:
        nid = self.node_id.get(Node(kind, station, other))
        if nid is None:
            return None
        return self.vid.get((nid, tick))

    def find_arc(self, tail: int | None, head: int | None) -> int | None:
        if tail is None or head is None:
            return None
        return self.arc_of.get((tail, head))

    def order_key(self, v: int) -> tuple[int, int]:
        node = self.nodes[self.v_node[v]]
        if node.kind == NodeKind.ORIGIN:
            return (-1, 0)
        if node.kind == NodeKind.DEST:
            return (1 << 30, 0)
        return (self.v_tick[v], _RANK[node.kind])

    def is_travel(self, a: int) -> bool:
        return self.a_kind[a] in TRAVEL_KINDS

    def arc_label(self, a: int) -> str:
        t, h = self.a_tail[a], self.a_head[a]
        return (f"{self.a_kind[a].name.lower()}:{self.vnode(t).label()}@{self.v_tick[t]}"
                f"->{self.vnode(h).label()}@{self.v_tick[h]}")

    def arc_stations(self, a: int) -> tuple[str, str]:
        return self.vnode(self.a_tail[a]).station, self.vnode(self.a_head[a]).station

    def tail_tick(self, a: int) -> int:
        return self.v_tick[self.a_tail[a]]

    def head_tick(self, a: int) -> int:
        return self.v_tick[self.a_head[a]]

    def shifted_arc(self, a: int, delta: int, group: str | None = None) -> int | None:
        """Arc with the same nodes shifted by ``delta`` ticks (od endpoints re-targeted to ``group``)."""
        t, h = self.a_tail[a], self.a_head[a]
        return self.find_arc(self._shift_vertex(t, delta, group), self._shift_vertex(h, delta, group))

    def _shift_vertex(self, v: int, delta: int, group: str | None) -> int | None:
        node = self.nodes[self.v_node[v]]
        if node.kind == NodeKind.ORIGIN:
            return self.origin_vertex.get(group if group is not None else node.other)
        if node.kind == NodeKind.DEST:
            return self.dest_vertex.get(group if group is not None else node.other)
        return self.vid.get((self.v_node[v], self.v_tick[v] + delta))

    def counts(self) -> dict[str, int]:
        c: dict[str, int] = defaultdict(int)
        for k in self.a_kind:
            c[k.name.lower()] += 1
        c["vertices"] = self.num_vertices
        c["arcs"] = self.num_arcs
        return dict(c)


def _ticks(inst: Instance, minutes: float) -> int:
    return inst.dur(minutes)


def build_network(inst: Instance) -> TimeSpaceNetwork:
    """Full time-space network over the planning horizon."""
    net = TimeSpaceNetwork(inst)
    nt, ninv = inst.num_ticks, inst.num_inv_ticks
    step = inst.step
    costs = inst.params.costs
    min_run = min(inst.section_ticks(a, b, False, False) for (a, b) in inst.sections)
    if min_run >= nt:
        raise ValueError("horizon too short for any section traversal")
    stations = sorted(inst.stations)
    # vertices for every timetable node, in a deterministic order
    for m in stations:
        for mp in inst.stations[m].adjacency:
            for kind in (NodeKind.DEP_STOP, NodeKind.ARR_STOP, NodeKind.DEP_SKIP, NodeKind.ARR_SKIP):
                nid = net.node(kind, m, mp)
                for t in range(nt):
                    net.vertex(nid, t)
        nid = net.node(NodeKind.TRANSFER, m)
        for t in range(nt):
            net.vertex(nid, t)
        if inst.stations[m].is_terminal:
            nid = net.node(NodeKind.INVENTORY, m)
            for t in range(ninv):
                net.vertex(nid, t)

    def V(kind, m, other, t):
        return net.vid[(net.node_id[Node(kind, m, other)], t)]

    # section arcs, four stop patterns
    for (m, mp) in sorted(inst.sections):
        e = inst.sections[(m, mp)]
        for dep_stop in (False, True):
            for arr_stop in (False, True):
                d = inst.section_ticks(m, mp, dep_stop, arr_stop)
                dk = NodeKind.DEP_STOP if dep_stop else NodeKind.DEP_SKIP
                ak = NodeKind.ARR_STOP if arr_stop else NodeKind.ARR_SKIP
                for t in range(nt - d):
                    net.add_arc(ArcKind.SECTION, V(dk, m, mp, t), V(ak, mp, m, t + d), d,
                                e.length, costs.veh * d * step)
    for m in stations:
        adj = inst.stations[m].adjacency
        dwell = list(inst.dwell_range(m))
        for a in adj:
            for b in adj:
                if a == b:
                    continue
                for t in range(nt):
                    for d in dwell:
                        if t + d < nt:
                            net.add_arc(ArcKind.DWELL, V(NodeKind.ARR_STOP, m, a, t),
                                        V(NodeKind.DEP_STOP, m, b, t + d), d, 0.0, costs.veh * d * step)
                    net.add_arc(ArcKind.PASSING, V(NodeKind.ARR_SKIP, m, a, t),
                                V(NodeKind.DEP_SKIP, m, b, t), 0, 0.0, 0.0)
    conn = inst.conn_ticks
    for m in stations:
        if not inst.stations[m].is_terminal:
            continue
        inv = net.node_id[Node(NodeKind.INVENTORY, m)]
        for t in range(ninv - 1):
            net.add_arc(ArcKind.INVENTORY, net.vid[(inv, t)], net.vid[(inv, t + 1)], 1)
        for mp in inst.stations[m].adjacency:
            for t in range(nt):
                net.add_arc(ArcKind.SOURCE, net.vid[(inv, t)], V(NodeKind.DEP_STOP, m, mp, t), 0)
            for t in range(nt):
                net.add_arc(ArcKind.SINK, V(NodeKind.ARR_STOP, m, mp, t), net.vid[(inv, t + conn)], conn)
    for m in stations:
        st = inst.stations[m]
        walk = _ticks(inst, st.transfer_walk)
        trans = net.node_id[Node(NodeKind.TRANSFER, m)]
        for mp in st.adjacency:
            for t in range(nt - walk):
                net.add_arc(ArcKind.WALK, V(NodeKind.ARR_STOP, m, mp, t), net.vid[(trans, t + walk)], walk,
                            0.0, costs.trans * st.transfer_walk)
        for t in range(nt - 1):
            net.add_arc(ArcKind.WAIT, net.vid[(trans, t)], net.vid[(trans, t + 1)], 1, 0.0, costs.wait * step)
        for mp in st.adjacency:
            for t in range(nt):
                net.add_arc(ArcKind.BOARD, net.vid[(trans, t)], V(NodeKind.DEP_STOP, m, mp, t), 0)
    for r in sorted(inst.groups):
        add_group_arcs(net, r)
    return net


def origin_cost(inst: Instance, r: str, tick: int) -> float:
    g = inst.groups[r]
    t = tick * inst.step
    if t < g.preferred[0]:
        return inst.params.costs.shift * (g.preferred[0] - t)
    if t > g.preferred[1]:
        return inst.params.costs.shift * (t - g.preferred[1])
    return 0.0


def add_group_arcs(net: TimeSpaceNetwork, r: str) -> None:
    inst = net.inst
    g = inst.groups[r]
    o = net.vertex(net.node(NodeKind.ORIGIN, g.origin, r), 0)
    d = net.vertex(net.node(NodeKind.DEST, g.destination, r), 0)
    net.origin_vertex[r] = o
    net.dest_vertex[r] = d
    lo, hi = inst.group_ticks(r)
    for mp in inst.stations[g.origin].adjacency:
        for t in range(lo, hi + 1):
            head = net.find_vertex(NodeKind.DEP_STOP, g.origin, mp, t)
            net.add_arc(ArcKind.ORIGIN, o, head, 0, 0.0, origin_cost(inst, r, t), r)
    t_arr = inst.tick(g.latest_arrival)
    for mp in inst.stations[g.destination].adjacency:
        for t in range(0, t_arr + 1):
            tail = net.find_vertex(NodeKind.ARR_STOP, g.destination, mp, t)
            net.add_arc(ArcKind.DEST, tail, d, 0, 0.0, 0.0, r)


# ---------------------------------------------------------------------------
# Subnetworks
# ---------------------------------------------------------------------------

def _route_nodes(stations: Sequence[str], stops: Sequence[bool]) -> list[tuple[NodeKind, str, str]]:
    """Node sequence (kind, station, adjacent) visited by a train with a fixed stop plan."""
    seq = []
    n = len(stations)
    for i, m in enumerate(stations):
        if i > 0:
            seq.append((NodeKind.ARR_STOP if stops[i] else NodeKind.ARR_SKIP, m, stations[i - 1]))
        if i < n - 1:
            seq.append((NodeKind.DEP_STOP if stops[i] else NodeKind.DEP_SKIP, m, stations[i + 1]))
    return seq


def _attach_virtual(net: TimeSpaceNetwork, sub: Subnetwork, origin: str, first: str,
                    dest: str, last: str) -> None:
    inst = net.inst
    inv_o = net.node_id[Node(NodeKind.INVENTORY, origin)]
    inv_d = net.node_id[Node(NodeKind.INVENTORY, dest)]
    dep = net.node_id[Node(NodeKind.DEP_STOP, origin, first)]
    arr = net.node_id[Node(NodeKind.ARR_STOP, dest, last)]
    virt = []
    for v in sorted(sub.vertices):
        nid = net.v_node[v]
        if nid == dep:
            a = net.find_arc(net.vid[(inv_o, net.v_tick[v])], v)
            virt.append(a)
        if nid == arr:
            a = net.find_arc(v, net.vid[(inv_d, net.v_tick[v] + inst.conn_ticks)])
            virt.append(a)
    for a in virt:
        sub.vertices.add(net.a_tail[a])
        sub.vertices.add(net.a_head[a])
    sub.virtual = sorted(set(virt))
    sub.arcs = sorted(set(sub.arcs) | set(virt))


def build_train_subnetworks(net: TimeSpaceNetwork, inst: Instance | None = None) -> dict[str, Subnetwork]:
    """Per original train: the arcs of its schedule widened by +-tau, plus source/sink arcs."""
    inst = inst or net.inst
    tau = int(math.floor(inst.params.tau / inst.step + 1e-9))
    nt = inst.num_ticks
    subs = {}
    for k in sorted(inst.trains):
        tr = inst.trains[k]
        ln = inst.lines[tr.line]
        seq = _route_nodes(ln.route, ln.stops)
        times = []
        for i, (arr, dep) in enumerate(tr.schedule):
            if i > 0:
                times.append(inst.tick(arr))
            if i < len(ln.route) - 1:
                times.append(inst.tick(dep))
        sub = Subnetwork(k)
        arcs = set()
        for (tk, tm, to), (hk, hm, ho), t0, t1 in zip(seq, seq[1:], times, times[1:]):
            tn = net.node_id[Node(tk, tm, to)]
            hn = net.node_id[Node(hk, hm, ho)]
            for j in range(max(0, t0 - tau), min(nt - 1, t0 + tau) + 1):
                tv = net.vid[(tn, j)]
                for jp in range(max(0, t1 - tau), min(nt - 1, t1 + tau) + 1):
                    a = net.arc_of.get((tv, net.vid[(hn, jp)]))
                    if a is not None:
                        arcs.add(a)
        for a in arcs:
            sub.vertices.add(net.a_tail[a])
            sub.vertices.add(net.a_head[a])
        sub.arcs = sorted(arcs)
        _attach_virtual(net, sub, ln.route[0], ln.route[1], ln.route[-1], ln.route[-2])
        subs[k] = sub
    return subs


def _path_windows(inst: Instance, stations: Sequence[str], w0: int, w1: int, all_stop: bool):
    """Earliest/latest tick per node of a station path, keyed by (kind, station, adjacent)."""
    n = len(stations)
    early: dict[tuple, int] = {}
    late: dict[tuple, int] = {}
    first = (NodeKind.DEP_STOP, stations[0], stations[1])
    early[first], late[first] = w0, w1
    dep_nodes = [first]
    for i in range(1, n):
        m, prev = stations[i], stations[i - 1]
        last = i == n - 1
        arr_kinds = [NodeKind.ARR_STOP] if (last or all_stop) else [NodeKind.ARR_STOP, NodeKind.ARR_SKIP]
        arr_nodes = []
        for ak in arr_kinds:
            node = (ak, m, prev)
            lo, hi = math.inf, -math.inf
            for dn in dep_nodes:
                d = inst.section_ticks(prev, m, dn[0] == NodeKind.DEP_STOP, ak == NodeKind.ARR_STOP)
                lo = min(lo, early[dn] + d)
                hi = max(hi, late[dn] + d)
            early[node], late[node] = lo, hi
            arr_nodes.append(node)
        if last:
            break
        nxt = stations[i + 1]
        dwell = list(inst.dwell_range(m))
        dep_nodes = []
        for an in arr_nodes:
            if an[0] == NodeKind.ARR_STOP:
                node = (NodeKind.DEP_STOP, m, nxt)
                lo, hi = early[an] + dwell[0], late[an] + dwell[-1]
            else:
                node = (NodeKind.DEP_SKIP, m, nxt)
                lo, hi = early[an], late[an]
            early[node] = min(early.get(node, math.inf), lo)
            late[node] = max(late.get(node, -math.inf), hi)
            dep_nodes.append(node)
    return early, late


def build_extra_subnetwork(net: TimeSpaceNetwork, inst: Instance | None = None) -> Subnetwork:
    """Union over extra-train station paths and departure windows of the arcs inside the node time windows."""
    inst = inst or net.inst
    sub = Subnetwork("extra")
    all_stop = not inst.params.stop_skip
    nt = inst.num_ticks
    arcs: set[int] = set()
    virt_specs = []
    for ep in inst.params.extra_paths:
        st = ep.stations
        for w in ep.windows:
            w0, w1 = inst.tick(w[0]), inst.tick(w[1])
            early, late = _path_windows(inst, st, w0, w1, all_stop)
            nodes = {key: net.node_id[Node(*key)] for key in early}
            inside = {}
            for key, nid in nodes.items():
                for t in range(max(0, early[key]), min(nt - 1, late[key]) + 1):
                    inside[net.vid[(nid, t)]] = key
            for v, key in inside.items():
                for a in net.out_arcs[v]:
                    if net.a_kind[a] in TRAVEL_KINDS and net.a_head[a] in inside:
                        hk = inside[net.a_head[a]]
                        if _consecutive(st, key, hk):
                            arcs.add(a)
            virt_specs.append((st[0], st[1], st[-1], st[-2]))
    for a in arcs:
        sub.vertices.add(net.a_tail[a])
        sub.vertices.add(net.a_head[a])
    sub.arcs = sorted(arcs)
    virt: set[int] = set()
    for spec in set(virt_specs):
        tmp = Subnetwork("tmp", set(sub.vertices), [])
        _attach_virtual(net, tmp, *spec)
        virt |= set(tmp.virtual)
    for a in virt:
        sub.vertices.add(net.a_tail[a])
        sub.vertices.add(net.a_head[a])
    sub.virtual = sorted(virt)
    sub.arcs = sorted(arcs | virt)
    return sub


def _consecutive(stations: Sequence[str], tail: tuple, head: tuple) -> bool:
    """True when (tail -> head) is a move along the station path in its direction."""
    tk, tm, to = tail
    hk, hm, ho = head
    if tk in DEPARTURES and hk in ARRIVALS:
        return ho == tm and to == hm
    if tk in ARRIVALS and hk in DEPARTURES:
        if tm != hm:
            return False
        i = stations.index(tm)
        return 0 < i < len(stations) - 1 and to == stations[i - 1] and ho == stations[i + 1]
    return False


def build_passenger_subnetworks(net: TimeSpaceNetwork, inst: Instance | None = None,
                                travel_arcs: set[int] | None = None,
                                groups: Iterable[str] | None = None) -> dict[str, Subnetwork]:
    """Per group: arcs reachable from its origin whose heads are no later than its latest arrival.

    ``travel_arcs`` optionally restricts which train-travel arcs passengers may use.
    """
    inst = inst or net.inst
    subs = {}
    passenger_kinds = TRAVEL_KINDS | {ArcKind.WALK, ArcKind.WAIT, ArcKind.BOARD}
    for r in sorted(groups if groups is not None else inst.groups):
        t_arr = inst.tick(inst.groups[r].latest_arrival)
        o, d = net.origin_vertex[r], net.dest_vertex[r]
        seen = {o}
        arcs = []
        queue = deque([o])
        while queue:
            v = queue.popleft()
            for a in net.out_arcs[v]:
                k = net.a_kind[a]
                h = net.a_head[a]
                if k == ArcKind.ORIGIN or k == ArcKind.DEST:
                    if net.a_group[a] != r:
                        continue
                elif k not in passenger_kinds:
                    continue
                elif net.v_tick[h] > t_arr:
                    continue
                elif travel_arcs is not None and k in TRAVEL_KINDS and a not in travel_arcs:
                    continue
                arcs.append(a)
                if h not in seen:
                    seen.add(h)
                    queue.append(h)
        sub = Subnetwork(r, seen, sorted(arcs))
        if d not in seen:
            sub.arcs = []
            sub.vertices = {o}
        subs[r] = sub
    return subs


def train_travel_arcs(train_subs: dict[str, Subnetwork], extra: Subnetwork | None) -> set[int]:
    """A^tr: non-virtual arcs of all train subnetworks."""
    out: set[int] = set()
    for sub in train_subs.values():
        out |= set(sub.arcs) - set(sub.virtual)
    if extra is not None:
        out |= set(extra.arcs) - set(extra.virtual)
    return out


# ---------------------------------------------------------------------------
# Headway conflict sets
# ---------------------------------------------------------------------------

def headway_ticks(inst: Instance) -> dict[str, int]:
    h = inst.params.headways
    return {k: inst.dur(getattr(h, k)) for k in ("dd", "dp", "pd", "pp", "aa", "ap", "pa")}


def occupied_vertices(net: TimeSpaceNetwork, a: int, hw: dict[str, int]) -> list[int]:
    """Boundary vertices a section arc occupies under the headway rules."""
    nt = net.inst.num_ticks
    tail, head = net.a_tail[a], net.a_head[a]
    tn, hn = net.vnode(tail), net.vnode(head)
    t0, t1 = net.v_tick[tail], net.v_tick[head]
    dep_stop = tn.kind == NodeKind.DEP_STOP
    arr_stop = hn.kind == NodeKind.ARR_STOP
    spans = [
        (NodeKind.DEP_STOP, tn.station, tn.other, t0, hw["dd"] if dep_stop else hw["pd"]),
        (NodeKind.DEP_SKIP, tn.station, tn.other, t0, hw["dp"] if dep_stop else hw["pp"]),
        (NodeKind.ARR_STOP, hn.station, hn.other, t1, hw["aa"] if arr_stop else hw["pa"]),
        (NodeKind.ARR_SKIP, hn.station, hn.other, t1, hw["ap"] if arr_stop else hw["pp"]),
    ]
    out = []
    for kind, m, other, start, h in spans:
        nid = net.node_id[Node(kind, m, other)]
        for t in range(start, min(start + h, nt)):
            out.append(net.vid[(nid, t)])
    return out


def build_incompatible_sets(net: TimeSpaceNetwork, arcs: Iterable[int] | None = None,
                            hw: dict[str, int] | None = None) -> dict[int, list[int]]:
    """Map boundary vertex -> section arcs occupying it (restricted to ``arcs`` when given)."""
    hw = hw or headway_ticks(net.inst)
    if arcs is None:
        arcs = (a for a in range(net.num_arcs) if net.a_kind[a] == ArcKind.SECTION)
    phi: dict[int, list[int]] = defaultdict(list)
    for a in sorted(arcs):
        if net.a_kind[a] != ArcKind.SECTION:
            continue
        for v in occupied_vertices(net, a, hw):
            phi[v].append(a)
    return dict(phi)
