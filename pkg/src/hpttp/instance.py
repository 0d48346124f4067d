"""Problem data: stations, sections, lines, trains, fleet, passenger groups.

Instances are stored as one JSON document (see ``README.md`` for the schema).
All times in the file are minutes; after loading, the rest of the package
works on integer ticks of ``params.step`` minutes.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable


class InstanceError(ValueError):
    """Raised for schema or invariant violations; the message names the field."""


@dataclass(frozen=True)
class Station:
    id: str
    is_terminal: bool
    adjacency: tuple[str, ...]
    transfer_walk: float
    dwell_min: float
    dwell_max: float


@dataclass(frozen=True)
class Section:
    frm: str
    to: str
    length: float
    run_time: float
    acc: float = 0.0
    dec: float = 0.0


@dataclass(frozen=True)
class Headways:
    dd: float
    dp: float
    pd: float
    pp: float
    aa: float
    ap: float
    pa: float


@dataclass(frozen=True)
class Line:
    id: str
    route: tuple[str, ...]
    stops: tuple[bool, ...]
    trains: tuple[str, ...]


@dataclass(frozen=True)
class Train:
    """An original train. ``schedule[i]`` is (arrival, departure) in minutes at ``route[i]``;
    the arrival at the origin and the departure at the destination are ``None``."""
    id: str
    line: str
    schedule: tuple[tuple[float | None, float | None], ...]
    distance: float = 0.0


@dataclass(frozen=True)
class RsuType:
    id: str
    seats: int
    inventory: dict[str, int]


@dataclass(frozen=True)
class Group:
    id: str
    origin: str
    destination: str
    size: float
    window: tuple[float, float]
    preferred: tuple[float, float]
    latest_arrival: float
    penalty: float
    period: int = 0


@dataclass(frozen=True)
class Costs:
    shift: float = 1.0
    wait: float = 1.0
    veh: float = 1.0
    trans: float = 1.0
    max_transfers: int = 2


@dataclass(frozen=True)
class ExtraPath:
    stations: tuple[str, ...]
    windows: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Params:
    horizon: float
    step: float
    budget: float
    headways: Headways
    costs: Costs
    xi: float = 1.0
    tau: float = 0.0
    conn: float = 0.0
    cycle: float = 0.0
    periods: int = 1
    extra_paths: tuple[ExtraPath, ...] = ()
    stop_skip: bool = True


@dataclass
class Instance:
    stations: dict[str, Station]
    sections: dict[tuple[str, str], Section]
    lines: dict[str, Line]
    trains: dict[str, Train]
    rsu_types: dict[str, RsuType]
    groups: dict[str, Group]
    params: Params
    name: str = "instance"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- time helpers -----------------------------------------------------
    @property
    def step(self) -> float:
        return self.params.step

    @property
    def num_ticks(self) -> int:
        """|T|: ticks 0..num_ticks-1."""
        return int(round(self.params.horizon / self.step)) + 1

    @property
    def conn_ticks(self) -> int:
        return self.dur(self.params.conn)

    @property
    def num_inv_ticks(self) -> int:
        return self.num_ticks + self.conn_ticks

    def tick(self, minute: float) -> int:
        """Event time to tick; event times must sit on the grid."""
        q = minute / self.step
        r = round(q)
        if abs(q - r) > 1e-9:
            raise InstanceError(f"time {minute} is not a multiple of step {self.step}")
        return int(r)

    def dur(self, minutes: float) -> int:
        """Duration to ticks, rounded up."""
        return int(math.ceil(minutes / self.step - 1e-9)) if minutes > 0 else 0

    def minutes(self, ticks: int) -> float:
        return ticks * self.step

    # -- structure helpers --------------------------------------------------
    @property
    def terminals(self) -> list[str]:
        return [s for s, st in self.stations.items() if st.is_terminal]

    def section_ticks(self, frm: str, to: str, stop_from: bool, stop_to: bool) -> int:
        e = self.sections[(frm, to)]
        return self.dur(e.run_time + (e.acc if stop_from else 0.0) + (e.dec if stop_to else 0.0))

    def dwell_range(self, m: str) -> range:
        st = self.stations[m]
        lo = max(1, self.dur(st.dwell_min))
        hi = int(math.floor(st.dwell_max / self.step + 1e-9))
        return range(lo, hi + 1)

    def train_distance(self, k: str) -> float:
        tr = self.trains[k]
        if tr.distance:
            return tr.distance
        route = self.lines[tr.line].route
        return sum(self.sections[(a, b)].length for a, b in zip(route, route[1:]))

    def group_ticks(self, r: str) -> tuple[int, int]:
        g = self.groups[r]
        return self.tick(g.window[0]), self.tick(g.window[1])

    def total_fleet(self, u: str) -> int:
        return sum(self.rsu_types[u].inventory.values())

    def min_travel_ticks(self, src: str) -> dict[str, int]:
        """Free-flow shortest run time in ticks (pure section run times) from ``src``."""
        dist = {src: 0}
        heap = [(0, src)]
        while heap:
            d, m = heapq.heappop(heap)
            if d > dist.get(m, math.inf):
                continue
            for n in self.stations[m].adjacency:
                nd = d + self.dur(self.sections[(m, n)].run_time)
                if nd < dist.get(n, math.inf):
                    dist[n] = nd
                    heapq.heappush(heap, (nd, n))
        return dist

    # -- validation -------------------------------------------------------
    def validate(self) -> "Instance":
        p = self.params
        if not self.stations:
            raise InstanceError("stations: empty station list")
        if p.step <= 0:
            raise InstanceError("params.step: must be positive")
        if p.horizon <= 0 or abs(p.horizon / p.step - round(p.horizon / p.step)) > 1e-9:
            raise InstanceError("params.horizon: must be a positive multiple of step")
        if p.budget < 0:
            raise InstanceError("params.budget: must be >= 0")
        if not 0.0 <= p.xi <= 1.0:
            raise InstanceError("params.xi: must lie in [0, 1]")
        if p.tau < 0 or p.conn < 0:
            raise InstanceError("params.tau/conn: must be >= 0")
        for name, h in asdict(p.headways).items():
            if h < p.step:
                raise InstanceError(f"params.headways.{name}: must be at least one step")
        c = p.costs
        if min(c.shift, c.wait, c.veh, c.trans) < 0 or c.max_transfers < 0:
            raise InstanceError("params.costs: weights and max_transfers must be >= 0")

        for sid, st in self.stations.items():
            if not 0 < st.dwell_min <= st.dwell_max:
                raise InstanceError(f"station {sid}: requires 0 < dwell_min <= dwell_max")
            if st.transfer_walk < 0:
                raise InstanceError(f"station {sid}: transfer_walk must be >= 0")
            for n in st.adjacency:
                if n not in self.stations:
                    raise InstanceError(f"station {sid}: unknown adjacent station {n}")
                if (sid, n) not in self.sections or (n, sid) not in self.sections:
                    raise InstanceError(f"station {sid}: sections {sid}-{n} must exist in both directions")
        for (a, b), e in self.sections.items():
            if a not in self.stations or b not in self.stations:
                raise InstanceError(f"section {a}-{b}: unknown station")
            if b not in self.stations[a].adjacency or a not in self.stations[b].adjacency:
                raise InstanceError(f"section {a}-{b}: stations not listed as adjacent")
            if e.run_time <= 0:
                raise InstanceError(f"section {a}-{b}: run_time must be > 0")
            if e.acc < 0 or e.dec < 0 or e.length < 0:
                raise InstanceError(f"section {a}-{b}: penalties and length must be >= 0")

        for uid, u in self.rsu_types.items():
            if u.seats <= 0:
                raise InstanceError(f"rsu type {uid}: seats must be > 0")
            for m, n in u.inventory.items():
                if m not in self.stations or not self.stations[m].is_terminal:
                    if n:
                        raise InstanceError(f"rsu type {uid}: inventory at non-terminal {m}")
                if n < 0:
                    raise InstanceError(f"rsu type {uid}: negative inventory at {m}")

        for lid, ln in self.lines.items():
            if len(ln.route) < 2 or len(ln.stops) != len(ln.route):
                raise InstanceError(f"line {lid}: route/stop plan malformed")
            if not ln.trains:
                raise InstanceError(f"line {lid}: no trains")
            for end in (ln.route[0], ln.route[-1]):
                if not self.stations[end].is_terminal:
                    raise InstanceError(f"line {lid}: endpoint {end} is not terminal")
            if not (ln.stops[0] and ln.stops[-1]):
                raise InstanceError(f"line {lid}: trains must stop at both endpoints")
            for a, b in zip(ln.route, ln.route[1:]):
                if (a, b) not in self.sections:
                    raise InstanceError(f"line {lid}: no section {a}-{b}")
            for a, b in zip(ln.route, ln.route[2:]):
                if a == b:
                    raise InstanceError(f"line {lid}: route reverses direction")
            for k in ln.trains:
                if k not in self.trains or self.trains[k].line != lid:
                    raise InstanceError(f"line {lid}: train {k} missing or on another line")
        for k in self.trains:
            self._check_train(k)

        nt = self.num_ticks
        for rid, g in self.groups.items():
            for m in (g.origin, g.destination):
                if m not in self.stations:
                    raise InstanceError(f"group {rid}: unknown station {m}")
            if g.origin == g.destination:
                raise InstanceError(f"group {rid}: origin equals destination")
            if g.size <= 0:
                raise InstanceError(f"group {rid}: size must be > 0")
            if g.penalty < 0:
                raise InstanceError(f"group {rid}: penalty must be >= 0")
            lo, hi = self.tick(g.window[0]), self.tick(g.window[1])
            if lo > hi or lo < 0 or hi >= nt:
                raise InstanceError(f"group {rid}: allowable window outside horizon")
            if not (g.window[0] <= g.preferred[0] <= g.preferred[1] <= g.window[1]):
                raise InstanceError(f"group {rid}: preferred window not inside allowable window")
            if not g.latest_arrival > g.window[1]:
                raise InstanceError(f"group {rid}: latest arrival must exceed the allowable window")
            if self.tick(g.latest_arrival) >= nt:
                raise InstanceError(f"group {rid}: latest arrival beyond horizon")
            reach = self._free_flow(g.origin)
            if g.destination not in reach or lo + reach[g.destination] > self.tick(g.latest_arrival):
                raise InstanceError(f"group {rid}: unroutable (destination unreachable by latest arrival)")

        for ep in p.extra_paths:
            st = ep.stations
            if len(st) < 2:
                raise InstanceError("extra path: needs at least two stations")
            if not (self.stations[st[0]].is_terminal and self.stations[st[-1]].is_terminal):
                raise InstanceError(f"extra path {'-'.join(st)}: endpoints must be terminals")
            for a, b in zip(st, st[1:]):
                if (a, b) not in self.sections:
                    raise InstanceError(f"extra path {'-'.join(st)}: no section {a}-{b}")
            for a, b in zip(st, st[2:]):
                if a == b:
                    raise InstanceError(f"extra path {'-'.join(st)}: reverses direction")
            for w in ep.windows:
                if w[0] > w[1]:
                    raise InstanceError(f"extra path {'-'.join(st)}: bad window {w}")
                self.tick(w[0]), self.tick(w[1])
        return self

    def _free_flow(self, m: str) -> dict[str, int]:
        key = ("ff", m)
        if key not in self._cache:
            self._cache[key] = self.min_travel_ticks(m)
        return self._cache[key]

    def _check_train(self, k: str) -> None:
        tr = self.trains[k]
        if tr.line not in self.lines:
            raise InstanceError(f"train {k}: unknown line {tr.line}")
        ln = self.lines[tr.line]
        if len(tr.schedule) != len(ln.route):
            raise InstanceError(f"train {k}: schedule length differs from route")
        nt = self.num_ticks
        last = -math.inf
        for i, (m, (arr, dep)) in enumerate(zip(ln.route, tr.schedule)):
            if i > 0 and arr is None or i < len(ln.route) - 1 and dep is None:
                raise InstanceError(f"train {k}: missing event at {m}")
            for t in (arr, dep):
                if t is None:
                    continue
                if t < last:
                    raise InstanceError(f"train {k}: times not increasing at {m}")
                last = t
                tt = self.tick(t)
                if not 0 <= tt < nt:
                    raise InstanceError(f"train {k}: event at {m} outside horizon")
            if 0 < i < len(ln.route) - 1:
                if ln.stops[i]:
                    if self.dur(dep - arr) not in self.dwell_range(m) or self.tick(dep) - self.tick(arr) not in self.dwell_range(m):
                        raise InstanceError(f"train {k}: dwell at {m} outside dwell bounds")
                elif dep != arr:
                    raise InstanceError(f"train {k}: passes {m} but departure differs from arrival")
        for i in range(len(ln.route) - 1):
            a, b = ln.route[i], ln.route[i + 1]
            need = self.section_ticks(a, b, ln.stops[i], ln.stops[i + 1])
            got = self.tick(tr.schedule[i + 1][0]) - self.tick(tr.schedule[i][1])
            if got != need:
                raise InstanceError(
                    f"train {k}: run time {a}-{b} is {got} ticks, network requires {need}")

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        p = self.params
        return {
            "name": self.name,
            "stations": [
                {"id": s.id, "terminal": s.is_terminal, "adjacent": list(s.adjacency),
                 "transfer_walk": s.transfer_walk, "dwell_min": s.dwell_min, "dwell_max": s.dwell_max}
                for s in self.stations.values()],
            "sections": [
                {"from": e.frm, "to": e.to, "length": e.length, "run_time": e.run_time,
                 "acc": e.acc, "dec": e.dec} for e in self.sections.values()],
            "lines": [
                {"id": ln.id, "route": list(ln.route), "stops": list(ln.stops), "trains": list(ln.trains)}
                for ln in self.lines.values()],
            "trains": [
                {"id": t.id, "line": t.line, "schedule": [list(ev) for ev in t.schedule],
                 "distance": t.distance} for t in self.trains.values()],
            "rsu_types": [
                {"id": u.id, "seats": u.seats, "inventory": dict(u.inventory)}
                for u in self.rsu_types.values()],
            "groups": [
                {"id": g.id, "origin": g.origin, "destination": g.destination, "size": g.size,
                 "window": list(g.window), "preferred": list(g.preferred),
                 "latest_arrival": g.latest_arrival, "penalty": g.penalty, "period": g.period}
                for g in self.groups.values()],
            "params": {
                "horizon": p.horizon, "step": p.step, "budget": p.budget, "xi": p.xi, "tau": p.tau,
                "conn": p.conn, "cycle": p.cycle, "periods": p.periods, "stop_skip": p.stop_skip,
                "headways": asdict(p.headways), "costs": asdict(p.costs),
                "extra_paths": [{"stations": list(ep.stations), "windows": [list(w) for w in ep.windows]}
                                for ep in p.extra_paths],
            },
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def with_params(self, **changes) -> "Instance":
        """Copy with some ``Params`` fields replaced (re-validated)."""
        return replace(self, params=replace(self.params, **changes), _cache={}).validate()

    def subset_groups(self, keep: Iterable[str]) -> "Instance":
        keep = set(keep)
        groups = {r: g for r, g in self.groups.items() if r in keep}
        return replace(self, groups=groups, _cache={})


def _req(d: dict, key: str, ctx: str):
    if key not in d:
        raise InstanceError(f"{ctx}: missing field '{key}'")
    return d[key]


def from_dict(data: dict[str, Any]) -> Instance:
    """Build and validate an instance from its JSON document."""
    try:
        for key in ("stations", "sections", "lines", "trains", "rsu_types", "groups", "params"):
            _req(data, key, "instance")
        stations: dict[str, Station] = {}
        for i, s in enumerate(data["stations"]):
            ctx = f"stations[{i}]"
            sid = str(_req(s, "id", ctx))
            stations[sid] = Station(sid, bool(s.get("terminal", False)),
                                    tuple(str(x) for x in s.get("adjacent", [])),
                                    float(s.get("transfer_walk", 0.0)),
                                    float(_req(s, "dwell_min", ctx)), float(_req(s, "dwell_max", ctx)))
        sections: dict[tuple[str, str], Section] = {}
        for i, e in enumerate(data["sections"]):
            ctx = f"sections[{i}]"
            key = (str(_req(e, "from", ctx)), str(_req(e, "to", ctx)))
            if key in sections:
                raise InstanceError(f"{ctx}: duplicate section {key[0]}-{key[1]}")
            sections[key] = Section(key[0], key[1], float(e.get("length", 0.0)),
                                    float(_req(e, "run_time", ctx)),
                                    float(e.get("acc", 0.0)), float(e.get("dec", 0.0)))
        # adjacency defaults to the section list when a station omits it
        for sid, st in list(stations.items()):
            if not st.adjacency:
                adj = tuple(sorted({b for (a, b) in sections if a == sid}))
                stations[sid] = replace(st, adjacency=adj)
        lines = {}
        for i, ln in enumerate(data["lines"]):
            ctx = f"lines[{i}]"
            route = tuple(str(x) for x in _req(ln, "route", ctx))
            stops = tuple(bool(x) for x in ln.get("stops", [True] * len(route)))
            lines[str(_req(ln, "id", ctx))] = Line(str(ln["id"]), route, stops,
                                                   tuple(str(k) for k in ln.get("trains", [])))
        trains = {}
        for i, t in enumerate(data["trains"]):
            ctx = f"trains[{i}]"
            sched = tuple((None if a is None else float(a), None if b is None else float(b))
                          for a, b in _req(t, "schedule", ctx))
            trains[str(_req(t, "id", ctx))] = Train(str(t["id"]), str(_req(t, "line", ctx)), sched,
                                                    float(t.get("distance", 0.0)))
        rsu = {}
        for i, u in enumerate(data["rsu_types"]):
            ctx = f"rsu_types[{i}]"
            rsu[str(_req(u, "id", ctx))] = RsuType(str(u["id"]), int(_req(u, "seats", ctx)),
                                                   {str(m): int(n) for m, n in u.get("inventory", {}).items()})
        groups = {}
        for i, g in enumerate(data["groups"]):
            ctx = f"groups[{i}]"
            rid = str(_req(g, "id", ctx))
            if rid in groups:
                raise InstanceError(f"{ctx}: duplicate group id {rid}")
            win = tuple(float(x) for x in _req(g, "window", ctx))
            pref = tuple(float(x) for x in g.get("preferred", win))
            groups[rid] = Group(rid, str(_req(g, "origin", ctx)), str(_req(g, "destination", ctx)),
                                float(_req(g, "size", ctx)), win, pref,
                                float(_req(g, "latest_arrival", ctx)), float(_req(g, "penalty", ctx)),
                                int(g.get("period", 0)))
        p = data["params"]
        hw = _req(p, "headways", "params")
        headways = Headways(*(float(_req(hw, k, "params.headways")) for k in ("dd", "dp", "pd", "pp", "aa", "ap", "pa")))
        c = p.get("costs", {})
        costs = Costs(float(c.get("shift", 1.0)), float(c.get("wait", 1.0)), float(c.get("veh", 1.0)),
                      float(c.get("trans", 1.0)), int(c.get("max_transfers", 2)))
        extra = tuple(ExtraPath(tuple(str(s) for s in _req(ep, "stations", "params.extra_paths")),
                                tuple((float(a), float(b)) for a, b in ep.get("windows", [])))
                      for ep in p.get("extra_paths", []))
        params = Params(float(_req(p, "horizon", "params")), float(_req(p, "step", "params")),
                        float(_req(p, "budget", "params")), headways, costs,
                        float(p.get("xi", 1.0)), float(p.get("tau", 0.0)), float(p.get("conn", 0.0)),
                        float(p.get("cycle", 0.0)), int(p.get("periods", 1)), extra,
                        bool(p.get("stop_skip", True)))
    except InstanceError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from exc
    inst = Instance(stations, sections, lines, trains, rsu, groups, params, str(data.get("name", "instance")))
    return inst.validate()


def load_instance(path: str | Path) -> Instance:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InstanceError(f"{path}: top level must be an object")
    return from_dict(data)


def expand_periodic(trains: Iterable[Train], periods: int, cycle: float,
                    horizon: float | None = None) -> list[Train]:
    """Replicate one-period trains ``periods`` times, shifting every event by k*cycle.

    Copies keep the line of their template and get ids ``<id>.p<k>``; the
    single-period case returns unchanged copies.
    """
    out = []
    for tr in trains:
        for k in range(periods):
            shift = k * cycle
            sched = tuple((None if a is None else a + shift, None if d is None else d + shift)
                          for a, d in tr.schedule)
            if horizon is not None:
                last = max(t for ev in sched for t in ev if t is not None)
                if last > horizon:
                    raise InstanceError(f"train {tr.id}: copy {k} ends at {last}, beyond horizon {horizon}")
            out.append(Train(tr.id if periods == 1 else f"{tr.id}.p{k}", tr.line, sched, tr.distance))
    return out


def schedule_from_plan(inst_sections: dict[tuple[str, str], Section], route: list[str], stops: list[bool],
                       start: float, dwell: float, step: float) -> tuple[tuple[float | None, float | None], ...]:
    """Timetable of a train leaving ``route[0]`` at ``start`` with uniform dwell at stops."""
    def up(x: float) -> float:
        return math.ceil(x / step - 1e-9) * step
    sched: list[tuple[float | None, float | None]] = [(None, start)]
    t = start
    for i in range(len(route) - 1):
        e = inst_sections[(route[i], route[i + 1])]
        t += up(e.run_time + (e.acc if stops[i] else 0) + (e.dec if stops[i + 1] else 0))
        if i + 1 == len(route) - 1:
            sched.append((t, None))
        elif stops[i + 1]:
            sched.append((t, t + dwell))
            t += dwell
        else:
            sched.append((t, t))
    return tuple(sched)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _mk_sections(edges: list[tuple[str, str]], length: float, run: float, acc: float, dec: float):
    secs = {}
    for a, b in edges:
        secs[(a, b)] = Section(a, b, length, run, acc, dec)
        secs[(b, a)] = Section(b, a, length, run, acc, dec)
    return secs


def _mk_stations(ids: list[str], terminals: set[str], edges, walk: float, dmin: float, dmax: float):
    adj: dict[str, set[str]] = {s: set() for s in ids}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return {s: Station(s, s in terminals, tuple(sorted(adj[s])), walk, dmin, dmax) for s in ids}


# One-period toy timetable: (line id, route, stop plan, departure minute within the cycle).
_TOY_LINES = [
    ("L1", ["1", "3", "6", "5"], [True, True, True, True], 0),
    ("L2", ["2", "3", "6", "7"], [True, True, True, True], 4),
    ("L3", ["4", "3", "6", "8"], [True, False, True, True], 14),
    ("L4", ["2", "3", "4"], [True, True, True], 8),
]
_TOY_EDGES = [("1", "3"), ("2", "3"), ("4", "3"), ("3", "6"), ("6", "5"), ("6", "7"), ("6", "8")]
_TOY_TERMINALS = {"1", "2", "4", "5", "7", "8"}


def fleet_need(trains: Iterable[Train], lines: dict[str, Line], conn: float) -> dict[str, int]:
    """Units each terminal needs to run every train on schedule, with turnaround ``conn``."""
    events: dict[str, list[tuple[float, int]]] = {}
    for tr in trains:
        route = lines[tr.line].route
        events.setdefault(route[0], []).append((tr.schedule[0][1], -1))
        events.setdefault(route[-1], []).append((tr.schedule[-1][0] + conn, 1))
    need = {}
    for m, ev in events.items():
        stock = low = 0
        for _, d in sorted(ev, key=lambda e: (e[0], -e[1])):
            stock += d
            low = min(low, stock)
        need[m] = -low
    return need


def generate_toy(seed: int = 1, scale: float = 1.0, *, tau: float = 4.0, xi: float = 1.0,
                 budget: float = 400_000.0, extra_window: float = 0.0, max_transfers: int = 2,
                 with_extra: bool = True) -> Instance:
    """Eight-station, four-period toy network with a 20-minute cycle and seeded demand.

    Geometry and timing: 50 km sections, 2-minute ticks, h_pd = 2 min and all other
    headways 4 min, 2 min acceleration/deceleration, 6 min rolling-stock turnaround,
    4 min transfer walks.  Line offsets are chosen so the base timetable is conflict
    free; type S stock covers every scheduled departure and type L adds one unit per
    terminal.  Group sizes are uniform on [5, 30] (doubled in the second period) times
    ``scale``.
    """
    if scale < 1:
        raise InstanceError("scale must be >= 1")
    rng = random.Random(seed)
    step, cycle, periods = 2.0, 20.0, 4
    horizon = 150.0
    ids = [str(i) for i in range(1, 9)]
    stations = _mk_stations(ids, _TOY_TERMINALS, _TOY_EDGES, 4.0, 2.0, 6.0)
    sections = _mk_sections(_TOY_EDGES, 50.0, 8.0, 2.0, 2.0)
    lines: dict[str, Line] = {}
    trains: dict[str, Train] = {}
    for lid, route, stops, dep in _TOY_LINES:
        for direction, (r, s) in (("f", (route, stops)), ("r", (route[::-1], stops[::-1]))):
            name = f"{lid}{direction}"
            # reverse direction leaves 10 minutes later within the cycle
            start = dep if direction == "f" else (dep + 10) % cycle
            tmpl = Train(name, name, schedule_from_plan(sections, r, s, start, 2.0, step))
            copies = expand_periodic([tmpl], periods, cycle, horizon)
            for t in copies:
                trains[t.id] = t
            lines[name] = Line(name, tuple(r), tuple(s), tuple(t.id for t in copies))
    need = fleet_need(trains.values(), lines, 6.0)
    rsu = {
        "S": RsuType("S", 80, {m: need.get(m, 0) for m in sorted(_TOY_TERMINALS)}),
        "L": RsuType("L", 120, {m: 1 for m in sorted(_TOY_TERMINALS)}),
    }
    adjacent = {(a, b) for a, b in _TOY_EDGES} | {(b, a) for a, b in _TOY_EDGES}
    pairs = [(a, b) for a in ids for b in ids if a != b and (a, b) not in adjacent]
    groups: dict[str, Group] = {}
    for k in range(periods):
        for a, b in pairs:
            size = rng.randint(5, 30) * (2 if k == 1 else 1) * scale
            lo = max(0.0, k * cycle - cycle / 2)
            hi = k * cycle + cycle + cycle / 2 - step
            pref = (k * cycle, k * cycle + cycle - step)
            rid = f"g{a}-{b}.p{k}"
            groups[rid] = Group(rid, a, b, float(size), (lo, hi), pref, min(hi + 60.0, horizon - step),
                                120.0, k)
    extra: tuple[ExtraPath, ...] = ()
    if with_extra:
        centre = cycle + cycle / 2
        win = ((centre - extra_window, centre + extra_window),)
        paths = []
        for _, route, _, _ in _TOY_LINES:
            paths.append(ExtraPath(tuple(route), win))
            paths.append(ExtraPath(tuple(route[::-1]), win))
        extra = tuple(paths)
    params = Params(horizon, step, budget, Headways(4, 4, 2, 4, 4, 4, 4),
                    Costs(1.0, 1.0, 1.0, 5.0, max_transfers), xi, tau, 6.0, cycle, periods, extra, True)
    return Instance(stations, sections, lines, trains, rsu, groups, params, f"toy-s{seed}").validate()


def generate_micro(seed: int, *, periods: int | None = None, n_stations: int | None = None,
                   max_groups: int = 12, extra: bool | None = None, xi: float | None = None,
                   tau: float | None = None) -> Instance:
    """Small corridor instance (3-4 stations, <=2 periods, <=6 trains, <=12 groups).

    Built so the original timetable is headway-feasible, every train can be given a
    unit and the budget allows operating all of them; seats are scarce enough for
    capacity to matter.  The transfer limit is set high enough never to bind.
    """
    rng = random.Random(seed)
    n = n_stations or rng.choice([3, 4])
    periods = periods or rng.choice([1, 2])
    step = 2.0
    cycle = 16.0
    ids = [chr(ord("A") + i) for i in range(n)]
    edges = [(ids[i], ids[i + 1]) for i in range(n - 1)]
    terminals = {ids[0], ids[-1]}
    if n == 4 and rng.random() < 0.5:
        terminals.add(ids[1])
    stations = _mk_stations(ids, terminals, edges, 2.0, 2.0, 4.0)
    sections = _mk_sections(edges, 10.0 * rng.choice([1, 2]), 4.0, 2.0, 2.0)
    lines: dict[str, Line] = {}
    trains: dict[str, Train] = {}
    per_period = 3 if periods == 1 else rng.choice([2, 3])
    templates = []
    fwd_stops = [True] + [rng.random() < 0.6 for _ in ids[1:-1]] + [True]
    templates.append(("F", ids, fwd_stops, 0.0))
    templates.append(("R", ids[::-1], [True] * n, 2.0))
    if per_period == 3:
        sub = sorted(terminals, key=ids.index)
        route = ids[: ids.index(sub[1]) + 1] if len(sub) > 2 and rng.random() < 0.5 else ids
        templates.append(("G", route, [True] * len(route), 8.0))
    if per_period == 3 and periods == 2 and not all(fwd_stops):
        # a skipping train could catch up with the slower line ahead of it
        templates[0] = ("F", ids, [True] * n, 0.0)
    for lid, route, stops, dep in templates:
        tmpl = Train(lid, lid, schedule_from_plan(sections, route, stops, dep, 2.0, step))
        copies = expand_periodic([tmpl], periods, cycle)
        for t in copies:
            trains[t.id] = t
        lines[lid] = Line(lid, tuple(route), tuple(stops), tuple(t.id for t in copies))
    last = max(t for tr in trains.values() for ev in tr.schedule for t in ev if t is not None)
    horizon = last + 8.0
    seats = rng.choice([10, 15, 20])
    origins: dict[str, int] = {m: 0 for m in terminals}
    for ln in lines.values():
        origins[ln.route[0]] += len(ln.trains)
    rsu = {"U": RsuType("U", seats, {m: origins[m] for m in sorted(terminals)})}
    if rng.random() < 0.5:
        rsu["V"] = RsuType("V", seats * 2, {ids[0]: 1, ids[-1]: 0})
    groups: dict[str, Group] = {}
    ods = [(a, b) for a in ids for b in ids if a != b]
    rng.shuffle(ods)
    gcount = min(max_groups, rng.randint(4, max_groups))
    for i in range(gcount):
        a, b = ods[i % len(ods)]
        k = i % periods
        lo = k * cycle
        hi = lo + cycle - step
        if hi + 2 * step > horizon:
            hi = max(lo, horizon - 4 * step)
        pref_lo = lo + step * rng.randint(0, 2)
        pref = (pref_lo, min(hi, pref_lo + 4.0))
        size = float(rng.randint(3, 20))
        rid = f"r{i}"
        groups[rid] = Group(rid, a, b, size, (lo, hi), pref, horizon - step, 50.0, k)
    dist = {}
    for lid, ln in lines.items():
        dist[lid] = sum(sections[(x, y)].length for x, y in zip(ln.route, ln.route[1:]))
    km = sum(dist[tr.line] for tr in trains.values())
    max_seats = max(u.seats for u in rsu.values())
    budget = km * max_seats * rng.choice([1.0, 1.5, 2.0])
    use_extra = rng.random() < 0.5 if extra is None else extra
    extra_paths: tuple[ExtraPath, ...] = ()
    if use_extra:
        w0 = step * rng.randint(1, 3)
        extra_paths = (ExtraPath(tuple(ids), ((w0, w0 + step),)),)
    xi_v = xi if xi is not None else rng.choice([1.0, 0.5])
    tau_v = tau if tau is not None else rng.choice([0.0, 2.0])
    max_tr = 2 * (int(horizon / step) + 1)
    params = Params(horizon, step, budget, Headways(4, 4, 2, 4, 4, 4, 4),
                    Costs(1.0, 1.0, 1.0, 2.0, max_tr), xi_v, tau_v, 2.0, cycle, periods,
                    extra_paths, rng.random() < 0.5)
    inst = Instance(stations, sections, lines, trains, rsu, groups, params, f"micro-s{seed}")
    return inst.validate()


def generate_peaked(seed: int, *, xi: float = 1.0, extra: bool = False, peak: float = 3.0) -> Instance:
    """Three-station corridor over four 16-minute periods with demand peaking in the second.

    One line runs each way every period.  The budget covers exactly the original trains,
    so an extra train only fits if some original train is cancelled; the extra train
    path is offered in the peak period.
    """
    rng = random.Random(seed)
    step, cycle, periods = 2.0, 16.0, 4
    ids = ["A", "B", "C"]
    edges = [("A", "B"), ("B", "C")]
    terminals = {"A", "C"}
    stations = _mk_stations(ids, terminals, edges, 2.0, 2.0, 4.0)
    sections = _mk_sections(edges, 20.0, 4.0, 2.0, 2.0)
    lines: dict[str, Line] = {}
    trains: dict[str, Train] = {}
    for lid, route, dep in (("F", ids, 0.0), ("R", ids[::-1], 8.0)):
        stops = [True] * len(route)
        tmpl = Train(lid, lid, schedule_from_plan(sections, route, stops, dep, 2.0, step))
        copies = expand_periodic([tmpl], periods, cycle)
        for t in copies:
            trains[t.id] = t
        lines[lid] = Line(lid, tuple(route), tuple(stops), tuple(t.id for t in copies))
    last = max(t for tr in trains.values() for ev in tr.schedule for t in ev if t is not None)
    horizon = last + 8.0
    seats = 20
    rsu = {"U": RsuType("U", seats, {"A": periods + 1, "C": periods})}
    groups: dict[str, Group] = {}
    for k in range(periods):
        for a, b in (("A", "C"), ("A", "B"), ("B", "C"), ("C", "A")):
            mult = peak if k == 1 else 1.0
            size = float(rng.randint(4, 8)) * mult
            lo = k * cycle
            hi = lo + cycle - step
            rid = f"{a}{b}.p{k}"
            groups[rid] = Group(rid, a, b, size, (lo, hi), (lo, lo + 6.0), horizon - step, 50.0, k)
    km = sum(40.0 for _ in trains)
    budget = km * seats
    extra_paths: tuple[ExtraPath, ...] = ()
    if extra:
        extra_paths = (ExtraPath(("A", "B", "C"), ((cycle + 4.0, cycle + 6.0),)),)
    params = Params(horizon, step, budget, Headways(4, 4, 2, 4, 4, 4, 4),
                    Costs(1.0, 1.0, 1.0, 2.0, 2), xi, 0.0, 2.0, cycle, periods, extra_paths, False)
    return Instance(stations, sections, lines, trains, rsu, groups, params, f"peaked-s{seed}").validate()
