"""Independent feasibility checker for a decoded timetable.

Works from the raw instance data in minutes and the report's train events and passenger
legs; it shares no code with the network or model builders.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any

from hpttp.instance import Instance

TOL = 1e-6


@dataclass
class Violation:
    family: str
    message: str
    witness: dict[str, Any] = field(default_factory=dict)

    def __str__(self) -> str:
        return f"[{self.family}] {self.message}"


@dataclass
class Verdict:
    violations: list[Violation] = field(default_factory=list)
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def families(self) -> set[str]:
        return {v.family for v in self.violations}

    def summary(self) -> str:
        if self.ok:
            return "PASS"
        counts: dict[str, int] = defaultdict(int)
        for v in self.violations:
            counts[v.family] += 1
        return "FAIL " + ", ".join(f"{k}={n}" for k, n in sorted(counts.items()))


class _Checker:
    def __init__(self, inst: Instance, report: dict):
        self.inst = inst
        self.rep = report
        self.step = inst.params.step
        self.v = Verdict()

    # -- helpers -----------------------------------------------------------
    def up(self, minutes: float) -> float:
        """Round a duration up to the time grid."""
        if minutes <= 0:
            return 0.0
        return math.ceil(minutes / self.step - 1e-9) * self.step

    def down(self, minutes: float) -> float:
        return math.floor(minutes / self.step + 1e-9) * self.step

    def fail(self, family: str, message: str, **witness) -> None:
        self.v.violations.append(Violation(family, message, witness))

    def count(self, family: str, n: int = 1) -> None:
        self.v.checked[family] = self.v.checked.get(family, 0) + n

    # -- trains ------------------------------------------------------------
    def trains(self) -> list[dict]:
        out = []
        for t in self.rep.get("trains", []):
            if t.get("operated"):
                out.append(t)
        return out

    def check_structure(self) -> None:
        inst = self.inst
        horizon = inst.params.horizon
        seen = set()
        for t in self.rep.get("trains", []):
            tid = t["id"]
            if tid in seen:
                self.fail("structure", f"train {tid} listed twice", train=tid)
            seen.add(tid)
            if not t.get("operated"):
                if tid not in inst.trains:
                    self.fail("structure", f"unknown cancelled train {tid}", train=tid)
                continue
            self.count("structure")
            ev = t.get("events") or []
            if len(ev) < 2:
                self.fail("structure", f"train {tid} has fewer than two events", train=tid)
                continue
            if t.get("rsu") not in inst.rsu_types:
                self.fail("structure", f"train {tid} has unknown rolling stock {t.get('rsu')!r}", train=tid)
            stations = [e["station"] for e in ev]
            stops = [bool(e["stop"]) for e in ev]
            for e in ev:
                for key in ("arr", "dep"):
                    x = e.get(key)
                    if x is None:
                        continue
                    if x < -TOL or x > horizon + TOL or abs(x / self.step - round(x / self.step)) > 1e-9:
                        self.fail("structure", f"train {tid} time {x} off the grid or horizon",
                                  train=tid, station=e["station"], time=x)
            if ev[0].get("arr") is not None or ev[-1].get("dep") is not None:
                self.fail("structure", f"train {tid} has an arrival at its origin or a departure at its end",
                          train=tid)
            for a, b in zip(stations, stations[1:]):
                if (a, b) not in inst.sections:
                    self.fail("structure", f"train {tid} runs on missing section {a}-{b}", train=tid,
                              section=[a, b])
            for m in (stations[0], stations[-1]):
                if not inst.stations[m].is_terminal:
                    self.fail("structure", f"train {tid} starts or ends at non-terminal {m}", train=tid,
                              station=m)
            if not (stops[0] and stops[-1]):
                self.fail("structure", f"train {tid} does not stop at both ends", train=tid)
            if tid in inst.trains:
                line = inst.lines[inst.trains[tid].line]
                if tuple(stations) != tuple(line.route):
                    self.fail("structure", f"train {tid} leaves its line route", train=tid,
                              route=stations, expected=list(line.route))
                elif tuple(stops) != tuple(line.stops):
                    self.fail("structure", f"train {tid} deviates from its stop plan", train=tid,
                              stops=stops, expected=list(line.stops))
            else:
                self.check_extra(t, stations, stops)

    def check_extra(self, t: dict, stations: list[str], stops: list[bool]) -> None:
        inst = self.inst
        tid = t["id"]
        dep = t["events"][0]["dep"]
        paths = [ep for ep in inst.params.extra_paths if tuple(ep.stations) == tuple(stations)]
        if not paths:
            self.fail("structure", f"extra train {tid} follows no permitted station path", train=tid,
                      route=stations)
            return
        if not inst.params.stop_skip and not all(stops):
            self.fail("structure", f"extra train {tid} skips a station in all-stop mode", train=tid)
        ok = any(w[0] - TOL <= dep <= w[1] + TOL for ep in paths for w in ep.windows)
        if not ok:
            self.fail("deviation", f"extra train {tid} departs at {dep} outside its windows", train=tid,
                      time=dep)

    def check_running(self) -> None:
        inst = self.inst
        for t in self.trains():
            ev = t["events"]
            tid = t["id"]
            for i in range(len(ev) - 1):
                a, b = ev[i], ev[i + 1]
                e = inst.sections.get((a["station"], b["station"]))
                if e is None or a.get("dep") is None or b.get("arr") is None:
                    continue
                self.count("running")
                need = self.up(e.run_time + (e.acc if a["stop"] else 0.0) + (e.dec if b["stop"] else 0.0))
                got = b["arr"] - a["dep"]
                if abs(got - need) > TOL:
                    self.fail("running", f"train {tid} needs {need} min on {a['station']}-{b['station']}, takes {got}",
                              train=tid, section=[a["station"], b["station"]], expected=need, actual=got)
            for e in ev[1:-1]:
                if e.get("arr") is None or e.get("dep") is None:
                    self.fail("dwell", f"train {tid} lacks times at {e['station']}", train=tid)
                    continue
                self.count("dwell")
                st = inst.stations[e["station"]]
                d = e["dep"] - e["arr"]
                if e["stop"]:
                    lo = max(self.step, self.up(st.dwell_min))
                    hi = self.down(st.dwell_max)
                    if d < lo - TOL or d > hi + TOL:
                        self.fail("dwell", f"train {tid} dwells {d} min at {e['station']} outside [{lo}, {hi}]",
                                  train=tid, station=e["station"], dwell=d)
                elif abs(d) > TOL:
                    self.fail("dwell", f"train {tid} passes {e['station']} but waits {d} min", train=tid,
                              station=e["station"], dwell=d)

    def check_deviation(self) -> None:
        inst = self.inst
        tau = self.down(inst.params.tau)
        for t in self.trains():
            tid = t["id"]
            if tid not in inst.trains:
                continue
            sched = inst.trains[tid].schedule
            if len(sched) != len(t["events"]):
                continue
            for (sa, sd), e in zip(sched, t["events"]):
                for planned, actual in ((sa, e.get("arr")), (sd, e.get("dep"))):
                    if planned is None or actual is None:
                        continue
                    self.count("deviation")
                    if abs(actual - planned) > tau + TOL:
                        self.fail("deviation", f"train {tid} at {e['station']}: {actual} vs planned {planned}, "
                                               f"allowed +-{tau}", train=tid, station=e["station"],
                                  planned=planned, actual=actual)

    def check_periodicity(self) -> None:
        inst = self.inst
        operated = {t["id"] for t in self.trains()}
        for lid, line in inst.lines.items():
            self.count("periodicity")
            need = math.ceil(inst.params.xi * len(line.trains) - 1e-9)
            have = sum(1 for k in line.trains if k in operated)
            if have < need:
                self.fail("periodicity", f"line {lid} runs {have} trains, needs {need}", line=lid,
                          operated=have, required=need)

    def check_headways(self) -> None:
        """Every departure (arrival) occupies the stop and the skip node of its boundary for
        the leader-type headway; two trains may not overlap on either node."""
        h = self.inst.params.headways
        hm = {k: self.up(getattr(h, k)) for k in ("dd", "dp", "pd", "pp", "aa", "ap", "pa")}
        # occupation length on (stop node, skip node) by leader type
        dep_occ = {True: (("dd", hm["dd"]), ("dp", hm["dp"])), False: (("pd", hm["pd"]), ("pp", hm["pp"]))}
        arr_occ = {True: (("aa", hm["aa"]), ("ap", hm["ap"])), False: (("pa", hm["pa"]), ("pp", hm["pp"]))}
        deps: dict[tuple[str, str], list] = defaultdict(list)
        arrs: dict[tuple[str, str], list] = defaultdict(list)
        for t in self.trains():
            ev = t["events"]
            for i in range(len(ev) - 1):
                a, b = ev[i], ev[i + 1]
                if a.get("dep") is None or b.get("arr") is None:
                    continue
                deps[(a["station"], b["station"])].append((a["dep"], bool(a["stop"]), t["id"]))
                arrs[(b["station"], a["station"])].append((b["arr"], bool(b["stop"]), t["id"]))
        for side, table, occ in (("departure", deps, dep_occ), ("arrival", arrs, arr_occ)):
            for key, events in table.items():
                events.sort()
                for i in range(len(events)):
                    t1, s1, k1 = events[i]
                    longest = max(x[1] for x in occ[s1])
                    for j in range(i + 1, len(events)):
                        t2, s2, k2 = events[j]
                        if t2 - t1 >= longest - TOL:
                            break
                        self.count("headway")
                        # the follower's own node first, then the other one
                        order = occ[s1] if s2 else occ[s1][::-1]
                        for name, length in order:
                            if t2 - t1 < length - TOL:
                                self.fail("headway", f"{side} {k1}@{t1} and {k2}@{t2} at {key[0]} (towards/from "
                                                     f"{key[1]}) closer than h_{name}={length}",
                                          side=side, station=key[0], adjacent=key[1], trains=[k1, k2],
                                          times=[t1, t2], headway=name, required=length)
                                break

    def check_budget(self) -> None:
        inst = self.inst
        budget = inst.params.budget
        if budget is None or not math.isfinite(budget):
            return
        self.count("budget")
        used = 0.0
        for t in self.trains():
            seats = inst.rsu_types[t["rsu"]].seats if t.get("rsu") in inst.rsu_types else 0
            if t["id"] in inst.trains:
                km = inst.trains[t["id"]].distance or self._km([e["station"] for e in t["events"]])
            else:
                km = self._km([e["station"] for e in t["events"]])
            used += seats * km
        if used > budget + TOL * max(1.0, budget):
            self.fail("budget", f"{used:g} seat-km exceed the budget {budget:g}", used=used, budget=budget)

    def _km(self, stations: list[str]) -> float:
        return sum(self.inst.sections[(a, b)].length for a, b in zip(stations, stations[1:])
                   if (a, b) in self.inst.sections)

    def check_inventory(self) -> None:
        inst = self.inst
        conn = self.up(inst.params.conn)
        events: dict[tuple[str, str], list[tuple[float, int, str]]] = defaultdict(list)
        for t in self.trains():
            u = t.get("rsu")
            ev = t["events"]
            events[(ev[0]["station"], u)].append((ev[0]["dep"], -1, t["id"]))
            events[(ev[-1]["station"], u)].append((ev[-1]["arr"] + conn, 1, t["id"]))
        for u, typ in inst.rsu_types.items():
            for m in inst.terminals:
                self.count("inventory")
                stock = typ.inventory.get(m, 0)
                # arrivals at a tick are available to departures at the same tick
                for time, delta, k in sorted(events.get((m, u), []), key=lambda e: (e[0], -e[1])):
                    stock += delta
                    if stock < 0:
                        self.fail("inventory", f"no {u} unit left at {m} when {k} departs at {time}",
                                  station=m, rsu=u, time=time, train=k)
                        break

    # -- passengers --------------------------------------------------------
    def check_passengers(self) -> None:
        inst = self.inst
        costs = inst.params.costs
        trains = {t["id"]: t for t in self.trains()}
        load: dict[tuple[str, int], float] = defaultdict(float)
        served: dict[str, float] = defaultdict(float)
        total = 0.0
        for p in self.rep.get("passengers", []):
            r = p["group"]
            g = inst.groups.get(r)
            if g is None:
                self.fail("demand", f"unknown group {r}", group=r)
                continue
            vol = float(p["volume"])
            served[r] += vol
            legs = p.get("legs") or []
            self.count("routing")
            if not legs:
                self.fail("routing", f"group {r} routed without a train leg", group=r)
                continue
            if legs[0]["board"] != g.origin or legs[-1]["alight"] != g.destination:
                self.fail("routing", f"group {r} travels {legs[0]['board']}->{legs[-1]['alight']}, "
                                     f"wants {g.origin}->{g.destination}", group=r)
            dep = legs[0]["dep"]
            if abs(dep - p.get("depart", dep)) > TOL:
                self.fail("routing", f"group {r} reported departure differs from its first leg", group=r)
            if dep < g.window[0] - TOL or dep > g.window[1] + TOL:
                self.fail("window", f"group {r} departs {dep} outside {list(g.window)}", group=r, time=dep)
            if legs[-1]["arr"] > g.latest_arrival + TOL:
                self.fail("window", f"group {r} arrives {legs[-1]['arr']} after {g.latest_arrival}", group=r,
                          time=legs[-1]["arr"])
            ntr = len(legs) - 1
            if ntr > costs.max_transfers:
                self.fail("transfer", f"group {r} transfers {ntr} times, limit {costs.max_transfers}", group=r)
            cost = 0.0
            if dep < g.preferred[0]:
                cost += costs.shift * (g.preferred[0] - dep)
            elif dep > g.preferred[1]:
                cost += costs.shift * (dep - g.preferred[1])
            for i, leg in enumerate(legs):
                t = trains.get(leg["train"])
                if t is None:
                    self.fail("routing", f"group {r} rides non-operated train {leg['train']}", group=r,
                              train=leg["train"])
                    continue
                idx = self._leg_span(t, leg)
                if idx is None:
                    self.fail("routing", f"group {r} leg on {leg['train']} does not match its stops/times",
                              group=r, train=leg["train"], leg=leg)
                    continue
                for s in range(idx[0], idx[1]):
                    load[(t["id"], s)] += vol
                cost += costs.veh * (leg["arr"] - leg["dep"])
                if i > 0:
                    prev = legs[i - 1]
                    st = inst.stations[leg["board"]]
                    walk = self.up(st.transfer_walk)
                    if prev["alight"] != leg["board"]:
                        self.fail("transfer", f"group {r} alights at {prev['alight']} but boards at {leg['board']}",
                                  group=r)
                    elif leg["dep"] < prev["arr"] + walk - TOL:
                        self.fail("transfer", f"group {r} has {leg['dep'] - prev['arr']} min to change at "
                                              f"{leg['board']}, needs {walk}", group=r, station=leg["board"])
                    cost += costs.trans * st.transfer_walk + costs.wait * max(0.0, leg["dep"] - prev["arr"] - walk)
            if abs(cost - float(p.get("cost", cost))) > TOL * max(1.0, cost):
                self.fail("objective", f"group {r} path cost {p.get('cost')} recomputes to {cost}", group=r)
            total += vol * cost
        for (k, s), v in sorted(load.items()):
            t = trains[k]
            seats = self.inst.rsu_types[t["rsu"]].seats
            self.count("capacity")
            if v > seats + TOL * max(1.0, seats):
                ev = t["events"]
                self.fail("capacity", f"train {k} carries {v:g} > {seats} seats on {ev[s]['station']}-"
                                      f"{ev[s + 1]['station']}", train=k, section=[ev[s]["station"], ev[s + 1]["station"]],
                          load=v, seats=seats)
        unserved = self.rep.get("unserved", {})
        for r, g in inst.groups.items():
            self.count("demand")
            q = float(unserved.get(r, 0.0))
            if q < -TOL:
                self.fail("demand", f"group {r} has negative unserved volume {q}", group=r)
            if abs(served.get(r, 0.0) + q - g.size) > TOL * max(1.0, g.size):
                self.fail("demand", f"group {r}: served {served.get(r, 0.0):g} + unserved {q:g} != {g.size:g}",
                          group=r, served=served.get(r, 0.0), unserved=q, size=g.size)
            total += q * g.penalty
        obj = self.rep.get("objective")
        if obj is not None and self.rep.get("passengers") is not None:
            self.count("objective")
            if abs(total - obj) > TOL * max(1.0, abs(obj)):
                self.fail("objective", f"reported objective {obj} recomputes to {total}", reported=obj,
                          recomputed=total)

    def _leg_span(self, t: dict, leg: dict) -> tuple[int, int] | None:
        ev = t["events"]
        for i, e in enumerate(ev):
            if e["station"] != leg["board"] or e.get("dep") is None or abs(e["dep"] - leg["dep"]) > TOL:
                continue
            if not e["stop"]:
                return None
            for j in range(i + 1, len(ev)):
                f = ev[j]
                if f["station"] == leg["alight"]:
                    if not f["stop"] or abs(f["arr"] - leg["arr"]) > TOL:
                        return None
                    return i, j
            return None
        return None

    def run(self) -> Verdict:
        self.check_structure()
        self.check_running()
        self.check_deviation()
        self.check_periodicity()
        self.check_headways()
        self.check_budget()
        self.check_inventory()
        self.check_passengers()
        return self.v


def validate(inst: Instance, report: dict | Any) -> Verdict:
    """Check a solve report (a ``SolveReport`` or its dict form) against the instance."""
    if not isinstance(report, dict):
        report = report.to_dict()
    return _Checker(inst, report).run()
