"""Benders decomposition: timetable master with optimality cuts, routing subproblem by
column generation, Pareto-optimal and Open-Close cut strengthening, adaptive master gaps."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from hpttp.model import Column, Master, Problem, SolveReport, extract_solution
from hpttp.pricing import (CGStats, DualPrices, PartialPricing, Pricer, RC_TOL, RoutingLP,
                           hybrid_cg)
from hpttp.solver import INF, Constraint, LinearModel, Status, Variable, open_handle
from hpttp.tsnet import TRAVEL_KINDS

log = logging.getLogger(__name__)

MODES = ("standard", "lp", "lp-pareto", "lp-pareto-2", "lp-oc", "lp-oc-2")
CUT_TOL = 1e-6
OPEN_TOL = 1e-9


def adaptive_aog(rho: float, prev: float, alphabar: float = 0.01, eps: float = 0.05) -> float:
    """Next acceptable optimality gap of the integer master from the current gap ``rho``."""
    if rho >= 2 * alphabar:
        return max(alphabar, prev * (1 - eps))
    return rho / 2


def _tol(v: float) -> float:
    return CUT_TOL * max(1.0, abs(v))


@dataclass
class OptimalityCut:
    kind: str
    lam: dict[int, float]
    const: float

    def key(self) -> tuple:
        return (round(self.const, 7), tuple(sorted((a, round(v, 9)) for a, v in self.lam.items() if abs(v) > 1e-12)))

    def value(self, master: Master, xvec: Sequence[float]) -> float:
        return master.cut_value(self.lam, self.const, xvec)


def make_standard_cut(problem: Problem, duals: DualPrices) -> OptimalityCut:
    const = sum(problem.inst.groups[r].size * mu for r, mu in duals.mu.items())
    return OptimalityCut("standard", {a: v for a, v in duals.lam.items() if v != 0.0}, const)


@dataclass
class CorePoint:
    """Running average of master solutions."""
    x: np.ndarray | None = None
    i: int = 0

    def update(self, xbar: Sequence[float]) -> np.ndarray:
        xb = np.asarray(xbar, dtype=float)
        self.i += 1
        self.x = xb.copy() if self.x is None else ((self.i - 1) * self.x + xb) / self.i
        return self.x


@dataclass
class BoundsTrace:
    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append(row)

    def lbs(self) -> list[float]:
        return [r["lb"] for r in self.rows]

    def ubs(self) -> list[float]:
        return [r["ub"] for r in self.rows]

    def to_csv(self) -> str:
        cols = ["iteration", "phase", "lb", "ub", "gap", "alpha", "cut", "columns", "wall_ms"]
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join("" if r.get(c) is None else (f"{r[c]:.10g}" if isinstance(r[c], float) else str(r[c]))
                                  for c in cols))
        return "\n".join(lines) + "\n"


@dataclass
class BendersConfig:
    mode: str = "lp-pareto"
    cg: str = "cc+pp"
    klp: int = 50
    lp_gap: float = 0.01
    gap: float = 0.0
    alpha0: float = 0.04
    alphabar: float = 0.01
    eps: float = 0.05
    time_limit: float | None = None
    backend: str | None = None
    threads: int | None = None
    pp_size: int | None = None
    max_iter: int = 10_000


class PBSP:
    """The routing subproblem at a fixed master point, solved by column generation."""

    def __init__(self, problem: Problem, master: Master, groups: Iterable[str] | None = None,
                 cg: str = "cc+pp", backend: str | None = None, threads: int | None = None,
                 pp_size: int | None = None):
        self.problem = problem
        self.master = master
        self.groups = list(problem.groups if groups is None else groups)
        self.cg = cg
        self.backend = backend
        self.threads = threads
        self.pp_size = pp_size
        self.lp = RoutingLP(problem, self.groups, backend, threads)
        self.pricer = Pricer(problem)
        self.partial = PartialPricing(self.groups, pp_size)
        self.stats: list[CGStats] = []
        arcs: set[int] = set()
        for r in self.groups:
            arcs.update(a for a in problem.pax_subs[r].arcs if problem.net.a_kind[a] in TRAVEL_KINDS)
        self.pax_travel = arcs

    def capacities(self, xvec: Sequence[float]) -> dict[int, float]:
        return self.master.capacities(xvec, self.pax_travel)

    def solve(self, xvec: Sequence[float], forbidden: set[int] | None = None) -> tuple[float, DualPrices]:
        self.lp.set_capacities(self.capacities(xvec))
        st = hybrid_cg(self.lp, self.pricer, self.cg, partial=self.partial, forbidden=forbidden)
        self.stats.append(st)
        return self.lp.objective, self.lp.duals()

    def value(self, xvec: Sequence[float]) -> float:
        return self.solve(xvec)[0]


def make_pareto_cut(pbsp: PBSP, xbar: Sequence[float], core: Sequence[float], q_star: float,
                    cg: str | None = None) -> OptimalityCut | None:
    """Cut maximal at the core point among the optimal dual solutions at ``xbar``.

    Returns ``None`` when the auxiliary problem fails or its cut is not tight at ``xbar``.
    """
    master, problem = pbsp.master, pbsp.problem
    capbar = master.capacities(xbar, pbsp.pax_travel)
    caphat = master.capacities(core, pbsp.pax_travel)
    try:
        aux = RoutingLP(problem, pbsp.groups, pbsp.backend, pbsp.threads,
                        kappa=(q_star, {a: c for a, c in capbar.items() if c > OPEN_TOL}), rhs=caphat)
        aux.add_columns(pbsp.lp.columns)
        hybrid_cg(aux, pbsp.pricer, cg or pbsp.cg, s=pbsp.pp_size)
    except RuntimeError as exc:
        log.info("pareto auxiliary problem failed (%s); using the standard cut", exc)
        return None
    cut = make_standard_cut(problem, aux.duals())
    cut.kind = "pareto"
    if abs(cut.value(master, xbar) - q_star) > _tol(q_star):
        log.info("pareto cut not tight at the master point; using the standard cut")
        return None
    return cut


class _LiftLP:
    """Packing problem that lifts the duals of closed arcs: rows ``sum z_p - s_a <= 1``."""

    def __init__(self, problem: Problem, lam_open: dict[int, float], mu: dict[str, float],
                 lower: dict[int, float] | None, backend: str | None, threads: int | None):
        self.problem = problem
        self.lam_open = lam_open
        self.mu = mu
        self.lower = lower  # lambda* on closed arcs, None in the simplified form
        self.model = LinearModel("lift")
        self.handle = open_handle(self.model, backend, threads=threads)
        self.row_of: dict[int, int] = {}
        self.keys: set = set()
        self.columns: list[Column] = []

    def add_columns(self, cols: Iterable[Column], closed: set[int]) -> int:
        fresh = [c for c in cols if c.key not in self.keys]
        if not fresh:
            return 0
        new_arcs = []
        for c in fresh:
            for a in c.arcs:
                if a in closed and a not in self.row_of and a not in new_arcs:
                    new_arcs.append(a)
        if new_arcs:
            idx = self.handle.add_rows([Constraint(f"lift[{a}]", "<=", 1.0, {}) for a in new_arcs])
            self.row_of.update(zip(new_arcs, idx))
            if self.lower is not None:
                specs = [(Variable(f"s[{a}]", 0.0, INF, False, -self.lower.get(a, 0.0)), {self.row_of[a]: -1.0})
                         for a in new_arcs]
                self.handle.add_columns(specs)
        specs = []
        for c in fresh:
            self.keys.add(c.key)
            b = c.cost - self.mu.get(c.group, 0.0) - sum(self.lam_open.get(a, 0.0) for a in c.arcs)
            coefs = {self.row_of[a]: 1.0 for a in c.arcs if a in closed}
            specs.append((Variable(f"z[{len(self.columns) + len(specs)}]", 0.0, INF, False, b), coefs))
        self.handle.add_columns(specs)
        self.columns.extend(fresh)
        return len(fresh)

    def solve(self) -> dict[int, float]:
        out = self.handle.solve(relax=True)
        if out.status != Status.OPTIMAL or out.duals is None:
            raise RuntimeError(f"lifting problem: {out.status.value}")
        return {a: min(0.0, float(out.duals[i])) for a, i in self.row_of.items()}


def make_open_close_cut(pbsp: PBSP, xbar: Sequence[float], duals: DualPrices,
                        simplified: bool = False) -> OptimalityCut:
    """Keep the duals of open arcs (positive capacity at ``xbar``) and ``mu``; raise the
    duals of closed arcs as far as dual feasibility allows.

    In the simplified form the subproblem was solved with closed arcs forbidden, so no
    lower limit applies to the lifted values.
    """
    problem = pbsp.problem
    caps = pbsp.capacities(xbar)
    closed = {a for a in pbsp.pax_travel if caps.get(a, 0.0) <= OPEN_TOL}
    lam_open = {a: v for a, v in duals.lam.items() if a not in closed}
    lower = None if simplified else {a: duals.lam.get(a, 0.0) for a in closed}
    lift = _LiftLP(problem, lam_open, duals.mu, lower, pbsp.backend, pbsp.threads)
    const = sum(problem.inst.groups[r].size * mu for r, mu in duals.mu.items())
    if not closed:
        return OptimalityCut("open-close", dict(lam_open), const)
    lift.add_columns((c for c in pbsp.lp.columns if any(a in closed for a in c.arcs)), closed)
    pi: dict[int, float] = {}
    for _ in range(100_000):
        if lift.row_of:
            pi = lift.solve()
        cur = dict(lam_open)
        cur.update(pi)
        prices = DualPrices(cur, duals.mu)
        new = []
        for r in pbsp.groups:
            out = pbsp.pricer.price(r, prices, marked=closed)
            if out.rc < -RC_TOL:
                new.append(pbsp.pricer.column(out))
        if not lift.add_columns(new, closed):
            break
    lam = dict(lam_open)
    lam.update({a: v for a, v in pi.items() if v != 0.0})
    return OptimalityCut("open-close", lam, const)


class BendersSolver:
    """Two-phase Benders loop: optional LP-relaxed master rounds, then integer master rounds
    with an adaptive optimality gap until the global gap target is met."""

    def __init__(self, problem: Problem, config: BendersConfig | None = None,
                 master_hook: Callable[[Master], None] | None = None,
                 groups: Iterable[str] | None = None,
                 fixed_decoder: Callable[[Master, Sequence[float]], tuple[list, dict]] | None = None):
        self.problem = problem
        self.cfg = cfg = config or BendersConfig()
        if cfg.mode not in MODES:
            raise ValueError(f"unknown mode {cfg.mode!r}")
        self.master = Master(problem)
        if master_hook:
            master_hook(self.master)
        self.handle = open_handle(self.master.model, cfg.backend, threads=cfg.threads)
        self.pbsp = PBSP(problem, self.master, groups, cfg.cg, cfg.backend, cfg.threads, cfg.pp_size)
        self.fixed_decoder = fixed_decoder
        self.trace = BoundsTrace()
        self.cuts: list[OptimalityCut] = []
        self._cut_keys: set = set()
        self.core = CorePoint()
        self.diagnostics: list[dict] = []
        self.lb = -INF
        self.ub = INF
        self.incumbent: np.ndarray | None = None
        self.incumbent_flows: list = []
        self.incumbent_unserved: dict[str, float] = {}
        self.timings = {"master": 0.0, "subproblem": 0.0, "cuts": 0.0}
        self._t0 = 0.0

    # -- helpers -----------------------------------------------------------
    def _remaining(self) -> float | None:
        if self.cfg.time_limit is None:
            return None
        return max(0.0, self.cfg.time_limit - (time.perf_counter() - self._t0))

    def _out_of_time(self) -> bool:
        rem = self._remaining()
        return rem is not None and rem <= 0.0

    def _add(self, cut: OptimalityCut) -> bool:
        k = cut.key()
        if k in self._cut_keys:
            return False
        self._cut_keys.add(k)
        self.master.add_cut(cut.lam, cut.const, self.handle, f"cut[{len(self.cuts)}]")
        self.cuts.append(cut)
        return True

    def _cuts_at(self, xbar: np.ndarray, phase: str, it: int) -> tuple[float, list[OptimalityCut]]:
        """Solve the subproblem at ``xbar`` and build this mode's cuts."""
        mode = self.cfg.mode
        master, pbsp = self.master, self.pbsp
        core = self.core.update(xbar)
        t = time.perf_counter()
        forbidden = None
        if mode == "lp-oc":
            caps = pbsp.capacities(xbar)
            forbidden = {a for a in pbsp.pax_travel if caps.get(a, 0.0) <= OPEN_TOL}
        q_star, duals = pbsp.solve(xbar, forbidden)
        self.timings["subproblem"] += time.perf_counter() - t
        t = time.perf_counter()
        std = make_standard_cut(self.problem, duals)
        cuts: list[OptimalityCut] = []
        diag = {"phase": phase, "iteration": it, "q": q_star, "cut_at_x": {}, "core": {}}
        if mode in ("standard", "lp", "lp-pareto-2", "lp-oc-2"):
            cuts.append(std)
        if mode in ("lp-pareto", "lp-pareto-2"):
            par = make_pareto_cut(pbsp, xbar, core, q_star)
            if par is None:
                if mode == "lp-pareto":
                    cuts.append(std)
            else:
                cuts.append(par)
                diag["core"] = {"standard": std.value(master, core), "pareto": par.value(master, core)}
        if mode in ("lp-oc", "lp-oc-2"):
            oc = make_open_close_cut(pbsp, xbar, duals, simplified=(mode == "lp-oc"))
            cuts.append(oc)
            if mode == "lp-oc-2":
                diag["lift"] = {"base": std.lam, "lifted": oc.lam}
        for c in cuts:
            diag["cut_at_x"][c.kind] = c.value(master, xbar)
        self.diagnostics.append(diag)
        self.timings["cuts"] += time.perf_counter() - t
        return q_star, cuts

    def _record_incumbent(self, xbar: np.ndarray, value: float) -> None:
        if value < self.ub - 1e-12:
            self.ub = value
            self.incumbent = np.array(xbar, dtype=float)
            self.incumbent_flows = self.pbsp.lp.flows()
            self.incumbent_unserved = self.pbsp.lp.unserved()

    # -- phases ------------------------------------------------------------
    def _lp_phase(self) -> None:
        cfg = self.cfg
        it = 0
        while it < cfg.klp and not self._out_of_time():
            it += 1
            t = time.perf_counter()
            out = self.handle.solve(relax=True, time_limit=self._remaining())
            self.timings["master"] += time.perf_counter() - t
            if out.status != Status.OPTIMAL:
                log.info("LP master stopped with status %s", out.status.value)
                break
            xbar = out.x
            lb_lp = out.objective
            self.lb = max(self.lb, lb_lp)
            cols0 = self.pbsp.lp.num_columns
            q_star, cuts = self._cuts_at(xbar, "lp", it)
            ub_lp = self.master.design_cost(xbar) + q_star
            added = [c.kind for c in cuts if self._add(c)]
            gap = (ub_lp - lb_lp) / ub_lp if ub_lp > 0 else 0.0
            self.trace.add(iteration=it, phase="lp", lb=lb_lp, ub=ub_lp, gap=gap, alpha=None,
                           cut="+".join(added) or "none", columns=self.pbsp.lp.num_columns - cols0,
                           wall_ms=1000 * (time.perf_counter() - self._t0))
            if gap <= cfg.lp_gap or not added:
                break

    def _ip_phase(self) -> str:
        cfg = self.cfg
        alpha = cfg.alpha0
        it = 0
        status = Status.LIMIT.value
        while it < cfg.max_iter:
            if self._out_of_time():
                return Status.LIMIT.value
            it += 1
            t = time.perf_counter()
            warm = self.incumbent if self.incumbent is not None else None
            out = self.handle.solve(gap=alpha, time_limit=self._remaining(), warm_start=warm)
            self.timings["master"] += time.perf_counter() - t
            if out.status == Status.INFEASIBLE:
                return Status.INFEASIBLE.value
            if not out.has_solution:
                return Status.LIMIT.value if out.status == Status.LIMIT else Status.ERROR.value
            if math.isfinite(out.bound):
                self.lb = max(self.lb, out.bound)
            xbar = np.round(out.x, 9)
            cols0 = self.pbsp.lp.num_columns
            q_star, cuts = self._cuts_at(xbar, "ip", it)
            self._record_incumbent(xbar, self.master.design_cost(xbar) + q_star)
            eta = xbar[self.master.eta]
            violated = [c for c in cuts if c.value(self.master, xbar) > eta + _tol(eta)]
            added = [c.kind for c in violated if self._add(c)]
            ub, lb = self.ub, self.lb
            rho = (ub - lb) / ub if ub > 0 else (0.0 if ub - lb <= 1e-9 else INF)
            self.trace.add(iteration=it, phase="ip", lb=lb, ub=ub, gap=rho, alpha=alpha,
                           cut="+".join(added) or "none", columns=self.pbsp.lp.num_columns - cols0,
                           wall_ms=1000 * (time.perf_counter() - self._t0))
            if ub - lb <= max(cfg.gap * ub, 1e-6 * max(1.0, abs(ub))):
                return Status.OPTIMAL.value if ub - lb <= 1e-6 * max(1.0, abs(ub)) else Status.FEASIBLE.value
            if out.status == Status.LIMIT:
                return Status.LIMIT.value
            if not added and out.gap <= 1e-9:
                log.warning("no violated cut at an exactly solved master; stopping")
                return Status.FEASIBLE.value
            alpha = adaptive_aog(rho, alpha, cfg.alphabar, cfg.eps)
        return status

    def run(self) -> SolveReport:
        self._t0 = time.perf_counter()
        if self.cfg.mode != "standard":
            self._lp_phase()
        status = self._ip_phase()
        total = time.perf_counter() - self._t0
        if self.incumbent is None:
            rep = SolveReport(status=status, objective=None, lower_bound=self.lb, formulation="benders")
        else:
            flows = list(self.incumbent_flows)
            unserved = dict(self.incumbent_unserved)
            fixed: list[str] = []
            if self.fixed_decoder:
                f2, u2 = self.fixed_decoder(self.master, self.incumbent)
                flows += f2
                unserved.update(u2)
                fixed = list(u2)
            rep = extract_solution(self.problem, self.master, self.incumbent, flows, unserved,
                                   status, self.ub, fixed_groups=fixed)
            rep.formulation = "benders"
            rep.lower_bound = self.lb
            rep.upper_bound = self.ub
            rep.gap = (self.ub - self.lb) / self.ub if self.ub > 0 else 0.0
        rep.timings = dict(self.timings, total=total)
        rep.counts = {"columns": self.pbsp.lp.num_columns, "cuts": len(self.cuts),
                      "iterations": len(self.trace.rows),
                      "pricing_calls": self.pbsp.pricer.calls}
        rep.trace = list(self.trace.rows)
        return rep


def run_algorithm1(problem: Problem, config: BendersConfig | None = None, **kw) -> tuple[SolveReport, BoundsTrace]:
    solver = BendersSolver(problem, config, **kw)
    rep = solver.run()
    return rep, solver.trace


def solve_pbsp(problem: Problem, master: Master, xvec: Sequence[float], cg: str = "standard",
               backend: str | None = None, groups: Iterable[str] | None = None
               ) -> tuple[float, DualPrices, list[Column]]:
    """Stand-alone subproblem solve at a master point: (objective, duals, column pool)."""
    pb = PBSP(problem, master, groups, cg, backend)
    q, d = pb.solve(xvec)
    return q, d, list(pb.lp.columns)
