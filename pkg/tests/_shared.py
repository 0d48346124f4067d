"""Cached instances and solves shared by several test modules."""
from __future__ import annotations

import functools
import math
import random

import numpy as np

from hpttp.benders import BendersConfig, BendersSolver
from hpttp.instance import generate_micro, generate_peaked
from hpttp.model import Master, build_problem, solve_monolithic
from hpttp.pricing import GroupGraph
from hpttp.solver import open_handle

MICRO_SEEDS = tuple(range(30))


@functools.lru_cache(maxsize=None)
def micro(seed: int, prep: tuple[str, ...] | None = None):
    inst = generate_micro(seed)
    prob = build_problem(inst) if prep is None else build_problem(inst, prep=prep)
    return inst, prob


@functools.lru_cache(maxsize=None)
def oracle(seed: int, prep: tuple[str, ...] | None = None):
    return solve_monolithic(micro(seed, prep)[1], "arc")


@functools.lru_cache(maxsize=None)
def benders(seed: int, mode: str = "lp-pareto", cg: str = "cc+pp"):
    solver = BendersSolver(micro(seed)[1], BendersConfig(mode=mode, cg=cg, gap=0.0))
    rep = solver.run()
    return solver, rep


@functools.lru_cache(maxsize=None)
def peaked(seed: int, hybrid: bool):
    inst = generate_peaked(seed, xi=0.6, extra=True) if hybrid else generate_peaked(seed)
    return inst, build_problem(inst)


def rel_close(a: float, b: float, tol: float = 1e-6) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def binary_vars(m: Master) -> list[int]:
    return sorted(set(m.x.values()) | set(m.theta.values()) | set(m.y.values()))


def enumerate_masters(problem, cap: int = 400) -> tuple[Master, list[np.ndarray], bool]:
    """All feasible master points (design variables only, eta = 0) by repeated solves with
    no-good rows.  Returns (master, points, complete)."""
    m = Master(problem)
    model = m.model.copy()
    model.variables[m.eta].ub = 0.0
    bins = binary_vars(m)
    pts: list[np.ndarray] = []
    while len(pts) < cap:
        out = open_handle(model).solve(gap=0.0)
        if not out.has_solution:
            return m, pts, True
        x = np.round(out.x, 9)
        pts.append(x)
        ones = [j for j in bins if x[j] > 0.5]
        row = {j: (-1.0 if x[j] > 0.5 else 1.0) for j in bins}
        model.add_constr(row, ">=", 1 - len(ones))
    return m, pts, False


def random_masters(problem, n: int, seed: int) -> tuple[Master, list[np.ndarray]]:
    """Up to ``n`` distinct feasible master points found with random objectives."""
    rng = np.random.default_rng(seed)
    m = Master(problem)
    bins = binary_vars(m)
    pts: list[np.ndarray] = []
    seen = set()
    for _ in range(10 * n):
        model = m.model.copy()
        model.variables[m.eta].ub = 0.0
        for v in model.variables:
            v.obj = 0.0
        for j in bins:
            model.variables[j].obj = float(rng.uniform(-1.0, 1.0))
        out = open_handle(model).solve(gap=0.0)
        if not out.has_solution:
            break
        x = np.round(out.x, 9)
        key = tuple(j for j in bins if x[j] > 0.5)
        if key not in seen:
            seen.add(key)
            pts.append(x)
        if len(pts) == n:
            break
    return m, pts


def random_dag(rng: random.Random) -> GroupGraph:
    """Layered random DAG (2-25 vertices) shaped like a pricing graph."""
    while True:
        n = rng.randint(2, 25)
        arcs = []
        for i in range(n - 1):
            for _ in range(rng.randint(1, 3)):
                j = rng.randint(i + 1, min(n - 1, i + 6))
                arcs.append((i, j, round(rng.uniform(-5.0, 10.0), 3), 1 if rng.random() < 0.35 else 0))
        # keep the path count enumerable
        paths = [0] * n
        paths[0] = 1
        for i, j, _, _ in sorted(arcs):
            paths[j] += paths[i]
        if paths[n - 1] <= 20_000:
            break
    arcs.sort(key=lambda t: t[0])
    g = object.__new__(GroupGraph)
    g.n, g.source, g.target = n, 0, n - 1
    g.arc_ids = list(range(len(arcs)))
    g.tail = [a[0] for a in arcs]
    g.head = [a[1] for a in arcs]
    g.cost = [a[2] for a in arcs]
    g.walk = [a[3] for a in arcs]
    return g


def enumerate_best(g: GroupGraph, limit: int, marked: list[bool] | None = None) -> float:
    """Cheapest source-target path with at most ``limit`` transfers (and at least one marked
    arc when ``marked`` is given), by depth-first enumeration."""
    out = [[] for _ in range(g.n)]
    for i, t in enumerate(g.tail):
        out[t].append(i)
    best = math.inf
    stack = [(g.source, 0.0, 0, False)]
    while stack:
        v, c, tr, hit = stack.pop()
        if v == g.target:
            if marked is None or hit:
                best = min(best, c)
            continue
        for i in out[v]:
            if tr + g.walk[i] <= limit:
                stack.append((g.head[i], c + g.cost[i], tr + g.walk[i], hit or bool(marked and marked[i])))
    return best
