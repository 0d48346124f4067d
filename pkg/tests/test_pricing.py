import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _shared import benders, enumerate_best, micro, random_dag
from hpttp.model import Master
from hpttp.pricing import (CG_MODES, DualPrices, Pricer, RoutingLP, cheapest_path, copy_columns,
                           hybrid_cg, label_correcting_rcsp)
from hpttp.tsnet import TRAVEL_KINDS


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cheapest_path_matches_enumeration(seed):
    g = random_dag(random.Random(seed))
    want = enumerate_best(g, 10**9)
    path, got, _ = cheapest_path(g, g.cost)
    assert (path is None) == math.isinf(want)
    if path is not None:
        assert got == pytest.approx(want, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2))
def test_marked_rcsp_matches_enumeration(seed, limit):
    rng = random.Random(seed)
    g = random_dag(rng)
    marked = [rng.random() < 0.2 for _ in g.arc_ids]
    want = enumerate_best(g, limit, marked)
    path, got, tr = label_correcting_rcsp(g, g.cost, limit, marked=marked)
    assert (path is None) == math.isinf(want)
    if path is not None:
        assert got == pytest.approx(want, abs=1e-9)
        assert tr <= limit
        assert any(marked[a] for a in path)


def test_forbidden_arcs_are_avoided():
    g = random_dag(random.Random(7))
    path, _, _ = cheapest_path(g, g.cost)
    assert path
    banned = [a == path[0] for a in g.arc_ids]
    p2, _, _ = cheapest_path(g, g.cost, forbidden=banned)
    assert p2 is None or path[0] not in p2


@pytest.fixture(scope="module")
def priced():
    inst, prob = micro(10)
    solver, _ = benders(10)
    return inst, prob, solver


def test_reduced_cost_is_cost_minus_duals(priced):
    inst, prob, solver = priced
    duals = solver.pbsp.lp.duals()
    pricer = Pricer(prob)
    net = prob.net
    for r in prob.groups:
        out = pricer.price(r, duals)
        if not out.path:
            continue
        cost = sum(net.a_cost[a] for a in out.path)
        assert out.cost == pytest.approx(cost)
        rc = cost - sum(duals.lam.get(a, 0.0) for a in out.path) - duals.mu.get(r, 0.0)
        assert out.rc == pytest.approx(rc)
        # optimal pool: no column prices out
        assert out.rc >= -1e-6


def test_copies_lie_in_target_subnetworks(priced):
    inst, prob, solver = priced
    net = prob.net
    n = 0
    for col in solver.pbsp.lp.columns:
        for c in copy_columns(prob, col):
            n += 1
            allowed = prob.pax_subs[c.group].arc_set()
            assert set(c.arcs) <= allowed
            assert net.a_tail[c.arcs[0]] == net.origin_vertex[c.group]
            assert net.a_head[c.arcs[-1]] == net.dest_vertex[c.group]
            assert all(net.a_head[a] == net.a_tail[b] for a, b in zip(c.arcs, c.arcs[1:]))
            assert c.cost == pytest.approx(sum(net.a_cost[a] for a in c.arcs))
    assert n > 0


def test_uncapacitated_routing_is_shortest_path(priced):
    inst, prob, _ = priced
    lp = RoutingLP(prob, prob.groups)
    pricer = Pricer(prob)
    arcs = {a for r in prob.groups for a in prob.pax_subs[r].arcs if prob.net.a_kind[a] in TRAVEL_KINDS}
    lp.set_capacities({a: 1e6 for a in arcs})
    hybrid_cg(lp, pricer, "standard")
    want = 0.0
    for r in prob.groups:
        g = inst.groups[r]
        best = pricer.price(r, DualPrices())
        want += g.size * min(g.penalty, best.cost if best.path else math.inf)
    assert lp.objective == pytest.approx(want)


@pytest.mark.parametrize("seed", [4, 10, 20])
def test_cg_modes_agree(seed):
    _, prob = micro(seed)
    solver, _ = benders(seed)
    x = solver.incumbent
    master = Master(prob)
    caps = master.capacities(x, solver.pbsp.pax_travel)
    vals = {}
    for mode in CG_MODES:
        lp = RoutingLP(prob, prob.groups)
        lp.set_capacities(caps)
        hybrid_cg(lp, Pricer(prob), mode)
        vals[mode] = lp.objective
    assert np.allclose(list(vals.values()), vals["standard"], rtol=1e-9, atol=1e-6)
