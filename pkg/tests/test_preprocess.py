from collections import defaultdict

import pytest

from _shared import micro
from hpttp.instance import generate_micro
from hpttp.model import build_problem
from hpttp.tsnet import ArcKind, build_passenger_subnetworks


def st_paths_arcs(net, arcs, src, dst):
    """Arcs lying on some src->dst path (brute force by forward and backward search)."""
    out, inc = defaultdict(list), defaultdict(list)
    for a in arcs:
        out[net.a_tail[a]].append(a)
        inc[net.a_head[a]].append(a)

    def reach(start, adj, end_of):
        seen, stack = {start}, [start]
        while stack:
            v = stack.pop()
            for a in adj[v]:
                w = end_of[a]
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    fwd = reach(src, out, net.a_head)
    bwd = reach(dst, inc, net.a_tail)
    return {a for a in arcs if net.a_tail[a] in fwd and net.a_head[a] in bwd}


@pytest.mark.parametrize("seed", [1, 4, 10])
def test_passenger_reduction_keeps_exactly_the_useful_arcs(seed):
    inst, prob = micro(seed)
    net = prob.net
    full = build_passenger_subnetworks(net, inst)
    for r in prob.groups:
        # arcs on an origin-destination path that uses only arcs some train can provide
        usable = [a for a in full[r].arcs if not net.is_travel(a) or a in prob.travel]
        want = st_paths_arcs(net, usable, net.origin_vertex[r], net.dest_vertex[r])
        assert want <= prob.pax_subs[r].arc_set(), r


@pytest.mark.parametrize("seed, tau", [(3, None), (7, 8.0), (12, None)])
def test_train_reduction_keeps_source_sink_paths(seed, tau):
    inst = generate_micro(seed, tau=tau)
    reduced = build_problem(inst, prep=("trains",))
    raw = build_problem(inst, prep=())
    net = reduced.net
    removed = 0
    pairs = [(k, raw.train_subs[k], reduced.train_subs[k]) for k in raw.trains]
    pairs.append(("extra", raw.extra, reduced.extra))
    for k, sub, red in pairs:
        srcs = {net.a_tail[a] for a in sub.arcs if net.a_kind[a] == ArcKind.SOURCE}
        snks = {net.a_head[a] for a in sub.arcs if net.a_kind[a] == ArcKind.SINK}
        useful = set()
        for s in srcs:
            for t in snks:
                useful |= st_paths_arcs(net, sub.arcs, s, t)
        kept = red.arc_set()
        assert useful <= kept, k
        # every kept arc can still reach a sign-off
        for a in kept:
            assert any(st_paths_arcs(net, sub.arcs, net.a_tail[a], t) & {a} for t in snks), (k, a)
        removed += len(sub.arcs) - len(kept)
    assert removed == reduced.report.arcs_removed.get("train", 0)
    if seed == 7:
        assert removed > 0


def test_lp_bounds_are_weaker_than_mip_bounds():
    inst, mip = micro(4)
    lp = build_problem(inst, bounds_lp=True)
    assert mip.inv_bounds.keys() == lp.inv_bounds.keys()
    assert all(lp.inv_bounds[k] >= mip.inv_bounds[k] for k in mip.inv_bounds)
    fleet = {u: inst.total_fleet(u) for u in inst.rsu_types}
    assert all(b <= fleet[u] for (u, _), b in mip.inv_bounds.items())


def test_report_counts_removed_arcs():
    _, prob = micro(3)
    rep = prob.report
    assert rep.arcs_removed.get("passenger", 0) > 0
    assert len(rep.inventory_bounds) == len(prob.inventory_vars())
