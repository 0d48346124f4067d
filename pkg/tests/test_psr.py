import pytest

from _shared import micro, oracle, rel_close
from hpttp.benders import BendersConfig
from hpttp.model import Master, attach_arc_routing
from hpttp.psr import PsrSolver, add_psr, select_fixed_groups, smallest_groups, solve_delete
from hpttp.solver import solve
from hpttp.tsnet import TRAVEL_KINDS


def test_fixed_groups_are_smallest_direct_ones():
    inst, prob = micro(3)
    fixed = select_fixed_groups(prob, 2)
    assert 0 < len(fixed) <= 2
    sizes = [inst.groups[fa.group].size for fa in fixed]
    assert sizes == sorted(sizes)
    net = prob.net
    for fa in fixed:
        assert fa.ori and fa.des and fa.ride
        assert set(fa.ori) | set(fa.des) <= set(fa.ride)
        assert all(net.a_kind[a] in TRAVEL_KINDS for a in fa.ride)
    assert select_fixed_groups(prob, 0) == []


def psr_oracle(prob, fixed):
    m = Master(prob, with_eta=False)
    add_psr(m, fixed)
    routed = [r for r in prob.groups if r not in {f.group for f in fixed}]
    attach_arc_routing(m, routed)
    return solve(m.model, gap=0.0)


@pytest.mark.parametrize("seed", [1, 3, 5, 9])
def test_decomposed_fixed_routing_matches_monolithic(seed):
    _, prob = micro(seed)
    fixed = select_fixed_groups(prob, 2)
    want = psr_oracle(prob, fixed)
    res = PsrSolver(prob, fixed, BendersConfig(gap=0.0)).run()
    assert rel_close(res.psr.objective, want.objective)
    # rerouting every group on that timetable can only help them
    assert res.post.objective <= res.psr.objective + 1e-6
    assert res.post.objective >= oracle(seed).objective - 1e-6


def test_deleting_no_group_is_the_full_problem():
    _, prob = micro(10)
    res = solve_delete(prob, 0, BendersConfig(gap=0.0))
    assert rel_close(res.psr.objective, oracle(10).objective)


def test_none_routed_ignores_every_group():
    inst, prob = micro(10)
    res = solve_delete(prob, None, BendersConfig(gap=0.0))
    assert res.psr.formulation == "benders-none-routed"
    assert res.post.objective >= oracle(10).objective - 1e-6
    assert smallest_groups(prob, 100) == sorted(prob.groups, key=lambda r: (inst.groups[r].size, r))
