import pytest

from _shared import micro, oracle, rel_close
from hpttp.model import Master, SolveReport, build_problem, solve_monolithic
from hpttp.tsnet import ArcKind


@pytest.mark.parametrize("seed", [0, 3, 4, 10, 15])
def test_arc_and_path_formulations_agree(seed):
    _, prob = micro(seed)
    arc = oracle(seed)
    path = solve_monolithic(prob, "path")
    assert arc.status == path.status == "optimal"
    assert rel_close(arc.objective, path.objective)


@pytest.mark.parametrize("seed", [3, 10, 20])
def test_report_costs_add_up(seed):
    rep = oracle(seed)
    assert sum(rep.costs.values()) == pytest.approx(rep.objective)
    inst, _ = micro(seed)
    for r, g in inst.groups.items():
        assert rep.served[r] + rep.unserved[r] == pytest.approx(g.size)


def test_report_round_trip(tmp_path):
    rep = oracle(4)
    path = tmp_path / "r.json"
    rep.dump(path)
    back = SolveReport.load(path)
    assert back.to_dict() == rep.to_dict()


def test_capacity_expression_counts_seats():
    _, prob = micro(4)
    m = Master(prob)
    net = prob.net
    a = next(a for a in prob.travel if net.a_kind[a] == ArcKind.SECTION and prob.arc_trains[a])
    coeffs = m.cap_coeffs(a)
    k = prob.arc_trains[a][0]
    for u in prob.types:
        assert coeffs[m.x[(k, u, a)]] == prob.seats[u]


def test_master_lower_bound_without_passengers():
    # with eta fixed to zero the master optimum is the design cost alone
    _, prob = micro(4)
    m = Master(prob)
    m.model.variables[m.eta].ub = 0.0
    from hpttp.solver import solve
    out = solve(m.model)
    assert out.status.value == "optimal"
    assert m.design_cost(out.x) == pytest.approx(out.objective)


def test_infeasible_budget_reported():
    inst, _ = micro(4)
    tight = inst.with_params(budget=1.0)
    rep = solve_monolithic(build_problem(tight, prep=()), "arc")
    assert rep.status == "infeasible" and rep.objective is None
