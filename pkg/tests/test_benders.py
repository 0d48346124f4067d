import pytest

from _shared import benders, micro, oracle, peaked, rel_close
from hpttp.benders import MODES, BendersConfig, BendersSolver, CorePoint, adaptive_aog
from hpttp.pricing import CG_MODES


def test_adaptive_gap_rule():
    # far from optimal: shrink by eps, never below the target
    assert adaptive_aog(0.5, 0.04) == pytest.approx(0.038)
    assert adaptive_aog(0.5, 0.0101) == pytest.approx(0.01)
    # gap at exactly twice the target still uses the geometric branch
    assert adaptive_aog(0.02, 0.04) == pytest.approx(0.038)
    # close to optimal: half the current gap
    assert adaptive_aog(0.019, 0.01) == pytest.approx(0.0095)
    assert adaptive_aog(0.0, 0.01) == 0.0


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("seed", [3, 10, 20])
def test_every_mode_reaches_the_optimum(mode, seed):
    _, rep = benders(seed, mode)
    assert rep.status == "optimal"
    assert rel_close(rep.objective, oracle(seed).objective)


@pytest.mark.parametrize("cg", CG_MODES)
def test_every_cg_mode_reaches_the_optimum(cg):
    _, rep = benders(12, "lp-pareto", cg)
    assert rel_close(rep.objective, oracle(12).objective)


def test_bounds_trace_is_monotone():
    solver, rep = benders(20)
    ip = [r for r in solver.trace.rows if r["phase"] == "ip"]
    lbs = [r["lb"] for r in ip]
    ubs = [r["ub"] for r in ip]
    assert lbs == sorted(lbs)
    assert ubs == sorted(ubs, reverse=True)
    assert rep.lower_bound <= rep.objective + 1e-6
    csv = solver.trace.to_csv().splitlines()
    assert csv[0] == "iteration,phase,lb,ub,gap,alpha,cut,columns,wall_ms"
    assert len(csv) == len(solver.trace.rows) + 1


def test_core_point_is_running_mean():
    cp = CorePoint()
    cp.update([0.0, 1.0])
    cp.update([1.0, 1.0])
    assert list(cp.update([1.0, 0.0])) == pytest.approx([2 / 3, 2 / 3])


def test_time_limit_reports_limit():
    _, prob = peaked(0, True)
    rep = BendersSolver(prob, BendersConfig(time_limit=0.0)).run()
    assert rep.status == "limit"


def test_report_counts():
    _, rep = benders(10)
    assert rep.counts["cuts"] >= 1
    assert rep.counts["columns"] > 0
    assert rep.counts["iterations"] == len(rep.trace)
    assert set(rep.timings) >= {"master", "subproblem", "cuts", "total"}


def test_unknown_mode_rejected():
    _, prob = micro(0)
    with pytest.raises(ValueError):
        BendersSolver(prob, BendersConfig(mode="fast"))
