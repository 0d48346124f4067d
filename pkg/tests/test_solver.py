import numpy as np
import pytest

from hpttp.solver import Constraint, LinearModel, Variable, Status, lp_name, open_handle, solve, write_lp


def small_lp():
    # min -x - 2y  s.t.  x + y <= 4,  x + 3y <= 6,  x, y >= 0   -> x = 3, y = 1, obj -5
    m = LinearModel("lp")
    x = m.add_var("x", obj=-1.0)
    y = m.add_var("y", obj=-2.0)
    m.add_constr({x: 1, y: 1}, "<=", 4, "cap")
    m.add_constr({x: 1, y: 3}, "<=", 6, "mix")
    return m


@pytest.mark.parametrize("backend", ["highs", "lp-exec"])
def test_lp_values_and_duals(backend):
    out = solve(small_lp(), backend=backend)
    assert out.status == Status.OPTIMAL
    assert out.objective == pytest.approx(-5.0)
    assert np.allclose(out.x, [3.0, 1.0])
    # duals of a minimisation with <= rows are <= 0: -0.5 and -0.5
    assert np.allclose(out.duals, [-0.5, -0.5])


@pytest.mark.parametrize("backend", ["highs", "lp-exec"])
def test_mip_and_relaxation(backend):
    m = LinearModel("mip")
    x = m.add_var("x", 0, 10, True, -1.0)
    m.add_constr({x: 2}, "<=", 7)
    assert solve(m, backend=backend).objective == pytest.approx(-3.0)
    assert solve(m, backend=backend, relax=True).objective == pytest.approx(-3.5)


def test_infeasible_status():
    m = LinearModel()
    x = m.add_var("x", 0, 1)
    m.add_constr({x: 1}, ">=", 2)
    assert solve(m).status == Status.INFEASIBLE


def test_incremental_rows_and_columns():
    m = small_lp()
    h = open_handle(m)
    assert h.solve().objective == pytest.approx(-5.0)
    h.add_rows([Constraint("ycap", "<=", 0.5, {1: 1.0})])
    assert h.solve().objective == pytest.approx(-4.5)
    h.add_columns([(Variable("z", 0, 1, False, -3.0), {0: 1.0})])
    # z takes the cap row first: z = 1, y = 0.5, x = 2.5
    out = h.solve()
    assert out.objective == pytest.approx(-6.5)
    assert np.allclose(out.x, [2.5, 0.5, 1.0])


def test_lp_text_is_readable():
    text = write_lp(small_lp())
    lines = [ln.strip() for ln in text.splitlines()]
    assert lines[1] == "Minimize" and lines[-1] == "End"
    assert "cap:" in text and "mix:" in text
    assert lp_name("x[a|b]") != "x[a|b]"
    assert lp_name("end") != "end"
