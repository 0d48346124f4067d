import re

import pytest

from _shared import benders, micro, oracle
from hpttp.model import SolveReport
from hpttp.report import (LEFT, PX_PER_MIN, ROW, TOP, TRACE_COLUMNS, bounds_plot, diagram_points,
                          diagram_svg, station_order, trace_csv, write_report)


def test_empty_timetable_draws_axes_only():
    inst, _ = micro(3)
    svg = diagram_svg(inst, SolveReport(status="infeasible", objective=None))
    assert "<polyline" not in svg
    assert svg.count("<text") >= len(inst.stations)


def test_two_trains_drawn_at_affine_coordinates():
    inst, _ = micro(3)
    rep = oracle(3)
    stations = station_order(inst)
    drawn = [t for t in rep.trains if t["operated"]][:2]
    rep2 = SolveReport(status="optimal", objective=0.0, trains=drawn)
    svg = diagram_svg(inst, rep2)
    lines = re.findall(r'points="([^"]+)"', svg)
    assert len(lines) == 2
    for tr, pts in zip(drawn, lines):
        got = [tuple(map(float, p.split(","))) for p in pts.split()]
        want = []
        for e in tr["events"]:
            y = TOP + stations.index(e["station"]) * ROW
            want += [(LEFT + t * PX_PER_MIN, y) for t in (e["arr"], e["dep"]) if t is not None]
        assert got == pytest.approx(want)
        assert diagram_points(inst, tr) == pytest.approx(want)


def test_trace_csv_has_one_row_per_iteration():
    _, rep = benders(10)
    rows = trace_csv(rep).splitlines()
    assert rows[0].split(",") == TRACE_COLUMNS
    assert len(rows) == len(rep.trace) + 1


def test_bounds_plot_needs_a_trace(tmp_path):
    assert not bounds_plot(SolveReport(status="optimal", objective=0.0), tmp_path / "b.svg")
    _, rep = benders(10)
    assert bounds_plot(rep, tmp_path / "b.svg")
    assert (tmp_path / "b.svg").stat().st_size > 0


def test_write_report_files(tmp_path):
    inst, _ = micro(10)
    _, rep = benders(10)
    files = write_report(inst, rep, tmp_path, "run")
    names = {f.name for f in files}
    assert {"run.json", "run_trace.csv", "run_diagram.svg", "run_bounds.svg"} <= names
    assert SolveReport.load(tmp_path / "run.json").objective == pytest.approx(rep.objective)
