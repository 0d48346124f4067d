"""Output files for a solve: JSON report, iteration trace CSV, time-distance diagram SVG
and a bounds plot."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from xml.sax.saxutils import escape

from hpttp.instance import Instance
from hpttp.model import SolveReport

TRACE_COLUMNS = ["iteration", "phase", "lb", "ub", "gap", "alpha", "cut", "columns", "wall_ms"]

# diagram geometry: x = LEFT + minute * PX_PER_MIN, y = TOP + station_index * ROW
LEFT, TOP, PX_PER_MIN, ROW = 60, 30, 6, 50


def trace_csv(rep: SolveReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, TRACE_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rep.trace:
        w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in TRACE_COLUMNS})
    return buf.getvalue()


def station_order(inst: Instance) -> list[str]:
    return list(inst.stations)


def diagram_points(inst: Instance, train: dict) -> list[tuple[float, float]]:
    """Polyline vertices of one train: arrival and departure at every station it visits."""
    row = {m: i for i, m in enumerate(station_order(inst))}
    pts = []
    for e in train.get("events", []):
        y = TOP + row[e["station"]] * ROW
        for t in (e.get("arr"), e.get("dep")):
            if t is not None:
                pts.append((LEFT + t * PX_PER_MIN, y))
    return pts


def _planned_events(inst: Instance, k: str) -> list[dict]:
    tr = inst.trains[k]
    route = inst.lines[tr.line].route
    return [{"station": m, "arr": a, "dep": d} for m, (a, d) in zip(route, tr.schedule)]


def diagram_svg(inst: Instance, rep: SolveReport) -> str:
    """Time-distance diagram: operated trains solid, cancelled trains dashed at their planned
    times, extra trains in a highlight colour."""
    stations = station_order(inst)
    width = LEFT + inst.params.horizon * PX_PER_MIN + 20
    height = TOP + (len(stations) - 1) * ROW + 30
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
           f'font-family="sans-serif" font-size="11">']
    out.append(f'<rect width="{width:g}" height="{height:g}" fill="white"/>')
    for i, m in enumerate(stations):
        y = TOP + i * ROW
        out.append(f'<line x1="{LEFT}" y1="{y}" x2="{width - 20:g}" y2="{y}" stroke="#ccc"/>')
        out.append(f'<text x="5" y="{y + 4}">{escape(m)}</text>')
    step = max(inst.params.cycle or 0, 10)
    t = 0.0
    while t <= inst.params.horizon + 1e-9:
        x = LEFT + t * PX_PER_MIN
        out.append(f'<line x1="{x:g}" y1="{TOP - 5}" x2="{x:g}" y2="{height - 25}" stroke="#eee"/>')
        out.append(f'<text x="{x:g}" y="{height - 10}" text-anchor="middle">{t:g}</text>')
        t += step
    for tr in rep.trains:
        if tr.get("operated"):
            pts = diagram_points(inst, tr)
            extra = tr["id"] not in inst.trains
            style = 'stroke="#d62728" stroke-width="2"' if extra else 'stroke="#1f77b4" stroke-width="1.5"'
        elif tr["id"] in inst.trains:
            pts = diagram_points(inst, {"events": _planned_events(inst, tr["id"])})
            style = 'stroke="#888" stroke-width="1" stroke-dasharray="4 3"'
        else:
            continue
        if not pts:
            continue
        coords = " ".join(f"{x:g},{y:g}" for x, y in pts)
        out.append(f'<polyline fill="none" {style} points="{coords}"><title>{escape(tr["id"])}</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bounds_plot(rep: SolveReport, path: str | Path) -> bool:
    """Lower/upper bound curves per iteration; returns False when there is no trace."""
    if not rep.trace:
        return False
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = list(range(1, len(rep.trace) + 1))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(xs, [r["lb"] for r in rep.trace], label="lower bound")
    ax.plot(xs, [r["ub"] for r in rep.trace], label="upper bound")
    ip = [i for i, r in zip(xs, rep.trace) if r.get("phase") == "ip"]
    if ip:
        ax.axvline(ip[0] - 0.5, color="#999", linestyle=":", linewidth=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True


def write_report(inst: Instance, rep: SolveReport, out_dir: str | Path, stem: str = "solution") -> list[Path]:
    """Write ``<stem>.json``, ``<stem>_trace.csv``, ``<stem>_diagram.svg`` and, when there is a
    trace, ``<stem>_bounds.svg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / f"{stem}.json", out / f"{stem}_trace.csv", out / f"{stem}_diagram.svg"]
    rep.dump(files[0])
    files[1].write_text(trace_csv(rep))
    files[2].write_text(diagram_svg(inst, rep))
    plot = out / f"{stem}_bounds.svg"
    if bounds_plot(rep, plot):
        files.append(plot)
    return files
