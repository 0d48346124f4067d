"""Backend-neutral linear / mixed-integer model and solve handles.

Everything that touches an LP/MIP engine goes through this module.  Two
backends are provided:

``highs``
    In-process HiGHS through ``highspy``.  Supports incremental row and
    column additions with warm starts, which the cut and column loops rely on.
``lp-exec``
    Writes the model as a CPLEX-LP text file, runs a solver executable and
    parses its JSON solution file.  The executable defaults to
    ``python -m hpttp.lpexec``; set ``HPTTP_LP_EXEC`` to substitute another
    command that honours the same arguments.

The backend is picked with ``backend=`` or the ``HPTTP_SOLVER`` environment
variable.
"""
from __future__ import annotations

import enum
import json
import math
import os
import re
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INF = math.inf


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible-with-gap"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"
    ERROR = "error"


class SolverError(RuntimeError):
    """Backend unavailable or failed numerically."""


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    integer: bool = False
    obj: float = 0.0


@dataclass
class Constraint:
    name: str
    sense: str  # "<=", ">=" or "="
    rhs: float
    coeffs: dict[int, float] = field(default_factory=dict)

    def bounds(self) -> tuple[float, float]:
        if self.sense == "<=":
            return -INF, self.rhs
        if self.sense == ">=":
            return self.rhs, INF
        return self.rhs, self.rhs


_SENSES = {"<=", ">=", "="}


class LinearModel:
    """A sparse LP/MIP: variables, rows and a linear objective."""

    def __init__(self, name: str = "model", maximize: bool = False):
        self.name = name
        self.maximize = maximize
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self._names: dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constrs(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                integer: bool = False, obj: float = 0.0) -> int:
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        self._names[name] = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), integer, float(obj)))
        return len(self.variables) - 1

    def var_index(self, name: str) -> int:
        return self._names[name]

    def add_constr(self, coeffs: dict[int, float] | Iterable[tuple[int, float]],
                   sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in _SENSES:
            raise ValueError(f"bad sense {sense!r}")
        merged: dict[int, float] = {}
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        for j, c in items:
            if c:
                merged[j] = merged.get(j, 0.0) + float(c)
        row = Constraint(name or f"c{len(self.constraints)}", sense, float(rhs),
                         {j: c for j, c in merged.items() if c != 0.0})
        self.constraints.append(row)
        return len(self.constraints) - 1

    def is_mip(self) -> bool:
        return any(v.integer for v in self.variables)

    def validate(self) -> None:
        n = len(self.variables)
        for v in self.variables:
            if v.lb > v.ub:
                raise ValueError(f"variable {v.name}: lb > ub")
            if math.isnan(v.lb) or math.isnan(v.ub) or math.isnan(v.obj):
                raise ValueError(f"variable {v.name}: NaN data")
        for row in self.constraints:
            for j in row.coeffs:
                if not 0 <= j < n:
                    raise ValueError(f"row {row.name} references undeclared variable {j}")
            if math.isnan(row.rhs):
                raise ValueError(f"row {row.name}: NaN rhs")

    def objective_value(self, x: Sequence[float]) -> float:
        return float(sum(v.obj * x[j] for j, v in enumerate(self.variables)))

    def row_activity(self, i: int, x: Sequence[float]) -> float:
        return float(sum(c * x[j] for j, c in self.constraints[i].coeffs.items()))

    def copy(self) -> "LinearModel":
        out = LinearModel(self.name, self.maximize)
        for v in self.variables:
            out.add_var(v.name, v.lb, v.ub, v.integer, v.obj)
        for r in self.constraints:
            out.constraints.append(Constraint(r.name, r.sense, r.rhs, dict(r.coeffs)))
        return out


@dataclass
class SolveOutcome:
    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float = math.nan
    bound: float = math.nan
    wall_time: float = 0.0
    message: str = ""

    @property
    def has_solution(self) -> bool:
        return self.x is not None and self.status in (Status.OPTIMAL, Status.FEASIBLE, Status.LIMIT)

    @property
    def gap(self) -> float:
        if not self.has_solution or math.isnan(self.bound):
            return math.inf
        denom = max(abs(self.objective), 1e-10)
        return abs(self.objective - self.bound) / denom


# ---------------------------------------------------------------------------
# CPLEX LP text format
# ---------------------------------------------------------------------------

_RESERVED = {"st", "end", "free", "inf", "infinity"}
_NAME_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]]*$")


def lp_name(name: str) -> str:
    """Map an arbitrary name onto the identifier subset the LP dialect accepts."""
    if _NAME_OK.match(name) and name.lower() not in _RESERVED:
        return name
    cleaned = re.sub(r"[^A-Za-z0-9_.]", "_", name)
    if not cleaned or not (cleaned[0].isalpha() or cleaned[0] == "_") or cleaned.lower() in _RESERVED:
        cleaned = "_" + cleaned
    return cleaned


def _num(v: float) -> str:
    if v == INF:
        return "+inf"
    if v == -INF:
        return "-inf"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return format(float(v), ".17g")


def _terms(coeffs: Iterable[tuple[int, float]], names: list[str], per_line: int = 6) -> list[str]:
    out, line = [], []
    for j, c in coeffs:
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        tok = f"{sign} {names[j]}" if mag == 1 else f"{sign} {_num(mag)} {names[j]}"
        line.append(tok)
        if len(line) == per_line:
            out.append(" ".join(line))
            line = []
    if line:
        out.append(" ".join(line))
    return out


def write_lp(model: LinearModel, path: str | os.PathLike | None = None) -> str:
    """Serialise ``model`` to CPLEX-LP text.

    The dialect: one ``Minimize``/``Maximize`` section named ``obj``, a
    ``Subject To`` section with one named row per constraint (terms in
    ascending variable index, at most six per physical line), a ``Bounds``
    section listing every variable explicitly, a ``General`` section for
    integer variables and ``End``.  Numbers print as integers when exact and
    with 17 significant digits otherwise, so the text is reproducible
    bit-for-bit.
    """
    model.validate()
    names = [lp_name(v.name) for v in model.variables]
    if len(set(names)) != len(names):
        names = [f"x{j}" for j in range(len(names))]
    rnames = [lp_name(r.name) for r in model.constraints]
    if len(set(rnames)) != len(rnames):
        rnames = [f"r{i}" for i in range(len(rnames))]
    lines = [f"\\ {model.name}", "Maximize" if model.maximize else "Minimize"]
    obj = [(j, v.obj) for j, v in enumerate(model.variables) if v.obj != 0.0]
    body = _terms(obj, names) or [f"0 {names[0]}" if names else "0"]
    lines.append(" obj: " + body[0])
    lines.extend("   " + b for b in body[1:])
    lines.append("Subject To")
    for name, row in zip(rnames, model.constraints):
        terms = _terms(sorted(row.coeffs.items()), names) or [f"0 {names[0]}"]
        op = {"<=": "<=", ">=": ">=", "=": "="}[row.sense]
        terms[-1] = terms[-1] + f" {op} {_num(row.rhs)}"
        lines.append(f" {name}: " + terms[0])
        lines.extend("   " + t for t in terms[1:])
    lines.append("Bounds")
    for name, v in zip(names, model.variables):
        if v.lb == -INF and v.ub == INF:
            lines.append(f" {name} free")
        else:
            lines.append(f" {_num(v.lb)} <= {name} <= {_num(v.ub)}")
    ints = [name for name, v in zip(names, model.variables) if v.integer]
    if ints:
        lines.append("General")
        for i in range(0, len(ints), 8):
            lines.append(" " + " ".join(ints[i:i + 8]))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# Handles
# ---------------------------------------------------------------------------

class ModelHandle:
    """Stateful solve handle; subclasses own one backend model each."""

    def __init__(self, model: LinearModel):
        model.validate()
        self.model = model

    # Subclasses sync their backend state in these hooks.
    def add_rows(self, rows: Sequence[Constraint]) -> list[int]:
        first = self.model.num_constrs
        for r in rows:
            self.model.add_constr(r.coeffs, r.sense, r.rhs, r.name)
        return list(range(first, self.model.num_constrs))

    def add_columns(self, cols: Sequence[tuple[Variable, dict[int, float]]]) -> list[int]:
        idx = []
        for var, entries in cols:
            j = self.model.add_var(var.name, var.lb, var.ub, var.integer, var.obj)
            for i, c in entries.items():
                if c:
                    self.model.constraints[i].coeffs[j] = float(c)
            idx.append(j)
        return idx

    def set_rhs(self, i: int, rhs: float) -> None:
        self.model.constraints[i].rhs = float(rhs)

    def set_var_bounds(self, j: int, lb: float, ub: float) -> None:
        self.model.variables[j].lb = float(lb)
        self.model.variables[j].ub = float(ub)

    def set_obj(self, j: int, c: float) -> None:
        self.model.variables[j].obj = float(c)

    def solve(self, gap: float | None = None, time_limit: float | None = None,
              relax: bool = False, warm_start: Sequence[float] | None = None) -> SolveOutcome:
        raise NotImplementedError

    def add_rows_and_resolve(self, rows: Sequence[Constraint], **kw) -> SolveOutcome:
        self.add_rows(rows)
        return self.solve(**kw)


def _status_from_mip(objective: float, bound: float, requested_gap: float) -> Status:
    denom = max(abs(objective), 1e-10)
    if abs(objective - bound) / denom <= 1e-9 or abs(objective - bound) <= 1e-9:
        return Status.OPTIMAL
    return Status.FEASIBLE


class HighsHandle(ModelHandle):
    """In-process HiGHS handle with incremental edits."""

    def __init__(self, model: LinearModel, threads: int | None = None, seed: int = 0,
                 tight: bool = True):
        super().__init__(model)
        try:
            import highspy
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise SolverError("highspy is not installed") from exc
        self._hs = highspy
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("random_seed", int(seed))
        if threads:
            h.setOptionValue("threads", int(threads))
        if tight:
            h.setOptionValue("primal_feasibility_tolerance", 1e-9)
            h.setOptionValue("dual_feasibility_tolerance", 1e-9)
        h.setOptionValue("mip_feasibility_tolerance", 1e-9)
        self.h = h
        self._load()

    def _load(self) -> None:
        hs, m = self._hs, self.model
        lp = hs.HighsLp()
        n, nr = m.num_vars, m.num_constrs
        lp.num_col_ = n
        lp.num_row_ = nr
        lp.col_cost_ = np.array([v.obj for v in m.variables], dtype=float)
        lp.col_lower_ = np.array([v.lb for v in m.variables], dtype=float)
        lp.col_upper_ = np.array([v.ub for v in m.variables], dtype=float)
        lo = np.empty(nr)
        hi = np.empty(nr)
        starts, index, value = [0], [], []
        for i, r in enumerate(m.constraints):
            lo[i], hi[i] = r.bounds()
            for j, c in sorted(r.coeffs.items()):
                index.append(j)
                value.append(c)
            starts.append(len(index))
        lp.row_lower_ = lo
        lp.row_upper_ = hi
        lp.a_matrix_.format_ = hs.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = np.array(starts, dtype=np.int32)
        lp.a_matrix_.index_ = np.array(index, dtype=np.int32)
        lp.a_matrix_.value_ = np.array(value, dtype=float)
        lp.a_matrix_.num_col_ = n
        lp.a_matrix_.num_row_ = nr
        if m.is_mip():
            lp.integrality_ = [hs.HighsVarType.kInteger if v.integer else hs.HighsVarType.kContinuous
                               for v in m.variables]
        lp.sense_ = hs.ObjSense.kMaximize if m.maximize else hs.ObjSense.kMinimize
        self.h.passModel(lp)
        self._integral = m.is_mip()

    def add_rows(self, rows: Sequence[Constraint]) -> list[int]:
        idx = super().add_rows(rows)
        for i in idx:
            r = self.model.constraints[i]
            lo, hi = r.bounds()
            items = sorted(r.coeffs.items())
            self.h.addRow(lo, hi, len(items), np.array([j for j, _ in items], dtype=np.int32),
                          np.array([c for _, c in items], dtype=float))
        return idx

    def add_columns(self, cols: Sequence[tuple[Variable, dict[int, float]]]) -> list[int]:
        idx = super().add_columns(cols)
        for j, (var, entries) in zip(idx, cols):
            items = sorted((i, c) for i, c in entries.items() if c)
            self.h.addCol(var.obj, var.lb, var.ub, len(items),
                          np.array([i for i, _ in items], dtype=np.int32),
                          np.array([c for _, c in items], dtype=float))
            if var.integer:
                self.h.changeColIntegrality(j, self._hs.HighsVarType.kInteger)
                self._integral = True
        return idx

    def set_rhs(self, i: int, rhs: float) -> None:
        super().set_rhs(i, rhs)
        lo, hi = self.model.constraints[i].bounds()
        self.h.changeRowBounds(i, lo, hi)

    def set_var_bounds(self, j: int, lb: float, ub: float) -> None:
        super().set_var_bounds(j, lb, ub)
        self.h.changeColBounds(j, float(lb), float(ub))

    def set_obj(self, j: int, c: float) -> None:
        super().set_obj(j, c)
        self.h.changeColCost(j, float(c))

    def _set_integrality(self, integral: bool) -> None:
        if integral == self._integral:
            return
        hs = self._hs
        ints = [j for j, v in enumerate(self.model.variables) if v.integer]
        kind = hs.HighsVarType.kInteger if integral else hs.HighsVarType.kContinuous
        for j in ints:
            self.h.changeColIntegrality(j, kind)
        self._integral = integral

    def solve(self, gap: float | None = None, time_limit: float | None = None,
              relax: bool = False, warm_start: Sequence[float] | None = None) -> SolveOutcome:
        hs, h = self._hs, self.h
        mip = self.model.is_mip() and not relax
        self._set_integrality(mip)
        h.setOptionValue("time_limit", float(time_limit) if time_limit else INF)
        if mip:
            g = max(float(gap or 0.0), 0.0)
            h.setOptionValue("mip_rel_gap", g)
            h.setOptionValue("mip_abs_gap", 1e-7 if g < 1e-6 else 1e-6)
            if warm_start is not None:
                sol = hs.HighsSolution()
                sol.col_value = list(map(float, warm_start))
                sol.value_valid = True
                h.setSolution(sol)
        t0 = time.perf_counter()
        h.run()
        wall = time.perf_counter() - t0
        ms = h.getModelStatus()
        info = h.getInfo()
        M = hs.HighsModelStatus
        has_primal = info.primal_solution_status == 2
        if ms == M.kInfeasible:
            return SolveOutcome(Status.INFEASIBLE, wall_time=wall)
        if ms in (M.kUnbounded, M.kUnboundedOrInfeasible):
            return SolveOutcome(Status.UNBOUNDED, wall_time=wall)
        sol = h.getSolution()
        x = np.array(sol.col_value, dtype=float) if has_primal else None
        obj = float(info.objective_function_value) if has_primal else math.nan
        if ms == M.kOptimal:
            if mip:
                bound = float(info.mip_dual_bound)
                st = _status_from_mip(obj, bound, gap or 0.0)
                return SolveOutcome(st, x, None, obj, bound, wall)
            duals = np.array(sol.row_dual, dtype=float) if sol.dual_valid else None
            return SolveOutcome(Status.OPTIMAL, x, duals, obj, obj, wall)
        if ms in (M.kTimeLimit, M.kIterationLimit, M.kSolutionLimit, M.kInterrupt):
            bound = float(info.mip_dual_bound) if mip else math.nan
            return SolveOutcome(Status.LIMIT, x, None, obj, bound, wall)
        return SolveOutcome(Status.ERROR, x, None, obj, math.nan, wall,
                            message=h.modelStatusToString(ms))


class ExecHandle(ModelHandle):
    """Writes the model as LP text and runs an external solver process per solve."""

    def __init__(self, model: LinearModel, command: str | None = None, workdir: str | None = None):
        super().__init__(model)
        self.command = command or os.environ.get("HPTTP_LP_EXEC") or \
            f"{shlex.quote(sys.executable)} -m hpttp.lpexec"
        self.workdir = workdir

    def solve(self, gap: float | None = None, time_limit: float | None = None,
              relax: bool = False, warm_start: Sequence[float] | None = None) -> SolveOutcome:
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            lp_path = Path(tmp) / "model.lp"
            sol_path = Path(tmp) / "solution.json"
            write_lp(self.model, lp_path)
            cmd = shlex.split(self.command) + [str(lp_path), str(sol_path)]
            if gap is not None:
                cmd += ["--gap", repr(float(gap))]
            if time_limit:
                cmd += ["--time-limit", repr(float(time_limit))]
            if relax:
                cmd.append("--relax")
            t0 = time.perf_counter()
            proc = subprocess.run(cmd, capture_output=True, text=True)
            wall = time.perf_counter() - t0
            if proc.returncode != 0 or not sol_path.exists():
                raise SolverError(f"solver executable failed ({proc.returncode}): {proc.stderr.strip()}")
            data = json.loads(sol_path.read_text())
        return parse_solution(data, self.model, wall)


def parse_solution(data: dict, model: LinearModel, wall: float = 0.0) -> SolveOutcome:
    """Map a JSON solution document (names as written to the LP file) back onto ``model``."""
    status = Status(data["status"])
    if status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return SolveOutcome(status, wall_time=wall)
    names = [lp_name(v.name) for v in model.variables]
    if len(set(names)) != len(names):
        names = [f"x{j}" for j in range(len(names))]
    values = data.get("values") or {}
    x = np.array([float(values.get(nm, 0.0)) for nm in names]) if values else None
    duals = None
    if data.get("duals") is not None:
        rnames = [lp_name(r.name) for r in model.constraints]
        if len(set(rnames)) != len(rnames):
            rnames = [f"r{i}" for i in range(len(rnames))]
        duals = np.array([float(data["duals"].get(nm, 0.0)) for nm in rnames])
    bound = data.get("bound")
    return SolveOutcome(status, x, duals, float(data.get("objective", math.nan)),
                        float(bound) if bound is not None else math.nan, wall)


_SEED = 0


def set_seed(seed: int) -> None:
    """Random seed handed to every solver opened afterwards."""
    global _SEED
    _SEED = int(seed)


def open_handle(model: LinearModel, backend: str | None = None, threads: int | None = None,
                seed: int | None = None) -> ModelHandle:
    seed = _SEED if seed is None else seed
    backend = backend or os.environ.get("HPTTP_SOLVER", "highs")
    if backend == "highs":
        return HighsHandle(model, threads=threads, seed=seed)
    if backend == "lp-exec":
        return ExecHandle(model)
    raise SolverError(f"unknown solver backend {backend!r}")


def solve(model: LinearModel, gap: float | None = None, time_limit: float | None = None,
          warm_start: Sequence[float] | None = None, relax: bool = False,
          backend: str | None = None, threads: int | None = None) -> SolveOutcome:
    """One-shot solve of ``model``."""
    return open_handle(model.copy(), backend, threads).solve(
        gap=gap, time_limit=time_limit, relax=relax, warm_start=warm_start)
