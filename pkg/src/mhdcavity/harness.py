"""Batch drivers: single cases, parameter sweeps, grid studies and the
validation suite."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assembly import (DimensionlessGroups, cavity_conditions,
                       triangular_cavity_conditions)
from .config import CaseConfig
from .geometry import BoundaryTag, rectangle_domain, triangular_cavity_geometry
from .mesh import generate_mesh, grid_sequence
from .mms import convergence_table
from .postprocess import (divergence_norm, export_fields, heat_flux_balance, nusselt_report,
                          profile_extremum, scalar_overshoot, stream_function)
from .solver import NotConverged, SolverOptions, continuation_solve, solve_steady

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("Ri", "Ha", "Br", "Nu_avg_left", "Nu_avg_right", "Nu_avg_obstacle",
                 "converged")

# Average Nusselt number on the hot inclined wall of the validation cavity
# (Pr = 0.71, Re = 100, Ha = 0), keyed by Ri.
TRIANGLE_REFERENCE = {0.01: 30.258, 0.1: 27.687, 1.0: 12.323, 10.0: 11.029}
TRIANGLE_TOLERANCE = 0.10

# Re = 100 lid-driven square cavity centerline extrema, Richardson-extrapolated
# from a finite-difference streamfunction-vorticity solver on 64^2 and 128^2
# grids (tests/oracles/lid_driven_fd.py).
LID_DRIVEN_REFERENCE = {"u_min": -0.214056, "v_max": 0.179587, "v_min": -0.253818}
LID_DRIVEN_TOLERANCE = 0.02

MMS_EXPECTED = {"velocity": 3.0, "P": 2.0, "theta": 3.0, "C": 3.0}
MMS_TOLERANCE = 0.3


@dataclass
class CaseResult:
    solution: object
    report: object
    files: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(self.solution.converged)

    def nusselt_summary(self) -> dict:
        return {tag: self.report.averages.get(tag, math.nan) for tag in
                (BoundaryTag.HeaterLeft, BoundaryTag.HeaterRight, BoundaryTag.Obstacle)}


def build_case_mesh(config: CaseConfig):
    m = config.mesh
    return generate_mesh(config.geometry, m.h_interior, m.h_boundary, m.grading_ratio)


def case_conditions(config: CaseConfig):
    return triangular_cavity_conditions() if config.kind == "triangle" else cavity_conditions()


def _solve(config: CaseConfig, mesh, initial=None):
    """Continuation solve that hands back the partial solution on failure."""
    bcs = case_conditions(config)
    try:
        if initial is not None:
            return solve_steady(mesh, config.groups, config.solver, bcs, initial)
        return continuation_solve(mesh, config.groups, config.solver, bcs)
    except NotConverged as exc:
        log.warning("%s", exc)
        return exc.solution


def run_case(config: CaseConfig, out_dir=None, write: bool = True, mesh=None) -> CaseResult:
    """Mesh, solve (with continuation) and post-process one case.

    Artifacts written to ``out_dir`` (default: the config's output directory):
    ``<prefix>.vtk``, ``<prefix>_history.csv``, ``<prefix>_nusselt.csv`` and
    ``<prefix>_nusselt_summary.csv``.
    """
    mesh = mesh or build_case_mesh(config)
    sol = _solve(config, mesh)
    report = nusselt_report(sol)
    result = CaseResult(sol, report)
    if write:
        out = Path(out_dir or config.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        pre = config.output.prefix
        if config.output.vtk:
            path = out / f"{pre}.vtk"
            export_fields(sol, stream_function(sol), path)
            result.files["vtk"] = path
        if config.output.csv:
            result.files["history"] = out / f"{pre}_history.csv"
            sol.write_history(result.files["history"])
            result.files["nusselt"] = out / f"{pre}_nusselt.csv"
            report.write_traces(result.files["nusselt"])
            result.files["summary"] = out / f"{pre}_nusselt_summary.csv"
            report.write_summary(result.files["summary"])
    return result


# -- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    ri: tuple
    ha: tuple
    br: tuple

    def __post_init__(self):
        for name in ("ri", "ha", "br"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"sweep list {name} is empty")
            object.__setattr__(self, name, tuple(sorted(set(vals))))
        if any(v < 0 for v in self.ri + self.ha + self.br):
            raise ValueError("sweep values must be non-negative")

    @classmethod
    def log_spaced_ri(cls, n: int, ha, br) -> "SweepSpec":
        return cls(tuple(np.round(np.geomspace(0.01, 10.0, n), 6)), tuple(ha), tuple(br))


def _sweep_chain(args):
    """All Ri values of one (Ha, Br) pair, warm-started in ascending Ri."""
    config, ha, br, ris = args
    mesh = build_case_mesh(config)
    rows, state = [], None
    for ri in ris:
        case = config.with_groups(Ri=ri, Ha=ha, Br=br)
        sol = _solve(case, mesh, state)
        if not sol.converged and state is not None:
            sol = _solve(case, mesh)              # retry from scratch
        nu = CaseResult(sol, nusselt_report(sol)).nusselt_summary()
        rows.append({"Ri": ri, "Ha": ha, "Br": br,
                     "Nu_avg_left": nu[BoundaryTag.HeaterLeft],
                     "Nu_avg_right": nu[BoundaryTag.HeaterRight],
                     "Nu_avg_obstacle": nu[BoundaryTag.Obstacle],
                     "converged": bool(sol.converged)})
        if sol.converged:
            state = sol
    return rows


def run_sweep(config: CaseConfig, spec: SweepSpec, workers: int = 1, path=None) -> list[dict]:
    """One row per (Ri, Ha, Br) tuple sorted by (Ri, Ha, Br). Failed cases are
    kept with ``converged = False`` and the Nusselt numbers of their last
    iterate."""
    jobs = [(config, ha, br, spec.ri) for ha in spec.ha for br in spec.br]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_sweep_chain, jobs))
    else:
        chunks = [_sweep_chain(j) for j in jobs]
    rows = sorted((r for c in chunks for r in c), key=lambda r: (r["Ri"], r["Ha"], r["Br"]))
    if path is not None:
        write_sweep_csv(rows, path)
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v == "True" if k == "converged" else float(v)) for k, v in r.items()}
            for r in rows]


def _fmt(v):
    if isinstance(v, bool):
        return str(v)
    return f"{v:.10g}"


# -- grid study ---------------------------------------------------------------

def run_grid_study(config: CaseConfig, n_levels: int = 6, path=None, coarsest_h: float = 0.4,
                   finest_h: float = 0.05) -> dict:
    """Average heater Nusselt numbers on a sequence of refined meshes.

    Returns ``{"rows": [...], "relative_change": {"left": .., "right": ..},
    "converged": [...]}``; the change is between the two finest levels.
    """
    if n_levels < 3:
        raise ValueError("a grid study needs at least 3 levels")
    meshes = grid_sequence(config.geometry, n_levels, coarsest_h, finest_h,
                           boundary_ratio=config.mesh.h_boundary / config.mesh.h_interior,
                           grading_ratio=config.mesh.grading_ratio)
    rows, flags = [], []
    for mesh in meshes:
        sol = _solve(config, mesh)
        nu = CaseResult(sol, nusselt_report(sol)).nusselt_summary()
        rows.append({"element_count": mesh.n_triangles,
                     "Nu_avg_left": nu[BoundaryTag.HeaterLeft],
                     "Nu_avg_right": nu[BoundaryTag.HeaterRight]})
        flags.append(bool(sol.converged))
    a, b = rows[-2], rows[-1]
    change = {side: abs(b[f"Nu_avg_{side}"] - a[f"Nu_avg_{side}"]) / abs(b[f"Nu_avg_{side}"])
              for side in ("left", "right")}
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element_count", "Nu_avg_left", "Nu_avg_right"])
            for r in rows:
                w.writerow([r["element_count"], _fmt(r["Nu_avg_left"]),
                            _fmt(r["Nu_avg_right"])])
    return {"rows": rows, "relative_change": change, "converged": flags}


# -- validation ---------------------------------------------------------------

@dataclass
class Check:
    suite: str
    name: str
    target: float
    obtained: float
    tolerance: float
    relative: bool = True
    detail: str = ""

    @property
    def error(self) -> float:
        err = abs(self.obtained - self.target)
        return err / abs(self.target) if self.relative else err

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.obtained)) and self.error <= self.tolerance

    def line(self) -> str:
        kind = "rel" if self.relative else "abs"
        return (f"{'PASS' if self.passed else 'FAIL'} {self.suite}/{self.name}: target "
                f"{self.target:.6g}, obtained {self.obtained:.6g}, {kind} error "
                f"{self.error:.3g} (tolerance {self.tolerance:g})"
                + (f" [{self.detail}]" if self.detail else ""))


def triangle_suite(h_interior: float = 0.05, h_boundary: float = 0.0075,
                   ri_values=tuple(TRIANGLE_REFERENCE)) -> list[Check]:
    """Average Nu on the hot wall of the sliding-wall right triangle."""
    mesh = generate_mesh(triangular_cavity_geometry(), h_interior, h_boundary)
    opts = SolverOptions(max_iters=300)
    checks = []
    for ri in ri_values:
        g = DimensionlessGroups(Re=100.0, Pr=0.71, Ri=ri, Ha=0.0, Br=0.0, Le=1.0)
        try:
            sol = solve_steady(mesh, g, opts, triangular_cavity_conditions())
            nu = nusselt_report(sol).averages[BoundaryTag.HeatedWall]
        except NotConverged:
            nu = math.nan
        checks.append(Check("triangle", f"Ri={ri:g} Nu_avg", TRIANGLE_REFERENCE[ri], nu,
                            TRIANGLE_TOLERANCE))
    return checks


def lid_driven_extrema(h_interior: float = 0.05, h_boundary: float = 0.02) -> dict:
    mesh = generate_mesh(rectangle_domain(), h_interior, h_boundary)
    g = DimensionlessGroups(Re=100.0, Pr=0.71, Ri=0.0, Ha=0.0, Br=0.0, Le=1.0)
    sol = solve_steady(mesh, g, SolverOptions(), cavity_conditions())
    u_min, tu = profile_extremum(mesh, sol.U, (0.5, 0.0), (0.5, 1.0), "min")
    v_max, _ = profile_extremum(mesh, sol.V, (0.0, 0.5), (1.0, 0.5), "max")
    v_min, _ = profile_extremum(mesh, sol.V, (0.0, 0.5), (1.0, 0.5), "min")
    return {"u_min": u_min, "y_u_min": tu, "v_max": v_max, "v_min": v_min,
            "solution": sol}


def lid_driven_suite(**kw) -> list[Check]:
    ext = lid_driven_extrema(**kw)
    return [Check("lid-driven", key, LID_DRIVEN_REFERENCE[key], ext[key], LID_DRIVEN_TOLERANCE)
            for key in ("u_min", "v_max", "v_min")]


def run_mms(n_levels: int = 3, coarsest: int = 4) -> dict:
    """Convergence table of the manufactured solution plus order checks."""
    table = convergence_table(n_levels, coarsest)
    table["checks"] = [Check("mms", f"{name} order", p, table["orders"][name], MMS_TOLERANCE,
                             relative=False) for name, p in MMS_EXPECTED.items()]
    return table


def _increases(values) -> int:
    return sum(b >= a for a, b in zip(values, values[1:]))


def invariant_suite(config: CaseConfig | None = None,
                    h_levels=(0.1, 0.07, 0.05)) -> list[Check]:
    """Discrete invariants over a refinement sequence of the default cavity.

    The lid is held at rest so that the boundary data is continuous: with a
    moving lid the velocity jumps at the two top corners, its gradient is not
    square integrable and the divergence norm stays O(1) on every mesh.
    """
    if config is None:
        config = CaseConfig(DimensionlessGroups(Re=100.0, Pr=7.0, Ri=0.1, Ha=50.0,
                                                Br=20.0, Le=20.0),
                            solver=SolverOptions(relaxation=0.5, anderson_depth=5,
                                                 max_iters=300))
    bcs = cavity_conditions(lid_speed=0.0)
    sols = []
    for h in h_levels:
        mesh = generate_mesh(config.geometry, h, 0.4 * h, config.mesh.grading_ratio)
        sols.append(solve_steady(mesh, config.groups, config.solver, bcs,
                                 raise_on_failure=False))
    div = [divergence_norm(s) for s in sols]
    flux = [heat_flux_balance(s)["residual"] for s in sols]
    over = max(max(scalar_overshoot(s).values()) for s in sols)
    finest = sols[-1]
    again = solve_steady(finest.mesh, config.groups, replace(config.solver, max_iters=1), bcs,
                         initial=finest, raise_on_failure=False)
    null = solve_steady(sols[0].mesh, config.groups, config.solver,
                        cavity_conditions(lid_speed=0.0, hot=0.0), raise_on_failure=False)
    counts = ", ".join(str(len(s.mesh.triangles)) for s in sols)
    ok = all(s.converged for s in sols)
    return [
        Check("invariants", "divergence norm non-decreasing steps", 0.0,
              _increases(div) if ok else math.nan, 0.0, relative=False,
              detail=f"elements {counts}; norms " + ", ".join(f"{d:.4g}" for d in div)),
        Check("invariants", "theta/C overshoot", 0.0, over, 0.02, relative=False),
        Check("invariants", "heat-flux residual non-decreasing steps", 0.0,
              _increases(flux) if ok else math.nan, 0.0, relative=False,
              detail="residuals " + ", ".join(f"{r:.4g}" for r in flux)),
        Check("invariants", "fixed-point criterion", 0.0, max(again.history[0].values()),
              config.solver.tol, relative=False),
        Check("invariants", "null-test iterations", 1.0,
              null.iterations if null.converged else math.nan, 0.0, relative=False),
    ]


def run_validation(suites=("triangle", "lid-driven", "mms", "invariants")) -> list[Check]:
    checks = []
    if "triangle" in suites:
        checks += triangle_suite()
    if "lid-driven" in suites:
        checks += lid_driven_suite()
    if "mms" in suites:
        checks += run_mms(3)["checks"]
    if "invariants" in suites:
        checks += invariant_suite()
    return checks


def with_solver(config: CaseConfig, **kw) -> CaseConfig:
    return replace(config, solver=replace(config.solver, **kw))
