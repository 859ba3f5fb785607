"""Picard iteration for the steady coupled system.

Each iteration assembles the frozen-velocity system, imposes the Dirichlet
data, solves it with a sparse LU factorisation and under-relaxes the update.
Iteration stops once the summed absolute nodal change of every field
(U, V, P, theta, C) is at most ``tol``. Element contributions are
accumulated in ascending element order, so repeated runs are bitwise
reproducible.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (FIELDS, BoundaryConditions, DimensionlessGroups, DiscreteSystem,
                       PicardAssembler, Sources, cavity_conditions, constrained_dofs)

log = logging.getLogger(__name__)


class SingularMatrix(RuntimeError):
    pass


class NotConverged(RuntimeError):
    def __init__(self, message, solution=None, stage=None):
        super().__init__(message)
        self.solution = solution
        self.stage = stage


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-5
    max_iters: int = 200
    relaxation: float = 0.7
    continuation_steps: int = 1
    anderson_depth: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be at least 1")
        if self.anderson_depth < 0:
            raise ValueError("anderson_depth must be non-negative")


@dataclass
class FieldSolution:
    U: np.ndarray
    V: np.ndarray
    P: np.ndarray
    theta: np.ndarray
    C: np.ndarray
    mesh: object
    groups: DimensionlessGroups
    bcs: BoundaryConditions
    converged: bool = False
    iterations: int = 0
    history: list = field(default_factory=list)      # per-iteration L1 changes
    rms_history: list = field(default_factory=list)  # per-iteration RMS changes

    def fields(self) -> dict:
        return {f: getattr(self, f) for f in FIELDS}

    @property
    def criterion(self) -> float:
        return max(self.history[-1].values()) if self.history else math.inf

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "dU", "dV", "dP", "dTheta", "dC"])
            for k, h in enumerate(self.history, start=1):
                w.writerow([k] + [f"{h[f]:.10e}" for f in FIELDS])


_PIVOT_RATIO = 1e-12   # pinned cavity systems sit near 1e-4, unpinned near 1e-16


def _factor(A):
    try:
        lu = spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrix(
            f"LU factorisation failed ({exc}); check the pressure pin and that every "
            "boundary edge is tagged") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() <= _PIVOT_RATIO * piv.max():
        raise SingularMatrix(
            f"numerically singular matrix (pivot ratio {piv.min() / piv.max():.1e}); "
            "the pressure may be unpinned or a boundary untagged")
    return lu


def _block_solver(A: sp.csr_matrix, dofs):
    """Exact solve exploiting the block lower-triangular structure: the
    transport rows do not couple to velocity or pressure unknowns, so
    theta and C are solved first and the flow block afterwards."""
    flow = np.arange(0, dofs.offsets["theta"])
    th = np.arange(dofs.offsets["theta"], dofs.offsets["C"])
    c = np.arange(dofs.offsets["C"], dofs.size)
    scalar_rows = A[dofs.offsets["theta"]:, :]
    if scalar_rows[:, flow].count_nonzero() or A[th][:, c].count_nonzero() \
            or A[c][:, th].count_nonzero():
        return None
    A_ff = A[flow][:, flow]
    A_fs = A[flow][:, dofs.offsets["theta"]:]
    lu_t, lu_c, lu_f = _factor(A[th][:, th]), _factor(A[c][:, c]), _factor(A_ff)

    def solve(b):
        x = np.empty_like(b)
        x[th] = lu_t.solve(b[th])
        x[c] = lu_c.solve(b[c])
        x[flow] = lu_f.solve(b[flow] - A_fs @ x[dofs.offsets["theta"]:])
        return x

    return solve


def solve_linear(system: DiscreteSystem, refine: int = 3) -> np.ndarray:
    """Sparse direct solve with a few steps of iterative refinement.

    Coupled Picard systems are solved by block forward substitution
    (transport first, then momentum/continuity); anything else falls back
    to a monolithic LU factorisation.
    """
    A = sp.csr_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float)
    if not b.any():
        return np.zeros_like(b)          # homogeneous data: x = 0 solves it exactly
    solve = None
    if system.dof_map is not None and system.dof_map.size == A.shape[0]:
        solve = _block_solver(A, system.dof_map)
    if solve is None:
        solve = _factor(A).solve
    x = solve(b)
    target = 1e-10 * (1.0 + np.linalg.norm(b))
    for _ in range(refine):
        r = b - A @ x
        if np.linalg.norm(r) <= target:
            break
        x += solve(r)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("non-finite solution; the pressure may be unpinned")
    return x


class _Constraints:
    def __init__(self, mesh, bcs, dofs):
        self.idx, self.vals = constrained_dofs(mesh, bcs, dofs)
        keep = np.ones(dofs.size)
        keep[self.idx] = 0.0
        self.keep = sp.diags(keep)
        self.on = sp.diags(1.0 - keep)
        self.keep_vec = keep

    def apply(self, system: DiscreteSystem) -> DiscreteSystem:
        A = (self.keep @ system.matrix + self.on).tocsr()
        b = system.rhs * self.keep_vec
        b[self.idx] = self.vals
        return DiscreteSystem(A, b, system.dof_map, self.idx, self.vals)


def initial_state(mesh, bcs: BoundaryConditions, dofs) -> dict:
    """Zero fields with the Dirichlet data written into constrained nodes."""
    idx, vals = constrained_dofs(mesh, bcs, dofs)
    x = np.zeros(dofs.size)
    x[idx] = vals
    return dofs.split(x)


def solve_steady(mesh, groups: DimensionlessGroups, options: SolverOptions | None = None,
                 bcs: BoundaryConditions | None = None, initial=None,
                 sources: Sources | None = None, assembler: PicardAssembler | None = None,
                 raise_on_failure: bool = True) -> FieldSolution:
    """Picard iteration to the summed-nodal-change criterion."""
    options = options or SolverOptions()
    bcs = bcs or cavity_conditions()
    asm = assembler or PicardAssembler(mesh, groups, sources)
    dofs = asm.dofs
    cons = _Constraints(mesh, bcs, dofs)
    if initial is None:
        state = initial_state(mesh, bcs, dofs)
    else:
        state = {f: np.array(v, dtype=float) for f, v in _as_fields(initial).items()}
        x0 = dofs.join(state)
        x0[cons.idx] = cons.vals
        state = dofs.split(x0)
    x = dofs.join(state)
    omega = options.relaxation
    mixer = _Anderson(options.anderson_depth, omega)
    sol = FieldSolution(**dofs.split(x), mesh=mesh, groups=groups, bcs=bcs)
    for it in range(1, options.max_iters + 1):
        system = cons.apply(asm.system(dofs.split(x)))
        x_star = solve_linear(system)
        x_new = mixer.update(x, x_star - x)
        x_new[cons.idx] = cons.vals
        dx = x_new - x
        x = x_new
        sol.history.append({f: float(np.abs(dx[dofs.slice(f)]).sum()) for f in FIELDS})
        sol.rms_history.append({f: float(np.sqrt(np.mean(dx[dofs.slice(f)] ** 2)))
                                for f in FIELDS})
        sol.iterations = it
        crit = max(sol.history[-1].values())
        log.debug("picard %d: %s", it, sol.history[-1])
        if crit <= options.tol:
            sol.converged = True
            break
        if not math.isfinite(crit) or crit > 1e12:
            break
    for f, v in dofs.split(x).items():
        setattr(sol, f, v)
    if not sol.converged and raise_on_failure:
        raise NotConverged(f"Picard iteration stopped after {sol.iterations} iterations "
                           f"with criterion {sol.criterion:.3e}", solution=sol)
    return sol


class _Anderson:
    """Anderson mixing of the Picard map. Depth 0 is plain under-relaxation
    ``x + omega * (G(x) - x)``; larger depths add a least-squares
    combination of the last ``depth`` update differences."""

    def __init__(self, depth: int, omega: float):
        self.depth = depth
        self.omega = omega
        self.xs: list = []
        self.fs: list = []

    def update(self, x: np.ndarray, f: np.ndarray) -> np.ndarray:
        if self.depth == 0:
            return x + self.omega * f
        self.xs = (self.xs + [x.copy()])[-(self.depth + 1):]
        self.fs = (self.fs + [f.copy()])[-(self.depth + 1):]
        if len(self.fs) < 2:
            return x + self.omega * f
        dF = np.diff(np.array(self.fs), axis=0).T
        dX = np.diff(np.array(self.xs), axis=0).T
        gamma = np.linalg.lstsq(dF, f, rcond=None)[0]
        return x + self.omega * f - (dX + self.omega * dF) @ gamma


def _as_fields(state) -> dict:
    if isinstance(state, dict):
        return state
    return state.fields()


def continuation_schedule(groups: DimensionlessGroups, steps: int) -> list[DimensionlessGroups]:
    """Geometric ramp of Ri and Ha from min(target, 1) to the target."""
    def ramp(target, t):
        if target == 0:
            return 0.0
        start = math.copysign(min(abs(target), 1.0), target)
        return start * (target / start) ** t

    out = []
    for k in range(1, steps + 1):
        t = k / steps
        out.append(groups.replace(Ri=ramp(groups.Ri, t), Ha=ramp(groups.Ha, t)))
    out[-1] = groups
    return out


def continuation_solve(mesh, groups: DimensionlessGroups, options: SolverOptions | None = None,
                       bcs: BoundaryConditions | None = None, initial=None,
                       sources: Sources | None = None) -> FieldSolution:
    """Solve along a parameter ramp, warm-starting each stage."""
    options = options or SolverOptions()
    state = initial
    ctx = None
    sol = None
    for k, stage in enumerate(continuation_schedule(groups, options.continuation_steps)):
        asm = PicardAssembler(mesh, stage, sources, ctx)
        ctx = asm.ctx
        try:
            sol = solve_steady(mesh, stage, options, bcs, state, sources, asm)
        except NotConverged as exc:
            raise NotConverged(f"continuation stage {k + 1} (Ri={stage.Ri:g}, Ha={stage.Ha:g}) "
                               f"failed: {exc}", solution=exc.solution, stage=k + 1) from exc
        state = sol
    return sol
