"""Manufactured solutions for order-of-accuracy checks.

A manufactured field supplies its value, gradient and Laplacian; the
volumetric sources that make it an exact solution of the steady coupled
equations are formed from those. Meshes are uniform structured squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import (BoundaryConditions, DimensionlessGroups, DirichletRule, FEContext,
                       PicardAssembler, Sources)
from .geometry import BoundaryTag
from .mesh import structured_rectangle_mesh
from .solver import SolverOptions, solve_steady

pi = math.pi


@dataclass(frozen=True)
class Field:
    value: Callable
    grad: Callable       # (x, y) -> (fx, fy)
    lap: Callable


@dataclass(frozen=True)
class ManufacturedSolution:
    U: Field
    V: Field
    P: Field
    theta: Field
    C: Field

    def sources(self, g: DimensionlessGroups) -> Sources:
        U, V, P, T, C = self.U, self.V, self.P, self.theta, self.C

        def adv(f, x, y):
            fx, fy = f.grad(x, y)
            return U.value(x, y) * fx + V.value(x, y) * fy

        def mass(x, y):
            return U.grad(x, y)[0] + V.grad(x, y)[1]

        def f_u(x, y):
            return adv(U, x, y) - g.viscosity * U.lap(x, y) + P.grad(x, y)[0]

        def f_v(x, y):
            return (adv(V, x, y) - g.viscosity * V.lap(x, y) + P.grad(x, y)[1]
                    + g.lorentz * V.value(x, y)
                    - g.Ri * (T.value(x, y) + g.Br * C.value(x, y)))

        def f_t(x, y):
            return adv(T, x, y) - g.thermal_diffusivity * T.lap(x, y)

        def f_c(x, y):
            return adv(C, x, y) - g.species_diffusivity * C.lap(x, y)

        return Sources(U=f_u, V=f_v, theta=f_t, C=f_c, mass=mass)

    def conditions(self) -> BoundaryConditions:
        vals = {"U": self.U.value, "V": self.V.value,
                "theta": self.theta.value, "C": self.C.value}
        T = BoundaryTag
        rules = tuple(DirichletRule(t, vals)
                      for t in (T.BottomAdiabatic, T.RightWall, T.Lid, T.LeftWall))
        return BoundaryConditions(rules, pressure_pin=(0.0, 0.0),
                                  pressure_value=self.P.value)


def smooth_solution() -> ManufacturedSolution:
    """Divergence-free trigonometric velocity with smooth P, theta, C."""
    s, c = np.sin, np.cos
    U = Field(lambda x, y: s(pi * x) * c(pi * y),
              lambda x, y: (pi * c(pi * x) * c(pi * y), -pi * s(pi * x) * s(pi * y)),
              lambda x, y: -2 * pi**2 * s(pi * x) * c(pi * y))
    V = Field(lambda x, y: -c(pi * x) * s(pi * y),
              lambda x, y: (pi * s(pi * x) * s(pi * y), -pi * c(pi * x) * c(pi * y)),
              lambda x, y: 2 * pi**2 * c(pi * x) * s(pi * y))
    P = Field(lambda x, y: c(pi * x) * c(pi * y),
              lambda x, y: (-pi * s(pi * x) * c(pi * y), -pi * c(pi * x) * s(pi * y)),
              lambda x, y: -2 * pi**2 * c(pi * x) * c(pi * y))
    T = Field(lambda x, y: x * y + s(pi * x) * s(pi * y),
              lambda x, y: (y + pi * c(pi * x) * s(pi * y), x + pi * s(pi * x) * c(pi * y)),
              lambda x, y: -2 * pi**2 * s(pi * x) * s(pi * y))
    C = Field(lambda x, y: c(pi * x) * y**2,
              lambda x, y: (-pi * s(pi * x) * y**2, 2 * y * c(pi * x)),
              lambda x, y: -pi**2 * c(pi * x) * y**2 + 2 * c(pi * x))
    return ManufacturedSolution(U, V, P, T, C)


def linear_solution() -> ManufacturedSolution:
    """Linear velocity, constant pressure, linear scalars: representable
    exactly by the discrete spaces."""
    zero = lambda x, y: 0.0 * x  # noqa: E731
    U = Field(lambda x, y: x + 0.5 * y, lambda x, y: (1.0 + 0 * x, 0.5 + 0 * x), zero)
    V = Field(lambda x, y: 0.25 * x - y, lambda x, y: (0.25 + 0 * x, -1.0 + 0 * x), zero)
    P = Field(lambda x, y: 0.3 + 0 * x, lambda x, y: (0 * x, 0 * x), zero)
    T = Field(lambda x, y: 1.0 - x + 0.5 * y, lambda x, y: (-1.0 + 0 * x, 0.5 + 0 * x), zero)
    C = Field(lambda x, y: 0.2 + 0.7 * y, lambda x, y: (0 * x, 0.7 + 0 * x), zero)
    return ManufacturedSolution(U, V, P, T, C)


DEFAULT_GROUPS = DimensionlessGroups(Re=10.0, Pr=1.0, Ri=1.0, Ha=2.0, Br=0.5, Le=1.0)


def l2_errors(solution, exact: ManufacturedSolution, ctx: FEContext | None = None) -> dict:
    """L2 norms of the error of each field, integrated with the element rule."""
    ctx = ctx or FEContext(solution.mesh)
    x, y = ctx.xq[..., 0], ctx.xq[..., 1]
    out = {}
    for name in ("U", "V", "P", "theta", "C"):
        vals = np.asarray(getattr(solution, name))
        approx = ctx.interpolate(vals, p1=(name == "P"))
        err = approx - getattr(exact, name).value(x, y)
        out[name] = math.sqrt(float(np.sum(ctx.wdet * err**2)))
    return out


def solve_manufactured(n: int, exact: ManufacturedSolution | None = None,
                       groups: DimensionlessGroups = DEFAULT_GROUPS,
                       options: SolverOptions | None = None):
    """Solve on an ``n x n`` structured unit square; returns (solution, errors)."""
    exact = exact or smooth_solution()
    mesh = structured_rectangle_mesh(n, n)
    asm = PicardAssembler(mesh, groups, exact.sources(groups))
    opts = options or SolverOptions(tol=1e-9, relaxation=1.0, max_iters=100)
    sol = solve_steady(mesh, groups, opts, exact.conditions(), assembler=asm,
                       sources=asm.sources)
    return sol, l2_errors(sol, exact, asm.ctx)


def observed_orders(h, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    h, e = np.log(np.asarray(h, float)), np.log(np.asarray(errors, float))
    return float(np.polyfit(h, e, 1)[0])


def convergence_table(n_levels: int = 3, coarsest: int = 4,
                      exact: ManufacturedSolution | None = None,
                      groups: DimensionlessGroups = DEFAULT_GROUPS) -> dict:
    """Errors per level and fitted orders over ``n_levels`` uniform refinements.

    Returns ``{"h": [...], "errors": {field: [...]}, "orders": {field: p}}``.
    """
    if n_levels < 3:
        raise ValueError("at least 3 levels are needed to fit an order")
    hs, errs = [], {f: [] for f in ("U", "V", "P", "theta", "C")}
    for k in range(n_levels):
        n = coarsest * 2**k
        _, e = solve_manufactured(n, exact, groups)
        hs.append(1.0 / n)
        for f in errs:
            errs[f].append(e[f])
    orders = {f: observed_orders(hs, v) for f, v in errs.items()}
    orders["velocity"] = observed_orders(
        hs, [math.hypot(a, b) for a, b in zip(errs["U"], errs["V"])])
    return {"h": hs, "errors": errs, "orders": orders}
