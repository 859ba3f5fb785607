"""Galerkin mixed finite-element discretisation of the dimensionless
MHD Boussinesq system with heat and species transport.

Unknowns: quadratic (P2) U, V, theta, C and linear (P1) pressure on the same
triangles (Taylor-Hood). Curved heater edges use the isoparametric P2 map.
The Picard linearisation freezes the transporting velocity; buoyancy
Ri (theta + Br C) and the Lorentz damping (Ha^2/Re) V act in the V-momentum
rows only.

Global ordering is ``[U | V | P | theta | C]`` with U, V, theta and C
indexed by quadratic node and P by mesh vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from .geometry import BoundaryTag

FIELDS = ("U", "V", "P", "theta", "C")


class DimensionMismatch(ValueError):
    pass


class UntaggedBoundary(ValueError):
    pass


@dataclass(frozen=True)
class DimensionlessGroups:
    Re: float = 100.0
    Pr: float = 7.0
    Ri: float = 1.0
    Ha: float = 0.0
    Br: float = 0.0
    Le: float = 20.0

    def __post_init__(self):
        for name in ("Re", "Pr", "Le"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.Ha >= 0:
            raise ValueError("Ha must be non-negative")
        for name in ("Ri", "Br"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def replace(self, **kw) -> "DimensionlessGroups":
        return replace(self, **kw)

    @property
    def viscosity(self) -> float:
        return 1.0 / self.Re

    @property
    def thermal_diffusivity(self) -> float:
        return 1.0 / (self.Pr * self.Re)

    @property
    def species_diffusivity(self) -> float:
        return 1.0 / (self.Le * self.Pr * self.Re)

    @property
    def lorentz(self) -> float:
        return self.Ha ** 2 / self.Re


def nondimensionalize(rho, mu, k, c_p, D, g, beta_T, beta_C, sigma, B0, u0, L,
                      T_H, T_L, C_H, C_L) -> DimensionlessGroups:
    """Dimensionless groups from dimensional fluid and forcing properties."""
    for name, value in (("rho", rho), ("mu", mu), ("k", k), ("c_p", c_p),
                        ("D", D), ("u0", u0), ("L", L), ("beta_T", beta_T)):
        if value == 0:
            raise ZeroDivisionError(f"{name} must be nonzero")
    if not T_H > T_L:
        raise ValueError("T_H must exceed T_L")
    if not C_H >= C_L:
        raise ValueError("C_H must not be below C_L")
    nu = mu / rho
    alpha = k / (rho * c_p)
    return DimensionlessGroups(
        Re=L * u0 * rho / mu,
        Pr=nu / alpha,
        Le=alpha / D,
        Ri=g * beta_T * (T_H - T_L) * L / u0 ** 2,
        Ha=B0 * L * math.sqrt(sigma / mu),
        Br=beta_C * (C_H - C_L) / (beta_T * (T_H - T_L)),
    )


# -- reference element -----------------------------------------------------

def triangle_quadrature(degree: int):
    """Collapsed Gauss rule on the reference triangle (0,0),(1,0),(0,1),
    exact for polynomials of total degree ``degree``."""
    n = max(1, math.ceil((degree + 1) / 2))
    a, wa = roots_jacobi(n, 1.0, 0.0)     # weight (1 - a) absorbs the Duffy Jacobian
    b, wb = roots_legendre(n)
    u = 0.5 * (1.0 + a)
    v = 0.5 * (1.0 + b)
    U, Vv = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wa, wb) * 0.125
    xi = U.ravel()
    eta = (Vv * (1.0 - U)).ravel()
    return np.column_stack([xi, eta]), W.ravel()


def p2_basis(xi: np.ndarray):
    """Values (Q, 6) and reference gradients (Q, 6, 2) of the P2 basis."""
    x, y = xi[:, 0], xi[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    val = np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                           4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0])
    g0 = np.array([-1.0, -1.0])
    g1 = np.array([1.0, 0.0])
    g2 = np.array([0.0, 1.0])
    L = (l0[:, None], l1[:, None], l2[:, None])
    grad = np.stack([
        (4 * L[0] - 1) * g0, (4 * L[1] - 1) * g1, (4 * L[2] - 1) * g2,
        4 * (L[0] * g1 + L[1] * g0), 4 * (L[1] * g2 + L[2] * g1),
        4 * (L[2] * g0 + L[0] * g2),
    ], axis=1)
    return val, grad


def p1_basis(xi: np.ndarray):
    x, y = xi[:, 0], xi[:, 1]
    val = np.column_stack([1.0 - x - y, x, y])
    grad = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
                           (len(xi), 3, 2))
    return val, grad


def isoparametric(cell_nodes: np.ndarray, dphi: np.ndarray):
    """Jacobian determinants (E, Q) and physical P2 gradients (E, Q, 6, 2)."""
    J = np.einsum("eka,qkb->eqab", cell_nodes, dphi)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    grad = np.einsum("eqba,qkb->eqka", inv, dphi)
    return det, grad, inv


class FEContext:
    """Per-mesh quadrature data and sparsity patterns."""

    def __init__(self, mesh, degree: int = 5):
        self.mesh = mesh
        self.xi, self.w = triangle_quadrature(degree)
        self.phi2, dphi2 = p2_basis(self.xi)
        self.phi1, dphi1 = p1_basis(self.xi)
        cells = mesh.cells
        X = mesh.nodes[cells]
        det, self.grad2, inv = isoparametric(X, dphi2)
        if (det <= 0).any():
            raise DimensionMismatch("non-positive isoparametric Jacobian")
        self.wdet = det * self.w
        self.grad1 = np.einsum("eqba,qkb->eqka", inv, dphi1)
        self.xq = np.einsum("qk,eka->eqa", self.phi2, X)
        self.cells = cells
        self.tris = mesh.triangles
        self.n2 = mesh.n_nodes
        self.n1 = mesh.n_vertices

    # sparsity: element entry -> CSR data slot
    def _pattern(self, rows_cells, cols_cells, shape):
        r = np.repeat(rows_cells, cols_cells.shape[1], axis=1).ravel()
        c = np.tile(cols_cells, (1, rows_cells.shape[1])).ravel()
        # row-major sorted unique keys are exactly the CSR slot order
        keys, slots = np.unique(r.astype(np.int64) * shape[1] + c, return_inverse=True)
        indptr = np.searchsorted(keys // shape[1], np.arange(shape[0] + 1))
        return indptr, (keys % shape[1]).astype(np.int32), slots.ravel()

    @cached_property
    def pattern22(self):
        return self._pattern(self.cells, self.cells, (self.n2, self.n2))

    @cached_property
    def pattern12(self):
        return self._pattern(self.tris, self.cells, (self.n1, self.n2))

    def assemble22(self, Ke: np.ndarray) -> sp.csr_matrix:
        indptr, indices, slots = self.pattern22
        data = np.bincount(slots, weights=Ke.ravel(), minlength=len(indices))
        return sp.csr_matrix((data, indices, indptr), shape=(self.n2, self.n2))

    def assemble12(self, Ke: np.ndarray) -> sp.csr_matrix:
        indptr, indices, slots = self.pattern12
        data = np.bincount(slots, weights=Ke.ravel(), minlength=len(indices))
        return sp.csr_matrix((data, indices, indptr), shape=(self.n1, self.n2))

    def load2(self, f_q: np.ndarray) -> np.ndarray:
        """Load vector int f phi_i for values ``f_q`` (E, Q) at quadrature points."""
        be = np.einsum("eq,qi->ei", self.wdet * f_q, self.phi2)
        return np.bincount(self.cells.ravel(), weights=be.ravel(), minlength=self.n2)

    def load1(self, f_q: np.ndarray) -> np.ndarray:
        be = np.einsum("eq,qi->ei", self.wdet * f_q, self.phi1)
        return np.bincount(self.tris.ravel(), weights=be.ravel(), minlength=self.n1)

    # static element matrices
    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        Ke = np.einsum("eq,eqia,eqja->eij", self.wdet, self.grad2, self.grad2)
        return self.assemble22(Ke)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        Me = np.einsum("eq,qi,qj->eij", self.wdet, self.phi2, self.phi2)
        return self.assemble22(Me)

    @cached_property
    def divergence(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """(Dx, Dy) with Dx[i, j] = int psi_i d(phi_j)/dx."""
        Dx = np.einsum("eq,qi,eqj->eij", self.wdet, self.phi1, self.grad2[..., 0])
        Dy = np.einsum("eq,qi,eqj->eij", self.wdet, self.phi1, self.grad2[..., 1])
        return self.assemble12(Dx), self.assemble12(Dy)

    def advection(self, U: np.ndarray, V: np.ndarray) -> sp.csr_matrix:
        """N[i, j] = int (w . grad phi_j) phi_i for the P2 velocity w = (U, V)."""
        wx = self.phi2 @ U[self.cells].T          # (Q, E)
        wy = self.phi2 @ V[self.cells].T
        conv = (wx.T[..., None] * self.grad2[..., 0]
                + wy.T[..., None] * self.grad2[..., 1])          # (E, Q, 6)
        Ne = np.einsum("eq,qi,eqj->eij", self.wdet, self.phi2, conv)
        return self.assemble22(Ne)

    def interpolate(self, values: np.ndarray, p1: bool = False) -> np.ndarray:
        """Field values (E, Q) at quadrature points."""
        if p1:
            return values[self.tris] @ self.phi1.T
        return values[self.cells] @ self.phi2.T


# -- dof bookkeeping -----------------------------------------------------------

@dataclass(frozen=True)
class DofMap:
    n2: int
    n1: int

    @property
    def offsets(self) -> dict[str, int]:
        n2, n1 = self.n2, self.n1
        return {"U": 0, "V": n2, "P": 2 * n2, "theta": 2 * n2 + n1, "C": 3 * n2 + n1}

    @property
    def size(self) -> int:
        return 4 * self.n2 + self.n1

    def slice(self, name: str) -> slice:
        start = self.offsets[name]
        return slice(start, start + (self.n1 if name == "P" else self.n2))

    def index(self, name: str, node) -> np.ndarray:
        return self.offsets[name] + np.asarray(node)

    def split(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {f: x[self.slice(f)] for f in FIELDS}

    def join(self, fields: dict) -> np.ndarray:
        return np.concatenate([np.asarray(fields[f], dtype=float) for f in FIELDS])


# -- boundary conditions ----------------------------------------------------

@dataclass(frozen=True)
class DirichletRule:
    """Values imposed on every node of ``tag``; a value may be a constant or
    a callable ``f(x, y)``. Later rules override earlier ones at shared
    nodes."""

    tag: BoundaryTag
    values: dict


@dataclass(frozen=True)
class BoundaryConditions:
    rules: tuple[DirichletRule, ...]
    pressure_pin: tuple[float, float] | None = (0.0, 0.0)
    pressure_value: float | object = 0.0

    def tags(self) -> set:
        return {r.tag for r in self.rules}


def cavity_conditions(lid_speed: float = 1.0, hot: float = 1.0) -> BoundaryConditions:
    """Lid-driven cavity data: cold side walls, hot heaters and obstacle,
    adiabatic/impermeable lid and bottom. Side walls are applied last, so
    the lid corners take U = 0."""
    T = BoundaryTag
    still = {"U": 0.0, "V": 0.0}
    hot_vals = {"U": 0.0, "V": 0.0, "theta": hot, "C": hot}
    return BoundaryConditions((
        DirichletRule(T.Lid, {"U": lid_speed, "V": 0.0}),
        DirichletRule(T.BottomAdiabatic, still),
        DirichletRule(T.HeaterLeft, hot_vals),
        DirichletRule(T.HeaterRight, hot_vals),
        DirichletRule(T.Obstacle, hot_vals),
        DirichletRule(T.HeatedWall, hot_vals),
        DirichletRule(T.LeftWall, {"U": 0.0, "V": 0.0, "theta": 0.0, "C": 0.0}),
        DirichletRule(T.RightWall, {"U": 0.0, "V": 0.0, "theta": 0.0, "C": 0.0}),
    ))


def triangular_cavity_conditions(wall_speed: float = 1.0) -> BoundaryConditions:
    """Validation cavity: cold wall sliding upward, hot hypotenuse,
    adiabatic bottom. Stationary walls win for velocity at the corners, the
    cold wall wins for theta and C."""
    T = BoundaryTag
    cold = {"theta": 0.0, "C": 0.0}
    return BoundaryConditions((
        DirichletRule(T.SlidingWall, {"U": 0.0, "V": wall_speed, **cold}),
        DirichletRule(T.BottomAdiabatic, {"U": 0.0, "V": 0.0}),
        DirichletRule(T.HeatedWall, {"U": 0.0, "V": 0.0, "theta": 1.0, "C": 1.0}),
        DirichletRule(T.SlidingWall, cold),
    ))


def constrained_dofs(mesh, bcs: BoundaryConditions, dofs: DofMap | None = None):
    """Sorted constrained indices and their values."""
    dofs = dofs or DofMap(mesh.n_nodes, mesh.n_vertices)
    present = set(mesh.tags)
    missing = present - bcs.tags()
    if missing:
        # every boundary tag needs at least the no-slip condition
        raise UntaggedBoundary(f"no boundary rule for tags {sorted(t.name for t in missing)}")
    nodes = mesh.nodes
    values: dict[int, float] = {}
    for rule in bcs.rules:
        if rule.tag not in present:
            continue
        idx = mesh.boundary_nodes(rule.tag)
        for name, val in rule.values.items():
            v = val(nodes[idx, 0], nodes[idx, 1]) if callable(val) else np.full(len(idx), float(val))
            for i, x in zip(dofs.index(name, idx), np.broadcast_to(v, idx.shape)):
                values[int(i)] = float(x)
    if bcs.pressure_pin is not None:
        pin = int(np.argmin(np.linalg.norm(mesh.vertices - np.asarray(bcs.pressure_pin), axis=1)))
        pv = bcs.pressure_value
        x, y = mesh.vertices[pin]
        values[int(dofs.index("P", pin))] = float(pv(x, y) if callable(pv) else pv)
    idx = np.array(sorted(values), dtype=np.int64)
    return idx, np.array([values[i] for i in idx])


# -- systems -------------------------------------------------------------------

@dataclass
class DiscreteSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: DofMap
    constrained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class Sources:
    """Optional volumetric sources ``f(x, y)`` per equation (manufactured
    solutions). ``mass`` is the continuity right-hand side."""

    U: object = None
    V: object = None
    theta: object = None
    C: object = None
    mass: object = None


class PicardAssembler:
    """Builds the frozen-velocity linear system for one mesh and parameter set.

    The momentum, continuity and transport operators that do not depend on
    the iterate are cached; each call only assembles the advection matrix.
    """

    def __init__(self, mesh, groups: DimensionlessGroups, sources: Sources | None = None,
                 ctx: FEContext | None = None):
        self.mesh = mesh
        self.groups = groups
        self.ctx = ctx or FEContext(mesh)
        self.dofs = DofMap(mesh.n_nodes, mesh.n_vertices)
        self.sources = sources
        self._rhs = self._load_vector()

    def _load_vector(self) -> np.ndarray:
        b = np.zeros(self.dofs.size)
        s = self.sources
        if s is None:
            return b
        x, y = self.ctx.xq[..., 0], self.ctx.xq[..., 1]
        for name in ("U", "V", "theta", "C"):
            f = getattr(s, name)
            if f is not None:
                b[self.dofs.slice(name)] += self.ctx.load2(f(x, y))
        if s.mass is not None:
            b[self.dofs.slice("P")] -= self.ctx.load1(s.mass(x, y))
        return b

    def blocks(self, U: np.ndarray, V: np.ndarray) -> dict:
        g = self.groups
        ctx = self.ctx
        N = ctx.advection(U, V)
        K, M = ctx.stiffness, ctx.mass
        Dx, Dy = ctx.divergence
        Au = g.viscosity * K + N
        buoy = -g.Ri * M
        return {
            "UU": Au,
            "VV": Au + g.lorentz * M,
            "UP": -Dx.T, "VP": -Dy.T,
            "PU": -Dx, "PV": -Dy,
            "Vtheta": buoy,
            "VC": g.Br * buoy,
            "thetatheta": g.thermal_diffusivity * K + N,
            "CC": g.species_diffusivity * K + N,
        }

    def matrix(self, U: np.ndarray, V: np.ndarray) -> sp.csr_matrix:
        b = self.blocks(U, V)
        grid = [
            [b["UU"], None, b["UP"], None, None],
            [None, b["VV"], b["VP"], b["Vtheta"], b["VC"]],
            [b["PU"], b["PV"], None, None, None],
            [None, None, None, b["thetatheta"], None],
            [None, None, None, None, b["CC"]],
        ]
        n1 = self.dofs.n1
        grid[2][2] = sp.csr_matrix((n1, n1))
        return sp.bmat(grid, format="csr")

    def system(self, state) -> DiscreteSystem:
        fields = _fields_of(state)
        if len(fields["U"]) != self.dofs.n2 or len(fields["P"]) != self.dofs.n1:
            raise DimensionMismatch("state does not match the mesh")
        A = self.matrix(fields["U"], fields["V"])
        return DiscreteSystem(A, self._rhs.copy(), self.dofs)


def _fields_of(state) -> dict:
    if isinstance(state, dict):
        return state
    return {f: getattr(state, f) for f in FIELDS}


def zero_state(mesh) -> dict:
    n2, n1 = mesh.n_nodes, mesh.n_vertices
    return {"U": np.zeros(n2), "V": np.zeros(n2), "P": np.zeros(n1),
            "theta": np.zeros(n2), "C": np.zeros(n2)}


def assemble_picard_system(mesh, groups: DimensionlessGroups, linearization_state=None,
                           sources: Sources | None = None) -> DiscreteSystem:
    """Unconstrained Picard system with advection frozen at the given state
    (all fields zero when omitted)."""
    state = zero_state(mesh) if linearization_state is None else linearization_state
    return PicardAssembler(mesh, groups, sources).system(state)


def apply_boundary_conditions(system: DiscreteSystem, mesh,
                              bcs: BoundaryConditions | None = None) -> DiscreteSystem:
    """Replace constrained rows by identity rows carrying the Dirichlet value."""
    bcs = bcs or cavity_conditions()
    idx, vals = constrained_dofs(mesh, bcs, system.dof_map)
    n = system.matrix.shape[0]
    keep = np.ones(n)
    keep[idx] = 0.0
    on = 1.0 - keep
    A = sp.diags(keep) @ system.matrix + sp.diags(on)
    b = system.rhs * keep
    b[idx] = vals
    return DiscreteSystem(A.tocsr(), b, system.dof_map, idx, vals)


def residual_norms(mesh, groups: DimensionlessGroups, state, bcs=None,
                   sources: Sources | None = None, assembler=None) -> dict:
    """Nonlinear residual L2 norms per equation, using ``state`` as both the
    linearisation point and the solution. Constrained rows are excluded and
    their violation is reported under ``"constraint"``."""
    asm = assembler or PicardAssembler(mesh, groups, sources)
    fields = _fields_of(state)
    sysm = asm.system(fields)
    x = asm.dofs.join(fields)
    r = sysm.matrix @ x - sysm.rhs
    idx, vals = constrained_dofs(mesh, bcs or cavity_conditions(), asm.dofs)
    r[idx] = 0.0
    d = asm.dofs
    return {
        "continuity": float(np.linalg.norm(r[d.slice("P")])),
        "U-mom": float(np.linalg.norm(r[d.slice("U")])),
        "V-mom": float(np.linalg.norm(r[d.slice("V")])),
        "energy": float(np.linalg.norm(r[d.slice("theta")])),
        "species": float(np.linalg.norm(r[d.slice("C")])),
        "constraint": float(np.linalg.norm(x[idx] - vals)) if len(idx) else 0.0,
    }
