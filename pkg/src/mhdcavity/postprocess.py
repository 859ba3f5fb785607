"""Post-processing of converged fields.

Local Nusselt numbers are gradient magnitudes of theta sampled along the
boundary edges of a heated tag, using the one-sided isoparametric gradient of
the element that owns each edge. Where two edges meet, the two one-sided
values are averaged, weighted by the adjacent sample spacing. Averages use the composite trapezoidal rule over the
arc-length coordinate, divided by the geometric length of the boundary.

The stream function solves a Poisson problem whose weak form only needs the
velocity itself::

    int grad(psi) . grad(phi) = int (-V dphi/dx + U dphi/dy)

so its natural boundary condition is consistent with ``U = dpsi/dY`` and
``V = -dpsi/dX``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import FEContext, p2_basis
from .geometry import HEATED_TAGS, BoundaryTag

_COLD_TAGS = (BoundaryTag.LeftWall, BoundaryTag.RightWall, BoundaryTag.SlidingWall)
# local edge k of the reference triangle runs from vertex k to vertex k + 1
_EDGE_START = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_DIR = np.array([[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0]])


class BadTag(ValueError):
    pass


class EmptyTrace(ValueError):
    pass


class IoError(OSError):
    pass


@dataclass
class NusseltTrace:
    tag: BoundaryTag
    s: np.ndarray
    nu: np.ndarray
    xy: np.ndarray

    def __len__(self):
        return len(self.s)


@dataclass
class NusseltReport:
    traces: dict = field(default_factory=dict)       # tag -> NusseltTrace
    averages: dict = field(default_factory=dict)     # tag -> Nu_avg
    arc_lengths: dict = field(default_factory=dict)  # tag -> L_s

    def write_traces(self, path) -> None:
        rows = []
        for tag, tr in self.traces.items():
            rows += [[tag.name, f"{s:.10e}", f"{n:.10e}"] for s, n in zip(tr.s, tr.nu)]
        _write_csv(path, ["boundary", "s", "Nu"], rows)

    def write_summary(self, path) -> None:
        rows = [[tag.name, f"{self.averages[tag]:.10e}", f"{self.arc_lengths[tag]:.10e}"]
                for tag in self.traces]
        _write_csv(path, ["boundary", "Nu_avg", "arc_length"], rows)


def _write_csv(path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# -- boundary sampling ------------------------------------------------------

def _edge_samples(mesh, values, tri, k, t):
    """Positions, tangents and theta gradients at parameters ``t`` on one edge."""
    xi = _EDGE_START[k] + t[:, None] * _EDGE_DIR[k]
    phi, dphi = p2_basis(xi)
    X = mesh.nodes[mesh.cells[tri]]                   # (6, 2)
    J = np.einsum("ka,qkb->qab", X, dphi)             # dx/dxi
    grad_ref = np.einsum("k,qkb->qb", values[mesh.cells[tri]], dphi)
    grad = np.linalg.solve(np.transpose(J, (0, 2, 1)), grad_ref[..., None])[..., 0]
    pos = phi @ X
    tangent = J @ _EDGE_DIR[k]
    return pos, tangent, grad


def _edge_chain(mesh, tag) -> list[tuple[int, int]]:
    """Boundary edges of ``tag`` as (triangle, local edge), ordered head to tail
    in the boundary orientation (domain on the left)."""
    sel = mesh.boundary_edges[mesh.boundary_edges[:, 2] == int(tag)]
    if len(sel) == 0:
        return []
    tris = mesh.triangles
    a = tris[sel[:, 0], sel[:, 1]]
    b = tris[sel[:, 0], (sel[:, 1] + 1) % 3]
    by_start = {int(v): i for i, v in enumerate(a)}
    heads = set(a.tolist()) - set(b.tolist())
    if heads:
        start = min(heads)
    else:
        # closed loop: begin at the vertex nearest the first corner of the tag
        first = _first_point(mesh, tag)
        if first is None:
            start = int(a[np.lexsort((mesh.vertices[a, 0], mesh.vertices[a, 1]))[0]])
        else:
            start = int(a[np.argmin(np.linalg.norm(mesh.vertices[a] - first, axis=1))])
    order, v = [], start
    while v in by_start and len(order) < len(sel):
        i = by_start.pop(v)
        order.append((int(sel[i, 0]), int(sel[i, 1])))
        v = int(b[i])
    if len(order) != len(sel):
        raise BadTag(f"boundary {BoundaryTag(tag).name} is not a single connected chain")
    return order


def _segments(mesh, tag):
    domain = getattr(mesh, "domain", None)
    if domain is None:
        return []
    return [s for loop in domain.loops() for s in loop if s.tag == tag]


def _first_point(mesh, tag):
    segs = _segments(mesh, tag)
    return np.asarray(segs[0].start, dtype=float) if segs else None


def boundary_length(mesh, tag) -> float:
    """Geometric length of a tagged boundary; the discrete length when the
    mesh carries no geometry."""
    segs = _segments(mesh, tag)
    if segs:
        return float(sum(s.length for s in segs))
    total = 0.0
    t, w = np.polynomial.legendre.leggauss(4)
    t = 0.5 * (t + 1.0)
    for tri, k in _edge_chain(mesh, tag):
        _, tan, _ = _edge_samples(mesh, np.zeros(mesh.n_nodes), tri, k, t)
        total += 0.5 * float(w @ np.linalg.norm(tan, axis=1))
    return total


def _sample_chain(mesh, theta, tag, samples_per_edge):
    """Per-edge samples along a tag: list of (s, xy, grad, outward normal)."""
    if samples_per_edge < 2:
        raise ValueError("samples_per_edge must be at least 2")
    t = np.linspace(0.0, 1.0, samples_per_edge)
    gl, gw = np.polynomial.legendre.leggauss(4)
    # Gauss points of every sub-interval, for the arc length
    tq = (t[:-1, None] + 0.5 * np.diff(t)[:, None] * (gl + 1.0)).ravel()
    parts = []
    s0 = 0.0
    for tri, k in _edge_chain(mesh, tag):
        pos, tan, grad = _edge_samples(mesh, theta, tri, k, t)
        _, tq_tan, _ = _edge_samples(mesh, theta, tri, k, tq)
        speed = np.linalg.norm(tq_tan, axis=1).reshape(len(t) - 1, -1)
        seg = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (speed @ gw))])
        normal = np.column_stack([tan[:, 1], -tan[:, 0]])
        normal /= np.linalg.norm(normal, axis=1)[:, None]
        parts.append((s0 + seg, pos, grad, normal))
        s0 += seg[-1]
    return parts


def _merge(parts, values):
    """Join per-edge samples into one trace. At a node shared by two edges
    the one-sided values are averaged with the adjacent sub-interval lengths
    as weights, so the trapezoidal rule over the trace equals the sum of the
    per-edge trapezoidal rules."""
    s = [parts[0][0]]
    xy = [parts[0][1]]
    v = [np.array(values[0], float)]
    for prev, (si, xyi, _, _), vi in zip(parts, parts[1:], values[1:]):
        wl = prev[0][-1] - prev[0][-2]
        wr = si[1] - si[0]
        v[-1][-1] = (wl * v[-1][-1] + wr * vi[0]) / (wl + wr)
        s.append(si[1:])
        xy.append(xyi[1:])
        v.append(np.array(vi[1:], float))
    return np.concatenate(s), np.vstack(xy), np.concatenate(v)


def local_nusselt(solution, tag, samples_per_edge: int = 8,
                  allowed=HEATED_TAGS) -> NusseltTrace:
    """Local Nusselt number |grad theta| along a heated boundary.

    Parameters
    ----------
    solution : FieldSolution
    tag : BoundaryTag
        Must be one of ``allowed`` (the heated boundaries by default).
    samples_per_edge : int
        Equally spaced samples per boundary edge, end points included.

    Returns
    -------
    NusseltTrace
        ``s`` is measured from the start of the boundary in its orientation.
    """
    try:
        tag = BoundaryTag(tag)
    except ValueError as exc:
        raise BadTag(f"unknown boundary tag {tag!r}") from exc
    if tag not in allowed:
        raise BadTag(f"{tag.name} is not a heated boundary")
    mesh = solution.mesh
    parts = _sample_chain(mesh, np.asarray(solution.theta, float), tag, samples_per_edge)
    if not parts:
        raise BadTag(f"mesh has no {tag.name} boundary")
    s, xy, nu = _merge(parts, [np.linalg.norm(p[2], axis=1) for p in parts])
    return NusseltTrace(tag, s, nu, xy)


def average_nusselt(trace, arc_length: float | None = None) -> float:
    """Trapezoidal mean of a trace: ``(1/L_s) * int Nu ds``.

    ``trace`` is a NusseltTrace or a sequence of (s, Nu) pairs. When
    ``arc_length`` is omitted the trace's own extent is used.
    """
    if isinstance(trace, NusseltTrace):
        s, nu = trace.s, trace.nu
    else:
        arr = np.asarray(trace, dtype=float).reshape(-1, 2) if len(trace) else np.empty((0, 2))
        s, nu = arr[:, 0], arr[:, 1]
    if len(s) == 0:
        raise EmptyTrace("cannot average an empty trace")
    if len(s) == 1:
        return float(nu[0])
    if np.any(np.diff(s) <= 0):
        raise ValueError("trace arc-length coordinate must be strictly increasing")
    L = float(s[-1] - s[0]) if arc_length is None else float(arc_length)
    if not L > 0:
        raise ValueError("arc length must be positive")
    return float(np.trapezoid(nu, s) / L)


def heater_arc_length(radius: float) -> float:
    """Normaliser of a semicircular heater."""
    return math.pi * radius


def nusselt_report(solution, tags=None, samples_per_edge: int = 8) -> NusseltReport:
    """Traces and averages on every heated boundary present in the mesh."""
    mesh = solution.mesh
    present = set(mesh.tags)
    if tags is None:
        tags = [t for t in HEATED_TAGS if t in present]
    rep = NusseltReport()
    for tag in tags:
        tag = BoundaryTag(tag)
        tr = local_nusselt(solution, tag, samples_per_edge)
        L = boundary_length(mesh, tag)
        rep.traces[tag] = tr
        rep.arc_lengths[tag] = L
        rep.averages[tag] = average_nusselt(tr, L)
    return rep


def heat_flux_balance(solution, hot_tags=None, cold_tags=None,
                      samples_per_edge: int = 8) -> dict:
    """Net conductive heat flux through the Dirichlet boundaries.

    Energy transport is source-free and the velocity is tangential on every
    wall, so the heat entering through the hot boundaries must leave through
    the cold ones. Returns ``q_in``, ``q_out`` and the relative residual
    ``|q_in - q_out| / q_in``.
    """
    mesh = solution.mesh
    present = set(mesh.tags)
    hot = [t for t in (hot_tags or HEATED_TAGS) if t in present]
    cold = [t for t in (cold_tags or _COLD_TAGS) if t in present]
    theta = np.asarray(solution.theta, float)

    def flux(tag):
        parts = _sample_chain(mesh, theta, tag, samples_per_edge)
        return sum(float(np.trapezoid(np.einsum("ia,ia->i", g, n), s))
                   for s, _, g, n in parts)

    q_in = sum(flux(t) for t in hot)          # d(theta)/dn > 0 on the hot side
    q_out = -sum(flux(t) for t in cold)
    res = abs(q_in - q_out) / abs(q_in) if q_in else math.inf
    return {"q_in": q_in, "q_out": q_out, "residual": res}


def divergence_norm(solution, ctx: FEContext | None = None) -> float:
    """L2 norm of div(U, V) over the fluid domain.

    Taylor-Hood velocities are only weakly divergence-free, so this is a
    discretization error that should shrink under refinement.
    """
    ctx = ctx or FEContext(solution.mesh)
    cells = ctx.cells
    div = (np.einsum("eqi,ei->eq", ctx.grad2[..., 0], np.asarray(solution.U)[cells])
           + np.einsum("eqi,ei->eq", ctx.grad2[..., 1], np.asarray(solution.V)[cells]))
    return math.sqrt(float(np.sum(ctx.wdet * div**2)))


def scalar_overshoot(solution, bounds=(0.0, 1.0)) -> dict:
    """Largest excursion of theta and C outside ``bounds`` at the nodes."""
    lo, hi = bounds
    out = {}
    for name in ("theta", "C"):
        v = np.asarray(getattr(solution, name), float)
        out[name] = float(max(lo - v.min(), v.max() - hi, 0.0))
    return out


# -- stream function --------------------------------------------------------

def stream_function(solution, dirichlet_tags=None, floating_tags=(),
                    ctx: FEContext | None = None) -> np.ndarray:
    """Nodal stream function with ``U = dpsi/dY`` and ``V = -dpsi/dX``.

    ``psi = 0`` is imposed on ``dirichlet_tags``; by default on every tagged
    boundary not listed in ``floating_tags``, the obstacle included. Each
    floating tag instead carries one unknown constant, fixed by the weak form
    itself; this recovers the correct streamlines when the net flux between
    a hole and the outer wall is nonzero. With no Dirichlet tags the first
    node is pinned to zero.
    """
    from .solver import SingularMatrix, _factor

    mesh = solution.mesh
    ctx = ctx or FEContext(mesh)
    n = mesh.n_nodes
    Uq = ctx.interpolate(np.asarray(solution.U, float))
    Vq = ctx.interpolate(np.asarray(solution.V, float))
    be = np.einsum("eq,eqi->ei", ctx.wdet * -Vq, ctx.grad2[..., 0]) \
        + np.einsum("eq,eqi->ei", ctx.wdet * Uq, ctx.grad2[..., 1])
    b = np.bincount(ctx.cells.ravel(), weights=be.ravel(), minlength=n)
    floating = [BoundaryTag(t) for t in floating_tags]
    if dirichlet_tags is None:
        dirichlet_tags = [t for t in mesh.tags if t not in floating]
    fixed = [mesh.boundary_nodes(t) for t in dirichlet_tags]
    fixed = np.unique(np.concatenate(fixed)) if fixed else np.array([0])
    # reduced unknowns: free nodes, plus one per floating tag
    column = np.full(n, -1)
    free = np.ones(n, bool)
    free[fixed] = False
    groups = [np.setdiff1d(mesh.boundary_nodes(t), fixed) for t in floating]
    for g in groups:
        free[g] = False
    column[free] = np.arange(free.sum())
    m = int(free.sum())
    for k, g in enumerate(groups):
        column[g] = m + k
    keep = column >= 0
    T = sp.csr_matrix((np.ones(keep.sum()), (np.nonzero(keep)[0], column[keep])),
                      shape=(n, m + len(groups)))
    A = (T.T @ ctx.stiffness @ T).tocsc()
    reduced = _factor(A).solve(T.T @ b)
    psi = T @ reduced
    if not np.all(np.isfinite(psi)):
        raise SingularMatrix("stream-function system is singular")
    return psi


def nodal_gradient(mesh, values) -> np.ndarray:
    """Element gradients at P2 nodes averaged over the elements sharing them."""
    ref = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], float)
    _, dphi = p2_basis(ref)
    X = mesh.nodes[mesh.cells]
    J = np.einsum("eka,qkb->eqab", X, dphi)
    g_ref = np.einsum("ek,qkb->eqb", values[mesh.cells], dphi)
    g = np.linalg.solve(np.swapaxes(J, 2, 3), g_ref[..., None])[..., 0]   # (E, 6, 2)
    out = np.zeros((mesh.n_nodes, 2))
    cnt = np.bincount(mesh.cells.ravel(), minlength=mesh.n_nodes)
    for a in range(2):
        out[:, a] = np.bincount(mesh.cells.ravel(), weights=g[..., a].ravel(),
                                minlength=mesh.n_nodes)
    return out / cnt[:, None]


def velocity_mismatch(solution, psi) -> float:
    """Relative L2 mismatch between (dpsi/dY, -dpsi/dX) and (U, V) over
    interior nodes."""
    mesh = solution.mesh
    g = nodal_gradient(mesh, np.asarray(psi, float))
    interior = np.ones(mesh.n_nodes, bool)
    for t in mesh.tags:
        interior[mesh.boundary_nodes(t)] = False
    U, V = np.asarray(solution.U)[interior], np.asarray(solution.V)[interior]
    du, dv = g[interior, 1] - U, -g[interior, 0] - V
    den = math.sqrt(float(np.sum(U ** 2 + V ** 2)))
    num = math.sqrt(float(np.sum(du ** 2 + dv ** 2)))
    return num / den if den > 0 else num


# -- VTK legacy ASCII -------------------------------------------------------

def write_vtk(path, points, triangles, point_data: dict, title: str = "mhdcavity") -> None:
    """Legacy ASCII unstructured grid with triangle cells (type 5).

    ``point_data`` maps names to (n,) scalars or (n, 2|3) vectors.
    """
    pts = np.asarray(points, float)
    tris = np.asarray(triangles, int)
    n = len(pts)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in pts[:, :2]]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, float)
            if arr.shape[0] != n:
                raise ValueError(f"field {name} has {arr.shape[0]} values for {n} points")
            if arr.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in arr]
            else:
                vec = np.zeros((n, 3))
                vec[:, :arr.shape[1]] = arr
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in vec]
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_vtk(path) -> dict:
    """Parse files written by :func:`write_vtk`.

    Returns a dict with ``points`` (n, 3), ``cells`` (m, 3), ``cell_types``
    and ``point_data``.
    """
    try:
        with open(path) as fh:
            tokens = fh.read().split("\n")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not tokens[0].startswith("# vtk DataFile"):
        raise IoError(f"{path} is not a legacy VTK file")
    body = " ".join(tokens[4:]).split()
    pos = 0

    def take(k):
        nonlocal pos
        out = body[pos:pos + k]
        pos += k
        return out

    out = {"point_data": {}}
    while pos < len(body):
        key = take(1)[0]
        if key == "POINTS":
            n, _ = int(take(1)[0]), take(1)
            out["points"] = np.array(take(3 * n), float).reshape(n, 3)
        elif key == "CELLS":
            m, size = int(take(1)[0]), int(take(1)[0])
            raw = np.array(take(size), int).reshape(m, -1)
            if (raw[:, 0] != 3).any():
                raise IoError("only triangle cells are supported")
            out["cells"] = raw[:, 1:]
        elif key == "CELL_TYPES":
            m = int(take(1)[0])
            out["cell_types"] = np.array(take(m), int)
        elif key == "POINT_DATA":
            npd = int(take(1)[0])
        elif key == "SCALARS":
            name, _ = take(2)
            if body[pos] not in ("LOOKUP_TABLE",):
                take(1)
            take(2)
            out["point_data"][name] = np.array(take(npd), float)
        elif key == "VECTORS":
            name, _ = take(2)
            out["point_data"][name] = np.array(take(3 * npd), float).reshape(npd, 3)
        else:
            raise IoError(f"unexpected VTK keyword {key!r}")
    return out


def export_fields(solution, psi, path) -> None:
    """Write theta, concentration, pressure, psi and velocity at the mesh
    vertices. Quadratic fields are sampled at the corners."""
    mesh = solution.mesh
    nv = mesh.n_vertices
    data = {
        "theta": np.asarray(solution.theta)[:nv],
        "concentration": np.asarray(solution.C)[:nv],
        "pressure": np.asarray(solution.P)[:nv],
        "psi": np.asarray(psi)[:nv],
        "velocity": np.column_stack([np.asarray(solution.U)[:nv], np.asarray(solution.V)[:nv]]),
    }
    write_vtk(path, mesh.vertices, mesh.triangles, data)


# -- point evaluation -------------------------------------------------------

def locate(mesh, points, tol: float = 1e-10):
    """Containing element and reference coordinates of each point.

    The element is found from the straight-sided triangle; for curved
    elements the isoparametric map is then inverted by Newton's method.
    Points outside the mesh get element -1.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    P = mesh.vertices[mesh.triangles]                    # (E, 3, 2)
    d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    elem = np.full(len(pts), -1)
    ref = np.zeros((len(pts), 2))
    for i, p in enumerate(pts):
        r = p - P[:, 0]
        xi = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        eta = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        slack = np.minimum(np.minimum(xi, eta), 1.0 - xi - eta)
        e = int(np.argmax(slack))
        if slack[e] < -1e-6:
            continue
        z = np.array([xi[e], eta[e]])
        X = mesh.nodes[mesh.cells[e]]
        for _ in range(8):
            phi, dphi = p2_basis(z[None])
            J = X.T @ dphi[0]
            step = np.linalg.solve(J, p - phi[0] @ X)
            z = z + step
            if np.abs(step).max() < tol:
                break
        elem[i], ref[i] = e, z
    return elem, ref


def evaluate(mesh, values, points) -> np.ndarray:
    """Values of a P2 nodal field at arbitrary points (NaN outside)."""
    elem, ref = locate(mesh, points)
    out = np.full(len(elem), np.nan)
    ok = elem >= 0
    phi, _ = p2_basis(ref[ok])
    out[ok] = np.einsum("qk,qk->q", phi, np.asarray(values, float)[mesh.cells[elem[ok]]])
    return out


def profile_extremum(mesh, values, start, end, kind: str = "min", samples: int = 201):
    """Extremum of a field along a straight segment.

    Returns ``(value, t)`` where ``t`` in [0, 1] is the position along the
    segment; the sampled extremum is polished with a bounded scalar search.
    """
    from scipy.optimize import minimize_scalar

    a, b = np.asarray(start, float), np.asarray(end, float)
    sign = 1.0 if kind == "min" else -1.0
    t = np.linspace(0.0, 1.0, samples)
    f = sign * evaluate(mesh, values, a + t[:, None] * (b - a))
    k = int(np.nanargmin(f))
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, samples - 1)]
    res = minimize_scalar(lambda s: sign * evaluate(mesh, values, [a + s * (b - a)])[0],
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
    return sign * float(res.fun), float(res.x)
