"""Unstructured triangular meshes with quadratic (P2) edge nodes.

Meshes are produced by conforming Delaunay refinement (Ruppert's
algorithm) of the chord-discretised boundary: boundary sub-segments are
split whenever a vertex or a candidate circumcentre falls inside their
diametral circle, so every sub-segment is a Gabriel edge and therefore an
edge of the Delaunay triangulation. Triangles that are too large for the
graded sizing field or have a small angle get their circumcentre inserted.
Arc sub-segments are split at the arc mid-angle, so all boundary vertices
and snapped P2 edge nodes of the heaters lie on the true circles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import ArcSegment, BoundaryTag


class MeshFailure(RuntimeError):
    """Refinement could not reach the requested quality."""


@dataclass(frozen=True)
class Sizing:
    h_interior: float
    h_boundary: float
    grading_ratio: float = 1.3

    def __post_init__(self):
        if not (0 < self.h_boundary <= self.h_interior):
            raise ValueError("sizing requires 0 < h_boundary <= h_interior")
        if self.grading_ratio <= 1.0:
            raise ValueError("grading_ratio must exceed 1")


@dataclass
class Mesh:
    vertices: np.ndarray          # (nv, 2)
    triangles: np.ndarray         # (nt, 3) counterclockwise
    edges: np.ndarray             # (ne, 2) vertex pairs, sorted
    tri_edges: np.ndarray         # (nt, 3) local edge k joins vertex k and k+1
    edge_nodes: np.ndarray        # (ne, 2) P2 mid-edge node coordinates
    boundary_edges: np.ndarray    # (nb, 3) triangle, local edge, tag
    sizing: Sizing | None = None
    circles: dict = field(default_factory=dict)
    domain: object = None

    # -- counts / derived connectivity ------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_nodes(self) -> int:
        """Number of quadratic nodes (vertices + edge nodes)."""
        return self.n_vertices + self.n_edges

    @property
    def nodes(self) -> np.ndarray:
        return np.vstack([self.vertices, self.edge_nodes])

    @property
    def cells(self) -> np.ndarray:
        """(nt, 6) quadratic connectivity: 3 vertices then 3 edge nodes."""
        return np.hstack([self.triangles, self.n_vertices + self.tri_edges])

    def boundary_edge_ids(self, tag=None) -> np.ndarray:
        t, k = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        ids = self.tri_edges[t, k]
        if tag is None:
            return ids
        return ids[self.boundary_edges[:, 2] == int(tag)]

    def boundary_nodes(self, tag) -> np.ndarray:
        """Quadratic node indices (vertices and edge nodes) carrying ``tag``."""
        e = self.boundary_edge_ids(tag)
        return np.unique(np.concatenate([self.edges[e].ravel(), self.n_vertices + e]))

    @property
    def tags(self) -> list[BoundaryTag]:
        return [BoundaryTag(t) for t in np.unique(self.boundary_edges[:, 2])]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def write_vtk(self, path) -> None:
        """Legacy ASCII VTK unstructured grid of the corner mesh."""
        from .postprocess import write_vtk
        write_vtk(path, self.vertices, self.triangles, {})


# -- quality ---------------------------------------------------------------

def triangle_angles(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Interior angles in degrees, shape (nt, 3); angle k sits at vertex k."""
    p = points[tris]
    out = np.empty(tris.shape)
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        out[:, k] = np.degrees(np.arctan2(np.abs(cross), (a * b).sum(1)))
    return out


def mesh_quality(mesh: Mesh) -> dict:
    ang = triangle_angles(mesh.vertices, mesh.triangles)
    e = mesh.edges[mesh.boundary_edge_ids()]
    blen = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    return {
        "min_angle": float(ang.min()),
        "max_angle": float(ang.max()),
        "element_count": mesh.n_triangles,
        "node_count": mesh.n_nodes,
        "min_boundary_h": float(blen.min()),
    }


# -- construction from a triangulation ---------------------------------------

def _circumcenters(p: np.ndarray, tris: np.ndarray):
    a, b, c = p[tris[:, 0]], p[tris[:, 1]], p[tris[:, 2]]
    ba, ca = b - a, c - a
    d = 2.0 * (ba[:, 0] * ca[:, 1] - ba[:, 1] * ca[:, 0])
    bb, cc = (ba ** 2).sum(1), (ca ** 2).sum(1)
    ux = (ca[:, 1] * bb - ba[:, 1] * cc) / d
    uy = (ba[:, 0] * cc - ca[:, 0] * bb) / d
    center = a + np.stack([ux, uy], axis=1)
    return center, np.hypot(ux, uy)


def build_mesh(vertices, triangles, segment_tags: dict, circles=None,
               sizing=None, domain=None) -> Mesh:
    """Assemble a :class:`Mesh` from corner data.

    ``segment_tags`` maps sorted vertex pairs of boundary edges to tags.
    Arc edges (tags in ``circles``) get their edge node on the circle.
    """
    vertices = np.asarray(vertices, dtype=float)
    tris = np.asarray(triangles, dtype=np.int64).copy()
    p = vertices[tris]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    local = np.stack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1)
    flat = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(flat, axis=0, return_inverse=True,
                                       return_counts=True)
    inverse = inverse.ravel()
    tri_edges = inverse.reshape(-1, 3)
    if counts.max() > 2:
        raise MeshFailure("non-manifold edge in triangulation")

    circles = dict(circles or {})
    mids = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    bnd = np.flatnonzero(counts[inverse] == 1)
    bedges = np.empty((len(bnd), 3), dtype=np.int64)
    bedges[:, 0] = bnd // 3
    bedges[:, 1] = bnd % 3
    for row, i in enumerate(bnd):
        key = tuple(flat[i])
        if key not in segment_tags:
            raise MeshFailure(f"boundary edge {key} is not a tagged boundary segment")
        tag = BoundaryTag(segment_tags[key])
        bedges[row, 2] = int(tag)
        if tag in circles:
            (cx, cy), r = circles[tag]
            e = inverse[i]
            a, b = vertices[edges[e, 0]], vertices[edges[e, 1]]
            ta = math.atan2(a[1] - cy, a[0] - cx)
            tb = math.atan2(b[1] - cy, b[0] - cx)
            if tb - ta > math.pi:
                tb -= 2 * math.pi
            elif ta - tb > math.pi:
                ta -= 2 * math.pi
            tm = 0.5 * (ta + tb)
            mids[e] = (cx + r * math.cos(tm), cy + r * math.sin(tm))
    order = np.lexsort((bedges[:, 1], bedges[:, 0]))
    return Mesh(vertices=vertices, triangles=tris, edges=edges, tri_edges=tri_edges,
                edge_nodes=mids, boundary_edges=bedges[order], sizing=sizing,
                circles=circles, domain=domain)


# -- Ruppert refinement ----------------------------------------------------

class _Boundary:
    """Mutable list of boundary sub-segments during refinement."""

    def __init__(self, domain, h: float, tol: float):
        self.points: list = []
        self.segs: list = []      # [i, j, tag, segment object, t_i, t_j]
        index: dict = {}

        def add(pt):
            key = (round(pt[0], 12), round(pt[1], 12))
            if key not in index:
                index[key] = len(self.points)
                self.points.append(np.asarray(pt, dtype=float))
            return index[key]

        for loop in domain.loops():
            for seg in loop:
                pts = seg.discretize(h, tol)
                ts = np.linspace(0.0, 1.0, len(pts))
                ids = [add(q) for q in pts]
                for k in range(len(ids) - 1):
                    self.segs.append([ids[k], ids[k + 1], seg.tag, seg, ts[k], ts[k + 1]])

    def split(self, k: int, points: list) -> None:
        i, j, tag, seg, ti, tj = self.segs[k]
        tm = 0.5 * (ti + tj)
        pm = np.asarray(seg.point(tm), dtype=float)
        m = len(points)
        points.append(pm)
        self.segs[k] = [i, m, tag, seg, ti, tm]
        self.segs.append([m, j, tag, seg, tm, tj])

    def arrays(self, points):
        s = np.array([[a, b] for a, b, *_ in self.segs], dtype=np.int64)
        p = np.asarray(points)
        mid = 0.5 * (p[s[:, 0]] + p[s[:, 1]])
        rad = 0.5 * np.linalg.norm(p[s[:, 0]] - p[s[:, 1]], axis=1)
        return s, mid, rad


def _sizing_function(domain, sizing: Sizing):
    samples = []
    for loop in domain.loops():
        for seg in loop:
            samples.append(seg.discretize(sizing.h_boundary / 4))
    tree = cKDTree(np.vstack(samples))
    slope = sizing.grading_ratio - 1.0

    def h(x):
        d, _ = tree.query(x)
        return np.minimum(sizing.h_interior, sizing.h_boundary + slope * d)

    return h


def _encroached(seg_ids, mid, rad, points) -> set[int]:
    """Indices of sub-segments whose diametral circle strictly contains a
    vertex other than their own endpoints."""
    tree = cKDTree(points)
    hits = set()
    neigh = tree.query_ball_point(mid, rad * (1 - 1e-9))
    for k, found in enumerate(neigh):
        a, b = seg_ids[k]
        if any(f != a and f != b for f in found):
            hits.add(k)
    return hits


def generate_mesh(domain, h_interior: float, h_boundary: float | None = None,
                  grading_ratio: float = 1.3, min_angle: float = 26.0,
                  smooth: bool = True, max_rounds: int = 400) -> Mesh:
    """Quality triangulation of ``domain`` graded from ``h_boundary`` at the
    walls to ``h_interior`` in the bulk."""
    sizing = Sizing(h_interior, h_interior if h_boundary is None else h_boundary,
                    grading_ratio)
    tol = getattr(domain, "arc_chord_tolerance", 1e-3)
    bnd = _Boundary(domain, sizing.h_boundary, tol)
    points = list(bnd.points)
    hfun = _sizing_function(domain, sizing)
    sin_min = math.sin(math.radians(min_angle))

    for _ in range(max_rounds):
        P = np.asarray(points)
        s, mid, rad = bnd.arrays(points)
        # 1) every sub-segment must be free of vertices in its diametral circle
        enc = _encroached(s, mid, rad, P)
        if enc:
            for k in sorted(enc):
                bnd.split(k, points)
            continue
        tri = Delaunay(P).simplices
        cen = P[tri].mean(axis=1)
        tri = tri[domain.contains(cen)]
        # 2) quality / size
        cc, R = _circumcenters(P, tri)
        p = P[tri]
        lens = np.stack([np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1)
                         for k in range(3)], axis=1)
        shortest = lens.min(axis=1)
        # shortest / (2R) = sin(smallest angle)
        bad_angle = shortest < 2.0 * R * sin_min * (1 - 1e-9)
        href = hfun(P[tri].mean(axis=1))
        too_big = R * math.sqrt(3.0) > href * 1.05
        bad = np.flatnonzero(bad_angle | too_big)
        if len(bad) == 0:
            break
        priority = np.argsort(-(R[bad] / href[bad]))
        bad = bad[priority]
        cand = cc[bad]
        # candidates encroaching a sub-segment split that segment instead
        seg_tree = cKDTree(mid)
        reach = seg_tree.query_ball_point(cand, rad.max())
        to_split: set[int] = set()
        accepted: list = []
        inside = domain.contains(cand)
        for n, k in enumerate(bad):
            c = cand[n]
            near = [j for j in reach[n]
                    if np.sum((c - mid[j]) ** 2) < rad[j] ** 2 * (1 - 1e-9)]
            if near:
                to_split.update(near)
                continue
            if not inside[n]:
                # numerical corner case: split the closest sub-segment
                to_split.add(int(seg_tree.query(c)[1]))
                continue
            # keep batch insertions apart so they do not create slivers
            if accepted and np.min(np.linalg.norm(np.asarray(accepted) - c, axis=1)) < 0.5 * R[k]:
                continue
            accepted.append(c)
        for k in sorted(to_split):
            bnd.split(k, points)
        points.extend(accepted)
    else:
        raise MeshFailure(f"refinement did not terminate in {max_rounds} rounds "
                          f"(h_interior={h_interior}, h_boundary={sizing.h_boundary})")

    P = np.asarray(points)
    seg_tags = {tuple(sorted((a, b))): tag for a, b, tag, *_ in bnd.segs}
    used = np.unique(tri)
    remap = -np.ones(len(P), dtype=np.int64)
    remap[used] = np.arange(len(used))
    P = P[used]
    tri = remap[tri]
    seg_tags = {tuple(sorted((remap[a], remap[b]))): t for (a, b), t in seg_tags.items()
                if remap[a] >= 0 and remap[b] >= 0}
    mesh = build_mesh(P, tri, seg_tags, domain.circles, sizing, domain)
    if smooth:
        _smooth(mesh)
    check_mesh(mesh, min_angle=20.0)
    return mesh


def _smooth(mesh: Mesh, sweeps: int = 3) -> None:
    """Guarded Laplacian smoothing of interior vertices (in place)."""
    nv = mesh.n_vertices
    bverts = np.unique(mesh.edges[mesh.boundary_edge_ids()])
    free = np.ones(nv, dtype=bool)
    free[bverts] = False
    e = mesh.edges
    deg = np.bincount(e.ravel(), minlength=nv).astype(float)
    tri = mesh.triangles
    for _ in range(sweeps):
        V = mesh.vertices
        acc = np.zeros_like(V)
        np.add.at(acc, e[:, 0], V[e[:, 1]])
        np.add.at(acc, e[:, 1], V[e[:, 0]])
        target = V.copy()
        target[free] = acc[free] / deg[free, None]
        before = triangle_angles(V, tri).min(axis=1)
        vmin_before = np.full(nv, np.inf)
        np.minimum.at(vmin_before, tri.ravel(), np.repeat(before, 3))
        moving = free.copy()
        for _ in range(20):
            trial = np.where(moving[:, None], target, V)
            p = trial[tri]
            area = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                    - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
            after = np.where(area > 0, triangle_angles(trial, tri).min(axis=1), -1.0)
            vmin_after = np.full(nv, np.inf)
            np.minimum.at(vmin_after, tri.ravel(), np.repeat(after, 3))
            worse = moving & (vmin_after < vmin_before - 1e-12)
            if not worse.any():
                break
            moving &= ~worse
        else:
            moving[:] = False
        mesh.vertices = np.where(moving[:, None], target, V)
    # straight-edge nodes follow their vertices; arc nodes never move
    arc = np.zeros(mesh.n_edges, dtype=bool)
    for tag in mesh.circles:
        arc[mesh.boundary_edge_ids(tag)] = True
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    mesh.edge_nodes = np.where(arc[:, None], mesh.edge_nodes, mids)


def check_mesh(mesh: Mesh, min_angle: float = 20.0) -> None:
    """Raise :class:`MeshFailure` unless orientation, conformity and angle
    invariants hold."""
    area = mesh.signed_areas()
    if (area <= 0).any():
        raise MeshFailure(f"inverted triangle {int(np.argmin(area))}")
    ang = triangle_angles(mesh.vertices, mesh.triangles)
    worst = int(np.argmin(ang.min(axis=1)))
    if ang[worst].min() < min_angle:
        raise MeshFailure(f"triangle {worst} has min angle {ang[worst].min():.2f} deg "
                          f"at {mesh.vertices[mesh.triangles[worst]].mean(0)}")
    use = np.bincount(mesh.tri_edges.ravel(), minlength=mesh.n_edges)
    if not np.all((use == 1) | (use == 2)):
        raise MeshFailure("edge used by more than two triangles")
    if (use == 1).sum() != len(mesh.boundary_edges):
        raise MeshFailure("untagged boundary edge")


# -- special meshes ----------------------------------------------------------

def structured_rectangle_mesh(nx: int, ny: int | None = None, width: float = 1.0,
                              height: float = 1.0) -> Mesh:
    """Uniform mesh of a rectangle, each cell split along alternating diagonals."""
    from .geometry import rectangle_domain

    ny = nx if ny is None else ny
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    vid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    T = BoundaryTag
    tags = {}
    for i in range(nx):
        tags[tuple(sorted((vid[i, 0], vid[i + 1, 0])))] = T.BottomAdiabatic
        tags[tuple(sorted((vid[i, ny], vid[i + 1, ny])))] = T.Lid
    for j in range(ny):
        tags[tuple(sorted((vid[0, j], vid[0, j + 1])))] = T.LeftWall
        tags[tuple(sorted((vid[nx, j], vid[nx, j + 1])))] = T.RightWall
    h = max(width / nx, height / ny)
    return build_mesh(pts, np.array(tris), tags, sizing=Sizing(h, h),
                      domain=rectangle_domain(width, height))


def grid_sequence(domain, n_levels: int, coarsest_h: float = 0.4,
                  finest_h: float = 0.05, boundary_ratio: float = 0.4,
                  grading_ratio: float = 1.3) -> list[Mesh]:
    """Meshes with interior sizes spaced geometrically from ``coarsest_h`` to
    ``finest_h``. On the default cavity the six-level sequence spans about
    290 to 4800 elements, each level 1.5-2x the previous one."""
    if n_levels < 2:
        raise ValueError("grid_sequence needs at least 2 levels")
    meshes = []
    for h in np.geomspace(coarsest_h, finest_h, n_levels):
        meshes.append(generate_mesh(domain, h, boundary_ratio * h, grading_ratio))
    counts = [m.n_triangles for m in meshes]
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise MeshFailure(f"element counts not increasing: {counts}")
    return meshes
