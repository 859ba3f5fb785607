import math

import numpy as np
import pytest

from conftest import edge_use_counts
from mhdcavity.geometry import BoundaryTag, CavityGeometry, rectangle_domain, \
    triangular_cavity_geometry
from mhdcavity.mesh import (Sizing, build_mesh, check_mesh, generate_mesh, grid_sequence,
                            mesh_quality, structured_rectangle_mesh)


def test_unit_square_coarse_is_two_triangles():
    m = generate_mesh(rectangle_domain(), 1.5, 1.5)
    assert m.n_triangles == 2
    assert m.signed_areas().sum() == pytest.approx(1.0)
    q = mesh_quality(m)
    assert q["min_angle"] == pytest.approx(45.0)
    assert q["max_angle"] == pytest.approx(90.0)


def test_equilateral_quality():
    pts = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    tags = {(0, 1): BoundaryTag.BottomAdiabatic, (1, 2): BoundaryTag.RightWall,
            (0, 2): BoundaryTag.LeftWall}
    m = build_mesh(pts, np.array([[0, 1, 2]]), tags)
    q = mesh_quality(m)
    assert q["min_angle"] == pytest.approx(60.0) and q["max_angle"] == pytest.approx(60.0)
    assert q["element_count"] == len(m.triangles) == 1
    assert q["node_count"] == 6


def test_clockwise_input_is_reoriented():
    pts = np.array([[0, 0], [1, 0], [0, 1]], float)
    tags = {(0, 1): BoundaryTag.BottomAdiabatic, (1, 2): BoundaryTag.RightWall,
            (0, 2): BoundaryTag.LeftWall}
    m = build_mesh(pts, np.array([[0, 2, 1]]), tags)
    assert (m.signed_areas() > 0).all()


def test_cavity_mesh_invariants(cavity, cavity_mesh):
    m = cavity_mesh
    check_mesh(m, 20.0)
    assert (m.signed_areas() > 0).all()
    counts = edge_use_counts(m.triangles)
    assert set(np.unique(counts)) <= {1, 2}
    assert (counts == 1).sum() == len(m.boundary_edges)
    # Euler characteristic: V - E + F = 1 - holes (outer face excluded)
    assert m.n_vertices - m.n_edges + m.n_triangles == 1 - len(cavity.holes)
    assert set(m.tags) == {BoundaryTag.LeftWall, BoundaryTag.RightWall, BoundaryTag.Lid,
                           BoundaryTag.BottomAdiabatic, BoundaryTag.HeaterLeft,
                           BoundaryTag.HeaterRight, BoundaryTag.Obstacle}
    assert mesh_quality(m)["min_angle"] >= 20.0


def test_cavity_mesh_area(cavity, cavity_mesh):
    tol = 10 * cavity.arc_chord_tolerance * cavity.perimeter
    assert abs(cavity_mesh.signed_areas().sum() - cavity.area) < tol


def test_arc_fidelity(cavity, cavity_mesh):
    m = cavity_mesh
    for tag in (BoundaryTag.HeaterLeft, BoundaryTag.HeaterRight):
        center, r = cavity.circles[tag]
        nodes = m.nodes[m.boundary_nodes(tag)]
        dist = np.abs(np.linalg.norm(nodes - np.asarray(center), axis=1) - r)
        assert dist.max() < cavity.arc_chord_tolerance
        # mid-edge nodes are snapped exactly
        mids = m.edge_nodes[m.boundary_edge_ids(tag)]
        assert np.allclose(np.linalg.norm(mids - np.asarray(center), axis=1), r, atol=1e-12)


def test_boundary_refinement(cavity_mesh):
    m = cavity_mesh
    area = m.signed_areas()
    at_wall = np.zeros(m.n_triangles, bool)
    at_wall[m.boundary_edges[:, 0]] = True
    assert area[at_wall].mean() < area[~at_wall].mean()
    assert mesh_quality(m)["min_boundary_h"] <= m.sizing.h_interior


def test_production_sizing_count(cavity):
    m = generate_mesh(cavity, 0.05, 0.02)
    assert 2000 <= m.n_triangles <= 10000


def test_grid_sequence(cavity):
    meshes = grid_sequence(cavity, 6)
    counts = [m.n_triangles for m in meshes]
    assert all(b > a for a, b in zip(counts, counts[1:]))
    assert 200 <= counts[0] <= 400
    ratios = np.diff(np.log(counts))
    assert np.all(np.exp(ratios) > 1.3) and np.all(np.exp(ratios) < 2.5)
    assert all(set(m.tags) == set(meshes[0].tags) for m in meshes)


def test_grid_sequence_two_levels(cavity):
    assert len(grid_sequence(cavity, 2, 0.4, 0.2)) == 2
    with pytest.raises(ValueError):
        grid_sequence(cavity, 1)


def test_sizing_validation():
    with pytest.raises(ValueError):
        Sizing(0.1, 0.2)


def test_triangle_domain_mesh():
    m = generate_mesh(triangular_cavity_geometry(), 0.1, 0.05)
    check_mesh(m)
    assert m.signed_areas().sum() == pytest.approx(0.5)
    assert set(m.tags) == {BoundaryTag.SlidingWall, BoundaryTag.HeatedWall,
                           BoundaryTag.BottomAdiabatic}


def test_structured_mesh():
    m = structured_rectangle_mesh(4, 3, 2.0, 1.0)
    assert m.n_triangles == 24
    assert m.signed_areas().sum() == pytest.approx(2.0)
    assert (m.signed_areas() > 0).all()


def test_generation_is_deterministic(cavity):
    a = generate_mesh(cavity, 0.2, 0.08)
    b = generate_mesh(cavity, 0.2, 0.08)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


def test_vtk_export(tmp_path, square_mesh):
    from mhdcavity.postprocess import read_vtk
    path = tmp_path / "m.vtk"
    square_mesh.write_vtk(path)
    data = read_vtk(path)
    assert np.array_equal(data["points"][:, :2], square_mesh.vertices)
    assert (data["cell_types"] == 5).all()
