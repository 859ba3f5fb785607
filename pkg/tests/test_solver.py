import csv

import numpy as np
import pytest
import scipy.sparse as sp

from mhdcavity.assembly import (BoundaryConditions, DimensionlessGroups, DirichletRule, DofMap,
                                DiscreteSystem, cavity_conditions)
from mhdcavity.geometry import BoundaryTag, rectangle_domain
from mhdcavity.mesh import generate_mesh
from mhdcavity.solver import (NotConverged, SingularMatrix, SolverOptions,
                              continuation_schedule, continuation_solve, solve_linear,
                              solve_steady)


def test_identity_system():
    b = np.zeros(5)
    b[0] = 1.0
    x = solve_linear(DiscreteSystem(sp.identity(5, format="csr"), b, None))
    assert np.array_equal(x, b)


def test_diagonal_system():
    A = sp.csr_matrix(np.diag([2.0, 4.0]))
    x = solve_linear(DiscreteSystem(A, np.array([2.0, 8.0]), None))
    assert np.allclose(x, [1.0, 2.0])


def test_linear_residual_bound(cavity_mesh, mild_groups):
    from mhdcavity.assembly import PicardAssembler
    from mhdcavity.solver import _Constraints, initial_state
    asm = PicardAssembler(cavity_mesh, mild_groups)
    cons = _Constraints(cavity_mesh, cavity_conditions(), asm.dofs)
    rng = np.random.default_rng(0)
    state = initial_state(cavity_mesh, cavity_conditions(), asm.dofs)
    state["U"] = state["U"] + 0.1 * rng.normal(size=state["U"].shape)
    system = cons.apply(asm.system(state))
    x = solve_linear(system)
    r = np.linalg.norm(system.matrix @ x - system.rhs)
    assert r <= 1e-10 * (1 + np.linalg.norm(system.rhs))


def test_stokes_two_triangles_zero_data():
    mesh = generate_mesh(rectangle_domain(), 1.5, 1.5)
    sol = solve_steady(mesh, DimensionlessGroups(), SolverOptions(),
                       cavity_conditions(lid_speed=0.0, hot=0.0))
    assert all(np.all(v == 0) for v in sol.fields().values())


def test_missing_pressure_pin_is_singular(square_mesh):
    bcs = cavity_conditions()
    bcs = BoundaryConditions(bcs.rules, pressure_pin=None)
    with pytest.raises(SingularMatrix, match="pressure"):
        solve_steady(square_mesh, DimensionlessGroups(), SolverOptions(max_iters=2), bcs)


def test_null_input_single_iteration(cavity_mesh, mild_groups):
    sol = solve_steady(cavity_mesh, mild_groups, SolverOptions(),
                       cavity_conditions(lid_speed=0.0, hot=0.0))
    assert sol.converged and sol.iterations == 1
    assert all(np.abs(v).max() == 0 for v in sol.fields().values())


def test_heaters_disabled_reduce_to_lid_driven(cavity_mesh):
    g = DimensionlessGroups(Re=100.0, Pr=7.0, Ri=5.0, Ha=0.0, Br=20.0, Le=20.0)
    cold = cavity_conditions(hot=0.0)
    a = solve_steady(cavity_mesh, g, SolverOptions(), cold)
    b = solve_steady(cavity_mesh, g.replace(Ri=0.0), SolverOptions(), cold)
    assert np.abs(a.theta).max() == 0 and np.abs(a.C).max() == 0
    assert np.allclose(a.U, b.U, atol=1e-12) and np.allclose(a.V, b.V, atol=1e-12)


def test_converged_solution_properties(cavity_solution, cavity_mesh):
    sol = cavity_solution
    assert sol.converged
    assert max(sol.history[-1].values()) <= 1e-5
    crit = [max(h.values()) for h in sol.history[-5:]]
    assert all(b < a for a, b in zip(crit, crit[1:]))
    assert len(sol.rms_history) == len(sol.history)
    # Dirichlet values hold exactly
    heater = cavity_mesh.boundary_nodes(BoundaryTag.HeaterLeft)
    assert np.all(sol.theta[heater] == 1.0) and np.all(sol.U[heater] == 0.0)
    lid = [n for n in cavity_mesh.boundary_nodes(BoundaryTag.Lid)
           if 0 < cavity_mesh.nodes[n, 0] < cavity_mesh.nodes[:, 0].max()]
    assert np.all(sol.U[lid] == 1.0)


def test_fixed_point_consistency(cavity_solution, cavity_mesh, mild_groups):
    again = solve_steady(cavity_mesh, mild_groups, SolverOptions(max_iters=1),
                         cavity_conditions(), initial=cavity_solution, raise_on_failure=False)
    assert max(again.history[0].values()) <= 1e-5
    warm = solve_steady(cavity_mesh, mild_groups, SolverOptions(), cavity_conditions(),
                        initial=cavity_solution)
    assert warm.iterations <= 2


def test_determinism(cavity_mesh, mild_groups):
    opts = SolverOptions(max_iters=6)
    a = solve_steady(cavity_mesh, mild_groups, opts, raise_on_failure=False)
    b = solve_steady(cavity_mesh, mild_groups, opts, raise_on_failure=False)
    assert a.iterations == b.iterations
    assert a.history == b.history
    assert np.array_equal(a.theta, b.theta)


def test_not_converged_carries_partial(cavity_mesh, mild_groups):
    with pytest.raises(NotConverged) as info:
        solve_steady(cavity_mesh, mild_groups, SolverOptions(max_iters=2))
    sol = info.value.solution
    assert sol is not None and not sol.converged and sol.iterations == 2
    assert len(sol.history) == 2


def test_anderson_depth_zero_is_plain_relaxation(cavity_mesh, mild_groups):
    a = solve_steady(cavity_mesh, mild_groups, SolverOptions(max_iters=4),
                     raise_on_failure=False)
    b = solve_steady(cavity_mesh, mild_groups, SolverOptions(max_iters=4, anderson_depth=0),
                     raise_on_failure=False)
    assert a.history == b.history


def test_anderson_converges_to_same_state(cavity_solution, cavity_mesh, mild_groups):
    acc = solve_steady(cavity_mesh, mild_groups, SolverOptions(anderson_depth=4))
    assert np.abs(acc.theta - cavity_solution.theta).max() < 1e-4
    assert np.abs(acc.U - cavity_solution.U).max() < 1e-4


def test_history_csv(tmp_path, cavity_solution):
    path = tmp_path / "h.csv"
    cavity_solution.write_history(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iteration", "dU", "dV", "dP", "dTheta", "dC"]
    assert len(rows) == cavity_solution.iterations + 1


@pytest.mark.parametrize("kw", [{"tol": 0.0}, {"relaxation": 0.0}, {"relaxation": 1.5},
                                {"max_iters": 0}, {"continuation_steps": 0},
                                {"anderson_depth": -1}])
def test_options_validation(kw):
    with pytest.raises(ValueError):
        SolverOptions(**kw)


def test_continuation_schedule():
    g = DimensionlessGroups(Ri=10.0, Ha=150.0)
    stages = continuation_schedule(g, 3)
    ri = [s.Ri for s in stages]
    assert ri[:2] == pytest.approx([10 ** (1 / 3), 10 ** (2 / 3)])
    assert stages[-1] == g
    assert [s.Ha for s in stages][:2] == pytest.approx([150 ** (1 / 3), 150 ** (2 / 3)])
    assert continuation_schedule(g.replace(Ri=0.5, Ha=0.0), 4)[0].Ri == 0.5


def test_single_stage_continuation_matches_steady(cavity_solution, cavity_mesh, mild_groups):
    sol = continuation_solve(cavity_mesh, mild_groups, SolverOptions(), cavity_conditions())
    assert np.array_equal(sol.theta, cavity_solution.theta)
    assert sol.iterations == cavity_solution.iterations


def test_continuation_failure_reports_stage(cavity_mesh, mild_groups):
    with pytest.raises(NotConverged) as info:
        continuation_solve(cavity_mesh, mild_groups.replace(Ri=8.0),
                           SolverOptions(max_iters=3, continuation_steps=3))
    assert info.value.stage == 1
    assert "stage 1" in str(info.value)


def test_continuation_ramp_converges(cavity_mesh, mild_groups):
    g = mild_groups.replace(Ri=2.0, Ha=20.0)
    sol = continuation_solve(cavity_mesh, g, SolverOptions(continuation_steps=2))
    assert sol.converged and sol.groups == g
