import csv
import math

import numpy as np
import pytest
import scipy.sparse as sp

from fdmgdl.fdm import (InterpolationKind, SolverError, assemble, dump_system, fdm_reference_run, interpolate,
                        interpolate_field, quadratic_basis, solve_linear, solve_sparse, write_field_csv)
from fdmgdl.grid import GridSpec, build_grid
from fdmgdl.helmholtz import ProblemSpec, seminorm
from fdmgdl.metrics import rse

ML, TQ = InterpolationKind.MULTILINEAR, InterpolationKind.TENSOR_QUADRATIC


def _linear_1d():
    g = lambda p: p[:, 0]  # noqa: E731
    return ProblemSpec(GridSpec(0.0, 1.0, 3, 1), kappa=0.0, boundary=g, exact=g)


def test_linear_1d_dense_oracle():
    spec = _linear_1d()
    h = 0.25
    hand = np.array([[-2, 1, 0], [1, -2, 1], [0, 1, -2]]) / h**2
    oracle = np.linalg.solve(hand, [0.0, 0.0, -1.0 / h**2])
    sol = solve_sparse(assemble(spec), spec)
    np.testing.assert_allclose(oracle, [0.25, 0.5, 0.75], atol=1e-14)
    np.testing.assert_allclose(sol.values, oracle, atol=1e-14)
    assert sol.residual <= 1e-10 and sol.method == "dense"


@pytest.mark.parametrize("d", [1, 2, 3])
def test_diagonal_entries(d):
    spec = ProblemSpec(GridSpec(0.0, 1.0, 4, d), kappa=1.5)
    A = assemble(spec).matrix()
    h = spec.grid_spec.h
    np.testing.assert_allclose(A.diagonal(), -2 * d / h**2 + 2.25)
    assert (A != A.T).nnz == 0


def test_constant_solution_consistent():
    c, kappa = 2.5, 3.0
    spec = ProblemSpec(GridSpec(0.0, 1.0, 6, 2), kappa=kappa, source=kappa**2 * c, boundary=c)
    np.testing.assert_allclose(solve_sparse(assemble(spec), spec).values, c, rtol=1e-12)


def test_identity_system():
    rhs = np.arange(1.0, 6.0)
    for method in ("dense", "splu", "bicgstab"):
        x, res, used = solve_linear(sp.identity(5, format="csr"), rhs, method)
        np.testing.assert_allclose(x, rhs) and res == 0.0


def test_solver_paths_agree():
    spec = ProblemSpec(GridSpec(0.0, 1.0, 12, 2), kappa=2.0, boundary=lambda p: p[:, 0] * p[:, 1])
    system = assemble(spec)
    dense = solve_sparse(system, spec, "dense").values
    np.testing.assert_allclose(solve_sparse(system, spec, "splu").values, dense, rtol=1e-11)
    np.testing.assert_allclose(solve_sparse(system, spec, "bicgstab").values, dense, rtol=1e-8)


def test_iterative_failure_is_reported():
    spec = ProblemSpec(GridSpec(0.0, 1.0, 30, 2), kappa=40.0, boundary=1.0)
    system = assemble(spec)
    with pytest.raises(SolverError) as err:
        solve_linear(system.matrix(), system.rhs, "bicgstab", tol=1e-30)
    assert err.value.residual > 0


def test_interpolation_reproduces_nodes_and_center():
    grid = build_grid(GridSpec(0.0, 1.0, 5, 2))
    rng = np.random.default_rng(0)
    closure = rng.normal(size=grid.closure_shape)
    for kind in (ML, TQ):
        np.testing.assert_allclose(interpolate_field(grid, closure, grid.closure_points, kind), closure.ravel(),
                                   atol=1e-14)
    h = grid.h
    centre = interpolate_field(grid, closure, [[2.5 * h, 3.5 * h]], ML)[0]
    assert centre == pytest.approx(closure[2:4, 3:5].mean(), abs=1e-15)


def test_quadratic_basis_values():
    b = quadratic_basis(np.array([0.0, 0.5, 1.0, 0.3]))
    assert b[0, 0] == 1 and b[1, 1] == 1 and b[2, 2] == 1
    assert b[3].sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("m", [4, 5])
def test_multilinear_exactness(m):
    grid = build_grid(GridSpec(0.0, 1.0, m, 2))
    u = lambda p: 3 + 2 * p[:, 0] - p[:, 1] + 5 * p[:, 0] * p[:, 1]  # noqa: E731
    pts = np.random.default_rng(m).uniform(0, 1, (200, 2))
    got = interpolate_field(grid, u(grid.closure_points).reshape(grid.closure_shape), pts, ML)
    assert np.max(np.abs(got - u(pts))) <= 1e-12


@pytest.mark.parametrize("m,d", [(4, 2), (5, 2), (6, 3), (3, 1)])
def test_tensor_quadratic_exactness(m, d):
    grid = build_grid(GridSpec(-1.0, 2.0, m, d))
    u = lambda p: np.prod(p**2, axis=1) + p[:, 0]  # noqa: E731
    pts = np.random.default_rng(m).uniform(-1, 2, (200, d))
    got = interpolate_field(grid, u(grid.closure_points).reshape(grid.closure_shape), pts, TQ)
    assert np.max(np.abs(got - u(pts))) <= 1e-10


def test_partition_of_unity():
    grid = build_grid(GridSpec(0.0, 1.0, 7, 3))
    pts = np.random.default_rng(1).uniform(0, 1, (100, 3))
    for kind in (ML, TQ):
        np.testing.assert_allclose(interpolate_field(grid, np.ones(grid.closure_shape), pts, kind), 1.0, atol=1e-13)


def test_reference_run_linear_exact():
    u = lambda p: 1 + p[:, 0] - 2 * p[:, 1]  # noqa: E731
    spec = ProblemSpec(GridSpec(0.0, 1.0, 6, 2), kappa=0.0, boundary=u, exact=u)
    pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
    out = fdm_reference_run(spec, test_points=pts)
    assert out["tr_rse"] <= 1e-24 and out["te_rse_multilinear"] <= 1e-24
    assert "te_rse_tensor_quadratic" in out
    zero = interpolate(out["solution"], pts) * 0
    assert rse(zero, u(pts)) == 1.0


def _sine(kappa, m):
    c = kappa / math.sqrt(2)
    u = lambda p: np.sin(c * p[:, 0]) * np.sin(c * p[:, 1])  # noqa: E731
    return ProblemSpec(GridSpec(0.0, 1.0, m, 2), kappa=kappa, boundary=u, exact=u)


def test_second_order_convergence_sine():
    r20 = fdm_reference_run(_sine(10.0, 20))["tr_rse"]
    r41 = fdm_reference_run(_sine(10.0, 41))["tr_rse"]
    # RSE is squared, so the nodal error ratio is the square root
    assert 3.2 <= math.sqrt(r20 / r41) <= 4.8


def test_defect_of_exact_restriction_is_second_order():
    defects = []
    for m in (20, 41):
        spec = _sine(10.0, m)
        system = assemble(spec)
        u = spec.exact(system.grid.interior_points)
        defects.append(seminorm(system.matrix() @ u - system.rhs))
    assert 3.2 <= defects[0] / defects[1] <= 4.8


def test_exports(tmp_path):
    spec = _linear_1d()
    system = assemble(spec)
    dump_system(system, tmp_path / "sys")
    rows = list(csv.reader(open(tmp_path / "sys" / "triplets.csv")))
    assert rows[0] == ["row", "col", "value"] and len(rows) == 1 + 7
    A = np.zeros((3, 3))
    for r, c, v in rows[1:]:
        A[int(r), int(c)] = float(v)
    np.testing.assert_array_equal(A, system.matrix().toarray())
    rhs = [float(r[1]) for r in list(csv.reader(open(tmp_path / "sys" / "rhs.csv")))[1:]]
    np.testing.assert_array_equal(rhs, system.rhs)
    write_field_csv(tmp_path / "f.csv", np.array([[0.0, 1.0]]), np.array([1 + 2j]), ("x", "y"), ("re", "im"))
    assert open(tmp_path / "f.csv").read() == "x,y,re,im\n0.0,1.0,1.0,2.0\n"
