import itertools

import numpy as np
import pytest

from fdmgdl.convex import (ConvexSolution, PatternSet, TrainingSlice, WidthError, certify, convex_objective,
                           enumerate_patterns, m_star, nonconvex_objective, pattern_bound, random_instance,
                           reconstruct_weights, sign_pattern, solve_convex_program, solve_nonconvex_multistart)


def _patterns(ps):
    return {tuple(int(v) for v in row) for row in ps.patterns}


def test_two_point_patterns_brute_force():
    X = np.array([[1.0], [-1.0]])
    brute = {tuple(sign_pattern(X, np.array([w]))) for w in (-1.0, 0.0, 1.0)}
    ps = enumerate_patterns(X)
    assert _patterns(ps) == brute == {(1, 0), (0, 1), (1, 1)}


def test_single_point_patterns():
    assert _patterns(enumerate_patterns(np.array([[1.0]]))) == {(1,), (0,)}


def test_witnesses_reproduce_patterns_and_relu_identity():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(6, 3))
    ps = enumerate_patterns(X)
    for D, w in zip(ps.patterns, ps.witnesses):
        np.testing.assert_array_equal(sign_pattern(X, w), D)
        np.testing.assert_array_equal(np.maximum(X @ w, 0), D * (X @ w))
    assert len(_patterns(ps)) == len(ps)


@pytest.mark.parametrize("seed", range(3))
def test_pattern_count_and_sampling_completeness(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(4, 2))
    ps = enumerate_patterns(X)
    # w = 0 adds the all-ones pattern to the generic-arrangement count
    assert len(ps) <= pattern_bound(4, 2) + 1
    dirs = rng.normal(size=(100_000, 2))
    sampled = {tuple(r) for r in (dirs @ X.T >= 0).astype(int)}
    assert sampled <= _patterns(ps)


def test_scale_limits():
    with pytest.raises(ValueError):
        enumerate_patterns(np.ones((13, 1)))
    with pytest.raises(ValueError):
        enumerate_patterns(np.ones((3, 5)))


def test_zero_target_convex():
    slc = random_instance(4, 2, seed=1)
    slc = TrainingSlice(slc.X, np.zeros(4), slc.A)
    sol = solve_convex_program(slc, enumerate_patterns(slc.X))
    assert sol.objective == 0 and not sol.v.any() and not sol.u.any()


def test_unconstrained_case_matches_least_squares():
    rng = np.random.default_rng(3)
    X = np.abs(rng.normal(size=(5, 2))) + 0.1
    A = rng.normal(size=(5, 5))
    e = rng.normal(size=5)
    slc = TrainingSlice(X, e, A)
    sol = solve_convex_program(slc, enumerate_patterns(X))
    # the all-ones cone contains the positive orthant, so every y = X c with c free is reachable there
    c = np.linalg.lstsq(A @ X, e, rcond=None)[0]
    lsq = float(np.sum((e - A @ X @ c) ** 2))
    assert sol.objective <= lsq + 1e-9


def test_three_point_instance_against_grid_search():
    X = np.array([[1.0], [-1.0], [2.0]])
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 3))
    a_dir, b_dir = np.array([1.0, 0.0, 2.0]), np.array([0.0, 1.0, 0.0])
    e = A @ (0.7 * a_dir - 1.2 * b_dir) + 0.3 * rng.normal(size=3)
    slc = TrainingSlice(X, e, A)
    sol = solve_convex_program(slc, enumerate_patterns(X))
    # cones: w > 0 spans t*(1,0,2), w < 0 spans s*(0,1,0); brute force over (t, s)
    grid = np.arange(-3.0, 3.0, 2e-3)
    best = np.inf
    Aa, Ab = A @ a_dir, A @ b_dir
    for t in grid:
        r = e[None, :] - t * Aa[None, :] - grid[:, None] * Ab[None, :]
        best = min(best, float(np.min(np.sum(r * r, axis=1))))
    assert abs(sol.objective - best) <= 1e-4


def test_against_cvxpy_oracle():
    cp = pytest.importorskip("cvxpy")
    for seed in range(4):
        slc = random_instance(4 + seed % 2, 1 + seed % 2, seed=seed)
        ps = enumerate_patterns(slc.X)
        sol = solve_convex_program(slc, ps)
        P, p = len(ps), slc.p
        V, U = cp.Variable((P, p)), cp.Variable((P, p))
        y = sum(cp.multiply(ps.patterns[i], slc.X @ (V[i] - U[i])) for i in range(P))
        cons = []
        for i in range(P):
            S = np.diag(2 * ps.patterns[i] - 1.0) @ slc.X
            cons += [S @ V[i] >= 0, S @ U[i] >= 0]
        prob = cp.Problem(cp.Minimize(cp.sum_squares(slc.e - slc.A @ y)), cons)
        prob.solve()
        assert sol.objective <= prob.value * (1 + 1e-6) + 1e-8
        assert sol.objective >= prob.value * (1 - 1e-5) - 1e-6
        viol = [np.min(np.diag(2 * D - 1.0) @ slc.X @ vec) for D, vv, uu in zip(ps.patterns, sol.v, sol.u)
                for vec in (vv, uu)]
        assert min(viol) >= -1e-8
        assert convex_objective(slc, ps, sol.v, sol.u) == pytest.approx(sol.objective, rel=1e-10, abs=1e-14)


def _sol(v, u):
    return ConvexSolution(np.array(v, dtype=float), np.array(u, dtype=float), 0.0, 0.0, 0.0, True)


def test_reconstruction_examples():
    net = reconstruct_weights(_sol([[3.0, 4.0]], [[0.0, 2.0]]), 2)
    np.testing.assert_allclose(net.W, [[0.6, 0.8], [0.0, 1.0]])
    np.testing.assert_allclose(net.alpha, [5.0, -2.0])
    zero = _sol([[0.0, 0.0]], [[0.0, 0.0]])
    assert m_star(zero) == 0 and not reconstruct_weights(zero, 3).W.any()
    with pytest.raises(WidthError):
        reconstruct_weights(_sol([[3.0, 4.0]], [[0.0, 2.0]]), 1)


def test_nonconvex_zero_target():
    slc = random_instance(3, 1, seed=0)
    slc = TrainingSlice(slc.X, np.zeros(3), slc.A)
    val, _ = solve_nonconvex_multistart(slc, 2, restarts=3, epochs=50)
    assert val == 0.0


def test_reconstruction_attains_convex_value():
    for seed in range(5):
        slc = random_instance(5, 2, seed=seed)
        ps = enumerate_patterns(slc.X)
        sol = solve_convex_program(slc, ps)
        net = reconstruct_weights(sol, m_star(sol))
        assert abs(nonconvex_objective(slc, net) - sol.objective) <= 1e-8 * max(1.0, sol.objective)


def test_certify_zero_target():
    slc = random_instance(3, 2, seed=2)
    rep = certify(TrainingSlice(slc.X, np.zeros(3), slc.A), restarts=2, epochs=20)
    assert (rep.p_nc, rep.p_c, rep.m_star, rep.gap) == (0.0, 0.0, 0, 0.0) and rep.reconstruction_ok


def test_certify_random_four_points():
    slc = random_instance(4, 2, seed=7)
    rep = certify(slc, restarts=20, epochs=3000)
    assert rep.gap >= -1e-8 and abs(rep.gap) <= 1e-6 and rep.reconstruction_ok


def test_certify_width_insufficient():
    slc = random_instance(5, 2, seed=1)
    full = certify(slc, restarts=2, epochs=10)
    if full.m_star < 2:
        pytest.skip("instance optimum uses a single neuron")
    rep = certify(slc, m_l=full.m_star - 1, restarts=4, epochs=200)
    assert not rep.width_ok and not rep.reconstruction_ok and rep.gap >= -1e-8


def test_pattern_set_len():
    assert len(PatternSet(np.zeros((3, 2)), np.zeros((3, 1)))) == 3


def test_bound_formula():
    assert pattern_bound(4, 2) == 2 * (1 + 3)
    assert [pattern_bound(n, 1) for n in range(1, 5)] == [2, 2, 2, 2]
    assert pattern_bound(3, 3) == 2 * sum(1 for _ in itertools.product([0, 1], repeat=2))
