import numpy as np
import pytest
from scipy.integrate import trapezoid

import sdritz.problems as pr
from sdritz.problems import symbolic
from sdritz.sampling import RngStream, standard_normal_vec

PROBLEMS = [('p1_1d_lognormal', 1), ('p2_neumann', 2), ('p2_neumann', 3), ('p3_dirichlet', 2),
            ('p4_langevin', 4)]
CLOSED_FORM = [p for p in PROBLEMS if p[0] != 'p1_1d_lognormal']


def _draw(problem, n, seed=0):
    rng = RngStream(seed)
    X = problem.domain.sample_interior(rng, n)
    Z = problem.z_law.sample(rng, n)
    return X, Z


def _p1_oracle(z, x, n_nodes=1000001):
    k = np.arange(1, 6)

    def inverse_kappa(xi):
        angles = np.pi * np.outer(xi, k)
        V = (np.cos(angles) @ z[:5] + np.sin(angles) @ z[5:]) / np.sqrt(5)
        return np.exp(-0.1 * V)

    full = np.linspace(-1.0, 1.0, n_nodes)
    part = np.linspace(-1.0, x, n_nodes)
    return trapezoid(inverse_kappa(part), part) / trapezoid(inverse_kappa(full), full)


def test_problem_ids():
    assert pr.problem_ids() == ['p1_1d_lognormal', 'p2_neumann', 'p3_dirichlet', 'p4_langevin']


def test_make_problem_errors():
    with pytest.raises(ValueError):
        pr.make_problem('p5')
    with pytest.raises(ValueError):
        pr.make_problem('p1_1d_lognormal', d=2)
    with pytest.raises(ValueError):
        pr.make_problem('p3_dirichlet', d=3)
    with pytest.raises(ValueError):
        pr.make_problem('p2_neumann', penalty_beta=10.0)


def test_problem_dimensions():
    assert pr.make_problem('p1_1d_lognormal').input_dim == 11
    assert pr.make_problem('p2_neumann', d=5).input_dim == 10
    assert pr.make_problem('p3_dirichlet').input_dim == 4
    assert pr.make_problem('p4_langevin', d=10).input_dim == 11


def test_penalty_defaults():
    assert pr.make_problem('p1_1d_lognormal').penalty_beta == 50.0
    assert pr.make_problem('p2_neumann').penalty_beta == 0.0
    assert pr.make_problem('p3_dirichlet').penalty_beta == 500.0
    assert pr.make_problem('p4_langevin').with_beta(100.0).penalty_beta == 100.0


def test_fixed_values():
    p2 = pr.make_problem('p2_neumann')
    assert p2.kappa(np.zeros((1, 2)), np.array([[0.5, 0.5]]))[0] == 4.0
    p3 = pr.make_problem('p3_dirichlet')
    assert p3.exact_solution(np.array([[0.5, 0.5]]), np.zeros((1, 2)))[0] == pytest.approx(1.0 / 3, rel=1e-15)
    p4 = pr.make_problem('p4_langevin')
    x = RngStream(1).uniform(-0.5, 0.5, (5, 4))
    np.testing.assert_array_equal(p4.exact_solution(x, np.zeros((5, 1))), 1.0)


def test_p1_constant_field():
    z = np.zeros(10)
    for x in (-1.0, -0.5, 0.0, 0.3, 1.0):
        assert pr.exact_1d_quadrature(z, x) == pytest.approx((x + 1) / 2, abs=1e-10)


def test_p1_quadrature_against_trapezoid():
    z = standard_normal_vec(RngStream(7), 10, 1)[0]
    for x in (-0.6, 0.3):
        assert abs(pr.exact_1d_quadrature(z, x) - _p1_oracle(z, x)) <= 1e-9


def test_p1_quadrature_arguments():
    with pytest.raises(ValueError):
        pr.exact_1d_quadrature(np.zeros(10), 1.5)
    with pytest.raises(ValueError):
        pr.exact_1d_quadrature(np.zeros(10), 0.0, n_nodes=32)


def test_p1_exact_gradient():
    problem = pr.make_problem('p1_1d_lognormal')
    X, Z = _draw(problem, 20)
    X = 0.9 * X
    h = 1e-5
    numeric = (problem.exact_solution(X + h, Z) - problem.exact_solution(X - h, Z)) / (2 * h)
    np.testing.assert_allclose(problem.exact_gradient(X, Z)[:, 0], numeric, rtol=1e-6)


def test_p1_covariance_kernel():
    assert pr.p1_covariance(0.3, 0.3) == pytest.approx(1.0)
    assert pr.p1_covariance(-1.0, 1.0) == pytest.approx(1.0)
    assert abs(pr.p1_covariance(0.0, 0.5)) < 1e-15


def test_p1_covariance_monte_carlo():
    n = 100000
    for x1, x2 in ((0.3, 0.3), (-0.2, 0.4), (0.0, 0.5)):
        estimate = pr.covariance_check_p1(x1, x2, n, RngStream(3))
        assert abs(estimate - pr.p1_covariance(x1, x2)) <= 4 / np.sqrt(n)


@pytest.mark.parametrize('problem_id, d', [p for p in PROBLEMS if p[0] != 'p2_neumann'])
def test_boundary_consistency(problem_id, d):
    problem = pr.make_problem(problem_id, d)
    rng = RngStream(4)
    S = problem.domain.sample_boundary(rng, 1000)
    Z = problem.z_law.sample(rng, 1000)
    np.testing.assert_allclose(problem.exact_solution(S, Z), problem.boundary_data(S, Z), rtol=0, atol=1e-10)


@pytest.mark.parametrize('problem_id, d', CLOSED_FORM)
def test_strong_form_residual(problem_id, d):
    problem = pr.make_problem(problem_id, d)
    X, Z = _draw(problem, 1000, seed=5)
    assert symbolic.strong_form_residual(problem, X, Z).max() <= 1e-6


@pytest.mark.parametrize('problem_id, d', CLOSED_FORM)
def test_exact_gradient_matches_symbolic(problem_id, d):
    problem = pr.make_problem(problem_id, d)
    form = symbolic.strong_form(problem)
    X, Z = _draw(problem, 200, seed=6)
    np.testing.assert_allclose(problem.exact_solution(X, Z), form.exact(X, Z), rtol=1e-12)
    expected = np.column_stack([g(X, Z) for g in form.gradient])
    np.testing.assert_allclose(problem.exact_gradient(X, Z), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize('problem_id, d', CLOSED_FORM)
def test_source_matches_symbolic(problem_id, d):
    problem = pr.make_problem(problem_id, d)
    X, Z = _draw(problem, 200, seed=6)
    np.testing.assert_allclose(problem.source(X, Z), symbolic.strong_form(problem).source(X, Z),
                               rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize('d', [1, 2, 3])
def test_natural_boundary_condition(d):
    problem = pr.make_problem('p2_neumann', d)
    rng = RngStream(9)
    S = problem.domain.sample_boundary(rng, 1000)
    Z = problem.z_law.sample(rng, 1000)
    assert np.abs(symbolic.normal_derivative(problem, S, Z)).max() <= 1e-10


def test_p1_has_no_strong_form():
    with pytest.raises(ValueError):
        symbolic.strong_form(pr.make_problem('p1_1d_lognormal'))


@pytest.mark.parametrize('problem_id, d', PROBLEMS)
def test_lagrangian_matches_symbolic(problem_id, d):
    problem = pr.make_problem(problem_id, d)
    X, Z = _draw(problem, 200, seed=10)
    rng = RngStream(11)
    u = rng.uniform(-2.0, 2.0, 200)
    p = rng.uniform(-2.0, 2.0, (200, d))
    value, du, dp = problem.lagrangian(X, Z, u, p)
    sym_value, sym_du, sym_dp = symbolic.symbolic_lagrangian(problem)
    np.testing.assert_allclose(value, sym_value(X, Z, u, p), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(du, sym_du(X, Z, u, p), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(dp, sym_dp(X, Z, u, p), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize('problem_id, d', PROBLEMS)
def test_coercivity(problem_id, d):
    problem = pr.make_problem(problem_id, d)
    X, Z = _draw(problem, 100000, seed=12)
    assert problem.kappa(X, Z).min() > 0


def test_sample_batch_membership():
    for problem_id, d in (('p3_dirichlet', 2), ('p4_langevin', 4)):
        problem = pr.make_problem(problem_id, d)
        batch = pr.sample_batch(problem, 2560, pr.batch_streams(0))
        assert np.all(problem.domain.contains(batch.X))
        assert np.all(problem.domain.on_boundary(batch.S))
        assert np.all(problem.z_law.contains(batch.Z))
    batch = pr.sample_batch(pr.make_problem('p2_neumann'), 10, pr.batch_streams(0))
    assert batch.S is None


def test_sample_batch_normal_law():
    n = 100000
    batch = pr.sample_batch(pr.make_problem('p1_1d_lognormal'), n, pr.batch_streams(0))
    assert batch.Z.shape == (n, 10)
    assert np.all(np.abs(batch.Z.var(axis=0, ddof=1) - 1) <= 0.02)


def test_cutoff_vanishes_on_boundary():
    for problem_id, d in (('p1_1d_lognormal', 1), ('p3_dirichlet', 2), ('p4_langevin', 3)):
        problem = pr.make_problem(problem_id, d)
        S = problem.domain.sample_boundary(RngStream(13), 500)
        value, grad = problem.cutoff(S)
        assert np.abs(value).max() <= 1e-12
        assert grad.shape == S.shape


def test_cutoff_gradient():
    problem = pr.make_problem('p3_dirichlet')
    X = problem.domain.sample_interior(RngStream(14), 50)
    _, grad = problem.cutoff(X)
    h = 1e-6
    for i in range(2):
        step = np.zeros(2)
        step[i] = h
        numeric = (problem.cutoff(X + step)[0] - problem.cutoff(X - step)[0]) / (2 * h)
        np.testing.assert_allclose(grad[:, i], numeric, rtol=1e-6, atol=1e-10)


def test_figure_points():
    for problem_id in pr.problem_ids():
        problem = pr.make_problem(problem_id)
        points = pr.figure_points(problem)
        assert len(points) == 3
        assert np.all(problem.domain.contains(np.vstack(points)))
