import dataclasses
import math

import numdifftools as nd
import numpy as np
import pytest

import sdritz.gradnet as gn
from sdritz.problems import Batch, ExactRealization, batch_streams, make_problem, sample_batch
from sdritz.sampling import RngStream
from sdritz.stats.evaluation import relative_error


def _reference_forward(params, x):
    h = [float(v) for v in x]
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        h = [math.tanh(sum(W[i, j] * h[j] for j in range(len(h))) + b[i]) for i in range(W.shape[0])]
    W, b = params.weights[-1], params.biases[-1]
    return sum(W[0, j] * h[j] for j in range(len(h))) + b[0]


def _batch(problem, n, seed=0):
    return sample_batch(problem, n, batch_streams(seed))


def test_init_deterministic():
    a = gn.init_params([3, 16, 16, 1], seed=42)
    b = gn.init_params([3, 16, 16, 1], seed=42)
    assert a == b
    assert gn.init_params([3, 16, 16, 1], seed=43) != a


def test_init_bounds_and_biases():
    params = gn.init_params([3, 16, 16, 1], seed=42)
    for W, b in zip(params.weights, params.biases):
        bound = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        assert np.all(np.abs(W) <= bound)
        assert np.all(b == 0)


@pytest.mark.parametrize('sizes', [[3, 1], [3, 0, 1], [3, 4, 2], []])
def test_invalid_layer_sizes(sizes):
    with pytest.raises(ValueError):
        gn.init_params(sizes, seed=0)


def test_param_count_and_layout():
    params = gn.init_params([3, 4, 1], seed=1)
    assert params.n_params == 3 * 4 + 4 + 4 + 1
    flat = params.flatten()
    np.testing.assert_array_equal(flat[:3], params.weights[0][0])
    np.testing.assert_array_equal(flat[12:16], params.biases[0])
    assert gn.MlpParams.from_flat([3, 4, 1], flat) == params
    with pytest.raises(ValueError):
        gn.MlpParams.from_flat([3, 4, 1], flat[:-1])


def test_zero_network():
    params = gn.MlpParams.zeros([3, 16, 16, 1])
    assert gn.forward(params, [0.2, 0.4, 0.6]) == 0.0


def test_output_bias_at_origin():
    params = gn.MlpParams.zeros([2, 4, 1])
    params.biases[-1][0] = 0.7
    assert gn.forward(params, [0.0, 0.0]) == 0.7


def test_forward_matches_reference():
    params = gn.init_params([4, 8, 8, 1], seed=3)
    inputs = RngStream(5).uniform(-1.0, 1.0, (20, 4))
    values = gn.forward_batch(params, inputs)
    for x, value in zip(inputs, values):
        expected = _reference_forward(params, x)
        assert abs(value - expected) <= 1e-13 * max(1.0, abs(expected))


def test_forward_rejects_wrong_input():
    params = gn.init_params([3, 4, 1], seed=0)
    with pytest.raises(ValueError):
        gn.forward(params, [1.0, 2.0])


def test_spatial_grad_at_origin():
    params = gn.init_params([3, 4, 1], seed=1)
    result = gn.forward_with_spatial_grad(params, np.zeros(3), 2)
    expected = params.weights[0][:, :2].T @ params.weights[1][0]
    np.testing.assert_allclose(result.spatial_grad, expected, rtol=1e-14, atol=1e-15)


def test_spatial_grad_finite_differences():
    params = gn.init_params([5, 16, 16, 1], seed=7)
    inputs = RngStream(8).uniform(-1.0, 1.0, (10, 5))
    d = 3
    for row in inputs:
        value, grad = gn.forward_with_spatial_grad(params, row, d)
        assert value == pytest.approx(gn.forward(params, row), rel=1e-14)
        numeric = []
        for i in range(d):
            h = 1e-5 * max(1.0, abs(row[i]))
            up, down = row.copy(), row.copy()
            up[i] += h
            down[i] -= h
            numeric.append((gn.forward(params, up) - gn.forward(params, down)) / (2 * h))
        assert relative_error(grad, numeric).max() <= 1e-6


def test_spatial_dimension_range():
    params = gn.init_params([3, 4, 1], seed=1)
    with pytest.raises(ValueError):
        gn.forward_with_spatial_grad(params, np.zeros(3), 4)
    with pytest.raises(ValueError):
        gn.NetworkRealization(params, 0)


def test_sample_loss_zero_network():
    for problem_id in ('p2_neumann', 'p3_dirichlet'):
        problem = make_problem(problem_id)
        params = gn.MlpParams.zeros([problem.input_dim, 8, 1])
        s = None if problem.natural_boundary else [0.0, 0.3]
        assert gn.sample_loss(problem, params, [0.3, 0.6], s, [0.1, 0.2]) == 0.0


def test_sample_loss_exact_p3():
    problem = make_problem('p3_dirichlet')
    loss = gn.sample_loss(problem, ExactRealization(problem), [0.5, 0.5], [0.0, 0.3], [0.0, 0.0])
    assert loss == pytest.approx(-2 * np.pi ** 2 / 3, rel=1e-12)


def test_dirichlet_needs_boundary_points():
    problem = make_problem('p3_dirichlet')
    params = gn.init_params([4, 8, 1], seed=0)
    batch = Batch(np.full((2, 2), 0.5), None, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        gn.batch_losses(problem, params, batch)
    with pytest.raises(ValueError):
        gn.grad_params(problem, params, batch)


@pytest.mark.parametrize('problem_id', ['p1_1d_lognormal', 'p2_neumann', 'p3_dirichlet', 'p4_langevin'])
def test_grad_params_finite_differences(problem_id):
    problem = make_problem(problem_id)
    sizes = [problem.input_dim, 8, 8, 1]
    params = gn.init_params(sizes, seed=11)
    batch = _batch(problem, 4, seed=11)
    analytic = gn.grad_params(problem, params, batch).values

    def loss(theta):
        return gn.batch_loss(problem, gn.MlpParams.from_flat(sizes, theta), batch)

    numeric = nd.Gradient(loss, step=1e-4, method='central')(params.flatten())
    assert relative_error(analytic, numeric).max() <= 1e-5


def test_loss_and_grad_matches_batch_loss():
    problem = make_problem('p4_langevin')
    params = gn.init_params([5, 8, 8, 1], seed=2)
    batch = _batch(problem, 50)
    loss, grad = gn.loss_and_grad(problem, params, batch)
    assert loss == pytest.approx(gn.batch_loss(problem, params, batch), rel=1e-12)
    assert len(grad) == params.n_params
    assert grad.as_params().layer_sizes == params.layer_sizes


def test_zero_lagrangian_zero_gradient():
    problem = make_problem('p2_neumann')

    def nothing(x, z, u, grad_u):
        return np.zeros_like(u), np.zeros_like(u), np.zeros_like(grad_u)

    problem = dataclasses.replace(problem, lagrangian=nothing)
    params = gn.init_params([4, 8, 8, 1], seed=0)
    grad = gn.grad_params(problem, params, _batch(problem, 20))
    np.testing.assert_array_equal(grad.values, 0.0)


def test_duplicated_batch_same_gradient():
    problem = make_problem('p3_dirichlet')
    params = gn.init_params([4, 8, 8, 1], seed=0)
    batch = _batch(problem, 5)
    doubled = Batch(np.vstack([batch.X, batch.X]), np.vstack([batch.S, batch.S]), np.vstack([batch.Z, batch.Z]))
    loss, grad = gn.loss_and_grad(problem, params, batch)
    loss2, grad2 = gn.loss_and_grad(problem, params, doubled)
    assert loss2 == pytest.approx(loss, rel=1e-12)
    np.testing.assert_allclose(grad2.values, grad.values, rtol=1e-12, atol=1e-14 * np.abs(grad.values).max())


def test_gradient_positive_homogeneity():
    problem = make_problem('p2_neumann')
    base = problem.lagrangian

    def doubled(x, z, u, grad_u):
        return tuple(2.0 * t for t in base(x, z, u, grad_u))

    params = gn.init_params([4, 8, 8, 1], seed=0)
    batch = _batch(problem, 30)
    grad = gn.grad_params(problem, params, batch).values
    grad2 = gn.grad_params(dataclasses.replace(problem, lagrangian=doubled), params, batch).values
    np.testing.assert_array_equal(grad2, 2.0 * grad)


def test_gradient_pure():
    problem = make_problem('p3_dirichlet')
    params = gn.init_params([4, 8, 8, 1], seed=0)
    before = params.flatten()
    batch = _batch(problem, 40)
    first = gn.grad_params(problem, params, batch).values
    second = gn.grad_params(problem, params, batch).values
    np.testing.assert_array_equal(first, second)
    np.testing.assert_array_equal(params.flatten(), before)


def test_gradient_independent_of_workers():
    problem = make_problem('p3_dirichlet')
    params = gn.init_params([4, 8, 8, 1], seed=0)
    batch = _batch(problem, 3 * gn.CHUNK_SIZE - 100)
    loss1, grad1 = gn.loss_and_grad(problem, params, batch, workers=1)
    loss3, grad3 = gn.loss_and_grad(problem, params, batch, workers=3)
    assert loss1 == loss3
    np.testing.assert_array_equal(grad1.values, grad3.values)


def test_unordered_reduction_close():
    problem = make_problem('p3_dirichlet')
    params = gn.init_params([4, 8, 8, 1], seed=0)
    batch = _batch(problem, 3 * gn.CHUNK_SIZE)
    grad = gn.grad_params(problem, params, batch, workers=1).values
    loose = gn.grad_params(problem, params, batch, deterministic=False, workers=3).values
    np.testing.assert_allclose(loose, grad, rtol=1e-10, atol=1e-14)


def test_worker_pool_reused(monkeypatch):
    monkeypatch.delenv('SDR_THREADS', raising=False)
    problem = make_problem('p3_dirichlet')
    params = gn.init_params([4, 8, 8, 1], seed=0)
    batch = _batch(problem, 2 * gn.CHUNK_SIZE)
    first = gn.loss_and_grad(problem, params, batch, workers=2)
    pool = gn._POOLS[2]
    second = gn.loss_and_grad(problem, params, batch, workers=2)
    assert gn._POOLS[2] is pool
    assert first[0] == second[0]
    np.testing.assert_array_equal(first[1].values, second[1].values)


def test_non_finite_sample_reported():
    problem = make_problem('p2_neumann')
    base = problem.lagrangian

    def broken(x, z, u, grad_u):
        value, du, dp = base(x, z, u, grad_u)
        value = value.copy()
        value[3] = np.nan
        return value, du, dp

    problem = dataclasses.replace(problem, lagrangian=broken)
    params = gn.init_params([4, 8, 8, 1], seed=0)
    batch = _batch(problem, 10)
    with pytest.raises(gn.NonFiniteError) as info:
        gn.batch_losses(problem, params, batch)
    assert info.value.index == 3
    with pytest.raises(gn.NonFiniteError) as info:
        gn.grad_params(problem, params, batch)
    assert info.value.index == 3


def test_realization_algebra():
    problem = make_problem('p4_langevin')
    u = gn.NetworkRealization(gn.init_params([5, 8, 1], seed=0), problem.d)
    batch = _batch(problem, 10)
    value, grad = u.value_and_grad(batch.X, batch.Z)
    value2, grad2 = (u + u).value_and_grad(batch.X, batch.Z)
    np.testing.assert_allclose(value2, 2 * value, rtol=1e-15)
    np.testing.assert_allclose(grad2, 2 * grad, rtol=1e-15)
    np.testing.assert_allclose((u - u).value(batch.X, batch.Z), 0.0, atol=1e-15)


def test_zero_network_spatial_grad():
    params = gn.MlpParams.zeros([4, 8, 8, 1])
    result = gn.forward_with_spatial_grad(params, [0.1, 0.2, 0.3, 0.4], 2)
    assert result.value == 0.0
    np.testing.assert_array_equal(result.spatial_grad, np.zeros(2))
