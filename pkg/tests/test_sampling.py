import numpy as np
import pytest
from scipy import stats

import sdritz.sampling as smp


def test_stream_reproducible():
    a = smp.RngStream(42, smp.STREAM_X).random(10)
    b = smp.RngStream(42, smp.STREAM_X).random(10)
    np.testing.assert_array_equal(a, b)


def test_streams_differ_by_id():
    a = smp.RngStream(42, smp.STREAM_X).random(10)
    b = smp.RngStream(42, smp.STREAM_Z).random(10)
    assert not np.array_equal(a, b)


def test_stream_counts_draws():
    rng = smp.RngStream(1, 0)
    rng.random((5, 3))
    rng.standard_normal(4)
    assert rng.draws == 19


def test_uniform_box_bounds():
    points = smp.uniform_box(smp.RngStream(0), 0.0, 1.0, 2, 1000)
    assert points.shape == (1000, 2)
    assert np.all((points >= 0) & (points <= 1))


def test_uniform_box_mean():
    n = 100000
    a, b = -1.0, 3.0
    points = smp.uniform_box(smp.RngStream(3), a, b, 1, n)
    sigma = (b - a) / np.sqrt(12 * n)
    assert abs(points.mean() - (a + b) / 2) <= 4 * sigma


def test_uniform_box_rejects_bad_bounds():
    with pytest.raises(ValueError):
        smp.uniform_box(smp.RngStream(0), 1.0, 1.0, 2, 10)
    with pytest.raises(ValueError):
        smp.box_boundary(smp.RngStream(0), 2.0, 1.0, 2, 10)


def test_box_boundary_interval():
    points = smp.box_boundary(smp.RngStream(0), -1.0, 1.0, 1, 1000)
    assert set(np.unique(points)) == {-1.0, 1.0}


def test_box_boundary_one_coordinate_on_facet():
    points = smp.box_boundary(smp.RngStream(5), 0.0, 1.0, 2, 1000)
    on_facet = (points == 0.0) | (points == 1.0)
    assert np.all(on_facet.sum(axis=1) == 1)


def test_box_boundary_facet_occupancy():
    n = 100000
    points = smp.box_boundary(smp.RngStream(11), 0.0, 1.0, 2, n)
    counts = [np.sum(points[:, 0] == 0.0), np.sum(points[:, 0] == 1.0),
              np.sum(points[:, 1] == 0.0), np.sum(points[:, 1] == 1.0)]
    sigma = np.sqrt(n * 0.25 * 0.75)
    for count in counts:
        assert abs(count - n / 4) <= 4 * sigma


def test_uniform_sphere_norms():
    points = smp.uniform_sphere(smp.RngStream(2), 7, 10000)
    np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.0, rtol=0, atol=1e-12)


def test_uniform_sphere_mean():
    n = 100000
    points = smp.uniform_sphere(smp.RngStream(4), 3, n)
    assert np.all(np.abs(points.mean(axis=0)) <= 4 / np.sqrt(n))


def test_uniform_sphere_line():
    points = smp.uniform_sphere(smp.RngStream(6), 1, 100)
    assert set(np.unique(points)) <= {-1.0, 1.0}


def test_uniform_ball_inside():
    points = smp.uniform_ball(smp.RngStream(8), 4, 10000)
    assert np.all(np.linalg.norm(points, axis=1) < 1)


def test_uniform_ball_radial_law():
    d = 10
    points = smp.uniform_ball(smp.RngStream(9), d, 100000)
    radii = np.linalg.norm(points, axis=1) ** d
    assert stats.kstest(radii, 'uniform').pvalue > 0.01


def test_uniform_ball_line_mean():
    n = 100000
    points = smp.uniform_ball(smp.RngStream(10), 1, n)
    assert abs(points.mean()) <= 4 * np.sqrt(1.0 / (3 * n))


def test_standard_normal_moments():
    n = 100000
    values = smp.standard_normal_vec(smp.RngStream(12), 1, n)
    assert 0.98 <= values.var(ddof=1) <= 1.02
    assert abs(values.mean()) <= 4 / np.sqrt(n)


def test_domain_descriptor():
    cube = smp.DomainDescriptor.hypercube(0.0, 1.0, 2)
    rng = smp.RngStream(13)
    assert np.all(cube.contains(cube.sample_interior(rng, 100)))
    assert np.all(cube.on_boundary(cube.sample_boundary(rng, 100)))
    ball = smp.DomainDescriptor.unit_ball(3)
    assert np.all(ball.on_boundary(ball.sample_boundary(rng, 100)))
    with pytest.raises(ValueError):
        smp.DomainDescriptor('interval', 2, 0.0, 1.0)
    with pytest.raises(ValueError):
        smp.DomainDescriptor('torus', 2)
