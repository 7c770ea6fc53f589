"""
Implementation of the accuracy and distribution diagnostics: the relative
L2 mean error, kernel density estimates of the marginals, joint
histograms, the Gateaux residual of the stochastic weak form, the loss gap
around a minimizer and the finite-difference gradient check.
"""
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numdifftools as nd
import numpy as np
import pandas as pd
import uncertainties as u
from scipy import stats
from scipy.integrate import trapezoid

from sdritz.gradnet import (MlpParams, NetworkRealization, as_realization, batch_loss, batch_losses,
                            forward_batch, forward_with_spatial_grad_batch, grad_params, init_params)
from sdritz.problems.baseproblem import CutoffRealization, batch_streams, sample_batch
from sdritz.sampling import RngStream, STREAM_DIRECTION, STREAM_EVAL, STREAM_NORMALIZATION
from sdritz.utilities import mean_and_error

__all__ = ['EvalReport', 'DensityExport', 'JointHistogram', 'GradcheckReport',
           'DegenerateDirectionWarning', 'BandwidthWarning',
           'relative_l2_error', 'marginal_samples', 'silverman_bandwidth', 'kde_pdf',
           'density_export', 'joint_histogram', 'admissible_direction', 'gateaux_residual',
           'loss_gap', 'gradcheck', 'relative_error']

MIN_EVAL_SAMPLES = 1000
DIRECTION_FLOOR = 1e-12
_KDE_CHUNK = 4096


class DegenerateDirectionWarning(UserWarning):
    pass


class BandwidthWarning(UserWarning):
    pass


def _default_rng(rng):
    return rng if rng is not None else RngStream(0, STREAM_EVAL)


###############################
#       RELATIVE L2 ERROR     #
###############################

@dataclass
class EvalReport:
    """Relative L2 mean error E = E[(u - u*)^2] / E[u*^2] with the Monte
    Carlo estimates of numerator and denominator."""
    problem_id: str
    n_samples: int
    rel_l2_error: float
    rel_l2_std_error: float
    numerator: float
    numerator_std_error: float
    denominator: float
    denominator_std_error: float
    wall_time: float
    checkpoint: Optional[str] = None

    def to_dict(self):
        return dict(self.__dict__)

    def __str__(self):
        return '{}: E = {:.2ug} ({} samples, {:.1f} s)'.format(
            self.problem_id, u.ufloat(self.rel_l2_error, self.rel_l2_std_error), self.n_samples, self.wall_time)


def relative_l2_error(problem, u_theta, n, rng=None, checkpoint=None):
    """Estimates E(theta) on *n* paired draws (X, Z).

    Numerator and denominator use the same samples. The standard error of
    the ratio follows from the covariance of both sample means.

    Parameters
    ----------
    problem: :class:`.ProblemSpec`
    u_theta: :class:`.MlpParams` or :class:`.Realization`
    n: int
        Number of samples, at least 1000.
    rng: :class:`.RngStream`, optional
        Stream for X and Z (in that order). Defaults to the evaluation
        stream of seed 0.

    Returns
    -------
    :class:`EvalReport`"""
    if n < MIN_EVAL_SAMPLES:
        raise ValueError('use at least {} samples, got {}'.format(MIN_EVAL_SAMPLES, n))
    start = time.perf_counter()
    rng = _default_rng(rng)
    X = problem.domain.sample_interior(rng, n)
    Z = problem.z_law.sample(rng, n)
    approximation = as_realization(problem, u_theta).value(X, Z)
    exact = problem.exact_solution(X, Z)
    numerators = (approximation - exact) ** 2
    denominators = exact ** 2
    numerator, denominator = numerators.mean(), denominators.mean()
    if not denominator > 0:
        raise ValueError('the exact solution vanishes on all samples')
    covariance = np.cov(np.vstack([numerators, denominators])) / n
    num, den = u.correlated_values([numerator, denominator], covariance)
    ratio = num / den
    return EvalReport(problem_id=problem.id, n_samples=int(n),
                      rel_l2_error=float(numerator / denominator), rel_l2_std_error=float(ratio.std_dev),
                      numerator=float(numerator), numerator_std_error=float(num.std_dev),
                      denominator=float(denominator), denominator_std_error=float(den.std_dev),
                      wall_time=time.perf_counter() - start, checkpoint=checkpoint)


###############################
#          MARGINALS          #
###############################

def _tile_point(problem, x, n):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != problem.d:
        raise ValueError('point has {} coordinates, the problem has d={}'.format(x.shape[0], problem.d))
    return np.tile(x, (n, 1))


def marginal_samples(problem, u_theta, x, n, rng=None):
    """Draws Z_1, ..., Z_n from the law of Z and returns u(x, Z_i)."""
    Z = problem.z_law.sample(_default_rng(rng), n)
    return as_realization(problem, u_theta).value(_tile_point(problem, x, n), Z)


def silverman_bandwidth(samples):
    r"""Silverman's rule :math:`0.9\min(\hat\sigma, IQR/1.34)n^{-1/5}`.

    When the interquartile range vanishes but the samples are not
    constant, the standard deviation alone is used and a
    :class:`BandwidthWarning` is issued."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2:
        raise ValueError('need at least 2 samples for a bandwidth')
    sigma = samples.std(ddof=1)
    if not sigma > 0:
        raise ValueError('samples are a point mass, no density exists')
    spread = stats.iqr(samples) / 1.34
    if spread > 0:
        sigma = min(sigma, spread)
    else:
        warnings.warn('zero interquartile range, bandwidth uses the standard deviation', BandwidthWarning)
    return 0.9 * sigma * samples.size ** (-0.2)


@dataclass
class DensityExport:
    """Kernel density estimate of u(x, Z) on a grid of u-values."""
    point: np.ndarray
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n_samples: int
    exact_density: Optional[np.ndarray] = None

    def integral(self):
        return float(trapezoid(self.density, self.grid))

    def to_frame(self):
        columns = {'u': self.grid, 'density': self.density}
        if self.exact_density is not None:
            columns['exact_density'] = self.exact_density
        return pd.DataFrame(columns)


def _gaussian_kde(samples, grid, bandwidth):
    density = np.zeros_like(grid)
    for start in range(0, samples.size, _KDE_CHUNK):
        chunk = samples[start:start + _KDE_CHUNK]
        density += stats.norm.pdf((grid[:, None] - chunk[None, :]) / bandwidth).sum(axis=1)
    return density / (samples.size * bandwidth)


def kde_pdf(samples, grid, bandwidth=None, point=None):
    """Gaussian kernel density estimate of *samples* evaluated on *grid*.

    Parameters
    ----------
    samples: array_like
        At least two, not all equal.
    grid: array_like
        Evaluation points.
    bandwidth: float, optional
        Defaults to :func:`silverman_bandwidth`.

    Returns
    -------
    :class:`DensityExport`"""
    samples = np.asarray(samples, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float).ravel()
    if samples.size < 2:
        raise ValueError('need at least 2 samples for a density estimate')
    if bandwidth is None:
        bandwidth = silverman_bandwidth(samples)
    elif not bandwidth > 0:
        raise ValueError('bandwidth must be positive')
    point = np.array([]) if point is None else np.asarray(point, dtype=float)
    return DensityExport(point, grid, _gaussian_kde(samples, grid, bandwidth), float(bandwidth), samples.size)


def density_export(problem, u_theta, x, n, grid_size=256, rng=None, with_exact=True):
    """Density of u(x, Z) next to the density of u*(x, Z).

    Both marginals are computed from the same draws of Z. The bandwidth is
    the Silverman bandwidth of the learned samples; the grid spans both
    sample sets extended by five bandwidths on either side.

    Returns
    -------
    :class:`DensityExport`"""
    Z = problem.z_law.sample(_default_rng(rng), n)
    X = _tile_point(problem, x, n)
    learned = as_realization(problem, u_theta).value(X, Z)
    exact = problem.exact_solution(X, Z) if with_exact else None
    bandwidth = silverman_bandwidth(learned)
    values = learned if exact is None else np.concatenate([learned, exact])
    grid = np.linspace(values.min() - 5 * bandwidth, values.max() + 5 * bandwidth, grid_size)
    export = kde_pdf(learned, grid, bandwidth, point=np.asarray(x, dtype=float).ravel())
    if exact is not None:
        export.exact_density = _gaussian_kde(exact, grid, bandwidth)
    return export


@dataclass
class JointHistogram:
    """Normalized 2D histogram of (u(x1, Z), u(x2, Z)) on shared draws."""
    x1: np.ndarray
    x2: np.ndarray
    edges1: np.ndarray
    edges2: np.ndarray
    mass: np.ndarray
    correlation: float
    n_samples: int

    def to_frame(self):
        i, j = np.meshgrid(np.arange(self.mass.shape[0]), np.arange(self.mass.shape[1]), indexing='ij')
        i, j = i.ravel(), j.ravel()
        return pd.DataFrame({'u1_low': self.edges1[i], 'u1_high': self.edges1[i + 1],
                             'u2_low': self.edges2[j], 'u2_high': self.edges2[j + 1],
                             'mass': self.mass.ravel()})


def joint_histogram(problem, u_theta, x1, x2, n, bins=None, rng=None):
    """Joint distribution of the solution at two points.

    Parameters
    ----------
    bins: int, optional
        Bins per axis; defaults to Sturges' rule ceil(log2 n) + 1.

    Returns
    -------
    :class:`JointHistogram`
        The masses sum to 1."""
    if n < 2:
        raise ValueError('need at least 2 samples, got {}'.format(n))
    bins = int(np.ceil(np.log2(n))) + 1 if bins is None else int(bins)
    if bins < 1:
        raise ValueError('need at least one bin')
    Z = problem.z_law.sample(_default_rng(rng), n)
    realization = as_realization(problem, u_theta)
    first = realization.value(_tile_point(problem, x1, n), Z)
    second = realization.value(_tile_point(problem, x2, n), Z)
    counts, edges1, edges2 = np.histogram2d(first, second, bins=bins)
    if first.std() > 0 and second.std() > 0:
        correlation = float(np.corrcoef(first, second)[0, 1])
    else:
        correlation = float('nan')
    return JointHistogram(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), edges1, edges2,
                          counts / counts.sum(), correlation, int(n))


###############################
#    WEAK-FORM DIAGNOSTICS    #
###############################

def admissible_direction(problem, seed, width=16, n_norm=4096):
    """Random test direction v(x, z) for the Gateaux residual.

    v is a seeded tanh network of two hidden layers, multiplied by the
    problem's cutoff for Dirichlet problems so that v vanishes on the
    boundary, and scaled so that E[v^2 + |grad v|^2] is about 1."""
    sizes = [problem.input_dim, width, width, 1]
    params = init_params(sizes, seed, stream_id=STREAM_DIRECTION)
    direction = NetworkRealization(params, problem.d)
    if not problem.natural_boundary:
        direction = CutoffRealization(direction, problem.cutoff)
    rng = RngStream(seed, STREAM_NORMALIZATION)
    X = problem.domain.sample_interior(rng, n_norm)
    Z = problem.z_law.sample(rng, n_norm)
    value, grad = direction.value_and_grad(X, Z)
    norm = np.sqrt(np.mean(value ** 2 + (grad ** 2).sum(axis=1)))
    if norm < DIRECTION_FLOOR:
        return direction
    return (1.0 / norm) * direction


def _direction_norm(direction, batch):
    value, grad = direction.value_and_grad(batch.X, batch.Z)
    return np.sqrt(np.mean(value ** 2 + (grad ** 2).sum(axis=1)))


def gateaux_residual(problem, u_theta, v, n, rng=None, eps=1e-4):
    """Monte Carlo estimate of the directional derivative of the loss,

    [J_n(u + eps v) - J_n(u - eps v)] / (2 eps),

    with both terms on the same mini-batch of *n* samples. At the exact
    solution and for an admissible direction, it vanishes up to Monte Carlo
    noise.

    Returns
    -------
    tuple
        (estimate, standard error). A direction with norm below 1e-12 on
        the batch gives (0.0, 0.0) and a :class:`DegenerateDirectionWarning`."""
    rng = _default_rng(rng)
    batch = sample_batch(problem, n, (rng, rng, rng))
    base = as_realization(problem, u_theta)
    if _direction_norm(v, batch) < DIRECTION_FLOOR:
        warnings.warn('test direction vanishes on the samples', DegenerateDirectionWarning)
        return 0.0, 0.0
    eps = float(eps)
    upper = batch_losses(problem, base + eps * v, batch)
    lower = batch_losses(problem, base - eps * v, batch)
    return mean_and_error((upper - lower) / (2 * eps))


def loss_gap(problem, u_star, v, eps, n, rng=None):
    """Difference J_n(u* + eps v) - J_n(u*) on common samples.

    Returns
    -------
    tuple
        (gap, standard error)."""
    rng = _default_rng(rng)
    batch = sample_batch(problem, n, (rng, rng, rng))
    base = as_realization(problem, u_star)
    shifted = batch_losses(problem, base + float(eps) * v, batch)
    return mean_and_error(shifted - batch_losses(problem, base, batch))


###############################
#        GRADIENT CHECK       #
###############################

def relative_error(analytic, numeric):
    """Componentwise |a - b| / max(|a|, |b|, 1e-3 (1 + max|b|)); the floor
    keeps components near zero from dominating."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    floor = 1e-3 * (1.0 + np.abs(numeric).max())
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


@dataclass
class GradcheckReport:
    problem_id: str
    n_params: int
    param_error: float
    spatial_error: float
    tolerance: float = 1e-5
    layer_sizes: list = field(default_factory=list)

    @property
    def max_error(self):
        return max(self.param_error, self.spatial_error)

    @property
    def passed(self):
        return self.max_error <= self.tolerance


def gradcheck(problem, seed=0, width=8, batch_size=4, corrupt=0.0, tolerance=1e-5):
    """Compares the reverse-mode derivatives against central finite
    differences: the parameter gradient of the batch loss through
    numdifftools with a fixed step 1e-4, and the spatial gradient of the
    network with steps 1e-5 max(1, |x_i|).

    Parameters
    ----------
    problem: :class:`.ProblemSpec`
    seed: int, optional
        Seed of the network and the batch.
    width: int, optional
        Width of the two hidden layers.
    corrupt: float, optional
        Relative perturbation added to the first gradient component; a
        negative control for the check itself.

    Returns
    -------
    :class:`GradcheckReport`"""
    sizes = [problem.input_dim, width, width, 1]
    params = init_params(sizes, seed)
    batch = sample_batch(problem, batch_size, batch_streams(seed))
    analytic = grad_params(problem, params, batch).values.copy()
    if corrupt:
        analytic[0] += corrupt * (1.0 + np.abs(analytic).max())

    def loss(theta):
        return batch_loss(problem, MlpParams.from_flat(sizes, theta), batch)

    numeric = nd.Gradient(loss, step=1e-4, method='central')(params.flatten())
    param_error = float(relative_error(analytic, numeric).max())

    inputs = np.hstack([batch.X, batch.Z])
    _, spatial = forward_with_spatial_grad_batch(params, inputs, problem.d)
    spatial_error = 0.0
    for row, grad in zip(inputs, spatial):
        def value(x, row=row):
            shifted = row.copy()
            shifted[:problem.d] = x
            return forward_batch(params, shifted[None, :])[0]
        x = row[:problem.d]
        steps = 1e-5 * np.maximum(1.0, np.abs(x))
        numeric_x = np.array([(value(x + h * e) - value(x - h * e)) / (2 * h)
                              for h, e in zip(steps, np.eye(problem.d))])
        spatial_error = max(spatial_error, float(relative_error(grad, numeric_x).max()))
    return GradcheckReport(problem.id, params.n_params, param_error, spatial_error, tolerance, sizes)
