"""
Implementation of the four built-in stochastic variational problems, their
random fields and their exact-solution oracles.

* ``p1_1d_lognormal``: D = (-1, 1), log-normal diffusivity driven by a
  truncated Fourier expansion with standard normal coefficients,
  u(-1) = 0 and u(1) = 1. The exact solution is a ratio of integrals of
  1/kappa, evaluated by composite Gauss-Legendre quadrature.
* ``p2_neumann``: D = [0, 1]^d, natural boundary condition, quadratic
  reaction term.
* ``p3_dirichlet``: D = [0, 1]^2, homogeneous Dirichlet data.
* ``p4_langevin``: D = unit ball in R^d, kappa = exp(-V), inhomogeneous
  Dirichlet data.
"""
import functools

import numpy as np
from scipy.special import roots_legendre

from sdritz.problems.baseproblem import ProblemSpec, ZLaw
from sdritz.sampling import DomainDescriptor, RngStream, STREAM_Z, standard_normal_vec

__all__ = ['make_problem', 'problem_ids', 'exact_1d_quadrature', 'covariance_check_p1',
           'p1_covariance', 'p1_potential', 'figure_points', 'default_dimension']

pi2 = np.pi ** 2
_QUADRATURE_PANELS = 8
_QUADRATURE_CHUNK = 256


###########################
#      P1 RANDOM FIELD    #
###########################

def p1_potential(xi, z, n_modes=5):
    r"""Evaluates the Gaussian field

    .. math::

        V(x, Z) = \frac{1}{\sqrt{n}}\sum_{k=1}^n A_k\cos(\pi k x) + B_k\sin(\pi k x)

    with :math:`Z = (A_1, \ldots, A_n, B_1, \ldots, B_n)`.

    Parameters
    ----------
    xi: array_like
        Positions, shape (n,) or (n, m) (m positions per sample).
    z: array_like
        Stochastic vectors, shape (n, 2*n_modes).

    Returns
    -------
    NumPy array
        Field values with the shape of *xi*."""
    xi = np.asarray(xi, dtype=float)
    z = np.atleast_2d(z)
    if z.shape[1] != 2 * n_modes:
        raise ValueError('expected {} stochastic coordinates, got {}'.format(2 * n_modes, z.shape[1]))
    k = np.arange(1, n_modes + 1)
    A, B = z[:, :n_modes], z[:, n_modes:]
    angles = np.pi * xi[..., None] * k
    if xi.ndim == 1:
        V = np.einsum('nk,nk->n', np.cos(angles), A) + np.einsum('nk,nk->n', np.sin(angles), B)
    else:
        V = np.einsum('nmk,nk->nm', np.cos(angles), A) + np.einsum('nmk,nk->nm', np.sin(angles), B)
    return V / np.sqrt(n_modes)


def p1_covariance(x1, x2, n_modes=5):
    r"""Analytic covariance kernel of the P1 field,
    :math:`\frac{1}{n}\sum_{k=1}^n\cos(\pi k(x_2 - x_1))`."""
    k = np.arange(1, n_modes + 1)
    return np.cos(np.pi * k * (x2 - x1)).sum() / n_modes


def covariance_check_p1(x1, x2, n_mc, rng=None, n_modes=5):
    """Monte Carlo estimate of Cov(V(x1, Z), V(x2, Z)) for the P1 field.

    Parameters
    ----------
    x1, x2: float
        Positions in [-1, 1].
    n_mc: int
        Number of draws of Z.
    rng: :class:`.RngStream`, optional
        Stream to draw Z from. Defaults to stream STREAM_Z of seed 0.

    Returns
    -------
    float
        Unbiased sample covariance."""
    rng = rng if rng is not None else RngStream(0, STREAM_Z)
    z = standard_normal_vec(rng, 2 * n_modes, n_mc)
    v1 = p1_potential(np.full(n_mc, float(x1)), z, n_modes)
    v2 = p1_potential(np.full(n_mc, float(x2)), z, n_modes)
    return float(np.cov(v1, v2, ddof=1)[0, 1])


@functools.lru_cache(maxsize=16)
def _legendre_rule(m):
    t, w = roots_legendre(m)
    return t, w


def _composite_rule(lo, hi, n_nodes):
    # Nodes and weights of a composite Gauss-Legendre rule on [lo_i, hi_i] per sample.
    per_panel = int(np.ceil(n_nodes / _QUADRATURE_PANELS))
    t, w = _legendre_rule(per_panel)
    width = (hi - lo) / _QUADRATURE_PANELS
    starts = lo[:, None] + width[:, None] * np.arange(_QUADRATURE_PANELS)
    nodes = starts[:, :, None] + 0.5 * width[:, None, None] * (t + 1.0)
    weights = np.broadcast_to(0.5 * width[:, None, None] * w, nodes.shape)
    n = lo.shape[0]
    return nodes.reshape(n, -1), weights.reshape(n, -1)


def _p1_integrals(x, z, n_nodes, field_amplitude, n_modes):
    # Returns (int_{-1}^{x} 1/kappa, int_{-1}^{1} 1/kappa) for every sample.
    n = x.shape[0]
    lo = np.full(n, -1.0)
    nodes, weights = _composite_rule(lo, np.ones(n), n_nodes)
    total = (weights * np.exp(-field_amplitude * p1_potential(nodes, z, n_modes))).sum(axis=1)
    nodes, weights = _composite_rule(lo, x, n_nodes)
    partial = (weights * np.exp(-field_amplitude * p1_potential(nodes, z, n_modes))).sum(axis=1)
    return partial, total


def _p1_exact(x, z, n_nodes, field_amplitude, n_modes, gradient=False):
    x = np.atleast_2d(x)[:, 0]
    z = np.atleast_2d(z)
    if np.any(np.abs(x) > 1):
        raise ValueError('the exact solution is defined on [-1, 1] only')
    value = np.empty_like(x)
    for start in range(0, x.shape[0], _QUADRATURE_CHUNK):
        chunk = slice(start, start + _QUADRATURE_CHUNK)
        partial, total = _p1_integrals(x[chunk], z[chunk], n_nodes, field_amplitude, n_modes)
        if gradient:
            inverse_kappa = np.exp(-field_amplitude * p1_potential(x[chunk], z[chunk], n_modes))
            value[chunk] = inverse_kappa / total
        else:
            value[chunk] = partial / total
    return value


def exact_1d_quadrature(z, x, n_nodes=1024, field_amplitude=0.1, n_modes=5):
    r"""Exact P1 solution

    .. math::

        u(x, Z) = \left(\int_{-1}^{1}\kappa^{-1}\right)^{-1}\int_{-1}^{x}\kappa^{-1}

    evaluated with composite Gauss-Legendre rules of 8 panels each, using
    the same number of nodes per panel for both integrals.

    Parameters
    ----------
    z: array_like
        Stochastic vector of length 2*n_modes.
    x: float
        Position in [-1, 1].
    n_nodes: int, optional
        Total number of nodes per integral, at least 64. Defaults to 1024.

    Returns
    -------
    float"""
    if not -1.0 <= x <= 1.0:
        raise ValueError('x must lie in [-1, 1], got {}'.format(x))
    if n_nodes < 64:
        raise ValueError('use at least 64 quadrature nodes, got {}'.format(n_nodes))
    value = _p1_exact(np.array([[float(x)]]), np.atleast_2d(np.asarray(z, dtype=float)),
                      n_nodes, field_amplitude, n_modes)
    return float(value[0])


def _make_p1(d, penalty_beta=50.0, field_amplitude=0.1, n_modes=5, quadrature_nodes=1024):
    if d != 1:
        raise ValueError('p1_1d_lognormal is one-dimensional, got d={}'.format(d))
    if quadrature_nodes < 64:
        raise ValueError('use at least 64 quadrature nodes, got {}'.format(quadrature_nodes))

    def kappa(x, z):
        return np.exp(field_amplitude * p1_potential(x[:, 0], z, n_modes))

    def lagrangian(x, z, u, grad_u):
        k = kappa(x, z)
        return 0.5 * k * grad_u[:, 0] ** 2, np.zeros_like(u), k[:, None] * grad_u

    def boundary_data(s, z):
        return 0.5 * (s[:, 0] + 1.0)

    def exact_solution(x, z):
        return _p1_exact(x, z, quadrature_nodes, field_amplitude, n_modes)

    def exact_gradient(x, z):
        return _p1_exact(x, z, quadrature_nodes, field_amplitude, n_modes, gradient=True)[:, None]

    def source(x, z):
        return np.zeros(x.shape[0])

    def cutoff(x):
        return 1.0 - x[:, 0] ** 2, -2.0 * x

    return ProblemSpec(id='p1_1d_lognormal', d=1, K=2 * n_modes,
                       domain=DomainDescriptor.interval(-1.0, 1.0),
                       z_law=ZLaw('normal', 2 * n_modes),
                       kappa=kappa, lagrangian=lagrangian, boundary_data=boundary_data,
                       penalty_beta=float(penalty_beta), exact_solution=exact_solution,
                       exact_gradient=exact_gradient, source=source, cutoff=cutoff,
                       options={'field_amplitude': field_amplitude, 'n_modes': n_modes,
                                'quadrature_nodes': quadrature_nodes})


###############################
#      QUADRATIC PROBLEMS     #
###############################

def _unit_cube_cutoff(x):
    # prod_i x_i (1 - x_i) and its gradient.
    factors = x * (1.0 - x)
    value = np.prod(factors, axis=1)
    grad = np.empty_like(x)
    for i in range(x.shape[1]):
        others = np.prod(np.delete(factors, i, axis=1), axis=1)
        grad[:, i] = (1.0 - 2.0 * x[:, i]) * others
    return value, grad


def _make_p2(d, penalty_beta=0.0):
    if d < 1:
        raise ValueError('dimension must be at least 1, got {}'.format(d))
    if penalty_beta != 0:
        raise ValueError('p2_neumann has a natural boundary condition and takes no penalty')

    def kappa(x, z):
        return d + 1.0 + z.sum(axis=1)

    def cosines(x):
        return np.cos(np.pi * x).sum(axis=1)

    def lagrangian(x, z, u, grad_u):
        k = kappa(x, z)
        c = cosines(x)
        value = 0.5 * k * (grad_u ** 2).sum(axis=1) + 0.5 * pi2 * k * u ** 2 - 2.0 * pi2 * c * u
        return value, pi2 * k * u - 2.0 * pi2 * c, k[:, None] * grad_u

    def exact_solution(x, z):
        return cosines(x) / kappa(x, z)

    def exact_gradient(x, z):
        return -np.pi * np.sin(np.pi * x) / kappa(x, z)[:, None]

    def source(x, z):
        return 2.0 * pi2 * cosines(x)

    return ProblemSpec(id='p2_neumann', d=d, K=d,
                       domain=DomainDescriptor.hypercube(0.0, 1.0, d),
                       z_law=ZLaw('uniform_box', d, 0.0, 1.0),
                       kappa=kappa, lagrangian=lagrangian, boundary_data=None,
                       penalty_beta=0.0, exact_solution=exact_solution,
                       exact_gradient=exact_gradient, source=source, cutoff=None)


def _make_p3(d, penalty_beta=500.0):
    if d != 2:
        raise ValueError('p3_dirichlet is two-dimensional, got d={}'.format(d))

    def kappa(x, z):
        return 3.0 + z[:, 0] + z[:, 1]

    def bump(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def source(x, z):
        return 2.0 * pi2 * bump(x)

    def lagrangian(x, z, u, grad_u):
        k = kappa(x, z)
        f = source(x, z)
        return 0.5 * k * (grad_u ** 2).sum(axis=1) - f * u, -f, k[:, None] * grad_u

    def boundary_data(s, z):
        return np.zeros(s.shape[0])

    def exact_solution(x, z):
        return bump(x) / kappa(x, z)

    def exact_gradient(x, z):
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        grad = np.pi * np.stack([c[:, 0] * s[:, 1], s[:, 0] * c[:, 1]], axis=1)
        return grad / kappa(x, z)[:, None]

    return ProblemSpec(id='p3_dirichlet', d=2, K=2,
                       domain=DomainDescriptor.hypercube(0.0, 1.0, 2),
                       z_law=ZLaw('uniform_box', 2, -1.0, 1.0),
                       kappa=kappa, lagrangian=lagrangian, boundary_data=boundary_data,
                       penalty_beta=float(penalty_beta), exact_solution=exact_solution,
                       exact_gradient=exact_gradient, source=source, cutoff=_unit_cube_cutoff)


def _make_p4(d, penalty_beta=500.0):
    if d < 1:
        raise ValueError('dimension must be at least 1, got {}'.format(d))

    def potential(x, z):
        return z[:, 0] * (1.0 + (x ** 2).sum(axis=1))

    def kappa(x, z):
        return np.exp(-potential(x, z))

    def source(x, z):
        # -div(kappa grad e^V) = -div(2 z x) = -2 d z
        return -2.0 * d * z[:, 0]

    def lagrangian(x, z, u, grad_u):
        k = kappa(x, z)
        f = source(x, z)
        return 0.5 * k * (grad_u ** 2).sum(axis=1) - f * u, -f, k[:, None] * grad_u

    def boundary_data(s, z):
        return np.exp(2.0 * z[:, 0])

    def exact_solution(x, z):
        return np.exp(potential(x, z))

    def exact_gradient(x, z):
        return (np.exp(potential(x, z)) * 2.0 * z[:, 0])[:, None] * x

    def cutoff(x):
        return 1.0 - (x ** 2).sum(axis=1), -2.0 * x

    return ProblemSpec(id='p4_langevin', d=d, K=1,
                       domain=DomainDescriptor.unit_ball(d),
                       z_law=ZLaw('uniform_scalar', 1, 0.0, 1.0),
                       kappa=kappa, lagrangian=lagrangian, boundary_data=boundary_data,
                       penalty_beta=float(penalty_beta), exact_solution=exact_solution,
                       exact_gradient=exact_gradient, source=source, cutoff=cutoff)


__problems__ = {'p1_1d_lognormal': (_make_p1, 1),
                'p2_neumann': (_make_p2, 2),
                'p3_dirichlet': (_make_p3, 2),
                'p4_langevin': (_make_p4, 4)}


def problem_ids():
    """Stable identifiers of the built-in problems."""
    return sorted(__problems__.keys())


def default_dimension(problem_id):
    """Spatial dimension used when none is given."""
    try:
        return __problems__[problem_id][1]
    except KeyError:
        raise ValueError('unknown problem id {!r}; choose from {}'.format(problem_id, problem_ids()))


def make_problem(problem_id, d=None, **options):
    """Builds one of the built-in problems.

    Parameters
    ----------
    problem_id: str
        One of :func:`problem_ids`.
    d: int, optional
        Spatial dimension. p1 requires 1, p3 requires 2; p2 and p4 accept
        any positive dimension. Defaults to :func:`default_dimension`.

    Other parameters
    ----------------
    penalty_beta: float
        Overrides the default penalty coefficient (50 for p1, 500 for p3
        and p4; p2 takes none).
    field_amplitude, n_modes, quadrature_nodes:
        p1 only: amplitude of the log-normal field (0.1), number of Fourier
        modes (5) and quadrature nodes of the exact solution (1024).

    Returns
    -------
    :class:`.ProblemSpec`"""
    try:
        factory, default_d = __problems__[problem_id]
    except KeyError:
        raise ValueError('unknown problem id {!r}; choose from {}'.format(problem_id, problem_ids()))
    d = default_d if d is None else int(d)
    options = {k: v for k, v in options.items() if v is not None}
    return factory(d, **options)


def figure_points(problem):
    """Evaluation points at which the marginal densities are usually
    inspected for *problem*. For the ball they lie on the diagonal at
    radius 0.5, 0.2 and 0.1.

    Returns
    -------
    list of NumPy arrays"""
    if problem.id == 'p1_1d_lognormal':
        values = [-0.5, 0.0, 0.5]
    elif problem.id == 'p4_langevin':
        values = [r / np.sqrt(problem.d) for r in (0.5, 0.2, 0.1)]
    else:
        values = [1.0 / 6, 1.0 / 4, 1.0 / 3]
    return [np.full(problem.d, v) for v in values]
