"""
Implementation of the base types of a stochastic variational problem: the
law of the random vector Z, the problem description itself, mini-batches,
and the realizations u(x, z) that the loss and the diagnostics evaluate.

Realizations compose like functions: ``u + eps * v``, ``u - v`` and
``2.0 * u`` return new realizations, and :class:`CutoffRealization`
multiplies a direction by a function vanishing on the boundary.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from sdritz.sampling import (DomainDescriptor, RngStream, STREAM_S, STREAM_X,
                             STREAM_Z, standard_normal_vec, uniform_box)

__all__ = ['ZLaw', 'ProblemSpec', 'Batch', 'sample_batch', 'batch_streams',
           'Realization', 'ExactRealization', 'ConstantRealization',
           'CutoffRealization']


@dataclass(frozen=True)
class ZLaw:
    """Law of the stochastic vector Z.

    kind is one of 'normal' (i.i.d. standard normal entries),
    'uniform_box' (i.i.d. uniform on (low, high)) and 'uniform_scalar'
    (a single uniform entry on (low, high))."""
    kind: str
    k: int
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ('normal', 'uniform_box', 'uniform_scalar'):
            raise ValueError('unknown law {!r}'.format(self.kind))
        if self.kind == 'uniform_scalar' and self.k != 1:
            raise ValueError('a scalar law has k = 1, got k={}'.format(self.k))
        if self.kind != 'normal' and not self.low < self.high:
            raise ValueError('invalid bounds: need low < high')

    def sample(self, rng, n):
        """Draws *n* stochastic vectors, returned as an (n, k) array."""
        if self.kind == 'normal':
            return standard_normal_vec(rng, self.k, n)
        return uniform_box(rng, self.low, self.high, self.k, n)

    def contains(self, z):
        z = np.atleast_2d(z)
        if self.kind == 'normal':
            return np.all(np.isfinite(z), axis=1)
        return np.all((z >= self.low) & (z <= self.high), axis=1)


@dataclass
class ProblemSpec:
    """One stochastic variational problem.

    The callbacks are vectorized over samples: points are (n, d) arrays,
    stochastic vectors (n, K) arrays.

    * ``kappa(x, z)`` returns the (n,) diffusivity.
    * ``lagrangian(x, z, u, grad_u)`` returns the interior integrand I and
      its partial derivatives ``(I, dI/du, dI/dgrad_u)`` with shapes
      (n,), (n,) and (n, d).
    * ``boundary_data(s, z)`` returns g on the boundary, or is None for
      natural (Neumann) boundary conditions.
    * ``exact_solution(x, z)`` and ``exact_gradient(x, z)`` return u* and
      its spatial gradient.
    * ``source(x, z)`` returns the right-hand side of the Euler-Lagrange
      equation, kept for diagnostics.
    * ``cutoff(x)`` returns a function vanishing on the Dirichlet boundary
      and its gradient, used to build admissible test directions."""
    id: str
    d: int
    K: int
    domain: DomainDescriptor
    z_law: ZLaw
    kappa: Callable
    lagrangian: Callable
    boundary_data: Optional[Callable]
    penalty_beta: float
    exact_solution: Callable
    exact_gradient: Callable
    source: Optional[Callable] = None
    cutoff: Optional[Callable] = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.penalty_beta < 0:
            raise ValueError('penalty coefficient must be nonnegative')
        if self.boundary_data is None and self.penalty_beta != 0:
            raise ValueError('a problem with natural boundary conditions takes no penalty')
        if self.boundary_data is not None and self.penalty_beta == 0:
            raise ValueError('a Dirichlet problem needs a positive penalty coefficient')
        if self.domain.d != self.d or self.z_law.k != self.K:
            raise ValueError('domain or law dimension does not match the problem')

    @property
    def natural_boundary(self):
        """True for problems whose boundary condition needs no penalty."""
        return self.boundary_data is None

    @property
    def input_dim(self):
        return self.d + self.K

    def with_beta(self, beta):
        """Returns a copy of the problem with another penalty coefficient."""
        from dataclasses import replace
        return replace(self, penalty_beta=float(beta))


@dataclass
class Batch:
    """A mini-batch of interior points X, boundary points S and stochastic
    vectors Z, sharing the same length."""
    X: np.ndarray
    S: Optional[np.ndarray]
    Z: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        if self.S is not None:
            self.S = np.atleast_2d(np.asarray(self.S, dtype=float))
        n = self.X.shape[0]
        if n < 1:
            raise ValueError('a batch holds at least one sample')
        if self.Z.shape[0] != n or (self.S is not None and self.S.shape[0] != n):
            raise ValueError('X, S and Z must share the same length')

    def __len__(self):
        return self.X.shape[0]

    def take(self, indices):
        """Sub-batch with the given sample indices (or slice)."""
        S = None if self.S is None else self.S[indices]
        return Batch(self.X[indices], S, self.Z[indices])


def batch_streams(seed):
    """Returns the independent (X, S, Z) streams derived from a run seed."""
    return (RngStream(seed, STREAM_X), RngStream(seed, STREAM_S), RngStream(seed, STREAM_Z))


def sample_batch(problem, n, rngs):
    """Generates a mini-batch for *problem*.

    Parameters
    ----------
    problem: :class:`ProblemSpec`
        Problem whose domain and law are sampled.
    n: int
        Batch size.
    rngs: tuple of 3 :class:`.RngStream`
        Streams for the interior points, the boundary points and Z.

    Returns
    -------
    :class:`Batch`
        S is None for problems with natural boundary conditions."""
    if n < 1:
        raise ValueError('batch size must be at least 1, got {}'.format(n))
    rng_x, rng_s, rng_z = rngs
    X = problem.domain.sample_interior(rng_x, n)
    S = None if problem.natural_boundary else problem.domain.sample_boundary(rng_s, n)
    Z = problem.z_law.sample(rng_z, n)
    return Batch(X, S, Z)


class Realization(object):

    """Abstract baseclass for functions u(x, z) with a spatial gradient."""

    def value_and_grad(self, x, z):
        """Evaluates the realization and its spatial gradient.

        Parameters
        ----------
        x: NumPy array
            Points, shape (n, d).
        z: NumPy array
            Stochastic vectors, shape (n, K).

        Returns
        -------
        value, grad: tuple of NumPy arrays
            Shapes (n,) and (n, d)."""
        raise NotImplementedError("Method has to be implemented in subclass!")

    def value(self, x, z):
        return self.value_and_grad(x, z)[0]

    def __call__(self, x, z):
        return self.value(x, z)

    def __add__(self, other):
        if isinstance(other, SumRealization):
            return SumRealization([self] + other.terms)
        return SumRealization([self, other])

    def __radd__(self, other):
        if other == 0:
            return self
        return self.__add__(other)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, factor):
        if not np.isscalar(factor):
            return NotImplemented
        return ScaledRealization(self, float(factor))

    __rmul__ = __mul__


class SumRealization(Realization):

    """Pointwise sum of realizations."""

    def __init__(self, terms):
        super(SumRealization, self).__init__()
        self.terms = list(terms)

    def value(self, x, z):
        return sum(t.value(x, z) for t in self.terms)

    def value_and_grad(self, x, z):
        value, grad = self.terms[0].value_and_grad(x, z)
        for t in self.terms[1:]:
            v, g = t.value_and_grad(x, z)
            value = value + v
            grad = grad + g
        return value, grad

    def __add__(self, other):
        extra = other.terms if isinstance(other, SumRealization) else [other]
        return SumRealization(self.terms + extra)


class ScaledRealization(Realization):

    def __init__(self, base, factor):
        super(ScaledRealization, self).__init__()
        self.base = base
        self.factor = factor

    def value(self, x, z):
        return self.factor * self.base.value(x, z)

    def value_and_grad(self, x, z):
        value, grad = self.base.value_and_grad(x, z)
        return self.factor * value, self.factor * grad


class ConstantRealization(Realization):

    """Realization equal to a constant everywhere."""

    def __init__(self, constant=1.0):
        super(ConstantRealization, self).__init__()
        self.constant = float(constant)

    def value_and_grad(self, x, z):
        x = np.atleast_2d(x)
        return np.full(x.shape[0], self.constant), np.zeros_like(x, dtype=float)


class CutoffRealization(Realization):

    """Product of a realization with a cutoff c(x) (product rule for the
    gradient). With a cutoff vanishing on the Dirichlet boundary the
    product is an admissible test direction."""

    def __init__(self, base, cutoff):
        super(CutoffRealization, self).__init__()
        if not callable(cutoff):
            raise TypeError('supplied cutoff must be a callable!')
        self.base = base
        self.cutoff = cutoff

    def value(self, x, z):
        c, _ = self.cutoff(np.atleast_2d(x))
        return c * self.base.value(x, z)

    def value_and_grad(self, x, z):
        c, dc = self.cutoff(np.atleast_2d(x))
        v, dv = self.base.value_and_grad(x, z)
        return c * v, c[:, None] * dv + v[:, None] * dc


class ExactRealization(Realization):

    """The exact solution of a problem, seen as a realization."""

    def __init__(self, problem):
        super(ExactRealization, self).__init__()
        self.problem = problem

    def value(self, x, z):
        return self.problem.exact_solution(np.atleast_2d(x), np.atleast_2d(z))

    def value_and_grad(self, x, z):
        x, z = np.atleast_2d(x), np.atleast_2d(z)
        return self.problem.exact_solution(x, z), self.problem.exact_gradient(x, z)

    def __repr__(self):
        return 'ExactRealization({})'.format(self.problem.id)
