"""
Implementation of seedable random streams and the geometric samplers used
to draw the interior, boundary and stochastic points of a mini-batch.

Every sampler draws from an :class:`RngStream`. A stream is identified by
the pair (seed, stream_id), so the trainer can hand out independent
streams for the interior points, the boundary points, the stochastic
vectors, the initialization and the evaluation draws from one run seed.
"""
import numpy as np

__all__ = ['RngStream', 'DomainDescriptor',
           'uniform_box', 'box_boundary', 'uniform_sphere', 'uniform_ball',
           'standard_normal_vec',
           'STREAM_X', 'STREAM_S', 'STREAM_Z', 'STREAM_INIT', 'STREAM_EVAL',
           'STREAM_DIRECTION', 'STREAM_NORMALIZATION']

STREAM_X = 0
STREAM_S = 1
STREAM_Z = 2
STREAM_INIT = 3
STREAM_EVAL = 4
STREAM_DIRECTION = 5
STREAM_NORMALIZATION = 6

_SPHERE_NORM_FLOOR = 1e-100


class RngStream(object):

    """Single-owner random stream keyed by (seed, stream_id)."""

    def __init__(self, seed, stream_id=0):
        """Creates the stream. The underlying generator is PCG64 seeded
        through a SeedSequence whose spawn key is the stream id, which makes
        streams with different ids independent by construction.

        Parameters
        ----------
        seed: int
            64-bit run seed.
        stream_id: int
            Purpose identifier, see the STREAM_* constants."""
        super(RngStream, self).__init__()
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._generator = np.random.Generator(np.random.PCG64(sequence))
        self.draws = 0

    def random(self, size):
        self.draws += int(np.prod(size))
        return self._generator.random(size)

    def standard_normal(self, size):
        self.draws += int(np.prod(size))
        return self._generator.standard_normal(size)

    def integers(self, high, size):
        self.draws += int(np.prod(size))
        return self._generator.integers(0, high, size=size)

    def uniform(self, low, high, size):
        return low + (high - low) * self.random(size)

    def __repr__(self):
        return 'RngStream(seed={}, stream_id={}, draws={})'.format(self.seed, self.stream_id, self.draws)


def _check_box(a, b, d, n):
    if not a < b:
        raise ValueError('invalid bounds: need a < b, got a={}, b={}'.format(a, b))
    if d < 1:
        raise ValueError('dimension must be at least 1, got {}'.format(d))
    if n < 1:
        raise ValueError('number of samples must be at least 1, got {}'.format(n))


def uniform_box(rng, a, b, d, n):
    """Draws *n* i.i.d. points uniformly from the box [a, b]^d.

    Parameters
    ----------
    rng: :class:`RngStream`
        Stream to draw from.
    a, b: float
        Lower and upper bound of every coordinate.
    d: int
        Dimension.
    n: int
        Number of points.

    Returns
    -------
    NumPy array
        Array of shape (n, d)."""
    _check_box(a, b, d, n)
    return rng.uniform(a, b, (n, d))


def box_boundary(rng, a, b, d, n):
    """Draws *n* points uniformly on the boundary of [a, b]^d.

    One of the 2d facets is chosen uniformly (all facets of a cube have the
    same area), then the point is uniform on that facet. For d = 1 this
    picks a or b with probability 1/2 each.

    Returns
    -------
    NumPy array
        Array of shape (n, d); in every row exactly one coordinate equals
        a or b."""
    _check_box(a, b, d, n)
    facets = rng.integers(2 * d, (n,))
    points = rng.uniform(a, b, (n, d))
    axis = facets // 2
    side = np.where(facets % 2 == 0, a, b)
    points[np.arange(n), axis] = side
    return points


def uniform_sphere(rng, d, n):
    r"""Draws *n* points uniformly on the unit sphere in :math:`R^d` by
    normalizing standard normal vectors.

    Note
    ----
    The rare vector with norm below 1e-100 is redrawn. For d = 1 the output
    is exactly -1 or +1."""
    if d < 1 or n < 1:
        raise ValueError('need d >= 1 and n >= 1, got d={}, n={}'.format(d, n))
    vectors = rng.standard_normal((n, d))
    norms = np.linalg.norm(vectors, axis=1)
    bad = norms < _SPHERE_NORM_FLOOR
    while bad.any():
        vectors[bad] = rng.standard_normal((int(bad.sum()), d))
        norms[bad] = np.linalg.norm(vectors[bad], axis=1)
        bad = norms < _SPHERE_NORM_FLOOR
    return vectors / norms[:, None]


def uniform_ball(rng, d, n):
    r"""Draws *n* points uniformly in the open unit ball of :math:`R^d`
    (ball point picking).

    Note
    ----
    A direction from :func:`uniform_sphere` is scaled by the radius
    :math:`R = U^{1/d}`, which has the exact radial law
    :math:`P(\|X\| \le r) = r^d`. This needs no rejection step, so the cost
    does not grow with the dimension."""
    directions = uniform_sphere(rng, d, n)
    radius = rng.random(n) ** (1.0 / d)
    return directions * radius[:, None]


def standard_normal_vec(rng, k, n):
    """Draws *n* vectors of *k* i.i.d. standard normal entries.

    Returns
    -------
    NumPy array
        Array of shape (n, k)."""
    if k < 1 or n < 1:
        raise ValueError('need k >= 1 and n >= 1, got k={}, n={}'.format(k, n))
    return rng.standard_normal((n, k))


class DomainDescriptor(object):

    """Description of the physical domain D, with interior and boundary
    samplers."""

    __kinds__ = ('interval', 'hypercube', 'unit_ball')

    def __init__(self, kind, d, a=None, b=None):
        """Parameters
        ----------
        kind: {'interval', 'hypercube', 'unit_ball'}
            Shape of the domain.
        d: int
            Spatial dimension; must be 1 for an interval.
        a, b: float, optional
            Bounds for the interval and hypercube kinds."""
        super(DomainDescriptor, self).__init__()
        if kind not in self.__kinds__:
            raise ValueError('unknown domain kind {!r}'.format(kind))
        if d < 1:
            raise ValueError('dimension must be at least 1, got {}'.format(d))
        if kind == 'interval' and d != 1:
            raise ValueError('an interval is one-dimensional, got d={}'.format(d))
        if kind in ('interval', 'hypercube'):
            if a is None or b is None or not a < b:
                raise ValueError('invalid bounds: need a < b, got a={}, b={}'.format(a, b))
        self.kind = kind
        self.d = int(d)
        self.a = None if a is None else float(a)
        self.b = None if b is None else float(b)

    @classmethod
    def interval(cls, a, b):
        return cls('interval', 1, a, b)

    @classmethod
    def hypercube(cls, a, b, d):
        return cls('hypercube', d, a, b)

    @classmethod
    def unit_ball(cls, d):
        return cls('unit_ball', d)

    def sample_interior(self, rng, n):
        if self.kind == 'unit_ball':
            return uniform_ball(rng, self.d, n)
        return uniform_box(rng, self.a, self.b, self.d, n)

    def sample_boundary(self, rng, n):
        if self.kind == 'unit_ball':
            return uniform_sphere(rng, self.d, n)
        return box_boundary(rng, self.a, self.b, self.d, n)

    def contains(self, x):
        """Boolean mask of the rows of *x* that lie inside the open domain."""
        x = np.atleast_2d(x)
        if self.kind == 'unit_ball':
            return np.linalg.norm(x, axis=1) < 1
        return np.all((x > self.a) & (x < self.b), axis=1)

    def on_boundary(self, x, tol=1e-12):
        """Boolean mask of the rows of *x* that satisfy the boundary equation."""
        x = np.atleast_2d(x)
        if self.kind == 'unit_ball':
            return np.abs(np.linalg.norm(x, axis=1) - 1) <= tol
        inside = np.all((x >= self.a) & (x <= self.b), axis=1)
        touching = np.any((x == self.a) | (x == self.b), axis=1)
        return inside & touching

    def __repr__(self):
        if self.kind == 'unit_ball':
            return 'DomainDescriptor(unit_ball, d={})'.format(self.d)
        return 'DomainDescriptor({}, a={}, b={}, d={})'.format(self.kind, self.a, self.b, self.d)
