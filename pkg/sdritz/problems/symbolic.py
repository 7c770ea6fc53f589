"""
Symbolic forms of the built-in problems, used as independent oracles.

The Lagrangians and exact solutions are rebuilt with sympy, differentiated
symbolically and lambdified to NumPy. This gives

* the pointwise strong-form residual
  -div(kappa grad u*) + r u* - f of the Euler-Lagrange equation,
* the normal derivative of u* on the boundary (natural boundary check),
* the partial derivatives of the interior Lagrangian I(x, z, u, p),

without reusing any of the hand-written callbacks.
"""
import functools

import numpy as np
import sympy as sp

__all__ = ['StrongForm', 'strong_form', 'strong_form_residual', 'normal_derivative',
           'symbolic_lagrangian']


def _symbols(d, K):
    x = sp.symbols('x1:{}'.format(d + 1), real=True)
    z = sp.symbols('z1:{}'.format(K + 1), real=True)
    return x, z


def _fields(problem_id, d, options):
    # Returns x, z symbols and the kappa, reaction coefficient, source and exact solution.
    if problem_id == 'p2_neumann':
        x, z = _symbols(d, d)
        kappa = d + 1 + sum(z)
        cosines = sum(sp.cos(sp.pi * xi) for xi in x)
        return x, z, kappa, sp.pi ** 2 * kappa, 2 * sp.pi ** 2 * cosines, cosines / kappa
    if problem_id == 'p3_dirichlet':
        x, z = _symbols(2, 2)
        kappa = 3 + z[0] + z[1]
        bump = sp.sin(sp.pi * x[0]) * sp.sin(sp.pi * x[1])
        return x, z, kappa, sp.Integer(0), 2 * sp.pi ** 2 * bump, bump / kappa
    if problem_id == 'p4_langevin':
        x, z = _symbols(d, 1)
        V = z[0] * (1 + sum(xi ** 2 for xi in x))
        return x, z, sp.exp(-V), sp.Integer(0), -2 * d * z[0], sp.exp(V)
    if problem_id == 'p1_1d_lognormal':
        n_modes = options.get('n_modes', 5)
        amplitude = sp.nsimplify(options.get('field_amplitude', 0.1))
        x, z = _symbols(1, 2 * n_modes)
        V = sum(z[k - 1] * sp.cos(sp.pi * k * x[0]) + z[n_modes + k - 1] * sp.sin(sp.pi * k * x[0])
                for k in range(1, n_modes + 1)) / sp.sqrt(n_modes)
        return x, z, sp.exp(amplitude * V), sp.Integer(0), sp.Integer(0), None
    raise ValueError('unknown problem id {!r}'.format(problem_id))


def _vectorize(expression, symbols):
    function = sp.lambdify(symbols, expression, modules='numpy')

    def evaluate(*arrays):
        columns = [column for array in arrays
                   for column in np.asarray(array).reshape(np.shape(array)[0], -1).T]
        n = columns[0].shape[0]
        return np.broadcast_to(np.asarray(function(*columns), dtype=float), (n,)).copy()
    return evaluate


class StrongForm(object):

    """Lambdified strong form of a problem, evaluated on (n, d) points and
    (n, K) stochastic vectors."""

    def __init__(self, problem_id, d, options=None):
        super(StrongForm, self).__init__()
        options = options or {}
        x, z, kappa, reaction, source, exact = _fields(problem_id, d, options)
        if exact is None:
            raise ValueError('{} has no closed-form exact solution'.format(problem_id))
        self.problem_id = problem_id
        self.d = len(x)
        self.kappa_expr = kappa
        self.exact_expr = exact
        self.gradient_expr = [sp.diff(exact, xi) for xi in x]
        self.operator_expr = -sum(sp.diff(kappa * g, xi) for g, xi in zip(self.gradient_expr, x)) + reaction * exact
        self.source_expr = source
        symbols = list(x) + list(z)
        self.operator = _vectorize(self.operator_expr, symbols)
        self.source = _vectorize(source, symbols)
        self.exact = _vectorize(exact, symbols)
        self.gradient = [_vectorize(g, symbols) for g in self.gradient_expr]

    def residual(self, x, z):
        """Operator applied to u* minus the source, at every sample."""
        return self.operator(x, z) - self.source(x, z)

    def __repr__(self):
        return 'StrongForm({}, d={})'.format(self.problem_id, self.d)


@functools.lru_cache(maxsize=32)
def _cached_strong_form(problem_id, d):
    return StrongForm(problem_id, d)


def strong_form(problem):
    """The :class:`StrongForm` of a built-in problem (cached per id and d)."""
    return _cached_strong_form(problem.id, problem.d)


def strong_form_residual(problem, x, z):
    """Relative pointwise residual of the Euler-Lagrange equation at the
    exact solution,
    |L u* - f| / max(|f|, |L u*|, 1).

    Returns
    -------
    NumPy array
        Shape (n,)."""
    form = strong_form(problem)
    lhs = form.operator(x, z)
    rhs = form.source(x, z)
    return np.abs(lhs - rhs) / np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1.0)


def normal_derivative(problem, s, z):
    """Outward normal derivative of u* at boundary points *s*.

    Only defined for hypercube and ball domains; for a box the normal is
    taken along the coordinate that sits on a facet."""
    form = strong_form(problem)
    s = np.atleast_2d(s)
    grad = np.column_stack([g(s, z) for g in form.gradient])
    if problem.domain.kind == 'unit_ball':
        normals = s / np.linalg.norm(s, axis=1)[:, None]
    else:
        a, b = problem.domain.a, problem.domain.b
        normals = np.where(s == b, 1.0, 0.0) - np.where(s == a, 1.0, 0.0)
        if np.any(np.abs(normals).sum(axis=1) == 0):
            raise ValueError('points do not lie on the boundary')
    return (grad * normals).sum(axis=1)


def symbolic_lagrangian(problem):
    """Lambdified interior Lagrangian I(x, z, u, p) of a built-in problem
    and its partial derivatives.

    Returns
    -------
    value, du, dp: callables
        ``value(x, z, u, p)`` and ``du(x, z, u, p)`` return (n,) arrays,
        ``dp(x, z, u, p)`` returns an (n, d) array."""
    x, z, kappa, reaction, source, _ = _fields(problem.id, problem.d, problem.options)
    u = sp.Symbol('u', real=True)
    p = sp.symbols('p1:{}'.format(len(x) + 1), real=True)
    I = kappa * sum(pk ** 2 for pk in p) / 2 + reaction * u ** 2 / 2 - source * u
    symbols = list(x) + list(z) + [u] + list(p)
    value = _vectorize(I, symbols)
    du = _vectorize(sp.diff(I, u), symbols)
    dp = [_vectorize(sp.diff(I, pk), symbols) for pk in p]

    def derivative_p(x_, z_, u_, p_):
        return np.column_stack([f(x_, z_, u_, p_) for f in dp])
    return value, du, derivative_p
