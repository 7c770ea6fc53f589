"""
Implementation of the fully-connected tanh network u(x, z), its extended
forward pass (value and spatial gradient) and the reverse accumulation of
parameter gradients of the penalized stochastic Ritz loss.

The network input is the concatenation [x, z]. Hidden layers apply tanh,
the output layer is affine. The extended forward pass carries, next to the
activations h of every layer, the tangents J = dh/dx with respect to the
first d input coordinates, so that the loss can use grad_x u. The backward
pass differentiates through both h and J.

Parameters are serialized layer by layer: the weight matrix in row-major
order followed by the bias vector.
"""
from multiprocessing.pool import ThreadPool

import numpy as np

from sdritz.problems.baseproblem import Batch, Realization
from sdritz.sampling import RngStream, STREAM_INIT
from sdritz.utilities import thread_count

__all__ = ['MlpParams', 'NetworkEval', 'FlatGradient', 'NetworkRealization',
           'NonFiniteError', 'as_realization', 'init_params', 'forward', 'forward_batch',
           'forward_with_spatial_grad', 'forward_with_spatial_grad_batch',
           'batch_losses', 'batch_loss', 'sample_loss', 'loss_and_grad', 'grad_params']

CHUNK_SIZE = 256

_POOLS = {}


class NonFiniteError(ArithmeticError):

    """Raised when a loss, adjoint or gradient evaluates to NaN or Inf.
    *index* is the offending sample in the batch, or None when only a
    reduced quantity is non-finite."""

    def __init__(self, message, index=None):
        super(NonFiniteError, self).__init__(message)
        self.index = index


class MlpParams(object):

    """Weights and biases of the network."""

    activation = 'tanh'

    def __init__(self, layer_sizes, weights, biases):
        """Parameters
        ----------
        layer_sizes: list of int
            [N_0, ..., N_L] with N_0 = d + K and N_L = 1.
        weights: list of NumPy arrays
            Weight l has shape (N_l, N_{l-1}).
        biases: list of NumPy arrays
            Bias l has length N_l."""
        super(MlpParams, self).__init__()
        self.layer_sizes = _check_sizes(layer_sizes)
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError('expected {} layers'.format(len(self.layer_sizes) - 1))
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if W.shape != shape or b.shape != (shape[0],):
                raise ValueError('layer {} has weight {} and bias {}, expected {} and ({},)'.format(
                    l + 1, W.shape, b.shape, shape, shape[0]))
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise NonFiniteError('layer {} holds non-finite entries'.format(l + 1))

    @classmethod
    def zeros(cls, layer_sizes):
        """Network with all weights and biases equal to 0."""
        sizes = _check_sizes(layer_sizes)
        weights = [np.zeros((n, m)) for m, n in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(n) for n in sizes[1:]]
        return cls(sizes, weights, biases)

    @classmethod
    def from_flat(cls, layer_sizes, values):
        """Rebuilds the parameters from the layer-major serialization."""
        sizes = _check_sizes(layer_sizes)
        values = np.asarray(values, dtype=float)
        if values.shape != (_param_count(sizes),):
            raise ValueError('expected {} parameters, got {}'.format(_param_count(sizes), values.size))
        weights, biases = [], []
        offset = 0
        for m, n in zip(sizes[:-1], sizes[1:]):
            weights.append(values[offset:offset + n * m].reshape(n, m))
            offset += n * m
            biases.append(values[offset:offset + n])
            offset += n
        return cls(sizes, weights, biases)

    def flatten(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    @property
    def n_params(self):
        return _param_count(self.layer_sizes)

    @property
    def depth(self):
        """Number of affine layers."""
        return len(self.weights)

    @property
    def width(self):
        return max(self.layer_sizes)

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    def copy(self):
        return MlpParams(self.layer_sizes, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def __eq__(self, other):
        if not isinstance(other, MlpParams):
            return NotImplemented
        return (self.layer_sizes == other.layer_sizes and
                all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights)) and
                all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases)))

    def __repr__(self):
        return 'MlpParams(layer_sizes={}, n_params={})'.format(self.layer_sizes, self.n_params)


class NetworkEval(object):

    """Value u and spatial gradient grad_x u of one network evaluation."""

    def __init__(self, value, spatial_grad):
        super(NetworkEval, self).__init__()
        self.value = value
        self.spatial_grad = spatial_grad

    def __iter__(self):
        return iter((self.value, self.spatial_grad))

    def __repr__(self):
        return 'NetworkEval(value={!r}, spatial_grad={!r})'.format(self.value, self.spatial_grad)


class FlatGradient(object):

    """Parameter gradient in the layer-major serialization of
    :class:`MlpParams`."""

    def __init__(self, values, layer_sizes):
        super(FlatGradient, self).__init__()
        self.layer_sizes = _check_sizes(layer_sizes)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (_param_count(self.layer_sizes),):
            raise ValueError('gradient length does not match the parameter count')

    def __len__(self):
        return self.values.shape[0]

    def as_params(self):
        """The gradient laid out as weights and biases."""
        return MlpParams.from_flat(self.layer_sizes, self.values)

    def norm(self):
        return float(np.linalg.norm(self.values))

    def __repr__(self):
        return 'FlatGradient(n={}, norm={:.3e})'.format(len(self), self.norm())


def _check_sizes(layer_sizes):
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 3:
        raise ValueError('the network needs at least one hidden layer, got sizes {}'.format(sizes))
    if any(n <= 0 for n in sizes):
        raise ValueError('layer sizes must be positive, got {}'.format(sizes))
    if sizes[-1] != 1:
        raise ValueError('the output layer has size 1, got {}'.format(sizes[-1]))
    return sizes


def _param_count(sizes):
    return sum(n * m + n for m, n in zip(sizes[:-1], sizes[1:]))


def init_params(layer_sizes, seed, stream_id=STREAM_INIT):
    """Draws initial parameters.

    Weights of layer l are uniform on [-r, r] with
    r = sqrt(6 / (N_{l-1} + N_l)), biases are zero. The draws come from
    the initialization stream of *seed*, so equal seeds give bit-identical
    parameters.

    Parameters
    ----------
    layer_sizes: list of int
        [N_0, ..., N_L], at least one hidden layer, N_L = 1.
    seed: int
        Run seed.

    Returns
    -------
    :class:`MlpParams`"""
    sizes = _check_sizes(layer_sizes)
    rng = RngStream(seed, stream_id)
    weights, biases = [], []
    for m, n in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (m + n))
        weights.append(rng.uniform(-bound, bound, (n, m)))
        biases.append(np.zeros(n))
    return MlpParams(sizes, weights, biases)


###############################
#       FORWARD PASSES        #
###############################

def _check_inputs(params, inputs):
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[1] != params.input_dim:
        raise ValueError('network expects {} inputs, got {}'.format(params.input_dim, inputs.shape[1]))
    return inputs


def forward_batch(params, inputs):
    """Evaluates the network on the rows of *inputs*, shape (n, N_0)."""
    h = _check_inputs(params, inputs)
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ W.T + b)
    return h @ params.weights[-1][0] + params.biases[-1][0]


def forward(params, input):
    """Evaluates u on a single input vector of length N_0."""
    input = np.asarray(input, dtype=float)
    if input.ndim != 1:
        raise ValueError('expected a single input vector')
    return float(forward_batch(params, input[None, :])[0])


def _extended_forward(params, inputs, d):
    # Returns u (n,), grad (n, d) and the cache needed by _extended_backward.
    h = inputs
    J = np.broadcast_to(np.eye(d, inputs.shape[1]), (inputs.shape[0], d, inputs.shape[1]))
    cache = []
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        Ja = J @ W.T
        t = np.tanh(h @ W.T + b)
        s = 1.0 - t ** 2
        cache.append((h, J, Ja, t, s))
        h = t
        J = Ja * s[:, None, :]
    w_out = params.weights[-1][0]
    u = h @ w_out + params.biases[-1][0]
    grad = J @ w_out
    return u, grad, (cache, h, J)


def _extended_backward(params, cache, u_bar, grad_bar):
    # Accumulates d(sum_n u_bar_n u_n + grad_bar_n . grad_n)/dtheta in the flat layout.
    hidden, h, J = cache
    w_out = params.weights[-1][0]
    grads = [None] * params.depth
    grads[-1] = (u_bar @ h + np.einsum('ni,nik->k', grad_bar, J), np.array([u_bar.sum()]))
    h_bar = u_bar[:, None] * w_out
    J_bar = grad_bar[:, :, None] * w_out
    for l in range(params.depth - 2, -1, -1):
        h_prev, J_prev, Ja, t, s = hidden[l]
        W = params.weights[l]
        Ja_bar = J_bar * s[:, None, :]
        s_bar = (J_bar * Ja).sum(axis=1)
        a_bar = (h_bar - 2.0 * t * s_bar) * s
        W_bar = a_bar.T @ h_prev + np.einsum('nik,nij->kj', Ja_bar, J_prev)
        grads[l] = (W_bar, a_bar.sum(axis=0))
        if l > 0:
            h_bar = a_bar @ W
            J_bar = Ja_bar @ W
    return np.concatenate([np.concatenate([W_bar.ravel(), b_bar]) for W_bar, b_bar in grads])


def forward_with_spatial_grad_batch(params, inputs, d):
    """Vectorized :func:`forward_with_spatial_grad`.

    Returns
    -------
    u, grad: NumPy arrays
        Shapes (n,) and (n, d)."""
    inputs = _check_inputs(params, inputs)
    if not 1 <= d <= params.input_dim:
        raise ValueError('spatial dimension must lie in [1, {}], got {}'.format(params.input_dim, d))
    u, grad, _ = _extended_forward(params, inputs, d)
    return u, grad


def forward_with_spatial_grad(params, input, d):
    """Evaluates u and its exact derivative with respect to the first *d*
    input coordinates.

    Parameters
    ----------
    params: :class:`MlpParams`
    input: array_like
        Input vector [x, z] of length N_0.
    d: int
        Spatial dimension, 1 <= d <= N_0.

    Returns
    -------
    :class:`NetworkEval`"""
    input = np.asarray(input, dtype=float)
    if input.ndim != 1:
        raise ValueError('expected a single input vector')
    u, grad = forward_with_spatial_grad_batch(params, input[None, :], d)
    return NetworkEval(float(u[0]), grad[0])


class NetworkRealization(Realization):

    """The network seen as a realization u(x, z) with x of dimension d."""

    def __init__(self, params, d):
        super(NetworkRealization, self).__init__()
        if not 1 <= d <= params.input_dim:
            raise ValueError('spatial dimension must lie in [1, {}], got {}'.format(params.input_dim, d))
        self.params = params
        self.d = int(d)

    def _inputs(self, x, z):
        return np.hstack([np.atleast_2d(x), np.atleast_2d(z)])

    def value(self, x, z):
        return forward_batch(self.params, self._inputs(x, z))

    def value_and_grad(self, x, z):
        return forward_with_spatial_grad_batch(self.params, self._inputs(x, z), self.d)

    def __repr__(self):
        return 'NetworkRealization({!r}, d={})'.format(self.params, self.d)


###############################
#        LOSS FUNCTIONS       #
###############################

def as_realization(problem, u):
    if isinstance(u, MlpParams):
        return NetworkRealization(u, problem.d)
    if isinstance(u, Realization):
        return u
    raise TypeError('supplied solution must be MlpParams or a Realization!')


def _as_params(u):
    if isinstance(u, MlpParams):
        return u
    if isinstance(u, NetworkRealization):
        return u.params
    raise TypeError('parameter gradients need MlpParams or a NetworkRealization!')


def _first_bad(values):
    bad = ~np.isfinite(values)
    if bad.ndim > 1:
        bad = bad.any(axis=tuple(range(1, bad.ndim)))
    return int(np.flatnonzero(bad)[0]) if bad.any() else None


def _penalty(problem, u_s, S, Z):
    return problem.penalty_beta * (u_s - problem.boundary_data(S, Z)) ** 2


def batch_losses(problem, u, batch):
    """Per-sample losses I(x, u, grad u; kappa) + beta |u(s, z) - g(s, z)|^2.

    Parameters
    ----------
    problem: :class:`.ProblemSpec`
    u: :class:`MlpParams` or :class:`.Realization`
    batch: :class:`.Batch`

    Returns
    -------
    NumPy array
        Loss of every sample, shape (n,).

    Raises
    ------
    NonFiniteError
        With the index of the first sample whose loss is NaN or Inf."""
    realization = as_realization(problem, u)
    value, grad = realization.value_and_grad(batch.X, batch.Z)
    with np.errstate(over='ignore', invalid='ignore'):
        losses = problem.lagrangian(batch.X, batch.Z, value, grad)[0]
        if not problem.natural_boundary:
            if batch.S is None:
                raise ValueError('a Dirichlet problem needs boundary points')
            losses = losses + _penalty(problem, realization.value(batch.S, batch.Z), batch.S, batch.Z)
    index = _first_bad(losses)
    if index is not None:
        raise NonFiniteError('non-finite loss at sample {}'.format(index), index=index)
    return losses


def batch_loss(problem, u, batch):
    """Mean of :func:`batch_losses` over the batch."""
    return float(np.mean(batch_losses(problem, u, batch)))


def sample_loss(problem, u, x, s, z):
    """Loss of a single sample (x, s, z). *s* is ignored for problems
    with natural boundary conditions and may be None."""
    S = None if problem.natural_boundary else np.atleast_2d(np.asarray(s, dtype=float))
    batch = Batch(np.atleast_2d(np.asarray(x, dtype=float)), S, np.atleast_2d(np.asarray(z, dtype=float)))
    return float(batch_losses(problem, u, batch)[0])


def _chunk_loss_and_grad(problem, params, batch, start, scale):
    # Sum of losses and of scale * parameter gradients over one chunk.
    X, Z = batch.X, batch.Z
    n = X.shape[0]
    with np.errstate(over='ignore', invalid='ignore'):
        u, grad, cache = _extended_forward(params, np.hstack([X, Z]), problem.d)
        losses, du, dgrad = problem.lagrangian(X, Z, u, grad)
        flat = _extended_backward(params, cache, scale * du, scale * dgrad)
        if not problem.natural_boundary:
            inputs = np.hstack([batch.S, Z])
            u_s, _, cache_s = _extended_forward(params, inputs, 0)
            misfit = u_s - problem.boundary_data(batch.S, Z)
            losses = losses + problem.penalty_beta * misfit ** 2
            flat = flat + _extended_backward(params, cache_s, scale * 2.0 * problem.penalty_beta * misfit,
                                             np.zeros((n, 0)))
    index = _first_bad(losses)
    if index is None:
        index = _first_bad(np.column_stack([du, dgrad]))
    if index is not None:
        raise NonFiniteError('non-finite loss or adjoint at sample {}'.format(start + index),
                             index=start + index)
    return losses.sum(), flat


def _worker_pool(workers):
    # One pool per worker count, kept for the lifetime of the process.
    if workers not in _POOLS:
        _POOLS[workers] = ThreadPool(workers)
    return _POOLS[workers]


def loss_and_grad(problem, u, batch, deterministic=True, workers=None):
    """Batch-mean loss and its exact parameter gradient.

    The batch is split into chunks of CHUNK_SIZE samples which may be
    processed by a thread pool. With *deterministic* set, chunk results
    are summed in chunk order, so the result does not depend on the
    number of workers.

    Parameters
    ----------
    problem: :class:`.ProblemSpec`
    u: :class:`MlpParams` or :class:`NetworkRealization`
    batch: :class:`.Batch`
    deterministic: bool, optional
        Fixed reduction order. Defaults to True.
    workers: int, optional
        Number of threads; None uses :func:`.thread_count`.

    Returns
    -------
    loss, gradient: float, :class:`FlatGradient`

    Raises
    ------
    NonFiniteError
        If a per-sample loss or adjoint is not finite (with its index),
        or if the reduced gradient is not finite."""
    params = _as_params(u)
    if params.input_dim != problem.input_dim:
        raise ValueError('network expects {} inputs, problem provides {}'.format(params.input_dim,
                                                                                problem.input_dim))
    if not problem.natural_boundary and batch.S is None:
        raise ValueError('a Dirichlet problem needs boundary points')
    n = len(batch)
    scale = 1.0 / n
    starts = list(range(0, n, CHUNK_SIZE))

    def work(start):
        return _chunk_loss_and_grad(problem, params, batch.take(slice(start, start + CHUNK_SIZE)),
                                    start, scale)

    workers = thread_count(workers)
    pool = _worker_pool(workers) if workers > 1 and len(starts) > 1 else None
    if pool is None:
        results = map(work, starts)
    elif deterministic:
        results = pool.map(work, starts)
    else:
        results = pool.imap_unordered(work, starts)
    loss, flat = 0.0, np.zeros(params.n_params)
    for chunk_loss, chunk_flat in results:
        loss += chunk_loss
        flat += chunk_flat
    loss = loss / n
    if not np.isfinite(loss) or _first_bad(flat) is not None:
        raise NonFiniteError('non-finite batch loss or gradient')
    return float(loss), FlatGradient(flat, params.layer_sizes)


def grad_params(problem, u, batch, deterministic=True, workers=None):
    """Gradient with respect to the network parameters of the batch-mean
    loss. See :func:`loss_and_grad` for the arguments.

    Returns
    -------
    :class:`FlatGradient`"""
    return loss_and_grad(problem, u, batch, deterministic=deterministic, workers=workers)[1]
