"""
Implementation of the training loop: mini-batch sampling, the stochastic
gradient of the penalized loss, Adam updates with a step-decay learning
rate, loss logging and checkpointing.
"""
import copy
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
import tqdm

from sdritz.gradnet import (MlpParams, NetworkRealization, NonFiniteError, init_params,
                            loss_and_grad)
from sdritz.problems.baseproblem import ExactRealization, batch_streams, sample_batch
from sdritz.problems.benchmarks import default_dimension, make_problem
from sdritz.sampling import RngStream, STREAM_EVAL
from sdritz.stats.evaluation import relative_l2_error
from sdritz.utilities import FORMAT_VERSION, RunManifest, read_json, write_frame, write_json

__all__ = ['TrainConfig', 'default_config', 'AdamState', 'adam_update', 'adam_step',
           'lr_schedule', 'LossHistory', 'Checkpoint', 'TrainingAborted', 'train']

HISTORY_COLUMNS = ['iteration', 'loss', 'lr', 'rel_l2_error']


###############################
#        CONFIGURATION        #
###############################

@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    penalty_beta None keeps the problem's default coefficient."""
    problem_id: str
    d: int
    layer_sizes: list
    iterations: int
    batch_size: int
    lr_initial: float
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 100000
    penalty_beta: Optional[float] = None
    seed: int = 0
    eval_every: int = 1000
    eval_samples: int = 10000
    deterministic: bool = True
    problem_options: dict = field(default_factory=dict)
    checkpoint_every: int = 0
    workers: Optional[int] = None

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        self.validate()

    def validate(self):
        if self.iterations < 1:
            raise ValueError('the number of iterations must be at least 1, got {}'.format(self.iterations))
        if self.batch_size < 1:
            raise ValueError('the batch size must be at least 1, got {}'.format(self.batch_size))
        if not self.lr_initial > 0:
            raise ValueError('the initial learning rate must be positive')
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError('the decay factor must lie in (0, 1]')
        if self.lr_decay_every < 1:
            raise ValueError('the decay interval must be at least 1')
        if self.penalty_beta is not None and self.penalty_beta < 0:
            raise ValueError('the penalty coefficient must be nonnegative')
        if self.eval_every < 1:
            raise ValueError('the logging interval must be at least 1')
        if self.eval_samples != 0 and self.eval_samples < 1000:
            raise ValueError('use 0 or at least 1000 evaluation samples, got {}'.format(self.eval_samples))
        if self.checkpoint_every < 0:
            raise ValueError('the checkpoint interval must be nonnegative')

    def make_problem(self):
        options = dict(self.problem_options)
        if self.penalty_beta is not None:
            options['penalty_beta'] = self.penalty_beta
        return make_problem(self.problem_id, self.d, **options)

    @classmethod
    def from_dict(cls, data):
        """Reads the nested layout of a configuration file. Missing keys
        fall back to :func:`default_config` of the given problem."""
        try:
            problem = data.get('problem', {})
            problem_id = problem['id']
        except (AttributeError, KeyError, TypeError):
            raise ValueError('the configuration needs a problem.id entry')
        d = problem.get('dim')
        base = default_config(problem_id, d)
        network = data.get('network', {})
        train = data.get('train', {})
        evaluation = data.get('eval', {})
        known = {'problem': {'id', 'dim', 'options'}, 'network': {'layer_sizes'},
                 'train': {'iterations', 'batch_size', 'lr_initial', 'lr_decay_factor', 'lr_decay_every',
                           'penalty_beta', 'seed', 'deterministic', 'checkpoint_every', 'workers'},
                 'eval': {'every', 'samples'}}
        for section, keys in known.items():
            unknown = set(data.get(section, {})) - keys
            if unknown:
                raise ValueError('unknown keys in {}: {}'.format(section, sorted(unknown)))
        return cls(problem_id=problem_id,
                   d=base.d,
                   layer_sizes=network.get('layer_sizes', base.layer_sizes),
                   iterations=int(train.get('iterations', base.iterations)),
                   batch_size=int(train.get('batch_size', base.batch_size)),
                   lr_initial=float(train.get('lr_initial', base.lr_initial)),
                   lr_decay_factor=float(train.get('lr_decay_factor', base.lr_decay_factor)),
                   lr_decay_every=int(train.get('lr_decay_every', base.lr_decay_every)),
                   penalty_beta=train.get('penalty_beta', base.penalty_beta),
                   seed=int(train.get('seed', base.seed)),
                   eval_every=int(evaluation.get('every', base.eval_every)),
                   eval_samples=int(evaluation.get('samples', base.eval_samples)),
                   deterministic=bool(train.get('deterministic', base.deterministic)),
                   problem_options=dict(problem.get('options', {})),
                   checkpoint_every=int(train.get('checkpoint_every', base.checkpoint_every)),
                   workers=train.get('workers', base.workers))

    def to_dict(self):
        return {'problem': {'id': self.problem_id, 'dim': self.d, 'options': dict(self.problem_options)},
                'network': {'layer_sizes': list(self.layer_sizes)},
                'train': {'iterations': self.iterations,
                          'batch_size': self.batch_size,
                          'lr_initial': self.lr_initial,
                          'lr_decay_factor': self.lr_decay_factor,
                          'lr_decay_every': self.lr_decay_every,
                          'penalty_beta': self.penalty_beta,
                          'seed': self.seed,
                          'deterministic': self.deterministic,
                          'checkpoint_every': self.checkpoint_every,
                          'workers': self.workers},
                'eval': {'every': self.eval_every, 'samples': self.eval_samples}}

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))


def default_config(problem_id, d=None):
    """Full-scale settings for a built-in problem: four hidden layers, a
    mini-batch of 2560 samples and a learning rate decayed by a factor 10
    every 10^5 iterations.

    ========== ===== ========= ========== =======
    problem    width penalty   iterations lr
    ========== ===== ========= ========== =======
    p1         256   50        4e5        1e-3
    p2 (d=2)   32    --        3e5        1e-4
    p2 (d>2)   32    --        3e5        1e-5
    p3         256   500       4e5        1e-3
    p4         256   500       3e5        1e-3
    ========== ===== ========= ========== ======="""
    fallback = default_dimension(problem_id)
    d = fallback if d is None else int(d)
    K = {'p1_1d_lognormal': 10, 'p2_neumann': d, 'p3_dirichlet': 2, 'p4_langevin': 1}[problem_id]
    width, beta, iterations, lr = {'p1_1d_lognormal': (256, 50.0, 400000, 1e-3),
                                   'p2_neumann': (32, 0.0, 300000, 1e-4 if d <= 2 else 1e-5),
                                   'p3_dirichlet': (256, 500.0, 400000, 1e-3),
                                   'p4_langevin': (256, 500.0, 300000, 1e-3)}[problem_id]
    return TrainConfig(problem_id=problem_id, d=d, layer_sizes=[d + K] + [width] * 4 + [1],
                       iterations=iterations, batch_size=2560, lr_initial=lr,
                       lr_decay_factor=0.1, lr_decay_every=100000, penalty_beta=beta)


def lr_schedule(n, cfg):
    r"""Step-decay learning rate :math:`\eta_0 f^{\lfloor n / m\rfloor}`."""
    if n < 0:
        raise ValueError('iteration must be nonnegative, got {}'.format(n))
    return cfg.lr_initial * cfg.lr_decay_factor ** (n // cfg.lr_decay_every)


###############################
#            ADAM             #
###############################

@dataclass
class AdamState:
    """Moment estimates and step counter of the Adam optimizer."""
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.m.shape != self.v.shape or self.m.ndim != 1:
            raise ValueError('moment vectors must be 1D with equal length')
        if np.any(self.v < 0) or self.t < 0:
            raise ValueError('invalid optimizer state')

    @classmethod
    def fresh(cls, n_params):
        return cls(np.zeros(n_params), np.zeros(n_params))


def adam_update(theta, g, state, lr):
    """One bias-corrected Adam update of the flat vector *theta*.

    Returns new arrays; neither *theta* nor *state* is mutated.

    Raises
    ------
    NonFiniteError
        If the gradient holds NaN or Inf."""
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape != theta.shape or g.shape != state.m.shape:
        raise ValueError('gradient, parameters and optimizer state must have equal length')
    if not np.all(np.isfinite(g)):
        index = int(np.flatnonzero(~np.isfinite(g))[0])
        raise NonFiniteError('non-finite gradient entry {}'.format(index))
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    theta = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return theta, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


def adam_step(params, grad, state, lr):
    """Applies :func:`adam_update` to network parameters.

    Parameters
    ----------
    params: :class:`.MlpParams`
    grad: :class:`.FlatGradient`
    state: :class:`AdamState`
    lr: float

    Returns
    -------
    tuple
        The updated (params, state)."""
    if grad.layer_sizes != params.layer_sizes:
        raise ValueError('gradient and parameters belong to different networks')
    theta, state = adam_update(params.flatten(), grad.values, state, lr)
    return MlpParams.from_flat(params.layer_sizes, theta), state


###############################
#       HISTORY / STATE       #
###############################

class LossHistory(object):

    """Logged (iteration, batch loss, learning rate, E(theta)) records."""

    def __init__(self, records=None):
        super(LossHistory, self).__init__()
        self.records = []
        for record in records or []:
            self.append(*record)

    def append(self, iteration, loss, lr, rel_l2_error=None):
        if self.records and iteration <= self.records[-1][0]:
            raise ValueError('logged iterations must increase strictly')
        error = np.nan if rel_l2_error is None else float(rel_l2_error)
        self.records.append((int(iteration), float(loss), float(lr), error))

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self):
        return np.array([r[0] for r in self.records], dtype=int)

    @property
    def losses(self):
        return np.array([r[1] for r in self.records])

    @property
    def errors(self):
        return np.array([r[3] for r in self.records])

    def smoothed(self, window=10):
        """Centered moving average of the logged losses."""
        return pd.Series(self.losses).rolling(window, center=True, min_periods=1).mean().to_numpy()

    def window_mean(self, start, stop, column='loss'):
        """Mean of a column over the records with start <= iteration < stop."""
        frame = self.to_frame()
        selected = frame[(frame['iteration'] >= start) & (frame['iteration'] < stop)][column]
        return float(selected.mean())

    def to_frame(self, smooth_window=None):
        frame = pd.DataFrame.from_records(self.records, columns=HISTORY_COLUMNS)
        if smooth_window:
            frame['loss_smoothed'] = self.smoothed(smooth_window)
        return frame

    @classmethod
    def from_frame(cls, frame):
        records = []
        for row in frame[HISTORY_COLUMNS].itertuples(index=False):
            error = None if pd.isna(row.rel_l2_error) else row.rel_l2_error
            records.append((row.iteration, row.loss, row.lr, error))
        return cls(records)

    @classmethod
    def read_csv(cls, path):
        return cls.from_frame(pd.read_csv(path, float_precision='round_trip'))

    def write_csv(self, path, smooth_window=None):
        write_frame(path, self.to_frame(smooth_window))

    def __eq__(self, other):
        if not isinstance(other, LossHistory):
            return NotImplemented
        return self.to_frame().equals(other.to_frame())

    def __repr__(self):
        return 'LossHistory({} records)'.format(len(self))


class Checkpoint(object):

    """Persisted network and optimizer state of a run.

    A checkpoint of kind 'exact' carries no network; its realization is
    the exact solution of the problem. Such checkpoints let the diagnostics
    run against the oracle."""

    def __init__(self, problem_id, d, params=None, adam=None, iteration=0, seed=0, problem_options=None,
                 kind='network'):
        super(Checkpoint, self).__init__()
        if kind not in ('network', 'exact'):
            raise ValueError('unknown checkpoint kind {!r}'.format(kind))
        if kind == 'network' and params is None:
            raise ValueError('a network checkpoint needs parameters')
        self.problem_id = problem_id
        self.d = int(d)
        self.params = params
        self.adam = adam
        self.iteration = int(iteration)
        self.seed = int(seed)
        self.problem_options = dict(problem_options or {})
        self.kind = kind

    @classmethod
    def exact(cls, problem_id, d=None, problem_options=None):
        d = default_dimension(problem_id) if d is None else d
        return cls(problem_id, d, problem_options=problem_options, kind='exact')

    def make_problem(self):
        return make_problem(self.problem_id, self.d, **self.problem_options)

    def realization(self, problem=None):
        """The function u(x, z) stored in the checkpoint."""
        problem = problem if problem is not None else self.make_problem()
        if self.kind == 'exact':
            return ExactRealization(problem)
        return NetworkRealization(self.params, problem.d)

    def to_dict(self):
        data = {'format_version': FORMAT_VERSION, 'kind': self.kind, 'problem_id': self.problem_id,
                'dim': self.d, 'problem_options': self.problem_options, 'iteration': self.iteration,
                'seed': self.seed}
        if self.kind == 'network':
            data.update({'layer_sizes': list(self.params.layer_sizes),
                         'activation': MlpParams.activation,
                         'weights': [W.ravel().tolist() for W in self.params.weights],
                         'biases': [b.tolist() for b in self.params.biases]})
            if self.adam is not None:
                data.update({'adam_m': self.adam.m.tolist(), 'adam_v': self.adam.v.tolist(),
                             'adam_t': self.adam.t})
        return data

    @classmethod
    def from_dict(cls, data):
        """Rebuilds a checkpoint; raises ValueError on a malformed one."""
        try:
            kind = data.get('kind', 'network')
            common = dict(problem_id=data['problem_id'], d=data.get('dim', default_dimension(data['problem_id'])),
                          iteration=data.get('iteration', 0), seed=data.get('seed', 0),
                          problem_options=data.get('problem_options', {}), kind=kind)
            if kind == 'exact':
                return cls(**common)
            if data.get('activation', 'tanh') != 'tanh':
                raise ValueError('unsupported activation {!r}'.format(data['activation']))
            sizes = [int(n) for n in data['layer_sizes']]
            weights = [np.array(w, dtype=float).reshape(n, m)
                       for w, m, n in zip(data['weights'], sizes[:-1], sizes[1:])]
            params = MlpParams(sizes, weights, data['biases'])
            adam = None
            if 'adam_m' in data:
                adam = AdamState(data['adam_m'], data['adam_v'], int(data.get('adam_t', data['iteration'])))
                if adam.m.shape[0] != params.n_params:
                    raise ValueError('optimizer state does not match the network')
            return cls(params=params, adam=adam, **common)
        except (KeyError, TypeError, AttributeError) as e:
            raise ValueError('malformed checkpoint: {}'.format(e))

    def save(self, path):
        write_json(path, self.to_dict())
        return path

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))

    def __repr__(self):
        if self.kind == 'exact':
            return 'Checkpoint(exact, {}, d={})'.format(self.problem_id, self.d)
        return 'Checkpoint({}, d={}, iteration={}, {!r})'.format(self.problem_id, self.d, self.iteration,
                                                                 self.params)


class TrainingAborted(RuntimeError):

    """Raised when a training step meets a non-finite loss or gradient.
    *checkpoint* holds the parameters before the failed step."""

    def __init__(self, message, checkpoint, history, iteration):
        super(TrainingAborted, self).__init__(message)
        self.checkpoint = checkpoint
        self.history = history
        self.iteration = iteration


###############################
#        TRAINING LOOP        #
###############################

def _write_outputs(out_dir, checkpoint, history, manifest=None):
    os.makedirs(out_dir, exist_ok=True)
    paths = [checkpoint.save(os.path.join(out_dir, 'checkpoint.json'))]
    path = os.path.join(out_dir, 'loss_history.csv')
    history.write_csv(path, smooth_window=10)
    paths.append(path)
    if manifest is not None:
        for path in paths:
            manifest.add_file(path)
        manifest.write(out_dir)


def train(cfg, out_dir=None, verbose=False, problem=None):
    """Minimizes the penalized Monte Carlo loss with Adam.

    Every iteration n draws a fresh mini-batch, computes the batch loss and
    its gradient at the current parameters, and applies one Adam step with
    learning rate :func:`lr_schedule` (n). The batch loss, the learning rate
    and, when eval_samples > 0, E(theta) on fresh samples are logged at
    every iteration that is a multiple of eval_every and at the last one,
    all evaluated before the update.

    Parameters
    ----------
    cfg: :class:`TrainConfig`
    out_dir: str, optional
        When given, checkpoint.json, loss_history.csv and manifest.json are
        written here (the checkpoint also every checkpoint_every iterations).
    verbose: bool, optional
        When set to *True*, a tqdm-progressbar in the terminal is maintained.
    problem: :class:`.ProblemSpec`, optional
        Overrides the problem built from the configuration.

    Returns
    -------
    tuple
        (:class:`Checkpoint`, :class:`LossHistory`)

    Raises
    ------
    TrainingAborted
        On a non-finite loss or gradient; the parameters of the last good
        iterate are kept in the exception (and written to *out_dir*)."""
    cfg.validate()
    problem = problem if problem is not None else cfg.make_problem()
    if cfg.layer_sizes[0] != problem.input_dim:
        raise ValueError('the first layer must have d + K = {} inputs, got {}'.format(problem.input_dim,
                                                                                   cfg.layer_sizes[0]))
    manifest = RunManifest('train', cfg.to_dict(), cfg.seed) if out_dir is not None else None
    params = init_params(cfg.layer_sizes, cfg.seed)
    state = AdamState.fresh(params.n_params)
    rngs = batch_streams(cfg.seed)
    eval_rng = RngStream(cfg.seed, STREAM_EVAL)
    history = LossHistory()

    def checkpoint(iteration):
        return Checkpoint(problem.id, problem.d, params=params, adam=state, iteration=iteration,
                          seed=cfg.seed, problem_options=copy.deepcopy(cfg.problem_options))

    progress = tqdm.tqdm(total=cfg.iterations, desc='Training ' + problem.id, leave=True, disable=not verbose)
    try:
        for n in range(cfg.iterations):
            batch = sample_batch(problem, cfg.batch_size, rngs)
            lr = lr_schedule(n, cfg)
            try:
                loss, grad = loss_and_grad(problem, params, batch, deterministic=cfg.deterministic,
                                           workers=cfg.workers)
                new_params, new_state = adam_step(params, grad, state, lr)
            except NonFiniteError as e:
                last_good = checkpoint(n)
                if out_dir is not None:
                    _write_outputs(out_dir, last_good, history, manifest)
                raise TrainingAborted('training aborted at iteration {}: {}'.format(n, e),
                                      last_good, history, n) from e
            if n % cfg.eval_every == 0 or n == cfg.iterations - 1:
                error = None
                if cfg.eval_samples:
                    error = relative_l2_error(problem, params, cfg.eval_samples, eval_rng).rel_l2_error
                history.append(n, loss, lr, error)
                progress.set_description('Training {} (loss {:.2e}, lr {:.1e})'.format(problem.id, loss, lr))
                if verbose and error is not None:
                    tqdm.tqdm.write('iteration {:>8d}  loss {: .6e}  E {:.4e}'.format(n, loss, error))
            params, state = new_params, new_state
            if out_dir is not None and cfg.checkpoint_every and (n + 1) % cfg.checkpoint_every == 0:
                checkpoint(n + 1).save(os.path.join(out_dir, 'checkpoint.json'))
            progress.update(1)
        progress.set_description('Training {} done'.format(problem.id))
    finally:
        progress.close()
    final = checkpoint(cfg.iterations)
    if out_dir is not None:
        _write_outputs(out_dir, final, history, manifest)
    return final, history
