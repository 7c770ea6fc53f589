"""
Command line interface ``sdr`` with the subcommands train, eval, density,
joint, residual, sample and gradcheck.

Exit codes: 0 success, 1 numerical failure (aborted run, failed check),
2 usage error (bad flags, malformed points, missing config file), 3 IO
error (unreadable or unparseable config, unwritable output), 4 missing or
invalid checkpoint.
"""
import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

from sdritz.gradnet import NonFiniteError
from sdritz.problems.benchmarks import figure_points
from sdritz.sampling import (RngStream, STREAM_EVAL, STREAM_X, box_boundary, standard_normal_vec,
                             uniform_ball, uniform_box, uniform_sphere)
from sdritz.stats.evaluation import (admissible_direction, density_export, gateaux_residual, gradcheck,
                                     joint_histogram, relative_l2_error)
from sdritz.stats.training import Checkpoint, TrainConfig, TrainingAborted, train
from sdritz.utilities import FORMAT_VERSION, parse_point, write_frame, write_json
from sdritz.version import __version__

__all__ = ['main']

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CHECKPOINT = 4


class CliError(Exception):

    def __init__(self, message, code):
        super(CliError, self).__init__(message)
        self.code = code


def _load_config(path, seed=None):
    if not os.path.isfile(path):
        raise CliError('config file {} does not exist'.format(path), EXIT_USAGE)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise CliError('cannot read config {}: {}'.format(path, e), EXIT_IO)
    try:
        cfg = TrainConfig.from_dict(data)
        if seed is not None:
            cfg.seed = int(seed)
        return cfg
    except (ValueError, TypeError) as e:
        raise CliError('invalid config {}: {}'.format(path, e), EXIT_USAGE)


def _load_checkpoint(path):
    if not os.path.isfile(path):
        raise CliError('checkpoint {} does not exist'.format(path), EXIT_CHECKPOINT)
    try:
        checkpoint = Checkpoint.load(path)
        return checkpoint, checkpoint.make_problem()
    except (OSError, ValueError, ArithmeticError) as e:
        raise CliError('invalid checkpoint {}: {}'.format(path, e), EXIT_CHECKPOINT)


def _point(text, problem):
    try:
        return parse_point(text, problem.d)
    except ValueError as e:
        raise CliError(str(e), EXIT_USAGE)


def _eval_rng(args):
    return RngStream(args.seed, STREAM_EVAL)


###############################
#         SUBCOMMANDS         #
###############################

def cmd_train(args):
    cfg = _load_config(args.config, args.seed)
    out = args.out or os.path.splitext(os.path.basename(args.config))[0] + '_run'
    try:
        checkpoint, history = train(cfg, out_dir=out, verbose=not args.quiet)
    except TrainingAborted as e:
        print(str(e), file=sys.stderr)
        print('last good checkpoint written to {}'.format(os.path.join(out, 'checkpoint.json')), file=sys.stderr)
        return EXIT_NUMERICAL
    print('{} iterations done, final loss {:.6e}'.format(checkpoint.iteration, history.losses[-1]))
    errors = history.errors
    if np.isfinite(errors[-1]):
        print('relative L2 error {:.4e}'.format(errors[-1]))
    print('results written to {}'.format(out))
    return EXIT_OK


def cmd_eval(args):
    checkpoint, problem = _load_checkpoint(args.checkpoint)
    report = relative_l2_error(problem, checkpoint.realization(problem), args.samples, _eval_rng(args),
                               checkpoint=os.path.abspath(args.checkpoint))
    print(report)
    if args.out:
        data = report.to_dict()
        data['format_version'] = FORMAT_VERSION
        write_json(args.out, data)
    return EXIT_OK


def cmd_density(args):
    checkpoint, problem = _load_checkpoint(args.checkpoint)
    points = [_point(p, problem) for p in args.point] if args.point else figure_points(problem)
    realization = checkpoint.realization(problem)
    frames = []
    for x in points:
        export = density_export(problem, realization, x, args.samples, grid_size=args.grid,
                                rng=_eval_rng(args), with_exact=not args.no_exact)
        frame = export.to_frame()
        frame.insert(0, 'point', ';'.join(repr(float(c)) for c in x))
        frame['bandwidth'] = export.bandwidth
        frames.append(frame)
        print('x = {}: bandwidth {:.3e}, integral {:.4f}'.format(x, export.bandwidth, export.integral()))
    write_frame(args.out, pd.concat(frames, ignore_index=True))
    return EXIT_OK


def cmd_joint(args):
    checkpoint, problem = _load_checkpoint(args.checkpoint)
    x1, x2 = _point(args.p1, problem), _point(args.p2, problem)
    result = joint_histogram(problem, checkpoint.realization(problem), x1, x2, args.samples,
                             bins=args.bins, rng=_eval_rng(args))
    write_frame(args.out, result.to_frame())
    print('correlation {:.6f} over {} samples'.format(result.correlation, result.n_samples))
    return EXIT_OK


def cmd_residual(args):
    checkpoint, problem = _load_checkpoint(args.checkpoint)
    realization = checkpoint.realization(problem)
    rows = []
    for k in range(args.directions):
        v = admissible_direction(problem, args.seed + k)
        estimate, error = gateaux_residual(problem, realization, v, args.samples,
                                           rng=RngStream(args.seed + k, STREAM_EVAL))
        sigmas = abs(estimate) / error if error > 0 else 0.0
        rows.append({'direction': k, 'estimate': estimate, 'std_error': error, 'sigmas': sigmas})
        print('direction {:>3d}: {: .4e} +- {:.2e} ({:.2f} sigma)'.format(k, estimate, error, sigmas))
    if args.out:
        write_json(args.out, {'format_version': FORMAT_VERSION, 'checkpoint': os.path.abspath(args.checkpoint),
                              'samples': args.samples, 'directions': rows})
    if args.max_sigma is not None and any(r['sigmas'] > args.max_sigma for r in rows):
        return EXIT_NUMERICAL
    return EXIT_OK


_SAMPLERS = {'box': lambda rng, args: uniform_box(rng, args.low, args.high, args.dim, args.n),
             'boundary': lambda rng, args: box_boundary(rng, args.low, args.high, args.dim, args.n),
             'ball': lambda rng, args: uniform_ball(rng, args.dim, args.n),
             'sphere': lambda rng, args: uniform_sphere(rng, args.dim, args.n),
             'normal': lambda rng, args: standard_normal_vec(rng, args.dim, args.n)}


def cmd_sample(args):
    try:
        points = _SAMPLERS[args.sampler](RngStream(args.seed, STREAM_X), args)
    except ValueError as e:
        raise CliError(str(e), EXIT_USAGE)
    frame = pd.DataFrame(points, columns=['x{}'.format(i + 1) for i in range(points.shape[1])])
    if args.out:
        write_frame(args.out, frame)
    else:
        sys.stdout.write(frame.to_csv(index=False))
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = _load_config(args.config, args.seed)
    problem = cfg.make_problem()
    report = gradcheck(problem, seed=cfg.seed, corrupt=1e-2 if args.corrupt_gradient else 0.0)
    print('{}: {} parameters'.format(problem.id, report.n_params))
    print('max relative error, parameter gradient: {:.3e}'.format(report.param_error))
    print('max relative error, spatial gradient:   {:.3e}'.format(report.spatial_error))
    print('PASSED' if report.passed else 'FAILED (tolerance {:.0e})'.format(report.tolerance))
    return EXIT_OK if report.passed else EXIT_NUMERICAL


###############################
#            PARSER           #
###############################

def build_parser():
    parser = argparse.ArgumentParser(prog='sdr', description='Stochastic deep Ritz solver.')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='train a network on a configured problem')
    p.add_argument('--config', required=True)
    p.add_argument('--out', help='output directory (default: <config>_run)')
    p.add_argument('--seed', type=int, help='overrides train.seed')
    p.add_argument('--quiet', action='store_true', help='no progress bar')
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('eval', help='relative L2 mean error of a checkpoint')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--samples', type=int, default=100000)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('density', help='marginal densities of u(x, Z)')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--point', action='append', help='e.g. "0.25,0.25"; repeatable')
    p.add_argument('--samples', type=int, default=100000)
    p.add_argument('--grid', type=int, default=256)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--no-exact', action='store_true', help='skip the exact-solution density')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_density)

    p = sub.add_parser('joint', help='joint histogram of u at two points')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--p1', required=True)
    p.add_argument('--p2', required=True)
    p.add_argument('--samples', type=int, default=100000)
    p.add_argument('--bins', type=int)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_joint)

    p = sub.add_parser('residual', help='Gateaux residual along random admissible directions')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--directions', type=int, default=10)
    p.add_argument('--samples', type=int, default=100000)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--max-sigma', type=float, help='exit 1 when a direction exceeds this many std errors')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_residual)

    p = sub.add_parser('sample', help='draw points from a sampler as CSV')
    p.add_argument('--sampler', required=True, choices=sorted(_SAMPLERS))
    p.add_argument('--dim', type=int, required=True)
    p.add_argument('-n', type=int, required=True)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--low', type=float, default=0.0)
    p.add_argument('--high', type=float, default=1.0)
    p.add_argument('--out')
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser('gradcheck', help='finite-difference check of the derivatives')
    p.add_argument('--config', required=True)
    p.add_argument('--seed', type=int)
    p.add_argument('--corrupt-gradient', action='store_true', help=argparse.SUPPRESS)
    p.set_defaults(handler=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.handler(args)
    except CliError as e:
        print('sdr {}: {}'.format(args.command, e), file=sys.stderr)
        return e.code
    except (NonFiniteError, TrainingAborted) as e:
        print('sdr {}: numerical failure: {}'.format(args.command, e), file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print('sdr {}: {}'.format(args.command, e), file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print('sdr {}: {}'.format(args.command, e), file=sys.stderr)
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
