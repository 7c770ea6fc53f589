"""
Implementation of various functions that ease the work, but do not belong
in one of the other modules: atomic JSON and CSV output, run manifests,
parsing of command-line points, the worker-thread cap and Monte Carlo
mean estimates.
"""
import datetime
import json
import os
import platform
import sys
import tempfile

import numpy as np

from sdritz.version import __version__

__all__ = ['FORMAT_VERSION',
           'thread_count',
           'atomic_write',
           'write_json',
           'read_json',
           'write_frame',
           'parse_point',
           'utc_timestamp',
           'RunManifest',
           'mean_and_error']

FORMAT_VERSION = 1


def thread_count(workers=None):
    """Number of worker threads to use.

    Parameters
    ----------
    workers: int, optional
        Requested number of threads. Defaults to the number of CPUs.

    Returns
    -------
    int
        The requested number, capped by the SDR_THREADS environment
        variable when it is set, and at least 1."""
    count = (os.cpu_count() or 1) if workers is None else int(workers)
    cap = os.environ.get('SDR_THREADS')
    if cap:
        try:
            count = min(count, int(cap))
        except ValueError:
            raise ValueError('SDR_THREADS must be an integer, got {!r}'.format(cap))
    return max(count, 1)


def atomic_write(path, text):
    """Writes *text* to *path* through a temporary file in the same
    directory, renamed into place once complete."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp_', suffix=os.path.basename(path))
    try:
        with os.fdopen(handle, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError('object of type {} is not JSON serializable'.format(type(obj).__name__))


def write_json(path, obj):
    """Writes *obj* as indented JSON. Floats are written in their shortest
    round-trip representation, so they read back bit-exactly."""
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_to_builtin)
    atomic_write(path, text + '\n')


def read_json(path):
    """Reads a JSON file.

    Raises
    ------
    FileNotFoundError
        If *path* does not exist.
    ValueError
        If the file is not valid JSON."""
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_frame(path, frame):
    """Writes a :class:`pandas.DataFrame` as CSV without index, with floats
    in round-trip precision."""
    atomic_write(path, frame.to_csv(index=False))


def parse_point(text, dim=None):
    """Parses a comma separated point such as ``"0.25,0.25"``.

    Parameters
    ----------
    text: str
    dim: int, optional
        Expected number of coordinates.

    Returns
    -------
    NumPy array"""
    try:
        point = np.array([float(v) for v in text.split(',')])
    except (AttributeError, ValueError):
        raise ValueError('malformed point {!r}'.format(text))
    if point.size == 0 or not np.all(np.isfinite(point)):
        raise ValueError('malformed point {!r}'.format(text))
    if dim is not None and point.size != dim:
        raise ValueError('point {!r} has {} coordinates, expected {}'.format(text, point.size, dim))
    return point


def utc_timestamp():
    return datetime.datetime.now(datetime.timezone.utc).replace(microsecond=0).isoformat()


class RunManifest(object):

    """Record of one run: configuration snapshot, versions, seed, start and
    end timestamps and the files written."""

    def __init__(self, command, config=None, seed=None):
        super(RunManifest, self).__init__()
        self.command = command
        self.config = config
        self.seed = seed
        self.started = utc_timestamp()
        self.finished = None
        self.files = []

    def add_file(self, path):
        self.files.append(os.path.basename(path))

    def to_dict(self):
        return {'format_version': FORMAT_VERSION,
                'command': self.command,
                'argv': ' '.join([os.path.basename(sys.argv[0])] + sys.argv[1:]),
                'version': __version__,
                'python_version': platform.python_version(),
                'numpy_version': np.__version__,
                'config': self.config,
                'seed': self.seed,
                'start_utc': self.started,
                'end_utc': self.finished,
                'files': sorted(self.files)}

    def write(self, out_dir):
        """Stamps the end time and writes manifest.json into *out_dir*."""
        self.finished = utc_timestamp()
        path = os.path.join(out_dir, 'manifest.json')
        write_json(path, self.to_dict())
        return path


def mean_and_error(values):
    r"""Sample mean of Monte Carlo values and its standard error
    :math:`s/\sqrt{n}`.

    Returns
    -------
    tuple
        (mean, standard error); the error is 0 for a single value."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if n == 0:
        raise ValueError('no values to average')
    mean = values.mean()
    if n == 1:
        return float(mean), 0.0
    return float(mean), float(values.std(ddof=1) / np.sqrt(n))
