"""Multi-output convolution spectral mixture Gaussian processes.

Datasets are lists of ``(X, y)`` pairs, one per channel, with ``X`` of shape
``(n, P)``. Channel indices passed to ``gram_matrix``, ``predict`` and
``cross_covariance`` are 0-based. Parameters, models and reports are plain
dicts with the same layout as the command line tool's JSON files.
"""

import json

import numpy as np

from . import _core
from ._core import MocsmError, families, param_count

__all__ = [
    "MocsmError",
    "families",
    "param_count",
    "generate_synthetic",
    "split",
    "init_params",
    "kernel_eval",
    "gram_matrix",
    "nlml",
    "nlml_grad",
    "fit",
    "predict",
    "compare",
    "cross_covariance",
]


def _channels(data):
    out = []
    for X, y in data:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out.append((X, np.asarray(y, dtype=float)))
    return out


def _dump(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def generate_synthetic(seed=0, Q=4, n=300, lo=-10.0, hi=10.0):
    return _core.generate_synthetic(seed, Q, n, lo, hi)


def split(data, schemes):
    if isinstance(schemes, str):
        schemes = [schemes]
    return _core.split(_channels(data), list(schemes))


def init_params(data, Q, family="MOCSM", seed=0):
    return json.loads(_core.init_params(_channels(data), Q, family, seed))


def kernel_eval(params, i, j, tau):
    return _core.kernel_eval(_dump(params), i, j, np.atleast_1d(np.asarray(tau, dtype=float)))


def _inputs(channel, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return [int(c) for c in channel], x


def gram_matrix(params, channel, x):
    return _core.gram_matrix(_dump(params), *_inputs(channel, x))


def nlml(params, data):
    return _core.nlml(_dump(params), _channels(data))


def nlml_grad(params, data):
    return _core.nlml_grad(_dump(params), _channels(data))


def fit(params, data, config=None):
    """Returns ``(model, report)``."""
    model, report = _core.fit(_dump(params), _channels(data), _dump(config or {}))
    return json.loads(model), json.loads(report)


def predict(model, channel, x, include_noise=False):
    """Returns posterior ``(mean, variance)`` arrays."""
    return _core.predict(_dump(model), *_inputs(channel, x), include_noise)


def compare(data, schemes, families, Q, config=None, seed=0):
    if isinstance(schemes, str):
        schemes = [schemes]
    return json.loads(_core.compare(_channels(data), list(schemes), list(families), Q, _dump(config or {}), seed))


def cross_covariance(params, pairs, grid, with_counterpart=False):
    """List of ``(tau, label, value)``. Labels use 1-based channels."""
    return _core.cross_covariance(_dump(params), [tuple(p) for p in pairs], list(map(float, grid)), with_counterpart)
