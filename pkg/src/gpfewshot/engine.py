"""Backend selection for the episode kernel.

The compiled kernel (``_engine_c``) is used when it imports; otherwise the
numpy twin in ``_engine_py`` runs.  Setting ``GPFEWSHOT_PURE_PYTHON=1``
forces the fallback.
"""

import os

import numpy as np

from . import _engine_py
from .errors import InconsistentObservationError

try:
    from . import _engine_c
except ImportError:  # extension not built
    _engine_c = None

POLICY_CODES = {
    "ei2": _engine_py.EI2,
    "ucb2": _engine_py.UCB2,
    "ei": _engine_py.EI,
    "ucb": _engine_py.UCB,
    "ei2_sum": _engine_py.EI2_SUM,
}

_KERNELS = {"python": _engine_py.run_policy}
if _engine_c is not None:
    _KERNELS["compiled"] = _engine_c.run_policy

if _engine_c is not None and os.environ.get("GPFEWSHOT_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "compiled"
else:
    BACKEND = "python"


def available_backends():
    return sorted(_KERNELS)


def run_policy(cov, mean, values, horizon, policy, var_floor, obs_tol, start,
               priority=None, backend=None):
    """Run ``horizon`` steps of an index policy on a fixed function realisation.

    Parameters
    ----------
    cov : ndarray
        Prior covariance, ``(N, N)`` or its diagonal ``(N,)``.
    mean, values : ndarray, shape (N,)
        Prior mean and the hidden function values.
    policy : str
        One of ``POLICY_CODES``.
    start : float
        Running max/min used for the very first selection.
    priority : ndarray, optional
        Tie-break key; lowest wins.  ``None`` means lowest arm index.
    backend : {"compiled", "python"}, optional

    Returns
    -------
    actions : ndarray of int64
    observations : ndarray of float
    """
    kernel = _KERNELS[backend or BACKEND]
    status, actions, obs, bad = kernel(
        cov, np.asarray(mean, dtype=float), np.asarray(values, dtype=float),
        int(horizon), POLICY_CODES[policy], float(var_floor), float(obs_tol), float(start),
        None if priority is None else np.asarray(priority, dtype=float),
    )
    if status == _engine_py.INCONSISTENT:
        raise InconsistentObservationError(
            f"step {len(actions) - 1}: determined arm {bad} observed at {obs[-1]!r} "
            f"off its posterior mean by more than {obs_tol:.3g}"
        )
    return np.asarray(actions, dtype=np.int64), np.asarray(obs, dtype=float)
