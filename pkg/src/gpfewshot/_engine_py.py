"""Pure-numpy episode kernel; reference twin of ``_engine_c``.

The posterior is kept in factored form: ``M``, ``diag(C)`` and the rows
``V[:k]`` with ``C = Sigma - V[:k].T @ V[:k]``.  Each informative
observation appends one row at ``O(k N)`` cost, so the ``N x N`` posterior
covariance is never formed.
"""

import math

import numpy as np

from .gauss_math import ei_scaled_array

EI2, UCB2, EI, UCB, EI2_SUM = range(5)

# kernel status codes shared with the compiled kernel
OK = 0
INCONSISTENT = 1


def scores(code, mean, var, y_max, y_min, two_log_n, var_floor=0.0):
    """Acquisition score of every arm for policy ``code``.

    Variances at or below ``var_floor`` count as exactly zero.
    """
    var = np.where(var > var_floor, var, 0.0)
    if code == EI2 or code == EI or code == EI2_SUM:
        sd = np.sqrt(var)
        up = ei_scaled_array(y_max, mean, sd)
        if code == EI:
            return up
        down = ei_scaled_array(-y_min, -mean, sd)
        return np.maximum(up, down) if code == EI2 else up + down
    bonus = np.sqrt(var * two_log_n)
    up = (-y_max + mean) + bonus
    if code == UCB:
        return up
    return np.maximum(up, (y_min - mean) + bonus)


def argmax(score, priority, visited=None):
    """Index of the best score.

    Exact ties go to unvisited arms first, then to the lowest ``priority``
    (lowest index when ``priority`` is ``None``).
    """
    cand = np.flatnonzero(score == score.max())
    if cand.size > 1 and visited is not None:
        fresh = cand[~visited[cand]]
        if fresh.size:
            cand = fresh
    if priority is None:
        return int(cand[0])
    return int(cand[np.argmin(priority[cand])])


def run_policy(cov, mean, values, horizon, code, var_floor, obs_tol, start, priority=None):
    """Run one episode.

    Returns ``(status, actions, observations, bad_arm)``; ``status`` is
    ``INCONSISTENT`` when a determined arm was observed off its posterior
    mean, in which case the arrays are truncated at the failing step.
    """
    n = values.shape[0]
    diagonal = cov.ndim == 1
    m = np.array(mean, dtype=float)
    var = np.maximum(np.array(cov if diagonal else np.diag(cov), dtype=float), 0.0)
    two_log_n = 2.0 * math.log(n) if n > 1 else 0.0
    actions = np.empty(horizon, dtype=np.int64)
    obs = np.empty(horizon, dtype=float)
    rows = None if diagonal else np.empty((horizon, n), dtype=float)
    k = 0
    pinned_idx = np.empty(horizon, dtype=np.intp)
    pinned_val = np.empty(horizon, dtype=float)
    seen = np.zeros(n, dtype=bool)
    y_max = y_min = start
    for t in range(horizon):
        a = argmax(scores(code, m, var, y_max, y_min, two_log_n, var_floor), priority, seen)
        seen[a] = True
        y = float(values[a])
        actions[t] = a
        obs[t] = y
        if t == 0:
            y_max = y_min = y
        else:
            y_max = max(y_max, y)
            y_min = min(y_min, y)
        c_aa = var[a]
        if c_aa <= var_floor:
            if abs(y - m[a]) > obs_tol:
                return INCONSISTENT, actions[: t + 1], obs[: t + 1], a
            continue
        if diagonal:
            m[a] = y
            var[a] = 0.0
            continue
        s = math.sqrt(c_aa)
        col = cov[a].copy()
        if k:
            coef = rows[:k, a]
            nz = np.flatnonzero(coef)
            if 4 * nz.size >= k:
                col -= coef @ rows[:k]
            elif nz.size:
                col -= coef[nz] @ rows[nz]
        v = col / s
        m += v * ((y - m[a]) / s)
        var -= v * v
        np.maximum(var, 0.0, out=var)
        rows[k] = v
        pinned_idx[k] = a
        pinned_val[k] = y
        k += 1
        m[pinned_idx[:k]] = pinned_val[:k]
        var[pinned_idx[:k]] = 0.0
    return OK, actions, obs, -1
