# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled episode kernel.

Same contract and factored posterior as ``_engine_py.run_policy``.  The
whole episode runs without the GIL; scores are cached per arm and only
recomputed for arms whose posterior moved or when a running extreme moved.
"""

import numpy as np

from libc.math cimport exp, sqrt, fabs, log
from scipy.special.cython_special cimport erfcx
from scipy.linalg.cython_blas cimport dgemv

cdef enum:
    EI2 = 0
    UCB2 = 1
    EI = 2
    UCB = 3
    EI2_SUM = 4

cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double INV_SQRT2 = 0.7071067811865476
cdef double SQRT_HALF_PI = 1.2533141373155003


cdef inline double _ei(double z) noexcept nogil:
    cdef double a = fabs(z)
    cdef double base = exp(-0.5 * a * a) * INV_SQRT_2PI * (1.0 - a * SQRT_HALF_PI * erfcx(a * INV_SQRT2))
    if base < 0.0:
        base = 0.0
    if z < 0.0:
        return base + a
    return base


cdef inline double _ei_scaled(double tau, double mu, double sd) noexcept nogil:
    cdef double d
    if sd > 0.0:
        return sd * _ei((tau - mu) / sd)
    d = mu - tau
    return d if d > 0.0 else 0.0


cdef inline double _score(int code, double m, double var, double y_max, double y_min,
                          double two_log_n, double var_floor) noexcept nogil:
    cdef double sd, up, down, bonus
    if var <= var_floor:
        var = 0.0
    if code == EI2 or code == EI or code == EI2_SUM:
        sd = sqrt(var)
        up = _ei_scaled(y_max, m, sd)
        if code == EI:
            return up
        down = _ei_scaled(-y_min, -m, sd)
        if code == EI2_SUM:
            return up + down
        return up if up >= down else down
    bonus = sqrt(var * two_log_n)
    up = (-y_max + m) + bonus
    if code == UCB:
        return up
    down = (y_min - m) + bonus
    return up if up >= down else down


def run_policy(cov, mean, values, Py_ssize_t horizon, int code, double var_floor,
               double obs_tol, double start, priority=None):
    cdef Py_ssize_t n = values.shape[0]
    cdef bint diagonal = cov.ndim == 1
    cdef bint use_prio = priority is not None
    m_arr = np.array(mean, dtype=np.float64)
    if diagonal:
        var_arr = np.maximum(np.array(cov, dtype=np.float64), 0.0)
        cov_arr = np.zeros((1, 1), dtype=np.float64)
    else:
        cov_arr = np.ascontiguousarray(cov, dtype=np.float64)
        var_arr = np.maximum(np.diag(cov_arr).astype(np.float64), 0.0)
    prio_arr = np.ascontiguousarray(priority if use_prio else np.zeros(1), dtype=np.float64)
    vals_arr = np.ascontiguousarray(values, dtype=np.float64)
    actions_arr = np.empty(horizon, dtype=np.int64)
    obs_arr = np.empty(horizon, dtype=np.float64)
    rows_arr = np.empty((1 if diagonal else horizon, n), dtype=np.float64)
    score_arr = np.empty(n, dtype=np.float64)
    col_arr = np.empty(n, dtype=np.float64)
    coef_arr = np.empty(max(horizon, 1), dtype=np.float64)
    nzi_arr = np.empty(max(horizon, 1), dtype=np.intp)
    pin_idx_arr = np.empty(max(horizon, 1), dtype=np.intp)
    pin_val_arr = np.empty(max(horizon, 1), dtype=np.float64)
    seen_arr = np.zeros(n, dtype=np.uint8)

    cdef double[::1] m = m_arr
    cdef double[::1] var = var_arr
    cdef double[:, ::1] C = cov_arr
    cdef double[::1] prio = prio_arr
    cdef double[::1] vals = vals_arr
    cdef long long[::1] actions = actions_arr
    cdef double[::1] obs = obs_arr
    cdef double[:, ::1] rows = rows_arr
    cdef double[::1] score = score_arr
    cdef double[::1] col = col_arr
    cdef double[::1] coef = coef_arr
    cdef Py_ssize_t[::1] nzi = nzi_arr
    cdef Py_ssize_t[::1] pin_idx = pin_idx_arr
    cdef double[::1] pin_val = pin_val_arr
    cdef unsigned char[::1] seen = seen_arr

    cdef double two_log_n = 2.0 * log(<double>n) if n > 1 else 0.0
    cdef double y_max = start, y_min = start, y, c_aa, s, innov, best, vj, c
    cdef Py_ssize_t t, j, i, a, k = 0, nnz, r
    cdef int status = 0
    cdef Py_ssize_t bad = -1, done = horizon
    cdef bint refresh_all = True
    cdef int bm, bn, inc = 1
    cdef double one = 1.0, minus_one = -1.0
    cdef char trans = b'N'

    with nogil:
        for t in range(horizon):
            if refresh_all:
                for j in range(n):
                    score[j] = _score(code, m[j], var[j], y_max, y_min, two_log_n, var_floor)
                refresh_all = False
            # exact ties: unvisited arms first, then priority (or lowest index)
            a = 0
            best = score[0]
            for j in range(1, n):
                if score[j] > best or (score[j] == best and (
                        (seen[a] and not seen[j])
                        or (use_prio and seen[a] == seen[j] and prio[j] < prio[a]))):
                    best = score[j]
                    a = j
            seen[a] = 1
            y = vals[a]
            actions[t] = a
            obs[t] = y
            if t == 0:
                y_max = y
                y_min = y
                refresh_all = True
            else:
                if y > y_max:
                    y_max = y
                    refresh_all = True
                if y < y_min:
                    y_min = y
                    refresh_all = True
            c_aa = var[a]
            if c_aa <= var_floor:
                if fabs(y - m[a]) > obs_tol:
                    status = 1
                    bad = a
                    done = t + 1
                    break
                continue
            if diagonal:
                m[a] = y
                var[a] = 0.0
                if not refresh_all:
                    score[a] = _score(code, m[a], var[a], y_max, y_min, two_log_n, var_floor)
                continue
            s = sqrt(c_aa)
            for j in range(n):
                col[j] = C[a, j]
            if k > 0:
                nnz = 0
                for i in range(k):
                    c = rows[i, a]
                    coef[i] = c
                    if c != 0.0:
                        nzi[nnz] = i
                        nnz += 1
                if 4 * nnz >= k:
                    # col -= rows[:k].T @ coef, rows viewed as an n x k column-major matrix
                    bm = <int>n
                    bn = <int>k
                    dgemv(&trans, &bm, &bn, &minus_one, &rows[0, 0], &bm, &coef[0], &inc,
                          &one, &col[0], &inc)
                else:
                    for r in range(nnz):
                        i = nzi[r]
                        c = coef[i]
                        for j in range(n):
                            col[j] -= c * rows[i, j]
            innov = (y - m[a]) / s
            for j in range(n):
                vj = col[j] / s
                rows[k, j] = vj
                if vj != 0.0:
                    m[j] += vj * innov
                    var[j] -= vj * vj
                    if var[j] < 0.0:
                        var[j] = 0.0
            pin_idx[k] = a
            pin_val[k] = y
            k += 1
            for i in range(k):
                m[pin_idx[i]] = pin_val[i]
                var[pin_idx[i]] = 0.0
            if not refresh_all:
                for j in range(n):
                    if rows[k - 1, j] != 0.0:
                        score[j] = _score(code, m[j], var[j], y_max, y_min, two_log_n, var_floor)
    return status, actions_arr[:done], obs_arr[:done], bad
