"""Data behind the three bound figures, as lists of row tuples."""

import math

import numpy as np

from . import bounds
from .errors import DomainError

FIG1_DOMAINS = (10**5, 10**10, 10**15, 10**20)
FIG1_POINTS_PER_DECADE = 10
FIG2_DOMAINS = tuple(10**e for e in range(3, 21))
FIG2_TARGETS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
FIG3_LIPSCHITZ = tuple(float(x) for x in np.logspace(1, 12, 45))
FIG3_DIMS = tuple(range(1, 11))
FIG3_HORIZONS = tuple(10**e for e in range(1, 11))

HEADERS = {
    "figure1": ("N", "T", "bound"),
    "figure2": ("N", "target_normreg", "required_T_bisection", "required_T_envelope"),
    "figure3_D": ("variant", "D", "L_k", "value"),
    "figure3_T": ("variant", "T", "L_k", "value"),
}


def log_integers(lo, hi, per_decade):
    """Increasing integers from ``lo`` to ``hi`` (both included), log-spaced."""
    n = max(2, int(round(math.log10(hi / lo) * per_decade)) + 1)
    exps = np.linspace(math.log10(lo), math.log10(hi), n)
    vals = sorted({int(round(10.0**e)) for e in exps} | {int(lo), int(hi)})
    return [v for v in vals if lo <= v <= hi]


def figure1_rows(domains=FIG1_DOMAINS, per_decade=FIG1_POINTS_PER_DECADE):
    """``(N, T, bound)`` along each curve ``T in [500, N]``; includes ``T = 10^6``."""
    rows = []
    for n in domains:
        ts = set(log_integers(bounds.MIN_HORIZON, n, per_decade))
        if n >= 10**6:
            ts.add(10**6)
        rows += [(n, t, bounds.cor1_normreg_bound(n, t)) for t in sorted(ts)]
    return rows


def figure2_rows(domains=FIG2_DOMAINS, targets=FIG2_TARGETS):
    """Required horizon per target, from integer bisection and from the envelope.

    Targets the bound cannot reach at a given ``N`` get ``nan`` in the
    bisection column.
    """
    rows = []
    for n in domains:
        for r in targets:
            try:
                t_req = float(bounds.required_T_bisection(n, r))
            except DomainError:
                t_req = math.nan
            rows.append((n, r, t_req, bounds.required_T_upper(n, r)))
    return rows


def figure3_rows(lipschitz=FIG3_LIPSCHITZ, dims=FIG3_DIMS, horizons=FIG3_HORIZONS, sigma=1.0):
    """Both panels: dimension sweep at ``T = 1e5`` and horizon sweep at ``D = 5``.

    Returns ``{"D": rows, "T": rows}`` with rows ``(variant, D or T, L_k, value)``.
    The continuous bound is only stated for ``T >= 500``; smaller horizons
    get Grünewälder rows only.
    """
    panels = {"D": [(d, d, 10**5) for d in dims], "T": [(t, 5, t) for t in horizons]}
    out = {}
    for panel, settings in panels.items():
        rows = []
        for key, d, t in settings:
            for lk in lipschitz:
                try:
                    rows.append(("thm2", key, lk, bounds.thm2_continuous_bound(d, t, lk, sigma)))
                except DomainError:
                    pass
                rows.append(("grunewalder", key, lk, bounds.grunewalder_bound(d, t, lk)))
        out[panel] = rows
    return out


def figure_tables(figure):
    """``{table_name: (header, rows)}`` for figure 1, 2 or 3."""
    try:
        fig = int(figure)
    except (TypeError, ValueError):
        fig = None
    if fig == 1:
        return {"figure1": (HEADERS["figure1"], figure1_rows())}
    if fig == 2:
        return {"figure2": (HEADERS["figure2"], figure2_rows())}
    if fig == 3:
        return {f"figure3_{k}": (HEADERS[f"figure3_{k}"], rows) for k, rows in figure3_rows().items()}
    raise DomainError(f"figure must be 1, 2 or 3, got {figure!r}")


def crossover_analysis(dim=5, horizon=10**5, sigma=1.0, lipschitz=FIG3_LIPSCHITZ):
    """Where the continuous bound drops below the Grünewälder bound on a sweep.

    Returns a dict with the gap ``grunewalder - thm2`` per ``L_k``, the
    number of sign changes, the first ``L_k`` from which the gap stays
    positive (``None`` if it never does) and whether the gap increases
    from there on.
    """
    lk = np.asarray(lipschitz, dtype=float)
    gap = np.array([bounds.grunewalder_bound(dim, horizon, x) - bounds.thm2_continuous_bound(dim, horizon, x, sigma)
                    for x in lk])
    sign = gap > 0.0
    changes = int(np.count_nonzero(sign[1:] != sign[:-1]))
    start = None
    if sign[-1]:
        neg = np.flatnonzero(~sign)
        i0 = 0 if neg.size == 0 else int(neg[-1]) + 1
        start = float(lk[i0])
        growing = bool(np.all(np.diff(gap[i0:]) > 0.0))
    else:
        growing = False
    return {"lipschitz": lk, "gap": gap, "sign_changes": changes, "below_from": start, "gap_increasing": growing}
