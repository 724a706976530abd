"""Stationary kernels on the unit cube and their reduction to a finite grid.

A continuous instance is a centred GP on ``[0, 1]^D`` with a horizon
``T``.  :func:`build_grid_instance` discretises it on the cell-centred grid
of :func:`~gpfewshot.bounds.thm2_grid_sides`; :func:`continuous_episode`
runs a finite-domain policy there and estimates the continuous supremum
from a joint sample on a grid refined four times per side.

Both shipped kernels are products of one-dimensional kernels, so joint
samples on tensor grids are drawn axis by axis: a low-rank pivoted
Cholesky factor for the squared exponential and the exact Markov
(Ornstein-Uhlenbeck) recursion for the exponential kernel.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial.distance import cdist

from . import bounds
from .errors import DomainError, ResourceError
from .gp_model import ProblemInstance
from .policies import episode_rngs, run_trajectory

KERNEL_KINDS = ("sqexp", "exp")
_KIND_ALIASES = {
    "sqexp": "sqexp",
    "squared_exponential": "sqexp",
    "rbf": "sqexp",
    "exp": "exp",
    "exponential": "exp",
}
#: largest number of grid points handled with dense algebra
MAX_GRID_POINTS = 20000
#: refinement factor per side for the supremum estimate
REFINE = 4
# relative residual at which the one-dimensional low-rank factor is truncated
_LOWRANK_RTOL = 1e-13


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel ``k(x, y)`` on ``[0, 1]^D`` with ``k(x, x) = variance``.

    ``kind`` is ``"sqexp"`` (``exp(-|x-y|_2^2 / 2l^2)``) or ``"exp"``
    (``exp(-|x-y|_1 / l)``), both scaled by ``variance``.
    """

    kind: str
    length_scale: float
    variance: float = 1.0
    dim: int = 1

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise DomainError(f"unknown kernel {self.kind!r}; expected one of {KERNEL_KINDS}")
        object.__setattr__(self, "kind", kind)
        for name in ("length_scale", "variance"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0.0:
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
            object.__setattr__(self, name, v)
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def sigma(self):
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class ContinuousInstance:
    kernel: KernelSpec
    horizon: int

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise DomainError(f"horizon must be a positive integer, got {self.horizon!r}")
        object.__setattr__(self, "horizon", int(self.horizon))


def _as_points(x, dim, name):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != dim:
        raise DomainError(f"{name} must have {dim} coordinates, got shape {x.shape}")
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise DomainError(f"{name} lies outside the unit cube")
    return x


def kernel_matrix(spec, x, y=None):
    """Kernel matrix between point sets ``x (n, D)`` and ``y (m, D)``."""
    x = _as_points(x, spec.dim, "x")
    y = x if y is None else _as_points(y, spec.dim, "y")
    if spec.kind == "sqexp":
        k = cdist(x, y, "sqeuclidean")
        k *= -0.5 / spec.length_scale**2
    else:
        k = cdist(x, y, "cityblock")
        k *= -1.0 / spec.length_scale
    np.exp(k, out=k)
    k *= spec.variance
    return k


def kernel_eval(spec, x, y):
    """``k(x, y)`` for two points of the unit cube."""
    return float(kernel_matrix(spec, np.reshape(x, (1, -1)), np.reshape(y, (1, -1)))[0, 0])


def lipschitz_constant(spec):
    """Certified ``L_k`` with ``|k(x,x) - k(x,y)| <= L_k |x - y|_inf`` on the cube.

    Exponential: ``1 - exp(-u) <= u`` and ``|.|_1 <= D |.|_inf`` give
    ``variance D / l``.  Squared exponential: ``1 - exp(-r^2/2l^2)`` has
    slope at most ``exp(-1/2) / l`` in ``r = |.|_2 <= sqrt(D) |.|_inf``.
    """
    if spec.kind == "exp":
        return spec.variance * spec.dim / spec.length_scale
    return spec.variance * math.sqrt(spec.dim) / (spec.length_scale * math.sqrt(math.e))


def cell_centers(sides):
    """Cell centres ``(i + 0.5) / S`` of a uniform 1-D partition of ``[0, 1]``."""
    return (np.arange(sides, dtype=float) + 0.5) / sides


def grid_points(sides, dim):
    """All ``sides**dim`` cell centres, first coordinate varying slowest."""
    axis = cell_centers(sides)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def grid_sides(cont):
    return bounds.thm2_grid_sides(cont.kernel.dim, cont.horizon, lipschitz_constant(cont.kernel))


def build_grid_instance(cont):
    """Finite instance on the pre-selection grid.

    Returns
    -------
    instance : ProblemInstance
        ``mu = 0`` and ``Sigma[i, j] = k(p_i, p_j)``; horizon ``T``.
    points : ndarray, shape (S**D, D)

    Raises
    ------
    DomainError
        ``L_k <= e``.
    ResourceError
        More than ``MAX_GRID_POINTS`` grid points.
    """
    spec = cont.kernel
    sides = grid_sides(cont)
    log_n = spec.dim * math.log(sides)
    if log_n > math.log(MAX_GRID_POINTS):
        raise ResourceError(
            f"grid of {sides}^{spec.dim} points exceeds the dense budget of {MAX_GRID_POINTS}; "
            "use a smaller horizon or a larger length scale"
        )
    points = grid_points(sides, spec.dim)
    cov = kernel_matrix(spec, points)
    instance = ProblemInstance(points.shape[0], cont.horizon, np.zeros(points.shape[0]), cov, trusted=True)
    return instance, points


def refinement_correction(cont):
    """Discretisation bound ``sqrt(2 L_k / S') (2 sqrt(log 2 S'^D) + 15 sqrt(D))`` at ``S' = 4 S``.

    How far the supremum can exceed its estimate on the refined grid, in
    expectation; reported next to the Monte Carlo regret.
    """
    spec = cont.kernel
    fine = REFINE * grid_sides(cont)
    lk = lipschitz_constant(spec)
    return math.sqrt(2.0 * lk / fine) * (
        2.0 * math.sqrt(math.log(2.0) + spec.dim * math.log(fine)) + 15.0 * math.sqrt(spec.dim)
    )


# ---------------------------------------------------------------------------
# joint sampling on tensor grids


def lazy_pivoted_cholesky(diag, column, rtol=_LOWRANK_RTOL, max_rank=None):
    """Low-rank ``K ~= F.T @ F`` generating kernel columns on demand.

    Parameters
    ----------
    diag : ndarray, shape (M,)
        Diagonal of ``K``.
    column : callable
        ``column(i)`` returns ``K[:, i]``.
    rtol : float
        Stop once the largest residual variance is below ``rtol * max(diag)``.

    Returns
    -------
    ndarray, shape (rank, M)
    """
    resid = np.array(diag, dtype=float)
    m = resid.shape[0]
    max_rank = m if max_rank is None else min(max_rank, m)
    tol = rtol * float(resid.max(initial=0.0))
    rows = np.empty((min(max_rank, 64), m))
    k = 0
    while k < max_rank:
        if k == rows.shape[0]:
            rows = np.concatenate([rows, np.empty((min(k, max_rank - k), m))])
        i = int(np.argmax(resid))
        piv = resid[i]
        if piv <= tol:
            break
        col = np.array(column(i), dtype=float)
        if k:
            col -= rows[:k, i] @ rows[:k]
        row = col / math.sqrt(piv)
        rows[k] = row
        resid -= row * row
        resid[i] = 0.0
        k += 1
    return rows[:k].copy()


@dataclass
class _AxisRoot:
    """Square-root operator of a unit-variance 1-D kernel on sorted coordinates."""

    kind: str
    coords: np.ndarray
    length_scale: float
    factor: np.ndarray = field(default=None, repr=False)  # (rank, M), sqexp only

    @classmethod
    def build(cls, spec, coords):
        root = cls(spec.kind, coords, spec.length_scale)
        if spec.kind == "sqexp":
            scale = -0.5 / spec.length_scale**2
            root.factor = lazy_pivoted_cholesky(
                np.ones(coords.shape[0]), lambda i: np.exp(scale * (coords - coords[i]) ** 2)
            )
        else:
            rho = np.exp(-np.diff(coords) / spec.length_scale)
            root.factor = np.stack([rho, np.sqrt(-np.expm1(-2.0 * np.diff(coords) / spec.length_scale))])
        return root

    @property
    def rank(self):
        return self.factor.shape[0] if self.kind == "sqexp" else self.coords.shape[0]

    def apply(self, z, axis):
        """Map standard normals along ``axis`` to a correlated sample there."""
        z = np.moveaxis(z, axis, 0)
        if self.kind == "sqexp":
            out = np.tensordot(self.factor.T, z, axes=(1, 0))
        else:
            rho, innov = self.factor
            out = np.empty_like(z)
            out[0] = z[0]
            for i in range(1, z.shape[0]):
                out[i] = rho[i - 1] * out[i - 1] + innov[i - 1] * z[i]
        return np.moveaxis(out, 0, axis)


class GridSampler:
    """Joint GP samples on the pre-selection grid and its 4x refinement.

    Coordinates per axis are the union of the coarse and the refined cell
    centres; the sample lives on their tensor grid, which contains both
    grids.  ``coarse_index`` picks the coarse points in the order of
    :func:`grid_points`.
    """

    def __init__(self, spec, sides, refine=REFINE):
        self.spec = spec
        self.sides = sides
        coarse = cell_centers(sides)
        fine = cell_centers(refine * sides)
        coords, inverse = np.unique(np.concatenate([coarse, fine]), return_inverse=True)
        self.coords = coords
        self._coarse_axis = inverse[:sides]
        self.root = _AxisRoot.build(spec, coords)

    @property
    def n_points(self):
        return self.coords.shape[0] ** self.spec.dim

    def sample(self, rng):
        """Return ``(coarse_values, sup_estimate, inf_estimate)`` from one joint draw."""
        d = self.spec.dim
        z = rng.standard_normal((self.root.rank,) * d)
        for axis in range(d):
            z = self.root.apply(z, axis)
        z *= self.spec.sigma
        coarse = z[np.ix_(*([self._coarse_axis] * d))].ravel()
        return coarse, float(z.max()), float(z.min())


@dataclass
class ContinuousSetup:
    """Grid instance and joint sampler for one continuous instance, built once."""

    cont: ContinuousInstance
    instance: ProblemInstance
    points: np.ndarray
    sampler: GridSampler

    @classmethod
    def build(cls, cont):
        instance, points = build_grid_instance(cont)
        sampler = GridSampler(cont.kernel, grid_sides(cont))
        return cls(cont, instance, points, sampler)


def run_on_grid(setup, policy, seed, tie_break="lowest", backend=None):
    """Episode on a prebuilt setup; returns ``(trajectory, sup_estimate, inf_estimate)``."""
    f_rng, p_rng = episode_rngs(seed)
    values, sup_estimate, inf_estimate = setup.sampler.sample(f_rng)
    traj = run_trajectory(setup.instance, values, policy, p_rng, tie_break, backend)
    return traj, sup_estimate, inf_estimate


def continuous_episode(cont, policy, seed, setup=None, tie_break="lowest", backend=None):
    """One episode on the pre-selection grid.

    Returns
    -------
    trajectory : Trajectory
    sup_estimate : float
        Maximum of the same GP sample over the coarse grid and its 4x
        refinement; never below the coarse-grid maximum.
    """
    setup = ContinuousSetup.build(cont) if setup is None else setup
    traj, sup_estimate, _ = run_on_grid(setup, policy, seed, tie_break, backend)
    return traj, sup_estimate
