"""
One backward step of the decoupling field: per-node Picard fixed point with Gauss-Hermite expectations
"""

from dataclasses import dataclass
import itertools
import logging
import math

from django.conf import settings
from joblib import Parallel, delayed
import numpy as np
from scipy.special import roots_hermitenorm

from dfield.constants import ExprDomainError, PicardDivergence, QuadratureSizeError
from dfield.field import FieldSlice, interpolate


# Globals

log = logging.getLogger(__name__)

MAX_QUADRATURE_DIM = 8


# Classes

@dataclass(frozen=True)
class QuadratureRule(object):
    """
    Tensor Gauss-Hermite rule for E[g(N)] with N ~ N(0, I_d).

    `nodes` has shape (q^d, d); `weights` sum to 1.
    """
    d: int
    q: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        """
        Return the number of nodes.
        """
        return len(self.weights)


@dataclass(frozen=True)
class PicardConfig(object):
    """
    Fixed point iteration settings.
    """
    tol: float = 1e-12
    max_iter: int = 200
    damping: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError('Picard tolerance must be positive, got {tol}.'.format(tol=self.tol))
        if self.max_iter < 1:
            raise ValueError('Picard max_iter must be at least 1, got {max_iter}.'.format(max_iter=self.max_iter))
        if not 0 < self.damping <= 1:
            raise ValueError('Damping must lie in (0, 1], got {damping}.'.format(damping=self.damping))

    @classmethod
    def from_settings(cls, **overrides):
        """
        Return a config with defaults from settings, replaced by any non-None `overrides`.
        """
        values = {
            'tol': settings.DFLD_DEFAULT_PICARD_TOL,
            'max_iter': settings.DFLD_DEFAULT_PICARD_MAX_ITER,
            'damping': 1.0,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass
class _ChunkResult(object):
    """
    Fixed point values for one chunk of grid nodes.
    """
    y: np.ndarray
    z: np.ndarray
    iterations: int
    deltas: list


# Functions

def gauss_hermite(d, q):
    """
    Return the d-dimensional tensor Gauss-Hermite rule with q nodes per axis, normalized for N(0, I).
    """
    if not 1 <= d <= MAX_QUADRATURE_DIM:
        raise QuadratureSizeError('Quadrature dimension must be in [1, {limit}], got {d}.'.format(
            limit=MAX_QUADRATURE_DIM, d=d
        ))
    if q < 1:
        raise QuadratureSizeError('Quadrature order must be positive, got {q}.'.format(q=q))
    if q ** d > settings.DFLD_QUADRATURE_NODE_CAP:
        raise QuadratureSizeError('Rule with {q}^{d} nodes exceeds the cap of {cap}.'.format(
            q=q, d=d, cap=settings.DFLD_QUADRATURE_NODE_CAP
        ))
    points, weights = roots_hermitenorm(q)
    weights = weights / np.sum(weights)
    # Symmetrize; roots come in +- pairs and the middle root of an odd rule is 0.
    points = 0.5 * (points - points[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes = np.array(list(itertools.product(points, repeat=d)), dtype=float).reshape(-1, d)
    tensor_weights = np.array([np.prod(combination) for combination in itertools.product(weights, repeat=d)])
    return QuadratureRule(d=d, q=q, nodes=nodes, weights=tensor_weights / np.sum(tensor_weights))


def project_onto_ball(y, z, radius):
    """
    Project the concatenated (y, z) vectors onto the closed Euclidean ball of `radius`.

    `y` has shape (N, m), `z` shape (N, m, d).
    """
    count = y.shape[0]
    norms = np.sqrt(np.sum(y ** 2, axis=-1) + np.sum(z.reshape(count, -1) ** 2, axis=-1))
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return y * scale[:, None], z * scale[:, None, None]


def _solve_chunk(nodes, next_slice, t, h, problem, rule, config, cutoff, y_start, z_start):
    """
    Run the fixed point iteration on a chunk of nodes; each node stops as soon as its own change is below tol.
    """
    count, m, d = len(nodes), next_slice.m, problem.d
    y, z = y_start.copy(), z_start.copy()
    active = np.ones(count, dtype=bool)
    root = math.sqrt(h)
    deltas = []
    iterations = 0
    while np.any(active):
        if iterations >= config.max_iter:
            raise PicardDivergence(t, iterations, deltas[-1] if deltas else math.inf)
        iterations += 1
        x, y_old, z_old = nodes[active], y[active], z[active]
        y_arg, z_arg = (y_old, z_old) if cutoff is None else project_onto_ball(y_old, z_old, cutoff)
        try:
            drift = problem.evaluate_mu(t, x, y_arg, z_arg)
            diffusion = problem.evaluate_sigma(t, x, y_arg, z_arg)
            driver = problem.evaluate_f(t, x, y_arg, z_arg)
        except ExprDomainError as error:
            log.warning('Coefficient evaluation failed at t=%.12g: %s', t, error)
            raise PicardDivergence(t, iterations, math.inf)
        base = x + drift * h
        y_new = np.zeros((len(x), m))
        z_new = np.zeros((len(x), m, d))
        for point, weight in zip(rule.nodes, rule.weights):
            shift = np.zeros_like(x)
            for column in range(d):
                shift += diffusion[:, :, column] * point[column]
            values = interpolate(next_slice, base + root * shift)
            y_new += weight * values
            z_new += weight * values[:, :, None] * point[None, None, :]
        y_new -= driver * h
        z_new /= root
        if config.damping < 1:
            y_new = config.damping * y_new + (1.0 - config.damping) * y_old
            z_new = config.damping * z_new + (1.0 - config.damping) * z_old
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(z_new))):
            raise PicardDivergence(t, iterations, math.inf)
        change = np.maximum(
            np.max(np.abs(y_new - y_old), axis=-1),
            np.max(np.abs(z_new - z_old).reshape(len(x), -1), axis=-1),
        )
        y[active], z[active] = y_new, z_new
        deltas.append(float(np.max(change)))
        converged = np.flatnonzero(active)[change <= config.tol]
        active[converged] = False
    return _ChunkResult(y=y, z=z, iterations=iterations, deltas=deltas)


def _point_rule(problem, rule):
    if problem.sigma_is_zero:
        return QuadratureRule(d=problem.d, q=1, nodes=np.zeros((1, problem.d)), weights=np.ones(1))
    return rule


def solve_at(points, next_slice, t, h, problem, rule, config, cutoff=None):
    """
    Solve the step equations at arbitrary `points` of shape (N, d) instead of the grid nodes.

    Returns the (Y, Z) arrays of shapes (N, m) and (N, m, d).
    """
    if not h > 0:
        raise ValueError('Step length must be positive, got {h}.'.format(h=h))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    y_start = interpolate(next_slice, points)
    if next_slice.z_values is not None:
        z_start = interpolate(next_slice, points, which='z')
    else:
        z_start = np.zeros((len(points), next_slice.m, problem.d))
    result = _solve_chunk(
        points, next_slice, t, h, problem, _point_rule(problem, rule), config, cutoff, y_start, z_start,
    )
    return result.y, result.z


def backward_step(next_slice, t, h, problem, rule, config, cutoff=None, threads=None, parallel=None):
    """
    Return the slice at `t = next_slice.t - h`.

    At every grid node x the pair (Y, Z) solves

        Y = sum_k w_k U(X_k) - f(t, x, Y, Z) h
        Z = sum_k w_k U(X_k) w_k^T / sqrt(h)
        X_k = x + mu(t, x, Y, Z) h + sigma(t, x, Y, Z) sqrt(h) w_k

    with U the interpolant of `next_slice`. If `cutoff` is given, (Y, Z) are projected onto the
    ball of that radius before entering the coefficients.

    Nodes are split into chunks of `DFLD_CHUNK_SIZE` and solved on `threads` worker threads, or on
    an open `parallel` pool when one is passed; the result does not depend on the number of threads.
    """
    if not h > 0:
        raise ValueError('Step length must be positive, got {h}.'.format(h=h))
    grid = next_slice.grid
    nodes = grid.nodes
    rule = _point_rule(problem, rule)
    y_start = np.array(next_slice.u_values)
    if next_slice.z_values is not None:
        z_start = np.array(next_slice.z_values)
    else:
        z_start = np.zeros((grid.node_count, next_slice.m, problem.d))

    chunk_size = settings.DFLD_CHUNK_SIZE
    bounds = [(start, min(start + chunk_size, grid.node_count)) for start in range(0, grid.node_count, chunk_size)]
    if parallel is None:
        parallel = Parallel(n_jobs=threads or settings.DFLD_THREADS, backend='threading')
    results = parallel(
        delayed(_solve_chunk)(
            nodes[start:stop], next_slice, t, h, problem, rule, config, cutoff,
            y_start[start:stop], z_start[start:stop],
        )
        for start, stop in bounds
    )

    iterations = max(result.iterations for result in results)
    deltas = [
        max(result.deltas[index] for result in results if index < len(result.deltas))
        for index in range(iterations)
    ]
    log.debug('Picard at t=%.12g: %d iterations, deltas %s', t, iterations, deltas)
    return FieldSlice(
        t,
        grid,
        np.concatenate([result.y for result in results]),
        np.concatenate([result.z for result in results]),
        iterations=iterations,
        deltas=deltas,
    )
