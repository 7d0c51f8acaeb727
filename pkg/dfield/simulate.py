"""
Forward simulation along a built decoupling field and the checks run on the simulated paths
"""

from dataclasses import dataclass, replace
import csv
import logging
import math

from django.conf import settings
from joblib import Parallel, delayed
import numpy as np

from dfield.backward import build, refined_schedule
from dfield.constants import MissingDeclarationError


# Globals

log = logging.getLogger(__name__)


# Classes

@dataclass
class PathBundle(object):
    """
    Simulated trajectories; `Z[:, k]` is the control used on the step from `times[k]` to `times[k + 1]`.
    """
    times: np.ndarray
    W: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    seed: int
    x0: np.ndarray
    t0: float
    escaped: int = 0

    @property
    def n_paths(self):
        """
        Return the number of paths.
        """
        return self.X.shape[0]

    @property
    def n_steps(self):
        """
        Return the number of time steps.
        """
        return len(self.times) - 1


@dataclass
class ResidualStats(object):
    """
    Backward equation residuals per path.

    The decoupling residual Y - u(t, X) is zero by construction since Y is read from the field.
    """
    residuals: np.ndarray
    decoupling_residual: float = 0.0

    @property
    def mean_abs(self):
        """
        Return the mean absolute residual.
        """
        return float(np.mean(np.abs(self.residuals))) if self.residuals.size else 0.0

    @property
    def max_abs(self):
        """
        Return the largest absolute residual.
        """
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0


@dataclass
class ZBoundReport(object):
    """
    Largest simulated |Z| against max lip * sup|sigma| * (1 + slack).
    """
    max_z: float
    bound: float

    @property
    def passed(self):
        """
        Return True if the simulated Z stays within the bound.
        """
        return self.max_z <= self.bound


@dataclass
class VariationalReport(object):
    """
    Central finite differences of X and Y with respect to the initial point, under common random numbers.
    """
    D_X: np.ndarray
    D_Y: np.ndarray
    bound: float
    uniform_bound: float = math.inf

    @property
    def finite(self):
        """
        Return True if all differences are finite.
        """
        return bool(np.all(np.isfinite(self.D_X)) and np.all(np.isfinite(self.D_Y)))

    @property
    def sup_D_X(self):
        """
        Return the largest |D_X| over paths and times.
        """
        return float(np.max(np.linalg.norm(self.D_X, axis=-1)))

    @property
    def sup_D_Y(self):
        """
        Return the largest |D_Y| over paths and times.
        """
        return float(np.max(np.linalg.norm(self.D_Y, axis=-1)))

    @property
    def initial_D_Y(self):
        """
        Return |D_Y| at the initial time (identical on all paths).
        """
        return float(np.max(np.linalg.norm(self.D_Y[:, 0], axis=-1)))

    @property
    def bounded(self):
        """
        Return True if |D_Y| stays below `uniform_bound` on every path at every time.
        """
        return self.sup_D_Y <= self.uniform_bound

    @property
    def passed(self):
        """
        Return True if differences are finite, |D_Y(t0)| is within `bound` and D_Y is uniformly bounded.
        """
        return self.finite and self.initial_D_Y <= self.bound and self.bounded


@dataclass
class RefinementStudy(object):
    """
    Residuals of successively refined builds and simulations.
    """
    max_residuals: list
    mean_residuals: list

    @property
    def ratios(self):
        """
        Return max|R| ratios between consecutive levels.
        """
        return [
            later / earlier if earlier > 0 else 0.0
            for earlier, later in zip(self.max_residuals, self.max_residuals[1:])
        ]


# Functions

def simulation_times(fld, t0, n_steps):
    """
    Return the simulation time grid on [t0, T].

    With `n_steps` None the grid is t0 followed by the field's own slice times after t0.
    """
    T = fld.terminal.t
    if t0 < fld.earliest.t - 1e-12 or t0 > T:
        raise ValueError('t0={t0:.12g} lies outside the field interval [{start:.12g}, {end:.12g}].'.format(
            t0=t0, start=fld.earliest.t, end=T
        ))
    if n_steps is None:
        later = sorted(time for time in fld.times if time > t0 + 1e-12)
        return np.array([t0] + later)
    if n_steps == 0:
        return np.array([t0])
    return np.linspace(t0, T, n_steps + 1)


def path_generator(seed, path):
    """
    Return the random generator of path number `path`; it depends only on `(seed, path)`.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(path,))))


def simulate_paths(fld, problem, x0, t0, n_paths, n_steps, seed, threads=None):
    """
    Simulate `n_paths` forward paths from `(t0, x0)` by Euler-Maruyama.

    Y and Z are read from the field at (t, X), with partial steps at times off the slice schedule. Paths are split into
    chunks of `DFLD_CHUNK_SIZE` and simulated on `threads` worker threads; path p only uses
    the random stream of `(seed, p)`, so results do not depend on the thread count.
    """
    if n_paths < 1:
        raise ValueError('n_paths must be positive, got {n_paths}.'.format(n_paths=n_paths))
    if n_steps is not None and n_steps < 0:
        raise ValueError('n_steps must be nonnegative, got {n_steps}.'.format(n_steps=n_steps))
    x0 = np.asarray(x0, dtype=float).reshape(problem.n)
    times = simulation_times(fld, float(t0), n_steps)
    chunk_size = settings.DFLD_CHUNK_SIZE
    chunks = [range(start, min(start + chunk_size, n_paths)) for start in range(0, n_paths, chunk_size)]
    results = Parallel(n_jobs=threads or settings.DFLD_THREADS, backend='threading')(
        delayed(_simulate_paths_chunk)(fld, problem, x0, times, seed, paths) for paths in chunks
    )
    bundle = PathBundle(
        times=times,
        W=np.concatenate([result[0] for result in results]),
        X=np.concatenate([result[1] for result in results]),
        Y=np.concatenate([result[2] for result in results]),
        Z=np.concatenate([result[3] for result in results]),
        seed=seed,
        x0=x0,
        t0=float(t0),
        escaped=int(sum(result[4] for result in results)),
    )
    if bundle.escaped:
        log.warning(
            'PathEscape: %d of %d paths left the grid box; the field was extrapolated linearly',
            bundle.escaped, n_paths,
        )
    return bundle


def _simulate_paths_chunk(fld, problem, x0, times, seed, paths):
    """
    Simulate the given path numbers; returns (W, X, Y, Z, escaped count).
    """
    count, n, d, m = len(paths), problem.n, problem.d, fld.terminal.m
    steps = len(times) - 1
    increments = np.zeros((count, steps, d))
    for row, path in enumerate(paths):
        increments[row] = path_generator(seed, path).standard_normal((steps, d))
    increments *= np.sqrt(np.diff(times))[None, :, None]

    W = np.zeros((count, steps + 1, d))
    W[:, 1:] = np.cumsum(increments, axis=1)
    X = np.zeros((count, steps + 1, n))
    Y = np.zeros((count, steps + 1, m))
    Z = np.zeros((count, steps, m, d))
    X[:, 0] = x0
    for k in range(steps):
        t, dt = times[k], times[k + 1] - times[k]
        x = X[:, k]
        Y[:, k], Z[:, k] = fld.evaluate(t, x)
        drift = problem.evaluate_mu(t, x, Y[:, k], Z[:, k])
        diffusion = problem.evaluate_sigma(t, x, Y[:, k], Z[:, k])
        shift = np.zeros_like(x)
        for column in range(d):
            shift += diffusion[:, :, column] * increments[:, k, column][:, None]
        X[:, k + 1] = x + drift * dt + shift
    Y[:, steps] = fld.value_at(times[steps], X[:, steps])
    escaped = int(np.sum(~np.all(fld.grid.contains(X), axis=1)))
    return W, X, Y, Z, escaped


def backward_residual(bundle, problem):
    """
    Return per-path residuals R = Y_end - Y_start - sum f dt - sum Z dW of the backward equation.
    """
    times = bundle.times
    residuals = bundle.Y[:, -1] - bundle.Y[:, 0]
    increments = np.diff(bundle.W, axis=1)
    for k in range(bundle.n_steps):
        dt = times[k + 1] - times[k]
        driver = problem.evaluate_f(times[k], bundle.X[:, k], bundle.Y[:, k], bundle.Z[:, k])
        martingale = np.zeros_like(residuals)
        for column in range(problem.d):
            martingale += bundle.Z[:, k, :, column] * increments[:, k, column][:, None]
        residuals = residuals - driver * dt - martingale
    stats = ResidualStats(residuals=np.linalg.norm(residuals, axis=-1))
    log.info('Backward residual: mean %.3g, max %.3g', stats.mean_abs, stats.max_abs)
    return stats


def z_bound_check(bundle, fld, problem, slack=None):
    """
    Check max |Z| along the paths against max slice Lipschitz estimate * sup|sigma| * (1 + slack).
    """
    sup_sigma = problem.lipschitz.sup_sigma
    if sup_sigma is None:
        raise MissingDeclarationError('sup_sigma', problem.mode)
    slack = settings.DFLD_Z_BOUND_SLACK if slack is None else slack
    bound = float(np.max(fld.lipschitz_estimates)) * sup_sigma * (1.0 + slack)
    max_z = float(np.max(np.linalg.norm(bundle.Z.reshape(bundle.n_paths, bundle.n_steps, -1), axis=-1))) \
        if bundle.Z.size else 0.0
    report = ZBoundReport(max_z=max_z, bound=bound)
    log.info('Z bound: max|Z| = %.6g, bound = %.6g', max_z, bound)
    return report


def variational_check(fld, problem, x0, direction, eps, t0, n_paths, n_steps, seed, slack=None, threads=None):
    """
    Differentiate the simulated (X, Y) in the initial point along `direction` by central differences.

    Both simulations use the same seed, so the differences are pathwise.
    """
    slack = settings.DFLD_VARIATIONAL_SLACK if slack is None else slack
    x0 = np.asarray(x0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    plus = simulate_paths(fld, problem, x0 + eps * direction, t0, n_paths, n_steps, seed, threads=threads)
    minus = simulate_paths(fld, problem, x0 - eps * direction, t0, n_paths, n_steps, seed, threads=threads)
    D_X = (plus.X - minus.X) / (2.0 * eps)
    # Pathwise |D_Y(s)| <= Lip(u(s)) |D_X(s)|, so the largest slice estimate on [t0, T] bounds D_Y uniformly.
    lip_max = max([fld.lipschitz_at(t0)] + [slice_.lip_estimate for slice_ in fld.slices if slice_.t >= t0])
    sup_D_X = float(np.max(np.linalg.norm(D_X, axis=-1)))
    report = VariationalReport(
        D_X=D_X,
        D_Y=(plus.Y - minus.Y) / (2.0 * eps),
        bound=(fld.lipschitz_at(t0) + slack) * float(np.linalg.norm(direction)),
        uniform_bound=(lip_max * math.sqrt(fld.grid.n) + slack) * sup_D_X * (1.0 + slack),
    )
    log.info(
        'Variational check: |D_Y(t0)| = %.6g, bound %.6g, sup|D_Y| = %.6g, uniform bound %.6g',
        report.initial_D_Y, report.bound, report.sup_D_Y, report.uniform_bound,
    )
    return report


def residual_refinement(problem, config, x0, t0, n_paths, n_steps, seed, levels=2, factor=2):
    """
    Rebuild on nested grids and schedules refined by `factor` per level and compare simulated residuals.
    """
    base = build(problem, config)
    times = list(base.field.times)
    max_residuals, mean_residuals = [], []
    for level in range(levels):
        scale = factor ** level
        if level == 0:
            fld = base.field
        else:
            refined_config = replace(config, grid=config.grid.refined(scale), t_stop=times[-1])
            fld = build(problem, refined_config, schedule=refined_schedule(times, scale)).field
        steps = None if n_steps is None else n_steps * scale
        bundle = simulate_paths(fld, problem, x0, t0, n_paths, steps, seed, threads=config.threads)
        stats = backward_residual(bundle, problem)
        max_residuals.append(stats.max_abs)
        mean_residuals.append(stats.mean_abs)
    return RefinementStudy(max_residuals=max_residuals, mean_residuals=mean_residuals)


def export_csv(bundle, path, problem_hash):
    """
    Write one row per (path, step) with columns path, step, t, W, X, Y, Z after a header row with hash and seed.

    Z is empty on the final row of every path.
    """
    d, n, m = bundle.W.shape[2], bundle.X.shape[2], bundle.Y.shape[2]
    columns = ['path', 'step', 't']
    columns += ['W{index}'.format(index=index) for index in range(1, d + 1)]
    columns += ['X{index}'.format(index=index) for index in range(1, n + 1)]
    columns += ['Y{index}'.format(index=index) for index in range(1, m + 1)]
    columns += ['Z{row}{col}'.format(row=row, col=col) for row in range(1, m + 1) for col in range(1, d + 1)]
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(['# problem_hash={hash}'.format(hash=problem_hash), 'seed={seed}'.format(seed=bundle.seed)])
        writer.writerow(columns)
        for p in range(bundle.n_paths):
            for k, t in enumerate(bundle.times):
                row = [p, k, repr(float(t))]
                row += [repr(float(value)) for value in bundle.W[p, k]]
                row += [repr(float(value)) for value in bundle.X[p, k]]
                row += [repr(float(value)) for value in bundle.Y[p, k]]
                if k < bundle.n_steps:
                    row += [repr(float(value)) for value in bundle.Z[p, k].reshape(-1)]
                else:
                    row += [''] * (m * d)
                writer.writerow(row)
    log.info('Exported %d paths to %s', bundle.n_paths, path)
