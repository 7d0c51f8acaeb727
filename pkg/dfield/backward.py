"""
Backward construction of the decoupling field on the maximal interval, with blowup detection and inner cutoff
"""

from dataclasses import dataclass, replace
import dataclasses
import logging
import math

from django.conf import settings
from joblib import Parallel
import numpy as np

from dfield.constants import (
    BlowupTriggers,
    CutoffEscalationLimit,
    InadmissibleProblemError,
    MissingDeclarationError,
    NoAdmissibleStep,
    PicardDivergence,
)
from dfield.contraction import (
    LipschitzTriple,
    fit_growth_constant,
    growth_envelope_check,
    max_step,
)
from dfield.field import DecouplingFieldApprox, interpolate, terminal_slice
from dfield.localstep import PicardConfig, backward_step, gauss_hermite
from dfield.problem import check_admissible


# Globals

log = logging.getLogger(__name__)
buildlog = logging.getLogger('dfield.buildlog')

TIME_EPSILON = 1e-12
CONTINUITY_SAMPLE = 50


# Classes

@dataclass(frozen=True)
class BuildConfig(object):
    """
    Settings of a backward build. Unset values come from the DFLD_* settings.

    `h_cap` bounds every step on top of the contraction step size.
    """
    grid: object
    margin: float = None
    picard: PicardConfig = None
    quad_order: int = None
    lip_cap: float = None
    value_cap: float = None
    cutoff_H0: float = None
    cutoff_growth: float = None
    max_escalations: int = None
    t_stop: float = 0.0
    h_cap: float = None
    threads: int = None

    def __post_init__(self):
        defaults = {
            'margin': settings.DFLD_DEFAULT_MARGIN,
            'quad_order': settings.DFLD_DEFAULT_QUAD_ORDER,
            'lip_cap': settings.DFLD_DEFAULT_LIP_CAP,
            'value_cap': settings.DFLD_DEFAULT_VALUE_CAP,
            'cutoff_growth': settings.DFLD_CUTOFF_GROWTH,
            'max_escalations': settings.DFLD_CUTOFF_MAX_ESCALATIONS,
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.picard is None:
            object.__setattr__(self, 'picard', PicardConfig.from_settings())
        if not 0 < self.margin < 1:
            raise ValueError('margin must lie in (0, 1), got {margin}.'.format(margin=self.margin))
        if not (self.lip_cap > 0 and self.value_cap > 0):
            raise ValueError('lip_cap and value_cap must be positive.')
        if self.h_cap is not None and not self.h_cap > 0:
            raise ValueError('h_cap must be positive, got {h_cap}.'.format(h_cap=self.h_cap))
        if self.cutoff_growth <= 1:
            raise ValueError('cutoff_growth must exceed 1, got {growth}.'.format(growth=self.cutoff_growth))


@dataclass(frozen=True)
class TraceEntry(object):
    """
    Summary of one accepted slice.
    """
    t: float
    h: float
    iterations: int
    lip_estimate: float
    max_u: float
    max_z: float
    H: float = None
    explosion: float = None

    def as_line(self):
        """
        Return the build log line for this slice.
        """
        return 't={t:.12g} h={h:.6g} iterations={iterations} lip={lip:.6g} max_u={max_u:.6g} max_z={max_z:.6g} ' \
            'H={H} explosion={explosion:.6g}'.format(
                t=self.t, h=self.h, iterations=self.iterations, lip=self.lip_estimate, max_u=self.max_u,
                max_z=self.max_z, H='none' if self.H is None else '{:.6g}'.format(self.H), explosion=self.explosion,
            )


@dataclass(frozen=True)
class BlowupReport(object):
    """
    Why and where a backward build stopped before `t_stop`.

    `t_min_estimate` is the time of the last accepted slice below T, or the first rejected time when
    no step was accepted.
    """
    t_min_estimate: float
    trigger: str
    trace: tuple
    detail: str = ''

    def summary(self):
        """
        Return a one-line description.
        """
        return 't_min = {t:.6g} trigger={trigger}'.format(t=self.t_min_estimate, trigger=self.trigger)


@dataclass
class PassivityCheck(object):
    """
    Whether the inner cutoff was inactive on one attempted slice.
    """
    t: float
    H: float
    max_u: float
    max_z: float

    @property
    def passed(self):
        """
        Return True if both u and Z stay within H/2.
        """
        return self.max_u <= self.H / 2 and self.max_z <= self.H / 2


@dataclass
class BuildResult(object):
    """
    Field built from T down to `t_stop`, or down to the last slice before a blowup.
    """
    field: DecouplingFieldApprox
    trace: list
    blowup: BlowupReport = None
    passivity: list = dataclasses.field(default_factory=list)

    @property
    def completed(self):
        """
        Return True if the build reached `t_stop`.
        """
        return self.blowup is None


@dataclass
class AgreementReport(object):
    """
    Node-wise differences between builds on successively refined grids and schedules.

    `differences[k]` compares level k with level k+1 at the coarse nodes and coarse slice times.
    """
    differences: list
    per_time: list
    tolerance: float
    failures: list = dataclasses.field(default_factory=list)

    @property
    def passed(self):
        """
        Return True if all builds succeeded and the first comparison is within tolerance.
        """
        return not self.failures and bool(self.differences) and self.differences[0] <= self.tolerance

    @property
    def ratios(self):
        """
        Return the ratios between consecutive differences.
        """
        return [
            later / earlier if earlier > 0 else 0.0
            for earlier, later in zip(self.differences, self.differences[1:])
        ]

    def converging(self, max_ratio=0.7, floor=1e-10):
        """
        Return True if every difference above `floor` shrinks by at least `max_ratio` at the next level.
        """
        return all(
            later <= max_ratio * earlier
            for earlier, later in zip(self.differences, self.differences[1:])
            if earlier > floor
        )


class _Cutoff(object):
    """
    Current inner cutoff radius and its growth factor.
    """

    def __init__(self, radius, growth):
        self.radius = radius
        self.growth = growth


# Functions

def explosion_quantity(lip_estimate, max_u, L_sigma_z):
    """
    Return ((1 + lip)^-1 - (1 + 1/L_sigma_z)^-1) / (|u| + 1), which tends to 0 when the field explodes.
    """
    forbidden = 0.0 if L_sigma_z == 0 else 1.0 / (1.0 + 1.0 / L_sigma_z)
    return (1.0 / (1.0 + lip_estimate) - forbidden) / (max_u + 1.0)


def _terminal_lipschitz(problem, slice_, from_xi):
    """
    Return the Lipschitz constant of the terminal condition of the next step.
    """
    if from_xi:
        return max(problem.lipschitz.L_xi_x, slice_.lip_estimate)
    return slice_.lip_estimate


def _entry(slice_, h, problem, radius=None):
    """
    Return the trace entry for an accepted slice.
    """
    return TraceEntry(
        t=slice_.t,
        h=h,
        iterations=slice_.iterations,
        lip_estimate=slice_.lip_estimate,
        max_u=slice_.max_abs_u,
        max_z=slice_.max_abs_z,
        H=radius,
        explosion=explosion_quantity(slice_.lip_estimate, slice_.max_abs_u, problem.lipschitz.L_sigma_z),
    )


def _blowup_trigger(slice_, problem, config):
    """
    Return `(trigger, detail)` if `slice_` must be rejected, else None.
    """
    L_sigma_z = problem.lipschitz.L_sigma_z
    if L_sigma_z > 0 and slice_.lip_estimate >= (1.0 - config.margin) / L_sigma_z:
        return BlowupTriggers.LIPSCHITZ_EXPLOSION, 'lip {lip:.6g} reached (1 - margin)/L_sigma_z = {limit:.6g}'.format(
            lip=slice_.lip_estimate, limit=(1.0 - config.margin) / L_sigma_z
        )
    if slice_.lip_estimate > config.lip_cap:
        return BlowupTriggers.LIPSCHITZ_EXPLOSION, 'lip {lip:.6g} exceeds lip_cap {cap:.6g}'.format(
            lip=slice_.lip_estimate, cap=config.lip_cap
        )
    if problem.is_markovian_local and slice_.max_abs_u > config.value_cap:
        return BlowupTriggers.VALUE_EXPLOSION, 'max|u| {value:.6g} exceeds value_cap {cap:.6g}'.format(
            value=slice_.max_abs_u, cap=config.value_cap
        )
    return None


def _next_time(current, config, schedule):
    """
    Return the next scheduled time, or None if the schedule is exhausted.
    """
    if schedule is not None:
        later = [time for time in schedule if time < current.t - TIME_EPSILON]
        return max(later) if later else None
    if current.t <= config.t_stop + TIME_EPSILON:
        return None
    return config.t_stop


def _landing_time(current, h, target):
    """
    Return the time reached by a step of length `h`, landing exactly on `target` when it is reached.
    """
    return target if h >= current.t - target else current.t - h


def _step_length(problem, config, current, target, lipschitz, from_xi):
    """
    Return the step from `current.t` toward `target` allowed by the contraction step size and `h_cap`.
    """
    remaining = current.t - target
    triple = LipschitzTriple(lipschitz, problem.lipschitz.L_sigma_z, _terminal_lipschitz(problem, current, from_xi))
    h = min(max_step(triple, config.margin), remaining)
    if config.h_cap is not None:
        h = min(h, config.h_cap)
    if remaining - h <= TIME_EPSILON * max(1.0, abs(current.t)):
        h = remaining
    return h


def _build(problem, config, schedule, initial_slice, cutoff):
    """
    Shared backward induction for `build_field` and `build_with_cutoff`.
    """
    report = check_admissible(problem)
    if not report.passed:
        raise InadmissibleProblemError(report)

    rule = gauss_hermite(problem.d, config.quad_order)
    current = initial_slice if initial_slice is not None else terminal_slice(problem, config.grid)
    from_xi = initial_slice is None
    slices = [current]
    trace = [_entry(current, 0.0, problem, cutoff.radius if cutoff else None)]
    passivity = []
    steps = []
    blowup = None
    schedule = sorted(schedule, reverse=True) if schedule is not None else None

    attempted = None
    with Parallel(n_jobs=config.threads or settings.DFLD_THREADS, backend='threading') as parallel:
        while True:
            target = _next_time(current, config, schedule)
            if target is None:
                break
            attempted = target
            try:
                if cutoff is None:
                    if schedule is not None:
                        h = current.t - target
                    else:
                        h = _step_length(problem, config, current, target, problem.lipschitz.L, from_xi)
                    attempted = _landing_time(current, h, target)
                    candidate = backward_step(
                        current, attempted, h, problem, rule, config.picard, parallel=parallel,
                    )
                else:
                    h, candidate = _cutoff_step(
                        problem, config, current, target, rule, cutoff, from_xi, schedule, passivity, parallel,
                    )
            except NoAdmissibleStep as error:
                blowup = (BlowupTriggers.LIPSCHITZ_EXPLOSION, str(error))
            except PicardDivergence as error:
                attempted = error.t
                blowup = (BlowupTriggers.PICARD_DIVERGENCE, str(error))
            except CutoffEscalationLimit as error:
                attempted = error.t
                blowup = (BlowupTriggers.VALUE_EXPLOSION, str(error))
            except MissingDeclarationError as error:
                # The cutoff radius outgrew the declared local Lipschitz table.
                if passivity:
                    attempted = passivity[-1].t
                blowup = (BlowupTriggers.VALUE_EXPLOSION, str(error))
            else:
                attempted = candidate.t
                blowup = _blowup_trigger(candidate, problem, config)
            if blowup is not None:
                break

            current = candidate
            from_xi = False
            slices.append(current)
            steps.append(h)
            entry = _entry(current, h, problem, cutoff.radius if cutoff else None)
            trace.append(entry)
            buildlog.info(entry.as_line())

    metadata = {
        'margin': config.margin,
        'steps': steps,
        'quad_order': config.quad_order,
        'picard': config.picard,
        'cutoff_radius': cutoff.radius if cutoff else None,
        't_stop': config.t_stop,
        'problem_hash': problem.problem_hash,
    }
    result = BuildResult(
        field=DecouplingFieldApprox(slices, config.grid, problem=problem, metadata=metadata),
        trace=trace,
        passivity=passivity,
    )
    if blowup is not None:
        trigger, detail = blowup
        # No accepted step: report the first rejected time.
        t_min = current.t if len(slices) > 1 or attempted is None else attempted
        result.blowup = BlowupReport(
            t_min_estimate=t_min, trigger=trigger, trace=tuple(trace), detail=detail,
        )
        log.warning('Blowup of %s below t=%.12g: %s (%s)', problem.name, current.t, trigger, detail)
    else:
        log.info('Built %s on [%.6g, %.6g] with %d slices', problem.name, current.t, slices[0].t, len(slices))
    return result


def _cutoff_step(problem, config, current, target, rule, cutoff, from_xi, schedule, passivity, parallel=None):
    """
    Take one step with the inner cutoff, enlarging the radius until the cutoff stays passive.
    """
    escalations = 0
    while True:
        declared = problem.lipschitz
        lipschitz = declared.local_lipschitz(cutoff.radius) if declared.local_L else declared.L
        if schedule is not None:
            h = current.t - target
        else:
            h = _step_length(problem, config, current, target, lipschitz, from_xi)
        t = _landing_time(current, h, target)
        candidate = backward_step(
            current, t, h, problem, rule, config.picard, cutoff=cutoff.radius, threads=config.threads,
            parallel=parallel,
        )
        check = PassivityCheck(t=t, H=cutoff.radius, max_u=candidate.max_abs_u, max_z=candidate.max_abs_z)
        passivity.append(check)
        if check.passed:
            return h, candidate
        escalations += 1
        if escalations > config.max_escalations:
            raise CutoffEscalationLimit(t, cutoff.radius, escalations - 1)
        log.warning(
            'Cutoff active at t=%.12g (max|u|=%.6g, max|Z|=%.6g, H=%.6g); enlarging H',
            t, check.max_u, check.max_z, cutoff.radius,
        )
        cutoff.radius *= cutoff.growth


def build_field(problem, config, schedule=None, initial_slice=None):
    """
    Build the decoupling field backward from T (or from `initial_slice`) toward `config.t_stop`.

    Without `schedule`, each step is the largest contraction step for the current slice Lipschitz
    estimate, capped by the remaining time and `config.h_cap`. With `schedule`, slices are placed
    at exactly the given times.

    A blowup never raises: the returned `BuildResult` carries the slices built so far and a `BlowupReport`.
    """
    return _build(problem, config, schedule, initial_slice, cutoff=None)


def build_with_cutoff(problem, config, schedule=None, initial_slice=None):
    """
    Build the field with the inner cutoff active inside every backward step.

    The radius starts at `config.cutoff_H0` (default 4 sup|xi|) and is multiplied by
    `config.cutoff_growth` whenever a slice leaves the half-radius ball; the slice is then redone.
    """
    if problem.is_markovian_local:
        report = check_admissible(problem)
        if not report.passed:
            raise InadmissibleProblemError(report)
    radius = config.cutoff_H0
    if radius is None:
        sup_xi = problem.lipschitz.sup_xi
        if sup_xi is None or not math.isfinite(sup_xi):
            raise MissingDeclarationError('sup_xi (or solver.cutoff_H0)', problem.mode)
        radius = 4.0 * sup_xi if sup_xi > 0 else 1.0
    cutoff = _Cutoff(radius, config.cutoff_growth)
    return _build(problem, config, schedule, initial_slice, cutoff=cutoff)


def build(problem, config, schedule=None, initial_slice=None):
    """
    Build with the cutoff when the problem mode demands it.
    """
    if problem.is_markovian_local:
        return build_with_cutoff(problem, config, schedule=schedule, initial_slice=initial_slice)
    return build_field(problem, config, schedule=schedule, initial_slice=initial_slice)


def refined_schedule(times, factor):
    """
    Split every interval between consecutive `times` (decreasing) into `factor` equal steps.
    """
    refined = [times[0]]
    for later, earlier in zip(times, times[1:]):
        refined.extend(later + (earlier - later) * index / factor for index in range(1, factor))
        refined.append(earlier)
    return refined


def refine_agreement(problem, config, factor=2, levels=2, refine_grid=True, base=None):
    """
    Compare builds on nested schedules (and grids, if `refine_grid`) refined by `factor` per level.

    Level 0 is a regular build, or `base` (a `BuildResult` on `config.grid`) when given; level k
    subdivides each of its steps into factor^k substeps. Differences are taken at the coarse nodes
    and coarse slice times.
    """
    if base is None or base.field.grid != config.grid:
        base = build(problem, config)
    times = list(base.field.times)
    results = [base]
    failures = []
    if not base.completed:
        failures.append('level 0: {summary}'.format(summary=base.blowup.summary()))
    for level in range(1, levels):
        scale = factor ** level
        grid = config.grid.refined(scale) if refine_grid else config.grid
        refined_config = replace(config, grid=grid, t_stop=times[-1])
        result = build(problem, refined_config, schedule=refined_schedule(times, scale))
        if not result.completed:
            failures.append('level {level}: {summary}'.format(level=level, summary=result.blowup.summary()))
            break
        results.append(result)

    per_time = []
    differences = []
    for level in range(len(results) - 1):
        coarse, fine = results[level], results[level + 1]
        coarse_scale = factor ** level if refine_grid else 1
        fine_scale = factor ** (level + 1) if refine_grid else 1
        worst = 0.0
        for index, time in enumerate(times):
            coarse_values = _coarse_values(config.grid, coarse.field.slices[index * factor ** level], coarse_scale)
            fine_values = _coarse_values(config.grid, fine.field.slices[index * factor ** (level + 1)], fine_scale)
            difference = float(np.max(np.abs(coarse_values - fine_values)))
            per_time.append((level, time, difference))
            worst = max(worst, difference)
        differences.append(worst)

    max_u = max(slice_.max_abs_u for slice_ in base.field.slices)
    report = AgreementReport(
        differences=differences,
        per_time=per_time,
        tolerance=settings.DFLD_AGREEMENT_RTOL * (1.0 + max_u),
        failures=failures,
    )
    log.info('Refinement agreement for %s: differences %s, ratios %s', problem.name, differences, report.ratios)
    return report


def _coarse_values(grid, slice_, scale):
    """
    Return the values of `slice_` at the nodes of `grid`, given that the slice lives on `grid.refined(scale)`.
    """
    if scale == 1:
        return slice_.u_values
    return grid.coarse_view(slice_.u_values, scale)


def growth_envelope(fld, n_fit=5, factor=1.5):
    """
    Fit the Lipschitz growth constant on `fld` and check the envelope on all slices.

    Returns `(C, passed)`.
    """
    T = fld.terminal.t
    C = fit_growth_constant(fld.times, fld.lipschitz_estimates, T, fld.terminal.lip_estimate, n_fit=n_fit)
    return C, growth_envelope_check(fld.times, fld.lipschitz_estimates, T, fld.terminal.lip_estimate, C, factor)


def regularity_profile(fld, problem):
    """
    Return `(t, lip_estimate, weakly_regular)` per slice.

    A slice is weakly regular if its Lipschitz estimate is below 1/L_sigma_z (1/0 = inf)
    and u(t, 0) is finite.
    """
    L_sigma_z = problem.lipschitz.L_sigma_z
    bound = math.inf if L_sigma_z == 0 else 1.0 / L_sigma_z
    origin = np.zeros(fld.grid.n)
    profile = []
    for slice_ in fld.slices:
        value = interpolate(slice_, origin)
        regular = slice_.lip_estimate < bound and bool(np.all(np.isfinite(value)))
        profile.append((slice_.t, slice_.lip_estimate, regular))
    return profile


def continuity_modulus(fld):
    """
    Return max |u(t1, x) - u(t2, x)| / ((1 + |x|) |t1 - t2|^(1/2)) over grid nodes and slice pairs.

    Long fields are subsampled to a fixed number of slices; consecutive pairs are always included.
    """
    slices = fld.slices
    norms = 1.0 + np.linalg.norm(fld.grid.nodes, axis=-1)
    indices = sorted(set(np.linspace(0, len(slices) - 1, min(len(slices), CONTINUITY_SAMPLE)).astype(int)))
    pairs = {(first, second) for first in indices for second in indices if first < second}
    pairs.update((index, index + 1) for index in range(len(slices) - 1))
    modulus = 0.0
    for first, second in sorted(pairs):
        gap = abs(slices[first].t - slices[second].t) ** 0.5
        difference = np.linalg.norm(slices[first].u_values - slices[second].u_values, axis=-1)
        modulus = max(modulus, float(np.max(difference / norms)) / gap)
    return modulus
