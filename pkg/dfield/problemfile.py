"""
Strict parser for problem files (JSON documents) into problems, grids and run settings
"""

from dataclasses import dataclass
import json
import logging
import numbers

from dfield.backward import BuildConfig
from dfield.constants import DecouplingFieldError, Modes, ProblemFileError
from dfield.expr import parse
from dfield.field import SpatialGrid
from dfield.localstep import PicardConfig
from dfield.problem import LipschitzDecl, ProblemSpec


# Globals

log = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {
    'name': False,
    'dims': True,
    'T': True,
    'mode': False,
    'coefficients': True,
    'lipschitz': True,
    'grid': True,
    'solver': False,
    'sim': False,
    'verify': False,
}
DIMS_KEYS = {'n': True, 'm': True, 'd': True}
COEFFICIENT_KEYS = {'mu': True, 'sigma': True, 'f': True, 'xi': True}
LIPSCHITZ_KEYS = {
    'L': True,
    'L_sigma_z': True,
    'L_xi_x': True,
    'sup_sigma': False,
    'sup_xi': False,
    'sup_f00': False,
    'local_L': False,
}
GRID_KEYS = {'axes': True}
SOLVER_KEYS = {
    'margin': False,
    'tol': False,
    'max_iter': False,
    'damping': False,
    'quad_order': False,
    'lip_cap': False,
    'value_cap': False,
    'cutoff_H0': False,
    'cutoff_growth': False,
    't_stop': False,
    'h_cap': False,
}
SIM_KEYS = {'paths': False, 'steps': False, 'seed': False, 'x0': False, 't0': False}
VERIFY_KEYS = {
    'eps': False,
    'direction': False,
    'refine_levels': False,
    'check_box': False,
    'check_samples': False,
}


# Classes

@dataclass(frozen=True)
class SimSettings(object):
    """
    Simulation parameters of a problem file; `steps` None means the field's own slice times.
    """
    paths: int = 1000
    steps: int = None
    seed: int = 0
    x0: tuple = None
    t0: float = None


@dataclass(frozen=True)
class VerifySettings(object):
    """
    Parameters of the verification suite.

    `check_box` maps variable groups 'x', 'y', 'z' to an interval used by the sampled declaration cross-check.
    """
    eps: float = 1e-4
    direction: tuple = None
    refine_levels: int = 3
    check_box: dict = None
    check_samples: int = 2000


@dataclass(frozen=True)
class ProblemFile(object):
    """
    Everything a problem file declares.
    """
    problem: ProblemSpec
    grid: SpatialGrid
    solver: dict
    sim: SimSettings
    verify: VerifySettings

    def build_config(self, margin=None, grid_scale=1, h_cap=None, threads=None):
        """
        Return the build configuration, with command line overrides applied to file values.
        """
        solver = dict(self.solver)
        if margin is not None:
            solver['margin'] = margin
        if h_cap is not None:
            solver['h_cap'] = h_cap
        picard = PicardConfig.from_settings(
            tol=solver.pop('tol', None),
            max_iter=solver.pop('max_iter', None),
            damping=solver.pop('damping', None),
        )
        grid = self.grid.refined(grid_scale) if grid_scale != 1 else self.grid
        return BuildConfig(grid=grid, picard=picard, threads=threads, **solver)

    def sample_box(self):
        """
        Return the variable box for the sampled Lipschitz cross-check, or None if not configured.
        """
        if self.verify.check_box is None:
            return None
        problem = self.problem
        box = {}
        for axis, (low, high, _) in enumerate(self.grid.axes, start=1):
            box['x{axis}'.format(axis=axis)] = (low, high)
        box['t'] = (0.0, problem.T)
        y_box = tuple(self.verify.check_box.get('y', (-1.0, 1.0)))
        z_box = tuple(self.verify.check_box.get('z', (-1.0, 1.0)))
        for row in range(1, problem.m + 1):
            box['y{row}'.format(row=row)] = y_box
            for col in range(1, problem.d + 1):
                box['z{row}{col}'.format(row=row, col=col)] = z_box
        return box


# Functions

def _reject_duplicates(pairs):
    """
    Build a dictionary from JSON object pairs, refusing repeated keys.
    """
    document = {}
    for key, value in pairs:
        if key in document:
            raise ProblemFileError('Duplicate key: {key}'.format(key=key))
        document[key] = value
    return document


def _check_keys(section, document, schema):
    """
    Make sure `document` is an object with only known keys and every required key present.
    """
    if not isinstance(document, dict):
        raise ProblemFileError('{section} must be an object.'.format(section=section))
    unknown = sorted(set(document) - set(schema))
    if unknown:
        raise ProblemFileError('Unknown key(s) in {section}: {keys}. Allowed keys are: {allowed}'.format(
            section=section, keys=', '.join(unknown), allowed=', '.join(sorted(schema))
        ))
    missing = sorted(key for key, required in schema.items() if required and key not in document)
    if missing:
        raise ProblemFileError('Missing key(s) in {section}: {keys}'.format(section=section, keys=', '.join(missing)))


def _number(path, value, integer=False, allow_none=False):
    """
    Return `value` as a float (or int), rejecting booleans and other types.
    """
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ProblemFileError('{path} must be a number, got {value!r}.'.format(path=path, value=value))
    if integer:
        if int(value) != value:
            raise ProblemFileError('{path} must be an integer, got {value!r}.'.format(path=path, value=value))
        return int(value)
    return float(value)


def _expressions(path, values, count):
    """
    Parse a list of `count` expression strings.
    """
    if not isinstance(values, list) or len(values) != count:
        raise ProblemFileError('{path} must be a list of {count} expression strings.'.format(path=path, count=count))
    expressions = []
    for index, text in enumerate(values):
        if not isinstance(text, str):
            raise ProblemFileError('{path}[{index}] must be a string.'.format(path=path, index=index))
        try:
            expressions.append(parse(text))
        except DecouplingFieldError as error:
            raise ProblemFileError('{path}[{index}]: {error}'.format(path=path, index=index, error=error))
    return tuple(expressions)


def _section(document, key, schema):
    """
    Return the optional section `key` after checking its keys.
    """
    section = document.get(key, {})
    _check_keys(key, section, schema)
    return section


def parse_problem_document(document):
    """
    Turn a decoded problem file into a `ProblemFile`.
    """
    _check_keys('problem file', document, TOP_LEVEL_KEYS)

    dims = document['dims']
    _check_keys('dims', dims, DIMS_KEYS)
    n, m, d = (_number('dims.{key}'.format(key=key), dims[key], integer=True) for key in ('n', 'm', 'd'))

    coefficients = document['coefficients']
    _check_keys('coefficients', coefficients, COEFFICIENT_KEYS)
    sigma_rows = coefficients['sigma']
    if not isinstance(sigma_rows, list) or len(sigma_rows) != n:
        raise ProblemFileError('coefficients.sigma must be a list of {n} rows.'.format(n=n))
    sigma = tuple(
        _expressions('coefficients.sigma[{row}]'.format(row=row), values, d) for row, values in enumerate(sigma_rows)
    )

    declared = document['lipschitz']
    _check_keys('lipschitz', declared, LIPSCHITZ_KEYS)
    local_L = declared.get('local_L', [])
    if not isinstance(local_L, list) or any(not isinstance(entry, list) or len(entry) != 2 for entry in local_L):
        raise ProblemFileError('lipschitz.local_L must be a list of [H, L_H] pairs.')
    lipschitz_kwargs = {
        key: _number('lipschitz.{key}'.format(key=key), declared.get(key), allow_none=not LIPSCHITZ_KEYS[key])
        for key in LIPSCHITZ_KEYS if key != 'local_L'
    }
    lipschitz_kwargs['local_L'] = tuple(
        (_number('lipschitz.local_L', radius), _number('lipschitz.local_L', constant)) for radius, constant in local_L
    )

    mode = document.get('mode', Modes.GLOBAL_LIPSCHITZ)
    name = document.get('name', 'problem')
    if not isinstance(mode, str) or not isinstance(name, str):
        raise ProblemFileError('mode and name must be strings.')

    try:
        problem = ProblemSpec(
            n=n,
            m=m,
            d=d,
            T=_number('T', document['T']),
            mu=_expressions('coefficients.mu', coefficients['mu'], n),
            sigma=sigma,
            f=_expressions('coefficients.f', coefficients['f'], m),
            xi=_expressions('coefficients.xi', coefficients['xi'], m),
            lipschitz=LipschitzDecl(**lipschitz_kwargs),
            mode=mode,
            name=name,
        )
        grid_section = document['grid']
        _check_keys('grid', grid_section, GRID_KEYS)
        axes = grid_section['axes']
        if not isinstance(axes, list) or any(not isinstance(axis, list) or len(axis) != 3 for axis in axes):
            raise ProblemFileError('grid.axes must be a list of [min, max, count] triples.')
        if len(axes) != n:
            raise ProblemFileError('grid.axes needs {n} axes, got {count}.'.format(n=n, count=len(axes)))
        grid = SpatialGrid(tuple(
            (_number('grid.axes', low), _number('grid.axes', high), _number('grid.axes', count, integer=True))
            for low, high, count in axes
        ))
    except ProblemFileError:
        raise
    except DecouplingFieldError as error:
        raise ProblemFileError(str(error))

    solver_section = _section(document, 'solver', SOLVER_KEYS)
    integers = ('max_iter', 'quad_order')
    solver = {
        key: _number('solver.{key}'.format(key=key), value, integer=key in integers)
        for key, value in solver_section.items()
    }

    sim_section = _section(document, 'sim', SIM_KEYS)
    x0 = sim_section.get('x0')
    if x0 is not None:
        if not isinstance(x0, list) or len(x0) != n:
            raise ProblemFileError('sim.x0 must be a list of {n} numbers.'.format(n=n))
        x0 = tuple(_number('sim.x0', value) for value in x0)
    sim = SimSettings(
        paths=_number('sim.paths', sim_section.get('paths', SimSettings.paths), integer=True),
        steps=_number('sim.steps', sim_section.get('steps'), integer=True, allow_none=True),
        seed=_number('sim.seed', sim_section.get('seed', SimSettings.seed), integer=True),
        x0=x0 if x0 is not None else (0.0,) * n,
        t0=_number('sim.t0', sim_section.get('t0'), allow_none=True),
    )

    verify_section = _section(document, 'verify', VERIFY_KEYS)
    direction = verify_section.get('direction')
    if direction is not None:
        if not isinstance(direction, list) or len(direction) != n:
            raise ProblemFileError('verify.direction must be a list of {n} numbers.'.format(n=n))
        direction = tuple(_number('verify.direction', value) for value in direction)
    check_box = verify_section.get('check_box')
    if check_box is not None:
        _check_keys('verify.check_box', check_box, {'y': False, 'z': False})
        check_box = {
            group: (_number('verify.check_box', bounds[0]), _number('verify.check_box', bounds[1]))
            for group, bounds in check_box.items()
        }
    verify = VerifySettings(
        eps=_number('verify.eps', verify_section.get('eps', VerifySettings.eps)),
        direction=direction if direction is not None else (1.0,) + (0.0,) * (n - 1),
        refine_levels=_number(
            'verify.refine_levels', verify_section.get('refine_levels', VerifySettings.refine_levels), integer=True
        ),
        check_box=check_box,
        check_samples=_number(
            'verify.check_samples', verify_section.get('check_samples', VerifySettings.check_samples), integer=True
        ),
    )
    return ProblemFile(problem=problem, grid=grid, solver=solver, sim=sim, verify=verify)


def loads(text):
    """
    Parse problem file content.
    """
    try:
        document = json.loads(text, object_pairs_hook=_reject_duplicates)
    except ValueError as error:
        if isinstance(error, ProblemFileError):
            raise
        raise ProblemFileError('Invalid JSON: {error}'.format(error=error))
    return parse_problem_document(document)


def load(path):
    """
    Read and parse the problem file at `path`.
    """
    try:
        with open(path, encoding='utf-8') as problem_file:
            text = problem_file.read()
    except OSError as error:
        raise ProblemFileError('Cannot read {path}: {error}'.format(path=path, error=error))
    problem_file = loads(text)
    log.debug('Loaded problem %s (%s) from %s', problem_file.problem.name, problem_file.problem.problem_hash, path)
    return problem_file
