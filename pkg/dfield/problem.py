"""
FBSDE problem specification and admissibility checks
"""

from dataclasses import dataclass, field
import hashlib
import json
import logging
import math

import numpy as np

from dfield.constants import ExprDomainError, MissingDeclarationError, Modes, ProblemDefinitionError
from dfield.expr import sample_lipschitz


# Globals

log = logging.getLogger(__name__)


# Functions

def _inverse(value):
    """
    Return 1/value with the convention 1/0 = inf.
    """
    return math.inf if value == 0 else 1.0 / value


# Classes

@dataclass(frozen=True)
class LipschitzDecl(object):
    """
    User-declared Lipschitz constants and bounds.

    `local_L` is a tuple of `(H, L_H)` pairs: the Lipschitz constant of mu, sigma and f
    with (y, z) restricted to the ball of radius H.
    """
    L: float
    L_sigma_z: float
    L_xi_x: float
    sup_sigma: float = None
    sup_xi: float = None
    sup_f00: float = None
    local_L: tuple = ()

    def __post_init__(self):
        declared = {
            'L': self.L,
            'L_sigma_z': self.L_sigma_z,
            'L_xi_x': self.L_xi_x,
            'sup_sigma': self.sup_sigma,
            'sup_xi': self.sup_xi,
            'sup_f00': self.sup_f00,
        }
        for name, value in declared.items():
            if value is not None and not value >= 0:
                raise ProblemDefinitionError(
                    'Declared {name} must be >= 0, got {value}.'.format(name=name, value=value)
                )
        if self.L_sigma_z > self.L:
            raise ProblemDefinitionError(
                'L_sigma_z ({L_sigma_z}) cannot exceed L ({L}).'.format(L_sigma_z=self.L_sigma_z, L=self.L)
            )
        previous_radius, previous_constant = -math.inf, -math.inf
        for radius, constant in self.local_L:
            if radius <= previous_radius or constant < previous_constant or constant < 0:
                raise ProblemDefinitionError(
                    'local_L must be sorted by radius and nondecreasing, got {table}.'.format(table=self.local_L)
                )
            previous_radius, previous_constant = radius, constant

    def local_lipschitz(self, radius):
        """
        Return the declared Lipschitz constant on the ball of `radius`.

        Uses the smallest tabulated radius that is at least `radius`, which is a valid upper bound
        because the table is monotone.
        """
        for tabulated_radius, constant in self.local_L:
            if tabulated_radius >= radius:
                return constant
        raise MissingDeclarationError(
            'local_L entry for H >= {radius:g}'.format(radius=radius), Modes.MARKOVIAN_LOCAL_LIPSCHITZ
        )

    def as_dict(self):
        """
        Return declarations as a JSON-serializable dictionary.
        """
        return {
            'L': self.L,
            'L_sigma_z': self.L_sigma_z,
            'L_xi_x': self.L_xi_x,
            'sup_sigma': self.sup_sigma,
            'sup_xi': self.sup_xi,
            'sup_f00': self.sup_f00,
            'local_L': [list(entry) for entry in self.local_L],
        }


@dataclass(frozen=True)
class ProblemSpec(object):
    """
    Markovian FBSDE on [t, T]:

        X_s = X_t + int mu(r, X, Y, Z) dr + int sigma(r, X, Y, Z) dW_r
        Y_s = xi(X_T) - int f(r, X, Y, Z) dr - int Z dW_r

    `mu` holds n expressions, `sigma` n rows of d expressions, `f` and `xi` m expressions each.
    """
    n: int
    m: int
    d: int
    T: float
    mu: tuple
    sigma: tuple
    f: tuple
    xi: tuple
    lipschitz: LipschitzDecl
    mode: str = Modes.GLOBAL_LIPSCHITZ
    name: str = 'problem'

    def __post_init__(self):
        for dimension_name in ('n', 'm', 'd'):
            if getattr(self, dimension_name) < 1:
                raise ProblemDefinitionError('Dimension {name} must be positive.'.format(name=dimension_name))
        if not self.T > 0:
            raise ProblemDefinitionError('Horizon T must be positive, got {T}.'.format(T=self.T))
        if self.mode not in Modes.get_all():
            raise ProblemDefinitionError(
                'Unknown mode: {mode}. Known modes are: {modes}.'.format(mode=self.mode, modes=Modes.get_all())
            )
        if len(self.mu) != self.n:
            raise ProblemDefinitionError('mu needs {n} expressions, got {k}.'.format(n=self.n, k=len(self.mu)))
        if len(self.sigma) != self.n or any(len(row) != self.d for row in self.sigma):
            raise ProblemDefinitionError('sigma must be a {n}x{d} array of expressions.'.format(n=self.n, d=self.d))
        if len(self.f) != self.m:
            raise ProblemDefinitionError('f needs {m} expressions, got {k}.'.format(m=self.m, k=len(self.f)))
        if len(self.xi) != self.m:
            raise ProblemDefinitionError('xi needs {m} expressions, got {k}.'.format(m=self.m, k=len(self.xi)))
        for label, expr in self.coefficients():
            self._check_indices(label, expr)
        for index, expr in enumerate(self.xi, start=1):
            foreign = [name for name in expr.variables if not name.startswith('x')]
            if foreign:
                raise ProblemDefinitionError(
                    'xi{index} may only depend on x, but references {names}.'.format(
                        index=index, names=', '.join(sorted(foreign))
                    )
                )

    def _check_indices(self, label, expr):
        """
        Make sure that every variable index in `expr` is within the declared dimensions.
        """
        indices = expr.max_indices()
        row, col = indices.get('z', (0, 0))
        if indices.get('x', 0) > self.n or indices.get('y', 0) > self.m or row > self.m or col > self.d:
            raise ProblemDefinitionError(
                '{label} = {expr} references variables outside dimensions n={n}, m={m}, d={d}.'.format(
                    label=label, expr=expr.text, n=self.n, m=self.m, d=self.d
                )
            )

    def coefficients(self):
        """
        Yield `(label, expr)` for every coefficient expression, including xi.
        """
        for index, expr in enumerate(self.mu, start=1):
            yield 'mu{index}'.format(index=index), expr
        for row_index, row in enumerate(self.sigma, start=1):
            for col_index, expr in enumerate(row, start=1):
                yield 'sigma{row}{col}'.format(row=row_index, col=col_index), expr
        for index, expr in enumerate(self.f, start=1):
            yield 'f{index}'.format(index=index), expr
        for index, expr in enumerate(self.xi, start=1):
            yield 'xi{index}'.format(index=index), expr

    @property
    def is_markovian_local(self):
        """
        Return True if this problem is declared locally Lipschitz (inner cutoff required).
        """
        return self.mode == Modes.MARKOVIAN_LOCAL_LIPSCHITZ

    @property
    def sigma_is_zero(self):
        """
        Return True if every sigma entry is the literal constant 0.
        """
        return all(expr.is_constant and float(expr.evaluate(0.0)) == 0.0 for row in self.sigma for expr in row)

    @property
    def problem_hash(self):
        """
        Return a stable SHA-256 hex digest of this problem's definition.
        """
        document = {
            'dims': [self.n, self.m, self.d],
            'T': self.T,
            'mu': [str(expr) for expr in self.mu],
            'sigma': [[str(expr) for expr in row] for row in self.sigma],
            'f': [str(expr) for expr in self.f],
            'xi': [str(expr) for expr in self.xi],
            'lipschitz': self.lipschitz.as_dict(),
            'mode': self.mode,
        }
        return hashlib.sha256(json.dumps(document, sort_keys=True).encode('utf-8')).hexdigest()

    def evaluate_mu(self, t, x, y, z):
        """
        Return mu at the given points, shape (..., n).
        """
        return np.stack([expr.evaluate(t, x, y, z) for expr in self.mu], axis=-1)

    def evaluate_sigma(self, t, x, y, z):
        """
        Return sigma at the given points, shape (..., n, d).
        """
        return np.stack(
            [np.stack([expr.evaluate(t, x, y, z) for expr in row], axis=-1) for row in self.sigma],
            axis=-2,
        )

    def evaluate_f(self, t, x, y, z):
        """
        Return f at the given points, shape (..., m).
        """
        return np.stack([expr.evaluate(t, x, y, z) for expr in self.f], axis=-1)

    def evaluate_xi(self, x):
        """
        Return the terminal condition at `x`, shape (..., m).
        """
        return np.stack([expr.evaluate(self.T, x) for expr in self.xi], axis=-1)


@dataclass(frozen=True)
class Hypothesis(object):
    """
    Outcome of checking one hypothesis.
    """
    name: str
    passed: bool
    detail: str

    def __str__(self):
        return '[{status}] {name}: {detail}'.format(
            status='PASS' if self.passed else 'FAIL', name=self.name, detail=self.detail
        )


@dataclass(frozen=True)
class AdmissibilityReport(object):
    """
    Result of `check_admissible`.

    `notes` are advisory and never affect `passed`.
    """
    hypotheses: tuple
    notes: tuple = field(default=())

    @property
    def passed(self):
        """
        Return True if every hypothesis holds.
        """
        return all(hypothesis.passed for hypothesis in self.hypotheses)

    @property
    def reasons(self):
        """
        Return details of all failed hypotheses.
        """
        return [hypothesis.detail for hypothesis in self.hypotheses if not hypothesis.passed]

    def lines(self):
        """
        Return the report as printable lines.
        """
        lines = [str(hypothesis) for hypothesis in self.hypotheses]
        lines.extend('[NOTE] {note}'.format(note=note) for note in self.notes)
        lines.append('RESULT: {result}'.format(result='PASS' if self.passed else 'FAIL'))
        return lines


def check_admissible(problem, sample_box=None, n_samples=2000, seed=0):
    """
    Check `problem` against the hypotheses of local existence.

    PASS iff L_sigma_z * L_xi_x < 1 (i.e. L_xi_x < 1/L_sigma_z with 1/0 = inf), xi(0) is finite,
    and, in Markovian locally Lipschitz mode, the bounds on sigma and xi are finite and a table of
    local Lipschitz constants is declared.

    If `sample_box` (variable name -> interval) is given, declared constants are cross-checked
    against sampled lower bounds; mismatches are reported as notes only.
    """
    declared = problem.lipschitz
    hypotheses = []

    product = declared.L_sigma_z * declared.L_xi_x
    hypotheses.append(Hypothesis(
        'L_xi_x < 1/L_sigma_z',
        product < 1,
        'L_{{sigma,z}}*L_{{xi,x}} = {product:g} {relation} 1 (L_{{xi,x}} = {xi:g}, 1/L_{{sigma,z}} = {bound:g})'.format(
            product=product,
            relation='<' if product < 1 else '>=',
            xi=declared.L_xi_x,
            bound=_inverse(declared.L_sigma_z),
        ),
    ))

    try:
        xi_at_zero = problem.evaluate_xi(np.zeros(problem.n))
        finite = bool(np.all(np.isfinite(xi_at_zero)))
        detail = '|xi(0)| = {value:g}'.format(value=float(np.linalg.norm(xi_at_zero)))
    except ExprDomainError as error:
        finite = False
        detail = str(error)
    hypotheses.append(Hypothesis('xi(0) finite', finite, detail))

    if problem.is_markovian_local:
        for name in ('sup_xi', 'sup_sigma'):
            value = getattr(declared, name)
            if value is None:
                raise MissingDeclarationError(name, problem.mode)
            hypotheses.append(Hypothesis(
                '{name} finite'.format(name=name),
                math.isfinite(value),
                '{name} = {value:g}'.format(name=name, value=value),
            ))
        hypotheses.append(Hypothesis(
            'local_L declared',
            bool(declared.local_L),
            '{count} (H, L_H) entries'.format(count=len(declared.local_L)),
        ))

    notes = []
    for label, expr in problem.coefficients():
        if expr.contains_division:
            notes.append(
                '{label} = {text} contains division: Lipschitz constants must be user-declared'.format(
                    label=label, text=expr.text
                )
            )
    if sample_box is not None:
        notes.extend(_sampled_notes(problem, sample_box, n_samples, seed))

    report = AdmissibilityReport(tuple(hypotheses), tuple(notes))
    log.info('Admissibility of %s: %s', problem.name, 'PASS' if report.passed else 'FAIL')
    return report


def _sampled_notes(problem, sample_box, n_samples, seed):
    """
    Compare sampled Lipschitz lower bounds with declared constants and describe every violation.
    """
    declared = problem.lipschitz
    notes = []
    for label, expr in problem.coefficients():
        box = {name: sample_box[name] for name in expr.variables if name in sample_box}
        missing = expr.variables - set(box)
        box.update({name: (0.0, 0.0) for name in missing})
        estimates = sample_lipschitz(expr, box, n_samples, seed)
        if label.startswith('xi'):
            checks = [('x', declared.L_xi_x, 'L_xi_x')]
        elif label.startswith('sigma'):
            checks = [('x', declared.L, 'L'), ('y', declared.L, 'L'), ('z', declared.L_sigma_z, 'L_sigma_z')]
        else:
            checks = [('x', declared.L, 'L'), ('y', declared.L, 'L'), ('z', declared.L, 'L')]
        for group, constant, constant_name in checks:
            if estimates[group] > constant * (1 + 1e-9) + 1e-12:
                notes.append(
                    '{label}: sampled {group}-Lipschitz lower bound {estimate:.6g} exceeds declared '
                    '{constant_name} = {constant:g}'.format(
                        label=label,
                        group=group,
                        estimate=estimates[group],
                        constant_name=constant_name,
                        constant=constant,
                    )
                )
    return notes
