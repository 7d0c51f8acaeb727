"""
Constants for decoupling field construction
"""


# Exceptions

class DecouplingFieldError(Exception):
    """
    Base class for all errors raised by the decoupling field library.
    """


class ExprSyntaxError(DecouplingFieldError, ValueError):
    """
    Raised when a coefficient expression cannot be parsed.
    """
    def __init__(self, message, offset, text=None):
        self.offset = offset
        self.text = text
        super(ExprSyntaxError, self).__init__(
            '{message} at offset {offset}'.format(message=message, offset=offset)
        )


class UnknownIdentifierError(ExprSyntaxError):
    """
    Raised when an expression references a name that is neither a variable nor a function.
    """
    def __init__(self, name, offset, text=None):
        self.name = name
        super(UnknownIdentifierError, self).__init__(
            'Unknown identifier: {name}. Known functions are: {functions}'.format(
                name=name,
                functions=', '.join(sorted(Functions.ARITY)),
            ),
            offset,
            text,
        )


class ArityError(ExprSyntaxError):
    """
    Raised when a function is called with the wrong number of arguments.
    """
    def __init__(self, name, expected, given, offset, text=None):
        self.name = name
        super(ArityError, self).__init__(
            'Function {name} takes {expected} argument(s), {given} given'.format(
                name=name, expected=expected, given=given
            ),
            offset,
            text,
        )


class ExprDomainError(DecouplingFieldError, ArithmeticError):
    """
    Raised when evaluating an expression produces a non-finite value.
    """
    def __init__(self, subexpression):
        self.subexpression = subexpression
        super(ExprDomainError, self).__init__(
            'Non-finite value produced by subexpression: {subexpression}'.format(subexpression=subexpression)
        )


class ProblemDefinitionError(DecouplingFieldError, ValueError):
    """
    Raised when a problem specification is malformed.
    """


class MissingDeclarationError(ProblemDefinitionError):
    """
    Raised when a mode requires a declaration that the problem does not provide.
    """
    def __init__(self, declaration, mode):
        self.declaration = declaration
        super(MissingDeclarationError, self).__init__(
            'Mode {mode} requires a finite declaration of {declaration}.'.format(
                mode=mode, declaration=declaration
            )
        )


class InadmissibleProblemError(DecouplingFieldError):
    """
    Raised when an operation requires an admissible problem and the admissibility check fails.
    """
    def __init__(self, report):
        self.report = report
        super(InadmissibleProblemError, self).__init__(
            'Problem is not admissible: {reasons}'.format(reasons='; '.join(report.reasons))
        )


class NoAdmissibleStep(DecouplingFieldError):
    """
    Raised when no positive step size makes the Picard map a contraction with the requested margin.
    """
    def __init__(self, limit, margin):
        self.limit = limit
        self.margin = margin
        super(NoAdmissibleStep, self).__init__(
            'No admissible step: limiting contraction constant {limit:.6g} '
            'is not below 1 - margin = {target:.6g}.'.format(limit=limit, target=1.0 - margin)
        )


class GridError(DecouplingFieldError, ValueError):
    """
    Raised when a spatial grid violates its invariants.
    """


class JunctionMismatch(DecouplingFieldError):
    """
    Raised when two fields cannot be concatenated at their common time.
    """


class SnapshotError(DecouplingFieldError):
    """
    Base class for errors while reading field snapshots.
    """


class SnapshotVersionError(SnapshotError):
    """
    Raised when a snapshot has an unknown magic or format version.
    """


class SnapshotTruncatedError(SnapshotError):
    """
    Raised when a snapshot ends before its declared content.
    """


class SnapshotChecksumError(SnapshotError):
    """
    Raised when a snapshot payload does not match its CRC32.
    """


class QuadratureSizeError(DecouplingFieldError, ValueError):
    """
    Raised when a tensor quadrature rule would exceed the configured node cap.
    """


class PicardDivergence(DecouplingFieldError):
    """
    Raised when the per-node fixed point iteration does not converge.
    """
    def __init__(self, t, iterations, delta):
        self.t = t
        self.iterations = iterations
        self.delta = delta
        super(PicardDivergence, self).__init__(
            'Picard iteration diverged at t={t:.12g} after {iterations} iterations '
            '(last delta {delta:.6g}).'.format(t=t, iterations=iterations, delta=delta)
        )


class CutoffEscalationLimit(DecouplingFieldError):
    """
    Raised when the inner cutoff radius had to be enlarged too many times.
    """
    def __init__(self, t, radius, escalations):
        self.t = t
        self.radius = radius
        self.escalations = escalations
        super(CutoffEscalationLimit, self).__init__(
            'Cutoff radius escalated {escalations} times at t={t:.12g} (last radius {radius:.6g}).'.format(
                escalations=escalations, t=t, radius=radius
            )
        )


class ProblemFileError(DecouplingFieldError, ValueError):
    """
    Raised when a problem file cannot be parsed in strict mode.
    """


# Classes

class Functions(object):
    """
    Lists functions available in coefficient expressions, with their arities.
    """
    ARITY = {
        'sin': 1,
        'cos': 1,
        'exp': 1,
        'log': 1,
        'tanh': 1,
        'sqrt': 1,
        'abs': 1,
        'min': 2,
        'max': 2,
    }


class Modes(object):
    """
    Lists valid problem modes.
    """
    GLOBAL_LIPSCHITZ = 'GlobalLipschitz'
    MARKOVIAN_LOCAL_LIPSCHITZ = 'MarkovianLocalLipschitz'

    @classmethod
    def get_all(cls):
        """
        Return iterable of all available modes.
        """
        return cls.GLOBAL_LIPSCHITZ, cls.MARKOVIAN_LOCAL_LIPSCHITZ


class BlowupTriggers(object):
    """
    Lists reasons for stopping a backward build before the requested time.
    """
    LIPSCHITZ_EXPLOSION = 'LipschitzExplosion'
    VALUE_EXPLOSION = 'ValueExplosion'
    PICARD_DIVERGENCE = 'PicardDivergence'

    @classmethod
    def get_all(cls):
        """
        Return iterable of all blowup triggers.
        """
        return cls.LIPSCHITZ_EXPLOSION, cls.VALUE_EXPLOSION, cls.PICARD_DIVERGENCE


class ExitCodes(object):
    """
    Exit codes of the management commands.
    """
    OK = 0
    USAGE = 1
    INADMISSIBLE = 2
    BLOWUP = 3
    CHECK_FAILED = 4
