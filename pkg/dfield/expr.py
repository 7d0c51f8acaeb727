"""
Coefficient expression language: parsing, printing, vectorised evaluation and Lipschitz sampling
"""

from dataclasses import dataclass
import logging
import re

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, VisitError
import numpy as np

from dfield.constants import (
    ArityError,
    ExprDomainError,
    ExprSyntaxError,
    Functions,
    ProblemDefinitionError,
    UnknownIdentifierError,
)


# Globals

log = logging.getLogger(__name__)

# Precedence, tightest first: ^, unary minus, * /, + -.
# Exponents are constant integers only.
GRAMMAR = r"""
    ?sum: product
        | sum "+" product           -> add
        | sum "-" product           -> sub

    ?product: unary
        | product "*" unary         -> mul
        | product "/" unary         -> div

    ?unary: power
        | "-" unary                 -> neg

    ?power: atom
        | atom "^" exponent         -> pow

    exponent: INT
        | "-" INT                   -> negative_exponent
        | "(" exponent ")"

    ?atom: NUMBER                   -> number
        | NAME                      -> name
        | NAME "(" [sum ("," sum)*] ")" -> call
        | "(" sum ")"

    NAME: /[a-z_][a-z0-9_]*/

    %import common.INT
    %import common.NUMBER
    %import common.WS
    %ignore WS
"""

VARIABLE_PATTERN = re.compile(r'^(?:(t)|x([1-9][0-9]*)|y([1-9][0-9]*)|z([1-9])([1-9]))$')

NUMPY_FUNCTIONS = {
    'sin': np.sin,
    'cos': np.cos,
    'exp': np.exp,
    'log': np.log,
    'tanh': np.tanh,
    'sqrt': np.sqrt,
    'abs': np.abs,
    'min': np.minimum,
    'max': np.maximum,
}

BINARY_OPERATORS = {
    '+': np.add,
    '-': np.subtract,
    '*': np.multiply,
    '/': np.divide,
}

SECANT_SCALE = 0.01  # secant length for sample_lipschitz, relative to the group's box diameter


# Functions

def _check_finite(node, value):
    """
    Raise `ExprDomainError` naming `node` if `value` contains non-finite entries.
    """
    if not np.all(np.isfinite(value)):
        raise ExprDomainError(str(node))
    return value


def variable_group(name):
    """
    Return the variable block ('t', 'x', 'y' or 'z') that variable `name` belongs to.
    """
    return name[0]


# Classes

@dataclass(frozen=True)
class Number(object):
    """
    Numeric literal.
    """
    value: float

    def __str__(self):
        return repr(self.value)

    def evaluate(self, env):  # pylint: disable=unused-argument,missing-docstring
        return self.value

    def children(self):  # pylint: disable=missing-docstring
        return ()


@dataclass(frozen=True)
class Variable(object):
    """
    Reference to `t`, `x<i>`, `y<i>` or `z<i><j>`.

    `indices` are 1-based, as written in the expression.
    """
    name: str
    group: str
    indices: tuple

    def __str__(self):
        return self.name

    def evaluate(self, env):  # pylint: disable=missing-docstring
        return _check_finite(self, env[self.name])

    def children(self):  # pylint: disable=missing-docstring
        return ()


@dataclass(frozen=True)
class Negate(object):
    """
    Unary minus.
    """
    operand: object

    def __str__(self):
        return '(-{operand})'.format(operand=self.operand)

    def evaluate(self, env):  # pylint: disable=missing-docstring
        return np.negative(self.operand.evaluate(env))

    def children(self):  # pylint: disable=missing-docstring
        return (self.operand,)


@dataclass(frozen=True)
class BinaryOp(object):
    """
    One of `+ - * /`.
    """
    op: str
    left: object
    right: object

    def __str__(self):
        return '({left} {op} {right})'.format(left=self.left, op=self.op, right=self.right)

    def evaluate(self, env):  # pylint: disable=missing-docstring
        left = self.left.evaluate(env)
        right = self.right.evaluate(env)
        with np.errstate(all='ignore'):
            value = BINARY_OPERATORS[self.op](left, right)
        return _check_finite(self, value)

    def children(self):  # pylint: disable=missing-docstring
        return (self.left, self.right)


@dataclass(frozen=True)
class Power(object):
    """
    `base ^ exponent` with a constant integer exponent.
    """
    base: object
    exponent: int

    def __str__(self):
        return '({base} ^ {exponent})'.format(base=self.base, exponent=self.exponent)

    def evaluate(self, env):  # pylint: disable=missing-docstring
        base = np.asarray(self.base.evaluate(env), dtype=float)
        with np.errstate(all='ignore'):
            value = np.power(base, float(self.exponent))
        return _check_finite(self, value)

    def children(self):  # pylint: disable=missing-docstring
        return (self.base,)


@dataclass(frozen=True)
class Call(object):
    """
    Call of one of the built-in functions.
    """
    name: str
    args: tuple

    def __str__(self):
        return '{name}({args})'.format(name=self.name, args=', '.join(str(arg) for arg in self.args))

    def evaluate(self, env):  # pylint: disable=missing-docstring
        args = [arg.evaluate(env) for arg in self.args]
        with np.errstate(all='ignore'):
            value = NUMPY_FUNCTIONS[self.name](*args)
        return _check_finite(self, value)

    def children(self):  # pylint: disable=missing-docstring
        return self.args


@v_args(inline=True)
class ExpressionBuilder(Transformer):
    """
    Turn a lark parse tree into expression nodes, resolving names.
    """

    def __init__(self, text):
        super(ExpressionBuilder, self).__init__()
        self.text = text

    def _offset(self, token):
        """
        Return the byte offset of `token` within the parsed text.
        """
        return ExprParser.byte_offset(self.text, token.start_pos)

    def number(self, token):  # pylint: disable=missing-docstring
        return Number(float(token))

    def name(self, token):
        """
        Resolve a bare name to a variable.
        """
        match = VARIABLE_PATTERN.match(str(token))
        if match is None:
            raise UnknownIdentifierError(str(token), self._offset(token), self.text)
        if match.group(1):
            return Variable('t', 't', ())
        if match.group(2):
            return Variable(str(token), 'x', (int(match.group(2)),))
        if match.group(3):
            return Variable(str(token), 'y', (int(match.group(3)),))
        return Variable(str(token), 'z', (int(match.group(4)), int(match.group(5))))

    def call(self, token, *args):
        """
        Resolve a function call and check its arity.
        """
        name = str(token)
        if name not in Functions.ARITY:
            raise UnknownIdentifierError(name, self._offset(token), self.text)
        args = tuple(arg for arg in args if arg is not None)
        if len(args) != Functions.ARITY[name]:
            raise ArityError(name, Functions.ARITY[name], len(args), self._offset(token), self.text)
        return Call(name, args)

    def add(self, left, right):  # pylint: disable=missing-docstring
        return BinaryOp('+', left, right)

    def sub(self, left, right):  # pylint: disable=missing-docstring
        return BinaryOp('-', left, right)

    def mul(self, left, right):  # pylint: disable=missing-docstring
        return BinaryOp('*', left, right)

    def div(self, left, right):  # pylint: disable=missing-docstring
        return BinaryOp('/', left, right)

    def neg(self, operand):  # pylint: disable=missing-docstring
        return Negate(operand)

    def pow(self, base, exponent):  # pylint: disable=missing-docstring
        return Power(base, exponent)

    def exponent(self, value):  # pylint: disable=missing-docstring
        return int(value)

    def negative_exponent(self, token):  # pylint: disable=missing-docstring
        return -int(token)


class Expr(object):
    """
    Parsed coefficient expression.

    Instances are immutable; `evaluate` is safe to call from several threads at once.
    """

    def __init__(self, root, text=None):
        self.root = root
        self.text = text if text is not None else str(root)
        self.variables = frozenset(node.name for node in self.walk() if isinstance(node, Variable))

    def __str__(self):
        return str(self.root)

    def __repr__(self):
        return 'Expr({text!r})'.format(text=self.text)

    def __eq__(self, other):
        return isinstance(other, Expr) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def walk(self):
        """
        Yield every node of this expression, parents before children.
        """
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children()))

    @property
    def is_constant(self):
        """
        Return True if this expression references no variables.
        """
        return not self.variables

    @property
    def contains_division(self):
        """
        Return True if this expression divides by anything.

        Global Lipschitz constants of such expressions cannot be inferred and must be declared.
        """
        return any(
            (isinstance(node, BinaryOp) and node.op == '/') or (isinstance(node, Power) and node.exponent < 0)
            for node in self.walk()
        )

    def max_indices(self):
        """
        Return the largest index used per variable group, e.g. {'x': 2, 'y': 1, 'z': (1, 1)}.
        """
        indices = {}
        for name in self.variables:
            match = VARIABLE_PATTERN.match(name)
            if match.group(2):
                indices['x'] = max(indices.get('x', 0), int(match.group(2)))
            elif match.group(3):
                indices['y'] = max(indices.get('y', 0), int(match.group(3)))
            elif match.group(4):
                row, col = indices.get('z', (0, 0))
                indices['z'] = (max(row, int(match.group(4))), max(col, int(match.group(5))))
        return indices

    def evaluate_env(self, env):
        """
        Evaluate this expression with variable values taken from `env` (name -> scalar or array).
        """
        return self.root.evaluate(env)

    def evaluate(self, t, x=None, y=None, z=None):
        """
        Evaluate this expression at time `t` and state `(x, y, z)`.

        `x` has shape (..., n), `y` shape (..., m) and `z` shape (..., m, d);
        leading axes broadcast, so a single call evaluates the expression at many points.
        The result always has the broadcast leading shape, even for constant expressions.
        """
        env = {'t': t}
        shape = np.shape(t)
        for name in self.variables:
            match = VARIABLE_PATTERN.match(name)
            if match.group(2):
                env[name] = np.asarray(x)[..., int(match.group(2)) - 1]
            elif match.group(3):
                env[name] = np.asarray(y)[..., int(match.group(3)) - 1]
            elif match.group(4):
                env[name] = np.asarray(z)[..., int(match.group(4)) - 1, int(match.group(5)) - 1]
        for value in (x, y, z):
            if value is not None:
                shape = np.broadcast_shapes(shape, np.shape(value)[:-2 if value is z else -1])
        value = self.evaluate_env(env)
        return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()


class ExprParser(object):
    """
    Parser for coefficient expressions.
    """
    _lark = Lark(GRAMMAR, start='sum', parser='lalr')

    @classmethod
    def parse(cls, text):
        """
        Parse `text` and return an `Expr`.

        Raise `ExprSyntaxError` (or one of its subclasses) with the byte offset of the problem.
        """
        if not text or not text.strip():
            raise ExprSyntaxError('Empty expression', 0, text)
        try:
            tree = cls._lark.parse(text)
        except UnexpectedEOF:
            raise ExprSyntaxError('Unexpected end of expression', len(text.encode('utf-8')), text)
        except UnexpectedCharacters as error:
            raise ExprSyntaxError(
                'Unexpected character {char!r}'.format(char=text[error.pos_in_stream]),
                cls.byte_offset(text, error.pos_in_stream),
                text,
            )
        except UnexpectedInput as error:
            token = getattr(error, 'token', None)
            if isinstance(token, Token) and token.type == '$END':
                offset = len(text.encode('utf-8'))
            else:
                offset = cls.byte_offset(text, error.pos_in_stream)
            raise ExprSyntaxError('Unexpected token {token!r}'.format(token=str(token)), offset, text)
        try:
            root = ExpressionBuilder(text).transform(tree)
        except VisitError as error:
            if isinstance(error.orig_exc, ExprSyntaxError):
                raise error.orig_exc
            raise
        return Expr(root, text=text)

    @staticmethod
    def byte_offset(text, char_offset):
        """
        Convert a character offset within `text` into a byte offset of its UTF-8 encoding.
        """
        if char_offset is None or char_offset < 0:
            return len(text.encode('utf-8'))
        return len(text[:char_offset].encode('utf-8'))


def parse(text):
    """
    Parse `text` into an `Expr`.
    """
    return ExprParser.parse(text)


def sample_lipschitz(expr, box, n_samples, seed):
    """
    Estimate Lipschitz constants of `expr` per variable group by sampling secant slopes.

    `box` maps each variable name to an interval `(low, high)`; every variable referenced by `expr`
    must be present. For each of the groups 'x', 'y' and 'z', `n_samples` base points are drawn
    uniformly from the box and paired with a point displaced within that group only, along a random
    direction by a short secant. The maximum slope per group is returned. Every secant slope is a
    lower bound on the true Lipschitz constant, so the estimates are lower bounds too.

    Returns a dictionary of the form {'x': 2.0, 'y': 0.0, 'z': 0.0}.
    """
    if n_samples < 2:
        raise ValueError('sample_lipschitz needs at least 2 samples, {n} given.'.format(n=n_samples))
    missing = expr.variables - set(box)
    if missing:
        raise ProblemDefinitionError(
            'Sampling box does not cover variables: {names}'.format(names=', '.join(sorted(missing)))
        )
    names = sorted(box)
    bounds = np.array([box[name] for name in names], dtype=float).reshape(len(names), 2)
    if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 1] < bounds[:, 0]):
        raise ProblemDefinitionError('Sampling box must consist of finite intervals.')
    low, high = bounds[:, 0], bounds[:, 1]

    rng = np.random.default_rng(seed)
    base = low + (high - low) * rng.random((n_samples, len(names)))
    estimates = {}
    for group in ('x', 'y', 'z'):
        columns = [index for index, name in enumerate(names) if variable_group(name) == group]
        # Draw for every group so that estimates do not depend on which groups are referenced.
        direction = rng.standard_normal((n_samples, max(len(columns), 1)))
        fraction = 0.5 + 0.5 * rng.random(n_samples)
        if not columns or not any(names[column] in expr.variables for column in columns):
            estimates[group] = 0.0
            continue
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        diameter = np.linalg.norm(high[columns] - low[columns])
        other = base.copy()
        other[:, columns] = np.clip(
            base[:, columns] + direction * (SECANT_SCALE * diameter * fraction)[:, None],
            low[columns],
            high[columns],
        )
        distance = np.linalg.norm(other[:, columns] - base[:, columns], axis=1)
        valid = distance > 0
        if not np.any(valid):
            estimates[group] = 0.0
            continue
        base_values = expr.evaluate(0.0) if expr.is_constant else expr.evaluate_env(
            {name: base[:, index] for index, name in enumerate(names)}
        )
        other_values = expr.evaluate(0.0) if expr.is_constant else expr.evaluate_env(
            {name: other[:, index] for index, name in enumerate(names)}
        )
        slopes = np.abs(np.asarray(other_values) - np.asarray(base_values)) * np.ones(n_samples)
        estimates[group] = float(np.max(slopes[valid] / distance[valid]))
    log.debug('Sampled Lipschitz estimates for %s: %s', expr, estimates)
    return estimates
