"""
A small arithmetic expression language for entry generators.

Expressions describe matrix entries ``a(k, l)`` and coefficient functions
``Q(x1, ..., xm)`` in config files. The grammar, from loosest to tightest
binding::

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := atom ('^' exponent)?
    exponent := '-'? INTEGER | '(' '-'? INTEGER ')'
    atom     := NUMBER | 'i' | NAME | FUNC '(' expr ')' | '(' expr ')'

with ``FUNC`` one of ``abs sqrt exp sin cos conj re im``. Exponents are integer
literals (``|n| <= 1024``) so that powers stay single valued on complex inputs.
Binary ``+ - * /`` associate to the left.

Evaluation is vectorised: bindings may be scalars or numpy arrays, and the
result has their broadcast shape.

Typical usage::

    from opdomain.exprlang import evaluate, parse

    expr = parse('(1+k+l)/abs(k-l)^3')
    evaluate(expr, {'k': 1, 'l': 2})   # -> (4+0j)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Set, Tuple, Union

import numpy as np

from opdomain.errors import EvaluationError, ParseError

FUNCTIONS: FrozenSet[str] = frozenset(
    {'abs', 'sqrt', 'exp', 'sin', 'cos', 'conj', 're', 'im'}
)
MAX_EXPONENT = 1024

# Binding power used by the printer; higher binds tighter.
PREC_ADD = 1
PREC_MUL = 2
PREC_NEG = 3
PREC_POW = 4
PREC_ATOM = 5

_TOKEN_RE = re.compile(
    r'(?P<ws>\s+)'
    r'|(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)'
    r'|(?P<name>[A-Za-z_][A-Za-z0-9_]*)'
    r'|(?P<op>[-+*/^(),])',
    re.ASCII,
)

_ATOM_START = frozenset({'number', 'name', 'i', 'function', '(', '-'})


# --------------------------------------------------------------------------
# Syntax tree
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Number:
    """Real, finite numeric literal."""

    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f'numeric literal must be finite, got {self.value}')


@dataclass(frozen=True)
class ImagUnit:
    """The imaginary unit ``i``."""


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: 'Expr'


@dataclass(frozen=True)
class BinOp:
    op: str
    left: 'Expr'
    right: 'Expr'


@dataclass(frozen=True)
class Pow:
    base: 'Expr'
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: 'Expr'


Expr = Union[Number, ImagUnit, Var, Neg, BinOp, Pow, Call]


# --------------------------------------------------------------------------
# Tokenizer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str       # number | name | i | function | op char | end
    text: str
    offset: int     # byte offset in the UTF-8 source


def _tokenize(source: str) -> List[_Token]:
    # byte offset of every character position
    byte_at = [0]
    for ch in source:
        byte_at.append(byte_at[-1] + len(ch.encode('utf-8', 'surrogatepass')))

    tokens: List[_Token] = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ParseError(
                f'unexpected character {source[pos]!r}',
                byte_at[pos],
                _ATOM_START,
            )
        kind = match.lastgroup
        text = match.group()
        if kind == 'name':
            if text == 'i':
                kind = 'i'
            elif text in FUNCTIONS:
                kind = 'function'
        elif kind == 'op':
            kind = text
        if kind != 'ws':
            tokens.append(_Token(kind, text, byte_at[pos]))
        pos = match.end()
    tokens.append(_Token('end', '', byte_at[len(source)]))
    return tokens


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

class _Parser:
    """Recursive descent over the token list."""

    def __init__(self, tokens: List[_Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, kind: str) -> _Token:
        token = self.current
        if token.kind != kind:
            raise ParseError(
                f'unexpected {_describe(token)}', token.offset, frozenset({kind})
            )
        return self.advance()

    def parse_all(self) -> Expr:
        node = self.expr()
        if self.current.kind != 'end':
            raise ParseError(
                f'unexpected {_describe(self.current)}',
                self.current.offset,
                frozenset({'+', '-', '*', '/', '^', 'end of input'}),
            )
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.current.kind in ('+', '-'):
            op = self.advance().kind
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.current.kind in ('*', '/'):
            op = self.advance().kind
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.current.kind == '-':
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.current.kind == '^':
            self.advance()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        parenthesised = self.current.kind == '('
        if parenthesised:
            self.advance()
        sign = 1
        if self.current.kind == '-':
            self.advance()
            sign = -1
        token = self.current
        if token.kind != 'number' or not token.text.isdigit():
            raise ParseError(
                'integer exponent expected', token.offset, frozenset({'integer', '-'})
            )
        self.advance()
        if len(token.text) > 6 or int(token.text) > MAX_EXPONENT:
            raise ParseError(
                f'exponent larger than {MAX_EXPONENT}', token.offset, frozenset({'integer'})
            )
        if parenthesised:
            self.expect(')')
        return sign * int(token.text)

    def atom(self) -> Expr:
        token = self.current
        if token.kind == 'number':
            self.advance()
            value = float(token.text)
            if not math.isfinite(value):
                raise ParseError('numeric literal out of range', token.offset)
            return Number(value)
        if token.kind == 'i':
            self.advance()
            return ImagUnit()
        if token.kind == 'name':
            self.advance()
            return Var(token.text)
        if token.kind == 'function':
            self.advance()
            self.expect('(')
            arg = self.expr()
            self.expect(')')
            return Call(token.text, arg)
        if token.kind == '(':
            self.advance()
            inner = self.expr()
            self.expect(')')
            return inner
        raise ParseError(f'unexpected {_describe(token)}', token.offset, _ATOM_START)


def _describe(token: _Token) -> str:
    if token.kind == 'end':
        return 'end of input'
    return f'token {token.text!r}'


def parse(source: Union[str, bytes]) -> Expr:
    """
    Parse expression source text into a syntax tree.

    :param source: Expression text, as ``str`` or UTF-8 ``bytes``.
    :return: The syntax tree.
    :raises ParseError: On any lexical or syntax error, including invalid
                        UTF-8 and nesting too deep to parse.
    """
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode('utf-8')
        except UnicodeDecodeError as exc:
            raise ParseError('invalid UTF-8', exc.start) from None
    try:
        return _Parser(_tokenize(source)).parse_all()
    except RecursionError:
        raise ParseError('expression nested too deeply', 0) from None


# --------------------------------------------------------------------------
# Printer
# --------------------------------------------------------------------------

def _format(node: Expr) -> Tuple[str, int]:
    if isinstance(node, Number):
        text = repr(float(node.value))
        if text.startswith('-'):
            return f'({text})', PREC_ATOM
        return text, PREC_ATOM
    if isinstance(node, ImagUnit):
        return 'i', PREC_ATOM
    if isinstance(node, Var):
        return node.name, PREC_ATOM
    if isinstance(node, Call):
        return f'{node.func}({to_source(node.arg)})', PREC_ATOM
    if isinstance(node, Pow):
        base, prec = _format(node.base)
        if prec < PREC_ATOM:
            base = f'({base})'
        return f'{base}^{node.exponent}', PREC_POW
    if isinstance(node, Neg):
        inner, prec = _format(node.operand)
        if prec < PREC_NEG:
            inner = f'({inner})'
        return f'-{inner}', PREC_NEG
    if isinstance(node, BinOp):
        level = PREC_ADD if node.op in '+-' else PREC_MUL
        left, lprec = _format(node.left)
        right, rprec = _format(node.right)
        if lprec < level:
            left = f'({left})'
        # the right operand keeps its own grouping: a+(b+c) is not (a+b)+c
        if rprec <= level:
            right = f'({right})'
        return f'{left}{node.op}{right}', level
    raise TypeError(f'not an expression node: {node!r}')


def to_source(node: Expr) -> str:
    """
    Print a syntax tree in canonical form.

    The output parses back to an identical tree, so evaluation of the
    reparsed expression is bit-identical.
    """
    return _format(node)[0]


def free_variables(node: Expr) -> Set[str]:
    """Return the names of all variables appearing in ``node``."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Number, ImagUnit)):
        return set()
    if isinstance(node, (Neg,)):
        return free_variables(node.operand)
    if isinstance(node, Pow):
        return free_variables(node.base)
    if isinstance(node, Call):
        return free_variables(node.arg)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    raise TypeError(f'not an expression node: {node!r}')


# --------------------------------------------------------------------------
# Evaluator
# --------------------------------------------------------------------------

Bindings = Mapping[str, Union[complex, float, int, np.ndarray]]


class _Evaluator:
    def __init__(
        self,
        env: Dict[str, np.ndarray],
        shape: Tuple[int, ...],
        real_only: bool,
    ) -> None:
        self.env = env
        self.shape = shape
        self.real_only = real_only

    def fail(self, message: str, mask: np.ndarray) -> EvaluationError:
        where = np.argwhere(np.broadcast_to(mask, self.shape))
        index = tuple(int(i) for i in where[0]) if where.size else ()
        snapshot = {
            name: complex(np.broadcast_to(value, self.shape)[index])
            for name, value in self.env.items()
        }
        return EvaluationError(message, snapshot)

    def divide(self, num: np.ndarray, den: np.ndarray) -> np.ndarray:
        zero = den == 0
        if np.any(zero):
            raise self.fail('division by zero', zero)
        return num / den

    def power(self, base: np.ndarray, exponent: int) -> np.ndarray:
        result = np.ones_like(base)
        factor = base
        n = abs(exponent)
        while n:
            if n & 1:
                result = result * factor
            n >>= 1
            if n:
                factor = factor * factor
        if exponent < 0:
            return self.divide(np.ones_like(result), result)
        return result

    def visit(self, node: Expr) -> np.ndarray:
        if isinstance(node, Number):
            return np.asarray(complex(node.value))
        if isinstance(node, ImagUnit):
            return np.asarray(1j)
        if isinstance(node, Var):
            return self.env[node.name]
        if isinstance(node, Neg):
            return -self.visit(node.operand)
        if isinstance(node, Pow):
            return self.power(self.visit(node.base), node.exponent)
        if isinstance(node, BinOp):
            left = self.visit(node.left)
            right = self.visit(node.right)
            if node.op == '+':
                return left + right
            if node.op == '-':
                return left - right
            if node.op == '*':
                return left * right
            return self.divide(left, right)
        if isinstance(node, Call):
            return self.call(node.func, self.visit(node.arg))
        raise TypeError(f'not an expression node: {node!r}')

    def call(self, func: str, arg: np.ndarray) -> np.ndarray:
        if func == 'abs':
            return np.abs(arg).astype(np.complex128)
        if func == 'sqrt':
            if self.real_only:
                negative = (arg.imag == 0) & (arg.real < 0)
                if np.any(negative):
                    raise self.fail('square root of a negative number', negative)
            return np.sqrt(arg)
        if func == 'exp':
            return np.exp(arg)
        if func == 'sin':
            return np.sin(arg)
        if func == 'cos':
            return np.cos(arg)
        if func == 'conj':
            return np.conj(arg)
        if func == 're':
            return arg.real.astype(np.complex128)
        if func == 'im':
            return arg.imag.astype(np.complex128)
        raise EvaluationError(f'unknown function {func!r}')


def evaluate(
    node: Expr,
    bindings: Optional[Bindings] = None,
    *,
    real_only: bool = False,
) -> Union[complex, np.ndarray]:
    """
    Evaluate an expression in IEEE double-precision complex arithmetic.

    :param node: Syntax tree from :func:`parse`.
    :param bindings: Variable values; scalars or broadcast-compatible arrays.
    :param real_only: Treat square roots of negative reals as errors.
    :return: A complex scalar when every binding is scalar, else an array of
             the broadcast shape.
    :raises EvaluationError: On unbound variables or division by zero; the
                             error carries the binding values at the failing
                             point.
    """
    env = {
        name: np.asarray(value, dtype=np.complex128)
        for name, value in (bindings or {}).items()
    }
    missing = free_variables(node) - env.keys()
    if missing:
        raise EvaluationError(f'unbound variable {sorted(missing)[0]!r}')
    shape = np.broadcast_shapes(*(v.shape for v in env.values())) if env else ()
    with np.errstate(all='ignore'):
        value = _Evaluator(env, shape, real_only).visit(node)
    value = np.broadcast_to(value, shape)
    if value.ndim == 0:
        return complex(value)
    return np.array(value, dtype=np.complex128)


def evaluate_source(source: str, bindings: Optional[Bindings] = None) -> Union[complex, np.ndarray]:
    """Parse and evaluate in one step."""
    return evaluate(parse(source), bindings)
