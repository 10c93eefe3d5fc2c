"""
Exception hierarchy for the operator-domain toolkit.

Failing hypotheses are never signalled by exceptions: checks return a
``fail`` or ``inconclusive`` verdict instead. Exceptions are reserved for
malformed input and broken operation contracts.
"""

from __future__ import annotations

from typing import Any, FrozenSet, Mapping, Optional, Tuple


class OpdomainError(Exception):
    """Base class of every error raised by :mod:`opdomain`."""


class ParseError(OpdomainError, ValueError):
    """
    Syntax error in an entry-generator expression.

    :param message: Human readable diagnostic.
    :param offset: Byte offset (UTF-8) of the offending token.
    :param expected: Token kinds the parser would have accepted.
    """

    def __init__(
        self,
        message: str,
        offset: int,
        expected: FrozenSet[str] = frozenset(),
    ) -> None:
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f'{message} at byte {offset}'
        if self.expected:
            detail += f' (expected one of: {", ".join(sorted(self.expected))})'
        super().__init__(detail)


class EvaluationError(OpdomainError, ArithmeticError):
    """
    Evaluation of an expression or entry generator failed.

    :param message: Human readable diagnostic.
    :param bindings: Variable values at the failing point, if known.
    :param index: Matrix index ``(k, l)`` at the failing point, if known.
    """

    def __init__(
        self,
        message: str,
        bindings: Optional[Mapping[str, complex]] = None,
        index: Optional[Tuple[int, int]] = None,
    ) -> None:
        self.message = message
        self.bindings = dict(bindings or {})
        self.index = index
        detail = message
        if index is not None:
            detail += f' at (k, l) = {index}'
        elif self.bindings:
            shown = ', '.join(f'{k}={v}' for k, v in sorted(self.bindings.items()))
            detail += f' with {shown}'
        super().__init__(detail)


class ExactnessError(OpdomainError):
    """A product window was requested for two unbanded factors."""


class ContractViolation(OpdomainError, ValueError):
    """An input violates the structural contract of an operation."""


class SingularResolventError(OpdomainError, ArithmeticError):
    """The resolvent point lies (numerically) on the spectrum."""


class PreconditionError(OpdomainError, ValueError):
    """A documented precondition of an operation does not hold."""


class ConfigError(OpdomainError):
    """
    A job configuration could not be read or validated.

    :param message: Diagnostic text.
    :param field: Dotted path of the offending JSON field.
    :param line: Line number for JSON syntax errors.
    """

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line: Optional[int] = None,
        **extra: Any,
    ) -> None:
        self.field = field
        self.line = line
        self.extra = extra
        where = []
        if field:
            where.append(f'field {field!r}')
        if line is not None:
            where.append(f'line {line}')
        detail = message if not where else f'{message} ({", ".join(where)})'
        super().__init__(detail)
