"""Expression trees for the set-description language.

Expressions are built from variables (x1..xn or t), rational literals,
+, -, *, integer powers and sqrt.  They evaluate vectorized over numpy
arrays and differentiate symbolically (needed for Gauss-Newton Jacobians
and curve tangents).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EvalDomainError

__all__ = [
    "Expr", "Lit", "Var", "Add", "Sub", "Mul", "Neg", "Pow", "Sqrt",
    "format_fraction",
]


def format_fraction(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


# Printing precedence levels: additive < multiplicative < unary < power.
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class Expr:
    __slots__ = ()

    def evaluate(self, env: dict) -> np.ndarray:
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def degree(self):
        """Total polynomial degree, or None if the expression uses sqrt."""
        raise NotImplementedError

    def uses_sqrt(self) -> bool:
        raise NotImplementedError

    def variables(self) -> set:
        raise NotImplementedError

    def to_text(self) -> str:
        return self._print(0)

    def _print(self, parent_prec: int) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.to_text()


@dataclass(frozen=True)
class Lit(Expr):
    value: Fraction

    def evaluate(self, env):
        return np.asarray(float(self.value))

    def diff(self, var):
        return Lit(Fraction(0))

    def degree(self):
        return 0

    def uses_sqrt(self):
        return False

    def variables(self):
        return set()

    def _print(self, parent_prec):
        text = format_fraction(self.value)
        if self.value < 0 and parent_prec > _PREC_ADD:
            return f"({text})"
        return text


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def evaluate(self, env):
        return env[self.name]

    def diff(self, var):
        return Lit(Fraction(1 if var == self.name else 0))

    def degree(self):
        return 1

    def uses_sqrt(self):
        return False

    def variables(self):
        return {self.name}

    def _print(self, parent_prec):
        return self.name


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr

    def evaluate(self, env):
        return self.left.evaluate(env) + self.right.evaluate(env)

    def diff(self, var):
        return Add(self.left.diff(var), self.right.diff(var))

    def degree(self):
        dl, dr = self.left.degree(), self.right.degree()
        if dl is None or dr is None:
            return None
        return max(dl, dr)

    def uses_sqrt(self):
        return self.left.uses_sqrt() or self.right.uses_sqrt()

    def variables(self):
        return self.left.variables() | self.right.variables()

    def _print(self, parent_prec):
        text = f"{self.left._print(_PREC_ADD)} + {self.right._print(_PREC_ADD + 1)}"
        return f"({text})" if parent_prec > _PREC_ADD else text


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr

    def evaluate(self, env):
        return self.left.evaluate(env) - self.right.evaluate(env)

    def diff(self, var):
        return Sub(self.left.diff(var), self.right.diff(var))

    def degree(self):
        dl, dr = self.left.degree(), self.right.degree()
        if dl is None or dr is None:
            return None
        return max(dl, dr)

    def uses_sqrt(self):
        return self.left.uses_sqrt() or self.right.uses_sqrt()

    def variables(self):
        return self.left.variables() | self.right.variables()

    def _print(self, parent_prec):
        text = f"{self.left._print(_PREC_ADD)} - {self.right._print(_PREC_ADD + 1)}"
        return f"({text})" if parent_prec > _PREC_ADD else text


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr

    def evaluate(self, env):
        return self.left.evaluate(env) * self.right.evaluate(env)

    def diff(self, var):
        return Add(Mul(self.left.diff(var), self.right),
                   Mul(self.left, self.right.diff(var)))

    def degree(self):
        dl, dr = self.left.degree(), self.right.degree()
        if dl is None or dr is None:
            return None
        return dl + dr

    def uses_sqrt(self):
        return self.left.uses_sqrt() or self.right.uses_sqrt()

    def variables(self):
        return self.left.variables() | self.right.variables()

    def _print(self, parent_prec):
        text = f"{self.left._print(_PREC_MUL)}*{self.right._print(_PREC_MUL + 1)}"
        return f"({text})" if parent_prec > _PREC_MUL else text


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def evaluate(self, env):
        return -self.operand.evaluate(env)

    def diff(self, var):
        return Neg(self.operand.diff(var))

    def degree(self):
        return self.operand.degree()

    def uses_sqrt(self):
        return self.operand.uses_sqrt()

    def variables(self):
        return self.operand.variables()

    def _print(self, parent_prec):
        text = f"-{self.operand._print(_PREC_NEG)}"
        return f"({text})" if parent_prec > _PREC_NEG else text


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def evaluate(self, env):
        return self.base.evaluate(env) ** self.exponent

    def diff(self, var):
        du = self.base.diff(var)
        if self.exponent == 1:
            return du
        return Mul(Mul(Lit(Fraction(self.exponent)),
                       Pow(self.base, self.exponent - 1)), du)

    def degree(self):
        d = self.base.degree()
        if d is None:
            return None
        return d * self.exponent

    def uses_sqrt(self):
        return self.base.uses_sqrt()

    def variables(self):
        return self.base.variables()

    def _print(self, parent_prec):
        text = f"{self.base._print(_PREC_ATOM)}^{self.exponent}"
        return f"({text})" if parent_prec > _PREC_POW else text


@dataclass(frozen=True)
class Sqrt(Expr):
    operand: Expr

    def evaluate(self, env):
        val = np.asarray(self.operand.evaluate(env), dtype=float)
        # Tolerate tiny negative round-off under the radical; reject real negatives.
        if np.any(val < -1e-12):
            raise EvalDomainError("sqrt of a negative radicand")
        return np.sqrt(np.clip(val, 0.0, None))

    def diff(self, var):
        # d sqrt(u) = u' / (2 sqrt(u))
        return Mul(self.operand.diff(var), _HalfInvSqrt(self.operand))

    def degree(self):
        return None

    def uses_sqrt(self):
        return True

    def variables(self):
        return self.operand.variables()

    def _print(self, parent_prec):
        return f"sqrt({self.operand._print(0)})"


@dataclass(frozen=True)
class _HalfInvSqrt(Expr):
    """Internal derivative helper 1/(2*sqrt(u)); never produced by the parser."""

    operand: Expr

    def evaluate(self, env):
        val = np.asarray(self.operand.evaluate(env), dtype=float)
        if np.any(val <= 0):
            raise EvalDomainError("derivative of sqrt at a nonpositive radicand")
        return 0.5 / np.sqrt(val)

    def diff(self, var):
        raise NotImplementedError("second derivatives of sqrt are not needed")

    def degree(self):
        return None

    def uses_sqrt(self):
        return True

    def variables(self):
        return self.operand.variables()

    def _print(self, parent_prec):
        return f"(1/(2*sqrt({self.operand._print(0)})))"
