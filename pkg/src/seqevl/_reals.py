"""Parsing of user-supplied reals into exact or high-precision values.

Rationals are held as :class:`fractions.Fraction`.  Irrational inputs given
as symbolic strings (``"1/sqrt(2)"``, ``"(1+sqrt(5))/2"``) are kept
symbolically and evaluated with :mod:`mpmath` at whatever precision the caller
asks for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Integral, Rational
from typing import Union

import mpmath

# Floats that are the nearest double of a rational with denominator at most
# this bound are read as that rational (0.1 -> 1/10, 2.5 -> 5/2).
SMALL_DENOMINATOR = 10**6


@dataclass(frozen=True)
class Irrational:
    """A real number known only through a symbolic expression."""

    text: str

    def value(self, bits: int = 53) -> mpmath.mpf:
        return _eval_symbolic(self.text, int(bits))

    def __float__(self) -> float:
        return float(self.value(80))

    def __str__(self) -> str:
        return self.text


Real = Union[Fraction, Irrational]


@lru_cache(maxsize=256)
def _eval_symbolic(text: str, bits: int) -> mpmath.mpf:
    import sympy

    expr = sympy.sympify(text)
    dps = int(bits * 0.30103) + 10
    with mpmath.workprec(bits + 32):
        return +mpmath.mpf(sympy.N(expr, dps)._to_mpmath(bits + 32))


def float_to_fraction(x: float) -> Fraction:
    """Read a float as a short rational if it round-trips, else exactly."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r}")
    exact = Fraction(x)
    short = exact.limit_denominator(SMALL_DENOMINATOR)
    if float(short) == x:
        return short
    return exact


def parse_real(value) -> Real:
    """Convert ``value`` to a :class:`Fraction` or an :class:`Irrational`.

    Accepts ints, Fractions, floats, numpy scalars and strings.  Strings are
    interpreted symbolically, so ``"1/3"`` is exactly one third and
    ``"sqrt(2)/2"`` stays irrational.
    """
    if isinstance(value, (Fraction, Irrational)):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not reals")
    if isinstance(value, Integral):
        return Fraction(int(value))
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, str):
        return _parse_text(value.strip())
    if isinstance(value, mpmath.mpf):
        man, exp = value.man_exp
        return Fraction(int(man)) * Fraction(2) ** int(exp)
    try:
        return float_to_fraction(float(value))
    except (TypeError, ValueError) as exc:
        raise TypeError(f"cannot interpret {value!r} as a real") from exc


@lru_cache(maxsize=256)
def _parse_text(text: str) -> Real:
    if not text:
        raise ValueError("empty number")
    try:
        return Fraction(text)
    except ValueError:
        pass
    import sympy

    try:
        expr = sympy.sympify(text, rational=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ValueError(f"cannot parse {text!r} as a real") from exc
    if not expr.is_real or not expr.is_number:
        raise ValueError(f"{text!r} is not a real number")
    if expr.is_Rational:
        return Fraction(int(expr.p), int(expr.q))
    return Irrational(str(expr))


def to_float(x) -> float:
    return float(parse_real(x)) if not isinstance(x, float) else x


def to_mpf(x: Real, bits: int) -> mpmath.mpf:
    """Evaluate a parsed real at ``bits`` of working precision."""
    if isinstance(x, Fraction):
        with mpmath.workprec(bits):
            return mpmath.mpf(x.numerator) / x.denominator
    return x.value(bits)


def is_integer(x: Real) -> bool:
    return isinstance(x, Fraction) and x.denominator == 1


def describe(x: Real) -> str:
    """Stable textual form used in reports."""
    if isinstance(x, Fraction):
        return str(x)
    return x.text
