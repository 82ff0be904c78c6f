"""β-transformations of the circle and their sequential compositions.

A point of the circle S¹ = [0, 1) (with 0 ~ 1) is either a ``float`` or an
exact :class:`fractions.Fraction`.  Exact points stay exact as long as the
slope is rational; otherwise the result is returned as a float and a
:class:`PrecisionDowngradeWarning` is emitted.

Branches use ``floor`` so that ``T(0) = 0``.  The orbit of the point 1,
needed by the Parry density and by the boundary cases, is computed as the
orbit of the left limit (see :func:`orbit_of_one_step`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Union

import numpy as np

from ._reals import Irrational, Real, describe, float_to_fraction, parse_real

MIN_BETA = 1.0 + 1e-6
# Largest denominator (in bits) an exact point may carry before it is
# converted to float.
MAX_EXACT_BITS = 4096 + 64

CirclePoint = Union[float, Fraction]


class PrecisionDowngradeWarning(RuntimeWarning):
    """An exact computation had to continue in floating point."""


def _check_beta(beta: float) -> None:
    if not beta >= MIN_BETA:
        raise ValueError(f"beta must be at least {MIN_BETA}, got {beta}")


def _as_point(x) -> CirclePoint:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        v = parse_real(x)
        return v if isinstance(v, Fraction) else float(v)
    return float(x)


def _check_point(x: CirclePoint) -> None:
    if not 0 <= x < 1:
        raise ValueError(f"circle point must lie in [0, 1), got {x}")


def _downgrade(reason: str) -> None:
    warnings.warn(reason, PrecisionDowngradeWarning, stacklevel=3)


def beta_map_apply(beta, x) -> CirclePoint:
    """Apply ``x -> beta*x mod 1``.

    Parameters
    ----------
    beta : real-like
        Slope, at least ``1 + 1e-6``.  Strings such as ``"5/2"`` are exact.
    x : float or Fraction
        Point in [0, 1).

    Returns
    -------
    float or Fraction
        Exact when both ``beta`` and ``x`` are rational, float otherwise.

    Examples
    --------
    >>> beta_map_apply(Fraction(5, 2), Fraction(2, 3))
    Fraction(2, 3)
    """
    b = parse_real(beta)
    _check_beta(float(b))
    x = _as_point(x)
    _check_point(x)
    if isinstance(x, Fraction):
        if isinstance(b, Fraction):
            y = b * x
            y -= y.numerator // y.denominator
            if y.denominator.bit_length() > MAX_EXACT_BITS:
                _downgrade("denominator cap exceeded, continuing in float")
                return float(y)
            return y
        _downgrade(f"slope {describe(b)} is not rational, result is a float")
        x = float(x)
    y = float(b) * x
    return y - math.floor(y)


def orbit_of_one_step(beta: Fraction, x: Fraction) -> Fraction:
    """One step of the orbit of 1, where the point 1 maps to its left limit."""
    if x == 1:
        y = beta
        fl = y.numerator // y.denominator
        return Fraction(0) if y == fl else y - fl
    y = beta * x
    return y - y.numerator // y.denominator


@dataclass(frozen=True)
class BetaMap:
    """The map ``x -> beta*x mod 1`` on the circle."""

    beta: Real

    def __post_init__(self):
        object.__setattr__(self, "beta", parse_real(self.beta))
        _check_beta(float(self.beta))

    def __call__(self, x) -> CirclePoint:
        return beta_map_apply(self.beta, x)

    @property
    def n_branches(self) -> int:
        return math.ceil(float(self.beta))


_SCHEDULES = ("constant", "fast", "slow")


@dataclass(frozen=True)
class MapSequenceSpec:
    """A sequence of slopes ``beta_k`` converging (or not) to ``limit_beta``.

    ``T_k`` uses slope ``beta_k = limit_beta + sign * amplitude * k**(-exponent)``
    for ``k >= 1``.  The ``fast`` schedule needs ``exponent > 1`` and the
    ``slow`` schedule ``0 < exponent < 1``; ``constant`` ignores both.

    Parameters
    ----------
    limit_beta : real-like
        Slope of the unperturbed map.
    schedule_kind : {"constant", "fast", "slow"}
    amplitude : float, optional
        Defaults to 1 for ``fast`` and ``slow``, 0 for ``constant``.
    exponent : float, optional
        ``xi`` for ``fast`` schedules, ``alpha`` for ``slow`` ones.
    sign : {1, -1}
    """

    limit_beta: Real
    schedule_kind: str = "constant"
    amplitude: Optional[float] = None
    exponent: Optional[float] = None
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "limit_beta", parse_real(self.limit_beta))
        kind = self.schedule_kind
        if kind not in _SCHEDULES:
            raise ValueError(f"schedule_kind must be one of {_SCHEDULES}, got {kind!r}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        amp = self.amplitude
        if amp is None:
            amp = 0.0 if kind == "constant" else 1.0
        amp = parse_real(amp)
        if float(amp) < 0:
            raise ValueError("amplitude must be non-negative")
        object.__setattr__(self, "amplitude", amp)
        if kind == "constant":
            if float(amp) != 0:
                raise ValueError("constant schedule takes no amplitude")
        else:
            if self.exponent is None:
                raise ValueError(f"{kind} schedule needs an exponent")
            object.__setattr__(self, "exponent", parse_real(self.exponent))
            e = float(self.exponent)
            if kind == "fast" and not e > 1:
                raise ValueError("fast schedule needs exponent xi > 1")
            if kind == "slow" and not 0 < e < 1:
                raise ValueError("slow schedule needs 0 < alpha < 1")
        _check_beta(float(self.limit_beta))
        # |beta_k - beta| is largest at k = 1
        _check_beta(float(self.limit_beta) - (float(amp) if self.sign < 0 else 0.0))

    @classmethod
    def constant(cls, beta) -> "MapSequenceSpec":
        return cls(beta)

    @classmethod
    def fast(cls, beta, amplitude=1.0, xi=2.0, sign=1) -> "MapSequenceSpec":
        return cls(beta, "fast", amplitude, xi, sign)

    @classmethod
    def slow(cls, beta, alpha=0.5, amplitude=1.0, sign=1) -> "MapSequenceSpec":
        return cls(beta, "slow", amplitude, alpha, sign)

    @property
    def is_constant(self) -> bool:
        return self.schedule_kind == "constant" or float(self.amplitude) == 0

    def rate_bound(self, k: int) -> float:
        """Declared bound on ``|beta_k - limit_beta|``."""
        if self.is_constant:
            return 0.0
        return float(self.amplitude) * float(k) ** (-float(self.exponent))

    def exact_beta(self, k: int) -> Optional[Fraction]:
        """``beta_k`` as a Fraction when it is rational, else ``None``."""
        if not isinstance(self.limit_beta, Fraction) or not isinstance(self.amplitude, Fraction):
            return None
        if self.is_constant:
            return self.limit_beta
        e = parse_real(self.exponent)
        if not (isinstance(e, Fraction) and e.denominator == 1):
            return None
        return self.limit_beta + self.sign * self.amplitude / Fraction(k) ** int(e)

    def to_dict(self) -> dict:
        return {
            "limit_beta": describe(self.limit_beta),
            "schedule_kind": self.schedule_kind,
            "amplitude": float(self.amplitude),
            "exponent": None if self.exponent is None else float(self.exponent),
            "sign": self.sign,
        }


def beta_sequence_value(spec: MapSequenceSpec, k: int) -> float:
    """Slope ``beta_k`` of the k-th map (``k >= 1``)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if spec.is_constant:
        return float(spec.limit_beta)
    return float(spec.limit_beta) + spec.sign * spec.rate_bound(k)


def beta_sequence(spec: MapSequenceSpec, n: int) -> np.ndarray:
    """Array ``(beta_1, ..., beta_n)`` as floats."""
    k = np.arange(1, n + 1, dtype=float)
    base = float(spec.limit_beta)
    if spec.is_constant:
        return np.full(n, base)
    return base + spec.sign * float(spec.amplitude) * k ** (-float(spec.exponent))


def iter_orbit(spec: MapSequenceSpec, x0, n: int) -> Iterator[CirclePoint]:
    """Yield ``x0, T_1 x0, T_2 T_1 x0, ...`` (``n + 1`` points) lazily."""
    if n < 0:
        raise ValueError("n must be non-negative")
    x = _as_point(x0)
    _check_point(x)
    yield x
    for k in range(1, n + 1):
        if isinstance(x, Fraction):
            b = spec.exact_beta(k)
            if b is None:
                _downgrade("slope sequence is not rational, orbit continues in float")
                x = float(x)
            else:
                y = b * x
                y -= y.numerator // y.denominator
                if y.denominator.bit_length() > MAX_EXACT_BITS:
                    _downgrade("denominator cap exceeded, orbit continues in float")
                    y = float(y)
                x = y
        if not isinstance(x, Fraction):
            y = beta_sequence_value(spec, k) * x
            x = y - math.floor(y)
        yield x


def sequential_orbit(spec: MapSequenceSpec, x0, n: int) -> list:
    """Return ``[x0, T_1 x0, ..., T_n ... T_1 x0]``."""
    return list(iter_orbit(spec, x0, n))


__all__ = [
    "BetaMap",
    "CirclePoint",
    "Irrational",
    "MapSequenceSpec",
    "PrecisionDowngradeWarning",
    "beta_map_apply",
    "beta_sequence",
    "beta_sequence_value",
    "float_to_fraction",
    "iter_orbit",
    "orbit_of_one_step",
    "sequential_orbit",
]
