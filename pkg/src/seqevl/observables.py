"""Observables ``phi(x) = g(dist(x, zeta))`` maximised at a point of the circle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from ._reals import Real, describe, parse_real

G_KINDS = ("g1_neglog", "g2_power", "g3_bounded")


def circle_distance(x, y):
    """Arc-length distance ``min(|x - y|, 1 - |x - y|)`` on [0, 1) with 0 ~ 1.

    Exact for Fractions, vectorised for arrays.
    """
    if isinstance(x, Fraction) and isinstance(y, Fraction):
        d = abs(x - y)
        return min(d, 1 - d)
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    out = np.minimum(d, 1.0 - d)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Observable:
    """``phi(x) = g(dist(x, zeta))`` for one of three shapes of ``g``.

    ``g1_neglog``: ``g(s) = -log s``; ``g2_power``: ``g(s) = s**(-1/alpha)``;
    ``g3_bounded``: ``g(s) = D - s**(1/alpha)``.  Each is a strictly
    decreasing bijection from [0, 1/2] onto its range.

    Parameters
    ----------
    g_kind : str
        One of :data:`G_KINDS`.
    zeta : real-like
        Centre; strings such as ``"1/3"`` or ``"1/sqrt(2)"`` are kept exact.
    alpha : float
        Shape exponent for ``g2``/``g3``.
    D : float
        Maximum value for ``g3``.
    aux_scaling : callable, optional
        The slowly varying ``h(s)`` attached to ``g1``.  Stored only.
    """

    g_kind: str = "g1_neglog"
    zeta: Real = Fraction(0)
    alpha: float = 1.0
    D: float = 1.0
    aux_scaling: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.g_kind not in G_KINDS:
            raise ValueError(f"g_kind must be one of {G_KINDS}, got {self.g_kind!r}")
        z = parse_real(self.zeta)
        if not 0 <= float(z) < 1:
            raise ValueError("zeta must lie in [0, 1)")
        object.__setattr__(self, "zeta", z)
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.g_kind == "g3_bounded" and not self.D > 0.5 ** (1.0 / self.alpha):
            raise ValueError("D must exceed g3's decrement on [0, 1/2]")

    @property
    def zeta_float(self) -> float:
        return float(self.zeta)

    def g(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            if self.g_kind == "g1_neglog":
                out = -np.log(s)
            elif self.g_kind == "g2_power":
                out = np.where(s > 0, s ** (-1.0 / self.alpha), np.inf)
            else:
                out = self.D - s ** (1.0 / self.alpha)
        return float(out) if out.ndim == 0 else out

    @property
    def sup(self) -> float:
        return self.D if self.g_kind == "g3_bounded" else math.inf

    @property
    def inf(self) -> float:
        """Smallest value of ``g`` on [0, 1/2]."""
        return float(self.g(0.5))

    def to_dict(self) -> dict:
        return {"g_kind": self.g_kind, "zeta": describe(self.zeta), "alpha": self.alpha, "D": self.D}


def observe(obs: Observable, x):
    """``g(dist(x, zeta))``, vectorised over ``x``."""
    return obs.g(circle_distance(x, obs.zeta_float))


def exceedance_radius(obs: Observable, u: float) -> float:
    """Radius ``delta`` with ``{phi > u} = B_delta(zeta)``.

    Returns 0 when ``u`` is at or above ``sup g``.  Raises ``ValueError``
    when ``u`` lies below ``g(1/2)``, where ``g`` stops being a bijection.
    """
    u = float(u)
    if math.isnan(u):
        raise ValueError("u is NaN")
    if u >= obs.sup:
        return 0.0
    if obs.g_kind == "g1_neglog":
        d = math.exp(-u)
    elif obs.g_kind == "g2_power":
        d = u ** (-obs.alpha) if u > 0 else math.inf
    else:
        d = (obs.D - u) ** obs.alpha
    if d > 0.5 * (1 + 1e-12):
        raise ValueError(f"level {u} is below the range of g on [0, 1/2]")
    return min(d, 0.5)
