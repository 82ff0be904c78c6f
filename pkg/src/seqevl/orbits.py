"""Vectorised sequential orbits of many starting points at once.

Three state representations are used.

``modular``
    Every slope is an integer ``b``.  A point ``k/p`` (``p`` a large prime) is
    stored as the int64 ``k``; one step is ``k -> b*k mod p``.  Orbits are
    exact forever, which matters for the doubling map where float64 orbits
    collapse to 0 after about 53 steps.
``rational``
    Every slope is rational ``b/d``.  Points share a common denominator ``D``
    and numerators are Python ints in an object array; one step is
    ``a -> b*a mod d*D`` and ``D -> d*D``.  Once ``D`` outgrows
    :data:`~seqevl.circle_maps.MAX_EXACT_BITS` the ensemble continues in float.
``float``
    Plain float64.

Starting points are always drawn as ``k/p`` with ``k`` uniform in
``[0, p)``, one draw per replicate from a generator seeded by
``(seed, replicate)``, so the same seed gives the same starts in every mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .circle_maps import MAX_EXACT_BITS, MapSequenceSpec, beta_sequence

PRECISIONS = ("exact", "float", "auto")


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    """Generator of replicate ``r`` under master seed ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(0, int(r)))))


def auxiliary_rng(seed: int, tag: int) -> np.random.Generator:
    """Generator for run-level draws (the prime, the driver sequence, ...)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(1, int(tag)))))


def modulus_bits(max_slope: int) -> int:
    """Prime size such that ``max_slope * k`` never overflows int64."""
    return min(61, 63 - math.ceil(math.log2(max_slope + 1)))


def random_prime(seed: int, bits: int = 61, avoid: Sequence[int] = ()) -> int:
    """A prime of ``bits`` bits chosen deterministically from ``seed``."""
    from sympy import nextprime

    rng = auxiliary_rng(seed, 0)
    lo = 1 << (bits - 1)
    p = int(nextprime(int(rng.integers(lo, lo + (lo >> 1)))))
    while any(a % p == 0 for a in avoid if a):
        p = int(nextprime(p))
    return p


def exact_slopes(spec: MapSequenceSpec, n_steps: int) -> Optional[list]:
    """``[beta_1, ..., beta_n]`` as Fractions, or ``None`` if any is irrational."""
    if spec.is_constant:
        b = spec.exact_beta(1)
        return None if b is None else [b] * n_steps
    out = []
    for k in range(1, n_steps + 1):
        b = spec.exact_beta(k)
        if b is None:
            return None
        out.append(b)
    return out


def choose_mode(spec: MapSequenceSpec, n_steps: int, precision: str = "auto") -> str:
    """Pick the state representation for a run of ``n_steps`` maps.

    ``auto`` selects ``modular`` for integer slopes, ``rational`` for a
    constant rational slope and ``float`` otherwise.  ``exact`` insists on an
    exact mode whenever the slopes are rational, and otherwise returns
    ``rational`` which downgrades at the first irrational slope.
    """
    if precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {PRECISIONS}")
    if precision == "float":
        return "float"
    if spec.is_constant:
        b = spec.exact_beta(1)
        if b is None:
            return "rational" if precision == "exact" else "float"
        return "modular" if b.denominator == 1 else "rational"
    if precision == "auto":
        return "float"
    slopes = exact_slopes(spec, n_steps)
    if slopes is not None and all(b.denominator == 1 for b in slopes):
        return "modular"
    return "rational"


@dataclass
class EnsembleStatus:
    mode: str
    initial_mode: str
    prime: int
    downgrade_step: Optional[int] = None
    downgrade_events: int = 0


class OrbitEnsemble:
    """Current points of ``len(k0)`` orbits of the sequential system.

    Parameters
    ----------
    spec : MapSequenceSpec
    k0 : array of int
        Starting numerators; the starting points are ``k0 / prime``.
    prime : int
        Common starting denominator.
    n_steps : int
        Number of maps that will be applied (only needed for exact slopes).
    mode : {"modular", "rational", "float"}
    """

    def __init__(self, spec: MapSequenceSpec, k0: np.ndarray, prime: int, n_steps: int, mode: str):
        self.spec = spec
        self.n_steps = int(n_steps)
        self._slopes_f = beta_sequence(spec, self.n_steps)
        self._slopes_q = exact_slopes(spec, self.n_steps) if mode != "float" else None
        self.status = EnsembleStatus(mode, mode, int(prime))
        self.p = int(prime)
        k0 = np.asarray(k0, dtype=np.int64)
        self.step_index = 0
        if mode == "modular":
            if self._slopes_q is None or any(b.denominator != 1 for b in self._slopes_q):
                raise ValueError("modular mode needs integer slopes")
            top = max(int(b) for b in self._slopes_q) if self._slopes_q else 2
            if self.p.bit_length() > modulus_bits(top):
                raise ValueError("prime too large for int64 modular arithmetic")
            self._k = k0.copy()
        elif mode == "rational":
            self._a = np.array([int(v) for v in k0], dtype=object)
            self._den = self.p
            if self._slopes_q is None:
                self._to_float(0)
        elif mode == "float":
            self._x = k0.astype(np.float64) / float(self.p)
        else:
            raise ValueError(f"unknown mode {mode!r}")

    @property
    def mode(self) -> str:
        return self.status.mode

    @property
    def size(self) -> int:
        return len(self.values())

    def _to_float(self, step: int) -> None:
        self._x = (self._a / self._den).astype(np.float64)
        del self._a
        self.status.mode = "float"
        self.status.downgrade_step = step
        self.status.downgrade_events = len(self._x)

    def values(self) -> np.ndarray:
        """Current points as float64 (correctly rounded in exact modes)."""
        mode = self.status.mode
        if mode == "modular":
            return self._k / float(self.p)
        if mode == "rational":
            return (self._a / self._den).astype(np.float64)
        return self._x

    def exact_values(self) -> list:
        """Current points as Fractions (exact modes only)."""
        mode = self.status.mode
        if mode == "modular":
            return [Fraction(int(k), self.p) for k in self._k]
        if mode == "rational":
            return [Fraction(int(a), self._den) for a in self._a]
        raise ValueError("ensemble is in float mode")

    def advance(self) -> None:
        """Apply the next map ``T_{k+1}``."""
        k = self.step_index
        if k >= self.n_steps:
            raise IndexError("ensemble already advanced n_steps times")
        mode = self.status.mode
        if mode == "modular":
            b = int(self._slopes_q[k])
            if b == 2:
                s = self._k * 2
                s -= self.p * (s >= self.p)
                self._k = s
            else:
                self._k = (self._k * b) % self.p
        elif mode == "rational":
            b = self._slopes_q[k]
            den = self._den * b.denominator
            self._a = (self._a * b.numerator) % den
            self._den = den
            if den.bit_length() > MAX_EXACT_BITS:
                self._to_float(k + 1)
        else:
            x = self._x * self._slopes_f[k]
            x -= np.floor(x)
            self._x = x
        self.step_index = k + 1


def draw_starts(seed: int, replicates: Sequence[int], prime: int,
                inverse_cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Starting numerators ``k`` (points ``k/prime``) for the given replicates.

    With ``inverse_cdf`` the uniform draw is pushed through it, which samples
    from an invariant measure instead of Lebesgue.
    """
    out = np.empty(len(replicates), dtype=np.int64)
    if inverse_cdf is None:
        for i, r in enumerate(replicates):
            out[i] = replicate_rng(seed, r).integers(0, prime)
    else:
        u = np.array([replicate_rng(seed, r).random() for r in replicates])
        x = np.clip(np.asarray(inverse_cdf(u), dtype=float), 0.0, np.nextafter(1.0, 0.0))
        out[:] = np.minimum(np.floor(x * prime), prime - 1).astype(np.int64)
    return out
