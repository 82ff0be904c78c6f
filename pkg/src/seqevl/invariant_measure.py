"""Invariant densities of β-maps and the thresholds built from them.

The absolutely continuous invariant density of ``T_beta`` is the Parry
density

    h(x) = (1/M) * sum over n with x < T^n(1) of beta**(-n),

normalised by ``M = sum_n beta**(-n) T^n(1)``.  The orbit of 1 is computed
exactly for rational slopes and with :mod:`mpmath` for symbolic irrational
ones; when it reaches 0 or falls into a cycle the series is summed in closed
form, otherwise it is truncated.

The Ulam discretisation gives an independent approximation of the same
density, built from the exact geometry of the affine branches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import NamedTuple, Optional

import mpmath
import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components

from ._reals import Irrational, Real, describe, parse_real, to_mpf
from .circle_maps import MIN_BETA, orbit_of_one_step
from .observables import Observable


class StationaryConvergenceError(ArithmeticError):
    """Power iteration did not settle; carries the final residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def default_n_terms(beta: float, tol: float = 1e-15) -> int:
    """Smallest N with ``beta**-N / (1 - 1/beta) <= tol``."""
    return max(1, math.ceil(math.log(1.0 / (tol * (1.0 - 1.0 / beta))) / math.log(beta)))


class OrbitOfOne(NamedTuple):
    points: tuple          # T^0(1) = 1, T(1), ... as floats
    ending: str            # "zero", "cycle" or "truncated"
    cycle_start: Optional[int]
    cycle_length: Optional[int]


def orbit_of_one(beta, n_terms: int, hp_bits: Optional[int] = None) -> OrbitOfOne:
    """Orbit of 1 (as a left limit) until it hits 0, cycles or ``n_terms`` points.

    ``ending == "zero"`` means ``T^len(points)(1) = 0``; ``"cycle"`` means
    ``T^len(points)(1) = points[cycle_start]``.
    """
    b = parse_real(beta)
    if isinstance(b, Fraction):
        x = Fraction(1)
        seen = {x: 0}
        pts = [x]
        while len(pts) < n_terms:
            x = orbit_of_one_step(b, x)
            if x == 0:
                return OrbitOfOne(tuple(float(v) for v in pts), "zero", None, None)
            if x in seen:
                s = seen[x]
                return OrbitOfOne(tuple(float(v) for v in pts), "cycle", s, len(pts) - s)
            seen[x] = len(pts)
            pts.append(x)
        return OrbitOfOne(tuple(float(v) for v in pts), "truncated", None, None)
    return _orbit_of_one_hp(b, n_terms, hp_bits)


def _orbit_of_one_hp(b: Irrational, n_terms: int, hp_bits: Optional[int]) -> OrbitOfOne:
    lb = math.log2(float(b))
    bits = hp_bits or int(n_terms * lb) + 256
    snap = mpmath.mpf(2) ** -128
    with mpmath.workprec(bits):
        beta = to_mpf(b, bits)
        x = mpmath.mpf(1)
        pts = [x]
        index = {round(1.0, 12): [0]}
        while len(pts) < n_terms:
            y = beta * x
            if abs(y - mpmath.nint(y)) < snap:
                # lands on an integer, i.e. on 0 ~ 1 (floor convention)
                return OrbitOfOne(tuple(float(v) for v in pts), "zero", None, None)
            x = y - mpmath.floor(y)
            key = round(float(x), 12)
            for j in index.get(key, ()):
                if abs(pts[j] - x) < snap:
                    return OrbitOfOne(tuple(float(v) for v in pts), "cycle", j, len(pts) - j)
            index.setdefault(key, []).append(len(pts))
            pts.append(x)
    return OrbitOfOne(tuple(float(v) for v in pts), "truncated", None, None)


@dataclass(frozen=True)
class ParryDensity:
    """Piecewise constant Parry density of ``T_beta``.

    Attributes
    ----------
    beta : float
    orbit_of_one : tuple of float
        ``1, T(1), T^2(1), ...`` up to termination.
    weights : ndarray
        Coefficient of each orbit point (``beta**-n``, with cycles summed).
    M_beta : float
        Normaliser.
    breakpoints : ndarray
        Sorted distinct orbit values in (0, 1]; ``h`` is constant between them.
    ending : str
        ``"zero"``, ``"cycle"`` (both exact) or ``"truncated"``.
    truncation_error : float
        Bound on the sup-norm error of ``h`` (0 when exact).
    """

    beta: float
    beta_exact: str
    orbit_of_one: tuple
    weights: np.ndarray
    M_beta: float
    breakpoints: np.ndarray
    ending: str
    truncation_error: float
    _t: np.ndarray
    _suffix_w: np.ndarray
    _prefix_wt: np.ndarray

    @property
    def exact(self) -> bool:
        return self.ending != "truncated"

    def __call__(self, x):
        """``h(x)``, right-continuous, vectorised."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self._t, x, side="right")
        out = self._suffix_w[idx] / self.M_beta
        return float(out) if out.ndim == 0 else out

    def left_limit(self, x):
        """``h(x-)``; in particular ``left_limit(1) = 1/M``."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self._t, x, side="left")
        out = self._suffix_w[idx] / self.M_beta
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        """``mu([0, x])`` by exact integration of the step function."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        idx = np.searchsorted(self._t, x, side="right")
        out = (self._prefix_wt[idx] + x * self._suffix_w[idx]) / self.M_beta
        return float(out) if out.ndim == 0 else out

    def measure(self, a: float, b: float) -> float:
        if a > b:
            raise ValueError(f"empty interval [{a}, {b}]")
        if not (0 <= a and b <= 1):
            raise ValueError("interval must lie in [0, 1]")
        return float(self.cdf(b) - self.cdf(a))

    @cached_property
    def _pieces(self):
        knots = np.concatenate(([0.0], self.breakpoints[self.breakpoints < 1.0], [1.0]))
        return knots, self((knots[:-1] + knots[1:]) / 2)

    def _arc(self, zeta: float, length: float, direction: int) -> float:
        # integrate h over an arc of the given length leaving zeta, piece by piece,
        # so that short arcs keep full relative precision
        knots, vals = self._pieces
        m = len(vals)
        if direction > 0:
            j = int(np.searchsorted(knots, zeta, side="right")) - 1
            room = knots[j + 1] - zeta
        else:
            j = int(np.searchsorted(knots, zeta, side="left")) - 1
            if j < 0:
                j = m - 1
                zeta = 1.0
            room = zeta - knots[j]
        acc = 0.0
        left = length
        while left > 0:
            take = min(room, left)
            acc += take * vals[j]
            left -= take
            j = (j + direction) % m
            room = knots[j + 1] - knots[j]
        return acc

    def ball_measure(self, zeta: float, delta: float) -> float:
        """``mu`` of the open arc of radius ``delta`` about ``zeta``."""
        if delta <= 0:
            return 0.0
        if delta >= 0.5:
            return 1.0
        zeta = float(zeta)
        return float(self._arc(zeta, delta, 1) + self._arc(zeta, delta, -1))

    def inverse_cdf(self, u):
        """Quantile function; exact since the distribution function is piecewise linear."""
        knots = np.concatenate(([0.0], self.breakpoints[self.breakpoints < 1.0], [1.0]))
        return np.interp(np.asarray(u, dtype=float), self.cdf(knots), knots)

    def plateaus(self) -> np.ndarray:
        """Values of ``h`` on the consecutive intervals between breakpoints."""
        knots = np.concatenate(([0.0], self.breakpoints[self.breakpoints < 1.0], [1.0]))
        return self((knots[:-1] + knots[1:]) / 2)

    def bin_averages(self, n_bins: int) -> np.ndarray:
        """Average of ``h`` over each of ``n_bins`` equal bins."""
        edges = np.arange(n_bins + 1) / n_bins
        return np.diff(self.cdf(edges)) * n_bins


def _density_key(beta):
    b = parse_real(beta)
    if not float(b) >= MIN_BETA:
        raise ValueError(f"beta must be at least {MIN_BETA}")
    return b


def parry_density(beta, n_terms: Optional[int] = None) -> ParryDensity:
    """Build the Parry density of ``T_beta``.

    Parameters
    ----------
    beta : real-like
        Slope; strings keep irrationals symbolic (``"(1+sqrt(5))/2"``).
    n_terms : int, optional
        Truncation order.  By default it is chosen so the truncation bound is
        below 1e-15.  Ignored when the orbit of 1 terminates earlier.
    """
    return _parry_density(_density_key(beta), n_terms)


@lru_cache(maxsize=64)
def _parry_density(b: Real, n_terms: Optional[int]) -> ParryDensity:
    bf = float(b)
    N = default_n_terms(bf) if n_terms is None else int(n_terms)
    if N < 1:
        raise ValueError("n_terms must be at least 1")
    orb = orbit_of_one(b, N)
    t = np.array(orb.points)
    n = np.arange(len(t))
    w = np.power(bf, -n.astype(float))
    err = 0.0
    if orb.ending == "cycle":
        s, L = orb.cycle_start, orb.cycle_length
        w[s:] /= 1.0 - bf ** (-L)
    elif orb.ending == "truncated":
        err = bf ** (-len(t)) / (1.0 - 1.0 / bf)
    M = float(np.sum(w * t))
    order = np.argsort(t, kind="stable")
    ts, ws = t[order], w[order]
    suffix_w = np.concatenate((np.cumsum(ws[::-1])[::-1], [0.0]))
    prefix_wt = np.concatenate(([0.0], np.cumsum(ws * ts)))
    return ParryDensity(
        beta=bf,
        beta_exact=describe(b),
        orbit_of_one=orb.points,
        weights=w,
        M_beta=M,
        breakpoints=np.unique(t),
        ending=orb.ending,
        truncation_error=err / M,
        _t=ts,
        _suffix_w=suffix_w,
        _prefix_wt=prefix_wt,
    )


def parry_density_eval(beta, x: float, n_terms: Optional[int] = None) -> float:
    """Evaluate the Parry density ``h(x)`` of ``T_beta`` at ``x`` in [0, 1)."""
    if not 0 <= x < 1:
        raise ValueError("x must lie in [0, 1)")
    return parry_density(beta, n_terms)(x)


def parry_measure_interval(beta, a: float, b: float, n_terms: Optional[int] = None) -> float:
    """Parry measure of ``[a, b]`` with ``0 <= a <= b <= 1``."""
    return parry_density(beta, n_terms).measure(a, b)


class ThresholdSchedule(NamedTuple):
    tau: float
    n: int
    u_n: float
    delta_n: float
    mass: float                      # mu(B_delta(zeta)), equal to tau/n
    per_index_thresholds: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "n": self.n,
            "u_n": self.u_n if math.isfinite(self.u_n) else None,
            "delta_n": self.delta_n,
            "mass": self.mass,
        }


def threshold_schedule(beta, obs: Observable, tau: float, n: int) -> ThresholdSchedule:
    """Threshold ``u_n`` with ``n * mu(phi > u_n) = tau`` under the Parry measure.

    The radius is found by root bracketing on the exact ball measure, which is
    continuous and increasing in the radius.
    """
    tau = float(tau)
    if tau < 0 or n < 1:
        raise ValueError("need tau >= 0 and n >= 1")
    target = tau / n
    if target > 1:
        raise ValueError(f"tau/n = {target} exceeds total mass")
    if target == 0:
        return ThresholdSchedule(tau, n, float(obs.g(0.0)), 0.0, 0.0)
    dens = parry_density(beta)
    z = obs.zeta_float
    if target == 1:
        delta = 0.5
    else:
        f = lambda d: dens.ball_measure(z, d) - target
        delta = brentq(f, 0.0, 0.5, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    mass = dens.ball_measure(z, delta)
    return ThresholdSchedule(tau, n, float(obs.g(delta)), float(delta), mass)


@dataclass(frozen=True)
class UlamOperator:
    """Row-stochastic Ulam matrix on ``n_bins`` equal bins (sparse CSR)."""

    beta: float
    n_bins: int
    matrix: sp.csr_matrix

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def push(self, f: np.ndarray) -> np.ndarray:
        """Transfer a bin-density vector one step."""
        return self.matrix.T @ f


@lru_cache(maxsize=32)
def _ulam_matrix(beta: float, n_bins: int) -> sp.csr_matrix:
    N = n_bins
    i = np.arange(N, dtype=float)
    lo = beta * i                   # image of bin i in units of 1/N, before reduction
    base = np.floor(lo)
    frac = lo - base
    rows, cols, vals = [], [], []
    for j in range(math.ceil(beta) + 1):
        ov = np.minimum(j + 1.0, frac + beta) - np.maximum(float(j), frac)
        keep = ov > 0
        rows.append(np.nonzero(keep)[0])
        cols.append(((base[keep].astype(np.int64) + j) % N))
        vals.append(ov[keep] / beta)
    P = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return P.tocsr()


def ulam_discretize(beta, n_bins: int) -> UlamOperator:
    """Ulam matrix ``P[i, j] = m(bin_i ∩ T^-1 bin_j) / m(bin_i)`` of ``T_beta``."""
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    bf = float(parse_real(beta))
    if not bf >= MIN_BETA:
        raise ValueError(f"beta must be at least {MIN_BETA}")
    return UlamOperator(bf, int(n_bins), _ulam_matrix(bf, int(n_bins)))


class StationaryDensity(NamedTuple):
    density: np.ndarray
    iterations: int
    residual: float
    unique: bool


def closed_class_count(P) -> int:
    """Number of closed communicating classes of a stochastic matrix."""
    A = sp.csr_matrix(P)
    A = A.multiply(A > 0).tocsr()
    k, labels = connected_components(A, directed=True, connection="strong")
    coo = A.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_classes = np.unique(labels[coo.row[leaving]])
    return int(k - len(open_classes))


def ulam_stationary(op, tol: float = 1e-12, max_iter: int = 100_000) -> StationaryDensity:
    """Left fixed vector of the Ulam matrix by power iteration from uniform.

    Returns bin densities normalised to integrate to 1.  ``unique`` is False
    when the matrix has more than one closed class.
    """
    P = op.matrix if isinstance(op, UlamOperator) else sp.csr_matrix(op)
    N = P.shape[0]
    PT = P.T.tocsr()
    f = np.ones(N)
    res = math.inf
    for it in range(1, max_iter + 1):
        g = PT @ f
        g *= N / g.sum()
        res = float(np.abs(g - f).sum() / N)
        f = g
        if res < tol:
            return StationaryDensity(f, it, res, closed_class_count(P) == 1)
    raise StationaryConvergenceError(f"no convergence after {max_iter} iterations (residual {res:.3e})", res)


def density_l1_distance(values: np.ndarray, dens: ParryDensity) -> float:
    """L1 distance between bin densities and the Parry density."""
    N = len(values)
    return float(np.abs(values - dens.bin_averages(N)).sum() / N)


def write_density_csv(path, values: np.ndarray, reference: Optional[np.ndarray] = None) -> None:
    """One row per bin: ``bin, left, right, density[, reference]``."""
    N = len(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "left", "right", "density"] + (["reference"] if reference is not None else []))
        for i in range(N):
            row = [i, repr(i / N), repr((i + 1) / N), repr(float(values[i]))]
            if reference is not None:
                row.append(repr(float(reference[i])))
            w.writerow(row)


def write_operator_csv(path, op: UlamOperator) -> None:
    """Nonzero entries of an Ulam matrix as ``row, col, weight``."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "weight"])
        for k in order:
            w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])
