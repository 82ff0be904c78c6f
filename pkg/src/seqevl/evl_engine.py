"""Monte Carlo extreme value experiments for sequential β-map systems.

The process is ``X_i = phi(T_i x)`` where ``T_i`` is the composition of the
first ``i`` maps and ``x`` is drawn from Lebesgue measure.  An exceedance at
time ``i`` is ``X_i > u_n``, i.e. the orbit enters the ball ``B_delta(zeta)``.
An escape (of order ``q``) is an exceedance not followed by another one in
the next ``q`` steps.

Simulation streams through time and keeps only the sparse list of
exceedance times, so memory is proportional to the number of exceedances.
Every replicate draws its starting point from its own generator seeded by
``(seed, replicate)``; results do not depend on how replicates are chunked
or threaded.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Sequence

import mpmath
import numpy as np

from ._reals import Irrational, Real, describe, parse_real, to_mpf
from .blocking import BlockPartition, build_blocks
from .circle_maps import MapSequenceSpec
from .invariant_measure import ThresholdSchedule, orbit_of_one, parry_density, threshold_schedule
from .observables import Observable, circle_distance
from .orbits import OrbitEnsemble, choose_mode, draw_starts, exact_slopes, modulus_bits, random_prime

SCHEMA_VERSION = "1.0"
Z95 = 1.959963984540054


class UnsupportedCaseError(ValueError):
    """The orbit of the centre reaches the discontinuity 0 ~ 1."""


class NumericalFailure(ArithmeticError):
    """An estimator could not be evaluated (no exceedances, P = 0, ...)."""


# --- q detection and theoretical extremal index ---------------------------


class QDetection(NamedTuple):
    q: int
    case: str               # periodic | aperiodic | boundary-nonperiodic | boundary-periodic
    period: Optional[int]
    horizon: int            # orbit length examined
    approximate: bool       # centre only known to float accuracy


def _approximate_point(z: Real) -> bool:
    return isinstance(z, Fraction) and z.denominator.bit_length() > 40


def detect_q(beta, zeta, horizon: int = 10_000) -> QDetection:
    """Classify ``zeta`` under the unperturbed map ``T_beta``.

    Returns ``q = p`` for a periodic centre of prime period ``p``, ``q = 0``
    for a centre that does not return within ``horizon`` steps, and for the
    point ``0 ~ 1`` looks at the orbit of 1 instead: ``q = 1`` if it never
    reaches ``0 ~ 1``, ``q = p`` if it does so first at time ``p``.

    Centres given as floats with long binary expansions (more than 40 bits
    of denominator) are treated as approximate: their orbit is followed
    only for about ``40 / log2(beta)`` steps and ``approximate`` is set.

    Raises
    ------
    UnsupportedCaseError
        If the orbit of a centre other than 0 reaches 0.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    b = parse_real(beta)
    z = parse_real(zeta)
    bf = float(b)
    if not 0 <= float(z) < 1:
        raise ValueError("zeta must lie in [0, 1)")
    if isinstance(z, Fraction) and z == 0:
        orb = orbit_of_one(b, horizon + 1)
        if orb.ending == "zero":
            p = len(orb.points)
            return QDetection(p, "boundary-periodic", p, horizon, False)
        return QDetection(1, "boundary-nonperiodic", None, horizon, False)
    if _approximate_point(z):
        J = max(1, min(horizon, int(40 / math.log2(bf))))
        return _detect_hp(b, z, J, approximate=True, bits=53 + 64)
    if isinstance(z, Fraction) and isinstance(b, Fraction):
        return _detect_exact(b, z, horizon)
    return _detect_hp(b, z, horizon)


def _detect_exact(b: Fraction, z: Fraction, J: int) -> QDetection:
    # x_j = a / D with D = den(z) * den(b)**j, kept unreduced
    bn, bd = b.numerator, b.denominator
    c, e = z.numerator, z.denominator
    a, D = c, e
    seen = {} if bd == 1 else None
    for j in range(1, J + 1):
        D2 = D * bd
        a = (a * bn) % D2
        D = D2
        if a == 0:
            raise UnsupportedCaseError(f"orbit of {z} reaches 0 ~ 1 at time {j}")
        if a * e == c * D:
            return QDetection(j, "periodic", j, J, False)
        if seen is not None:
            # integer slope: the orbit lives on a finite set, a repeat proves non-periodicity
            if a in seen:
                return QDetection(0, "aperiodic", None, J, False)
            seen[a] = j
    return QDetection(0, "aperiodic", None, J, False)


def _detect_hp(b: Real, z: Real, J: int, approximate: bool = False, bits: Optional[int] = None) -> QDetection:
    lb = math.log2(float(b))
    prec = bits if bits is not None else int(J * lb) + 256
    with mpmath.workprec(prec + 64):
        beta = to_mpf(b, prec + 64)
        z0 = to_mpf(z, prec + 64)
        x = z0
        tol = mpmath.mpf(2) ** -128
        for j in range(1, J + 1):
            y = beta * x
            x = y - mpmath.floor(y)
            if approximate:
                # a float centre carries 53 bits, each step uses up log2(beta) of them
                tol = mpmath.mpf(2) ** -max(8, int(49 - (j + 1) * lb))
            if x < tol or 1 - x < tol:
                raise UnsupportedCaseError(f"orbit of {describe(z)} reaches 0 ~ 1 at time {j}")
            d = abs(x - z0)
            if min(d, 1 - d) < tol:
                return QDetection(j, "periodic", j, J, approximate)
    return QDetection(0, "aperiodic", None, J, approximate)


class ThetaTheory(NamedTuple):
    theta: float
    detection: QDetection
    unnormalized: Optional[float]   # boundary cases: h(0)(1-1/beta) + h(1-)(...) without dividing by h(0)+h(1-)


def theoretical_theta_detail(beta, zeta, horizon: int = 10_000) -> ThetaTheory:
    det = detect_q(beta, zeta, horizon)
    bf = float(parse_real(beta))
    if det.case == "periodic":
        return ThetaTheory(1.0 - bf ** (-det.period), det, None)
    if det.case == "aperiodic":
        return ThetaTheory(1.0, det, None)
    dens = parry_density(beta)
    h0 = dens(0.0)
    h1 = dens.left_limit(1.0)
    right = h1 if det.case == "boundary-nonperiodic" else h1 * (1.0 - bf ** (-det.period))
    raw = h0 * (1.0 - 1.0 / bf) + right
    return ThetaTheory(raw / (h0 + h1), det, raw)


def theoretical_theta(beta, zeta, horizon: int = 10_000) -> float:
    """Extremal index of the unperturbed map at ``zeta``.

    ``1 - beta**-p`` at a periodic centre, 1 at a non-periodic one.  At the
    point ``0 ~ 1`` the two one-sided balls are weighted by the density on
    each side::

        theta = (h(0) (1 - 1/beta) + h(1-) (1 - beta**-p)) / (h(0) + h(1-))

    with the factor ``1 - beta**-p`` replaced by 1 when the orbit of 1 never
    reaches ``0 ~ 1``.
    """
    return theoretical_theta_detail(beta, zeta, horizon).theta


def escape_indicator(window: Sequence[float], u: float) -> bool:
    """True iff ``window[0] > u`` and every later value is ``<= u``."""
    if len(window) == 0:
        raise ValueError("empty window")
    return window[0] > u and all(v <= u for v in window[1:])


# --- experiment specification ---------------------------------------------


def default_k_n(n: int) -> int:
    return max(1, math.ceil(n ** (1.0 / 3.0)))


def default_t_star(n: int) -> int:
    return max(0, math.ceil(math.log(n) ** 2)) if n > 1 else 0


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to run one extreme value experiment.

    Parameters
    ----------
    map_spec : MapSequenceSpec
    observable : Observable
    tau : float
        Target expected number of exceedances, ``n * mu(U_n)``.
    n : int
        Number of observations ``X_0 .. X_{n-1}``.
    replicates : int
    seed : int
        Master seed in ``[0, 2**64)``.
    burn_in_exponent : float, optional
        ``gamma``; the first ``ceil(n**gamma)`` indices are discarded by the
        ratio estimator.  Defaults to 0.6, raised when a fast schedule needs
        ``gamma * xi > 1``.
    k_n, t_star : int, optional
        Block count and minimal gap; default ``ceil(n**(1/3))`` and
        ``ceil(log(n)**2)``.
    precision : {"auto", "exact", "float"}
    initial : {"lebesgue", "invariant"}
        Law of the starting point.
    q : int, optional
        Overrides the analytic ``q``.
    horizon_J : int
        Orbit length used to certify aperiodicity.
    lookahead : int
        Extra steps simulated past ``n`` so that escapes near the end are
        classified; at least ``q``.
    threads : int
    """

    map_spec: MapSequenceSpec
    observable: Observable
    tau: float = 1.0
    n: int = 1000
    replicates: int = 1000
    seed: int = 0
    burn_in_exponent: Optional[float] = None
    k_n: Optional[int] = None
    t_star: Optional[int] = None
    precision: str = "auto"
    initial: str = "lebesgue"
    q: Optional[int] = None
    horizon_J: int = 10_000
    lookahead: int = 8
    threads: int = 1

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be non-negative")
        if self.n < 1 or self.replicates < 1:
            raise ValueError("n and replicates must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.precision not in ("auto", "exact", "float"):
            raise ValueError("precision must be auto, exact or float")
        if self.initial not in ("lebesgue", "invariant"):
            raise ValueError("initial must be 'lebesgue' or 'invariant'")
        if self.q is not None and self.q < 0:
            raise ValueError("q must be non-negative")
        if self.lookahead < 0 or self.threads < 1 or self.horizon_J < 1:
            raise ValueError("lookahead >= 0, threads >= 1 and horizon_J >= 1 required")
        g = self.burn_in_exponent
        if g is not None:
            if not 0 < g < 1:
                raise ValueError("burn_in_exponent must lie in (0, 1)")
            if self.map_spec.schedule_kind == "fast" and not g * float(self.map_spec.exponent) > 1:
                raise ValueError("fast schedules need burn_in_exponent * xi > 1")
        if self.k_n is not None and self.k_n < 1:
            raise ValueError("k_n must be positive")
        if self.t_star is not None and self.t_star < 0:
            raise ValueError("t_star must be non-negative")

    @property
    def gamma(self) -> float:
        if self.burn_in_exponent is not None:
            return float(self.burn_in_exponent)
        if self.map_spec.schedule_kind == "fast":
            xi = float(self.map_spec.exponent)
            if not 0.6 * xi > 1:
                return (1.0 + 1.0 / xi) / 2.0
        return 0.6

    @property
    def burn_in(self) -> int:
        return math.ceil(self.n ** self.gamma)

    @property
    def kn(self) -> int:
        return self.k_n if self.k_n is not None else default_k_n(self.n)

    @property
    def tstar(self) -> int:
        return self.t_star if self.t_star is not None else default_t_star(self.n)

    def to_dict(self) -> dict:
        return {
            "map": self.map_spec.to_dict(),
            "observable": self.observable.to_dict(),
            "tau": self.tau,
            "n": self.n,
            "replicates": self.replicates,
            "seed": int(self.seed),
            "burn_in_exponent": self.gamma,
            "burn_in": self.burn_in,
            "k_n": self.kn,
            "t_star": self.tstar,
            "precision": self.precision,
            "initial": self.initial,
            "horizon_J": self.horizon_J,
            "lookahead": self.lookahead,
        }


# --- simulation -----------------------------------------------------------


@dataclass(frozen=True)
class ReplicateRecord:
    """Outcome of one replicate.

    ``exceedance_times`` are the indices ``i < n`` with ``X_i > u_n``;
    ``escape_times`` the subset followed by no exceedance in the next ``q``
    steps; ``no_escape_flag`` is true when there is no escape before ``n``.
    """

    replicate: int
    M_n: float
    exceedance_times: tuple
    escape_times: tuple
    no_escape_flag: bool


class SimulationResult:
    """Pooled exceedance data of all replicates.

    Exceedances are stored as two parallel arrays sorted by replicate, then
    time, covering times ``0 .. n + lookahead - 1``.
    """

    def __init__(self, n: int, replicates: int, tau: float, q: int, burn_in: int, lookahead: int,
                 exc_rep: np.ndarray, exc_time: np.ndarray, min_dist: Optional[np.ndarray] = None,
                 observable: Optional[Observable] = None, schedule: Optional[ThresholdSchedule] = None,
                 spec: Optional[ExperimentSpec] = None, detection: Optional[QDetection] = None,
                 mode: str = "synthetic", downgrade_events: int = 0, downgrade_step: Optional[int] = None,
                 prime: Optional[int] = None):
        self.n = int(n)
        self.replicates = int(replicates)
        self.tau = float(tau)
        self.q = int(q)
        self.burn_in = int(burn_in)
        self.lookahead = int(lookahead)
        order = np.lexsort((exc_time, exc_rep))
        self.exc_rep = np.asarray(exc_rep, dtype=np.int64)[order]
        self.exc_time = np.asarray(exc_time, dtype=np.int64)[order]
        self.min_dist = min_dist
        self.observable = observable
        self.schedule = schedule
        self.spec = spec
        self.detection = detection
        self.mode = mode
        self.downgrade_events = downgrade_events
        self.downgrade_step = downgrade_step
        self.prime = prime
        if self.q > self.lookahead:
            raise ValueError("lookahead must be at least q")

    @classmethod
    def from_exceedance_matrix(cls, exc: np.ndarray, n: int, tau: float, q: int, burn_in: int = 0) -> "SimulationResult":
        """Wrap a boolean ``(replicates, n + lookahead)`` exceedance array."""
        exc = np.asarray(exc, dtype=bool)
        r, t = np.nonzero(exc)
        return cls(n, exc.shape[0], tau, q, burn_in, exc.shape[1] - n, r, t)

    # pooled views

    def escape_mask(self, q: Optional[int] = None) -> np.ndarray:
        """Which exceedances are escapes of order ``q``."""
        q = self.q if q is None else int(q)
        if q > self.lookahead:
            raise ValueError(f"q = {q} exceeds the simulated lookahead {self.lookahead}")
        if q == 0:
            return np.ones(len(self.exc_time), dtype=bool)
        same = np.empty(len(self.exc_rep), dtype=bool)
        same[:-1] = self.exc_rep[1:] == self.exc_rep[:-1]
        if len(same):
            same[-1] = False
        gap = np.empty(len(self.exc_time), dtype=np.int64)
        gap[:-1] = self.exc_time[1:] - self.exc_time[:-1]
        if len(gap):
            gap[-1] = 0
        return ~(same & (gap <= q))

    def window(self, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        hi = self.n if hi is None else hi
        return (self.exc_time >= lo) & (self.exc_time < hi)

    def per_replicate(self, mask: np.ndarray) -> np.ndarray:
        return np.bincount(self.exc_rep[mask], minlength=self.replicates)

    def exceedance_counts(self, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        return self.per_replicate(self.window(lo, hi))

    def escape_counts(self, q: Optional[int] = None, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        return self.per_replicate(self.window(lo, hi) & self.escape_mask(q))

    def M_n(self) -> np.ndarray:
        if self.min_dist is None or self.observable is None:
            raise ValueError("maxima are only available for simulated results")
        return np.asarray(self.observable.g(self.min_dist), dtype=float)

    @cached_property
    def records(self) -> List[ReplicateRecord]:
        in_n = self.window()
        esc = self.escape_mask() & in_n
        bounds = np.searchsorted(self.exc_rep, np.arange(self.replicates + 1))
        Mn = self.M_n() if self.min_dist is not None and self.observable is not None else np.full(self.replicates, np.nan)
        out = []
        for r in range(self.replicates):
            a, b = bounds[r], bounds[r + 1]
            times = self.exc_time[a:b]
            m = in_n[a:b]
            e = esc[a:b]
            out.append(ReplicateRecord(r, float(Mn[r]), tuple(int(v) for v in times[m]),
                                       tuple(int(v) for v in times[e]), not e.any()))
        return out

    def write_replicates_csv(self, path) -> None:
        """Per-replicate summary with a header row."""
        exc = self.exceedance_counts()
        esc = self.escape_counts()
        in_n = self.window()
        first = np.full(self.replicates, -1, dtype=np.int64)
        rr = self.exc_rep[in_n][::-1]
        first[rr] = self.exc_time[in_n][::-1]
        Mn = self.M_n() if self.min_dist is not None and self.observable is not None else np.full(self.replicates, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replicate", "M_n", "exceedances", "escapes", "no_escape", "first_exceedance"])
            for r in range(self.replicates):
                w.writerow([r, repr(float(Mn[r])), int(exc[r]), int(esc[r]), int(esc[r] == 0), int(first[r])])


def _simulate_chunk(spec: ExperimentSpec, reps: np.ndarray, prime: int, mode: str, delta: float,
                    zeta: float, horizon: int, n: int, inverse_cdf):
    k0 = draw_starts(spec.seed, reps, prime, inverse_cdf)
    ens = OrbitEnsemble(spec.map_spec, k0, prime, horizon - 1, mode)
    mind = np.full(len(reps), np.inf)
    rep_chunks, time_chunks = [], []
    for i in range(horizon):
        d = circle_distance(ens.values(), zeta)
        d = np.atleast_1d(d)
        if i < n:
            np.minimum(mind, d, out=mind)
        hit = np.flatnonzero(d < delta)
        if hit.size:
            rep_chunks.append(reps[hit])
            time_chunks.append(np.full(hit.size, i, dtype=np.int64))
        if i + 1 < horizon:
            ens.advance()
    er = np.concatenate(rep_chunks) if rep_chunks else np.zeros(0, dtype=np.int64)
    et = np.concatenate(time_chunks) if time_chunks else np.zeros(0, dtype=np.int64)
    return er, et, mind, ens.status


def resolve_q(spec: ExperimentSpec) -> QDetection:
    """Analytic ``q`` for the experiment (or the override in ``spec.q``)."""
    if spec.q is not None:
        try:
            det = detect_q(spec.map_spec.limit_beta, spec.observable.zeta, spec.horizon_J)
            return det._replace(q=spec.q)
        except UnsupportedCaseError:
            return QDetection(spec.q, "override", None, spec.horizon_J, False)
    return detect_q(spec.map_spec.limit_beta, spec.observable.zeta, spec.horizon_J)


def simulate_max_process(spec: ExperimentSpec, detection: Optional[QDetection] = None) -> SimulationResult:
    """Run all replicates of ``spec`` and collect exceedance times.

    The threshold is solved against the invariant measure of the limit map
    so that ``n * mu(U_n) = tau``.  ``n + lookahead`` observations are
    generated per replicate (``lookahead >= q``).
    """
    det = detection if detection is not None else resolve_q(spec)
    sched = threshold_schedule(spec.map_spec.limit_beta, spec.observable, spec.tau, spec.n)
    lookahead = max(det.q, spec.lookahead)
    horizon = spec.n + lookahead
    mode = choose_mode(spec.map_spec, horizon - 1, spec.precision)
    top = 2
    if mode == "modular":
        top = max([2] + [int(v) for v in set(exact_slopes(spec.map_spec, horizon - 1))])
    avoid = []
    b = spec.map_spec.exact_beta(1)
    if b is not None:
        avoid = [b.numerator, b.denominator]
    prime = random_prime(spec.seed, modulus_bits(top), avoid)
    inv = parry_density(spec.map_spec.limit_beta).inverse_cdf if spec.initial == "invariant" else None
    R = spec.replicates
    chunks = np.array_split(np.arange(R, dtype=np.int64), spec.threads) if spec.threads > 1 else [np.arange(R, dtype=np.int64)]
    chunks = [c for c in chunks if len(c)]
    args = (prime, mode, sched.delta_n, spec.observable.zeta_float, horizon, spec.n, inv)
    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(ex.map(lambda c: _simulate_chunk(spec, c, *args), chunks))
    else:
        parts = [_simulate_chunk(spec, chunks[0], *args)]
    er = np.concatenate([p[0] for p in parts])
    et = np.concatenate([p[1] for p in parts])
    mind = np.concatenate([p[2] for p in parts])
    statuses = [p[3] for p in parts]
    dg_events = sum(s.downgrade_events for s in statuses)
    dg_steps = [s.downgrade_step for s in statuses if s.downgrade_step is not None]
    final_mode = mode if not dg_events else f"{mode}->float"
    return SimulationResult(spec.n, R, spec.tau, det.q, spec.burn_in, lookahead, er, et, mind,
                            spec.observable, sched, spec, det, final_mode, dg_events,
                            min(dg_steps) if dg_steps else None, prime)


# --- estimators -----------------------------------------------------------


class Estimate(NamedTuple):
    value: float
    se: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "ci": [self.ci_low, self.ci_high]}


def empirical_Pn(result: SimulationResult) -> Estimate:
    """Fraction of replicates without exceedance among ``X_0 .. X_{n-1}``.

    The 95% interval is the normal approximation widened by ``0.5/R`` and
    clipped to [0, 1].
    """
    R = result.replicates
    if R < 1:
        raise ValueError("no replicates")
    hits = result.exceedance_counts() > 0
    p = 1.0 - hits.mean()
    se = math.sqrt(p * (1 - p) / R)
    half = Z95 * se + 0.5 / R
    return Estimate(p, se, max(0.0, p - half), min(1.0, p + half))


def estimate_extremal_index(result: SimulationResult, mode: str = "ratio", q: Optional[int] = None,
                            burn_in: Optional[int] = None) -> Estimate:
    """Extremal index estimate.

    ``ratio``: escapes of order ``q`` divided by exceedances, pooled over
    replicates and indices in ``[burn_in, n)``; the interval comes from the
    delta method over replicates.  ``log``: ``-log(P_n)/tau`` with the
    interval mapped from that of ``P_n``.

    Raises
    ------
    NumericalFailure
        No exceedances (ratio), or ``P_n = 0`` or ``tau = 0`` (log).
    """
    if mode == "ratio":
        lo = result.burn_in if burn_in is None else int(burn_in)
        x = result.exceedance_counts(lo).astype(float)
        e = result.escape_counts(q, lo).astype(float)
        X = x.sum()
        if X == 0:
            raise NumericalFailure("no exceedances after the burn-in; ratio estimator undefined")
        th = e.sum() / X
        R = result.replicates
        resid = e - th * x
        se = math.sqrt(R / max(R - 1, 1) * float(resid @ resid)) / X
        return Estimate(th, se, th - Z95 * se, th + Z95 * se)
    if mode == "log":
        if result.tau <= 0:
            raise NumericalFailure("log estimator needs tau > 0")
        P = empirical_Pn(result)
        if P.value <= 0:
            raise NumericalFailure("P_n = 0; log estimator undefined")
        th = -math.log(P.value) / result.tau
        se = P.se / (P.value * result.tau)
        hi = -math.log(P.ci_low) / result.tau if P.ci_low > 0 else math.inf
        lo = -math.log(P.ci_high) / result.tau
        return Estimate(th, se, lo, hi)
    raise ValueError("mode must be 'ratio' or 'log'")


def experiment_blocks(result: SimulationResult, k_n: Optional[int] = None, t_star: Optional[int] = None) -> BlockPartition:
    """Blocks over ``[burn_in, n)`` with the model tail ``tau/n`` at every index."""
    n = result.n
    k = k_n if k_n is not None else (result.spec.kn if result.spec else default_k_n(n))
    ts = t_star if t_star is not None else (result.spec.tstar if result.spec else default_t_star(n))
    tail = Fraction(result.tau).limit_denominator(10**9) / n if result.tau > 0 else Fraction(1, 10 * n)
    return build_blocks([tail] * n, k, ts, offset=result.burn_in)


class DPrime(NamedTuple):
    value: float
    se: float
    reference: float        # 1/k_n
    k_n: int
    q: int


def check_D_prime_statistic(result: SimulationResult, blocks: Optional[BlockPartition] = None,
                            q: Optional[int] = None) -> DPrime:
    """Mean number of pairs of escapes sharing a block.

    Estimates ``sum_i sum_{j<r in block i} P(A_j ∩ A_r)`` as the replicate
    mean of ``sum_blocks C(c_b, 2)`` where ``c_b`` counts escapes in block
    ``b``.  Small values (compared with ``1/k_n``) indicate no clustering of
    escapes.
    """
    q = result.q if q is None else int(q)
    blocks = blocks if blocks is not None else experiment_blocks(result)
    L = np.asarray(blocks.cumulative)
    m = result.escape_mask(q) & (result.exc_time >= L[0]) & (result.exc_time < L[-1])
    b = np.searchsorted(L, result.exc_time[m], side="right") - 1
    nb = len(L) - 1
    key = result.exc_rep[m] * nb + b
    counts = np.bincount(key, minlength=result.replicates * nb).reshape(result.replicates, nb)
    pairs = (counts * (counts - 1) // 2).sum(axis=1).astype(float)
    R = result.replicates
    se = pairs.std(ddof=1) / math.sqrt(R) if R > 1 else 0.0
    return DPrime(float(pairs.mean()), float(se), 1.0 / blocks.k_n, blocks.k_n, q)


class DRow(NamedTuple):
    t: int
    gamma_hat: float
    se: float
    n_indices: int


def _gamma_hat(rep: np.ndarray, tim: np.ndarray, R: int, idx_lo: int, idx_hi: int, t: int, ell: int) -> float:
    """Average over i in [idx_lo, idx_hi) of P(A_i ∩ W_{i+t,ell}) - P(A_i) P(W_{i+t,ell})."""
    if R == 0 or idx_hi <= idx_lo:
        return 0.0
    size = idx_hi + t + ell + 1
    # replicates with an escape in [s, s+ell): union of (e-ell, e] per replicate
    prev = np.full(len(tim), -(10**12), dtype=np.int64)
    same = np.zeros(len(tim), dtype=bool)
    same[1:] = rep[1:] == rep[:-1]
    prev[1:][same[1:]] = tim[:-1][same[1:]]
    start = np.maximum(tim - ell + 1, prev + 1)
    stop = tim + 1
    start = np.clip(start, 0, size)
    stop = np.clip(stop, 0, size)
    diff = np.zeros(size + 1, dtype=np.int64)
    np.add.at(diff, start, 1)
    np.add.at(diff, stop, -1)
    hit_count = np.cumsum(diff)[:size]
    pw = 1.0 - hit_count / R                      # P(W_{s,ell}) for s < size
    pa = np.bincount(tim, minlength=size)[:size] / R
    i = np.arange(idx_lo, idx_hi)
    # joint: escapes e at i whose replicate has no escape in [e+t, e+t+ell)
    BIG = size + 1
    keys = rep * BIG + tim
    sel = (tim >= idx_lo) & (tim < idx_hi)
    target = keys[sel] + t
    nxt = np.searchsorted(keys, target, side="left")
    nxt_key = np.where(nxt < len(keys), keys[np.minimum(nxt, len(keys) - 1)], np.iinfo(np.int64).max)
    clear = nxt_key >= target + ell
    joint = np.bincount(tim[sel][clear] - idx_lo, minlength=len(i)) / R
    return float(np.mean(joint - pa[i] * pw[i + t]))


def check_D_statistic(result: SimulationResult, q: Optional[int] = None, t_values: Sequence[int] = tuple(range(1, 11)),
                      ell: Optional[int] = None, batches: int = 20) -> List[DRow]:
    """Mixing statistic between an escape at ``i`` and no escape in ``[i+t, i+t+ell)``.

    ``gamma_hat(t)`` is the signed covariance averaged over admissible
    ``i >= burn_in``; its standard error comes from ``batches`` batch means
    over replicates.
    """
    q = result.q if q is None else int(q)
    n = result.n
    k = result.spec.kn if result.spec else default_k_n(n)
    ell = ell if ell is not None else max(1, n // k)
    m = result.escape_mask(q) & (result.exc_time < n)
    rep, tim = result.exc_rep[m], result.exc_time[m]
    R = result.replicates
    B = max(2, min(batches, R))
    edges = np.linspace(0, R, B + 1).astype(np.int64)
    rows = []
    for t in t_values:
        hi = n - t - ell + 1
        lo = result.burn_in
        if hi <= lo:
            raise ValueError(f"t = {t} with ell = {ell} leaves no admissible index")
        g = _gamma_hat(rep, tim, R, lo, hi, t, ell)
        vals = []
        for a, b in zip(edges[:-1], edges[1:]):
            s = (rep >= a) & (rep < b)
            vals.append(_gamma_hat(rep[s] - a, tim[s], int(b - a), lo, hi, t, ell))
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
        rows.append(DRow(int(t), g, se, hi - lo))
    return rows


class DDecayFit(NamedTuple):
    rate: Optional[float]
    prefactor: Optional[float]
    t_used: List[int]


def fit_D_decay(rows: Sequence[DRow], z: float = 2.0) -> DDecayFit:
    """Log-linear fit of ``|gamma_hat(t)|`` over the lags where it exceeds ``z`` standard errors.

    ``rate`` is ``None`` when fewer than two lags are resolved.
    """
    used = [r for r in rows if abs(r.gamma_hat) > z * r.se and r.gamma_hat != 0]
    if len(used) < 2:
        return DDecayFit(None, None, [r.t for r in used])
    t = np.array([r.t for r in used], dtype=float)
    slope, icpt = np.polyfit(t, np.log([abs(r.gamma_hat) for r in used]), 1)
    return DDecayFit(float(math.exp(slope)), float(math.exp(icpt)), [r.t for r in used])


def return_lag_profile(result: SimulationResult, max_lag: Optional[int] = None) -> np.ndarray:
    """``P(X_{i+j} > u | X_i > u)`` for ``j = 1 .. max_lag``, pooled over ``i`` in ``[burn_in, n)``."""
    L = result.lookahead if max_lag is None else min(int(max_lag), result.lookahead)
    src = result.window(result.burn_in)
    total = src.sum()
    if total == 0:
        return np.zeros(L)
    BIG = result.n + result.lookahead + 1
    keys = result.exc_rep * BIG + result.exc_time
    out = np.empty(L)
    for j in range(1, L + 1):
        tgt = keys[src] + j
        pos = np.searchsorted(keys, tgt)
        found = (pos < len(keys)) & (keys[np.minimum(pos, len(keys) - 1)] == tgt)
        out[j - 1] = found.sum() / total
    return out


def min_return_lag(result: SimulationResult, max_lag: Optional[int] = None) -> Optional[int]:
    """Smallest lag whose return rate is clearly above the independent rate ``tau/n``.

    A data-driven cross-check of the analytic ``q``; ``None`` if no lag stands out.
    """
    prof = return_lag_profile(result, max_lag)
    total = max(int(result.window(result.burn_in).sum()), 1)
    base = result.tau / result.n
    for j, p in enumerate(prof, start=1):
        if p > base + 5 * math.sqrt(max(p, base) / total) + 10 * base:
            return j
    return None


def burn_in_discard_change(result: SimulationResult) -> float:
    """``P(no exceedance in [burn_in, n)) - P(no exceedance in [0, n))``."""
    a = (result.exceedance_counts(result.burn_in) == 0).mean()
    b = (result.exceedance_counts() == 0).mean()
    return float(a - b)


# --- report ---------------------------------------------------------------


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class EIReport:
    """Summary of one extreme value experiment."""

    q: int
    case: str
    period: Optional[int]
    horizon_J: int
    theta_theoretical: float
    theta_boundary_unnormalized: Optional[float]
    theta_hat: Estimate
    theta_hat_ratio: Optional[Estimate]
    theta_hat_log: Optional[Estimate]
    P_hat_n: Estimate
    P_target: float
    S_prime_n: DPrime
    gamma_hat: List[DRow]
    threshold: ThresholdSchedule
    spec: ExperimentSpec
    diagnostics: Dict = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    result: Optional[SimulationResult] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        def est(e):
            return None if e is None else {"value": _num(e.value), "se": _num(e.se), "ci": [_num(e.ci_low), _num(e.ci_high)]}

        return {
            "schema": "ei-report",
            "schema_version": SCHEMA_VERSION,
            "seed": int(self.spec.seed),
            "spec": self.spec.to_dict(),
            "q": self.q,
            "case": self.case,
            "period": self.period,
            "horizon_J": self.horizon_J,
            "theta_theoretical": _num(self.theta_theoretical),
            "theta_boundary_unnormalized": _num(self.theta_boundary_unnormalized),
            "theta_hat": est(self.theta_hat),
            "theta_hat_ratio": est(self.theta_hat_ratio),
            "theta_hat_log": est(self.theta_hat_log),
            "P_hat_n": est(self.P_hat_n),
            "P_target": _num(self.P_target),
            "S_prime_n": {"value": _num(self.S_prime_n.value), "se": _num(self.S_prime_n.se),
                          "reference": _num(self.S_prime_n.reference), "k_n": self.S_prime_n.k_n, "q": self.S_prime_n.q},
            "gamma_hat": [{"t": r.t, "gamma_hat": _num(r.gamma_hat), "se": _num(r.se), "n_indices": r.n_indices}
                          for r in self.gamma_hat],
            "threshold": self.threshold.to_dict(),
            "diagnostics": self.diagnostics,
            "flags": list(self.flags),
        }


def run_experiment(spec: ExperimentSpec, d_lags: Sequence[int] = tuple(range(1, 11))) -> EIReport:
    """Simulate and evaluate every estimator and diagnostic for ``spec``.

    Raises
    ------
    UnsupportedCaseError
        If ``q`` cannot be resolved and no override is given.
    """
    det = resolve_q(spec)
    res = simulate_max_process(spec, det)
    flags: List[str] = []
    if det.case in ("periodic", "aperiodic", "boundary-periodic", "boundary-nonperiodic"):
        th = theoretical_theta_detail(spec.map_spec.limit_beta, spec.observable.zeta, spec.horizon_J)
        theta_th, unnorm = th.theta, th.unnormalized
    else:
        theta_th, unnorm = float("nan"), None
    P = empirical_Pn(res)
    try:
        ratio = estimate_extremal_index(res, "ratio")
    except NumericalFailure as exc:
        ratio = None
        flags.append(f"ratio estimator unavailable: {exc}")
    try:
        logest = estimate_extremal_index(res, "log") if spec.tau > 0 else None
    except NumericalFailure as exc:
        logest = None
        flags.append(f"log estimator unavailable: {exc}")
    primary = ratio if ratio is not None else logest
    if primary is None:
        raise NumericalFailure("no extremal index estimate could be formed")
    for name, e in (("theta_hat_ratio", ratio), ("theta_hat_log", logest)):
        if e is not None and not 0 <= e.value <= 1.2:
            flags.append(f"{name} = {e.value:.4f} outside the sanity band [0, 1.2]")
    blocks = experiment_blocks(res)
    dprime = check_D_prime_statistic(res, blocks)
    try:
        drows = check_D_statistic(res, t_values=d_lags)
    except ValueError as exc:
        drows = []
        flags.append(f"D statistic unavailable: {exc}")
    if not spec.map_spec.is_constant:
        flags.append("theta_theoretical and P_target refer to the limit map; perturbed slopes may change the index")
    if det.case == "aperiodic":
        flags.append(f"aperiodic up to J = {det.horizon}")
    if det.approximate:
        flags.append("centre known only to float accuracy; periodicity horizon reduced")
    if res.downgrade_events:
        flags.append(f"exact orbits downgraded to float at step {res.downgrade_step}")
    exc = res.exceedance_counts(res.burn_in)
    diag = {
        "orbit_mode": res.mode,
        "prime": res.prime,
        "downgrade_events": res.downgrade_events,
        "downgrade_step": res.downgrade_step,
        "burn_in": res.burn_in,
        "lookahead": res.lookahead,
        "exceedances_total": int(res.exceedance_counts().sum()),
        "exceedance_mean_post_burn_in": _num(exc.mean()),
        "exceedance_mean_se": _num(exc.std(ddof=1) / math.sqrt(len(exc)) if len(exc) > 1 else 0.0),
        "exceedance_mean_expected": _num((res.n - res.burn_in) * spec.tau / res.n),
        "burn_in_discard_change": _num(burn_in_discard_change(res)),
        "burn_in_discard_scale": _num(res.n ** spec.gamma * 2 * res.schedule.delta_n),
        "min_return_lag": min_return_lag(res),
        "return_lag_profile": [_num(v) for v in return_lag_profile(res)],
        "blocks": blocks.to_dict(),
    }
    return EIReport(
        q=det.q,
        case=det.case,
        period=det.period,
        horizon_J=det.horizon,
        theta_theoretical=theta_th,
        theta_boundary_unnormalized=unnorm,
        theta_hat=primary,
        theta_hat_ratio=ratio,
        theta_hat_log=logest,
        P_hat_n=P,
        P_target=math.exp(-theta_th * spec.tau) if math.isfinite(theta_th) else float("nan"),
        S_prime_n=dprime,
        gamma_hat=drows,
        threshold=res.schedule,
        spec=spec,
        diagnostics=diag,
        flags=flags,
        result=res,
    )
