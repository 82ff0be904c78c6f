"""Quenched extreme value experiments for random subshifts of finite type.

A driver sequence ``omega = (omega_0, omega_1, ...)`` picks, at every time
step, one of finitely many positive stochastic matrices.  The sample measure
on the fibre of ``omega`` is the time-inhomogeneous Markov measure

    mu^omega(C(w_0 ... w_{n-1})) = pi_0[w_0] * prod_i A(omega_i)[w_i, w_{i+1}],

where ``pi_0`` is the stationary vector of the average matrix.  Pushing the
initial law along gives ``pi_{i+1} = pi_i A(omega_i)``, so the sample measure
of the shifted fibre starts from ``pi_1``: the family is exactly
quasi-invariant.

The rare event is entering the cylinder ``C_n(zeta)`` of a periodic
sequence ``zeta``; the time horizon is ``w_n = floor(tau / mu(C_n(zeta)))``
with ``mu`` the Markov measure of the average matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .orbits import auxiliary_rng

Z95 = 1.959963984540054
CHUNK = 4096  # replicates per generator; fixed so threading cannot change results


class SubshiftValidationError(ValueError):
    pass


def stationary_vector(A: np.ndarray) -> np.ndarray:
    """Left probability vector fixed by a stochastic matrix."""
    s = A.shape[0]
    M = np.vstack([A.T - np.eye(s), np.ones((1, s))])
    rhs = np.zeros(s + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return pi


@dataclass(frozen=True)
class SubshiftSpec:
    """Finite family of positive stochastic matrices and their selection law.

    Parameters
    ----------
    matrices : sequence of (s, s) arrays
    probabilities : sequence of float, optional
        Selection probabilities of the i.i.d. driver; omitted for a single
        matrix (the degenerate driver).
    m_floor : float, optional
        Required lower bound on every entry; defaults to the smallest entry,
        which must be positive.
    """

    matrices: Tuple[np.ndarray, ...]
    probabilities: Optional[Tuple[float, ...]] = None
    m_floor: Optional[float] = None

    def __post_init__(self):
        mats = tuple(np.array(m, dtype=float) for m in self.matrices)
        if not mats:
            raise SubshiftValidationError("need at least one matrix")
        s = mats[0].shape[0]
        if s < 2:
            raise SubshiftValidationError("alphabet size must be at least 2")
        for A in mats:
            if A.shape != (s, s):
                raise SubshiftValidationError("matrices must be square and of equal size")
            if np.any(np.abs(A.sum(axis=1) - 1.0) > 1e-12):
                raise SubshiftValidationError("matrix rows must sum to 1")
        lo = min(float(A.min()) for A in mats)
        floor = lo if self.m_floor is None else float(self.m_floor)
        if not floor > 0:
            raise SubshiftValidationError("m_floor must be positive")
        if lo < floor:
            raise SubshiftValidationError(f"matrix entry {lo} below m_floor {floor}")
        if self.probabilities is None:
            if len(mats) != 1:
                probs = tuple([1.0 / len(mats)] * len(mats))
            else:
                probs = (1.0,)
        else:
            probs = tuple(float(p) for p in self.probabilities)
            if len(probs) != len(mats) or any(p <= 0 for p in probs) or abs(sum(probs) - 1) > 1e-12:
                raise SubshiftValidationError("probabilities must be positive, one per matrix, summing to 1")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "m_floor", floor)

    @property
    def alphabet_size(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def degenerate(self) -> bool:
        return len(self.matrices) == 1

    @property
    def average_matrix(self) -> np.ndarray:
        return sum(p * A for p, A in zip(self.probabilities, self.matrices))

    @property
    def stationary(self) -> np.ndarray:
        return stationary_vector(self.average_matrix)

    @property
    def h0(self) -> float:
        """Entropy-type constant ``-log m_floor`` bounding cylinder decay."""
        return -math.log(self.m_floor)

    def to_dict(self) -> dict:
        return {
            "alphabet_size": self.alphabet_size,
            "matrices": [A.tolist() for A in self.matrices],
            "probabilities": list(self.probabilities),
            "m_floor": self.m_floor,
            "driver": "degenerate" if self.degenerate else "iid-choice",
        }


class QuenchedRealization:
    """A sampled driver sequence together with its sample measures."""

    def __init__(self, spec: SubshiftSpec, omega: np.ndarray, pi0: Optional[np.ndarray] = None):
        self.spec = spec
        self.omega = np.asarray(omega, dtype=np.int64)
        self.pi0 = spec.stationary if pi0 is None else np.asarray(pi0, dtype=float)

    @property
    def horizon(self) -> int:
        return len(self.omega)

    def matrix(self, i: int) -> np.ndarray:
        return self.spec.matrices[self.omega[i]]

    def law(self, i: int) -> np.ndarray:
        """Distribution of the symbol at time ``i``: ``pi_0 A(omega_0) ... A(omega_{i-1})``."""
        pi = self.pi0
        for k in range(i):
            pi = pi @ self.matrix(k)
        return pi

    def shifted(self, k: int = 1) -> "QuenchedRealization":
        """Realization of the shifted driver, started from the pushed-forward law."""
        return QuenchedRealization(self.spec, self.omega[k:], self.law(k))


def sample_omega(spec: SubshiftSpec, horizon: int, seed: int) -> QuenchedRealization:
    """Draw ``horizon`` i.i.d. matrix indices deterministically from ``seed``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if spec.degenerate:
        return QuenchedRealization(spec, np.zeros(horizon, dtype=np.int64))
    rng = auxiliary_rng(seed, 2)
    omega = rng.choice(len(spec.matrices), size=horizon, p=np.asarray(spec.probabilities))
    return QuenchedRealization(spec, omega.astype(np.int64))


def _check_word(spec: SubshiftSpec, word: Sequence[int]) -> List[int]:
    w = [int(a) for a in word]
    if any(not 0 <= a < spec.alphabet_size for a in w):
        raise ValueError(f"symbol outside alphabet of size {spec.alphabet_size}")
    return w


def sample_measure_cylinder(real: QuenchedRealization, word: Sequence[int]) -> float:
    """``mu^omega`` of the cylinder of sequences starting with ``word``."""
    w = _check_word(real.spec, word)
    if not w:
        return 1.0
    if len(w) > real.horizon + 1:
        raise ValueError("word longer than the realization")
    p = float(real.pi0[w[0]])
    for i in range(len(w) - 1):
        p *= float(real.matrix(i)[w[i], w[i + 1]])
    return p


def marginal_cylinder_measure(spec: SubshiftSpec, word: Sequence[int]) -> float:
    """Cylinder measure under the Markov chain of the average matrix."""
    w = _check_word(spec, word)
    if not w:
        return 1.0
    A = spec.average_matrix
    p = float(spec.stationary[w[0]])
    for a, b in zip(w[:-1], w[1:]):
        p *= float(A[a, b])
    return p


def periodic_word(period: Sequence[int], length: int) -> List[int]:
    period = list(period)
    if not period:
        raise ValueError("empty period")
    return [period[i % len(period)] for i in range(length)]


def minimal_period(period: Sequence[int]) -> int:
    p = list(period)
    for d in range(1, len(p) + 1):
        if len(p) % d == 0 and p == p[:d] * (len(p) // d):
            return d
    return len(p)


def subshift_theta(spec: SubshiftSpec, zeta_period: Sequence[int], tol: float = 1e-8, max_steps: int = 1000) -> float:
    """Extremal index at the periodic point with repeating block ``zeta_period``.

    Degenerate driver: ``1 - prod_i A[zeta_i, zeta_{i+1}]`` over one period.
    Otherwise the ratio ``1 - mu(C_{n+p}) / mu(C_n)`` under the averaged
    measure is iterated in ``n`` until it settles.
    """
    _check_word(spec, zeta_period)
    p = minimal_period(zeta_period)
    z = list(zeta_period)[:p]
    if spec.degenerate:
        A = spec.matrices[0]
        prod = 1.0
        for i in range(p):
            prod *= float(A[z[i], z[(i + 1) % p]])
        return 1.0 - prod
    prev = None
    for k in range(1, max_steps + 1):
        n = k * p
        word = periodic_word(z, n + p + 1)
        r = 1.0 - marginal_cylinder_measure(spec, word[: n + p]) / marginal_cylinder_measure(spec, word[:n])
        if prev is not None and abs(r - prev) <= tol * abs(r):
            return r
        prev = r
    raise ArithmeticError(f"cylinder ratio did not settle within {max_steps} periods (last value {prev})")


class QuenchedResult(NamedTuple):
    P_hat: float
    se: float
    ci_low: float
    ci_high: float
    target: float
    theta: float
    w_n: int
    cylinder_measure: float
    replicates: int
    omega_seed: int

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2

    def to_dict(self) -> dict:
        return {
            "P_hat": self.P_hat,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "target": self.target,
            "theta": self.theta,
            "w_n": self.w_n,
            "cylinder_measure": self.cylinder_measure,
            "replicates": self.replicates,
            "omega_seed": self.omega_seed,
        }


def horizon_w(spec: SubshiftSpec, word: Sequence[int], tau: float) -> int:
    """``w_n = floor(tau / mu(C_n))``."""
    return int(math.floor(tau / marginal_cylinder_measure(spec, word))) if tau > 0 else 0


def _run_chunk(real: QuenchedRealization, target: int, n: int, w: int, reps: int, rng: np.random.Generator) -> int:
    """Replicates (out of ``reps``) that never enter the target cylinder."""
    spec = real.spec
    s = spec.alphabet_size
    cums = [np.cumsum(A, axis=1)[:, :-1] for A in spec.matrices]
    cum0 = np.cumsum(real.pi0)[:-1]
    x = (rng.random(reps)[:, None] > cum0[None, :]).sum(axis=1)
    mod = s ** n
    code = x.copy()
    hit = np.zeros(reps, dtype=bool)
    if n == 1:
        hit |= code == target
    for t in range(1, w + n - 1):
        C = cums[real.omega[t - 1]]
        u = rng.random(reps)
        x = (u[:, None] > C[x]).sum(axis=1)
        code = (code * s + x) % mod
        if t >= n - 1:
            hit |= code == target
    return int(reps - hit.sum())


def quenched_evl_experiment(spec: SubshiftSpec, zeta_period: Sequence[int], n: int, tau: float, replicates: int,
                            seed: int, omega_seed: Optional[int] = None) -> QuenchedResult:
    """Estimate ``mu^omega(no visit to C_n(zeta) before time w_n)`` for one driver.

    Starting points are drawn from the sample measure by sequential
    conditional sampling along ``omega``; a rolling base-``s`` code of the
    last ``n`` symbols detects cylinder entry.

    Returns the estimate with its 95% interval and the target
    ``exp(-theta * tau)``.
    """
    if n < 1 or replicates < 1:
        raise ValueError("n and replicates must be positive")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    s = spec.alphabet_size
    if s ** n >= 2**62:
        raise ValueError("cylinder too deep for the rolling code")
    theta = subshift_theta(spec, zeta_period)
    word = periodic_word(zeta_period, n)
    mu = marginal_cylinder_measure(spec, word)
    oseed = seed if omega_seed is None else omega_seed
    if tau == 0:
        return QuenchedResult(1.0, 0.0, 1.0, 1.0, 1.0, theta, 0, mu, replicates, oseed)
    w = horizon_w(spec, word, tau)
    real = sample_omega(spec, w + n, oseed)
    target = 0
    for a in word:
        target = target * s + a
    survive = 0
    for c, start in enumerate(range(0, replicates, CHUNK)):
        reps = min(CHUNK, replicates - start)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(3, c))))
        survive += _run_chunk(real, target, n, w, reps, rng)
    p = survive / replicates
    se = math.sqrt(p * (1 - p) / replicates)
    half = Z95 * se + 0.5 / replicates
    return QuenchedResult(p, se, max(0.0, p - half), min(1.0, p + half), math.exp(-theta * tau), theta, w, mu,
                          replicates, oseed)


class Concentration(NamedTuple):
    results: List[QuenchedResult]
    sample_sd: float
    mean_half_width: float

    @property
    def ratio(self) -> float:
        return self.sample_sd / self.mean_half_width if self.mean_half_width > 0 else math.inf


def quenched_concentration(spec: SubshiftSpec, zeta_period: Sequence[int], n: int, tau: float, replicates: int,
                           n_omegas: int, seed: int) -> Concentration:
    """Repeat the quenched experiment over ``n_omegas`` independent drivers."""
    res = []
    for k in range(n_omegas):
        oseed = int(np.random.SeedSequence(int(seed), spawn_key=(4, k)).generate_state(2, np.uint32).view(np.uint64)[0])
        res.append(quenched_evl_experiment(spec, zeta_period, n, tau, replicates, seed + 1 + k, omega_seed=oseed))
    ps = np.array([r.P_hat for r in res])
    sd = float(ps.std(ddof=1)) if len(ps) > 1 else 0.0
    return Concentration(res, sd, float(np.mean([r.half_width for r in res])))


class PsiProfile(NamedTuple):
    kappa: np.ndarray
    psi: np.ndarray
    rate: Optional[float]
    floor: float


def _psi_from_joint(joint: np.ndarray, p0: np.ndarray, pk: np.ndarray) -> float:
    prod = np.outer(p0, pk)
    mask = prod > 0
    return float(np.max(np.abs(joint[mask] - prod[mask]) / prod[mask]))


def cylinder_psi(spec: SubshiftSpec, kappas: Sequence[int], sample_length: Optional[int] = None,
                 seed: int = 0) -> PsiProfile:
    """``psi(kappa) = max_{a,b} |P(x_0=a, x_k=b) - P(x_0=a) P(x_k=b)| / (P(x_0=a) P(x_k=b))``.

    With ``sample_length`` the probabilities are estimated from one sample
    path of the averaged chain; otherwise they are exact.  The decay rate is
    fitted log-linearly over values above the sampling floor.
    """
    A = spec.average_matrix
    pi = spec.stationary
    ks = np.asarray(list(kappas), dtype=np.int64)
    out = np.empty(len(ks))
    floor = 0.0
    if sample_length is None:
        for j, k in enumerate(ks):
            joint = pi[:, None] * np.linalg.matrix_power(A, int(k))
            out[j] = _psi_from_joint(joint, pi, pi)
    else:
        rng = auxiliary_rng(seed, 5)
        cum = np.cumsum(A, axis=1)[:, :-1]
        u = rng.random(sample_length)
        x = np.empty(sample_length, dtype=np.int64)
        x[0] = int((u[0] > np.cumsum(pi)[:-1]).sum())
        for t in range(1, sample_length):
            x[t] = int((u[t] > cum[x[t - 1]]).sum())
        s = spec.alphabet_size
        freq = np.bincount(x, minlength=s) / sample_length
        for j, k in enumerate(ks):
            pairs = x[:-k] * s + x[k:]
            joint = np.bincount(pairs, minlength=s * s).reshape(s, s) / len(pairs)
            out[j] = _psi_from_joint(joint, freq, freq)
        floor = 3.0 / math.sqrt(sample_length * float(pi.min()) ** 2)
    mask = out > floor
    rate = None
    if mask.sum() >= 2:
        slope, _ = np.polyfit(ks[mask].astype(float), np.log(out[mask]), 1)
        rate = float(math.exp(slope))
    return PsiProfile(ks, out, rate, floor)


def second_eigenvalue_modulus(A: np.ndarray) -> float:
    ev = np.sort(np.abs(np.linalg.eigvals(A)))[::-1]
    return float(ev[1]) if len(ev) > 1 else 0.0
