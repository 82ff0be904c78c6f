"""Transfer operators of β-maps: pointwise, composed, and on the Ulam grid.

Densities on the grid are arrays of bin values (density, not mass), so the
uniform density is ``np.ones(n_bins)`` and integrals are ``f.sum() / n_bins``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from ._reals import parse_real
from .circle_maps import MapSequenceSpec, beta_sequence
from .invariant_measure import parry_density, ulam_discretize


def transfer_pointwise(beta, f: Callable, x):
    """``(P f)(x) = (1/beta) * sum_k f((x + k)/beta)`` over preimages in [0, 1).

    Exact when ``beta`` and ``x`` are Fractions and ``f`` is exact.
    """
    b = parse_real(beta)
    if isinstance(b, Fraction) and isinstance(x, Fraction):
        total = Fraction(0)
        for k in range(math.ceil(b)):
            y = (x + k) / b
            if y < 1:
                total += f(y)
        return total / b
    bf = float(b)
    x = float(x)
    if not 0 <= x < 1:
        raise ValueError("x must lie in [0, 1)")
    total = 0.0
    for k in range(math.ceil(bf)):
        y = (x + k) / bf
        if y < 1:
            total += f(y)
    return total / bf


def grid_indicator(a: float, b: float, n_bins: int) -> np.ndarray:
    """Fraction of each bin covered by ``[a, b)``; the bin average of its indicator."""
    if not 0 <= a <= b <= 1:
        raise ValueError("need 0 <= a <= b <= 1")
    edges = np.arange(n_bins + 1) / n_bins
    lo = np.maximum(edges[:-1], a)
    hi = np.minimum(edges[1:], b)
    return np.clip(hi - lo, 0.0, None) * n_bins


def _slopes(spec: MapSequenceSpec, first: int, last: int) -> np.ndarray:
    """Float slopes ``beta_first .. beta_last`` (1-based, inclusive)."""
    return beta_sequence(spec, last)[first - 1:]


def _push(spec_slope: float, n_bins: int, f: np.ndarray) -> np.ndarray:
    return ulam_discretize(spec_slope, n_bins).push(f)


@dataclass
class TransferComposition:
    """``Pi_n = P_n ∘ ... ∘ P_1`` for a map sequence.

    ``mode="ulam"`` works on grid functions; ``mode="pointwise"`` evaluates
    ``(Pi_n f)(x)`` through the explicit preimage recursion, which branches
    ``ceil(beta)`` ways per level and is meant for small depths.
    """

    spec: MapSequenceSpec
    mode: str = "ulam"
    depth: int = 0
    n_bins: int = 1024

    def __post_init__(self):
        if self.mode not in ("ulam", "pointwise"):
            raise ValueError("mode must be 'ulam' or 'pointwise'")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")

    def apply(self, f: np.ndarray) -> np.ndarray:
        if self.mode != "ulam":
            raise ValueError("apply works on grid functions; use evaluate in pointwise mode")
        return compose_transfer_ulam(self.spec, self.depth, self.n_bins, f)

    def evaluate(self, f: Callable, x):
        if self.mode != "pointwise":
            raise ValueError("evaluate is the pointwise mode")
        exact = isinstance(x, Fraction)

        # Pi_n f = P_n(P_{n-1}(...P_1 f)); unfold from the outside in
        def compose(k: int) -> Callable:
            if k == 0:
                return f
            inner = compose(k - 1)
            b = self.spec.exact_beta(k) if exact else None
            beta = b if b is not None else float(_slopes(self.spec, k, k)[0])
            return lambda y: transfer_pointwise(beta, inner, y)

        return compose(self.depth)(x)


def compose_transfer_ulam(spec: MapSequenceSpec, n: int, n_bins: int, f=None) -> np.ndarray:
    """Apply the Ulam matrices of ``T_1, ..., T_n`` in order to ``f`` (default 1)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    g = np.ones(n_bins) if f is None else np.array(f, dtype=float)
    if n == 0:
        return g
    for b in _slopes(spec, 1, n):
        g = _push(float(b), n_bins, g)
    return g


def loss_of_memory_curve(spec: MapSequenceSpec, ns: Sequence[int], n_bins: int) -> np.ndarray:
    """``||Pi_n(1) - h||_1`` for each requested ``n`` in one sweep."""
    ns = [int(v) for v in ns]
    if any(v < 0 for v in ns):
        raise ValueError("depths must be non-negative")
    h = parry_density(spec.limit_beta).bin_averages(n_bins)
    want = {v: None for v in ns}
    top = max(ns) if ns else 0
    slopes = _slopes(spec, 1, top) if top else []
    g = np.ones(n_bins)
    if 0 in want:
        want[0] = float(np.abs(g - h).sum() / n_bins)
    for k, b in enumerate(slopes, start=1):
        g = _push(float(b), n_bins, g)
        if k in want:
            want[k] = float(np.abs(g - h).sum() / n_bins)
    return np.array([want[v] for v in ns])


def loss_of_memory_error(spec: MapSequenceSpec, n: int, n_bins: int) -> float:
    """``||Pi_n(1) - h||_1`` on the Ulam grid, ``h`` the limit map's density."""
    return float(loss_of_memory_curve(spec, [n], n_bins)[0])


@dataclass
class DecayEstimate:
    """Correlation curve ``DC(t)`` with its log-linear fit.

    ``rate`` and ``prefactor`` are ``None`` when fewer than two points clear
    the noise floor (the rate is then below resolution).
    """

    t: np.ndarray
    dc: np.ndarray
    noise_floor: float
    rate: Optional[float]
    prefactor: Optional[float]
    fit_mask: np.ndarray
    n_bins: int
    i: int

    @property
    def resolved(self) -> bool:
        return self.rate is not None

    def fit_residual_decades(self) -> np.ndarray:
        """``|log10 DC(t) - log10(B * lambda**t)|`` over the fitted points."""
        if not self.resolved:
            return np.zeros(0)
        m = self.fit_mask
        pred = math.log10(self.prefactor) + self.t[m] * math.log10(self.rate)
        return np.abs(np.log10(self.dc[m]) - pred)

    def to_dict(self) -> dict:
        return {
            "i": self.i,
            "n_bins": self.n_bins,
            "noise_floor": self.noise_floor,
            "rate": self.rate if self.resolved else "below resolution",
            "prefactor": self.prefactor,
            "fit_points": [int(v) for v in self.t[self.fit_mask]],
            "t": [int(v) for v in self.t],
            "dc": [float(v) for v in self.dc],
        }


def fit_exponential_decay(t: np.ndarray, dc: np.ndarray, floor: float):
    """Least-squares fit of ``log DC = log B + t log lambda`` above ``floor``."""
    mask = dc > floor
    if mask.sum() < 2:
        return None, None, mask
    slope, icpt = np.polyfit(t[mask].astype(float), np.log(dc[mask]), 1)
    return float(math.exp(slope)), float(math.exp(icpt)), mask


def correlation_decay_estimate(spec: MapSequenceSpec, phi_interval, psi_interval, i: int,
                               t_max: int, n_bins: int) -> DecayEstimate:
    """Correlations of interval indicators along the sequential system.

    Computes ``|∫ phi∘T_i · psi∘T_{i+t} dm - ∫ phi∘T_i dm · ∫ psi∘T_{i+t} dm|``
    for ``t = 1 .. t_max`` by Ulam quadrature against Lebesgue measure, where
    ``T_i`` is the composition of the first ``i`` maps.  The noise floor of the
    grid is ``2 / n_bins``.
    """
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    if i < 0:
        raise ValueError("i must be non-negative")
    phi = grid_indicator(*phi_interval, n_bins)
    psi = grid_indicator(*psi_interval, n_bins)
    rho = compose_transfer_ulam(spec, i, n_bins)
    f = phi * rho
    mean_phi = f.sum() / n_bins
    slopes = _slopes(spec, i + 1, i + t_max)
    dc = np.empty(t_max)
    for t, b in enumerate(slopes, start=1):
        f = _push(float(b), n_bins, f)
        rho = _push(float(b), n_bins, rho)
        dc[t - 1] = abs(psi @ f / n_bins - mean_phi * (psi @ rho / n_bins))
    ts = np.arange(1, t_max + 1)
    floor = 2.0 / n_bins
    rate, pref, mask = fit_exponential_decay(ts, dc, floor)
    return DecayEstimate(ts, dc, floor, rate, pref, mask, n_bins, i)


def write_decay_csv(path, est: DecayEstimate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "dc", "above_floor"])
        for t, v, m in zip(est.t, est.dc, est.fit_mask):
            w.writerow([int(t), repr(float(v)), int(bool(m))])


def write_decay_fit_json(path, est: DecayEstimate) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(est.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
