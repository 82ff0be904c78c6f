"""Unequal-size blocks of indices and exact checks on finite event spaces.

Blocks are built greedily so that each carries about the same expected
number of exceedances; the last few indices of every block are set aside as
a gap.  All arithmetic is done on Fractions so that ties in the defining
inequalities behave exactly as written (``0.1 + 0.2 <= 0.3`` holds here).

The second half of the module works on finite probability spaces given as
explicit outcome lists.  An outcome is a bit pattern (bit ``i`` set when
event ``B_i`` occurs) with a rational probability, and every probability in
the inequalities below is computed exactly by summing over outcomes.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

from ._reals import float_to_fraction


class BlockConstructionError(ValueError):
    """The requested partition cannot be built."""


def _to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, str)):
        return Fraction(v)
    return float_to_fraction(float(v))


@dataclass(frozen=True)
class BlockPartition:
    """Blocks ``[L_{i-1}, L_i)`` of sizes ``l_i``; the last ``t_i`` indices of each are its gap.

    Attributes
    ----------
    n : int
        Number of indices (length of ``tail_probs``).
    k_n, t_star : int
    offset : int
        First index used, ``L_0``.
    tail_probs : tuple of Fraction
    block_sizes, gap_sizes : tuple of int
    cumulative : tuple of int
        ``L_0, L_1, ..., L_k``.
    epsilon_n, F_star, F_bar_max : Fraction
    """

    n: int
    k_n: int
    t_star: int
    offset: int
    tail_probs: Tuple[Fraction, ...]
    block_sizes: Tuple[int, ...]
    gap_sizes: Tuple[int, ...]
    cumulative: Tuple[int, ...]
    epsilon_n: Fraction
    F_star: Fraction
    F_bar_max: Fraction

    @property
    def effective_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def max_block_size(self) -> int:
        return max(self.block_sizes)

    def block_ranges(self) -> List[range]:
        L = self.cumulative
        return [range(L[i], L[i + 1]) for i in range(self.effective_blocks)]

    def working_ranges(self) -> List[range]:
        """Blocks with their gaps removed."""
        L = self.cumulative
        return [range(L[i], L[i + 1] - t) for i, t in enumerate(self.gap_sizes)]

    def gap_ranges(self) -> List[range]:
        L = self.cumulative
        return [range(L[i + 1] - t, L[i + 1]) for i, t in enumerate(self.gap_sizes)]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k_n": self.k_n,
            "t_star": self.t_star,
            "offset": self.offset,
            "block_sizes": list(self.block_sizes),
            "gap_sizes": list(self.gap_sizes),
            "cumulative": list(self.cumulative),
            "epsilon_n": float(self.epsilon_n),
            "F_star": float(self.F_star),
            "F_bar_max": float(self.F_bar_max),
        }

    def dump_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_blocks(tail_probs: Sequence, k_n: int, t_star: int, offset: int = 0) -> BlockPartition:
    """Greedy block construction.

    ``l_i`` is the largest length whose tail sum stays within ``F*/k_n``;
    ``t_i`` is the largest number of final indices of block ``i`` whose tail
    sum stays within ``epsilon * F*/k_n``, where
    ``epsilon = (t_star + 1) * F_bar_max * k_n / F*``.  Sums run over indices
    ``offset .. n-1``.

    Raises
    ------
    BlockConstructionError
        If all tails vanish, if a single tail exceeds ``F*/k_n`` (some
        ``l_i`` would be 0), or if a gap would swallow its whole block.
    """
    if k_n < 1:
        raise BlockConstructionError("k_n must be at least 1")
    if t_star < 0:
        raise BlockConstructionError("t_star must be non-negative")
    tails = tuple(_to_fraction(v) for v in tail_probs)
    n = len(tails)
    if not 0 <= offset < n:
        raise BlockConstructionError(f"offset {offset} outside [0, {n})")
    if any(not 0 <= v < 1 for v in tails):
        raise BlockConstructionError("tail probabilities must lie in [0, 1)")
    used = tails[offset:]
    F_star = sum(used, Fraction(0))
    if F_star == 0:
        raise BlockConstructionError("all tail probabilities vanish (F* = 0)")
    F_max = max(used)
    sizes: List[int] = []
    pos = offset
    for i in range(k_n):
        if pos >= n:
            break
        acc = Fraction(0)
        length = 0
        # compare k*sum with F* to stay in integers-over-common-denominators
        while pos + length < n and k_n * (acc + tails[pos + length]) <= F_star:
            acc += tails[pos + length]
            length += 1
        if length == 0:
            raise BlockConstructionError(
                f"block {i + 1} is empty: tail {float(tails[pos]):.3g} at index {pos} exceeds F*/k_n = {float(F_star / k_n):.3g}; reduce k_n"
            )
        sizes.append(length)
        pos += length
    eps = (t_star + 1) * F_max * k_n / F_star
    budget = (t_star + 1) * F_max           # = eps * F*/k_n
    cum = [offset]
    for s in sizes:
        cum.append(cum[-1] + s)
    gaps: List[int] = []
    for i, s in enumerate(sizes):
        end = cum[i + 1]
        acc = Fraction(0)
        t = 0
        while t < s and acc + tails[end - 1 - t] <= budget:
            acc += tails[end - 1 - t]
            t += 1
        if t >= s:
            raise BlockConstructionError(
                f"gap of block {i + 1} covers the whole block (t_i = l_i = {s}); epsilon = {float(eps):.3g} is too large"
            )
        gaps.append(t)
    return BlockPartition(n, k_n, t_star, offset, tails, tuple(sizes), tuple(gaps), tuple(cum), eps, F_star, F_max)


def audit_partition(bp: BlockPartition) -> List[str]:
    """Names of the partition invariants that fail (empty when all hold).

    Checks the two-sided block-mass estimate (the lower side only for blocks
    not cut short by the end of the index range), ``t_star <= t_i < l_i``,
    ``L_k <= n``, the total gap mass ``<= epsilon * F*`` and the leftover
    mass past ``L_k`` ``<= k_n * F_bar_max``.
    """
    bad = []
    share = bp.F_star / bp.k_n
    tails = bp.tail_probs
    L = bp.cumulative
    for i, (lo, hi) in enumerate(zip(L[:-1], L[1:])):
        mass = sum(tails[lo:hi], Fraction(0))
        if mass > share:
            bad.append(f"block {i}: mass above F*/k_n")
        if hi < bp.n and mass < share - bp.F_bar_max:
            bad.append(f"block {i}: mass below F*/k_n - F_bar_max")
        if not bp.t_star <= bp.gap_sizes[i] < bp.block_sizes[i]:
            bad.append(f"block {i}: t_star <= t_i < l_i fails")
    if L[-1] > bp.n:
        bad.append("L_k exceeds n")
    gap_mass = sum((sum(tails[r.start:r.stop], Fraction(0)) for r in bp.gap_ranges()), Fraction(0))
    if gap_mass > bp.epsilon_n * bp.F_star:
        bad.append("gap mass above epsilon * F*")
    if len(bp.block_sizes) == bp.k_n and sum(tails[L[-1]:], Fraction(0)) > bp.k_n * bp.F_bar_max:
        bad.append("leftover mass above k_n * F_bar_max")
    return bad


def random_tail_array(rng: random.Random, n_max: int = 400, denom: int = 10**6) -> List[Fraction]:
    """Random rational tails: a smooth profile times noise, with occasional zeros."""
    n = rng.randint(5, n_max)
    scale = Fraction(rng.randint(1, 50), rng.randint(n, 20 * n))
    out = []
    for _ in range(n):
        if rng.random() < 0.05:
            out.append(Fraction(0))
        else:
            out.append(min(scale * Fraction(rng.randint(1, denom), denom), Fraction(999, 1000)))
    return out


# --- finite event spaces -------------------------------------------------


@dataclass(frozen=True)
class FiniteEventSpace:
    """Events ``B_0 .. B_{n-1}`` on a finite probability space.

    ``outcomes`` lists ``(pattern, probability)`` pairs; bit ``i`` of
    ``pattern`` is set when ``B_i`` occurs.  Events with index ``>= n`` are
    empty.
    """

    n: int
    outcomes: Tuple[Tuple[int, Fraction], ...]

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        total = Fraction(0)
        for pat, pr in self.outcomes:
            if pr < 0:
                raise ValueError("negative probability")
            if pat >> self.n:
                raise ValueError(f"pattern {pat:b} has bits beyond n = {self.n}")
            total += pr
        if total != 1:
            raise ValueError(f"probabilities sum to {total}, not 1")

    @classmethod
    def iid(cls, n: int, p) -> "FiniteEventSpace":
        p = _to_fraction(p)
        out = []
        for pat in range(1 << n):
            k = bin(pat).count("1")
            out.append((pat, p**k * (1 - p) ** (n - k)))
        return cls(n, tuple(out))

    @classmethod
    def from_patterns(cls, n: int, patterns: Iterable[Sequence[int]], probs: Iterable) -> "FiniteEventSpace":
        out = []
        for bits, pr in zip(patterns, probs):
            pat = 0
            for i, b in enumerate(bits):
                if b:
                    pat |= 1 << i
            out.append((pat, _to_fraction(pr)))
        return cls(n, tuple(out))

    @classmethod
    def random(cls, rng: random.Random, n: int, max_outcomes: int = 12, density: Optional[float] = None) -> "FiniteEventSpace":
        """A random space with a few outcomes and random rational weights."""
        k = rng.randint(1, max_outcomes)
        d = rng.random() if density is None else density
        weights = [rng.randint(1, 20) for _ in range(k)]
        tot = sum(weights)
        out = []
        for w in weights:
            pat = 0
            for i in range(n):
                if rng.random() < d:
                    pat |= 1 << i
            out.append((pat, Fraction(w, tot)))
        return cls(n, tuple(out))

    def prob(self, predicate) -> Fraction:
        return sum((pr for pat, pr in self.outcomes if predicate(pat)), Fraction(0))


def escape_pattern(pattern: int, n: int, q: int) -> int:
    """Bit pattern of ``A_r = B_r minus (B_{r+1} ∪ ... ∪ B_{r+q})`` for ``r < n``."""
    out = 0
    for r in range(n):
        if pattern >> r & 1 and not (pattern >> (r + 1)) & ((1 << q) - 1):
            out |= 1 << r
    return out


def _window(s: int, length: int) -> int:
    return ((1 << length) - 1) << s if length > 0 else 0


def _no_event(pattern: int, s: int, length: int) -> bool:
    """The event ``W_{s,length}``: none of indices ``s .. s+length-1`` occurs."""
    return not pattern & _window(s, length)


class InequalityCheck(NamedTuple):
    lhs: Fraction
    rhs: Fraction
    holds: bool


def annuli_difference_check(space: FiniteEventSpace, q: int, window: Optional[int] = None) -> InequalityCheck:
    """Compare ``P(no B in [0,n))`` with ``P(no A in [0,n))`` exactly.

    ``lhs = |P(W_{0,n}(B)) - P(W_{0,n}(A))|`` and
    ``rhs = sum_{j=1..q} P(W_{0,n}(A) ∩ (B_{n-j} minus A_{n-j}))``, where
    ``A_r = B_r minus (B_{r+1} ∪ ... ∪ B_{r+q})``.

    ``window`` is ``n`` and defaults to ``space.n``.  Events of the space past
    the window still enter the definition of the ``A_r`` near its end; with no
    such events the two sides are both 0.
    """
    n = space.n if window is None else int(window)
    if not 0 <= n <= space.n:
        raise ValueError("window must lie in [0, space.n]")
    if not 0 <= q < max(n, 1):
        raise ValueError("need 0 <= q < n")
    pw_b = Fraction(0)
    pw_a = Fraction(0)
    rhs = Fraction(0)
    for pat, pr in space.outcomes:
        a = escape_pattern(pat, space.n, q)
        if _no_event(pat, 0, n):
            pw_b += pr
        if _no_event(a, 0, n):
            pw_a += pr
            for j in range(1, q + 1):
                i = n - j
                if i >= 0 and pat >> i & 1 and not a >> i & 1:
                    rhs += pr
    lhs = abs(pw_b - pw_a)
    return InequalityCheck(lhs, rhs, lhs <= rhs)


class GapLemmaResult(NamedTuple):
    gap: InequalityCheck
    inductive: InequalityCheck


def _escape_space(space: FiniteEventSpace, q: Optional[int]) -> List[Tuple[int, Fraction]]:
    if q is None:
        return list(space.outcomes)
    return [(escape_pattern(p, space.n, q), pr) for p, pr in space.outcomes]


def gap_lemma_check(space: FiniteEventSpace, a: int, s: int, t: int, m: int, q: Optional[int] = None) -> GapLemmaResult:
    """Check the time-gap and inductive-step inequalities exactly.

    The events ``A_i`` are the space's ``B_i`` themselves, or the escape
    events built from them when ``q`` is given.

    Time gap::

        |P(W_{a,s+t+m}) - P(W_{a,s} ∩ W_{a+s+t,m})| <= sum_{j=s}^{s+t-1} P(A_{a+j})

    Inductive step::

        |P(W_{a,s} ∩ W') - P(W')(1 - sum_{j<s} P(A_{a+j}))|
            <= |sum_{j<s} P(A_{a+j}) P(W') - sum_{j<s} P(A_{a+j} ∩ W')|
               + sum_{j<i<s} P(A_{a+i} ∩ A_{a+j})

    with ``W' = W_{a+s+t,m}``.
    """
    if min(a, s, t, m) < 0:
        raise ValueError("a, s, t, m must be non-negative")
    outs = _escape_space(space, q)

    def P(pred) -> Fraction:
        return sum((pr for p, pr in outs if pred(p)), Fraction(0))

    def PA(i: int) -> Fraction:
        return P(lambda p: p >> i & 1)

    w_all = P(lambda p: _no_event(p, a, s + t + m))
    w_split = P(lambda p: _no_event(p, a, s) and _no_event(p, a + s + t, m))
    gap_lhs = abs(w_all - w_split)
    gap_rhs = sum((PA(a + j) for j in range(s, s + t)), Fraction(0))

    w_far = P(lambda p: _no_event(p, a + s + t, m))
    sum_a = sum((PA(a + j) for j in range(s)), Fraction(0))
    ind_lhs = abs(w_split - w_far * (1 - sum_a))
    joint = sum((P(lambda p, j=j: p >> (a + j) & 1 and _no_event(p, a + s + t, m)) for j in range(s)), Fraction(0))
    pairs = Fraction(0)
    for j in range(s):
        for i in range(j + 1, s):
            pairs += P(lambda p, i=i, j=j: p >> (a + i) & 1 and p >> (a + j) & 1)
    ind_rhs = abs(sum_a * w_far - joint) + pairs
    return GapLemmaResult(
        InequalityCheck(gap_lhs, gap_rhs, gap_lhs <= gap_rhs),
        InequalityCheck(ind_lhs, ind_rhs, ind_lhs <= ind_rhs),
    )


class SpaceAudit(NamedTuple):
    spaces: int
    annuli_violations: int
    annuli_nontrivial: int
    gap_violations: int
    inductive_violations: int


def random_space_audit(rng: random.Random, count: int, n_max: int = 12, q_max: int = 3) -> SpaceAudit:
    """Check the annuli, time-gap and inductive-step inequalities on random spaces.

    Each space carries ``n + q`` events so that escapes near the end of the
    window ``[0, n)`` see events beyond it.  The gap and inductive checks
    use the escape events of the same space at random ``a, s, t, m``.
    """
    ann = nontriv = gap = ind = 0
    for _ in range(count):
        n = rng.randint(1, n_max)
        q = rng.randint(0, min(q_max, n - 1))
        space = FiniteEventSpace.random(rng, n + q)
        chk = annuli_difference_check(space, q, window=n)
        ann += not chk.holds
        nontriv += chk.rhs > 0
        a = rng.randint(0, n - 1)
        s = rng.randint(0, n - a)
        t = rng.randint(0, n - a - s)
        m = rng.randint(0, n - a - s - t)
        res = gap_lemma_check(space, a, s, t, m, q=q)
        gap += not res.gap.holds
        ind += not res.inductive.holds
    return SpaceAudit(count, ann, nontriv, gap, ind)
