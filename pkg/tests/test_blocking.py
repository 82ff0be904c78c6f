import json
import random
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from seqevl.blocking import (BlockConstructionError, FiniteEventSpace, annuli_difference_check, audit_partition,
                             build_blocks, escape_pattern, gap_lemma_check, random_space_audit, random_tail_array)


# --- block construction ------------------------------------------------------

def test_constant_tail_example():
    bp = build_blocks(["0.001"] * 1000, 10, 5)
    assert bp.block_sizes == (100,) * 10
    assert bp.epsilon_n == Fraction(6, 100)
    assert bp.gap_sizes == (6,) * 10
    assert bp.cumulative[-1] == 1000


def test_hand_enumerated_example():
    bp = build_blocks([".3", ".1", ".1", ".1", ".2", ".2"], 2, 0)
    assert bp.block_sizes == (3, 3)
    assert bp.epsilon_n == Fraction(3, 5)
    assert bp.gap_sizes[0] == 2


def test_errors():
    with pytest.raises(BlockConstructionError):
        build_blocks([0, 0, 0], 2, 0)
    with pytest.raises(BlockConstructionError, match="reduce k_n"):
        build_blocks(["0.5", "0.01", "0.01"], 3, 0)


def test_offset_starts_at_burn_in():
    bp = build_blocks(["0.001"] * 1000, 10, 5, offset=100)
    assert bp.cumulative[0] == 100
    assert bp.F_star == Fraction(9, 10)
    assert not audit_partition(bp)


def test_max_block_size_for_constant_tails():
    for n, k in ((1000, 10), (5000, 18), (997, 13)):
        bp = build_blocks([Fraction(1, 2 * n)] * n, k, 3)
        assert n / k - 2 <= bp.max_block_size <= n / k


def test_random_tail_arrays_satisfy_invariants():
    rng = random.Random(0)
    built = 0
    for _ in range(1000):
        tails = random_tail_array(rng)
        try:
            bp = build_blocks(tails, rng.randint(1, 20), rng.randint(0, 8), rng.randint(0, len(tails) // 4))
        except BlockConstructionError:
            continue
        built += 1
        assert audit_partition(bp) == []
    assert built > 500


@settings(max_examples=200)
@given(st.lists(st.fractions(0, Fraction(1, 20), max_denominator=1000), min_size=3, max_size=120),
       st.integers(1, 10), st.integers(0, 4))
def test_block_invariants_property(tails, k, ts):
    try:
        bp = build_blocks(tails, k, ts)
    except BlockConstructionError:
        return
    assert audit_partition(bp) == []


def test_partition_json_dump(tmp_path):
    bp = build_blocks(["0.001"] * 100, 4, 1)
    bp.dump_json(tmp_path / "b.json")
    d = json.loads((tmp_path / "b.json").read_text())
    assert d["block_sizes"] == list(bp.block_sizes) and d["epsilon_n"] == float(bp.epsilon_n)


# --- set algebra: independent oracle built from explicit outcome sets -------

def _oracle_annuli(space, q, n):
    """Both sides from set operations on outcome indices, straight from the definitions."""
    outs = list(space.outcomes)
    omega = set(range(len(outs)))
    B = [{w for w in omega if outs[w][0] >> i & 1} for i in range(space.n)] + [set()] * (q + 1)
    A = [B[r] - set().union(*B[r + 1:r + q + 1]) for r in range(space.n)]
    P = lambda S: sum((outs[w][1] for w in S), Fraction(0))
    WB = omega - set().union(*B[:n])
    WA = omega - set().union(*A[:n])
    rhs = sum((P(WA & (B[n - j] - A[n - j])) for j in range(1, q + 1) if n - j >= 0), Fraction(0))
    return abs(P(WB) - P(WA)), rhs


def test_annuli_against_set_oracle():
    rng = random.Random(9)
    for _ in range(500):
        n = rng.randint(1, 8)
        q = rng.randint(0, min(3, n - 1))
        space = FiniteEventSpace.random(rng, n + q)
        chk = annuli_difference_check(space, q, window=n)
        assert (chk.lhs, chk.rhs) == _oracle_annuli(space, q, n)
        assert chk.holds


def test_annuli_examples():
    empty = FiniteEventSpace(3, ((0, Fraction(1)),))
    assert annuli_difference_check(empty, 1) == (0, 0, True)
    fair = FiniteEventSpace.iid(3, "1/2")
    assert len(fair.outcomes) == 8
    assert annuli_difference_check(fair, 1).holds
    # deterministic event at n-1 with q=1: lhs = rhs
    det = FiniteEventSpace.from_patterns(4, [[0, 0, 1, 1]], [1])
    chk = annuli_difference_check(det, 1, window=3)
    assert chk.lhs == chk.rhs == 1


def test_escape_pattern_definition():
    # B = {0, 1, 3}, q = 1 -> A = {1, 3}
    assert escape_pattern(0b1011, 4, 1) == 0b1010
    assert escape_pattern(0b1011, 4, 0) == 0b1011


def _oracle_gap(space, a, s, t, m):
    def P(pred):
        return sum((pr for pat, pr in space.outcomes if pred(pat)), Fraction(0))
    none = lambda pat, lo, ln: all(not pat >> i & 1 for i in range(lo, lo + ln))
    lhs = abs(P(lambda p: none(p, a, s + t + m)) - P(lambda p: none(p, a, s) and none(p, a + s + t, m)))
    rhs = sum(P(lambda p, j=j: p >> (a + j) & 1) for j in range(s, s + t))
    return lhs, rhs


def test_gap_lemma_examples():
    space = FiniteEventSpace.iid(8, Fraction(1, 4))
    res = gap_lemma_check(space, 0, 3, 2, 3)
    assert (res.gap.lhs, res.gap.rhs) == _oracle_gap(space, 0, 3, 2, 3)
    assert res.gap.lhs == Fraction(5103, 65536) and res.gap.rhs == Fraction(1, 2)
    assert res.inductive.lhs == Fraction(297, 4096) and res.inductive.rhs == Fraction(3, 16)
    assert gap_lemma_check(space, 1, 3, 0, 2).gap.lhs == 0
    never = FiniteEventSpace(6, ((0, Fraction(1)),))
    r = gap_lemma_check(never, 0, 2, 2, 2)
    assert r.gap == (0, 0, True) and r.inductive.holds


def test_gap_lemma_against_oracle_on_random_spaces():
    rng = random.Random(3)
    for _ in range(300):
        space = FiniteEventSpace.random(rng, rng.randint(2, 9))
        n = space.n
        a = rng.randint(0, n - 1)
        s, t = rng.randint(0, n - a), 0
        t = rng.randint(0, n - a - s)
        m = rng.randint(0, n - a - s - t)
        res = gap_lemma_check(space, a, s, t, m)
        assert (res.gap.lhs, res.gap.rhs) == _oracle_gap(space, a, s, t, m)
        assert res.gap.holds and res.inductive.holds


def test_random_space_audit_has_no_violations():
    audit = random_space_audit(random.Random(1), 2000)
    assert audit.annuli_violations == audit.gap_violations == audit.inductive_violations == 0
    assert audit.annuli_nontrivial > 500


def test_space_validation():
    with pytest.raises(ValueError):
        FiniteEventSpace(2, ((0, Fraction(1, 2)),))
    with pytest.raises(ValueError):
        FiniteEventSpace(2, ((0b100, Fraction(1)),))
