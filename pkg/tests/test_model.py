import itertools
import random

import pytest

from larksim.model import (BOTTOM, REPLICATED, ClusterView, LogicalClock, PartitionState,
                           RecordVersion, Roster, lc_compare)


def lc(a, b):
    return LogicalClock(a, b)


def test_higher_regime_dominates():
    assert lc_compare(lc(2, 0), lc(1, 9)) == 1
    assert lc_compare(lc(1, 9), lc(2, 0)) == -1


def test_equal_clocks_compare_equal():
    assert lc_compare(lc(2, 3), lc(2, 3)) == 0


def _brute_sorted(items):
    # try every ordering and keep the one where each neighbour pair is non-decreasing
    for perm in itertools.permutations(items):
        if all(lc_compare(a, b) <= 0 for a, b in zip(perm, perm[1:])):
            return list(perm)
    raise AssertionError("no ordering found")


def test_sort_matches_permutation_oracle():
    items = [lc(1, 2), lc(2, 0), lc(1, 5)]
    assert sorted(items) == _brute_sorted(items) == [lc(1, 2), lc(1, 5), lc(2, 0)]


def test_lc_compare_is_a_total_order():
    rng = random.Random(7)
    pts = [lc(rng.randint(0, 3), rng.randint(0, 3)) for _ in range(60)]
    for a, b in itertools.product(pts, repeat=2):
        assert lc_compare(a, b) == -lc_compare(b, a)
        assert (lc_compare(a, b) == 0) == (a == b)
    for a, b, c in itertools.islice(itertools.product(pts, repeat=3), 20000):
        if lc_compare(a, b) <= 0 and lc_compare(b, c) <= 0:
            assert lc_compare(a, c) <= 0


def test_vn_restarts_when_regime_advances():
    assert lc(3, 7).next(3) == lc(3, 8)
    assert lc(3, 7).next(5) == lc(5, 0)
    assert BOTTOM.next(1) == lc(1, 0)


def test_clock_rejects_negative_parts():
    with pytest.raises(ValueError):
        lc(-1, 0)
    with pytest.raises(ValueError):
        lc(0, 1 << 64)


def test_record_parent_must_precede():
    RecordVersion("k", "v", lc(2, 0), parent_lc=lc(1, 4))
    with pytest.raises(ValueError):
        RecordVersion("k", "v", lc(1, 0), parent_lc=lc(1, 0))


def test_status_moves_to_replicated_and_retag_resets_it():
    v = RecordVersion("k", "v", lc(1, 0))
    assert not v.replicated
    r = v.mark_replicated()
    assert r.status == REPLICATED
    again = r.retagged(lc(2, 0))
    assert not again.replicated and again.value == "v" and again.lc == lc(2, 0)


def test_roster_invariants():
    assert Roster((1, 2, 3), 2).size == 3
    with pytest.raises(ValueError):
        Roster((1, 2), 3)
    with pytest.raises(ValueError):
        Roster((1, 1, 2), 1)
    with pytest.raises(ValueError):
        Roster((1, 2), 0)


def test_cluster_view_needs_members():
    with pytest.raises(ValueError):
        ClusterView(frozenset(), 1)


def test_partition_state_check():
    PartitionState(pr=2, lr=1, leader=1, nodes_in_cluster=frozenset({1}), available=True).check(2)
    with pytest.raises(AssertionError):
        PartitionState(pr=3).check(2)
    with pytest.raises(AssertionError):
        PartitionState(pr=1, lr=2).check(3)
    with pytest.raises(AssertionError):
        PartitionState(pr=1, leader=9, nodes_in_cluster=frozenset({1}), available=True).check(1)
