import hashlib
import itertools
import random
from collections import Counter

import pytest

from larksim.model import Roster
from larksim.placement import (Placement, cluster_replicas, digest, partition_of,
                               roster_replicas, score, succession_list)


def test_digest_matches_published_vector():
    assert digest("abc") == 0x8EB208F7E05D987A9B044A8E98C6B087F15A0BFC


def test_digest_agrees_with_hashlib_when_available():
    try:
        h = hashlib.new("ripemd160")
    except ValueError:
        pytest.skip("openssl build lacks ripemd160")
    h.update(b"some key")
    assert digest(b"some key") == int.from_bytes(h.digest(), "big")


def test_empty_key_rejected():
    with pytest.raises(ValueError):
        digest(b"")


def test_digest_is_deterministic():
    assert digest("k1") == digest(b"k1")


def test_partition_of():
    assert partition_of(0, 4096) == 0
    assert partition_of(4097, 4096) == 1
    d = digest("x")
    assert partition_of(d) == d & 0xFFF


def test_partition_balance_uniform_keys():
    # 10^7 keys: at 10^6 the extreme bins of 4096 sit ~3.5 sd out and the ratio is ~1.5
    rng = random.Random(1)
    counts = [0] * 4096
    for _ in range(10_000_000):
        counts[partition_of(rng.getrandbits(160))] += 1
    assert max(counts) / min(counts) < 1.2


def test_real_digests_spread_evenly():
    n = 200_000
    counts = Counter(partition_of(digest(f"key-{i}")) for i in range(n))
    mean = n / 4096
    chi2 = sum((counts.get(p, 0) - mean) ** 2 / mean for p in range(4096))
    # 4095 degrees of freedom: mean 4095, sd ~90.5; allow 5 sd
    assert abs(chi2 - 4095) < 5 * 90.5


def _independent_order(p, members):
    # re-sort with a plain comparison, not the module's cached key
    def cmp_key(n):
        return (score(p, n), -n)
    return sorted(members, key=cmp_key, reverse=True)


def test_singleton_roster():
    assert succession_list(3, Roster((1,), 1)) == [1]


def test_replicas_are_prefix_of_independent_sort():
    roster = Roster((1, 2, 3, 4, 5), 3)
    for p in range(256):
        assert roster_replicas(p, roster) == _independent_order(p, roster.members)[:3]


def test_left_shift_on_removal():
    members = (1, 2, 3, 4, 5, 6)
    for p in range(200):
        full = succession_list(p, members)
        for gone in members:
            pos = full.index(gone)
            after = succession_list(p, [m for m in members if m != gone])
            assert after[:pos] == full[:pos]
            assert after[pos:] == full[pos + 1:]


def test_readded_node_regains_position():
    members = (1, 2, 3, 4, 5)
    for p in range(100):
        before = succession_list(p, members)
        assert succession_list(p, [m for m in members if m != 3] + [3]) == before


def test_rf_equal_to_roster_is_whole_list():
    roster = Roster((4, 5, 6), 3)
    assert roster_replicas(9, roster) == succession_list(9, roster)


def test_rf_too_large_is_rejected():
    with pytest.raises(ValueError):
        Roster((1, 2), 3)


def test_replica_counts_are_balanced():
    n, rf = 10, 3
    roster = Roster(tuple(range(1, n + 1)), rf)
    counts = Counter(x for p in range(4096) for x in roster_replicas(p, roster))
    expect = 4096 * rf / n
    for node in roster.members:
        assert abs(counts[node] - expect) <= 0.2 * expect


def test_cluster_replicas_with_full_roster():
    roster = Roster((1, 2, 3, 4, 5), 2)
    for p in range(50):
        assert cluster_replicas(roster.members, p, roster) == roster_replicas(p, roster)


def test_dropping_a_replica_promotes_the_next_node():
    roster = Roster((1, 2, 3, 4, 5), 3)
    order = succession_list(0, roster)
    members = [m for m in roster.members if m != order[2]]
    assert cluster_replicas(members, 0, roster) == [order[0], order[1], order[3]]


def test_cluster_replicas_against_filter_oracle():
    for size in range(1, 8):
        members = tuple(range(1, size + 1))
        for rf in range(1, size + 1):
            roster = Roster(members, rf)
            for p in (0, 17, 4095):
                order = _independent_order(p, members)
                for k in range(size + 1):
                    for sub in itertools.combinations(members, k):
                        want = [n for n in order if n in sub][:rf]
                        assert cluster_replicas(sub, p, roster) == want


def test_empty_intersection_gives_no_replicas():
    assert cluster_replicas([], 0, Roster((1, 2, 3), 2)) == []


def test_single_removal_changes_replica_set_by_at_most_one():
    for size in range(2, 8):
        members = tuple(range(1, size + 1))
        for rf in range(1, size + 1):
            roster = Roster(members, rf)
            for p in range(32):
                base = set(cluster_replicas(members, p, roster))
                for gone in members:
                    now = set(cluster_replicas([m for m in members if m != gone], p, roster))
                    assert len(base - now) <= 1


def test_fixed_order_must_permute_roster():
    roster = Roster((1, 2, 3), 2)
    assert Placement(roster, [3, 1, 2]).roster_leader(5) == 3
    with pytest.raises(ValueError):
        Placement(roster, [1, 2, 4])
