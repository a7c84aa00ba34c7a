from larksim.model import BOTTOM, LogicalClock, PartitionState, RecordVersion, Roster
from larksim.placement import Placement
from larksim.replication import (LEADER_IN_CLUSTER, LEADER_NOT_TOO_NEW, LEADER_NOT_TOO_OLD,
                                 NODE_IN_REPLICA_SET, STALE_CLOCK, ReplicaWriteMsg, check_regime,
                                 dup_res_fold, dup_res_handler, evaluate_replica_write)

ROSTER5 = Roster((1, 2, 3, 4, 5), 3)
PL5 = Placement(ROSTER5, [1, 2, 3, 4, 5])


def _msg(leader, replica, rr, lrm, lc=(9, 0)):
    lc = LogicalClock(*lc)
    return ReplicaWriteMsg("k", leader, replica, rr, lc, lrm, RecordVersion("k", "v", lc))


def _st(pr, lr, members, leader=None):
    return PartitionState(pr=pr, lr=lr, leader=leader, nodes_in_cluster=frozenset(members),
                          available=True)


def _eval(msg, st, er, node, pl=PL5, cur=BOTTOM, disabled=()):
    return evaluate_replica_write(msg, st, er, node, cur, pl, 0, disabled)


def test_all_conditions_hold():
    v = _eval(_msg(1, 3, rr=4, lrm=4), _st(4, 4, [1, 2, 3, 4, 5], 1), er=4, node=3)
    assert v.accept and v.reason is None


def test_leader_left_cluster_is_rejected():
    # replica 3 now sits in {2,3} (roster 1..3, RF=2); the old leader 1 is gone
    roster = Roster((1, 2, 3), 2)
    pl = Placement(roster, [1, 2, 3])
    v = _eval(_msg(1, 3, rr=1, lrm=1), _st(2, 2, [2, 3], 2), er=2, node=3, pl=pl)
    assert not v.accept and v.reason == LEADER_IN_CLUSTER


def test_leader_two_regimes_behind_is_rejected():
    v = _eval(_msg(1, 3, rr=1, lrm=1), _st(3, 3, [1, 2, 3], 2), er=3, node=3)
    assert v.reasons == (LEADER_NOT_TOO_OLD,)


def test_same_leader_regime_rescues_an_old_rr():
    v = _eval(_msg(1, 3, rr=1, lrm=2), _st(3, 2, [1, 2, 3], 1), er=3, node=3)
    assert v.accept


def test_replica_with_stale_pr_is_rejected():
    v = _eval(_msg(2, 3, rr=3, lrm=3), _st(1, 1, [2, 3, 4], 2), er=3, node=3)
    assert v.reasons == (LEADER_NOT_TOO_NEW,)


def test_non_replica_is_rejected():
    roster = Roster((1, 2, 3, 4), 2)
    pl = Placement(roster, [1, 2, 3, 4])
    v = _eval(_msg(1, 4, rr=1, lrm=1), _st(1, 1, [1, 2, 3, 4], 1), er=1, node=4, pl=pl)
    assert v.reasons == (NODE_IN_REPLICA_SET,)


def test_clock_must_increase():
    st = _st(4, 4, [1, 2, 3], 1)
    v = _eval(_msg(1, 3, 4, 4, lc=(4, 2)), st, er=4, node=3, cur=LogicalClock(4, 2))
    assert v.reasons == (STALE_CLOCK,)


def test_reasons_are_reported_in_fixed_order():
    v = _eval(_msg(9, 5, rr=0, lrm=7), _st(0, 0, [2, 3, 4, 5], 3), er=5, node=5)
    assert v.reasons == (LEADER_IN_CLUSTER, NODE_IN_REPLICA_SET, LEADER_NOT_TOO_OLD,
                         LEADER_NOT_TOO_NEW)


def test_disabled_condition_is_skipped():
    v = _eval(_msg(1, 3, rr=1, lrm=1), _st(3, 3, [1, 2, 3], 2), er=3, node=3,
              disabled=(LEADER_NOT_TOO_OLD,))
    assert v.accept


def test_dup_res_handler():
    v = RecordVersion("k", "x", LogicalClock(1, 0))
    st = _st(1, 1, [1, 2])
    assert dup_res_handler(st, 1, v) == (True, v)
    assert dup_res_handler(st, 3, v) == (False, None)
    assert dup_res_handler(st, 2, None) == (True, None)


def _v(rr, vn, value=None):
    return RecordVersion("k", value or f"{rr}.{vn}", LogicalClock(rr, vn))


def test_dup_res_fold_picks_largest_clock():
    got = dup_res_fold(None, [_v(1, 4), _v(2, 0), _v(1, 9)])
    assert got.lc == LogicalClock(2, 0)


def test_dup_res_fold_keeps_local_on_ties():
    local = _v(3, 1, "mine")
    assert dup_res_fold(local, [_v(3, 1, "theirs"), None]) is local


def test_dup_res_fold_newer_unreplicated_wins():
    local = _v(2, 0).mark_replicated()
    newer = _v(2, 1)
    assert dup_res_fold(local, [newer]) is newer and not newer.replicated


def test_check_regime():
    st = _st(5, 5, [1, 2], leader=1)
    assert check_regime(st, 1, 5)
    assert not check_regime(st, 1, 4)
    assert not check_regime(st, 2, 5)
    st.available = False
    assert not check_regime(st, 1, 5)
