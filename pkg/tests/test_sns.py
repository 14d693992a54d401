import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from ppls import wire
from ppls.asym import PseudoIdentity, Signature, pid_derive
from ppls.errors import (AlreadyRegistered, BadSignature, RadiusOutOfRange, StaleTimestamp,
                         ThresholdOutOfRange, UnknownVehicle)
from ppls.sns import EpochState, partition_pids

from helpers import small_deployment, triangle


@pytest.fixture
def dep():
    d = small_deployment()
    yield d
    d.close()


def frames(dep, cls):
    return [e for e in dep.log.entries() if isinstance(e.message, cls)]


# --- registration -------------------------------------------------------------------

def test_valid_registration(dep):
    alice = dep.add_vehicle("alice", (1, 2), {"bob": 50}, 200)
    alice.register(0)
    rec = dep.sns.records["alice"]
    assert rec.friend_thresholds == {"bob": 50} and rec.stranger_threshold == 200
    assert rec.current_pid == pid_derive("alice", dep.sns.epoch.epoch_key)
    assert dep.sns.pid_history[0]["alice"] == rec.current_pid
    stores = frames(dep, wire.StoreRecord)
    assert sorted(e.receiver for e in stores) == ["ls:0", "ls:1"]
    for ls in dep.location_servers:
        assert ls.store.get(rec.current_pid, 0) is not None


def test_stale_registration(dep):
    alice = dep.add_vehicle("alice", (1, 2))
    dep.clock.set(10 * 60_000)
    with pytest.raises(StaleTimestamp):
        alice.register(0)
    assert "alice" not in dep.sns.records
    assert not frames(dep, wire.StoreRecord)


def test_tampered_signature(dep):
    alice = dep.add_vehicle("alice", (1, 2))
    msg = alice.build_registration(0)
    bad = dataclasses.replace(msg, signature=Signature(msg.signature.value ^ 1))
    with pytest.raises(BadSignature):
        alice.link.call(bad)
    forged_ts = dataclasses.replace(msg, ts=1)
    with pytest.raises(BadSignature):
        alice.link.call(forged_ts)
    assert "alice" not in dep.sns.records


def test_duplicate_registration(dep):
    alice = dep.add_vehicle("alice", (1, 2))
    alice.register(0)
    with pytest.raises(AlreadyRegistered):
        alice.register(0)


@pytest.mark.parametrize("friends,ds", [({"bob": 0}, 100), ({"bob": 1001}, 100), ({}, 0), ({}, 1001)])
def test_threshold_range(dep, friends, ds):
    alice = dep.add_vehicle("alice", (1, 2), friends, ds)
    with pytest.raises(ThresholdOutOfRange):
        alice.register(0)
    assert "alice" not in dep.sns.records


def test_thresholds_must_name_friends(dep):
    alice = dep.add_vehicle("alice", (1, 2), {"bob": 50})
    alice.state.friends = ("carol",)
    with pytest.raises(ThresholdOutOfRange):
        alice.register(0)


# --- update and epochs --------------------------------------------------------------

def test_update_same_epoch_keeps_pid(dep):
    alice = dep.add_vehicle("alice", (1, 2), {"bob": 50})
    alice.register(0)
    before = dep.sns.records["alice"].current_pid
    dep.clock.set(1000)
    alice.state.friend_thresholds["bob"] = 70
    alice.update(1000)
    rec = dep.sns.records["alice"]
    assert rec.current_pid == before
    assert rec.friend_thresholds == {"bob": 70}


def test_update_after_epoch_rotates_pid(dep):
    alice = dep.add_vehicle("alice", (1, 2))
    alice.register(0)
    before = dep.sns.records["alice"].current_pid
    dep.clock.set(60_000)
    dep.sns.epoch_advance(60_000)
    alice.update(60_000)
    after = dep.sns.records["alice"].current_pid
    assert after != before
    assert dep.sns.id_for_pid(after) == "alice" and dep.sns.id_for_pid(before) is None


def test_update_unknown_vehicle(dep):
    ghost = dep.add_vehicle("ghost", (1, 2))
    with pytest.raises(UnknownVehicle):
        ghost.update(0)
    assert ghost.state.keypair == ghost.previous_keypair  # rolled back


def test_update_must_be_signed_by_key_on_file(dep):
    alice = dep.add_vehicle("alice", (1, 2))
    alice.register(0)
    dep.clock.set(1000)
    msg = alice.build_update(1000)
    from ppls.asym import sign
    self_signed = dataclasses.replace(
        msg, signature=sign(alice.state.keypair, wire.signed_payload("alice", 1000, msg.public_key)))
    with pytest.raises(BadSignature):
        alice.link.call(self_signed)
    assert alice.link.call(msg) == wire.Ack("updated")


def test_update_timestamp_must_advance(dep):
    alice = dep.add_vehicle("alice", (1, 2))
    alice.register(0)
    with pytest.raises(StaleTimestamp):
        alice.update(0)
    dep.clock.set(5 * 60_000)
    with pytest.raises(StaleTimestamp):
        alice.update(1000)


def test_two_advances_three_distinct_pids(dep):
    keys = [dep.sns.epoch.epoch_key]
    for k in (1, 2):
        assert dep.sns.epoch_advance(k * 60_000) == k
        keys.append(dep.sns.epoch.epoch_key)
    assert len({pid_derive("alice", key) for key in keys}) == 3


def test_hundred_vehicle_fleet_never_reuses_pids(dep):
    ids = [f"vehicle-{i:03d}" for i in range(100)]
    seen = []
    for epoch in range(4):
        if epoch:
            dep.sns.epoch_advance(epoch * 60_000)
        seen.append({pid_derive(v, dep.sns.epoch.epoch_key) for v in ids})
    assert all(len(s) == 100 for s in seen)
    for i in range(4):
        for j in range(i + 1, 4):
            assert not seen[i] & seen[j]


def test_epoch_ttl_window():
    EpochState(0, bytes(16), 60_000, 75_000)
    EpochState(0, bytes(16), 60_000, 120_000)
    for tl in (60_000, 120_001):
        with pytest.raises(ValueError):
            EpochState(0, bytes(16), 60_000, tl)


# --- partitioning -----------------------------------------------------------------------

def _pids(n, seed=0):
    r = random.Random(seed)
    return [PseudoIdentity(r.randbytes(16)) for _ in range(n)]


def test_partition_ten_into_three():
    pids = _pids(10)
    plan = partition_pids(pids, 3, 1, random.Random(1))
    real = [[p for p in s if p not in plan.dummies] for s in plan.subsets]
    assert len(plan.subsets) == 3
    assert sorted(p.value for s in real for p in s) == sorted(p.value for p in pids)
    assert all(sum(1 for p in s if p in plan.dummies) == 1 for s in plan.subsets)


def test_partition_no_pids_only_dummies():
    plan = partition_pids([], 3, 2, random.Random(1))
    assert [len(s) for s in plan.subsets] == [2, 2, 2]
    assert all(p in plan.dummies for s in plan.subsets for p in s)


def test_partition_single_server():
    pids = _pids(10)
    plan = partition_pids(pids, 1, 0, random.Random(1))
    assert sorted(p.value for p in plan.subsets[0]) == sorted(p.value for p in pids)


@settings(max_examples=100)
@given(n=st.integers(0, 40), q=st.integers(1, 6), dummies=st.integers(0, 3), seed=st.integers(0, 2**32))
def test_partition_invariants(n, q, dummies, seed):
    pids = _pids(n, seed)
    plan = partition_pids(pids, q, dummies, random.Random(seed))
    assert len(plan.subsets) == q
    flat = [p for s in plan.subsets for p in s if p not in plan.dummies]
    assert len(flat) == len(set(flat)) == n and set(flat) == set(pids)
    assert not plan.dummies & set(pids)
    assert len(plan.dummies) == q * dummies


# --- query handlers ---------------------------------------------------------------------

def test_pf_returns_bob_within_threshold(dep):
    alice, _, _ = triangle(dep)
    assert alice.request(alice.query_particular_friends(["bob"])) == [("bob", (1018, 1024))]


def test_pf_strict_threshold(dep):
    alice, _, _ = triangle(dep, bob_for_alice=30)  # distance 30 == threshold
    assert alice.request(alice.query_particular_friends(["bob"])) == []


def test_pf_non_friend_silently_absent(dep):
    alice, _, _ = triangle(dep)
    got = alice.request(alice.query_particular_friends(["carol", "nobody", "bob", "bob"]))
    assert got == [("bob", (1018, 1024))]


def test_pf_requires_mutual_listing(dep):
    # bob lists alice but alice does not list bob: alice cannot ask for him
    alice = dep.add_vehicle("alice", (0, 0), {}, 300)
    bob = dep.add_vehicle("bob", (3, 4), {"alice": 50}, 300)
    alice.register(0)
    bob.register(0)
    assert alice.request(alice.query_particular_friends(["bob"])) == []


@pytest.mark.parametrize("df,l,expected", [(50, 40, True), (50, 30, False), (20, 100, False)])
def test_friends_within(dep, df, l, expected):
    alice, _, _ = triangle(dep, bob_for_alice=df)
    got = alice.request(alice.query_friends_within(l))
    assert got == ([("bob", (1018, 1024))] if expected else [])


@pytest.mark.parametrize("ds,expected", [(200, True), (50, False), (80, False)])
def test_strangers_within(dep, ds, expected):
    alice, _, _ = triangle(dep, carol_ds=ds)
    got = alice.request(alice.query_strangers_within(100))
    assert [p for _, p in got] == ([(1048, 1064)] if expected else [])
    assert all(label != "carol" for label, _ in got)


def test_strangers_only_friends_nearby(dep):
    alice, _, _ = triangle(dep)
    assert alice.request(alice.query_strangers_within(50)) == []  # bob is a friend, carol is 80 m away


def test_unknown_requester(dep):
    ghost = dep.add_vehicle("ghost", (1, 1))
    with pytest.raises(UnknownVehicle):
        ghost.request(ghost.query_friends_within(10))


def test_zero_radius_rejected_by_server(dep):
    alice, _, _ = triangle(dep)
    msg = dataclasses.replace(alice.query_friends_within(5), radius=0)
    with pytest.raises(RadiusOutOfRange):
        alice.link.call(msg)


def test_sns_state_never_holds_coordinates(dep):
    triangle(dep)
    text = repr(dep.sns.dump()) + repr(dep.sns.records)
    for coord in ("1018", "1024", "1048", "1064"):
        assert coord not in text


def test_verdict_records(dep):
    alice, _, _ = triangle(dep)
    alice.request(alice.query_friends_within(100))
    (rec,) = dep.sns.verdicts
    assert (rec.requester, rec.target, rec.threshold, rec.granted) == ("alice", "bob", 50, True)


def test_threshold_direction_uses_targets_threshold(dep):
    # distance 30: bob grants alice 50, alice grants bob only 20
    alice, bob, _ = triangle(dep, bob_for_alice=50, alice_for_bob=20)
    assert alice.request(alice.query_particular_friends(["bob"])) == [("bob", (1018, 1024))]
    assert bob.request(bob.query_particular_friends(["alice"])) == []


def test_dispatched_subsets_partition_the_targets():
    d = small_deployment(ls_count=3, dummy_count=2)
    try:
        hub = d.add_vehicle("hub", (500, 500), {f"f{i}": 100 for i in range(7)})
        hub.register(0)
        for i in range(7):
            d.add_vehicle(f"f{i}", (500 + i, 500), {"hub": 100}).register(0)
        got = hub.request(hub.query_friends_within(1000))
        assert len(got) == 7
        dispatches = [e.message for e in d.log.entries() if isinstance(e.message, wire.SubsetDispatch)]
        friend_pids = {d.sns.records[f"f{i}"].current_pid for i in range(7)}
        seen = [p for msg in dispatches for p in msg.subset if p in friend_pids]
        assert sorted(p.value for p in seen) == sorted(p.value for p in friend_pids)
        dummies = [p for msg in dispatches for p in msg.subset if p not in friend_pids]
        assert len(dummies) == 2 * len(dispatches) and len(set(dummies)) == len(dummies)
        assert {msg.ls_index for msg in dispatches} <= {0, 1, 2}
    finally:
        d.close()
