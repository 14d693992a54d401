"""Social network server role.

Holds identities, friend lists and threshold distances, hands out per-epoch
pseudo-identities, fans records out to every location server, and drives
query orchestration including the judging side of the blinded comparison.
Locations only pass through here as ciphertexts under keys the SNS lacks.
"""
from __future__ import annotations

import logging
import random
import threading
from dataclasses import dataclass, field

from . import paillier, wire
from .asym import HybridCiphertext, PseudoIdentity, pid_derive, verify
from .distcmp import ComparisonParams, ComparisonBatch, judge, make_threshold_ct
from .errors import (AlreadyRegistered, BadSignature, MalformedFrame, RadiusOutOfRange, StaleTimestamp,
                     ThresholdOutOfRange, UnknownVehicle)
from .meter import NULL_METER, CostMeter

log = logging.getLogger(__name__)

CLOCK_SKEW_MS = 60_000
EPOCH_KEY_BYTES = 16


@dataclass
class SnsVehicleRecord:
    vehicle_id: str
    pk_on_file: AsymPublicKey
    friend_list: frozenset[str]
    friend_thresholds: dict[str, int]
    stranger_threshold: int
    current_pid: PseudoIdentity
    enc_location_passthrough: HybridCiphertext
    enc_pk_passthrough: HybridCiphertext
    last_ts: int


@dataclass
class EpochState:
    epoch_index: int
    epoch_key: bytes
    update_cycle_ms: int
    record_ttl_ms: int

    def __post_init__(self):
        if not self.update_cycle_ms < self.record_ttl_ms <= 2 * self.update_cycle_ms:
            raise ValueError("record TTL must lie in (t, 2t]")


@dataclass
class PartitionPlan:
    subsets: list[list[PseudoIdentity]]
    dummy_count: int
    dummies: frozenset[PseudoIdentity] = field(default_factory=frozenset)


def partition_pids(pids, q: int, dummy_count: int, rng: random.Random) -> PartitionPlan:
    """Split ``pids`` into ``q`` random-size disjoint subsets and pad each with
    ``dummy_count`` fresh random PIDs. Subset order is shuffled."""
    if q < 1:
        raise ValueError("need at least one location server")
    real = list(pids)
    known = set(real)
    rng.shuffle(real)
    cuts = sorted(rng.randint(0, len(real)) for _ in range(q - 1))
    bounds = [0, *cuts, len(real)]
    subsets = [real[bounds[j]:bounds[j + 1]] for j in range(q)]
    dummies = set()
    for subset in subsets:
        for _ in range(dummy_count):
            while True:
                d = PseudoIdentity(rng.randbytes(16))
                if d not in known and d not in dummies:
                    break
            dummies.add(d)
            subset.append(d)
        rng.shuffle(subset)
    return PartitionPlan(subsets=subsets, dummy_count=dummy_count, dummies=frozenset(dummies))


@dataclass(frozen=True)
class VerdictRecord:
    """One judged pair, kept for audits: did ``target`` grant ``requester``?"""

    query_id: int
    requester: str
    target: str
    threshold: int
    granted: bool


class SocialNetworkServer:
    def __init__(self, ls_links, params: ComparisonParams, clock, *,
                 update_cycle_ms: int, record_ttl_ms: int, paillier_bits: int = paillier.DEFAULT_BITS,
                 dummy_count: int = 0, rng: random.Random | None = None, meter: CostMeter = NULL_METER):
        if not ls_links:
            raise ValueError("at least one location server link is required")
        self.params = params
        self.paillier_bits = paillier_bits
        self.dummy_count = dummy_count
        self._links = list(ls_links)
        self._clock = clock
        self._rng = rng or random.SystemRandom()
        self._meter = meter
        self._lock = threading.RLock()
        self.records: dict[str, SnsVehicleRecord] = {}
        self._pid_to_id: dict[PseudoIdentity, str] = {}
        self.epoch = EpochState(0, self._rng.randbytes(EPOCH_KEY_BYTES), update_cycle_ms, record_ttl_ms)
        self.pid_history: dict[int, dict[str, PseudoIdentity]] = {0: {}}
        self.verdicts: list[VerdictRecord] = []
        self._next_query = 1

    @property
    def ls_count(self) -> int:
        return len(self._links)

    # -- message entry point ------------------------------------------------

    def handle(self, msg: wire.Message, peer: str = "") -> wire.Message:
        now = self._clock.now_ms()
        if isinstance(msg, wire.Registration):
            return self.register(msg, now)
        if isinstance(msg, wire.Update):
            return self.update(msg, now)
        if isinstance(msg, wire.QueryParticularFriends):
            return self.handle_particular_friends(msg, now)
        if isinstance(msg, wire.QueryFriendsWithin):
            return self.handle_friends_within(msg, now)
        if isinstance(msg, wire.QueryStrangersWithin):
            return self.handle_strangers_within(msg, now)
        raise MalformedFrame(f"sns does not accept {type(msg).__name__}")

    # -- registration and update ---------------------------------------------

    def _check_fresh(self, ts: int, now: int) -> None:
        if abs(now - ts) > CLOCK_SKEW_MS:
            raise StaleTimestamp(f"timestamp {ts} is more than {CLOCK_SKEW_MS} ms from {now}")

    def _check_thresholds(self, msg) -> None:
        extra = set(msg.friend_thresholds) - set(msg.friends)
        if extra:
            raise ThresholdOutOfRange(f"thresholds given for non-friends: {sorted(extra)}")
        for value in [*msg.friend_thresholds.values(), msg.stranger_threshold]:
            if not 1 <= value <= self.params.i_max:
                raise ThresholdOutOfRange(f"threshold {value} outside [1, {self.params.i_max}]")

    def _fan_out(self, pid: PseudoIdentity, msg) -> None:
        store = wire.StoreRecord(pid=pid, enc_location=msg.enc_location,
                                 enc_public_key=msg.enc_public_key, ttl_ms=self.epoch.record_ttl_ms)
        for link in self._links:
            link.call(store)

    def _commit(self, msg, pid: PseudoIdentity, previous: SnsVehicleRecord | None) -> None:
        if previous is not None:
            self._pid_to_id.pop(previous.current_pid, None)
        self.records[msg.vehicle_id] = SnsVehicleRecord(
            vehicle_id=msg.vehicle_id,
            pk_on_file=msg.public_key,
            friend_list=frozenset(msg.friends),
            friend_thresholds=dict(msg.friend_thresholds),
            stranger_threshold=msg.stranger_threshold,
            current_pid=pid,
            enc_location_passthrough=msg.enc_location,
            enc_pk_passthrough=msg.enc_public_key,
            last_ts=msg.ts,
        )
        self._pid_to_id[pid] = msg.vehicle_id
        self.pid_history.setdefault(self.epoch.epoch_index, {})[msg.vehicle_id] = pid

    def register(self, msg: wire.Registration, now: int) -> wire.Ack:
        with self._lock:
            if msg.vehicle_id in self.records:
                raise AlreadyRegistered(f"{msg.vehicle_id} is already registered")
            if not verify(msg.public_key, wire.signed_payload(msg.vehicle_id, msg.ts, msg.public_key),
                          msg.signature):
                raise BadSignature("registration signature does not verify")
            self._check_fresh(msg.ts, now)
            self._check_thresholds(msg)
            pid = pid_derive(msg.vehicle_id, self.epoch.epoch_key)
            self._fan_out(pid, msg)
            self._commit(msg, pid, None)
        return wire.Ack("registered")

    def update(self, msg: wire.Update, now: int) -> wire.Ack:
        """Signed with the key currently on file; installs ``msg.public_key``."""
        with self._lock:
            rec = self.records.get(msg.vehicle_id)
            if rec is None:
                raise UnknownVehicle(f"{msg.vehicle_id} is not registered")
            if not verify(rec.pk_on_file, wire.signed_payload(msg.vehicle_id, msg.ts, msg.public_key),
                          msg.signature):
                raise BadSignature("update signature does not verify")
            self._check_fresh(msg.ts, now)
            if msg.ts <= rec.last_ts:
                raise StaleTimestamp("update timestamp does not advance")
            self._check_thresholds(msg)
            pid = pid_derive(msg.vehicle_id, self.epoch.epoch_key)
            self._fan_out(pid, msg)
            self._commit(msg, pid, rec)
        return wire.Ack("updated")

    def epoch_advance(self, now: int) -> int:
        with self._lock:
            self.epoch.epoch_key = self._rng.randbytes(EPOCH_KEY_BYTES)
            self.epoch.epoch_index += 1
            self.pid_history.setdefault(self.epoch.epoch_index, {})
            log.debug("epoch %d started at %d ms", self.epoch.epoch_index, now)
            return self.epoch.epoch_index

    def id_for_pid(self, pid: PseudoIdentity) -> str | None:
        with self._lock:
            return self._pid_to_id.get(pid)

    # -- queries ------------------------------------------------------------

    def _requester(self, vehicle_id: str) -> SnsVehicleRecord:
        rec = self.records.get(vehicle_id)
        if rec is None:
            raise UnknownVehicle(f"{vehicle_id} is not registered")
        return rec

    def _grants_to(self, target: str, requester: SnsVehicleRecord) -> SnsVehicleRecord | None:
        """The target's record if it is a mutual friend holding a threshold for
        the requester."""
        rec = self.records.get(target)
        if (rec is None or target == requester.vehicle_id or target not in requester.friend_list
                or requester.vehicle_id not in rec.friend_thresholds):
            return None
        return rec

    def _new_query_id(self) -> int:
        with self._lock:
            qid = self._next_query
            self._next_query += 1
            return qid

    def _compare_and_collect(self, query_id: int, requester: SnsVehicleRecord,
                             enc_location: HybridCiphertext, kind: wire.QueryKind,
                             targets: dict[PseudoIdentity, tuple[str, int]],
                             radius: int | None) -> dict[PseudoIdentity, HybridCiphertext]:
        """Run one comparison round per location server over ``targets``
        (PID -> (ID, threshold)) and return the released ciphertexts."""
        plan = partition_pids(list(targets), self.ls_count, self.dummy_count, self._rng)
        if not any(plan.subsets):
            return {}
        with self._meter.measure("compare"):
            pk_m, sk_m = paillier.keygen(self.paillier_bits, self._rng)
        released: dict[PseudoIdentity, HybridCiphertext] = {}
        for j, subset in enumerate(plan.subsets):
            if not subset:
                continue
            with self._meter.measure("compare"):
                cts = tuple(
                    make_threshold_ct(pk_m, targets[pid][1] if pid in targets
                                      else self._rng.randint(1, self.params.i_max),
                                      self.params, self._rng).ct
                    for pid in subset)
            batches = self._links[j].call(wire.SubsetDispatch(
                query_id=query_id, ls_index=j, requester_pid=requester.current_pid,
                enc_location=enc_location, kind=kind, subset=tuple(subset), threshold_cts=cts,
                pk_m=pk_m, radius=radius))
            if not isinstance(batches, wire.ComparisonBatchMsg):
                raise MalformedFrame(f"expected ComparisonBatchMsg, got {type(batches).__name__}")
            verdicts = []
            for entry in batches.entries:
                if entry.batch is None or entry.pid not in targets:
                    continue
                verdicts.append(wire.Verdict(entry.pid, self._judge(sk_m, entry.batch)))
                target_id, threshold = targets[entry.pid]
                self.verdicts.append(VerdictRecord(query_id, requester.vehicle_id, target_id,
                                                   threshold, verdicts[-1].granted))
            results = self._links[j].call(wire.VerdictMsg(query_id=query_id, ls_index=j,
                                                          verdicts=tuple(verdicts)))
            if not isinstance(results, wire.LocationResultMsg):
                raise MalformedFrame(f"expected LocationResultMsg, got {type(results).__name__}")
            granted = {v.pid for v in verdicts if v.granted}
            for item in results.results:
                if item.pid in granted:
                    released[item.pid] = item.enc_location
        return released

    def _judge(self, sk_m, batch: ComparisonBatch) -> bool:
        with self._meter.measure("compare"):
            return judge(sk_m, batch)

    def _friend_reply(self, query_id, requester, enc_location, kind, friend_ids, radius):
        targets = {}
        for fid in friend_ids:
            rec = self._grants_to(fid, requester)
            if rec is not None:
                targets[rec.current_pid] = (fid, rec.friend_thresholds[requester.vehicle_id])
        released = self._compare_and_collect(query_id, requester, enc_location, kind, targets, radius)
        items = sorted((targets[pid][0], enc) for pid, enc in released.items())
        return wire.ReplyToVehicle(query_id=query_id,
                                   items=tuple(wire.ReplyItem(label, enc) for label, enc in items))

    def handle_particular_friends(self, msg: wire.QueryParticularFriends, now: int) -> wire.ReplyToVehicle:
        with self._lock:
            requester = self._requester(msg.vehicle_id)
        wanted = list(dict.fromkeys(msg.targets))
        return self._friend_reply(self._new_query_id(), requester, msg.enc_location,
                                  wire.QueryKind.PARTICULAR_FRIENDS, wanted, None)

    def handle_friends_within(self, msg: wire.QueryFriendsWithin, now: int) -> wire.ReplyToVehicle:
        if msg.radius < 1:
            raise RadiusOutOfRange("radius must be at least 1 m")
        with self._lock:
            requester = self._requester(msg.vehicle_id)
        return self._friend_reply(self._new_query_id(), requester, msg.enc_location,
                                  wire.QueryKind.FRIENDS_WITHIN, sorted(requester.friend_list), msg.radius)

    def handle_strangers_within(self, msg: wire.QueryStrangersWithin, now: int) -> wire.ReplyToVehicle:
        if msg.radius < 1:
            raise RadiusOutOfRange("radius must be at least 1 m")
        with self._lock:
            requester = self._requester(msg.vehicle_id)
        query_id = self._new_query_id()
        j = self._rng.randrange(self.ls_count)
        nearby = self._links[j].call(wire.RangePreQuery(query_id=query_id,
                                                        requester_pid=requester.current_pid,
                                                        radius=msg.radius))
        if not isinstance(nearby, wire.RangePreResult):
            raise MalformedFrame(f"expected RangePreResult, got {type(nearby).__name__}")
        with self._lock:
            excluded = {requester.current_pid}
            excluded.update(self.records[f].current_pid for f in requester.friend_list if f in self.records)
            targets = {}
            for pid in nearby.pids:
                vid = self._pid_to_id.get(pid)
                if pid in excluded or vid is None:
                    continue  # friend, self, or a stale pseudonym from an earlier epoch
                targets[pid] = (vid, self.records[vid].stranger_threshold)
        released = self._compare_and_collect(query_id, requester, msg.enc_location,
                                             wire.QueryKind.STRANGERS_WITHIN, targets, None)
        items = [wire.ReplyItem(self._rng.randbytes(8).hex(), enc) for enc in released.values()]
        self._rng.shuffle(items)
        return wire.ReplyToVehicle(query_id=query_id, items=tuple(items))

    def dump(self) -> dict:
        with self._lock:
            return {
                "epoch": self.epoch.epoch_index,
                "vehicles": [
                    {"id": r.vehicle_id, "pid": r.current_pid.hex(), "friends": sorted(r.friend_list),
                     "friend_thresholds": dict(r.friend_thresholds), "stranger_threshold": r.stranger_threshold,
                     "enc_location_bytes": len(r.enc_location_passthrough.to_bytes())}
                    for r in self.records.values()
                ],
            }
