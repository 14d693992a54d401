"""Location server role: a pseudonymous, TTL-bounded location store that
answers range pre-queries and runs the responder side of the blinded
comparison.

Nothing here ever sees a vehicle identity string, only pseudo-identities.
"""
from __future__ import annotations

import logging
import random
import threading
from dataclasses import dataclass

from . import wire
from .asym import (AsymKeypair, AsymPublicKey, HybridCiphertext, PseudoIdentity, asym_decrypt,
                   asym_encrypt)
from .distcmp import ComparisonParams, ThresholdCiphertext, respond
from .errors import DecryptionFailure, MalformedFrame, UnknownRequester, UnknownTarget
from .geo import Point, check_point, distance
from .meter import NULL_METER, CostMeter

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LsRecord:
    pid: PseudoIdentity
    location: Point
    requester_pk: AsymPublicKey
    expires_at: int

    def live(self, now: int) -> bool:
        return now < self.expires_at


class RecordStore:
    """PID-keyed records that stop being visible once ``now >= expires_at``."""

    def __init__(self):
        self._records: dict[PseudoIdentity, LsRecord] = {}
        self._lock = threading.Lock()

    def upsert(self, record: LsRecord) -> None:
        with self._lock:
            self._records[record.pid] = record

    def get(self, pid: PseudoIdentity, now: int) -> LsRecord | None:
        with self._lock:
            rec = self._records.get(pid)
        return rec if rec is not None and rec.live(now) else None

    def snapshot(self, now: int) -> dict[PseudoIdentity, LsRecord]:
        with self._lock:
            return {pid: rec for pid, rec in self._records.items() if rec.live(now)}

    def purge(self, now: int) -> int:
        with self._lock:
            dead = [pid for pid, rec in self._records.items() if not rec.live(now)]
            for pid in dead:
                del self._records[pid]
        return len(dead)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


@dataclass
class _Session:
    requester_pk: AsymPublicKey
    candidates: dict[PseudoIdentity, Point]


class LocationServer:
    def __init__(self, index: int, keypair: AsymKeypair, params: ComparisonParams, clock,
                 rng: random.Random | None = None, meter: CostMeter = NULL_METER):
        self.index = index
        self.role = f"ls:{index}"
        self.params = params
        self.store = RecordStore()
        self._keypair = keypair
        self._clock = clock
        self._rng = rng or random.SystemRandom()
        self._meter = meter
        self._sessions: dict[int, _Session] = {}
        self._lock = threading.Lock()

    @property
    def public_key(self) -> AsymPublicKey:
        return self._keypair.public

    # -- message entry point ------------------------------------------------

    def handle(self, msg: wire.Message, peer: str = "sns") -> wire.Message:
        now = self._clock.now_ms()
        if isinstance(msg, wire.StoreRecord):
            return self.store_record(msg, now)
        if isinstance(msg, wire.RangePreQuery):
            return self.range_query(msg, now)
        if isinstance(msg, wire.SubsetDispatch):
            return self.process_friend_subset(msg, now)
        if isinstance(msg, wire.VerdictMsg):
            return self.release_locations(msg)
        raise MalformedFrame(f"{self.role} does not accept {type(msg).__name__}")

    # -- operations ---------------------------------------------------------

    def _decrypt_point(self, ct: HybridCiphertext) -> Point:
        raw = asym_decrypt(self._keypair, ct)
        try:
            return check_point(Point.unpack(raw))
        except ValueError as exc:
            raise DecryptionFailure(f"bad location payload: {exc}") from exc

    def store_record(self, msg: wire.StoreRecord, now: int) -> wire.Ack:
        location = self._decrypt_point(msg.enc_location)
        requester_pk = AsymPublicKey.from_bytes(asym_decrypt(self._keypair, msg.enc_public_key))
        self.store.upsert(LsRecord(msg.pid, location, requester_pk, now + msg.ttl_ms))
        return wire.Ack()

    def purge_expired(self, now: int) -> int:
        return self.store.purge(now)

    def range_query(self, msg: wire.RangePreQuery, now: int) -> wire.RangePreResult:
        records = self.store.snapshot(now)
        me = records.get(msg.requester_pid)
        if me is None:
            raise UnknownRequester(f"no live record for {msg.requester_pid.hex()}")
        found = [pid for pid, rec in records.items()
                 if pid != msg.requester_pid and distance(me.location, rec.location) < msg.radius]
        self._rng.shuffle(found)
        return wire.RangePreResult(query_id=msg.query_id, pids=tuple(found))

    def process_friend_subset(self, msg: wire.SubsetDispatch, now: int) -> wire.ComparisonBatchMsg:
        if len(msg.threshold_cts) != len(msg.subset):
            raise MalformedFrame("one threshold ciphertext per subset member expected")
        records = self.store.snapshot(now)
        me = records.get(msg.requester_pid)
        if me is None:
            raise UnknownRequester(f"no live record for {msg.requester_pid.hex()}")
        here = self._decrypt_point(msg.enc_location)

        entries, candidates = [], {}
        for pid, ct in zip(msg.subset, msg.threshold_cts):
            rec = records.get(pid)
            if rec is None or pid == msg.requester_pid:
                entries.append(wire.BatchEntry(pid, None))
                continue
            d = distance(here, rec.location)
            if msg.radius is not None and not d < msg.radius:
                entries.append(wire.BatchEntry(pid, None))
                continue
            with self._meter.measure("compare"):
                batch = respond(msg.pk_m, ThresholdCiphertext(ct), d, self.params, self._rng)
            entries.append(wire.BatchEntry(pid, batch))
            candidates[pid] = rec.location
        with self._lock:
            self._sessions[msg.query_id] = _Session(me.requester_pk, candidates)
        return wire.ComparisonBatchMsg(query_id=msg.query_id, ls_index=self.index, entries=tuple(entries))

    def release_locations(self, msg: wire.VerdictMsg) -> wire.LocationResultMsg:
        with self._lock:
            session = self._sessions.pop(msg.query_id, None)
        results = []
        if session is not None:
            for v in msg.verdicts:
                where = session.candidates.get(v.pid)
                if v.granted and where is not None:
                    enc = asym_encrypt(session.requester_pk, where.pack(), self._rng)
                    results.append(wire.LocatedResult(v.pid, enc))
        return wire.LocationResultMsg(query_id=msg.query_id, ls_index=self.index, results=tuple(results))

    def encrypt_result(self, target: PseudoIdentity, requester_pk: AsymPublicKey, now: int) -> HybridCiphertext:
        rec = self.store.get(target, now)
        if rec is None:
            raise UnknownTarget(f"no live record for {target.hex()}")
        return asym_encrypt(requester_pk, rec.location.pack(), self._rng)

    def dump(self, now: int | None = None) -> dict:
        """Debug snapshot of everything this server holds."""
        records = self.store.snapshot(now) if now is not None else self.store.snapshot(-1)
        return {
            "role": self.role,
            "records": [
                {"pid": r.pid.hex(), "location": list(r.location), "pk_n": hex(r.requester_pk.n),
                 "pk_e": r.requester_pk.e, "expires_at": r.expires_at}
                for r in records.values()
            ],
            "pending_sessions": sorted(self._sessions),
        }
