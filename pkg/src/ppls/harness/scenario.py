"""Scripted scenarios checked against a plaintext god-view oracle.

A scenario registers a fleet at t=0, then for each later epoch advances the
SNS epoch and has every vehicle send an update (moving along its trajectory
if one is given). Queries fire at their scripted times. Every reply is
compared with what the god view says the requester may see, and the frame
log is audited for location and identity leaks.
"""
from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .. import wire
from ..distcmp import ComparisonParams, oracle_compare
from ..errors import ConfigInvalid, PplsError
from ..geo import COORD_LIMIT, Point, distance
from .deployment import Deployment

QUERY_TYPES = {"pf": wire.QueryKind.PARTICULAR_FRIENDS, "f": wire.QueryKind.FRIENDS_WITHIN,
               "s": wire.QueryKind.STRANGERS_WITHIN}

FRIEND_THRESHOLDS = tuple(range(10, 101, 10))
STRANGER_THRESHOLDS = tuple(range(100, 1001, 100))


@dataclass
class VehicleSpec:
    id: str
    location: tuple[int, int]
    friends: dict[str, int] = field(default_factory=dict)  # friend ID -> this vehicle's threshold for them
    stranger_threshold: int = 1000
    trajectory: list[tuple[int, int]] = field(default_factory=list)  # location per later epoch

    def location_at(self, epoch: int) -> Point:
        if epoch == 0 or not self.trajectory:
            return Point(*self.location)
        return Point(*self.trajectory[min(epoch, len(self.trajectory)) - 1])


@dataclass
class QuerySpec:
    requester: str
    type: str
    at: float  # seconds
    targets: list[str] = field(default_factory=list)
    radius: int | None = None

    @property
    def at_ms(self) -> int:
        return round(self.at * 1000)


@dataclass
class ScenarioConfig:
    fleet: list[VehicleSpec]
    queries: list[QuerySpec] = field(default_factory=list)
    ls_count: int = 2
    i_max: int = 1000
    paillier_bits: int = 256
    rsa_bits: int = 512
    update_cycle: float = 60.0  # t, seconds
    record_ttl: float = 75.0  # tl, seconds
    dummy_count: int = 1
    epochs: int = 1
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# --- loading and validation ------------------------------------------------

def _line_of(text: str, needle: str) -> int | None:
    pos = text.find(needle)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def _where(text: str, needle: str) -> str:
    line = _line_of(text, needle) if text else None
    return f"line {line}: " if line else ""


def validate(cfg: ScenarioConfig, text: str = "") -> ScenarioConfig:
    """Raise ``ConfigInvalid`` listing every problem, with line numbers when
    the raw JSON text is available."""
    problems = []
    ids = [v.id for v in cfg.fleet]
    by_id = {v.id: v for v in cfg.fleet}
    for vid, n in Counter(ids).items():
        if n > 1:
            problems.append(f"{_where(text, json.dumps(vid))}duplicate vehicle id {vid!r}")
    if cfg.ls_count < 1:
        problems.append("ls_count must be at least 1")
    if cfg.i_max < 1:
        problems.append("i_max must be at least 1")
    if cfg.epochs < 1:
        problems.append("epochs must be at least 1")
    if cfg.dummy_count < 0:
        problems.append("dummy_count must be non-negative")
    if not cfg.update_cycle < cfg.record_ttl <= 2 * cfg.update_cycle:
        problems.append("record_ttl must lie in (update_cycle, 2 * update_cycle]")
    if cfg.paillier_bits < 64:
        problems.append("paillier_bits must be at least 64")
    if cfg.rsa_bits < 512:
        problems.append("rsa_bits must be at least 512")
    for v in cfg.fleet:
        where = _where(text, json.dumps(v.id))
        if not v.id:
            problems.append("vehicle id must be non-empty")
        for pt in [v.location, *v.trajectory]:
            if len(pt) != 2 or not all(isinstance(c, int) and 0 <= c < COORD_LIMIT for c in pt):
                problems.append(f"{where}{v.id}: coordinates {list(pt)} outside [0, {COORD_LIMIT})")
        for fid, thr in v.friends.items():
            if fid not in by_id:
                problems.append(f"{where}{v.id}: friend {fid!r} is not in the fleet")
            elif v.id not in by_id[fid].friends:
                problems.append(f"{where}{v.id} lists {fid} as a friend but {fid} does not list {v.id}")
            if fid == v.id:
                problems.append(f"{where}{v.id} lists itself as a friend")
            if not (isinstance(thr, int) and 1 <= thr <= cfg.i_max):
                problems.append(f"{where}{v.id}: threshold for {fid} must be an integer in [1, {cfg.i_max}]")
        if not (isinstance(v.stranger_threshold, int) and 1 <= v.stranger_threshold <= cfg.i_max):
            problems.append(f"{where}{v.id}: stranger_threshold must be an integer in [1, {cfg.i_max}]")
    horizon = cfg.epochs * cfg.update_cycle
    for i, q in enumerate(cfg.queries):
        tag = f"queries[{i}]"
        if q.requester not in by_id:
            problems.append(f"{tag}: unknown requester {q.requester!r}")
        if q.type not in QUERY_TYPES:
            problems.append(f"{tag}: type must be one of {sorted(QUERY_TYPES)}")
        if q.type in ("f", "s") and (not isinstance(q.radius, int) or q.radius < 1):
            problems.append(f"{tag}: radius must be a positive integer")
        if not 0 < q.at < horizon:
            problems.append(f"{tag}: time {q.at}s outside (0, {horizon})")
    if problems:
        raise ConfigInvalid(problems)
    return cfg


def config_from_dict(data: dict, text: str = "") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid(["top level must be a JSON object"])
    try:
        fleet = [VehicleSpec(id=v["id"], location=tuple(v["location"]), friends=dict(v.get("friends", {})),
                             stranger_threshold=v.get("stranger_threshold", 1000),
                             trajectory=[tuple(p) for p in v.get("trajectory", [])])
                 for v in data["fleet"]]
        queries = [QuerySpec(requester=q["requester"], type=q["type"], at=q["at"],
                             targets=list(q.get("targets", [])), radius=q.get("radius"))
                   for q in data.get("queries", [])]
        scalars = {k: data[k] for k in ("ls_count", "i_max", "paillier_bits", "rsa_bits", "update_cycle",
                                        "record_ttl", "dummy_count", "epochs", "seed") if k in data}
    except (KeyError, TypeError) as exc:
        raise ConfigInvalid([f"missing or malformed field: {exc}"]) from exc
    unknown = set(data) - {"fleet", "queries", "ls_count", "i_max", "paillier_bits", "rsa_bits",
                           "update_cycle", "record_ttl", "dummy_count", "epochs", "seed", "comment"}
    if unknown:
        raise ConfigInvalid([f"{_where(text, json.dumps(k))}unknown field {k!r}" for k in sorted(unknown)])
    return validate(ScenarioConfig(fleet=fleet, queries=queries, **scalars), text)


def load_config(path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid([f"line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    return config_from_dict(data, text)


# --- god view ----------------------------------------------------------------

class GodView:
    """Plaintext mirror of locations, friendships, thresholds and store times.

    Test oracle only: role objects never read it.
    """

    def __init__(self, ttl_ms: int):
        self.ttl_ms = ttl_ms
        self.location: dict[str, Point] = {}
        self.friends: dict[str, dict[str, int]] = {}
        self.stranger_threshold: dict[str, int] = {}
        self.stored_at: dict[str, int] = {}
        self.all_points: set[Point] = set()

    def record(self, vid: str, location: Point, friends: dict[str, int], ds: int, now: int) -> None:
        self.location[vid] = location
        self.friends[vid] = dict(friends)
        self.stranger_threshold[vid] = ds
        self.stored_at[vid] = now
        self.all_points.add(location)

    def live(self, vid: str, now: int) -> bool:
        return vid in self.stored_at and now < self.stored_at[vid] + self.ttl_ms

    def dist(self, a: str, b: str) -> int:
        return distance(self.location[a], self.location[b])

    def eligible(self, requester: str, kind: str, now: int, targets=(), radius=None) -> dict[str, Point]:
        """Targets whose location the requester is entitled to see right now."""
        out = {}
        mine = self.friends[requester]
        if kind == "pf":
            candidates = [t for t in dict.fromkeys(targets) if t in mine]
        elif kind == "f":
            candidates = list(mine)
        else:
            candidates = [v for v in self.location if v != requester and v not in mine]
        for t in candidates:
            if t not in self.location or t == requester or not self.live(t, now):
                continue
            d = self.dist(requester, t)
            if kind == "s":
                threshold = self.stranger_threshold[t]
            elif requester in self.friends[t]:
                threshold = self.friends[t][requester]
            else:
                continue
            if not oracle_compare(threshold, d):
                continue
            if radius is not None and not d < radius:
                continue
            out[t] = self.location[t]
        return out


# --- audits --------------------------------------------------------------------

def audit_sns_location_blindness(log, points) -> list[str]:
    """Packed plaintext coordinates must never cross an SNS link."""
    patterns = {p.pack(): p for p in points}
    findings = []
    for i, entry in enumerate(log):
        if not entry.touches("sns"):
            continue
        for raw, p in patterns.items():
            if raw in entry.raw:
                findings.append(f"frame {i} {entry.sender}->{entry.receiver} carries plaintext {tuple(p)}")
    return findings


RAW_MATCH_MIN_BYTES = 5


def _strings(obj):
    """Every string inside a message, dump or nested container."""
    if isinstance(obj, str):
        yield obj
    elif isinstance(obj, dict):
        for k, v in obj.items():
            yield from _strings(k)
            yield from _strings(v)
    elif isinstance(obj, (list, tuple, set, frozenset)):
        for v in obj:
            yield from _strings(v)
    elif is_dataclass(obj):
        for f in fields(obj):
            yield from _strings(getattr(obj, f.name))


def _mentions(vid: str, raw: bytes, obj) -> bool:
    # An identity of 5+ bytes turns up by chance in random ciphertext bytes
    # with probability about len(raw) / 2**40, so a raw search is meaningful.
    # Shorter identities are matched against decoded string fields instead.
    if len(vid.encode("utf-8")) >= RAW_MATCH_MIN_BYTES:
        return vid.encode("utf-8") in raw
    return any(s == vid for s in _strings(obj))


def audit_ls_identity_blindness(log, identities, ls_dumps) -> list[str]:
    """No identity string in any LS-adjacent frame or in LS state."""
    findings = []
    for i, entry in enumerate(log):
        if not entry.touches("ls:"):
            continue
        for vid in identities:
            if _mentions(vid, entry.raw, entry.message):
                findings.append(f"frame {i} {entry.sender}->{entry.receiver} carries identity {vid!r}")
    for dump in ls_dumps:
        text = json.dumps(dump).encode("utf-8")
        for vid in identities:
            if _mentions(vid, text, dump):
                findings.append(f"{dump.get('role')} state mentions identity {vid!r}")
    return findings


def audit_pid_rotation(pid_history: dict[int, dict]) -> list[str]:
    """Per-epoch PID sets are pairwise disjoint and no vehicle repeats a PID."""
    findings = []
    epochs = sorted(pid_history)
    sets = {e: set(pid_history[e].values()) for e in epochs}
    for i, a in enumerate(epochs):
        if len(sets[a]) != len(pid_history[a]):
            findings.append(f"epoch {a}: two vehicles share a PID")
        for b in epochs[i + 1:]:
            shared = sets[a] & sets[b]
            if shared:
                findings.append(f"epochs {a} and {b} share {len(shared)} PID(s)")
    return findings


# --- running -------------------------------------------------------------------

@dataclass
class QueryOutcome:
    index: int
    requester: str
    type: str
    at_ms: int
    params: dict
    returned: list[tuple[str, tuple[int, int]]]
    expected: list[tuple[str, tuple[int, int]]]
    error: str | None = None
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class ScenarioReport:
    seed: int
    epochs: int
    queries: list[QueryOutcome]
    audits: dict[str, list[str]]
    frames: list[dict]
    log: object = field(default=None, repr=False)
    ls_dumps: list[dict] = field(default_factory=list, repr=False)
    pid_history: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(q.ok for q in self.queries) and not any(self.audits.values())

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "epochs": self.epochs,
            "passed": self.passed,
            "queries": [dict(asdict(q), ok=q.ok) for q in self.queries],
            "audits": self.audits,
            "frames": self.frames,
        }


def _check(outcome: QueryOutcome, type_: str) -> None:
    got, want = outcome.returned, outcome.expected
    if type_ == "s":
        got_pts, want_pts = Counter(p for _, p in got), Counter(p for _, p in want)
        for p in (got_pts - want_pts).elements():
            outcome.violations.append(f"returned ineligible stranger location {p}")
        for p in (want_pts - got_pts).elements():
            outcome.violations.append(f"missed eligible stranger location {p}")
        return
    labels = [label for label, _ in got]
    if len(labels) != len(set(labels)):
        outcome.violations.append("duplicate labels in reply")
    got_map, want_map = dict(got), dict(want)
    for label, p in got_map.items():
        if want_map.get(label) != p:
            outcome.violations.append(f"returned {label} at {p}, which policy forbids or misplaces")
    for label in want_map.keys() - got_map.keys():
        outcome.violations.append(f"missed eligible friend {label}")


def run_scenario(cfg: ScenarioConfig, backend: str = "inproc") -> ScenarioReport:
    params = ComparisonParams(i_max=cfg.i_max)
    t_ms = round(cfg.update_cycle * 1000)
    ttl_ms = round(cfg.record_ttl * 1000)
    god = GodView(ttl_ms)
    outcomes: list[QueryOutcome] = []
    verdict_findings: list[str] = []
    specs = {v.id: v for v in cfg.fleet}

    with Deployment(ls_count=cfg.ls_count, params=params, paillier_bits=cfg.paillier_bits,
                    rsa_bits=cfg.rsa_bits, update_cycle_ms=t_ms, record_ttl_ms=ttl_ms,
                    dummy_count=cfg.dummy_count, seed=cfg.seed, backend=backend) as dep:
        for v in cfg.fleet:
            dep.add_vehicle(v.id, v.location, v.friends, v.stranger_threshold)
        queries = sorted(enumerate(cfg.queries), key=lambda iq: (iq[1].at_ms, iq[0]))

        for epoch in range(cfg.epochs):
            start = epoch * t_ms
            dep.clock.set(start)
            if epoch:
                dep.sns.epoch_advance(start)
            dep.purge()
            for v in cfg.fleet:
                client = dep.vehicles[v.id]
                where = v.location_at(epoch)
                if epoch == 0:
                    client.register(start)
                else:
                    client.update(start, where)
                god.record(v.id, where, v.friends, v.stranger_threshold, start)

            for index, q in queries:
                if not start <= q.at_ms < start + t_ms:
                    continue
                dep.clock.set(q.at_ms)
                dep.purge()
                seen = len(dep.sns.verdicts)
                outcomes.append(_run_query(dep, god, index, q))
                for rec in dep.sns.verdicts[seen:]:
                    d = god.dist(rec.requester, rec.target)
                    if rec.granted != oracle_compare(rec.threshold, d):
                        verdict_findings.append(f"query {rec.query_id}: {rec.target} for {rec.requester} "
                                                f"threshold {rec.threshold} distance {d} judged {rec.granted}")

        ls_dumps = [ls.dump() for ls in dep.location_servers]
        entries = dep.log.entries()
        audits = {
            "sns_location_blindness": audit_sns_location_blindness(entries, god.all_points),
            "ls_identity_blindness": audit_ls_identity_blindness(entries, specs, ls_dumps),
            "pid_rotation": audit_pid_rotation(dep.sns.pid_history),
            "verdict_correctness": verdict_findings,
        }
        frames = [{"direction": e.direction, "sender": e.sender, "receiver": e.receiver,
                   "tag": e.message.TAG, "message": type(e.message).__name__, "bytes": len(e.raw), "at_ms": e.timestamp}
                  for e in entries]
        return ScenarioReport(seed=cfg.seed, epochs=cfg.epochs, queries=outcomes, audits=audits,
                              frames=frames, log=dep.log, ls_dumps=ls_dumps,
                              pid_history={e: dict(m) for e, m in dep.sns.pid_history.items()})


def _run_query(dep: Deployment, god: GodView, index: int, q: QuerySpec) -> QueryOutcome:
    client = dep.vehicles[q.requester]
    now = dep.clock.now_ms()
    if q.type == "pf":
        msg = client.query_particular_friends(q.targets)
        params = {"targets": list(q.targets)}
    elif q.type == "f":
        msg = client.query_friends_within(q.radius)
        params = {"radius": q.radius}
    else:
        msg = client.query_strangers_within(q.radius)
        params = {"radius": q.radius}
    expected = god.eligible(q.requester, q.type, now, q.targets, q.radius if q.type != "pf" else None)
    outcome = QueryOutcome(index=index, requester=q.requester, type=q.type, at_ms=now, params=params,
                           returned=[], expected=sorted((k, tuple(p)) for k, p in expected.items()))
    if not god.live(q.requester, now):
        # the LS cannot encrypt results for a requester it no longer holds
        outcome.expected = []
    try:
        got = client.request(msg)
    except PplsError as exc:
        outcome.error = f"{exc.code}: {exc}"
        if god.live(q.requester, now):
            outcome.violations.append(f"query failed: {outcome.error}")
        return outcome
    outcome.returned = sorted((label, tuple(p)) for label, p in got)
    _check(outcome, q.type)
    return outcome


# --- fixtures --------------------------------------------------------------------

def three_vehicle_fixture(bob_threshold_for_alice: int = 50, seed: int = 7) -> ScenarioConfig:
    """alice at (1000,1000); bob 30 m away and a friend; carol 80 m away, a
    stranger with ds=200."""
    fleet = [
        VehicleSpec("alice", (1000, 1000), {"bob": 40}, 300),
        VehicleSpec("bob", (1018, 1024), {"alice": bob_threshold_for_alice}, 300),
        VehicleSpec("carol", (1048, 1064), {}, 200),
    ]
    queries = [
        QuerySpec("alice", "pf", 5, targets=["bob"]),
        QuerySpec("alice", "f", 10, radius=100),
        QuerySpec("alice", "s", 15, radius=100),
    ]
    return validate(ScenarioConfig(fleet=fleet, queries=queries, seed=seed))


def random_scenario(seed: int, n_vehicles: int = 20, epochs: int = 3, queries_per_epoch: int = 4,
                    area: int = 10_000, origin: int = 0, friend_prob: float = 0.3, ls_count: int = 2,
                    paillier_bits: int = 256, rsa_bits: int = 512, i_max: int = 1000) -> ScenarioConfig:
    """Random fleet in an ``area`` x ``area`` square at (origin, origin).

    The default is the 10 km square used for random fleets. Pass a smaller
    ``area`` (and a non-zero ``origin``) to make distances land near the
    friend-threshold range so both comparison outcomes occur often.
    """
    rng = random.Random(seed)
    ids = [f"vehicle-{k:03d}" for k in range(n_vehicles)]

    def spot():
        return (origin + rng.randrange(area), origin + rng.randrange(area))

    fleet = {vid: VehicleSpec(vid, spot(), {}, rng.choice(STRANGER_THRESHOLDS),
                              [spot() for _ in range(epochs - 1)]) for vid in ids}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if rng.random() < friend_prob:
                fleet[a].friends[b] = rng.choice(FRIEND_THRESHOLDS)
                fleet[b].friends[a] = rng.choice(FRIEND_THRESHOLDS)
    t = 60.0
    queries = []
    for epoch in range(epochs):
        for k in range(queries_per_epoch):
            requester = rng.choice(ids)
            kind = ("pf", "f", "s")[k % 3]
            at = epoch * t + 1 + k * (t - 2) / queries_per_epoch
            if kind == "pf":
                pool = list(fleet[requester].friends) + rng.sample(ids, 2)
                queries.append(QuerySpec(requester, kind, at, targets=rng.sample(pool, min(4, len(pool)))))
            else:
                queries.append(QuerySpec(requester, kind, at, radius=rng.choice((50, 100, 150, 200, 300))))
    return validate(ScenarioConfig(fleet=list(fleet.values()), queries=queries, ls_count=ls_count,
                                   i_max=i_max, paillier_bits=paillier_bits, rsa_bits=rsa_bits,
                                   update_cycle=t, record_ttl=75.0, dummy_count=1, epochs=epochs, seed=seed))
