"""Message catalog and the binary frame codec.

Frame layout::

    b"PPLS" | version (0x01) | tag byte | body length (u32 BE) | body

Body fields follow declaration order. Variable-length fields carry a u32 BE
length prefix, integers are big-endian magnitudes, points are two u32 BE,
sequences are a u32 BE count followed by their items, optionals are a
presence byte followed by the value.

Codecs are derived from each message dataclass's type hints, so adding a
message means declaring a dataclass with a ``TAG``.
"""
from __future__ import annotations

import enum
import struct
import types
import typing
from dataclasses import dataclass, fields, is_dataclass
from functools import lru_cache
from typing import Any, Callable, ClassVar, Optional

from ._numtheory import int_to_bytes
from .asym import NONCE_BYTES, AsymPublicKey, HybridCiphertext, PseudoIdentity, Signature
from .distcmp import ComparisonBatch
from .errors import MalformedFrame, UnknownTag
from .geo import Point
from .paillier import PaillierCiphertext, PaillierPublicKey

MAGIC = b"PPLS"
VERSION = 0x01
HEADER = struct.Struct(">4sBBI")
MAX_BODY = 64 * 1024 * 1024

_U32 = struct.Struct(">I")


class QueryKind(enum.IntEnum):
    PARTICULAR_FRIENDS = 0x01  # pf
    FRIENDS_WITHIN = 0x02  # f
    STRANGERS_WITHIN = 0x03  # s


# --- message catalog -------------------------------------------------------

_REGISTRY: dict[int, type["Message"]] = {}


class Message:
    TAG: ClassVar[int]

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        tag = cls.__dict__.get("TAG")
        if tag is not None:
            if tag in _REGISTRY:
                raise TypeError(f"duplicate message tag {tag:#x}")
            _REGISTRY[tag] = cls


@dataclass(frozen=True)
class Registration(Message):
    TAG = 0x01
    vehicle_id: str
    enc_location: HybridCiphertext
    enc_public_key: HybridCiphertext
    public_key: AsymPublicKey
    friends: tuple[str, ...]
    friend_thresholds: dict[str, int]
    stranger_threshold: int
    ts: int
    signature: Signature


@dataclass(frozen=True)
class Update(Message):
    TAG = 0x02
    vehicle_id: str
    enc_location: HybridCiphertext
    enc_public_key: HybridCiphertext
    public_key: AsymPublicKey
    friends: tuple[str, ...]
    friend_thresholds: dict[str, int]
    stranger_threshold: int
    ts: int
    signature: Signature


@dataclass(frozen=True)
class StoreRecord(Message):
    TAG = 0x03
    pid: PseudoIdentity
    enc_location: HybridCiphertext
    enc_public_key: HybridCiphertext
    ttl_ms: int


@dataclass(frozen=True)
class QueryParticularFriends(Message):
    TAG = 0x04
    vehicle_id: str
    enc_location: HybridCiphertext
    targets: tuple[str, ...]
    kind: QueryKind = QueryKind.PARTICULAR_FRIENDS


@dataclass(frozen=True)
class QueryFriendsWithin(Message):
    TAG = 0x05
    vehicle_id: str
    enc_location: HybridCiphertext
    radius: int
    kind: QueryKind = QueryKind.FRIENDS_WITHIN


@dataclass(frozen=True)
class QueryStrangersWithin(Message):
    TAG = 0x06
    vehicle_id: str
    enc_location: HybridCiphertext
    radius: int
    kind: QueryKind = QueryKind.STRANGERS_WITHIN


@dataclass(frozen=True)
class SubsetDispatch(Message):
    TAG = 0x07
    query_id: int
    ls_index: int
    requester_pid: PseudoIdentity
    enc_location: HybridCiphertext
    kind: QueryKind
    subset: tuple[PseudoIdentity, ...]
    threshold_cts: tuple[PaillierCiphertext, ...]
    pk_m: PaillierPublicKey
    radius: Optional[int] = None


@dataclass(frozen=True)
class RangePreQuery(Message):
    TAG = 0x08
    query_id: int
    requester_pid: PseudoIdentity
    radius: int
    scope: str = "all"


@dataclass(frozen=True)
class RangePreResult(Message):
    TAG = 0x09
    query_id: int
    pids: tuple[PseudoIdentity, ...]


@dataclass(frozen=True)
class BatchEntry:
    pid: PseudoIdentity
    batch: Optional[ComparisonBatch]  # None is the no-match marker


@dataclass(frozen=True)
class ComparisonBatchMsg(Message):
    TAG = 0x0A
    query_id: int
    ls_index: int
    entries: tuple[BatchEntry, ...]


@dataclass(frozen=True)
class Verdict:
    pid: PseudoIdentity
    granted: bool


@dataclass(frozen=True)
class VerdictMsg(Message):
    TAG = 0x0B
    query_id: int
    ls_index: int
    verdicts: tuple[Verdict, ...]


@dataclass(frozen=True)
class LocatedResult:
    pid: PseudoIdentity
    enc_location: HybridCiphertext


@dataclass(frozen=True)
class LocationResultMsg(Message):
    TAG = 0x0C
    query_id: int
    ls_index: int
    results: tuple[LocatedResult, ...]


@dataclass(frozen=True)
class ReplyItem:
    label: str
    enc_location: HybridCiphertext


@dataclass(frozen=True)
class ReplyToVehicle(Message):
    TAG = 0x0D
    query_id: int
    items: tuple[ReplyItem, ...]


@dataclass(frozen=True)
class Ack(Message):
    TAG = 0x0E
    detail: str = ""


@dataclass(frozen=True)
class Error(Message):
    TAG = 0x0F
    code: str
    detail: str = ""


def signed_payload(vehicle_id: str, ts: int, public_key: AsymPublicKey) -> bytes:
    """Bytes covered by a registration/update signature: ID, ts, and the key
    being put on file."""
    raw = vehicle_id.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw + struct.pack(">Q", ts) + public_key.to_bytes()


def message_types() -> dict[int, type[Message]]:
    return dict(_REGISTRY)


# --- codec -----------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise MalformedFrame("truncated body")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def var(self) -> bytes:
        return self.take(self.u32())


def _var(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def _enc_int(v: int) -> bytes:
    return _var(int_to_bytes(v))


def _dec_int(r: _Reader) -> int:
    raw = r.var()
    if not raw:
        raise MalformedFrame("empty integer field")
    return int.from_bytes(raw, "big")


def _enc_str(v: str) -> bytes:
    return _var(v.encode("utf-8"))


def _dec_str(r: _Reader) -> str:
    try:
        return r.var().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFrame("invalid utf-8 string") from exc


def _dec_bool(r: _Reader) -> bool:
    b = r.u8()
    if b > 1:
        raise MalformedFrame("boolean byte must be 0 or 1")
    return bool(b)


def _dec_kind(r: _Reader) -> QueryKind:
    try:
        return QueryKind(r.u8())
    except ValueError as exc:
        raise MalformedFrame("unknown query kind") from exc


def _dec_pid(r: _Reader) -> PseudoIdentity:
    try:
        return PseudoIdentity.fromhex(r.var().decode("ascii"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise MalformedFrame("bad pseudo-identity") from exc


def _dec_hybrid(r: _Reader) -> HybridCiphertext:
    wrapped = r.var()
    nonce = r.take(NONCE_BYTES)
    return HybridCiphertext(wrapped_key=wrapped, nonce=nonce, body=r.var())


_LEAF: dict[Any, tuple[Callable[[Any], bytes], Callable[[_Reader], Any]]] = {
    int: (_enc_int, _dec_int),
    str: (_enc_str, _dec_str),
    bytes: (_var, lambda r: r.var()),
    bool: (lambda v: bytes([int(v)]), _dec_bool),
    QueryKind: (lambda v: bytes([int(v)]), _dec_kind),
    Point: (lambda v: v.pack(), lambda r: Point.unpack(r.take(8))),
    PseudoIdentity: (lambda v: _var(v.hex().encode("ascii")), _dec_pid),
    HybridCiphertext: (lambda v: v.to_bytes(), _dec_hybrid),
    Signature: (lambda v: _enc_int(v.value), lambda r: Signature(_dec_int(r))),
    PaillierCiphertext: (lambda v: _enc_int(v.value), lambda r: PaillierCiphertext(_dec_int(r))),
    PaillierPublicKey: (lambda v: _enc_int(v.n) + _enc_int(v.g),
                        lambda r: PaillierPublicKey(n=_dec_int(r), g=_dec_int(r))),
    AsymPublicKey: (lambda v: _enc_int(v.n) + _enc_int(v.e),
                    lambda r: AsymPublicKey(n=_dec_int(r), e=_dec_int(r))),
}


@lru_cache(maxsize=None)
def _codec(tp) -> tuple[Callable[[Any], bytes], Callable[[_Reader], Any]]:
    if tp in _LEAF:
        return _LEAF[tp]
    origin, args = typing.get_origin(tp), typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        inner = [a for a in args if a is not type(None)]
        if len(inner) != 1 or len(args) != 2:
            raise TypeError(f"unsupported union {tp}")
        enc, dec = _codec(inner[0])

        def enc_opt(v):
            return b"\x00" if v is None else b"\x01" + enc(v)

        def dec_opt(r):
            flag = r.u8()
            if flag > 1:
                raise MalformedFrame("presence byte must be 0 or 1")
            return dec(r) if flag else None
        return enc_opt, dec_opt
    if origin is tuple:
        enc, dec = _codec(args[0])
        return (lambda v: _U32.pack(len(v)) + b"".join(enc(x) for x in v),
                lambda r: tuple(dec(r) for _ in range(r.u32())))
    if origin is dict:
        kenc, kdec = _codec(args[0])
        venc, vdec = _codec(args[1])

        def dec_map(r):
            out = {}
            for _ in range(r.u32()):
                k = kdec(r)
                if k in out:
                    raise MalformedFrame("duplicate map key")
                out[k] = vdec(r)
            return out
        return (lambda v: _U32.pack(len(v)) + b"".join(kenc(k) + venc(x) for k, x in v.items()),
                dec_map)
    if is_dataclass(tp):
        hints = typing.get_type_hints(tp)
        parts = [(f.name, *_codec(hints[f.name])) for f in fields(tp)]
        return (lambda v: b"".join(enc(getattr(v, name)) for name, enc, _ in parts),
                lambda r: tp(**{name: dec(r) for name, _, dec in parts}))
    raise TypeError(f"no wire codec for {tp!r}")


# ComparisonBatch: u32 count then each ciphertext
_LEAF[ComparisonBatch] = (
    lambda v: _codec(tuple[PaillierCiphertext, ...])[0](v.items),
    lambda r: ComparisonBatch(_codec(tuple[PaillierCiphertext, ...])[1](r)),
)


def encode(msg: Message) -> bytes:
    tag = type(msg).__dict__.get("TAG")
    if tag is None or _REGISTRY.get(tag) is not type(msg):
        raise TypeError(f"{type(msg).__name__} is not a registered message")
    body = _codec(type(msg))[0](msg)
    return HEADER.pack(MAGIC, VERSION, tag, len(body)) + body


def parse_header(header: bytes) -> tuple[int, int]:
    """Validate a frame header and return ``(tag, body_length)``."""
    if len(header) != HEADER.size:
        raise MalformedFrame("truncated header")
    magic, version, tag, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise MalformedFrame("bad magic")
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version:#x}")
    if length > MAX_BODY:
        raise MalformedFrame("body too large")
    return tag, length


def decode(frame: bytes) -> Message:
    tag, length = parse_header(frame[:HEADER.size])
    body = frame[HEADER.size:]
    if len(body) != length:
        raise MalformedFrame("body length mismatch")
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise UnknownTag(f"unknown tag {tag:#x}")
    reader = _Reader(body)
    try:
        msg = _codec(cls)[1](reader)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, MalformedFrame):
            raise
        raise MalformedFrame(str(exc)) from exc
    if reader.pos != len(body):
        raise MalformedFrame("trailing bytes in body")
    fixed_kind = cls.__dict__.get("kind")  # query classes default their kind
    if fixed_kind is not None and msg.kind != fixed_kind:
        raise MalformedFrame("query kind does not match message tag")
    return msg
