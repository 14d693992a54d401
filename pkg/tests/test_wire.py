import dataclasses
import struct
import typing

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from ppls import wire
from ppls.asym import AsymPublicKey, HybridCiphertext, PseudoIdentity, Signature
from ppls.distcmp import ComparisonBatch
from ppls.errors import MalformedFrame, UnknownTag
from ppls.geo import Point
from ppls.paillier import PaillierCiphertext, PaillierPublicKey

big = st.integers(min_value=0, max_value=2**2048)
text = st.text(max_size=40)

LEAVES = {
    int: st.integers(min_value=0, max_value=2**80),
    str: text,
    bool: st.booleans(),
    bytes: st.binary(max_size=64),
    Point: st.builds(Point, st.integers(0, 10**6 - 1), st.integers(0, 10**6 - 1)),
    PseudoIdentity: st.builds(PseudoIdentity, st.binary(min_size=16, max_size=16)),
    HybridCiphertext: st.builds(HybridCiphertext, st.binary(max_size=300), st.binary(min_size=12, max_size=12),
                                st.binary(max_size=300)),
    Signature: st.builds(Signature, big),
    PaillierCiphertext: st.builds(PaillierCiphertext, big),
    PaillierPublicKey: st.builds(PaillierPublicKey, st.integers(2, 2**1024), big),
    AsymPublicKey: st.builds(AsymPublicKey, big, big),
    ComparisonBatch: st.builds(ComparisonBatch, st.lists(st.builds(PaillierCiphertext, big), max_size=5)
                               .map(tuple)),
    wire.QueryKind: st.sampled_from(wire.QueryKind),
}


def strategy_for(tp):
    if tp in LEAVES:
        return LEAVES[tp]
    origin, args = typing.get_origin(tp), typing.get_args(tp)
    if origin is typing.Union:
        inner = next(a for a in args if a is not type(None))
        return st.none() | strategy_for(inner)
    if origin is tuple:
        return st.lists(strategy_for(args[0]), max_size=4).map(tuple)
    if origin is dict:
        return st.dictionaries(strategy_for(args[0]), strategy_for(args[1]), max_size=4)
    if dataclasses.is_dataclass(tp):
        hints = typing.get_type_hints(tp)
        kwargs = {f.name: strategy_for(hints[f.name]) for f in dataclasses.fields(tp)}
        fixed = tp.__dict__.get("kind")
        if isinstance(fixed, wire.QueryKind):
            kwargs["kind"] = st.just(fixed)
        return st.builds(tp, **kwargs)
    raise TypeError(tp)


ALL_TYPES = sorted(wire.message_types().items())
any_message = st.one_of([strategy_for(cls) for _, cls in ALL_TYPES])


def test_catalog_is_complete():
    assert [tag for tag, _ in ALL_TYPES] == list(range(0x01, 0x10))


@pytest.mark.parametrize("tag,cls", ALL_TYPES, ids=[c.__name__ for _, c in ALL_TYPES])
@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(data=st.data())
def test_round_trip_every_variant(tag, cls, data):
    msg = data.draw(strategy_for(cls))
    frame = wire.encode(msg)
    assert frame[:4] == b"PPLS" and frame[4] == 1 and frame[5] == tag
    assert struct.unpack(">I", frame[6:10])[0] == len(frame) - 10
    assert wire.decode(frame) == msg
    assert wire.encode(wire.decode(frame)) == frame


def test_query_kind_bytes():
    assert [int(k) for k in wire.QueryKind] == [1, 2, 3]
    ct = HybridCiphertext(b"w", b"n" * 12, b"b")
    for msg, kind in ((wire.QueryParticularFriends("a", ct, ("b",)), 1),
                      (wire.QueryFriendsWithin("a", ct, 100), 2),
                      (wire.QueryStrangersWithin("a", ct, 100), 3)):
        assert wire.encode(msg)[-1] == kind


def test_f_query_carries_radius_and_kind():
    msg = wire.QueryFriendsWithin("alice", HybridCiphertext(b"", b"\x00" * 12, b""), 100)
    back = wire.decode(wire.encode(msg))
    assert back.radius == 100 and back.kind is wire.QueryKind.FRIENDS_WITHIN


@settings(max_examples=50, deadline=None)
@given(msg=any_message, data=st.data())
def test_truncated_frames_rejected(msg, data):
    frame = wire.encode(msg)
    cut = data.draw(st.integers(0, len(frame) - 1))
    with pytest.raises(MalformedFrame):
        wire.decode(frame[:cut])


@settings(max_examples=30, deadline=None)
@given(msg=any_message)
def test_trailing_bytes_rejected(msg):
    frame = wire.encode(msg)
    body = frame[10:] + b"\x00"
    with pytest.raises(MalformedFrame):
        wire.decode(frame[:6] + struct.pack(">I", len(body)) + body)


def test_version_two_rejected():
    frame = bytearray(wire.encode(wire.Ack("x")))
    frame[4] = 0x02
    with pytest.raises(MalformedFrame):
        wire.decode(bytes(frame))


def test_bad_magic_rejected():
    frame = wire.encode(wire.Ack("x"))
    with pytest.raises(MalformedFrame):
        wire.decode(b"XPLS" + frame[4:])


def test_unknown_tag():
    frame = bytearray(wire.encode(wire.Ack("x")))
    frame[5] = 0x7F
    with pytest.raises(UnknownTag):
        wire.decode(bytes(frame))


def test_kind_mismatching_tag_rejected():
    frame = bytearray(wire.encode(wire.QueryFriendsWithin("a", HybridCiphertext(b"", b"\x00" * 12, b""), 5)))
    frame[-1] = 0x03
    with pytest.raises(MalformedFrame):
        wire.decode(bytes(frame))


def test_bad_presence_byte_rejected():
    msg = wire.RangePreQuery(1, PseudoIdentity(bytes(16)), 10)
    ok = wire.encode(msg)
    assert wire.decode(ok) == msg
    ct = HybridCiphertext(b"", b"\x00" * 12, b"")
    disp = wire.SubsetDispatch(1, 0, PseudoIdentity(bytes(16)), ct, wire.QueryKind.FRIENDS_WITHIN, (), (),
                               PaillierPublicKey(143, 144), None)
    frame = bytearray(wire.encode(disp))
    assert frame[-1] == 0
    frame[-1] = 2
    with pytest.raises(MalformedFrame):
        wire.decode(bytes(frame))


def test_encode_rejects_unregistered():
    with pytest.raises(TypeError):
        wire.encode(wire.Verdict(PseudoIdentity(bytes(16)), True))


def test_signed_payload_binds_all_fields():
    pk = AsymPublicKey(3233, 17)
    base = wire.signed_payload("alice", 5, pk)
    assert base != wire.signed_payload("alicf", 5, pk)
    assert base != wire.signed_payload("alice", 6, pk)
    assert base != wire.signed_payload("alice", 5, AsymPublicKey(3233, 19))
