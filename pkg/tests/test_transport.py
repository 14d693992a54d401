import threading

import pytest

from ppls import wire
from ppls.errors import PeerClosed, RemoteError, ThresholdOutOfRange, Timeout
from ppls.transport import SimClock, TransportLog, make_backend


def echo(msg, peer):
    if isinstance(msg, wire.Ack) and msg.detail == "fail":
        raise ThresholdOutOfRange("nope")
    if isinstance(msg, wire.Ack) and msg.detail == "crash":
        raise RuntimeError("boom")
    return wire.Ack(f"{peer}:{msg.detail}")


@pytest.fixture(params=["inproc", "socket"])
def backend(request):
    log, clock = TransportLog(), SimClock()
    b = make_backend(request.param, log, clock, timeout=5.0)
    b.listen("sns", echo)
    yield b, log, clock
    b.close()


def test_call_round_trip_and_log(backend):
    b, log, clock = backend
    clock.set(1234)
    ep = b.connect("vehicle:alice", "sns")
    assert ep.call(wire.Ack("hi")) == wire.Ack("vehicle:alice:hi")
    entries = log.entries()
    assert [(e.direction, e.sender, e.receiver) for e in entries] == [
        ("request", "vehicle:alice", "sns"), ("reply", "sns", "vehicle:alice")]
    assert entries[0].raw == wire.encode(wire.Ack("hi"))
    assert entries[0].message == wire.Ack("hi")
    assert all(e.timestamp == 1234 for e in entries)
    assert entries[0].touches("sns") and entries[0].touches("vehicle:") and not entries[0].touches("ls:")


def test_send_then_recv_same_message(backend):
    b, _, _ = backend
    ep = b.connect("vehicle:bob", "sns")
    ep.send(wire.Ack("x"))
    assert ep.recv() == wire.Ack("vehicle:bob:x")


def test_every_send_logged_once(backend):
    b, log, _ = backend
    ep = b.connect("vehicle:bob", "sns")
    for i in range(20):
        ep.call(wire.Ack(str(i)))
    assert len(log) == 40


def test_error_frames_raise_typed_errors(backend):
    b, _, _ = backend
    ep = b.connect("vehicle:bob", "sns")
    with pytest.raises(ThresholdOutOfRange):
        ep.call(wire.Ack("fail"))
    with pytest.raises(RemoteError):
        ep.call(wire.Ack("crash"))
    assert ep.call(wire.Ack("still")) == wire.Ack("vehicle:bob:still")  # server survived


def test_recv_on_closed_peer(backend):
    b, _, _ = backend
    ep = b.connect("vehicle:bob", "sns")
    ep.close()
    with pytest.raises(PeerClosed):
        ep.recv()
    with pytest.raises(PeerClosed):
        ep.send(wire.Ack())


def test_timeout(backend):
    b, _, _ = backend
    ep = b.connect("vehicle:bob", "sns")
    with pytest.raises(Timeout):
        ep.recv(timeout=0.05)


def test_connect_unknown_role(backend):
    b, _, _ = backend
    with pytest.raises(PeerClosed):
        b.connect("vehicle:bob", "ls:9")


def test_parallel_connections(backend):
    b, _, _ = backend
    results = {}

    def worker(i):
        ep = b.connect(f"vehicle:{i}", "sns")
        results[i] = [ep.call(wire.Ack(str(k))).detail for k in range(5)]

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == {i: [f"vehicle:{i}:{k}" for k in range(5)] for i in range(6)}


def test_socket_peer_closed_when_server_goes_away():
    log, clock = TransportLog(), SimClock()
    b = make_backend("socket", log, clock, timeout=5.0)
    b.listen("sns", echo)
    ep = b.connect("vehicle:a", "sns")
    assert ep.call(wire.Ack("x")).detail == "vehicle:a:x"
    b.close()
    with pytest.raises(PeerClosed):
        ep.recv()


def test_clock():
    c = SimClock(5)
    assert c.advance(10) == 15
    c.set(20)
    assert c.now_ms() == 20
    with pytest.raises(ValueError):
        c.set(10)


def test_unknown_backend():
    with pytest.raises(ValueError):
        make_backend("carrier-pigeon", TransportLog(), SimClock())
