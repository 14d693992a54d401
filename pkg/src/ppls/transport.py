"""Connection-oriented message transport with a shared frame log.

Two backends share one contract: ``listen(role, handler)`` exposes a role,
``connect(client_role, server_role)`` returns a client ``Endpoint``. Every
``send`` encodes the message, appends the raw frame to the ``TransportLog``
and then delivers it, so audits can run over exactly the bytes that crossed
each link.
"""
from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
from dataclasses import dataclass
from typing import Callable, Iterator

from . import wire
from .errors import PeerClosed, PplsError, Timeout, error_for_code

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0

Handler = Callable[[wire.Message, str], wire.Message]


class SimClock:
    """Integer-millisecond clock shared by every role in one process."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now

    def set(self, ms: int) -> None:
        with self._lock:
            if ms < self._now:
                raise ValueError("simulated time cannot run backwards")
            self._now = ms

    def advance(self, ms: int) -> int:
        with self._lock:
            self._now += ms
            return self._now


@dataclass(frozen=True)
class LogEntry:
    direction: str  # "request" (client to server) or "reply"
    sender: str
    receiver: str
    raw: bytes
    message: wire.Message
    timestamp: int

    def touches(self, role_prefix: str) -> bool:
        return self.sender.startswith(role_prefix) or self.receiver.startswith(role_prefix)


class TransportLog:
    def __init__(self):
        self._entries: list[LogEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: LogEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def entries(self) -> list[LogEntry]:
        with self._lock:
            return list(self._entries)

    def __iter__(self) -> Iterator[LogEntry]:
        return iter(self.entries())

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


class Endpoint:
    """One side of a connection. Not safe for concurrent use."""

    def __init__(self, role: str, peer_role: str, log_: TransportLog, clock: SimClock,
                 is_client: bool, timeout: float | None = DEFAULT_TIMEOUT):
        self.role = role
        self.peer_role = peer_role
        self.timeout = timeout
        self._log = log_
        self._clock = clock
        self._direction = "request" if is_client else "reply"
        self._lock = threading.Lock()  # one session at a time on a connection

    def send(self, msg: wire.Message) -> None:
        raw = wire.encode(msg)
        self._log.append(LogEntry(self._direction, self.role, self.peer_role, raw, msg,
                                  self._clock.now_ms()))
        self._send_raw(raw)

    def recv(self, timeout: float | None = ...) -> wire.Message:
        return wire.decode(self._recv_raw(self.timeout if timeout is ... else timeout))

    def call(self, msg: wire.Message) -> wire.Message:
        """Send a request and wait for its reply; ``Error`` replies are raised."""
        with self._lock:
            self.send(msg)
            reply = self.recv()
        if isinstance(reply, wire.Error):
            raise error_for_code(reply.code, reply.detail)
        return reply

    def close(self) -> None:
        raise NotImplementedError

    def _send_raw(self, raw: bytes) -> None:
        raise NotImplementedError

    def _recv_raw(self, timeout: float | None) -> bytes:
        raise NotImplementedError


def serve(endpoint: Endpoint, handler: Handler) -> None:
    """Answer requests on ``endpoint`` until the peer closes."""
    while True:
        try:
            msg = endpoint.recv(timeout=None)
        except PeerClosed:
            break
        try:
            reply = handler(msg, endpoint.peer_role)
        except PplsError as exc:
            reply = wire.Error(code=exc.code, detail=str(exc))
        except Exception as exc:  # keep serving; the client sees an Error frame
            log.exception("%s failed handling %s", endpoint.role, type(msg).__name__)
            reply = wire.Error(code="Internal", detail=type(exc).__name__)
        try:
            endpoint.send(reply)
        except PeerClosed:
            break


# --- in-process backend ----------------------------------------------------

_CLOSED = object()


class InProcEndpoint(Endpoint):
    def __init__(self, *args, inbox: queue.Queue, outbox: queue.Queue, **kwargs):
        super().__init__(*args, **kwargs)
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False

    def _send_raw(self, raw: bytes) -> None:
        if self._closed:
            raise PeerClosed("endpoint closed")
        self._outbox.put(raw)

    def _recv_raw(self, timeout: float | None) -> bytes:
        if self._closed:
            raise PeerClosed("endpoint closed")
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise Timeout(f"{self.role} waited {timeout}s for {self.peer_role}") from None
        if item is _CLOSED:
            self._inbox.put(_CLOSED)
            raise PeerClosed(f"{self.peer_role} closed the connection")
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


class InProcBackend:
    """Ordered in-memory queues; each accepted connection gets a server thread."""

    def __init__(self, log_: TransportLog, clock: SimClock, timeout: float | None = DEFAULT_TIMEOUT):
        self.log = log_
        self.clock = clock
        self.timeout = timeout
        self._handlers: dict[str, Handler] = {}
        self._threads: list[threading.Thread] = []
        self._endpoints: list[Endpoint] = []

    def listen(self, role: str, handler: Handler) -> None:
        self._handlers[role] = handler

    def connect(self, client_role: str, server_role: str) -> Endpoint:
        handler = self._handlers.get(server_role)
        if handler is None:
            raise PeerClosed(f"nobody listens as {server_role}")
        up, down = queue.Queue(), queue.Queue()
        client = InProcEndpoint(client_role, server_role, self.log, self.clock, True,
                                self.timeout, inbox=down, outbox=up)
        server = InProcEndpoint(server_role, client_role, self.log, self.clock, False,
                                self.timeout, inbox=up, outbox=down)
        t = threading.Thread(target=serve, args=(server, handler), daemon=True,
                             name=f"{server_role}<-{client_role}")
        t.start()
        self._threads.append(t)
        self._endpoints.append(client)
        return client

    def close(self) -> None:
        for ep in self._endpoints:
            ep.close()
        for t in self._threads:
            t.join(timeout=5)


# --- socket backend --------------------------------------------------------

_ROLE_PREFIX = struct.Struct(">H")


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise PeerClosed("connection closed by peer")
        buf += chunk
    return bytes(buf)


class SocketEndpoint(Endpoint):
    def __init__(self, *args, sock: socket.socket, **kwargs):
        super().__init__(*args, **kwargs)
        self._sock = sock
        self._closed = False

    def _send_raw(self, raw: bytes) -> None:
        if self._closed:
            raise PeerClosed("endpoint closed")
        try:
            self._sock.sendall(raw)
        except OSError as exc:
            raise PeerClosed(str(exc)) from exc

    def _recv_raw(self, timeout: float | None) -> bytes:
        if self._closed:
            raise PeerClosed("endpoint closed")
        self._sock.settimeout(timeout)
        try:
            header = _recv_exact(self._sock, wire.HEADER.size)
            _, length = wire.parse_header(header)
            return header + _recv_exact(self._sock, length)
        except socket.timeout:
            raise Timeout(f"{self.role} waited {timeout}s for {self.peer_role}") from None
        except OSError as exc:
            if self._closed:
                raise PeerClosed("endpoint closed") from exc
            raise PeerClosed(str(exc)) from exc

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()


class SocketBackend:
    """TCP backend. Each listening role gets its own port on ``host``.

    A connection opens with a short preamble naming the client role (u16
    length + UTF-8) so the server side can label its log entries; the
    preamble is not a frame and is not logged.
    """

    def __init__(self, log_: TransportLog, clock: SimClock, timeout: float | None = DEFAULT_TIMEOUT,
                 host: str = "127.0.0.1", ports: dict[str, int] | None = None):
        self.log = log_
        self.clock = clock
        self.timeout = timeout
        self.host = host
        self._ports = dict(ports or {})
        self.addresses: dict[str, tuple[str, int]] = {}
        self._listeners: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        self._endpoints: list[Endpoint] = []
        self._stopping = threading.Event()

    def listen(self, role: str, handler: Handler) -> tuple[str, int]:
        srv = socket.create_server((self.host, self._ports.get(role, 0)))
        self.addresses[role] = srv.getsockname()[:2]
        self._listeners.append(srv)
        t = threading.Thread(target=self._accept_loop, args=(srv, role, handler), daemon=True,
                             name=f"accept:{role}")
        t.start()
        self._threads.append(t)
        return self.addresses[role]

    def _accept_loop(self, srv: socket.socket, role: str, handler: Handler) -> None:
        while not self._stopping.is_set():
            try:
                sock, _ = srv.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            try:
                (n,) = _ROLE_PREFIX.unpack(_recv_exact(sock, _ROLE_PREFIX.size))
                peer = _recv_exact(sock, n).decode("utf-8")
            except (PeerClosed, UnicodeDecodeError):
                sock.close()
                continue
            ep = SocketEndpoint(role, peer, self.log, self.clock, False, self.timeout, sock=sock)
            self._endpoints.append(ep)
            t = threading.Thread(target=serve, args=(ep, handler), daemon=True, name=f"{role}<-{peer}")
            t.start()
            self._threads.append(t)

    def connect(self, client_role: str, server_role: str) -> Endpoint:
        addr = self.addresses.get(server_role)
        if addr is None:
            raise PeerClosed(f"nobody listens as {server_role}")
        sock = socket.create_connection(addr)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        name = client_role.encode("utf-8")
        sock.sendall(_ROLE_PREFIX.pack(len(name)) + name)
        ep = SocketEndpoint(client_role, server_role, self.log, self.clock, True, self.timeout, sock=sock)
        self._endpoints.append(ep)
        return ep

    def close(self) -> None:
        self._stopping.set()
        for ep in self._endpoints:
            ep.close()
        for srv in self._listeners:
            try:
                srv.shutdown(socket.SHUT_RDWR)  # wakes a thread blocked in accept()
            except OSError:
                pass
            srv.close()
        for t in self._threads:
            t.join(timeout=5)


def make_backend(name: str, log_: TransportLog, clock: SimClock, timeout: float | None = DEFAULT_TIMEOUT):
    if name == "inproc":
        return InProcBackend(log_, clock, timeout)
    if name == "socket":
        return SocketBackend(log_, clock, timeout)
    raise ValueError(f"unknown transport backend {name!r}")
