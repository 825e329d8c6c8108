"""Content-oblivious notary: relays ciphertext, signs the record chain.

The notary sits between the prover and the target server. It forwards
encrypted records in both directions without parsing their payloads,
keeps an ordered log of (direction, ciphertext hash, plaintext length)
per session, enforces the per-direction capacity the session was opened
with, and on request signs a statement over the log. It never holds a
decryption key, so the signed statement attests only to what bytes
crossed the wire, not to what they said.
"""

from __future__ import annotations

import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from . import frames, toytls
from .canonical import canonical_bytes, canonical_loads
from .errors import CapacityExceeded, ProtocolError
from .frames import Frame
from .keys import SigningKey, key_fingerprint
from .toytls import TargetServer

STATE_OPEN = "open"
STATE_RELAYING = "relaying"
STATE_FINALIZED = "finalized"
STATE_ABORTED = "aborted"

_STATE_ORDER = [STATE_OPEN, STATE_RELAYING, STATE_FINALIZED, STATE_ABORTED]

# Frame types whose payloads the notary must treat as opaque ciphertext.
_OPAQUE_TYPES = {
    frames.HS_UP,
    frames.HS_DOWN,
    frames.RELAY_UP,
    frames.RELAY_DOWN,
    frames.POST_UP,
    frames.POST_DOWN,
}


@dataclass
class LedgerEntry:
    domain: str
    cap_up: int
    cap_down: int
    opened_at: int = 0
    state: str = STATE_OPEN
    used_up: int = 0
    used_down: int = 0
    records: list[tuple[str, str, int]] = field(default_factory=list)
    statement_frame: Frame | None = None
    abort_reason: str = ""

    def advance(self, state: str) -> None:
        if _STATE_ORDER.index(state) < _STATE_ORDER.index(self.state):
            raise ProtocolError(
                f"session state cannot move from {self.state} to {state}"
            )
        self.state = state


class SessionLedger:
    """Thread-safe map of session_id to its ledger entry."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, LedgerEntry] = {}

    def open(self, session_id: str, entry: LedgerEntry) -> None:
        with self._lock:
            if session_id in self._entries:
                raise ProtocolError(f"session {session_id!r} already open")
            self._entries[session_id] = entry

    def get(self, session_id: str) -> LedgerEntry:
        with self._lock:
            return self._entries[session_id]

    def session_ids(self) -> list[str]:
        with self._lock:
            return list(self._entries)


class NotarySession:
    """One prover-facing session: relay, log, enforce capacity, sign once."""

    def __init__(self, service: "NotaryService", session_id: str, entry: LedgerEntry):
        self.service = service
        self.session_id = session_id
        self.entry = entry
        server = service.resolver(entry.domain)
        # The notary is also the TCP relay to the server, so knowing which
        # server key it connected to is transport metadata, not content.
        self._server_fingerprint = key_fingerprint(server.signing_key.public_string)
        self._server = server.open_connection(session_id)

    def handle(self, frame: Frame) -> list[Frame]:
        self.service.observe(frame)
        if self.entry.state == STATE_ABORTED:
            return [self._abort_frame()]
        try:
            return self._dispatch(frame)
        except CapacityExceeded as exc:
            return self._abort(str(exc))
        except ProtocolError as exc:
            return self._abort(f"protocol error: {exc}")

    def _dispatch(self, frame: Frame) -> list[Frame]:
        if frame.type == frames.HS_UP:
            return self._forward(frame)
        if frame.type == frames.RELAY_UP:
            self._log("up", frame.payload)
            self._forward(frame)
            return [Frame(frames.ACK, b"")]
        if frame.type == frames.END_UP:
            down = self._forward(frame)
            for f in down:
                if f.type == frames.RELAY_DOWN:
                    self._log("down", f.payload)
            return down
        if frame.type == frames.FIN:
            return [self._statement()]
        if frame.type == frames.POST_UP:
            return self._forward(frame)
        if frame.type == frames.CLOSE:
            self._forward(frame)
            if self.entry.state != STATE_FINALIZED:
                self.entry.advance(STATE_ABORTED)
                self.entry.abort_reason = "closed before statement"
            return []
        raise ProtocolError(f"notary: unexpected frame type {frame.type:#x}")

    def _forward(self, frame: Frame) -> list[Frame]:
        replies = self._server.handle(frame)
        for reply in replies:
            self.service.observe(reply)
        return replies

    def _log(self, direction: str, wire: bytes) -> None:
        if self.entry.statement_frame is not None:
            raise ProtocolError("record after statement was issued")
        self.entry.advance(STATE_RELAYING)
        plaintext_len = len(wire) - toytls.TAG_LEN
        if plaintext_len < 0:
            raise ProtocolError("record shorter than its MAC tag")
        if direction == "up":
            self.entry.used_up += plaintext_len
            if self.entry.used_up > self.entry.cap_up:
                raise CapacityExceeded(
                    f"up capacity {self.entry.cap_up} exceeded at {self.entry.used_up}"
                )
        else:
            self.entry.used_down += plaintext_len
            if self.entry.used_down > self.entry.cap_down:
                raise CapacityExceeded(
                    f"down capacity {self.entry.cap_down} exceeded at {self.entry.used_down}"
                )
        self.entry.records.append((direction, toytls.record_hash(wire), plaintext_len))

    def _statement(self) -> Frame:
        if self.entry.statement_frame is None:
            statement = {
                "session_id": self.session_id,
                "server_domain": self.entry.domain,
                "server_key_fingerprint": self._server_fingerprint,
                "channel_capacity": {
                    "up": str(self.entry.cap_up),
                    "down": str(self.entry.cap_down),
                },
                "opened_at": str(self.entry.opened_at),
                "closed_at": str(self.service.now_ms()),
                "tee_backed": False,
                "records": [
                    {"direction": d, "hash": h, "length": str(n)}
                    for d, h, n in self.entry.records
                ],
            }
            signature = self.service.signing_key.sign(canonical_bytes(statement))
            body = canonical_bytes(
                {"statement": statement, "notary_signature": signature}
            )
            self.entry.statement_frame = Frame(frames.STATEMENT, body)
            self.entry.advance(STATE_FINALIZED)
        return self.entry.statement_frame

    def _abort(self, reason: str) -> list[Frame]:
        self.entry.advance(STATE_ABORTED)
        self.entry.abort_reason = reason
        return [self._abort_frame()]

    def _abort_frame(self) -> Frame:
        return Frame(frames.ABORT, self.entry.abort_reason.encode("utf-8"))


class NotaryService:
    """The notary's long-lived state: key, ledger, server resolver.

    ``resolver`` maps a domain name to a TargetServer; the notary opens
    one server connection per session and relays between the two sides.
    ``observed`` accumulates every frame payload the notary sees, which
    lets tests assert that no session plaintext ever appears in its view.
    """

    def __init__(
        self,
        signing_key: SigningKey,
        resolver: Callable[[str], TargetServer],
        max_cap_up: int = 1 << 16,
        max_cap_down: int = 1 << 16,
        max_sessions: int = 64,
        clock: Callable[[], int] | None = None,
    ):
        self.signing_key = signing_key
        self.resolver = resolver
        self.max_cap_up = max_cap_up
        self.max_cap_down = max_cap_down
        self.max_sessions = max_sessions
        self.clock = clock or (lambda: int(time.time() * 1000))
        self.ledger = SessionLedger()
        self.observed: list[tuple[int, bytes]] = []
        self._observe_lock = threading.Lock()

    @property
    def public_key(self) -> str:
        return self.signing_key.public_string

    def now_ms(self) -> int:
        return self.clock()

    def observe(self, frame: Frame) -> None:
        with self._observe_lock:
            self.observed.append((frame.type, frame.payload))

    def observed_opaque_payloads(self) -> list[bytes]:
        """Payloads of frames the notary relayed without parsing."""
        with self._observe_lock:
            return [p for t, p in self.observed if t in _OPAQUE_TYPES]

    def open_session(self, frame: Frame) -> tuple[NotarySession, Frame]:
        self.observe(frame)
        if frame.type != frames.OPEN:
            raise ProtocolError("first frame must be OPEN")
        request = canonical_loads(frame.payload)
        session_id = request["session_id"]
        domain = request["domain"]
        cap_up = int(request.get("cap_up", str(self.max_cap_up)))
        cap_down = int(request.get("cap_down", str(self.max_cap_down)))
        if cap_up <= 0 or cap_down <= 0:
            raise ProtocolError("capacities must be positive")
        if cap_up > self.max_cap_up or cap_down > self.max_cap_down:
            raise ProtocolError(
                f"requested capacity {cap_up}/{cap_down} exceeds session maximum "
                f"{self.max_cap_up}/{self.max_cap_down}"
            )
        if len(self.ledger.session_ids()) >= self.max_sessions:
            raise ProtocolError("session limit reached")
        entry = LedgerEntry(
            domain=domain, cap_up=cap_up, cap_down=cap_down, opened_at=self.now_ms()
        )
        self.ledger.open(session_id, entry)
        session = NotarySession(self, session_id, entry)
        ok = Frame(
            frames.OPEN_OK,
            canonical_bytes(
                {"session_id": session_id, "notary_public_key": self.public_key}
            ),
        )
        return session, ok


def simulate_setup_delay(cap_up: int, cap_down: int, model) -> float:
    """Modeled wall-clock cost of provisioning a channel of this capacity.

    The model only needs ``setup_base`` and ``setup_per_byte`` attributes;
    setup cost grows linearly in the total committed capacity, matching
    the garbled-circuit-per-byte character of the protocol this stands
    in for.
    """
    return model.setup_base + model.setup_per_byte * (cap_up + cap_down)


class _NotaryTCPHandler(socketserver.BaseRequestHandler):
    def handle(self):
        service: NotaryService = self.server.service  # type: ignore[attr-defined]
        sock: socket.socket = self.request
        try:
            first = frames.read_frame(sock)
        except ProtocolError:
            return
        if first.type == frames.HEALTH:
            frames.write_frame(sock, Frame(frames.HEALTH_OK, b""))
            return
        try:
            session, ok = service.open_session(first)
        except (ProtocolError, KeyError) as exc:
            frames.write_frame(sock, Frame(frames.ABORT, str(exc).encode("utf-8")))
            return
        frames.write_frame(sock, ok)
        try:
            while True:
                try:
                    frame = frames.read_frame(sock)
                except ProtocolError:
                    break
                replies = session.handle(frame)
                for reply in replies:
                    frames.write_frame(sock, reply)
                if frame.type == frames.CLOSE:
                    return
                if any(r.type == frames.ABORT for r in replies):
                    return
        finally:
            if session.entry.state not in (STATE_FINALIZED, STATE_ABORTED):
                session.entry.advance(STATE_ABORTED)
                session.entry.abort_reason = "connection dropped"


class NotaryTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: NotaryService):
        super().__init__(address, _NotaryTCPHandler)
        self.service = service


def serve(service: NotaryService, host: str = "127.0.0.1", port: int = 0) -> NotaryTCPServer:
    """Start a TCP notary in a daemon thread; returns the bound server."""
    server = NotaryTCPServer((host, port), service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def check_health(host: str, port: int, timeout: float = 5.0) -> bool:
    with socket.create_connection((host, port), timeout=timeout) as sock:
        frames.write_frame(sock, Frame(frames.HEALTH, b""))
        reply = frames.read_frame(sock)
        return reply.type == frames.HEALTH_OK
