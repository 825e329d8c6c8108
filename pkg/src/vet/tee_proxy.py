"""Simulated attested HTTPS proxy in the Town Crier style.

The proxy forwards a component request to its upstream in plaintext and
returns the verbatim response together with a signed attestation over
the hashes of exactly the bytes exchanged. It gives integrity without
privacy: unlike the notarized channel, the proxy process sees every
byte, which is the documented trade-off of this verification mode. Real
enclave quote generation is stubbed behind the same interface; the
`measurement` field stands in for the enclave code identity and here
hashes the proxy's declared template set.
"""

from __future__ import annotations

import hashlib
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Callable

from . import frames
from .canonical import canonical_bytes, canonical_loads
from .errors import ProtocolError, Rejected
from .frames import Frame
from .keys import SigningKey, verify_signature
from .templates import TemplateRegistry, parse_tool, parse_core


def measurement_of(registry: TemplateRegistry) -> str:
    """Stand-in enclave measurement: hash of the declared template uids."""
    h = hashlib.sha256(b"VET/measurement:")
    for uid in registry.uids():
        h.update(uid.encode("utf-8") + b"\n")
    return "sha256:" + h.hexdigest()


@dataclass(frozen=True)
class ProxyAttestation:
    enclave_public_key: str
    tee_type: str
    measurement: str
    request_hash: str
    response_hash: str
    timestamp: int
    signature: str

    def signed_payload(self) -> bytes:
        return canonical_bytes(
            {
                "enclave_public_key": self.enclave_public_key,
                "tee_type": self.tee_type,
                "measurement": self.measurement,
                "request_hash": self.request_hash,
                "response_hash": self.response_hash,
                "timestamp": str(self.timestamp),
            }
        )

    def to_obj(self) -> dict:
        return {
            "enclave_public_key": self.enclave_public_key,
            "tee_type": self.tee_type,
            "measurement": self.measurement,
            "request_hash": self.request_hash,
            "response_hash": self.response_hash,
            "timestamp": str(self.timestamp),
            "signature": self.signature,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ProxyAttestation":
        return cls(
            enclave_public_key=obj["enclave_public_key"],
            tee_type=obj["tee_type"],
            measurement=obj["measurement"],
            request_hash=obj["request_hash"],
            response_hash=obj["response_hash"],
            timestamp=int(obj["timestamp"]),
            signature=obj["signature"],
        )


class TeeProxy:
    """Stateless attesting forwarder; signing is serialized by a lock."""

    def __init__(
        self,
        signing_key: SigningKey,
        upstream: Callable[[bytes], bytes],
        tee_type: str = "TDX",
        measurement: str = "sha256:" + "0" * 64,
        clock: Callable[[], int] | None = None,
    ):
        self.signing_key = signing_key
        self.upstream = upstream
        self.tee_type = tee_type
        self.measurement = measurement
        self.clock = clock or (lambda: int(time.time() * 1000))
        self._sign_lock = threading.Lock()
        self.observed_plaintext: list[bytes] = []

    @property
    def public_key(self) -> str:
        return self.signing_key.public_string

    def fetch(self, request_bytes: bytes) -> tuple[bytes, ProxyAttestation]:
        # The proxy handles plaintext on both legs; record that fact so
        # tests can contrast it with the notary's blindness.
        self.observed_plaintext.append(request_bytes)
        response_bytes = self.upstream(request_bytes)
        self.observed_plaintext.append(response_bytes)
        fields = {
            "enclave_public_key": self.public_key,
            "tee_type": self.tee_type,
            "measurement": self.measurement,
            "request_hash": "sha256:" + hashlib.sha256(request_bytes).hexdigest(),
            "response_hash": "sha256:" + hashlib.sha256(response_bytes).hexdigest(),
            "timestamp": str(self.clock()),
        }
        with self._sign_lock:
            signature = self.signing_key.sign(canonical_bytes(fields))
        attestation = ProxyAttestation(
            enclave_public_key=fields["enclave_public_key"],
            tee_type=fields["tee_type"],
            measurement=fields["measurement"],
            request_hash=fields["request_hash"],
            response_hash=fields["response_hash"],
            timestamp=int(fields["timestamp"]),
            signature=signature,
        )
        return response_bytes, attestation


def proxy_fetch(
    proxy: TeeProxy, request_bytes: bytes
) -> tuple[bytes, ProxyAttestation]:
    return proxy.fetch(request_bytes)


def verify_attestation(
    m: str,
    response_bytes: bytes,
    attestation: ProxyAttestation,
    entry,
    registry: TemplateRegistry,
    request_bytes: bytes | None = None,
    role: str = "tool",
):
    """Accept iff the attestation binds these bytes and they parse to m.

    Returns the authenticated value (for core role, the (y, calls)
    pair). ``request_bytes`` is optional; when given, its hash is
    checked against the attestation too.
    """
    key = entry.verification.key_string()
    if attestation.enclave_public_key != key or not verify_signature(
        key,
        attestation.signed_payload(),
        attestation.signature,
    ):
        raise Rejected("bad-signature", "attestation not signed by the declared enclave key")
    digest = "sha256:" + hashlib.sha256(response_bytes).hexdigest()
    if digest != attestation.response_hash:
        raise Rejected("hash-mismatch", "response bytes do not match the attested hash")
    if request_bytes is not None:
        req_digest = "sha256:" + hashlib.sha256(request_bytes).hexdigest()
        if req_digest != attestation.request_hash:
            raise Rejected("hash-mismatch", "request bytes do not match the attested hash")
    template = registry.get_parse(entry.parsing_algorithm_uid)
    if role == "core":
        y, calls = parse_core(template, response_bytes)
        if m != y:
            raise Rejected("value-mismatch", f"claimed {m!r}, attested value is {y!r}")
        return y, calls
    value = parse_tool(template, response_bytes)
    if m != value:
        raise Rejected("value-mismatch", f"claimed {m!r}, attested value is {value!r}")
    return value


class _ProxyTCPHandler(socketserver.BaseRequestHandler):
    def handle(self):
        proxy: TeeProxy = self.server.proxy  # type: ignore[attr-defined]
        sock: socket.socket = self.request
        while True:
            try:
                frame = frames.read_frame(sock)
            except ProtocolError:
                return
            if frame.type == frames.HEALTH:
                frames.write_frame(sock, Frame(frames.HEALTH_OK, proxy.public_key.encode()))
                continue
            if frame.type == frames.CLOSE:
                return
            if frame.type != frames.RELAY_UP:
                frames.write_frame(sock, Frame(frames.ABORT, b"expected RELAY_UP"))
                return
            response_bytes, attestation = proxy.fetch(frame.payload)
            body = canonical_bytes(
                {"response": response_bytes.hex(), "attestation": attestation.to_obj()}
            )
            frames.write_frame(sock, Frame(frames.RELAY_DOWN, body))


class ProxyTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], proxy: TeeProxy):
        super().__init__(address, _ProxyTCPHandler)
        self.proxy = proxy


def serve(proxy: TeeProxy, host: str = "127.0.0.1", port: int = 0) -> ProxyTCPServer:
    server = ProxyTCPServer((host, port), proxy)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def fetch_tcp(host: str, port: int, request_bytes: bytes) -> tuple[bytes, ProxyAttestation]:
    with socket.create_connection((host, port)) as sock:
        frames.write_frame(sock, Frame(frames.RELAY_UP, request_bytes))
        reply = frames.read_frame(sock)
        if reply.type != frames.RELAY_DOWN:
            raise ProtocolError(f"proxy error: {reply.payload.decode('utf-8', 'replace')}")
        obj = canonical_loads(reply.payload)
        return bytes.fromhex(obj["response"]), ProxyAttestation.from_obj(obj["attestation"])
