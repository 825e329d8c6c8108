"""Deterministic mock services: price feed, sentiment, and a scripted LLM.

Every handler is a pure function of (seed, request bytes), so re-running
a recorded call reproduces the recorded answer exactly. That determinism
is what lets prove_trace regenerate proofs for a finished trace: the
components really are re-invoked, and their answers must still match.

Handlers have the signature ``bytes -> bytes`` (full HTTP request in,
full HTTP response out), the same interface TargetServer and TeeProxy
forward to.
"""

from __future__ import annotations

import hashlib
import json
import socket
import socketserver
import struct
import threading
from typing import Callable, Sequence
from urllib.parse import parse_qs, urlparse

from . import frames
from .agent_model import (
    ROLE_CORE,
    ROLE_TOOL_RESULT,
    CoreFunction,
)
from .errors import ProtocolError
from .frames import Frame
from .httpmsg import HttpResponse, parse_request, render_response

JSON_HEADERS = (("Content-Type", "application/json"),)


def _json_response(obj) -> bytes:
    body = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return render_response(HttpResponse(200, "OK", JSON_HEADERS, body))


def _error_response(status: int, reason: str, message: str) -> bytes:
    body = json.dumps({"error": message}).encode("utf-8")
    return render_response(HttpResponse(status, reason, JSON_HEADERS, body))


def _digest_int(*parts: str) -> int:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8") + b"\x00")
    return int.from_bytes(h.digest()[:8], "big")


def parse_transcript(transcript: bytes) -> list[tuple[int, bytes]]:
    """Split a framed transcript back into (role, payload) pairs."""
    out = []
    pos = 0
    while pos < len(transcript):
        role, length = struct.unpack(">BI", transcript[pos:pos + 5])
        pos += 5
        out.append((role, transcript[pos:pos + length]))
        pos += length
    return out


def make_price_handler(seed: str) -> Callable[[bytes], bytes]:
    """CoinGecko-shaped price endpoint.

    GET /api/v3/simple/price?ids=<coin>&vs_currencies=usd returns
    {"<coin>": {"usd": "<price>"}} with a deterministic price per
    (seed, coin).
    """

    def handler(request_bytes: bytes) -> bytes:
        request = parse_request(request_bytes)
        parsed = urlparse(request.path)
        query = parse_qs(parsed.query)
        coins = query.get("ids", [""])[0]
        if parsed.path != "/api/v3/simple/price" or not coins:
            return _error_response(404, "Not Found", "unknown endpoint")
        out = {}
        for coin in coins.split(","):
            value = _digest_int(seed, "price", coin)
            dollars = 10000 + value % 80000
            cents = (value // 80000) % 100
            out[coin] = {"usd": f"{dollars}.{cents:02d}"}
        return _json_response(out)

    return handler


def make_sentiment_handler(seed: str) -> Callable[[bytes], bytes]:
    """POST /v1/sentiment with body {"query": x} -> {"score": "-1.00".."1.00"}."""

    def handler(request_bytes: bytes) -> bytes:
        request = parse_request(request_bytes)
        if urlparse(request.path).path != "/v1/sentiment":
            return _error_response(404, "Not Found", "unknown endpoint")
        try:
            query = json.loads(request.body)["query"]
        except (ValueError, KeyError):
            return _error_response(400, "Bad Request", "body must be {\"query\": ...}")
        value = _digest_int(seed, "sentiment", query)
        score = (value % 201 - 100) / 100
        return _json_response({"score": f"{score:.2f}"})

    return handler


def make_echo_handler() -> Callable[[bytes], bytes]:
    """POST body {"message": x} -> {"echo": x}; the smallest useful tool."""

    def handler(request_bytes: bytes) -> bytes:
        request = parse_request(request_bytes)
        try:
            message = json.loads(request.body)["message"]
        except (ValueError, KeyError):
            return _error_response(400, "Bad Request", "body must be {\"message\": ...}")
        return _json_response({"echo": message})

    return handler


def make_core_handler(core: CoreFunction) -> Callable[[bytes], bytes]:
    """Expose a CoreFunction as the mock LLM endpoint.

    POST /v1/agent with body {"history": "<transcript hex>"} returns
    {"output": y, "calls": [{"tool": t, "input": x}, ...]}.
    """

    def handler(request_bytes: bytes) -> bytes:
        request = parse_request(request_bytes)
        try:
            history = bytes.fromhex(json.loads(request.body)["history"])
        except (ValueError, KeyError):
            return _error_response(400, "Bad Request", "body must be {\"history\": <hex>}")
        output, calls = core(history)
        return _json_response(
            {
                "output": output,
                "calls": [{"tool": t, "input": x} for t, x in calls],
            }
        )

    return handler


def core_via_handler(handler: Callable[[bytes], bytes], template, parse_template) -> CoreFunction:
    """A CoreFunction that round-trips through the HTTP encoding.

    Used by the agent loop so the trace records exactly what the core
    endpoint would say when invoked through a proof system later.
    """
    from .httpmsg import parse_response
    from .templates import render

    def core(transcript: bytes) -> tuple[str, list[tuple[str, str]]]:
        request_bytes, _ = render(template, transcript.hex(), {})
        response = parse_response(handler(request_bytes))
        doc = json.loads(response.body)
        return doc["output"], [(c["tool"], c["input"]) for c in doc["calls"]]

    return core


def tool_via_handler(handler: Callable[[bytes], bytes], template, parse_template):
    """A ToolFunction that round-trips through the HTTP encoding."""
    from .templates import parse_tool, render

    def tool(x: str) -> str:
        request_bytes, _ = render(template, x, {})
        return parse_tool(parse_template, handler(request_bytes))

    return tool


def trader_core(seed: str, coin: str = "bitcoin") -> CoreFunction:
    """The trading-demo decision script, as a deterministic core.

    First invocation asks for the coin price and the market sentiment;
    once both results are in the transcript, it emits a serialized trade
    decision and stops. Decision rule: buy on positive sentiment when
    the price is below the seed-determined anchor, sell on negative
    sentiment above it, hold otherwise. The final output is the decision
    object as canonical JSON, which is what the agent's caller treats as
    the claimable message.
    """

    def core(transcript: bytes) -> tuple[str, list[tuple[str, str]]]:
        results = [p for role, p in parse_transcript(transcript) if role == ROLE_TOOL_RESULT]
        if len(results) < 2:
            return "requesting market data", [("price_feed", coin), ("sentiment", coin)]
        price = float(results[-2].decode("utf-8"))
        sentiment = float(results[-1].decode("utf-8"))
        anchor = 10000 + _digest_int(seed, "mid", coin) % 80000
        if sentiment > 0.1 and price < anchor:
            action, size = "buy", "0.50"
        elif sentiment < -0.1 and price > anchor:
            action, size = "sell", "0.50"
        else:
            action, size = "hold", "0"
        decision = {
            "action": action,
            "asset": coin,
            "size": size,
            "rationale": f"price {price:.2f} vs anchor {anchor}, sentiment {sentiment:.2f}",
        }
        return json.dumps(decision, sort_keys=True, separators=(",", ":")), []

    return core


class _HandlerTCPHandler(socketserver.BaseRequestHandler):
    def handle(self):
        handler = self.server.handler  # type: ignore[attr-defined]
        sock: socket.socket = self.request
        while True:
            try:
                frame = frames.read_frame(sock)
            except ProtocolError:
                return
            if frame.type == frames.HEALTH:
                frames.write_frame(sock, Frame(frames.HEALTH_OK, b""))
                continue
            if frame.type == frames.CLOSE:
                return
            if frame.type != frames.RELAY_UP:
                frames.write_frame(sock, Frame(frames.ABORT, b"expected RELAY_UP"))
                return
            frames.write_frame(sock, Frame(frames.RELAY_DOWN, handler(frame.payload)))


class HandlerTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], handler: Callable[[bytes], bytes]):
        super().__init__(address, _HandlerTCPHandler)
        self.handler = handler


def serve_handler(
    handler: Callable[[bytes], bytes], host: str = "127.0.0.1", port: int = 0
) -> HandlerTCPServer:
    """Expose a bytes->bytes handler over the framed TCP protocol.

    Each RELAY_UP frame carries one full HTTP request; the reply is one
    RELAY_DOWN frame with the full HTTP response. Runs in a daemon
    thread; returns the bound server.
    """
    server = HandlerTCPServer((host, port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def fetch_tcp(host: str, port: int, request_bytes: bytes) -> bytes:
    with socket.create_connection((host, port)) as sock:
        frames.write_frame(sock, Frame(frames.RELAY_UP, request_bytes))
        reply = frames.read_frame(sock)
        if reply.type != frames.RELAY_DOWN:
            raise ProtocolError(f"mock server error: {reply.payload.decode('utf-8', 'replace')}")
        return reply.payload


def scripted_core(
    seed: str, n_steps: int, tool_ids: Sequence[str]
) -> CoreFunction:
    """A randomized-but-deterministic core for completeness tests.

    Behavior depends only on (seed, transcript): for the first
    ``n_steps - 1`` invocations it emits one or two tool calls with
    inputs derived from the transcript hash, then a final output with
    no calls.
    """

    def core(transcript: bytes) -> tuple[str, list[tuple[str, str]]]:
        done = sum(1 for role, _ in parse_transcript(transcript) if role == ROLE_CORE)
        value = _digest_int(seed, "step", transcript.hex())
        if done >= n_steps - 1:
            return f"final answer {value % 10**6}", []
        n_calls = 1 + value % min(2, len(tool_ids))
        calls = []
        for k in range(n_calls):
            tool = tool_ids[(value >> (8 * k)) % len(tool_ids)]
            calls.append((tool, f"q{(value >> (16 * k)) % 10**6}"))
        return f"thinking {value % 10**6}", calls

    return core
