"""Minimal HTTP/1.1 message rendering and parsing.

This package never speaks to a real web server; requests and responses
are byte strings carried inside toy-TLS records or proxy envelopes. The
subset here is deliberately small: request line / status line, headers,
and a Content-Length body. No chunked transfer, no HTTP/2.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError

CRLF = b"\r\n"


@dataclass(frozen=True)
class HttpRequest:
    method: str
    path: str
    headers: tuple[tuple[str, str], ...]
    body: bytes

    def header(self, name: str) -> str | None:
        for key, value in self.headers:
            if key.lower() == name.lower():
                return value
        return None


@dataclass(frozen=True)
class HttpResponse:
    status: int
    reason: str
    headers: tuple[tuple[str, str], ...]
    body: bytes

    def header(self, name: str) -> str | None:
        for key, value in self.headers:
            if key.lower() == name.lower():
                return value
        return None


def render_request(request: HttpRequest) -> bytes:
    lines = [f"{request.method} {request.path} HTTP/1.1".encode()]
    has_length = False
    for name, value in request.headers:
        if name.lower() == "content-length":
            has_length = True
        lines.append(f"{name}: {value}".encode())
    if request.body and not has_length:
        lines.append(f"Content-Length: {len(request.body)}".encode())
    return CRLF.join(lines) + CRLF + CRLF + request.body


def render_response(response: HttpResponse) -> bytes:
    lines = [f"HTTP/1.1 {response.status} {response.reason}".encode()]
    has_length = False
    for name, value in response.headers:
        if name.lower() == "content-length":
            has_length = True
        lines.append(f"{name}: {value}".encode())
    if not has_length:
        lines.append(f"Content-Length: {len(response.body)}".encode())
    return CRLF.join(lines) + CRLF + CRLF + response.body


def _split_head(data: bytes) -> tuple[list[bytes], bytes]:
    try:
        head, body = data.split(CRLF + CRLF, 1)
    except ValueError:
        raise ValidationError("malformed HTTP message: missing header terminator")
    return head.split(CRLF), body


def _parse_headers(lines: list[bytes]) -> tuple[tuple[str, str], ...]:
    headers = []
    for line in lines:
        if b":" not in line:
            raise ValidationError(f"malformed header line {line!r}")
        name, value = line.split(b":", 1)
        headers.append((name.decode("utf-8"), value.decode("utf-8").strip()))
    return tuple(headers)


def parse_request(data: bytes) -> HttpRequest:
    lines, body = _split_head(data)
    parts = lines[0].decode("utf-8").split(" ")
    if len(parts) != 3 or parts[2] != "HTTP/1.1":
        raise ValidationError(f"malformed request line {lines[0]!r}")
    headers = _parse_headers(lines[1:])
    return HttpRequest(method=parts[0], path=parts[1], headers=headers, body=body)


def parse_response(data: bytes) -> HttpResponse:
    lines, body = _split_head(data)
    parts = lines[0].decode("utf-8").split(" ", 2)
    if len(parts) < 2 or parts[0] != "HTTP/1.1":
        raise ValidationError(f"malformed status line {lines[0]!r}")
    try:
        status = int(parts[1])
    except ValueError:
        raise ValidationError(f"malformed status code in {lines[0]!r}")
    reason = parts[2] if len(parts) == 3 else ""
    headers = _parse_headers(lines[1:])
    return HttpResponse(status=status, reason=reason, headers=headers, body=body)
