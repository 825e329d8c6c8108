"""Injection and parsing templates for component HTTP exchanges.

An *inject* template pins everything about a component's request except
the input value and the secrets: method, path pattern, header list and
body shape. A *parse* template pins how the response is read back into
the agent's string domain: a JSON-pointer for the output value and, for
cores, the tool-call extraction rule. Each template's uid is the content
hash of its canonical JSON; identity documents reference templates by
uid, so a verifier can re-render the expected request byte-for-byte and
re-run the exact parse the agent declared.

Secret header slots are redacted by default in proofs. To make chunk
level redaction exact, a secret's rendered span is aligned to the
commitment chunk grid: alignment padding ("~") is inserted before the
value, and the value itself is padded to a declared length that must be
a multiple of the chunk size.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass
from typing import Mapping

from .canonical import canonical_bytes, content_hash, json_pointer
from .errors import Rejected, ValidationError
from .httpmsg import parse_request, parse_response

PAD_CHAR = "~"
INPUT_SLOT = "{input}"


@dataclass(frozen=True)
class InjectTemplate:
    uid: str
    kind: str  # "tool" or "core"
    method: str
    path: str
    headers: tuple[dict, ...]
    body: dict | None
    input_pointer: str | None
    chunk_size: int

    @classmethod
    def from_obj(cls, obj: dict) -> "InjectTemplate":
        if obj.get("type") != "inject":
            raise ValidationError("not an inject template")
        kind = obj.get("kind")
        if kind not in ("tool", "core"):
            raise ValidationError(f"template kind must be tool or core, got {kind!r}")
        chunk_size = int(obj.get("chunk_size", "16"))
        path = obj["path"]
        input_pointer = obj.get("input_pointer")
        in_path = INPUT_SLOT in path
        if in_path and input_pointer:
            raise ValidationError("input slot declared in both path and body")
        if not in_path and not input_pointer:
            raise ValidationError("template has no input slot")
        if path.count(INPUT_SLOT) > 1:
            raise ValidationError("multiple input slots in path")
        headers = []
        for header in obj.get("headers", []):
            if "secret" in header:
                length = int(header["length"])
                if length <= 0 or length % chunk_size:
                    raise ValidationError(
                        f"secret {header['secret']!r} length must be a positive "
                        f"multiple of chunk_size {chunk_size}"
                    )
            elif "value" not in header:
                raise ValidationError(f"header {header.get('name')!r} has no value or secret")
            headers.append(dict(header))
        return cls(
            uid=content_hash(obj),
            kind=kind,
            method=obj["method"],
            path=path,
            headers=tuple(headers),
            body=obj.get("body"),
            input_pointer=input_pointer,
            chunk_size=chunk_size,
        )

    def secret_names(self) -> list[str]:
        return [h["secret"] for h in self.headers if "secret" in h]


@dataclass(frozen=True)
class ParseTemplate:
    uid: str
    kind: str
    output_pointer: str
    calls_pointer: str | None
    call_tool_pointer: str
    call_input_pointer: str

    @classmethod
    def from_obj(cls, obj: dict) -> "ParseTemplate":
        if obj.get("type") != "parse":
            raise ValidationError("not a parse template")
        kind = obj.get("kind")
        if kind not in ("tool", "core"):
            raise ValidationError(f"template kind must be tool or core, got {kind!r}")
        if kind == "core" and not obj.get("calls_pointer"):
            raise ValidationError("core parse template requires calls_pointer")
        return cls(
            uid=content_hash(obj),
            kind=kind,
            output_pointer=obj["output_pointer"],
            calls_pointer=obj.get("calls_pointer"),
            call_tool_pointer=obj.get("call_tool_pointer", "/tool"),
            call_input_pointer=obj.get("call_input_pointer", "/input"),
        )


def _set_pointer(doc, pointer: str, value) -> None:
    if not pointer.startswith("/"):
        raise ValidationError(f"invalid input pointer {pointer!r}")
    tokens = [t.replace("~1", "/").replace("~0", "~") for t in pointer.split("/")[1:]]
    node = doc
    for token in tokens[:-1]:
        node = node[token] if isinstance(node, dict) else node[int(token)]
    last = tokens[-1]
    if isinstance(node, dict):
        node[last] = value
    else:
        node[int(last)] = value


def render(
    template: InjectTemplate, x: str, secrets: Mapping[str, str]
) -> tuple[bytes, dict[str, tuple[int, int]]]:
    """Render the request; returns bytes plus secret spans (offset, length).

    Secrets may be absent from ``secrets``: their span renders as all
    padding, which is also what the verifier compares against (secret
    spans are never byte-compared, only required to be redacted).
    """
    path = template.path
    if INPUT_SLOT in path:
        if any(c in x for c in " {}\r\n"):
            raise ValidationError(f"input {x!r} not encodable in a path slot")
        path = path.replace(INPUT_SLOT, x)

    body = b""
    if template.body is not None:
        doc = json.loads(json.dumps(template.body))
        if template.input_pointer:
            try:
                json_pointer(doc, template.input_pointer)
            except KeyError:
                raise ValidationError(
                    f"input pointer {template.input_pointer!r} missing from body template"
                )
            _set_pointer(doc, template.input_pointer, x)
        body = canonical_bytes(doc)

    # Assemble the head manually so secret spans land on the chunk grid.
    request_line = f"{template.method} {path} HTTP/1.1"
    offset = len(request_line.encode("utf-8")) + 2
    spans: dict[str, tuple[int, int]] = {}
    rendered_headers: list[str] = []
    for header in template.headers:
        name = header["name"]
        if "secret" in header:
            secret_name = header["secret"]
            declared = int(header["length"])
            value = secrets.get(secret_name, "")
            if len(value) > declared:
                raise ValidationError(
                    f"secret {secret_name!r} longer than declared length {declared}"
                )
            prefix = f"{name}: "
            value_start = offset + len(prefix)
            align = (-value_start) % template.chunk_size
            padded = PAD_CHAR * align + value + PAD_CHAR * (declared - len(value))
            spans[secret_name] = (value_start + align, declared)
            line = prefix + padded
        else:
            line = f"{name}: {header['value']}"
        rendered_headers.append(line)
        offset += len(line.encode("utf-8")) + 2
    if body:
        rendered_headers.append(f"Content-Length: {len(body)}")

    head = "\r\n".join([request_line] + rendered_headers) + "\r\n\r\n"
    return head.encode("utf-8") + body, spans


def inject(template: InjectTemplate, x: str, secrets: Mapping[str, str] | None = None) -> bytes:
    """Deterministically encode input ``x`` into HTTP request bytes."""
    secrets = secrets or {}
    missing = [s for s in template.secret_names() if s not in secrets]
    if missing:
        raise ValidationError(f"unbound secret slots: {missing}")
    data, _ = render(template, x, secrets)
    parse_request(data)  # must round-trip as well-formed HTTP
    return data


def secret_spans(template: InjectTemplate, x: str) -> dict[str, tuple[int, int]]:
    """Byte spans of each secret slot for input ``x`` (chunk-aligned)."""
    _, spans = render(template, x, {})
    return spans


def extract_input(template: InjectTemplate, request_bytes: bytes) -> str:
    """Recover the input slot value from rendered request bytes."""
    request = parse_request(request_bytes)
    if template.input_pointer:
        doc = _json_body(request.body, "request")
        return _pointer_str(doc, template.input_pointer)
    before, after = template.path.split(INPUT_SLOT)
    path = request.path
    if not (path.startswith(before) and path.endswith(after)):
        raise ValidationError(f"path {path!r} does not match template pattern")
    return path[len(before):len(path) - len(after)]


def _json_body(body: bytes, what: str):
    try:
        return json.loads(body.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        raise Rejected("parse-failure", f"{what} body is not valid JSON")


def _pointer_str(doc, pointer: str) -> str:
    try:
        value = json_pointer(doc, pointer)
    except KeyError as exc:
        raise Rejected("parse-failure", str(exc.args[0]))
    if not isinstance(value, str):
        raise Rejected("parse-failure", f"value at {pointer!r} is not a string")
    return value


def _check_status(response_bytes: bytes):
    try:
        response = parse_response(response_bytes)
    except ValidationError as exc:
        raise Rejected("parse-failure", str(exc))
    if response.status != 200:
        raise Rejected("parse-failure", f"non-200 status {response.status}")
    return response


def parse_tool(template: ParseTemplate, response_bytes: bytes) -> str:
    """Extract the tool result string from HTTP response bytes."""
    response = _check_status(response_bytes)
    doc = _json_body(response.body, "response")
    return _pointer_str(doc, template.output_pointer)


def parse_core(
    template: ParseTemplate, response_bytes: bytes
) -> tuple[str, list[tuple[str, str]]]:
    """Extract (output, ordered tool calls) from a core response."""
    response = _check_status(response_bytes)
    doc = _json_body(response.body, "response")
    output = _pointer_str(doc, template.output_pointer)
    try:
        calls_node = json_pointer(doc, template.calls_pointer)
    except KeyError as exc:
        raise Rejected("parse-failure", str(exc.args[0]))
    if not isinstance(calls_node, list):
        raise Rejected("parse-failure", f"value at {template.calls_pointer!r} is not an array")
    calls = []
    for item in calls_node:
        calls.append(
            (
                _pointer_str(item, template.call_tool_pointer),
                _pointer_str(item, template.call_input_pointer),
            )
        )
    return output, calls


def match_request(
    template: InjectTemplate,
    x: str,
    total_length: int,
    disclosed: Mapping[int, bytes],
) -> None:
    """Check disclosed request bytes against the template for input ``x``.

    ``disclosed`` maps absolute offsets to revealed byte runs. Accepts
    iff the disclosure covers exactly the non-secret bytes, those bytes
    equal the deterministic rendering, and every secret span is fully
    redacted. Raises Rejected("template-mismatch") otherwise.
    """
    expected, spans = render(template, x, {})
    if len(expected) != total_length:
        raise Rejected(
            "template-mismatch",
            f"rendered length {len(expected)} != committed length {total_length}",
        )
    secret_bytes = set()
    for offset, length in spans.values():
        secret_bytes.update(range(offset, offset + length))

    covered = bytearray(total_length)
    for offset, data in disclosed.items():
        for i, byte in enumerate(data):
            pos = offset + i
            if pos >= total_length:
                raise Rejected("template-mismatch", "disclosure extends past request end")
            if pos in secret_bytes:
                raise Rejected("template-mismatch", f"secret byte at {pos} was disclosed")
            if byte != expected[pos]:
                raise Rejected("template-mismatch", f"request byte {pos} differs from template")
            covered[pos] = 1
    missing = [i for i in range(total_length) if not covered[i] and i not in secret_bytes]
    if missing:
        raise Rejected(
            "template-mismatch",
            f"non-secret bytes not disclosed (first at {missing[0]})",
        )


class TemplateRegistry:
    """Maps template uids to parsed templates; persisted one file per uid."""

    def __init__(self):
        self._inject: dict[str, InjectTemplate] = {}
        self._parse: dict[str, ParseTemplate] = {}
        self._objs: dict[str, dict] = {}

    def register(self, obj: dict) -> str:
        if obj.get("type") == "inject":
            template = InjectTemplate.from_obj(obj)
            self._inject[template.uid] = template
        elif obj.get("type") == "parse":
            template = ParseTemplate.from_obj(obj)
            self._parse[template.uid] = template
        else:
            raise ValidationError(f"template type must be inject or parse, got {obj.get('type')!r}")
        self._objs[template.uid] = obj
        return template.uid

    def get_inject(self, uid: str) -> InjectTemplate:
        if uid not in self._inject:
            raise ValidationError(f"unknown inject template uid {uid}")
        return self._inject[uid]

    def get_parse(self, uid: str) -> ParseTemplate:
        if uid not in self._parse:
            raise ValidationError(f"unknown parse template uid {uid}")
        return self._parse[uid]

    def __contains__(self, uid: str) -> bool:
        return uid in self._objs

    def uids(self) -> list[str]:
        return sorted(self._objs)

    def save_dir(self, path) -> None:
        directory = pathlib.Path(path)
        directory.mkdir(parents=True, exist_ok=True)
        for uid, obj in self._objs.items():
            (directory / f"{uid.replace(':', '_')}.json").write_bytes(canonical_bytes(obj))

    @classmethod
    def load_dir(cls, path) -> "TemplateRegistry":
        registry = cls()
        for file in sorted(pathlib.Path(path).glob("*.json")):
            registry.register(json.loads(file.read_text()))
        return registry
