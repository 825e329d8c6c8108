"""Canonical JSON serialization and content-addressed hashing.

Every document this package signs or hashes (identity documents, request
templates, session statements, attestations, proof bundles) goes through
the same canonical form:

- UTF-8 bytes, object keys sorted lexicographically by code point,
- no insignificant whitespace,
- scalars restricted to strings, booleans and null.

Numbers are rejected outright: every count, length and timestamp is
encoded as a decimal string. This removes float-formatting divergence
between implementations and keeps the canonical form trivially auditable.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from .errors import ValidationError

SHA256_PREFIX = "sha256:"


def canonical_bytes(obj: Any) -> bytes:
    """Serialize ``obj`` to canonical JSON bytes.

    Raises ValidationError if the object contains ints, floats, or any
    non-JSON type.
    """
    _check_scalars(obj, "")
    text = json.dumps(
        obj,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )
    return text.encode("utf-8")


def _check_scalars(obj: Any, path: str) -> None:
    if obj is None or isinstance(obj, (str, bool)):
        return
    if isinstance(obj, dict):
        for key, value in obj.items():
            if not isinstance(key, str):
                raise ValidationError(f"non-string key at {path or '/'}")
            _check_scalars(value, f"{path}/{key}")
        return
    if isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            _check_scalars(item, f"{path}/{i}")
        return
    if isinstance(obj, (int, float)):
        raise ValidationError(
            f"number at {path or '/'}: encode scalars as strings"
        )
    raise ValidationError(f"unserializable type {type(obj).__name__} at {path or '/'}")


def canonical_loads(data: bytes | str) -> Any:
    """Parse JSON previously produced by canonical_bytes."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def content_hash(obj: Any) -> str:
    """Return "sha256:<hex>" over the canonical bytes of ``obj``."""
    return SHA256_PREFIX + sha256_hex(canonical_bytes(obj))


def is_hash_string(value: str) -> bool:
    if not isinstance(value, str) or not value.startswith(SHA256_PREFIX):
        return False
    hexpart = value[len(SHA256_PREFIX):]
    if len(hexpart) != 64:
        return False
    return all(c in "0123456789abcdef" for c in hexpart)


def json_pointer(doc: Any, pointer: str) -> Any:
    """Resolve an RFC 6901 JSON pointer against ``doc``.

    Raises KeyError naming the pointer when a token does not resolve.
    """
    if pointer == "":
        return doc
    if not pointer.startswith("/"):
        raise KeyError(f"invalid JSON pointer {pointer!r}")
    node = doc
    for raw in pointer.split("/")[1:]:
        token = raw.replace("~1", "/").replace("~0", "~")
        if isinstance(node, dict):
            if token not in node:
                raise KeyError(f"pointer {pointer!r}: missing key {token!r}")
            node = node[token]
        elif isinstance(node, list):
            try:
                index = int(token)
            except ValueError:
                raise KeyError(f"pointer {pointer!r}: bad index {token!r}")
            if not 0 <= index < len(node):
                raise KeyError(f"pointer {pointer!r}: index {index} out of range")
            node = node[index]
        else:
            raise KeyError(f"pointer {pointer!r}: cannot descend into scalar")
    return node
