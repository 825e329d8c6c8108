"""Salted chunk-tree commitments with selective disclosure of byte ranges.

The transcript is split into fixed-size chunks; each chunk gets an
independent 16-byte salt, so revealing one chunk leaks nothing about its
neighbours. Leaf and interior hashes carry distinct domain-separation
prefixes, and the chunk index is bound into the leaf hash so a revealed
chunk cannot be relocated. Levels with an odd node count are closed with
a domain-separated padding node.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .errors import Rejected, ValidationError

DEFAULT_CHUNK_SIZE = 16
SALT_LEN = 16

_LEAF = b"VET/leaf:"
_NODE = b"VET/node:"
_PAD = hashlib.sha256(b"VET/pad-leaf").digest()
EMPTY_ROOT = hashlib.sha256(b"VET/empty-leaf").digest()


def leaf_hash(index: int, salt: bytes, chunk: bytes) -> bytes:
    h = hashlib.sha256()
    h.update(_LEAF)
    h.update(index.to_bytes(8, "big"))
    h.update(salt)
    h.update(chunk)
    return h.digest()


def _node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(_NODE + left + right).digest()


def chunk_count(total_length: int, chunk_size: int) -> int:
    return -(-total_length // chunk_size)


def chunk_cover(ranges: list[tuple[int, int]], chunk_size: int, total_length: int) -> list[int]:
    """Minimal sorted set of chunk indices covering the given byte ranges."""
    indices: set[int] = set()
    for offset, length in ranges:
        if length < 0 or offset < 0 or offset + length > total_length:
            raise ValidationError(f"range ({offset},{length}) out of bounds")
        if length == 0:
            continue
        first = offset // chunk_size
        last = (offset + length - 1) // chunk_size
        indices.update(range(first, last + 1))
    return sorted(indices)


@dataclass(frozen=True)
class TranscriptCommitment:
    root: bytes
    chunk_size: int
    total_length: int

    def to_obj(self) -> dict:
        return {
            "root": self.root.hex(),
            "chunk_size": str(self.chunk_size),
            "total_length": str(self.total_length),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "TranscriptCommitment":
        return cls(
            root=bytes.fromhex(obj["root"]),
            chunk_size=int(obj["chunk_size"]),
            total_length=int(obj["total_length"]),
        )


@dataclass(frozen=True)
class Opening:
    """Prover-held witness: the plaintext plus all per-chunk salts."""

    plaintext: bytes
    salts: tuple[bytes, ...]
    chunk_size: int


@dataclass(frozen=True)
class RevealedChunk:
    index: int
    salt: bytes
    data: bytes
    # Sibling hashes from the leaf up to (excluding) the root.
    path: tuple[bytes, ...]

    def to_obj(self) -> dict:
        return {
            "index": str(self.index),
            "salt": self.salt.hex(),
            "data": self.data.hex(),
            "path": [p.hex() for p in self.path],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "RevealedChunk":
        return cls(
            index=int(obj["index"]),
            salt=bytes.fromhex(obj["salt"]),
            data=bytes.fromhex(obj["data"]),
            path=tuple(bytes.fromhex(p) for p in obj["path"]),
        )


@dataclass(frozen=True)
class Disclosure:
    ranges: tuple[tuple[int, int], ...]
    chunks: tuple[RevealedChunk, ...]

    def to_obj(self) -> dict:
        return {
            "ranges": [[str(o), str(n)] for o, n in self.ranges],
            "chunks": [c.to_obj() for c in self.chunks],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Disclosure":
        return cls(
            ranges=tuple((int(o), int(n)) for o, n in obj["ranges"]),
            chunks=tuple(RevealedChunk.from_obj(c) for c in obj["chunks"]),
        )


def _leaf_hashes(plaintext: bytes, salts: tuple[bytes, ...], chunk_size: int) -> list[bytes]:
    return [
        leaf_hash(i, salts[i], plaintext[i * chunk_size:(i + 1) * chunk_size])
        for i in range(len(salts))
    ]


def _tree_levels(leaves: list[bytes]) -> list[list[bytes]]:
    """All levels bottom-up; odd levels are closed with the padding node."""
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        current = levels[-1]
        if len(current) % 2:
            current = current + [_PAD]
            levels[-1] = current
        levels.append(
            [_node_hash(current[i], current[i + 1]) for i in range(0, len(current), 2)]
        )
    return levels


def _root_of(leaves: list[bytes]) -> bytes:
    if not leaves:
        return EMPTY_ROOT
    return _tree_levels(leaves)[-1][0]


def commit(
    transcript: bytes,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    randomness: random.Random | None = None,
) -> tuple[TranscriptCommitment, Opening]:
    """Commit to a byte transcript; returns the commitment and the witness.

    ``randomness`` supplies the per-chunk salts; pass a seeded
    random.Random for reproducible commitments, or None for fresh
    system entropy.
    """
    if chunk_size < 1:
        raise ValidationError("chunk_size must be >= 1")
    n = chunk_count(len(transcript), chunk_size)
    if randomness is None:
        randomness = random.SystemRandom()
    salts = tuple(randomness.randbytes(SALT_LEN) for _ in range(n))
    root = _root_of(_leaf_hashes(transcript, salts, chunk_size))
    commitment = TranscriptCommitment(
        root=root, chunk_size=chunk_size, total_length=len(transcript)
    )
    return commitment, Opening(plaintext=transcript, salts=salts, chunk_size=chunk_size)


def recommit(opening: Opening) -> bytes:
    """Root recomputed from an opening (consistency checks in tests)."""
    return _root_of(_leaf_hashes(opening.plaintext, opening.salts, opening.chunk_size))


def normalize_ranges(ranges: list[tuple[int, int]], total_length: int) -> list[tuple[int, int]]:
    """Sort, bounds-check, drop empties and merge overlapping ranges."""
    checked = []
    for offset, length in ranges:
        if offset < 0 or length < 0 or offset + length > total_length:
            raise ValidationError(f"range ({offset},{length}) out of bounds")
        if length:
            checked.append((offset, length))
    checked.sort()
    merged: list[tuple[int, int]] = []
    for offset, length in checked:
        if merged and offset <= merged[-1][0] + merged[-1][1]:
            prev_off, prev_len = merged[-1]
            merged[-1] = (prev_off, max(prev_off + prev_len, offset + length) - prev_off)
        else:
            merged.append((offset, length))
    return merged


def disclose(opening: Opening, ranges: list[tuple[int, int]]) -> Disclosure:
    """Reveal the minimal chunk cover of ``ranges`` with authentication paths."""
    total = len(opening.plaintext)
    norm = normalize_ranges(ranges, total)
    cover = chunk_cover(norm, opening.chunk_size, total)
    leaves = _leaf_hashes(opening.plaintext, opening.salts, opening.chunk_size)
    levels = _tree_levels(leaves) if leaves else []
    revealed = []
    for index in cover:
        path = []
        pos = index
        for level in levels[:-1]:
            sibling = pos ^ 1
            path.append(level[sibling] if sibling < len(level) else _PAD)
            pos //= 2
        cs = opening.chunk_size
        revealed.append(
            RevealedChunk(
                index=index,
                salt=opening.salts[index],
                data=opening.plaintext[index * cs:(index + 1) * cs],
                path=tuple(path),
            )
        )
    return Disclosure(ranges=tuple(norm), chunks=tuple(revealed))


def verify_disclosure(
    commitment: TranscriptCommitment, disclosure: Disclosure
) -> dict[tuple[int, int], bytes]:
    """Check a disclosure against a commitment root.

    Accepts iff every revealed chunk authenticates to the root through
    its sibling path and the revealed chunks cover the claimed ranges.
    Returns the bytes of each claimed range; raises Rejected otherwise.
    """
    n = chunk_count(commitment.total_length, commitment.chunk_size)
    if n == 0 and commitment.root != EMPTY_ROOT:
        raise Rejected("bad-path", "empty transcript with non-empty root")
    depth = 0 if n <= 1 else (n - 1).bit_length()
    by_index: dict[int, RevealedChunk] = {}
    for chunk in disclosure.chunks:
        if not 0 <= chunk.index < n:
            raise Rejected("chunk-range-inconsistency", f"chunk index {chunk.index} out of range")
        if chunk.index in by_index:
            raise Rejected("chunk-range-inconsistency", f"duplicate chunk {chunk.index}")
        expected_len = min(
            commitment.chunk_size,
            commitment.total_length - chunk.index * commitment.chunk_size,
        )
        if len(chunk.data) != expected_len:
            raise Rejected("length-mismatch", f"chunk {chunk.index} has wrong length")
        if len(chunk.path) != depth:
            raise Rejected("bad-path", f"chunk {chunk.index} path depth {len(chunk.path)} != {depth}")
        node = leaf_hash(chunk.index, chunk.salt, chunk.data)
        pos = chunk.index
        for sibling in chunk.path:
            node = _node_hash(node, sibling) if pos % 2 == 0 else _node_hash(sibling, node)
            pos //= 2
        if node != commitment.root:
            raise Rejected("bad-path", f"chunk {chunk.index} does not authenticate to root")
        by_index[chunk.index] = chunk

    if n == 0 and disclosure.chunks:
        raise Rejected("chunk-range-inconsistency", "chunks revealed for empty transcript")

    try:
        needed = chunk_cover(list(disclosure.ranges), commitment.chunk_size, commitment.total_length)
    except ValidationError as exc:
        raise Rejected("chunk-range-inconsistency", str(exc))
    missing = [i for i in needed if i not in by_index]
    if missing:
        raise Rejected("chunk-range-inconsistency", f"ranges not covered, missing chunks {missing}")

    out: dict[tuple[int, int], bytes] = {}
    for offset, length in disclosure.ranges:
        parts = []
        pos = offset
        end = offset + length
        while pos < end:
            index = pos // commitment.chunk_size
            chunk = by_index[index]
            start_in_chunk = pos - index * commitment.chunk_size
            take = min(end - pos, len(chunk.data) - start_in_chunk)
            parts.append(chunk.data[start_in_chunk:start_in_chunk + take])
            pos += take
        out[(offset, length)] = b"".join(parts)
    return out


def disclosed_bytes(
    commitment: TranscriptCommitment, disclosure: Disclosure
) -> dict[int, bytes]:
    """Verify and return all revealed chunk bytes keyed by absolute offset."""
    verify_disclosure(commitment, disclosure)
    return {
        c.index * commitment.chunk_size: c.data for c in disclosure.chunks
    }
