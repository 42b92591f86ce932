"""Recursive agent memories with a canonical injective encoding and a strict total order.

An agent's memory after each awake round is either the initial record
``(label, -, -)`` or a triple ``(previous memory, arrival info, met set)``.
Values are hash-consed: structurally equal memories are the same object, so
equality is identity and multiset comparisons stay cheap for deep histories.

Two byte forms exist:

* ``encode``/``decode``: the portable, fully recursive, self-delimiting
  format used by golden traces and round-trip tests.  Nested fields are
  length-prefixed (one width byte, then that many big-endian bytes; widths
  over 254 escape through 0xff + a nested length).  Met sets serialize in a
  canonical sorted order so equal sets encode equally.  Full encodings of
  memories whose histories contain long co-location stretches are
  exponentially large; materialize them only for shallow values.

* the flat reference form (`flat_ref`): one layer only, with the previous
  memory and met members represented by their 16-byte digests.  Its length
  is bounded regardless of depth, which is what makes the order below
  computable on arbitrarily deep values.

The order compares ranks first; ties recurse into the previous memories
until those coincide and then fall back to the injective map into the
naturals realized as the big-natural value of ``0x01 + flat_ref``.  By
construction that numeric order equals shortlex order on the flat reference
bytes (shorter first, then lexicographic), so the comparator never builds
big integers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable

LESS = -1
EQUAL = 0
GREATER = 1


class MemoryError_(ValueError):
    """Raised for malformed memory constructions or undecodable bytes."""


@dataclass(frozen=True, slots=True)
class ArrivalInfo:
    """What an agent records about its node on one round.

    ``exit_port`` is the port it took at the previous node, ``entry_port``
    the port of the traversed edge at the current node (the way back).
    Both are None on rounds without a move.
    """

    degree: int
    exit_port: int | None = None
    entry_port: int | None = None

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise MemoryError_(f"degree must be positive, got {self.degree}")
        if (self.exit_port is None) != (self.entry_port is None):
            raise MemoryError_("exit_port and entry_port must be both set or both absent")
        for p in (self.exit_port, self.entry_port):
            if p is not None and p < 0:
                raise MemoryError_(f"negative port {p}")

    @property
    def moved(self) -> bool:
        return self.entry_port is not None


def _varlen(x: int) -> bytes:
    width = max(1, (x.bit_length() + 7) // 8)
    if width <= 254:
        return bytes([width]) + x.to_bytes(width, "big")
    return b"\xff" + _varlen(width) + x.to_bytes(width, "big")


def _opt(p: int | None) -> bytes:
    return b"\xfe" if p is None else b"\x00" + _varlen(p)


def encode_arrival(a: ArrivalInfo) -> bytes:
    return _varlen(a.degree) + _opt(a.exit_port) + _opt(a.entry_port)


class Memory:
    """One agent memory value; construct only through `leaf` and `extend`."""

    __slots__ = ("label", "prev", "arrival", "met", "rank", "leaf_label", "digest")

    label: int | None
    prev: "Memory | None"
    arrival: ArrivalInfo | None
    met: tuple[tuple[ArrivalInfo, "Memory"], ...]
    rank: int
    leaf_label: int
    digest: bytes

    def __repr__(self) -> str:  # debugging aid only
        if self.prev is None:
            return f"Memory.leaf({self.label})"
        return f"Memory(rank={self.rank}, label={self.leaf_label}, digest={self.digest.hex()[:8]})"

    @property
    def is_leaf(self) -> bool:
        return self.prev is None


_INTERN: dict[bytes, Memory] = {}


def clear_cache() -> None:
    """Drop all interned memories (frees RAM between large batches)."""
    _INTERN.clear()


def _make(label, prev, arrival, met, rank, leaf_lbl, digest) -> Memory:
    existing = _INTERN.get(digest)
    if existing is not None:
        return existing
    m = Memory.__new__(Memory)
    m.label = label
    m.prev = prev
    m.arrival = arrival
    m.met = met
    m.rank = rank
    m.leaf_label = leaf_lbl
    m.digest = digest
    _INTERN[digest] = m
    return m


def leaf(label: int) -> Memory:
    """The initial memory of an agent with the given label."""
    if label < 1:
        raise MemoryError_(f"labels are positive integers, got {label}")
    digest = hashlib.blake2b(b"L" + _varlen(label), digest_size=16).digest()
    return _make(label, None, None, (), 0, label, digest)


def extend(prev: Memory, arrival: ArrivalInfo, met: Iterable[tuple[ArrivalInfo, Memory]]) -> Memory:
    """One more round of history on top of `prev`.

    `met` holds colocated agents' previous-round memories (duplicates
    collapse).  Their ranks need not match prev's: an agent woken this very
    round contributes its initial record no matter how old the agents
    around it are.
    """
    dedup: dict[tuple[ArrivalInfo, int], tuple[ArrivalInfo, Memory]] = {}
    for a, m in met:
        dedup[(a, id(m))] = (a, m)
    elems = sorted(dedup.values(), key=lambda e: (encode_arrival(e[0]), e[1].digest))

    h = hashlib.blake2b(b"N", digest_size=16)
    h.update(prev.digest)
    h.update(encode_arrival(arrival))
    for a, m in elems:
        h.update(encode_arrival(a))
        h.update(m.digest)
    digest = h.digest()
    return _make(None, prev, arrival, tuple(elems), prev.rank + 1, prev.leaf_label, digest)


def rank(m: Memory) -> int:
    return m.rank


def unwind(m: Memory, layers: int) -> Memory:
    """The memory `layers` rounds earlier.

    Strips one extension per layer; if the history is shorter than `layers`
    the agent was dormant back then and its memory was its leaf.
    """
    while layers > 0 and m.prev is not None:
        m = m.prev
        layers -= 1
    return m


def flat_ref(m: Memory) -> bytes:
    """Depth-independent canonical form: one layer, children by digest."""
    if m.prev is None:
        return b"\x00" + _varlen(m.label)  # type: ignore[arg-type]
    parts = [b"\x01", m.prev.digest, encode_arrival(m.arrival), _varlen(len(m.met))]
    for a, mm in m.met:
        parts.append(encode_arrival(a))
        parts.append(mm.digest)
    return b"".join(parts)


def _shortlex(a: Memory, b: Memory) -> int:
    fa, fb = flat_ref(a), flat_ref(b)
    if len(fa) != len(fb):
        return LESS if len(fa) < len(fb) else GREATER
    if fa == fb:
        raise AssertionError("distinct interned memories with identical flat forms")
    return LESS if fa < fb else GREATER


def compare(a: Memory, b: Memory) -> int:
    """Strict total order: LESS, EQUAL or GREATER.

    Rank decides first.  At equal positive rank the comparison recurses into
    the previous memories until they coincide, then falls back to the
    numeric order of the flat reference forms.
    """
    if a is b:
        return EQUAL
    if a.rank != b.rank:
        return LESS if a.rank < b.rank else GREATER
    while a.rank > 0 and a.prev is not b.prev:
        a, b = a.prev, b.prev  # type: ignore[assignment]
    return _shortlex(a, b)


def as_natural(m: Memory) -> int:
    """The injective map into the naturals whose order `compare` realizes."""
    return int.from_bytes(b"\x01" + flat_ref(m), "big")


# ---------------------------------------------------------------------------
# portable recursive encoding


def _enc_size(m: Memory) -> int:
    """Exact byte length of encode(m), computed without materializing it."""
    sizes: dict[bytes, int] = {}
    stack = [m]
    while stack:
        cur = stack[-1]
        if cur.digest in sizes:
            stack.pop()
            continue
        if cur.prev is None:
            sizes[cur.digest] = len(b"\x00" + _varlen(cur.label))  # type: ignore[arg-type]
            stack.pop()
            continue
        pending = [x for x in [cur.prev] + [mm for _, mm in cur.met] if x.digest not in sizes]
        if pending:
            stack.extend(pending)
            continue
        total = 1  # tag
        total += len(_varlen(sizes[cur.prev.digest])) + sizes[cur.prev.digest]
        total += len(encode_arrival(cur.arrival))  # type: ignore[arg-type]
        total += len(_varlen(len(cur.met)))
        for a, mm in cur.met:
            total += len(encode_arrival(a)) + len(_varlen(sizes[mm.digest])) + sizes[mm.digest]
        sizes[cur.digest] = total
        stack.pop()
    return sizes[m.digest]


_ENCODE_CAP = 1 << 24  # refuse to materialize encodings beyond 16 MiB


def encode(m: Memory) -> bytes:
    """Materialized recursive encoding.

    Intended for shallow values (tests, golden traces); encodings grow
    exponentially with co-located history, so a hard size cap applies.
    """
    if _enc_size(m) > _ENCODE_CAP:
        raise MemoryError_("encoding too large to materialize; use flat_ref or digests")
    memo: dict[bytes, bytes] = {}

    def build(cur: Memory) -> bytes:
        got = memo.get(cur.digest)
        if got is not None:
            return got
        if cur.prev is None:
            out = b"\x00" + _varlen(cur.label)  # type: ignore[arg-type]
        else:
            prev_enc = build(cur.prev)
            parts = [b"\x01", _varlen(len(prev_enc)), prev_enc]
            parts.append(encode_arrival(cur.arrival))  # type: ignore[arg-type]
            parts.append(_varlen(len(cur.met)))
            for a, mm in cur.met:
                sub = build(mm)
                parts.append(encode_arrival(a))
                parts.append(_varlen(len(sub)))
                parts.append(sub)
            out = b"".join(parts)
        memo[cur.digest] = out
        return out

    import sys

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * m.rank + 100))
    try:
        return build(m)
    finally:
        sys.setrecursionlimit(old_limit)


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MemoryError_(f"truncated encoding at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def varlen(self) -> int:
        width = self.take(1)[0]
        if width == 0xFF:
            width = self.varlen()
        if width < 1:
            raise MemoryError_(f"zero-width length at byte {self.pos - 1}")
        return int.from_bytes(self.take(width), "big")

    def opt(self) -> int | None:
        marker = self.take(1)
        if marker == b"\xfe":
            return None
        if marker != b"\x00":
            raise MemoryError_(f"bad optional marker {marker!r} at byte {self.pos - 1}")
        return self.varlen()

    def arrival(self) -> ArrivalInfo:
        degree = self.varlen()
        return ArrivalInfo(degree, self.opt(), self.opt())


def _decode_one(r: _Reader) -> Memory:
    tag = r.take(1)
    if tag == b"\x00":
        return leaf(r.varlen())
    if tag != b"\x01":
        raise MemoryError_(f"unknown tag {tag!r} at byte {r.pos - 1}")
    prev_len = r.varlen()
    sub = _Reader(r.take(prev_len))
    prev = _decode_one(sub)
    if sub.pos != len(sub.data):
        raise MemoryError_("trailing bytes inside nested encoding")
    arrival = r.arrival()
    count = r.varlen()
    met = []
    for _ in range(count):
        a = r.arrival()
        m_len = r.varlen()
        elem_reader = _Reader(r.take(m_len))
        mm = _decode_one(elem_reader)
        if elem_reader.pos != len(elem_reader.data):
            raise MemoryError_("trailing bytes inside met element")
        met.append((a, mm))
    return extend(prev, arrival, met)


def decode(data: bytes) -> Memory:
    """Inverse of `encode`; rejects trailing or malformed bytes."""
    r = _Reader(data)
    m = _decode_one(r)
    if r.pos != len(data):
        raise MemoryError_(f"{len(data) - r.pos} trailing bytes after encoding")
    return m


def describe(m: Memory, max_rank: int = 20) -> str:
    """Human-readable dump; deep histories are abbreviated by digest."""
    if m.rank > max_rank:
        return f"#{m.digest.hex()}(rank={m.rank},label={m.leaf_label})"
    if m.prev is None:
        return f"L({m.label})"
    arr = m.arrival
    a_txt = f"{arr.degree}:{arr.exit_port}:{arr.entry_port}"
    met_txt = ",".join(
        f"({e[0].degree}:{e[0].exit_port}:{e[0].entry_port},{describe(e[1], max_rank)})" for e in m.met
    )
    return f"N({describe(m.prev, max_rank)};{a_txt};{{{met_txt}}})"
