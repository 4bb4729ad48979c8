"""Checkpoint image format and the write-event journal.

The journal is the coupling point between checkpointing and transfer: the
dumper appends page/meta entries as it produces them, consumers tail the
sequence, and a single Finalized entry (carrying the manifest) closes it.
Entries are immutable once appended and every consumer sees the same prefix.

Page payloads come in two representations with identical semantics:
inline raw bytes, or a procedural reference (seed key + size) whose bytes are
regenerated on demand. Digests are always computed over the logical payload
bytes, so both representations verify identically. Experiments default to
procedural records to keep multi-GiB sweeps fast; fidelity tests run inline.
"""

from __future__ import annotations

import hashlib
import json
import random
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import BinaryIO, Iterable, Iterator, Sequence

from .model import ProcessRole, canonical_json

IMAGE_MAGIC = b"UMSCKPT1"

_U32 = struct.Struct("<I")


class CheckpointError(RuntimeError):
    pass


class DigestMismatch(CheckpointError):
    pass


class IncompleteJournal(CheckpointError):
    pass


class JournalClosed(CheckpointError):
    pass


def procedural_payload(seed_key: str, size: int) -> bytes:
    """Deterministic pseudo-random page content for a (container, pid, index)
    identity. Stable across runs and platforms."""
    if size == 0:
        return b""
    return random.Random(seed_key).randbytes(size)


def page_digest(payload: bytes) -> str:
    """64-bit page fingerprint (corruption detection, not security)."""
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


_digest_cache: dict[tuple[str, int], str] = {}
_digest_lock = threading.Lock()


def procedural_digest(seed_key: str, size: int) -> str:
    """Digest of a procedural payload, memoized so sweeps that revisit the
    same page identity do not regenerate gigabytes of content."""
    key = (seed_key, size)
    with _digest_lock:
        hit = _digest_cache.get(key)
    if hit is not None:
        return hit
    digest = page_digest(procedural_payload(seed_key, size))
    with _digest_lock:
        _digest_cache[key] = digest
    return digest


@dataclass(frozen=True)
class PageRecord:
    """One page of checkpointed memory: either inline bytes or a procedural
    reference. `size` is always the logical payload length."""

    pid: int
    page_index: int
    size: int
    payload: bytes | None = None
    seed_key: str | None = None

    def __post_init__(self):
        if (self.payload is None) == (self.seed_key is None):
            raise CheckpointError("exactly one of payload/seed_key required")
        if self.payload is not None and len(self.payload) != self.size:
            raise CheckpointError("payload length disagrees with size")

    def payload_bytes(self) -> bytes:
        if self.payload is not None:
            return self.payload
        return procedural_payload(self.seed_key, self.size)

    def digest(self) -> str:
        if self.payload is not None:
            return page_digest(self.payload)
        return procedural_digest(self.seed_key, self.size)

    def inline(self) -> "PageRecord":
        if self.payload is not None:
            return self
        return PageRecord(self.pid, self.page_index, self.size,
                          payload=self.payload_bytes())


@dataclass(frozen=True)
class ProcessMeta:
    pid: int
    role: ProcessRole
    counter: int
    parent_pid: int  # 0 for the entry process

    def to_dict(self) -> dict:
        return {"pid": self.pid, "role": self.role.value,
                "counter": self.counter, "parent_pid": self.parent_pid}

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessMeta":
        return cls(d["pid"], ProcessRole(d["role"]), d["counter"], d["parent_pid"])


def encode_meta(session_id: str, process_meta: Sequence[ProcessMeta]) -> bytes:
    return canonical_json({
        "session_id": session_id,
        "processes": [m.to_dict() for m in process_meta],
    }).encode()


def decode_meta(raw: bytes) -> tuple[str, tuple[ProcessMeta, ...]]:
    d = json.loads(raw.decode())
    return d["session_id"], tuple(ProcessMeta.from_dict(m) for m in d["processes"])


@dataclass(frozen=True)
class Manifest:
    """Digest of every page plus the meta block; closes the image."""

    page_digests: tuple[tuple[int, int, str], ...]  # (pid, page_index, digest)
    meta_digest: str
    total_bytes: int

    def to_dict(self) -> dict:
        return {
            "page_digests": [list(e) for e in self.page_digests],
            "meta_digest": self.meta_digest,
            "total_bytes": self.total_bytes,
        }

    def encode(self) -> bytes:
        return canonical_json(self.to_dict()).encode()

    @classmethod
    def decode(cls, raw: bytes) -> "Manifest":
        d = json.loads(raw.decode())
        return cls(
            page_digests=tuple((p, i, h) for p, i, h in d["page_digests"]),
            meta_digest=d["meta_digest"],
            total_bytes=d["total_bytes"],
        )


@dataclass(frozen=True)
class CheckpointImage:
    session_id: str
    process_meta: tuple[ProcessMeta, ...]
    pages: tuple[PageRecord, ...]
    manifest: Manifest

    @property
    def total_bytes(self) -> int:
        return self.manifest.total_bytes

    def meta_bytes(self) -> bytes:
        return encode_meta(self.session_id, self.process_meta)

    def verify(self) -> None:
        """Recompute every digest against the manifest."""
        by_key = {(p, i): h for p, i, h in self.manifest.page_digests}
        if len(by_key) != len(self.manifest.page_digests):
            raise DigestMismatch("manifest lists a page twice")
        if len(self.pages) != len(by_key):
            raise IncompleteJournal(
                f"{len(self.pages)} pages present, manifest covers {len(by_key)}")
        payload_total = 0
        for page in self.pages:
            want = by_key.get((page.pid, page.page_index))
            if want is None:
                raise DigestMismatch(f"page ({page.pid},{page.page_index}) not in manifest")
            if page.digest() != want:
                raise DigestMismatch(f"page ({page.pid},{page.page_index}) digest mismatch")
            payload_total += page.size
        meta = self.meta_bytes()
        if page_digest(meta) != self.manifest.meta_digest:
            raise DigestMismatch("meta digest mismatch")
        if payload_total + len(meta) != self.manifest.total_bytes:
            raise DigestMismatch("total_bytes disagrees with contents")

    def equivalent_to(self, other: "CheckpointImage") -> bool:
        """Same logical content (payload bytes compared, representations may differ)."""
        if (self.session_id != other.session_id
                or self.process_meta != other.process_meta
                or self.manifest != other.manifest
                or len(self.pages) != len(other.pages)):
            return False
        return all(
            a.pid == b.pid and a.page_index == b.page_index
            and a.payload_bytes() == b.payload_bytes()
            for a, b in zip(self.pages, other.pages)
        )


def build_image(session_id: str, process_meta: Sequence[ProcessMeta],
                pages: Sequence[PageRecord]) -> CheckpointImage:
    meta = encode_meta(session_id, process_meta)
    manifest = Manifest(
        page_digests=tuple((p.pid, p.page_index, p.digest()) for p in pages),
        meta_digest=page_digest(meta),
        total_bytes=sum(p.size for p in pages) + len(meta),
    )
    return CheckpointImage(session_id, tuple(process_meta), tuple(pages), manifest)


class EntryKind(str, Enum):
    META = "meta"
    PAGE = "page"
    FINALIZE = "finalize"


_KIND_CODE = {EntryKind.META: 1, EntryKind.PAGE: 2, EntryKind.FINALIZE: 3}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_PAGE_INLINE = 0
_PAGE_PROCEDURAL = 1


@dataclass(frozen=True)
class JournalEntry:
    """One write event. `produced_at_ns` is the virtual time at which the
    dumper made the entry visible; `logical_bytes` is what the link model
    charges for shipping it."""

    seq: int
    kind: EntryKind
    produced_at_ns: int
    meta: bytes | None = None
    page: PageRecord | None = None
    manifest: Manifest | None = None

    @property
    def logical_bytes(self) -> int:
        if self.kind is EntryKind.META:
            return len(self.meta)
        if self.kind is EntryKind.PAGE:
            return self.page.size
        return len(self.manifest.encode())

    def encode(self) -> bytes:
        """Self-contained wire encoding (without the outer length prefix)."""
        head = bytes([_KIND_CODE[self.kind]]) + _U32.pack(self.seq) + struct.pack(
            "<q", self.produced_at_ns)
        if self.kind is EntryKind.META:
            return head + _U32.pack(len(self.meta)) + self.meta
        if self.kind is EntryKind.FINALIZE:
            raw = self.manifest.encode()
            return head + _U32.pack(len(raw)) + raw
        p = self.page
        if p.payload is not None:
            body = bytes([_PAGE_INLINE]) + _U32.pack(len(p.payload)) + p.payload
        else:
            key = p.seed_key.encode()
            body = (bytes([_PAGE_PROCEDURAL]) + _U32.pack(p.size)
                    + _U32.pack(len(key)) + key)
        return head + _U32.pack(p.pid) + _U32.pack(p.page_index) + body

    @classmethod
    def decode(cls, raw: bytes) -> "JournalEntry":
        try:
            kind = _CODE_KIND[raw[0]]
            seq = _U32.unpack_from(raw, 1)[0]
            produced_at_ns = struct.unpack_from("<q", raw, 5)[0]
            off = 13
            if kind is EntryKind.META:
                n = _U32.unpack_from(raw, off)[0]
                return cls(seq, kind, produced_at_ns, meta=raw[off + 4:off + 4 + n])
            if kind is EntryKind.FINALIZE:
                n = _U32.unpack_from(raw, off)[0]
                return cls(seq, kind, produced_at_ns,
                           manifest=Manifest.decode(raw[off + 4:off + 4 + n]))
            pid = _U32.unpack_from(raw, off)[0]
            page_index = _U32.unpack_from(raw, off + 4)[0]
            rep = raw[off + 8]
            if rep == _PAGE_INLINE:
                n = _U32.unpack_from(raw, off + 9)[0]
                payload = raw[off + 13:off + 13 + n]
                if len(payload) != n:
                    raise CheckpointError("truncated page payload")
                page = PageRecord(pid, page_index, n, payload=payload)
            elif rep == _PAGE_PROCEDURAL:
                size = _U32.unpack_from(raw, off + 9)[0]
                klen = _U32.unpack_from(raw, off + 13)[0]
                key = raw[off + 17:off + 17 + klen].decode()
                page = PageRecord(pid, page_index, size, seed_key=key)
            else:
                raise CheckpointError(f"unknown page representation {rep}")
            return cls(seq, kind, produced_at_ns, page=page)
        except (IndexError, struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"undecodable journal entry: {exc}") from exc


class WriteEventJournal:
    """Append-only entry sequence, safe to append and tail from different
    threads. Exactly one FINALIZE entry closes it."""

    def __init__(self):
        self._entries: list[JournalEntry] = []
        self._cond = threading.Condition()
        self._finalized = False

    def append(self, kind: EntryKind, produced_at_ns: int, *,
               meta: bytes | None = None, page: PageRecord | None = None,
               manifest: Manifest | None = None) -> int:
        with self._cond:
            if self._finalized:
                raise JournalClosed("journal already finalized")
            seq = len(self._entries) + 1
            entry = JournalEntry(seq, kind, produced_at_ns, meta=meta,
                                 page=page, manifest=manifest)
            self._entries.append(entry)
            if kind is EntryKind.FINALIZE:
                self._finalized = True
            self._cond.notify_all()
            return seq

    @property
    def finalized(self) -> bool:
        with self._cond:
            return self._finalized

    @property
    def watermark(self) -> int:
        with self._cond:
            return len(self._entries)

    def entry(self, seq: int) -> JournalEntry:
        with self._cond:
            return self._entries[seq - 1]

    def snapshot(self) -> list[JournalEntry]:
        with self._cond:
            return list(self._entries)

    def tail(self, from_seq: int = 1) -> Iterator[JournalEntry]:
        """Yield every entry with seq >= from_seq in order, blocking until the
        FINALIZE entry has been observed. Subscribing after finalization
        replays the full suffix."""
        if from_seq < 1:
            raise CheckpointError("from_seq must be >= 1")
        next_seq = from_seq
        while True:
            with self._cond:
                while len(self._entries) < next_seq:
                    if self._finalized:
                        return
                    self._cond.wait()
                entry = self._entries[next_seq - 1]
            yield entry
            if entry.kind is EntryKind.FINALIZE:
                return
            next_seq += 1

    def restamp(self, produced_at_ns: list[int]) -> None:
        """Rewrite entry timestamps after backpressure retiming; the sequence
        and contents are untouched."""
        with self._cond:
            if len(produced_at_ns) != len(self._entries):
                raise CheckpointError("restamp length mismatch")
            self._entries = [
                JournalEntry(e.seq, e.kind, t, meta=e.meta, page=e.page,
                             manifest=e.manifest)
                for e, t in zip(self._entries, produced_at_ns)
            ]


def assemble_image(entries: Iterable[JournalEntry]) -> CheckpointImage:
    """Rebuild and verify a CheckpointImage from a complete finalized journal
    stream. Rejects gaps, reordering, and corrupt payloads."""
    session_id = None
    process_meta: tuple[ProcessMeta, ...] | None = None
    pages: list[PageRecord] = []
    manifest: Manifest | None = None
    expected_seq = None
    for entry in entries:
        if expected_seq is not None and entry.seq != expected_seq:
            raise IncompleteJournal(
                f"journal stream out of order: got seq {entry.seq}, wanted {expected_seq}")
        expected_seq = entry.seq + 1
        if manifest is not None:
            raise IncompleteJournal("entries after FINALIZE")
        if entry.kind is EntryKind.META:
            session_id, process_meta = decode_meta(entry.meta)
        elif entry.kind is EntryKind.PAGE:
            pages.append(entry.page)
        else:
            manifest = entry.manifest
    if manifest is None:
        raise IncompleteJournal("journal not finalized")
    if process_meta is None:
        raise IncompleteJournal("journal carries no meta entry")
    image = CheckpointImage(session_id, process_meta, tuple(pages), manifest)
    image.verify()
    return image


def dump_image(image: CheckpointImage, fp: BinaryIO) -> int:
    """On-disk dump (batch mode): header magic, meta block, page blocks in
    (pid, index) order, manifest trailer. See FORMATS.md for the exact bytes."""
    written = fp.write(IMAGE_MAGIC)
    meta = image.meta_bytes()
    written += fp.write(_U32.pack(len(meta)))
    written += fp.write(meta)
    pages = sorted(image.pages, key=lambda p: (p.pid, p.page_index))
    written += fp.write(_U32.pack(len(pages)))
    for page in pages:
        payload = page.payload_bytes()
        written += fp.write(_U32.pack(page.pid))
        written += fp.write(_U32.pack(page.page_index))
        written += fp.write(_U32.pack(len(payload)))
        written += fp.write(payload)
    manifest = image.manifest.encode()
    written += fp.write(_U32.pack(len(manifest)))
    written += fp.write(manifest)
    return written


def _read_exact(fp: BinaryIO, n: int) -> bytes:
    raw = fp.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated image file")
    return raw


def load_image(fp: BinaryIO) -> CheckpointImage:
    if _read_exact(fp, len(IMAGE_MAGIC)) != IMAGE_MAGIC:
        raise CheckpointError("bad image magic")
    meta_len = _U32.unpack(_read_exact(fp, 4))[0]
    session_id, process_meta = decode_meta(_read_exact(fp, meta_len))
    page_count = _U32.unpack(_read_exact(fp, 4))[0]
    pages = []
    for _ in range(page_count):
        pid = _U32.unpack(_read_exact(fp, 4))[0]
        page_index = _U32.unpack(_read_exact(fp, 4))[0]
        size = _U32.unpack(_read_exact(fp, 4))[0]
        pages.append(PageRecord(pid, page_index, size, payload=_read_exact(fp, size)))
    manifest_len = _U32.unpack(_read_exact(fp, 4))[0]
    manifest = Manifest.decode(_read_exact(fp, manifest_len))
    image = CheckpointImage(session_id, process_meta, tuple(pages), manifest)
    image.verify()
    return image


__all__ = [
    "IMAGE_MAGIC", "CheckpointError", "DigestMismatch", "IncompleteJournal",
    "JournalClosed", "procedural_payload", "page_digest", "procedural_digest",
    "PageRecord", "ProcessMeta", "encode_meta", "decode_meta", "Manifest",
    "CheckpointImage", "build_image", "EntryKind", "JournalEntry",
    "WriteEventJournal", "assemble_image", "dump_image", "load_image",
]
