import io
import threading

import pytest
from hypothesis import given, settings, strategies as st

from crossmig.checkpoint import (IMAGE_MAGIC, CheckpointError, DigestMismatch,
                                 EntryKind, IncompleteJournal, JournalClosed,
                                 JournalEntry, Manifest, PageRecord,
                                 ProcessMeta, WriteEventJournal,
                                 assemble_image, build_image, dump_image,
                                 load_image, page_digest, procedural_digest,
                                 procedural_payload)
from crossmig.model import ProcessRole


def make_pages(n, size=64, pid=1, inline=True):
    out = []
    for i in range(n):
        key = f"c/{pid}/{i}"
        if inline:
            out.append(PageRecord(pid, i, size, payload=procedural_payload(key, size)))
        else:
            out.append(PageRecord(pid, i, size, seed_key=key))
    return out


def make_image(n_pages=3, inline=True, session_id="s"):
    meta = (ProcessMeta(1, ProcessRole.SERVICE, 7, 0),)
    return build_image(session_id, meta, make_pages(n_pages, inline=inline))


def fill_journal(journal, image):
    journal.append(EntryKind.META, 10, meta=image.meta_bytes())
    for i, page in enumerate(image.pages):
        journal.append(EntryKind.PAGE, 20 + i, page=page)
    journal.append(EntryKind.FINALIZE, 100, manifest=image.manifest)


def test_procedural_payload_is_deterministic_and_sized():
    a = procedural_payload("c/1/0", 4096)
    b = procedural_payload("c/1/0", 4096)
    assert a == b and len(a) == 4096
    assert procedural_payload("c/1/1", 4096) != a
    assert procedural_payload("x", 0) == b""


def test_procedural_digest_matches_inline_digest():
    key, size = "c/9/3", 2048
    assert procedural_digest(key, size) == page_digest(procedural_payload(key, size))
    rec_inline = PageRecord(9, 3, size, payload=procedural_payload(key, size))
    rec_proc = PageRecord(9, 3, size, seed_key=key)
    assert rec_inline.digest() == rec_proc.digest()
    assert rec_inline.payload_bytes() == rec_proc.payload_bytes()


def test_image_verify_and_totals():
    image = make_image()
    image.verify()
    assert image.total_bytes == 3 * 64 + len(image.meta_bytes())
    # manifest covers every page exactly once
    assert len(image.manifest.page_digests) == 3


def test_journal_seq_and_close():
    journal = WriteEventJournal()
    image = make_image()
    seqs = [journal.append(EntryKind.PAGE, i, page=p)
            for i, p in enumerate(image.pages)]
    seqs.append(journal.append(EntryKind.FINALIZE, 99, manifest=image.manifest))
    assert seqs == [1, 2, 3, 4]
    with pytest.raises(JournalClosed):
        journal.append(EntryKind.PAGE, 100, page=image.pages[0])


def test_tail_replays_full_journal_after_finalize():
    journal = WriteEventJournal()
    image = make_image()
    fill_journal(journal, image)
    entries = list(journal.tail(1))
    assert [e.seq for e in entries] == [1, 2, 3, 4, 5]
    assert entries[-1].kind is EntryKind.FINALIZE
    # mid-stream subscription sees the suffix
    assert [e.seq for e in journal.tail(3)] == [3, 4, 5]


def test_concurrent_tailer_sees_same_prefix():
    journal = WriteEventJournal()
    image = make_image(n_pages=50)
    seen = []

    def consume():
        for entry in journal.tail(1):
            seen.append(entry.seq)

    thread = threading.Thread(target=consume)
    thread.start()
    fill_journal(journal, image)
    thread.join(timeout=5)
    assert not thread.is_alive()
    assert seen == [e.seq for e in journal.snapshot()]


def test_assemble_identity():
    journal = WriteEventJournal()
    image = make_image()
    fill_journal(journal, image)
    rebuilt = assemble_image(journal.snapshot())
    assert rebuilt.equivalent_to(image)


def test_assemble_rejects_missing_page():
    journal = WriteEventJournal()
    image = make_image()
    journal.append(EntryKind.META, 1, meta=image.meta_bytes())
    journal.append(EntryKind.PAGE, 2, page=image.pages[0])
    journal.append(EntryKind.PAGE, 3, page=image.pages[2])  # page 1 missing
    journal.append(EntryKind.FINALIZE, 4, manifest=image.manifest)
    with pytest.raises(IncompleteJournal):
        assemble_image(journal.snapshot())


def test_assemble_rejects_unfinalized_and_out_of_order():
    image = make_image()
    journal = WriteEventJournal()
    journal.append(EntryKind.META, 1, meta=image.meta_bytes())
    with pytest.raises(IncompleteJournal):
        assemble_image(journal.snapshot())
    full = WriteEventJournal()
    fill_journal(full, image)
    entries = full.snapshot()
    with pytest.raises(IncompleteJournal):
        assemble_image([entries[0], entries[2], entries[1]] + entries[3:])


def test_assemble_detects_flipped_payload_byte():
    image = make_image()
    page = image.pages[1]
    bad = PageRecord(page.pid, page.page_index, page.size,
                     payload=b"\x00" + page.payload[1:])
    journal = WriteEventJournal()
    journal.append(EntryKind.META, 1, meta=image.meta_bytes())
    journal.append(EntryKind.PAGE, 2, page=image.pages[0])
    journal.append(EntryKind.PAGE, 3, page=bad)
    journal.append(EntryKind.PAGE, 4, page=image.pages[2])
    journal.append(EntryKind.FINALIZE, 5, manifest=image.manifest)
    with pytest.raises(DigestMismatch):
        assemble_image(journal.snapshot())


@settings(max_examples=60)
@given(st.integers(0, 6), st.booleans(), st.integers(1, 3))
def test_entry_codec_round_trip(n_pages, inline, pid):
    image = build_image("sx", (ProcessMeta(pid, ProcessRole.SERVICE, 0, 0),),
                        make_pages(n_pages, pid=pid, inline=inline))
    journal = WriteEventJournal()
    fill_journal(journal, image)
    for entry in journal.snapshot():
        decoded = JournalEntry.decode(entry.encode())
        assert decoded.seq == entry.seq
        assert decoded.kind == entry.kind
        assert decoded.produced_at_ns == entry.produced_at_ns
        assert decoded.logical_bytes == entry.logical_bytes
        if entry.kind is EntryKind.PAGE:
            assert decoded.page.payload_bytes() == entry.page.payload_bytes()


def test_entry_decode_rejects_garbage():
    with pytest.raises(CheckpointError):
        JournalEntry.decode(b"\xff\x00\x01")
    with pytest.raises(CheckpointError):
        JournalEntry.decode(b"")


def test_dump_format_magic_and_round_trip():
    image = make_image(n_pages=4)
    buf = io.BytesIO()
    written = dump_image(image, buf)
    raw = buf.getvalue()
    assert raw.startswith(IMAGE_MAGIC)
    assert written == len(raw)
    buf.seek(0)
    loaded = load_image(buf)
    assert loaded.equivalent_to(image)
    # pages stored in (pid, index) order with little-endian u32 lengths
    meta_len = int.from_bytes(raw[8:12], "little")
    assert raw[12:12 + meta_len] == image.meta_bytes()


def test_load_rejects_bad_magic_and_truncation():
    image = make_image()
    buf = io.BytesIO()
    dump_image(image, buf)
    raw = buf.getvalue()
    with pytest.raises(CheckpointError):
        load_image(io.BytesIO(b"NOTMAGIC" + raw[8:]))
    with pytest.raises(CheckpointError):
        load_image(io.BytesIO(raw[:-3]))


def test_restamp_preserves_content():
    journal = WriteEventJournal()
    image = make_image()
    fill_journal(journal, image)
    times = [100 * (i + 1) for i in range(journal.watermark)]
    journal.restamp(times)
    assert [e.produced_at_ns for e in journal.snapshot()] == times
    assert assemble_image(journal.snapshot()).equivalent_to(image)
