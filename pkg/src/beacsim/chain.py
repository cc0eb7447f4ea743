"""Append-only hash-chained ledger with file persistence.

Blocks carry signed records plus a commit certificate (the validator
fingerprints that voted). The digest of a block's canonical encoding chains
into the next block's parent-digest field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import (
    DuplicateRecordError,
    IntegrityError,
    ParseError,
    QuorumError,
    RejectedRecordError,
)
from .identity import DIGEST_LEN, digest, fp_hex
from .records import SignedRecord, _Reader, decode_record, encode_record, verify_record

MAGIC = b"BEACCHN"
FORMAT_VERSION = 1
GENESIS_PARENT = b"\x00" * DIGEST_LEN


@dataclass(frozen=True)
class Block:
    height: int
    parent_digest: bytes
    records: tuple[SignedRecord, ...]
    certificate: frozenset[bytes]  # validator fingerprints that voted


def encode_block(block: Block) -> bytes:
    out = bytearray()
    out += struct.pack(">Q", block.height)
    out += block.parent_digest
    out += struct.pack(">I", len(block.records))
    for record in block.records:
        raw = encode_record(record)
        out += struct.pack(">I", len(raw))
        out += raw
    voters = sorted(block.certificate)
    out += struct.pack(">I", len(voters))
    for voter in voters:
        out += voter
    return bytes(out)


def block_digest(block: Block) -> bytes:
    return digest(encode_block(block))


def decode_block(data: bytes, base_offset: int = 0) -> Block:
    reader = _Reader(data, base_offset)
    height = reader.u64()
    parent = reader.take(DIGEST_LEN)
    n_records = reader.u32()
    records = []
    for _ in range(n_records):
        raw = reader.blob()
        records.append(decode_record(_Reader(raw, reader.offset - len(raw))))
    n_voters = reader.u32()
    voters = frozenset(reader.take(DIGEST_LEN) for _ in range(n_voters))
    if reader.pos != len(data):
        raise ParseError("trailing bytes after block", reader.offset)
    return Block(height, parent, tuple(records), voters)


class Ledger:
    """Single-writer block list; blocks are immutable after append."""

    def __init__(self, quorum: int):
        self.quorum = quorum
        self.blocks: list[Block] = []
        # record identity (checksum) -> (height, offset within block)
        self.index: dict[bytes, tuple[int, int]] = {}

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def head_digest(self) -> bytes:
        if not self.blocks:
            return GENESIS_PARENT
        return block_digest(self.blocks[-1])

    def records(self):
        for block in self.blocks:
            yield from block.records

    def append_block(
        self, records: list[SignedRecord], certificate: frozenset[bytes]
    ) -> Block:
        for record in records:
            if not verify_record(record):
                raise RejectedRecordError(record, "signature or checksum invalid")
            if record.checksum in self.index:
                raise DuplicateRecordError(
                    f"duplicate record checksum {record.checksum.hex()}"
                )
        seen = {r.checksum for r in records}
        if len(seen) != len(records):
            raise DuplicateRecordError("duplicate record checksum within block")
        if len(certificate) < self.quorum:
            raise QuorumError(
                f"certificate has {len(certificate)} voters, quorum is {self.quorum}"
            )
        block = Block(
            height=len(self.blocks),
            parent_digest=self.head_digest,
            records=tuple(records),
            certificate=certificate,
        )
        self.blocks.append(block)
        for offset, record in enumerate(records):
            self.index[record.checksum] = (block.height, offset)
        return block


def verify_chain(ledger: Ledger) -> tuple[bool, list[str]]:
    """Full verification: parent digests, signatures, certificates, heights."""
    diagnostics: list[str] = []
    parent = GENESIS_PARENT
    for i, block in enumerate(ledger.blocks):
        if block.height != i:
            diagnostics.append(f"block {i}: height field is {block.height}")
        if block.parent_digest != parent:
            diagnostics.append(f"block {i}: parent digest mismatch")
        if len(block.certificate) < ledger.quorum:
            diagnostics.append(
                f"block {i}: certificate {len(block.certificate)} < quorum {ledger.quorum}"
            )
        for j, record in enumerate(block.records):
            if not verify_record(record):
                diagnostics.append(f"block {i} record {j}: verification failed")
        parent = block_digest(block)
    return (not diagnostics, diagnostics)


def persist(ledger: Ledger, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(">HH", FORMAT_VERSION, ledger.quorum))
        for block in ledger.blocks:
            raw = encode_block(block)
            fh.write(struct.pack(">I", len(raw)))
            fh.write(raw)


def load(path) -> Ledger:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ParseError("bad magic header", 0)
    pos = len(MAGIC)
    if pos + 4 > len(data):
        raise ParseError("truncated header", pos)
    version, quorum = struct.unpack(">HH", data[pos : pos + 4])
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}", pos)
    pos += 4
    ledger = Ledger(quorum=quorum)
    while pos < len(data):
        if pos + 4 > len(data):
            raise ParseError("truncated block frame", pos)
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        pos += 4
        if pos + length > len(data):
            raise ParseError("truncated block", pos)
        block = decode_block(data[pos : pos + length], pos)
        pos += length
        if block.height != len(ledger.blocks):
            raise IntegrityError(
                f"block height {block.height} out of order at byte {pos}"
            )
        ledger.blocks.append(block)
        for offset, record in enumerate(block.records):
            ledger.index[record.checksum] = (block.height, offset)
    return ledger


def dump_text(ledger: Ledger) -> str:
    """Human-readable rendering for the CLI `chain dump` subcommand."""
    lines = [f"ledger quorum={ledger.quorum} blocks={len(ledger.blocks)}"]
    for block in ledger.blocks:
        lines.append(
            f"block {block.height} parent={block.parent_digest.hex()[:16]} "
            f"digest={block_digest(block).hex()[:16]} voters={len(block.certificate)}"
        )
        for record in block.records:
            lines.append(
                f"  {type(record.payload).__name__} issuer={fp_hex(record.issuer)[:16]} "
                f"ts={record.timestamp} checksum={record.checksum.hex()[:16]}"
            )
    return "\n".join(lines) + "\n"
