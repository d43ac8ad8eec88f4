"""Append-only hash-linked block store replicated across member nodes.

Canonical block encoding (the byte string that is hashed), all integers
big-endian:

    u64  index
    u64  timestamp (milliseconds since epoch)
    32B  prev_hash (raw digest; 32 zero bytes for the genesis block)
    u32  record count
    per record:
        u64  patient id
        u32  item byte length
        ...  item (UTF-8)

A block's hash is SHA-256 of exactly those bytes, so equal content gives
equal digests across processes and implementations.

Replication is synchronous single-leader: the leader appends, encodes the
block to its wire form, and every follower decodes, re-verifies linkage
and digest, and appends before the call returns. The protocol object is
pluggable; this module ships only that one.

At-rest persistence is JSON lines, one block per line, with hex digests.
Decoding is strict (exact keys, exact types, lowercase hex) so that any
single-byte change to a persisted chain is detected either as a decode
failure or as a validation failure.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import struct
import threading
import time
from dataclasses import dataclass, field

GENESIS_PREV_HASH = bytes(32)

_ITEM_RE = re.compile(r"[a-z]+")
_HEX_RE = re.compile(r"[0-9a-f]{64}")
_BLOCK_KEYS = {"index", "timestamp", "prev_hash", "records", "hash"}
_RECORD_KEYS = {"patient", "drug"}


class LedgerError(Exception):
    """Base class for ledger failures."""


class NotLeader(LedgerError):
    """Append attempted on a follower node."""


class EmptyPayload(LedgerError):
    """Append attempted with no records."""


class CorruptChain(LedgerError):
    """Chain failed validation where a valid chain is required."""


class OutOfRange(LedgerError):
    """Subscription start is beyond the chain tip."""


class ChainDecodeError(LedgerError):
    """Persisted chain bytes do not decode to a well-formed chain."""


class ReplicationError(LedgerError):
    """A follower rejected a replicated block."""


@dataclass(frozen=True)
class Record:
    """One (patient, item) row."""

    patient_id: int
    item: str

    def __post_init__(self):
        if type(self.patient_id) is not int or self.patient_id < 0:
            raise ValueError("patient_id must be a non-negative integer")
        if not isinstance(self.item, str) or not _ITEM_RE.fullmatch(self.item):
            raise ValueError("item must be a non-empty lowercase token")


def canonical_block_bytes(index: int, timestamp: int, prev_hash: bytes, records) -> bytes:
    """The documented canonical encoding; input to the block hash."""
    parts = [struct.pack(">QQ", index, timestamp), prev_hash,
             struct.pack(">I", len(records))]
    for record in records:
        item = record.item.encode("utf-8")
        parts.append(struct.pack(">QI", record.patient_id, len(item)))
        parts.append(item)
    return b"".join(parts)


def hash_block(index: int, timestamp: int, prev_hash: bytes, records) -> bytes:
    """SHA-256 digest of the canonical block encoding."""
    return hashlib.sha256(canonical_block_bytes(index, timestamp, prev_hash, records)).digest()


@dataclass(frozen=True)
class Block:
    index: int
    timestamp: int
    prev_hash: bytes
    records: tuple[Record, ...]
    hash: bytes

    def __post_init__(self):
        if self.index < 0 or self.timestamp < 0:
            raise ValueError("index and timestamp must be non-negative")
        if len(self.prev_hash) != 32 or len(self.hash) != 32:
            raise ValueError("digests must be 32 bytes")

    @classmethod
    def create(cls, index, timestamp, prev_hash, records) -> "Block":
        records = tuple(records)
        return cls(index, timestamp, prev_hash, records,
                   hash_block(index, timestamp, prev_hash, records))


class Chain:
    """An ordered list of linked blocks. Blocks are immutable; the list
    only grows, and a block is fully built before it becomes visible, so
    readers never observe a partial block."""

    def __init__(self, blocks=None):
        self.blocks: list[Block] = list(blocks) if blocks else []

    @classmethod
    def genesis(cls, timestamp: int = 0) -> "Chain":
        return cls([Block.create(0, timestamp, GENESIS_PREV_HASH, ())])

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def __len__(self):
        return len(self.blocks)

    def extend(self, records, timestamp: int) -> Block:
        """Build, link and append the next block (leader-side append)."""
        tip = self.tip
        block = Block.create(tip.index + 1, max(timestamp, tip.timestamp),
                             tip.hash, records)
        self.blocks.append(block)
        return block

    def append_verified(self, block: Block) -> None:
        """Append a replicated block after re-checking linkage and digest."""
        tip = self.tip
        if block.index != tip.index + 1 or block.prev_hash != tip.hash:
            raise ReplicationError("block does not link to the chain tip")
        if block.timestamp < tip.timestamp:
            raise ReplicationError("block timestamp regresses")
        if not block.records:
            raise ReplicationError("non-genesis block has no records")
        if block.hash != hash_block(block.index, block.timestamp,
                                    block.prev_hash, block.records):
            raise ReplicationError("block digest does not recompute")
        self.blocks.append(block)


def validate_chain(chain: Chain) -> bool:
    """True iff every linkage, ordering and digest invariant holds.

    Never raises; tampering anywhere in the chain returns False.
    """
    blocks = chain.blocks
    if not blocks:
        return False
    genesis = blocks[0]
    if genesis.index != 0 or genesis.prev_hash != GENESIS_PREV_HASH:
        return False
    for i, block in enumerate(blocks):
        if i > 0:
            prev = blocks[i - 1]
            if (block.index != prev.index + 1 or block.prev_hash != prev.hash
                    or block.timestamp < prev.timestamp or not block.records):
                return False
        if block.hash != hash_block(block.index, block.timestamp,
                                    block.prev_hash, block.records):
            return False
    return True


def read_at_rest(chain: Chain, where=None) -> list[Record]:
    """All records in block order, optionally filtered by a predicate."""
    if not validate_chain(chain):
        raise CorruptChain("chain failed validation")
    records = []
    for block in chain.blocks:
        for record in block.records:
            if where is None or where(record):
                records.append(record)
    return records


class Subscription:
    """Resumable record stream over a growing chain.

    Iteration drains everything from the starting block to the current
    tip, then stops; iterating again after new appends yields exactly the
    new records. Each record is delivered once, in append order, and a
    block is only visible once fully appended.
    """

    def __init__(self, chain: Chain, from_block: int = 0):
        if from_block > chain.tip.index:
            raise OutOfRange(f"from_block {from_block} exceeds tip {chain.tip.index}")
        self._chain = chain
        self._block = from_block
        self._offset = 0

    def __iter__(self):
        return self

    def __next__(self) -> Record:
        blocks = self._chain.blocks
        while self._block < len(blocks):
            records = blocks[self._block].records
            if self._offset < len(records):
                record = records[self._offset]
                self._offset += 1
                return record
            self._block += 1
            self._offset = 0
        raise StopIteration


def subscribe(chain: Chain, from_block: int = 0) -> Subscription:
    return Subscription(chain, from_block)


@dataclass
class MemberNode:
    node_id: str
    role: str
    chain: Chain
    network: "LedgerNetwork | None" = field(default=None, repr=False)


class SyncLeaderReplication:
    """Default protocol: push each new block to every follower, which
    decodes and re-verifies it before appending."""

    def replicate(self, block: Block, followers) -> None:
        line = encode_block_line(block)
        for follower in followers:
            follower.chain.append_verified(decode_block_line(line))


def wall_clock_ms() -> int:
    return time.time_ns() // 1_000_000


def stepping_clock(start: int, step: int = 1):
    """Deterministic clock for tests and reproducible runs."""
    state = {"now": start - step}

    def clock() -> int:
        state["now"] += step
        return state["now"]

    return clock


class LedgerNetwork:
    """A set of member nodes sharing one chain via leader replication.

    Exactly one leader; appends are serialized through it and through an
    internal lock (one writer). Reads and subscriptions need no lock.
    """

    def __init__(self, member_ids, leader: str | None = None, clock=None,
                 protocol: SyncLeaderReplication | None = None):
        member_ids = list(member_ids)
        if not member_ids:
            raise ValueError("at least one member required")
        leader = leader if leader is not None else member_ids[0]
        if leader not in member_ids:
            raise ValueError(f"leader {leader!r} is not a member")
        self.clock = clock if clock is not None else wall_clock_ms
        self.protocol = protocol if protocol is not None else SyncLeaderReplication()
        self._write_lock = threading.Lock()

        genesis_line = encode_block_line(Chain.genesis(self.clock()).tip)
        self.members = [
            MemberNode(node_id, "leader" if node_id == leader else "follower",
                       Chain([decode_block_line(genesis_line)]), self)
            for node_id in member_ids
        ]

    @property
    def leader(self) -> MemberNode:
        return next(m for m in self.members if m.role == "leader")

    @property
    def followers(self) -> list[MemberNode]:
        return [m for m in self.members if m.role == "follower"]

    def node(self, node_id: str) -> MemberNode:
        return next(m for m in self.members if m.node_id == node_id)

    def append_block(self, node: MemberNode, records) -> Block:
        if node.role != "leader":
            raise NotLeader(f"{node.node_id} is a follower")
        records = tuple(records)
        if not records:
            raise EmptyPayload("a block must carry at least one record")
        with self._write_lock:
            block = node.chain.extend(records, self.clock())
            self.protocol.replicate(block, self.followers)
        return block


def append_block(node: MemberNode, records) -> Block:
    """Append through the node's network; the node must be the leader."""
    if node.network is None:
        raise LedgerError("node is not attached to a network")
    return node.network.append_block(node, records)


# --- persistence -----------------------------------------------------------

def encode_block_line(block: Block) -> str:
    return json.dumps({
        "index": block.index,
        "timestamp": block.timestamp,
        "prev_hash": block.prev_hash.hex(),
        "records": [{"patient": r.patient_id, "drug": r.item} for r in block.records],
        "hash": block.hash.hex(),
    }, separators=(",", ":"))


def _require_int(value, name: str) -> int:
    if type(value) is not int or value < 0:
        raise ChainDecodeError(f"{name} must be a non-negative integer")
    return value


def _require_digest(value, name: str) -> bytes:
    if not isinstance(value, str) or not _HEX_RE.fullmatch(value):
        raise ChainDecodeError(f"{name} must be 64 lowercase hex characters")
    return bytes.fromhex(value)


def decode_block_line(line: str) -> Block:
    """Strict decode: exact keys, exact types, lowercase hex only."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ChainDecodeError(f"bad JSON: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != _BLOCK_KEYS:
        raise ChainDecodeError("block object must have exactly the block keys")
    if not isinstance(obj["records"], list):
        raise ChainDecodeError("records must be a list")
    records = []
    for entry in obj["records"]:
        if not isinstance(entry, dict) or set(entry) != _RECORD_KEYS:
            raise ChainDecodeError("record object must have exactly patient and drug")
        patient = _require_int(entry["patient"], "patient")
        drug = entry["drug"]
        if not isinstance(drug, str):
            raise ChainDecodeError("drug must be a string")
        try:
            records.append(Record(patient, drug))
        except ValueError as exc:
            raise ChainDecodeError(str(exc)) from exc
    return Block(
        _require_int(obj["index"], "index"),
        _require_int(obj["timestamp"], "timestamp"),
        _require_digest(obj["prev_hash"], "prev_hash"),
        tuple(records),
        _require_digest(obj["hash"], "hash"),
    )


def chain_to_jsonl(chain: Chain) -> str:
    return "".join(encode_block_line(b) + "\n" for b in chain.blocks)


def chain_from_jsonl(text: str) -> Chain:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ChainDecodeError("empty chain file")
    return Chain([decode_block_line(line) for line in lines])


def write_chain(chain: Chain, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(chain_to_jsonl(chain))


def load_chain(path) -> Chain:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ChainDecodeError("chain file is not valid UTF-8") from exc
    return chain_from_jsonl(text)


def chain_bytes_valid(raw: bytes) -> bool:
    """Decode-and-validate in one step; False on any failure."""
    try:
        chain = chain_from_jsonl(raw.decode("utf-8"))
    except (ChainDecodeError, UnicodeDecodeError):
        return False
    return validate_chain(chain)


# --- record ingestion ------------------------------------------------------

CSV_HEADER = ("patient", "drug")


def write_records_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow((record.patient_id, record.item))


def read_records_csv(path) -> list[Record]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"expected header {','.join(CSV_HEADER)}")
        return [Record(int(patient), drug) for patient, drug in reader]
