"""Sliding-window ingestion and in-window mining over ledger streams.

The window is a strict-FIFO buffer of the most recent transactions.
Ingest publishes an immutable snapshot (buffer, generation, level-1 item
counts) in a single reference assignment, so queries running concurrently
with the ingesting writer always see a fully applied window. In-window
mining is an exact recomputation over the buffered transactions, with the
memoized level-1 counts maintained incrementally on ingest and eviction.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass

from .arm import ItemTransaction, MiningParams, mine_rules
from .lifecycle import decode_artifact, evaluate_rules


class StreamingError(Exception):
    """Base class for streaming failures."""


class EmptyWindow(StreamingError):
    """A query ran against a window holding no transactions."""


class StreamError(StreamingError):
    """The feeding stream reported an error."""


@dataclass(frozen=True)
class EvictionReport:
    evicted: ItemTransaction | None
    generation: int
    buffer_len: int


@dataclass(frozen=True)
class WindowSnapshot:
    transactions: tuple[ItemTransaction, ...]
    generation: int
    item_counts: dict


class SlidingWindow:
    """Bounded FIFO of transactions with one ingesting writer."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.generation = 0
        self.evicted_total = 0
        self.error = False
        self._buffer: deque[ItemTransaction] = deque()
        self._item_counts: Counter = Counter()
        self._snapshot = WindowSnapshot((), 0, {})

    def __len__(self):
        return len(self._buffer)

    def ingest(self, txn: ItemTransaction) -> EvictionReport:
        """Append one transaction, evicting the oldest when full."""
        self._buffer.append(txn)
        self._item_counts.update(txn.items)
        evicted = None
        if len(self._buffer) > self.capacity:
            evicted = self._buffer.popleft()
            self.evicted_total += 1
            self._item_counts.subtract(evicted.items)
            self._item_counts = +self._item_counts  # drop zero entries
        self.generation += 1
        self._snapshot = WindowSnapshot(tuple(self._buffer), self.generation,
                                        dict(self._item_counts))
        return EvictionReport(evicted, self.generation, len(self._buffer))

    def snapshot(self) -> WindowSnapshot:
        return self._snapshot

    def mark_error(self):
        """Record an upstream stream failure; validation will refuse to run."""
        self.error = True


def query_window(window: SlidingWindow, params: MiningParams):
    """Mine exactly the buffered transactions (N = buffer length)."""
    snap = window.snapshot()
    if not snap.transactions:
        raise EmptyWindow("no transactions in the window")
    return mine_rules(snap.transactions, params, item_counts=snap.item_counts)


def validate_in_window(window: SlidingWindow, artifact,
                       metric: str = "mean_confidence"):
    """Evaluate a model artifact against the current window contents.

    Returns None without scoring when the window is empty; raises
    StreamError when the feeding stream has failed. Re-invocable as the
    window slides, yielding a score time-series.
    """
    if window.error:
        raise StreamError("feeding stream reported an error")
    snap = window.snapshot()
    if not snap.transactions:
        return None
    rules = decode_artifact(artifact)
    return evaluate_rules(rules, snap.transactions, metric)


def transactions_from_records(records):
    """Group a record stream into transactions on patient-id change.

    Suits streams whose records arrive grouped by patient (as ledger
    blocks written one patient per block are); items within a run are
    deduplicated.
    """
    current_pid = None
    items: set[str] = set()
    for record in records:
        if current_pid is None:
            current_pid, items = record.patient_id, {record.item}
        elif record.patient_id == current_pid:
            items.add(record.item)
        else:
            yield ItemTransaction(current_pid, frozenset(items))
            current_pid, items = record.patient_id, {record.item}
    if current_pid is not None:
        yield ItemTransaction(current_pid, frozenset(items))
