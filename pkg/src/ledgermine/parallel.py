"""Threaded (SMP) and simulated master/worker (MPP) mining.

Both modes use count distribution: the data is partitioned, every
participant counts the same candidate set over its own slice, and the
partial counts are summed at a per-level barrier before thresholds are
applied. Candidate generation and thresholding run once, centrally, so
the output is identical to sequential mining -- same rules, same exact
integer counts.

SMP partitions live in shared memory and are counted by a thread pool.
MPP simulates cluster nodes as in-process worker threads exchanging
messages over queues; the master holds no shard, aggregates partial
counts, and is the only participant that ever writes a model to disk.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass
from itertools import combinations

from .arm import Itemset, MiningParams, generate_rules, mine_frequent_itemsets
from .arm import counting
from .lifecycle import ArtifactFormat, serialize_model, write_artifact


class ParallelError(Exception):
    """Base class for parallel-execution failures."""


class OutOfMemory(ParallelError):
    """Allocation failed while setting up or running the pool."""


class WorkerFailure(ParallelError):
    """A worker errored; the job is aborted with no partial results."""


class BarrierTimeout(ParallelError):
    """A participant never reached the aggregation barrier."""


@dataclass(frozen=True)
class ThreadPoolConfig:
    n_threads: int = 1
    kernel: str | None = None

    def __post_init__(self):
        if self.n_threads < 1:
            raise ValueError("n_threads must be at least 1")


@dataclass(frozen=True)
class ClusterConfig:
    n_workers: int = 1
    barrier_timeout: float = 30.0
    kernel: str | None = None

    def __post_init__(self):
        if self.n_workers < 1:
            raise ValueError("n_workers must be at least 1")


def partition_contiguous(seq, n_parts: int) -> list[list]:
    """Split into n contiguous parts, sizes differing by at most one,
    larger parts first. Parts cover the input exactly."""
    seq = list(seq)
    base, extra = divmod(len(seq), n_parts)
    parts, start = [], 0
    for i in range(n_parts):
        size = base + (1 if i < extra else 0)
        parts.append(seq[start:start + size])
        start += size
    return parts


# --- SMP -------------------------------------------------------------------

def smp_mine(txns, params: MiningParams, pool: ThreadPoolConfig):
    """Mine with a thread pool over contiguous partitions.

    Per level, each thread counts the candidates on its partition; the
    partial counts are merged (summed) at the level barrier. Allocation
    failure anywhere tears the pool down and raises OutOfMemory.
    """
    from concurrent.futures import ThreadPoolExecutor

    txns = list(txns)
    try:
        executor = ThreadPoolExecutor(max_workers=pool.n_threads)
    except MemoryError as exc:
        raise OutOfMemory("could not set up the thread pool") from exc
    try:
        def backend(txn_masks, n_items):
            partitions = partition_contiguous(txn_masks, pool.n_threads)

            def count_fn(cand_masks):
                futures = [
                    executor.submit(counting.count_itemsets, part, cand_masks,
                                    n_items, kernel=pool.kernel)
                    for part in partitions
                ]
                partials = [f.result() for f in futures]  # level barrier
                return [sum(col) for col in zip(*partials)]

            return count_fn

        frequent = mine_frequent_itemsets(txns, params, count_backend=backend)
        return generate_rules(frequent, len(txns), params)
    except MemoryError as exc:
        raise OutOfMemory("allocation failed during threaded counting") from exc
    finally:
        executor.shutdown(wait=True)


# --- MPP -------------------------------------------------------------------

class _CountWorker(threading.Thread):
    """One simulated cluster node: counts candidates over its shard."""

    def __init__(self, worker_id: int, shard_masks, n_items: int, kernel):
        super().__init__(name=f"mpp-worker-{worker_id}", daemon=True)
        self.shard_masks = shard_masks
        self.n_items = n_items
        self.kernel = kernel
        self.requests: queue.Queue = queue.Queue()
        self.replies: queue.Queue = queue.Queue()

    def run(self):
        while True:
            op, payload = self.requests.get()
            if op == "stop":
                return
            try:
                counts = counting.count_itemsets(self.shard_masks, payload,
                                                 self.n_items, kernel=self.kernel)
                self.replies.put(("counts", counts))
            except Exception as exc:  # reported to the master, never lost
                self.replies.put(("error", repr(exc)))


def mpp_mine(txns, params: MiningParams, cluster: ClusterConfig):
    """Mine across simulated worker nodes coordinated by a master.

    The master broadcasts each level's candidates, sums the per-shard
    counts it receives back, and applies the global thresholds. A worker
    error aborts the whole job with WorkerFailure.
    """
    txns = list(txns)
    workers: list[_CountWorker] = []
    try:
        def backend(txn_masks, n_items):
            shards = partition_contiguous(txn_masks, cluster.n_workers)
            for worker_id, shard in enumerate(shards):
                worker = _CountWorker(worker_id, shard, n_items, cluster.kernel)
                worker.start()
                workers.append(worker)

            def count_fn(cand_masks):
                for worker in workers:
                    worker.requests.put(("count", cand_masks))
                partials = []
                failure = None
                for worker in workers:
                    try:
                        kind, result = worker.replies.get(timeout=cluster.barrier_timeout)
                    except queue.Empty:
                        raise BarrierTimeout(
                            f"{worker.name} never reported its counts") from None
                    if kind == "error":
                        failure = failure or f"{worker.name}: {result}"
                    else:
                        partials.append(result)
                if failure is not None:
                    raise WorkerFailure(failure)
                return [sum(col) for col in zip(*partials)]

            return count_fn

        frequent = mine_frequent_itemsets(txns, params, count_backend=backend)
        return generate_rules(frequent, len(txns), params)
    finally:
        for worker in workers:
            worker.requests.put(("stop", None))
        for worker in workers:
            worker.join(timeout=5.0)


# --- MPP model serialization ------------------------------------------------

@dataclass(frozen=True)
class ModelPart:
    """One worker's contribution: shard size plus its local itemset counts."""

    n_txns: int
    counts: dict


def local_counts(txns, max_set_size: int) -> ModelPart:
    """Exhaustive per-shard counts of every itemset up to max_set_size.

    Intended for desk-scale shards; pairs with aggregation on the master
    to reproduce exact global counts.
    """
    txn_sets = [frozenset(t.items) for t in txns]
    items = sorted({i for t in txn_sets for i in t})
    counts = {}
    for size in range(1, max_set_size + 1):
        for cand in combinations(items, size):
            cand_set = frozenset(cand)
            count = sum(1 for t in txn_sets if cand_set <= t)
            if count:
                counts[cand] = count
    return ModelPart(len(txn_sets), counts)


class MppSerializationSession:
    """Shared coordination (part channel + completion barrier) for one
    serialization round of n workers plus the master."""

    def __init__(self, n_workers: int, timeout: float = 30.0):
        self.n_workers = n_workers
        self.timeout = timeout
        self.parts: queue.Queue = queue.Queue()
        self.barrier = threading.Barrier(n_workers + 1, timeout=timeout)


def mpp_serialize(role: str, session: MppSerializationSession, *,
                  part: ModelPart | None = None, params: MiningParams | None = None,
                  out_base=None, fmt: ArtifactFormat = ArtifactFormat.RULESET_TEXT,
                  producer: str = "mpp-master", clock=None):
    """Aggregate worker model parts on the master and persist once.

    Workers send their part and wait for aggregation to finish; only the
    master writes. If any participant never reaches the barrier, every
    other participant fails with BarrierTimeout and no file is written.
    """
    if role == "worker":
        if part is None:
            raise ValueError("worker must supply its model part")
        session.parts.put(part)
        _await_barrier(session)
        return None
    if role != "master":
        raise ValueError(f"unknown role {role!r}")
    if params is None or out_base is None:
        raise ValueError("master needs mining params and an output base path")

    parts = []
    for _ in range(session.n_workers):
        try:
            parts.append(session.parts.get(timeout=session.timeout))
        except queue.Empty:
            session.barrier.abort()
            raise BarrierTimeout("a worker never sent its model part") from None
    _await_barrier(session)

    n_txns = sum(p.n_txns for p in parts)
    merged: dict[tuple, int] = {}
    for p in parts:
        for itemset, count in p.counts.items():
            merged[itemset] = merged.get(itemset, 0) + count
    frequent = [
        Itemset(itemset, count)
        for itemset, count in sorted(merged.items(), key=lambda kv: (len(kv[0]), kv[0]))
        if len(itemset) <= params.max_rule_items and count / n_txns >= params.min_support
    ]
    rules = generate_rules(frequent, n_txns, params)
    artifact = serialize_model(rules, fmt, producer=producer, clock=clock)
    return write_artifact(artifact, out_base)


def _await_barrier(session: MppSerializationSession):
    try:
        session.barrier.wait()
    except threading.BrokenBarrierError:
        raise BarrierTimeout("aggregation barrier was never completed") from None
