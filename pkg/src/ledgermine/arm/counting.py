"""Bitset encoding of transactions and the pluggable counting kernel.

Items are mapped to bit positions; a transaction becomes an integer
bitmask, so "transaction contains itemset" is ``txn & cand == cand``.
Two interchangeable kernels compute containment counts:

* ``compiled`` -- Cython extension over 64-bit word matrices, used when
  the extension built successfully;
* ``python``   -- plain big-int masks, always available.

Both produce identical exact integer counts; selection happens at import
and can be overridden per call for benchmarking.
"""

from __future__ import annotations

try:
    from . import _countcore
except ImportError:
    _countcore = None

DEFAULT_KERNEL = "compiled" if _countcore is not None else "python"


def available_kernels() -> tuple[str, ...]:
    return ("python", "compiled") if _countcore is not None else ("python",)


def encode_items(itemsets) -> tuple[list[str], dict[str, int]]:
    """Assign bit positions to the sorted item vocabulary of ``itemsets``."""
    vocab = sorted({item for items in itemsets for item in items})
    return vocab, {item: i for i, item in enumerate(vocab)}


def mask_of(indices) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


def count_itemsets(txn_masks, cand_masks, n_items, kernel=None):
    """Count, per candidate mask, the transactions containing it.

    ``n_items`` bounds the bit width (needed to pack masks into words for
    the compiled path). Returns ``list[int]`` in candidate order.
    """
    if kernel is None:
        kernel = DEFAULT_KERNEL
    if not cand_masks:
        return []
    if kernel == "python":
        return _count_python(txn_masks, cand_masks)
    if kernel == "compiled":
        if _countcore is None:
            raise RuntimeError("compiled kernel is not available")
        return _count_compiled(txn_masks, cand_masks, n_items)
    raise ValueError(f"unknown kernel {kernel!r}")


def _count_python(txn_masks, cand_masks):
    counts = []
    for cand in cand_masks:
        hits = 0
        for txn in txn_masks:
            if txn & cand == cand:
                hits += 1
        counts.append(hits)
    return counts


def _pack_words(masks, n_words):
    import numpy as np

    nbytes = n_words * 8
    buf = b"".join(m.to_bytes(nbytes, "little") for m in masks)
    arr = np.frombuffer(buf, dtype="<u8").reshape(len(masks), n_words)
    return np.ascontiguousarray(arr)


def _count_compiled(txn_masks, cand_masks, n_items):
    import numpy as np

    n_words = max(1, (n_items + 63) // 64)
    txns = _pack_words(txn_masks, n_words)
    cands = _pack_words(cand_masks, n_words)
    out = np.zeros(len(cand_masks), dtype=np.int64)
    _countcore.count_subsets(txns, cands, out)
    return out.tolist()
