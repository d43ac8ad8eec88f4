"""Level-wise frequent-itemset mining and rule generation.

The miner is exact: candidates of size k are joined from frequent
itemsets of size k-1 (sharing a k-2 prefix), pruned by downward closure,
and counted with the subset kernel. An itemset is frequent when
``count / N >= min_support``; that predicate form, and the analogous
``count / lhs_count >= min_confidence``, are used everywhere so all
execution paths agree bit-for-bit.

Counting is injectable: a ``count_backend(txn_masks, n_items)`` factory
returns the per-level counting function ``cand_masks -> list[int]``,
letting the parallel layers partition the encoded transactions and
distribute the counting while candidate generation and thresholding stay
identical to the sequential path.
"""

from __future__ import annotations

from itertools import combinations

from .counting import count_itemsets, encode_items, mask_of
from .model import (
    AssociationRule,
    EmptyInput,
    Itemset,
    MiningParams,
    MissingSubset,
    RuleScore,
)


def mine_frequent_itemsets(txns, params: MiningParams, *, kernel=None,
                           item_counts=None, count_backend=None) -> list[Itemset]:
    """Return every itemset of size 1..max_rule_items meeting min_support.

    ``item_counts`` optionally supplies precomputed level-1 counts keyed
    by item name (they must match the given transactions exactly).
    ``count_backend`` overrides the counting backend; it is called with
    the encoded transaction masks and vocabulary size and must return a
    function mapping candidate masks to exact counts.
    """
    txns = list(txns)
    n = len(txns)
    if n == 0:
        raise EmptyInput("no transactions to mine")

    vocab, index = encode_items(t.items for t in txns)
    txn_masks = [mask_of(index[i] for i in t.items) for t in txns]
    if count_backend is None:
        def count_backend(masks, n_items):
            return lambda cand_masks: count_itemsets(masks, cand_masks,
                                                     n_items, kernel=kernel)

    counts = _mine_index_counts(vocab, txn_masks, n, params,
                                count_backend(txn_masks, len(vocab)), item_counts)
    frequent = [
        Itemset(tuple(vocab[i] for i in idx_tuple), count)
        for idx_tuple, count in counts.items()
    ]
    frequent.sort(key=lambda s: (len(s.items), s.items))
    return frequent


def _mine_index_counts(vocab, txn_masks, n, params, count_fn, item_counts):
    counts: dict[tuple[int, ...], int] = {}

    if item_counts is not None:
        level = {}
        for i, name in enumerate(vocab):
            level[(i,)] = item_counts[name]
    else:
        singles = [(i,) for i in range(len(vocab))]
        found = count_fn([1 << i for i in range(len(vocab))])
        level = dict(zip(singles, found))

    frequent_prev = _apply_support(level, n, params.min_support, counts)
    size = 2
    while frequent_prev and size <= params.max_rule_items:
        candidates = _join_candidates(frequent_prev, size)
        if not candidates:
            break
        found = count_fn([mask_of(c) for c in candidates])
        level = dict(zip(candidates, found))
        frequent_prev = _apply_support(level, n, params.min_support, counts)
        size += 1
    return counts


def _apply_support(level_counts, n, min_support, out):
    frequent = []
    for idx_tuple, count in level_counts.items():
        if count / n >= min_support:
            out[idx_tuple] = count
            frequent.append(idx_tuple)
    frequent.sort()
    return frequent


def _join_candidates(frequent_prev, size):
    """Join sorted (size-1)-tuples sharing a prefix; prune by closure."""
    prev_set = set(frequent_prev)
    candidates = []
    for a_pos, a in enumerate(frequent_prev):
        for b in frequent_prev[a_pos + 1:]:
            if a[:-1] != b[:-1]:
                break
            cand = a + (b[-1],)
            if all(cand[:i] + cand[i + 1:] in prev_set for i in range(size)):
                candidates.append(cand)
    return candidates


def generate_rules(frequent, n_txns: int, params: MiningParams) -> list[AssociationRule]:
    """Emit every rule lhs => rhs over the frequent itemsets that meets
    min_confidence, sorted by (support ascending, rule text ascending)."""
    counts = {s.items: s.count for s in frequent}
    rules = []
    for itemset in frequent:
        k = len(itemset.items)
        if k < 2 or k > params.max_rule_items:
            continue
        for lhs_size in range(1, k):
            for lhs in combinations(itemset.items, lhs_size):
                rhs = tuple(i for i in itemset.items if i not in lhs)
                try:
                    lhs_count = counts[lhs]
                    rhs_count = counts[rhs]
                except KeyError as missing:
                    raise MissingSubset(f"no count for subset {missing}") from None
                if itemset.count / lhs_count >= params.min_confidence:
                    rules.append(AssociationRule.from_counts(
                        lhs, rhs, itemset.count, lhs_count, rhs_count, n_txns))
    rules.sort(key=AssociationRule.sort_key)
    return rules


def mine_rules(txns, params: MiningParams, *, kernel=None,
               item_counts=None, count_backend=None) -> list[AssociationRule]:
    """The full pipeline: frequent itemsets, then rules."""
    txns = list(txns)
    frequent = mine_frequent_itemsets(txns, params, kernel=kernel,
                                      item_counts=item_counts,
                                      count_backend=count_backend)
    return generate_rules(frequent, len(txns), params)


def score_rules(rules, txns) -> list[RuleScore]:
    """Empirical per-rule confidence on a scoring set.

    For each rule, over the transactions containing its lhs, the fraction
    also containing its rhs; None when the lhs never fires.
    """
    txn_sets = [t.items for t in txns]
    scores = []
    for rule in rules:
        lhs = frozenset(rule.lhs)
        full = lhs | frozenset(rule.rhs)
        lhs_hits = sum(1 for t in txn_sets if lhs <= t)
        full_hits = sum(1 for t in txn_sets if full <= t)
        confidence = full_hits / lhs_hits if lhs_hits else None
        scores.append(RuleScore(rule, lhs_hits, full_hits, confidence))
    return scores
