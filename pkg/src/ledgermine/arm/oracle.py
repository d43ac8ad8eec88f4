"""Exhaustive reference miner for small instances.

Enumerates every candidate itemset with plain set operations -- no shared
counting code with the level-wise miner -- and every (lhs, rhs) partition
of the frequent ones. Quadratic-ish and guarded, but definitionally
correct; equivalence against it is the primary correctness check for the
production pipeline.
"""

from __future__ import annotations

from itertools import combinations

from .model import AssociationRule, EmptyInput, MiningParams, TooLarge

MAX_ITEMS = 20
MAX_TXNS = 2000


def brute_force_rules(txns, params: MiningParams) -> list[AssociationRule]:
    """All rules meeting the thresholds, by direct enumeration.

    Guarded to at most 20 distinct items and 2,000 transactions.
    """
    txns = list(txns)
    n = len(txns)
    if n == 0:
        raise EmptyInput("no transactions to mine")
    txn_sets = [frozenset(t.items) for t in txns]
    items = sorted({i for t in txn_sets for i in t})
    if len(items) > MAX_ITEMS:
        raise TooLarge(f"{len(items)} distinct items exceeds the {MAX_ITEMS}-item guard")
    if n > MAX_TXNS:
        raise TooLarge(f"{n} transactions exceeds the {MAX_TXNS}-transaction guard")

    counts = {}
    for size in range(1, params.max_rule_items + 1):
        for cand in combinations(items, size):
            cand_set = frozenset(cand)
            count = sum(1 for t in txn_sets if cand_set <= t)
            if count / n >= params.min_support:
                counts[cand] = count

    rules = []
    for itemset, count in counts.items():
        if len(itemset) < 2:
            continue
        for lhs_size in range(1, len(itemset)):
            for lhs in combinations(itemset, lhs_size):
                rhs = tuple(i for i in itemset if i not in lhs)
                lhs_count = counts.get(lhs)
                rhs_count = counts.get(rhs)
                if lhs_count is None or rhs_count is None:
                    continue
                if count / lhs_count >= params.min_confidence:
                    rules.append(AssociationRule.from_counts(
                        lhs, rhs, count, lhs_count, rhs_count, n))
    rules.sort(key=AssociationRule.sort_key)
    return rules
