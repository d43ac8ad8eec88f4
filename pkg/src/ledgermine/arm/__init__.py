"""Frequent-itemset mining and association-rule generation."""

from .apriori import (
    generate_rules,
    mine_frequent_itemsets,
    mine_rules,
    score_rules,
)
from .counting import DEFAULT_KERNEL, available_kernels, count_itemsets
from .model import (
    AssociationRule,
    EmptyInput,
    ItemTransaction,
    Itemset,
    MiningError,
    MiningParams,
    MissingSubset,
    RuleScore,
    TooLarge,
    group_transactions,
)
from .oracle import brute_force_rules

__all__ = [
    "AssociationRule",
    "DEFAULT_KERNEL",
    "EmptyInput",
    "ItemTransaction",
    "Itemset",
    "MiningError",
    "MiningParams",
    "MissingSubset",
    "RuleScore",
    "TooLarge",
    "available_kernels",
    "brute_force_rules",
    "count_itemsets",
    "generate_rules",
    "group_transactions",
    "mine_frequent_itemsets",
    "mine_rules",
    "score_rules",
]
