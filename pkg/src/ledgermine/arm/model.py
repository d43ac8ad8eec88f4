"""Domain types for transaction grouping and association rules."""

from __future__ import annotations

from dataclasses import dataclass


class MiningError(Exception):
    """Base class for mining failures."""


class EmptyInput(MiningError):
    """Mining was asked to run over zero transactions."""


class MissingSubset(MiningError):
    """A frequent itemset is missing a subset count required for a rule."""


class TooLarge(MiningError):
    """Instance exceeds the exhaustive-enumeration guard."""


@dataclass(frozen=True)
class ItemTransaction:
    """One basket: a patient and the deduplicated set of their items."""

    patient_id: int
    items: frozenset[str]

    def __post_init__(self):
        if self.patient_id < 0:
            raise ValueError("patient_id must be non-negative")
        if not self.items:
            raise ValueError("items must be non-empty")


@dataclass(frozen=True)
class Itemset:
    """A canonical (sorted) itemset with its transaction count."""

    items: tuple[str, ...]
    count: int

    def __post_init__(self):
        if list(self.items) != sorted(self.items) or len(set(self.items)) != len(self.items):
            raise ValueError("items must be strictly sorted")
        if self.count < 0:
            raise ValueError("count must be non-negative")


@dataclass(frozen=True)
class MiningParams:
    min_support: float = 0.20
    min_confidence: float = 0.70
    max_rule_items: int = 3

    def __post_init__(self):
        if not 0.0 < self.min_support <= 1.0:
            raise ValueError("min_support must be in (0, 1]")
        if not 0.0 < self.min_confidence <= 1.0:
            raise ValueError("min_confidence must be in (0, 1]")
        if self.max_rule_items < 2:
            raise ValueError("max_rule_items must be at least 2")


@dataclass(frozen=True, order=True)
class AssociationRule:
    """A rule lhs => rhs with its exact count and derived statistics.

    ``count`` is the number of transactions containing lhs | rhs;
    support = count/N, confidence = count/count(lhs),
    lift = confidence / (count(rhs)/N).
    """

    lhs: tuple[str, ...]
    rhs: tuple[str, ...]
    count: int
    support: float
    confidence: float
    lift: float

    def __post_init__(self):
        if not self.lhs or not self.rhs:
            raise ValueError("lhs and rhs must be non-empty")
        if set(self.lhs) & set(self.rhs):
            raise ValueError("lhs and rhs must be disjoint")

    @classmethod
    def from_counts(cls, lhs, rhs, count, lhs_count, rhs_count, n_txns):
        support = count / n_txns
        confidence = count / lhs_count
        lift = confidence / (rhs_count / n_txns)
        return cls(tuple(lhs), tuple(rhs), count, support, confidence, lift)

    @property
    def text(self) -> str:
        return f"{' & '.join(self.lhs)} ==> {' & '.join(self.rhs)}"

    def sort_key(self):
        return (self.support, self.text)


@dataclass(frozen=True)
class RuleScore:
    """Empirical hit statistics of one rule on a scoring set.

    ``confidence`` is None when the rule's lhs never fires.
    """

    rule: AssociationRule
    lhs_hits: int
    full_hits: int
    confidence: float | None


def group_transactions(records) -> list[ItemTransaction]:
    """Group (patient, item) records into per-patient transactions.

    One transaction per distinct patient, in first-appearance order;
    duplicate items collapse under set semantics.
    """
    by_patient: dict[int, set[str]] = {}
    for record in records:
        by_patient.setdefault(record.patient_id, set()).add(record.item)
    return [
        ItemTransaction(patient_id, frozenset(items))
        for patient_id, items in by_patient.items()
    ]
