"""Seeded synthetic prescription data with engineered co-occurrence.

Uniform sampling of 7 drugs from a 20-drug catalog leaves every pair
well under a 20% support threshold, so the generator plants correlation:
a profile lists anchor groups, each with an inclusion probability and a
per-member keep probability. For every patient, each selected group
contributes its members (independently kept), and the remaining slots are
filled uniformly from the non-anchor drugs, so anchors rarely appear
outside their group and the planted rules clear both thresholds. The
filler pool widens to unused anchors only when a basket is larger than
the non-anchor catalog.

Everything is driven by one ``random.Random(seed)``; equal configs give
byte-identical record lists.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .ledger import Record

# First 13 names follow the published prescription tables this tool
# mirrors; the rest are filler opioid names to reach a 20-drug catalog.
DEFAULT_CATALOG = (
    "actiq", "meperidine", "fentora", "methadone", "lorcet",
    "acetaminophen", "duragesic", "morphine", "hysingla", "percocet",
    "oxycodone", "dilaudid", "hydrouscodeine",
    "vicodin", "norco", "opana", "exalgo", "nucynta", "demerol", "codeine",
)


class InvalidConfig(ValueError):
    """Generator configuration is internally inconsistent."""


@dataclass(frozen=True)
class AnchorGroup:
    """Drugs that tend to be co-prescribed."""

    drugs: tuple[str, ...]
    probability: float
    keep: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0 or not 0.0 < self.keep <= 1.0:
            raise InvalidConfig("group probabilities must lie in [0, 1]")
        if len(self.drugs) < 2:
            raise InvalidConfig("an anchor group needs at least two drugs")


@dataclass(frozen=True)
class CorrelationProfile:
    groups: tuple[AnchorGroup, ...] = field(default_factory=tuple)

    def anchor_drugs(self) -> set[str]:
        return {d for g in self.groups for d in g.drugs}


DEFAULT_PROFILE = CorrelationProfile((
    AnchorGroup(("actiq", "fentora", "meperidine"), 0.32, 0.92),
    AnchorGroup(("hysingla", "oxycodone", "percocet"), 0.30, 0.94),
    AnchorGroup(("dilaudid", "duragesic"), 0.28, 0.95),
))


def generate_synthetic(n_patients: int, drugs_per_patient: int,
                       catalog=DEFAULT_CATALOG, seed: int = 0,
                       profile: CorrelationProfile = DEFAULT_PROFILE) -> list[Record]:
    """n_patients x drugs_per_patient records, deterministic in the seed."""
    catalog = tuple(catalog)
    if n_patients < 1 or drugs_per_patient < 1:
        raise InvalidConfig("n_patients and drugs_per_patient must be positive")
    if drugs_per_patient > len(catalog):
        raise InvalidConfig("drugs_per_patient exceeds the catalog size")
    if len(set(catalog)) != len(catalog):
        raise InvalidConfig("catalog has duplicate drugs")
    anchors = profile.anchor_drugs()
    missing = anchors - set(catalog)
    if missing:
        raise InvalidConfig(f"profile drugs not in catalog: {sorted(missing)}")

    rng = random.Random(seed)
    fillers = [d for d in catalog if d not in anchors]
    records = []
    for patient_id in range(n_patients):
        basket: list[str] = []
        for group in profile.groups:
            if len(basket) >= drugs_per_patient:
                break
            if rng.random() < group.probability:
                for drug in group.drugs:
                    if len(basket) < drugs_per_patient and rng.random() < group.keep:
                        basket.append(drug)
        pool = [d for d in fillers if d not in basket]
        short = drugs_per_patient - len(basket) - len(pool)
        if short > 0:
            # basket larger than the non-anchor catalog: allow unused anchors
            pool += [d for d in catalog if d not in basket and d not in pool]
        basket += rng.sample(pool, drugs_per_patient - len(basket))
        records.extend(Record(patient_id, drug) for drug in basket)
    return records
