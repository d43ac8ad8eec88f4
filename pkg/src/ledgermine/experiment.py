"""End-to-end experiment driver: generate, ledger, mine, report.

A run generates seeded synthetic prescriptions, loads them into a
three-member replicated ledger (one patient transaction per block by
default), validates every member chain, pulls the records back off the
chain (at rest, or through a subscription in streaming mode), mines in
the configured execution mode, and writes the rule table CSV, the model
artifacts, the persisted chain, and a JSON run summary. With a fixed
seed the entire output, block hashes included, is byte-reproducible, and
all four execution modes emit identical rule tables.
"""

from __future__ import annotations

import io
import json
import csv
import os
from dataclasses import dataclass, field, replace

from . import ledger
from .arm import MiningParams, group_transactions, mine_rules
from .lifecycle import ArtifactFormat, serialize_model, write_artifact
from .parallel import ClusterConfig, ThreadPoolConfig, mpp_mine, smp_mine
from .streaming import SlidingWindow, query_window, transactions_from_records
from .synth import (
    DEFAULT_CATALOG,
    DEFAULT_PROFILE,
    AnchorGroup,
    CorrelationProfile,
    InvalidConfig,
    generate_synthetic,
)

DEFAULT_MEMBERS = ("Pharmacy-A", "Pharmacy-B", "Pharmacy-C")
# Fixed epoch base so equal configs reproduce equal block hashes.
DEFAULT_TIMESTAMP_BASE = 1_526_342_400_000

MODES = ("single", "smp", "mpp", "streaming")

RULE_CSV_COLUMNS = (
    "Size of Rule LHS", "Size of Rule RHS", "Transaction Count",
    "Support(%)", "Confidence(%)", "Lift", "Item1", "Item2", "Item3", "Rule",
)


@dataclass(frozen=True)
class ExperimentConfig:
    n_patients: int = 1001
    drugs_per_patient: int = 7
    catalog: tuple[str, ...] = DEFAULT_CATALOG
    seed: int = 7
    min_support: float = 0.20
    min_confidence: float = 0.70
    max_rule_items: int = 3
    mode: str = "single"
    n_threads: int = 3
    n_workers: int = 3
    window_capacity: int | None = None
    block_txns: int = 1
    members: tuple[str, ...] = DEFAULT_MEMBERS
    leader: str | None = None
    timestamp_base: int = DEFAULT_TIMESTAMP_BASE
    profile: CorrelationProfile = DEFAULT_PROFILE

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}")
        if self.block_txns < 1:
            raise InvalidConfig("block_txns must be at least 1")
        if self.n_threads < 1 or self.n_workers < 1:
            raise InvalidConfig("thread and worker counts must be positive")
        if self.window_capacity is not None and self.window_capacity < 1:
            raise InvalidConfig("window_capacity must be at least 1")

    def mining_params(self) -> MiningParams:
        return MiningParams(self.min_support, self.min_confidence, self.max_rule_items)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    network: ledger.LedgerNetwork
    n_records: int
    rules: list
    csv_text: str
    summary: dict
    paths: dict = field(default_factory=dict)


def rule_csv_row(rule) -> list:
    items = (*rule.lhs, *rule.rhs)
    padded = [items[i % len(items)] for i in range(3)]
    return [
        len(rule.lhs), len(rule.rhs), rule.count,
        f"{rule.support * 100:.8f}", f"{rule.confidence * 100:.8f}",
        f"{rule.lift:.8f}", *padded, rule.text,
    ]


def rules_to_csv(rules) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RULE_CSV_COLUMNS)
    for rule in rules:
        writer.writerow(rule_csv_row(rule))
    return buf.getvalue()


def build_ledger(records, config: ExperimentConfig) -> ledger.LedgerNetwork:
    """Load records into a fresh member network, one block per
    block_txns patient transactions."""
    network = ledger.LedgerNetwork(
        config.members, leader=config.leader,
        clock=ledger.stepping_clock(config.timestamp_base))
    leader = network.leader
    batch: list[ledger.Record] = []
    patients_in_batch: set[int] = set()
    for record in records:
        if (record.patient_id not in patients_in_batch
                and len(patients_in_batch) == config.block_txns):
            network.append_block(leader, batch)
            batch, patients_in_batch = [], set()
        batch.append(record)
        patients_in_batch.add(record.patient_id)
    if batch:
        network.append_block(leader, batch)
    return network


def mine_in_mode(txn_source, config: ExperimentConfig):
    """Run the configured execution lane over the transaction source.

    ``txn_source`` is a list for the batch lanes and an iterator of
    transactions for streaming.
    """
    params = config.mining_params()
    if config.mode == "single":
        return mine_rules(list(txn_source), params)
    if config.mode == "smp":
        return smp_mine(list(txn_source), params, ThreadPoolConfig(config.n_threads))
    if config.mode == "mpp":
        return mpp_mine(list(txn_source), params, ClusterConfig(config.n_workers))
    capacity = config.window_capacity or config.n_patients
    window = SlidingWindow(capacity)
    for txn in txn_source:
        window.ingest(txn)
    return query_window(window, params)


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    records = generate_synthetic(config.n_patients, config.drugs_per_patient,
                                 config.catalog, config.seed, config.profile)
    network = build_ledger(records, config)

    for member in network.members:
        if not ledger.validate_chain(member.chain):
            raise ledger.CorruptChain(f"member {member.node_id} failed validation")
    leader_jsonl = ledger.chain_to_jsonl(network.leader.chain)
    for member in network.members:
        if ledger.chain_to_jsonl(member.chain) != leader_jsonl:
            raise ledger.ReplicationError(f"member {member.node_id} diverged")

    if config.mode == "streaming":
        source = transactions_from_records(ledger.subscribe(network.leader.chain, 0))
    else:
        source = group_transactions(ledger.read_at_rest(network.leader.chain))
    rules = mine_in_mode(source, config)
    csv_text = rules_to_csv(rules)

    summary = {
        "mode": config.mode,
        "seed": config.seed,
        "n_patients": config.n_patients,
        "n_records": len(records),
        "n_blocks": len(network.leader.chain),
        "n_rules": len(rules),
        "min_support": config.min_support,
        "min_confidence": config.min_confidence,
        "max_rule_items": config.max_rule_items,
        "chain_tip_hash": network.leader.chain.tip.hash.hex(),
    }

    result = ExperimentResult(config, network, len(records), rules, csv_text, summary)
    if out_dir is not None:
        result.paths = _write_outputs(result, out_dir)
    return result


def _write_outputs(result: ExperimentResult, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    chain_path = os.path.join(out_dir, "chain.jsonl")
    ledger.write_chain(result.network.leader.chain, chain_path)
    paths["chain"] = chain_path

    rules_path = os.path.join(out_dir, "rules.csv")
    with open(rules_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(result.csv_text)
    paths["rules"] = rules_path

    clock = ledger.stepping_clock(result.config.timestamp_base)
    if result.rules:
        for fmt in (ArtifactFormat.RULESET_TEXT, ArtifactFormat.RULESET_BINARY):
            artifact = serialize_model(result.rules, fmt, producer="experiment",
                                       clock=clock)
            paths[fmt.value] = write_artifact(artifact, os.path.join(out_dir, "model"))

    summary_path = os.path.join(out_dir, "summary.json")
    result.summary["paths"] = {k: os.path.basename(v) for k, v in paths.items()}
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["summary"] = summary_path
    return paths


# --- key=value config files --------------------------------------------------

_INT_KEYS = {"n_patients", "drugs_per_patient", "seed", "max_rule_items",
             "n_threads", "n_workers", "window_capacity", "block_txns",
             "timestamp_base"}
_FLOAT_KEYS = {"min_support", "min_confidence"}
_STR_KEYS = {"mode", "leader"}
_LIST_KEYS = {"catalog", "members"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment. The ``group``
    key repeats, one anchor group per line as ``drug+drug[+drug]:prob:keep``."""
    mapping: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "group":
            mapping.setdefault("group", []).append(value)
        else:
            mapping[key] = value
    return mapping


def _parse_group(spec: str) -> AnchorGroup:
    parts = [p.strip() for p in spec.split(":")]
    if len(parts) != 3:
        raise InvalidConfig(f"group spec {spec!r} must be drugs:prob:keep")
    drugs = tuple(d.strip() for d in parts[0].split("+"))
    return AnchorGroup(drugs, float(parts[1]), float(parts[2]))


def config_from_mapping(mapping: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    config = base if base is not None else ExperimentConfig()
    changes: dict = {}
    for key, value in mapping.items():
        if key in _INT_KEYS:
            changes[key] = int(value)
        elif key in _FLOAT_KEYS:
            changes[key] = float(value)
        elif key in _STR_KEYS:
            changes[key] = value
        elif key in _LIST_KEYS:
            changes[key] = tuple(v.strip() for v in value.split(","))
        elif key == "group":
            changes["profile"] = CorrelationProfile(
                tuple(_parse_group(spec) for spec in value))
        else:
            raise InvalidConfig(f"unknown config key {key!r}")
    return replace(config, **changes)


def load_config_file(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_mapping(parse_config_text(fh.read()), base)
