"""Event-dispatched model lifecycle with rule-set artifact codecs.

The lifecycle engine routes initialization / training / validation /
scoring / evaluation / serialization / clean-up events to a model
implementation. Exceptions raised by an operation are caught by the
dispatcher and converted to error statuses; an event kind with no route
terminates the loop. Model submission is not a thread-context event --
it belongs to the contract layer, so here it falls through to the
unknown-event exit.

Two artifact encodings carry a trained rule set:

* text -- one rule per line, ``lhs | rhs | count | support | confidence
  | lift`` with items joined by ``&`` and floats written in shortest
  round-trip form;
* binary -- magic ``LMRB``, a u32 rule count, then length-prefixed
  records (u8 side sizes, u16-prefixed UTF-8 items, u64 count, three
  big-endian f64 statistics).

Both decode to field-identical rules.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from enum import Enum

from .arm import AssociationRule, MiningParams, mine_rules, score_rules
from .ledger import wall_clock_ms


class LifecycleError(Exception):
    """Base class for lifecycle failures."""


class NoModel(LifecycleError):
    """An operation that needs a trained model found none."""


class DecodeError(LifecycleError):
    """Artifact payload does not decode under its declared format."""


class InitFailed(LifecycleError):
    """The execution context does not meet the resource requirements."""


class ContextClosed(LifecycleError):
    """The context was cleaned up; no further operations are allowed."""


class EventKind(Enum):
    MODEL_INITIALIZATION = "model_initialization"
    MODEL_TRAINING = "model_training"
    MODEL_VALIDATION = "model_validation"
    MODEL_SCORING = "model_scoring"
    MODEL_EVALUATION = "model_evaluation"
    MODEL_SERIALIZATION = "model_serialization"
    MODEL_CLEAN_UP = "model_clean_up"
    MODEL_SUBMISSION = "model_submission"


@dataclass(frozen=True)
class LifecycleEvent:
    kind: EventKind
    payload: object = None


class Status(Enum):
    OK = "ok"
    ERROR = "error"
    UNKNOWN_EVENT = "unknown_event"


class ArtifactFormat(Enum):
    RULESET_TEXT = "RULESET_TEXT"
    RULESET_BINARY = "RULESET_BINARY"


@dataclass(frozen=True)
class ArtifactMetadata:
    producer: str
    created_ms: int
    rule_count: int
    payload_sha256: str


@dataclass(frozen=True)
class ModelArtifact:
    format: ArtifactFormat
    payload: bytes
    metadata: ArtifactMetadata


@dataclass
class ExecutionContext:
    """Single-owner state for one lifecycle run."""

    training_txns: list
    params: MiningParams = field(default_factory=MiningParams)
    validation_fraction: float = 0.0
    metric: str = "mean_confidence"
    artifact_format: ArtifactFormat = ArtifactFormat.RULESET_TEXT
    producer: str = ""
    resource_check: object = None
    clock: object = None

    initialized: bool = False
    train_partition: list | None = None
    holdout_partition: list | None = None
    rules: list | None = None
    validation_score: float | None = None
    scores: list | None = None
    evaluation: float | None = None
    artifact: ModelArtifact | None = None
    closed: bool = False
    last_error: Exception | None = None


class LifecycleModel:
    """The seven lifecycle operations. Subclasses implement each against
    an ExecutionContext; any raised exception becomes an error status."""

    def initialize(self, ctx, payload=None):
        raise NotImplementedError

    def train(self, ctx, payload=None):
        raise NotImplementedError

    def validate(self, ctx, payload=None):
        raise NotImplementedError

    def score(self, ctx, payload=None):
        raise NotImplementedError

    def evaluate(self, ctx, payload=None):
        raise NotImplementedError

    def serialize(self, ctx, payload=None):
        raise NotImplementedError

    def cleanup(self, ctx, payload=None):
        raise NotImplementedError


def partition_transactions(txns, holdout_fraction: float):
    """Deterministic patient-keyed split into (train, holdout)."""
    if holdout_fraction <= 0.0:
        return list(txns), []
    train, holdout = [], []
    for txn in txns:
        digest = hashlib.sha256(str(txn.patient_id).encode()).digest()
        bucket = int.from_bytes(digest[:4], "big") / 2**32
        (holdout if bucket < holdout_fraction else train).append(txn)
    return train, holdout


class RuleMiningModel(LifecycleModel):
    """Association-rule mining bound to the lifecycle interface."""

    def initialize(self, ctx, payload=None):
        if ctx.resource_check is not None and not ctx.resource_check():
            raise InitFailed("resource requirements not met")
        ctx.train_partition, ctx.holdout_partition = partition_transactions(
            ctx.training_txns, ctx.validation_fraction)
        ctx.initialized = True

    def train(self, ctx, payload=None):
        if not ctx.initialized:
            self.initialize(ctx)
        ctx.rules = mine_rules(ctx.train_partition, ctx.params)

    def validate(self, ctx, payload=None):
        rules = self._require_rules(ctx)
        holdout = ctx.holdout_partition or ctx.train_partition
        ctx.validation_score = evaluate_rules(rules, holdout, ctx.metric)

    def score(self, ctx, payload=None):
        rules = self._require_rules(ctx)
        txns = payload if payload is not None else ctx.train_partition
        ctx.scores = score_rules(rules, txns)

    def evaluate(self, ctx, payload=None):
        rules = self._require_rules(ctx)
        txns = payload if payload is not None else ctx.train_partition
        ctx.evaluation = evaluate_rules(rules, txns, ctx.metric)

    def serialize(self, ctx, payload=None):
        rules = self._require_rules(ctx)
        ctx.artifact = serialize_model(rules, ctx.artifact_format,
                                       producer=ctx.producer, clock=ctx.clock)

    def cleanup(self, ctx, payload=None):
        ctx.train_partition = None
        ctx.holdout_partition = None
        ctx.scores = None
        ctx.closed = True

    @staticmethod
    def _require_rules(ctx):
        if not ctx.rules:
            raise NoModel("no trained rule set in this context")
        return ctx.rules


_ROUTES = {
    EventKind.MODEL_INITIALIZATION: "initialize",
    EventKind.MODEL_TRAINING: "train",
    EventKind.MODEL_VALIDATION: "validate",
    EventKind.MODEL_SCORING: "score",
    EventKind.MODEL_EVALUATION: "evaluate",
    EventKind.MODEL_SERIALIZATION: "serialize",
    EventKind.MODEL_CLEAN_UP: "cleanup",
}


def dispatch(event: LifecycleEvent, model: LifecycleModel, ctx: ExecutionContext) -> Status:
    """Route one event; exceptions become ERROR, unrouted kinds exit."""
    route = _ROUTES.get(event.kind)
    if route is None:
        return Status.UNKNOWN_EVENT
    if ctx.closed:
        ctx.last_error = ContextClosed("context already cleaned up")
        return Status.ERROR
    try:
        getattr(model, route)(ctx, event.payload)
    except Exception as exc:  # converted, never propagated
        ctx.last_error = exc
        return Status.ERROR
    return Status.OK


def run_lifecycle(model: LifecycleModel, ctx: ExecutionContext, events) -> Status:
    """Fold events through dispatch until exhaustion or an unknown kind."""
    status = Status.OK
    for event in events:
        status = dispatch(event, model, ctx)
        if status is Status.UNKNOWN_EVENT:
            break
    return status


# --- rule-set codecs -------------------------------------------------------

_BINARY_MAGIC = b"LMRB"


def encode_rules(rules, fmt: ArtifactFormat) -> bytes:
    if fmt is ArtifactFormat.RULESET_TEXT:
        lines = [
            f"{'&'.join(r.lhs)} | {'&'.join(r.rhs)} | {r.count}"
            f" | {r.support!r} | {r.confidence!r} | {r.lift!r}"
            for r in rules
        ]
        return ("\n".join(lines) + "\n").encode("utf-8")
    if fmt is ArtifactFormat.RULESET_BINARY:
        parts = [_BINARY_MAGIC, struct.pack(">I", len(rules))]
        for r in rules:
            parts.append(struct.pack(">BB", len(r.lhs), len(r.rhs)))
            for item in (*r.lhs, *r.rhs):
                raw = item.encode("utf-8")
                parts.append(struct.pack(">H", len(raw)))
                parts.append(raw)
            parts.append(struct.pack(">Qddd", r.count, r.support,
                                     r.confidence, r.lift))
        return b"".join(parts)
    raise ValueError(f"unknown format {fmt!r}")


def decode_rules(payload: bytes, fmt: ArtifactFormat) -> list[AssociationRule]:
    if fmt is ArtifactFormat.RULESET_TEXT:
        return _decode_text(payload)
    if fmt is ArtifactFormat.RULESET_BINARY:
        return _decode_binary(payload)
    raise ValueError(f"unknown format {fmt!r}")


def _decode_text(payload: bytes) -> list[AssociationRule]:
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError("text payload is not UTF-8") from exc
    rules = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) != 6:
            raise DecodeError(f"line {lineno}: expected 6 fields, got {len(fields)}")
        try:
            lhs = tuple(i.strip() for i in fields[0].split("&"))
            rhs = tuple(i.strip() for i in fields[1].split("&"))
            rules.append(AssociationRule(lhs, rhs, int(fields[2]), float(fields[3]),
                                         float(fields[4]), float(fields[5])))
        except ValueError as exc:
            raise DecodeError(f"line {lineno}: {exc}") from exc
    if not rules:
        raise DecodeError("payload holds no rules")
    return rules


class _Cursor:
    def __init__(self, payload):
        self.payload = payload
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.payload):
            raise DecodeError("payload truncated")
        chunk = self.payload[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode_binary(payload: bytes) -> list[AssociationRule]:
    cur = _Cursor(payload)
    if cur.take(len(_BINARY_MAGIC)) != _BINARY_MAGIC:
        raise DecodeError("bad magic")
    (n_rules,) = cur.unpack(">I")
    rules = []
    for _ in range(n_rules):
        lhs_n, rhs_n = cur.unpack(">BB")
        items = []
        for _ in range(lhs_n + rhs_n):
            (length,) = cur.unpack(">H")
            try:
                items.append(cur.take(length).decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise DecodeError("item is not UTF-8") from exc
        count, support, confidence, lift = cur.unpack(">Qddd")
        try:
            rules.append(AssociationRule(tuple(items[:lhs_n]), tuple(items[lhs_n:]),
                                         count, support, confidence, lift))
        except ValueError as exc:
            raise DecodeError(str(exc)) from exc
    if cur.pos != len(payload):
        raise DecodeError("trailing bytes after last rule")
    if not rules:
        raise DecodeError("payload holds no rules")
    return rules


def serialize_model(rules, fmt: ArtifactFormat, producer: str = "",
                    clock=None) -> ModelArtifact:
    """Encode a non-empty rule set into an artifact with metadata."""
    rules = list(rules)
    if not rules:
        raise NoModel("cannot serialize an empty rule set")
    payload = encode_rules(rules, fmt)
    created = (clock or wall_clock_ms)()
    meta = ArtifactMetadata(producer, created, len(rules),
                            hashlib.sha256(payload).hexdigest())
    return ModelArtifact(fmt, payload, meta)


def decode_artifact(artifact: ModelArtifact) -> list[AssociationRule]:
    return decode_rules(artifact.payload, artifact.format)


# --- evaluation ------------------------------------------------------------

def _mean_confidence(rules, txns) -> float:
    """Mean empirical confidence; rules whose lhs never fires count 0."""
    scores = score_rules(rules, txns)
    if not scores:
        return 0.0
    return sum(s.confidence or 0.0 for s in scores) / len(scores)


METRICS = {"mean_confidence": _mean_confidence}


def evaluate_rules(rules, txns, metric: str = "mean_confidence") -> float:
    try:
        fn = METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}") from None
    return fn(list(rules), list(txns))


def evaluate_model(artifact: ModelArtifact, txns, metric: str = "mean_confidence") -> float:
    """Decode the artifact and evaluate its rules; pure in its inputs."""
    return evaluate_rules(decode_artifact(artifact), txns, metric)


# --- artifact files --------------------------------------------------------

_EXTENSIONS = {
    ArtifactFormat.RULESET_TEXT: ".rules.txt",
    ArtifactFormat.RULESET_BINARY: ".rules.bin",
}


def artifact_path(base, fmt: ArtifactFormat) -> str:
    base = str(base)
    ext = _EXTENSIONS[fmt]
    return base if base.endswith(ext) else base + ext


def _sidecar_path(path: str) -> str:
    for ext in _EXTENSIONS.values():
        if path.endswith(ext):
            return path[: -len(ext)] + ".meta.json"
    return path + ".meta.json"


def write_artifact(artifact: ModelArtifact, base) -> str:
    """Write payload plus JSON metadata sidecar; returns the payload path."""
    path = artifact_path(base, artifact.format)
    with open(path, "wb") as fh:
        fh.write(artifact.payload)
    meta = artifact.metadata
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump({
            "format": artifact.format.value,
            "producer": meta.producer,
            "created_ms": meta.created_ms,
            "rule_count": meta.rule_count,
            "payload_sha256": meta.payload_sha256,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_artifact(path) -> ModelArtifact:
    path = str(path)
    with open(path, "rb") as fh:
        payload = fh.read()
    with open(_sidecar_path(path), encoding="utf-8") as fh:
        meta = json.load(fh)
    fmt = ArtifactFormat(meta["format"])
    digest = hashlib.sha256(payload).hexdigest()
    if digest != meta["payload_sha256"]:
        raise DecodeError("payload digest does not match sidecar")
    return ModelArtifact(fmt, payload, ArtifactMetadata(
        meta["producer"], meta["created_ms"], meta["rule_count"], digest))
