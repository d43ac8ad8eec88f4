"""Deterministic contract state machine for the model bounty cycle.

State is a pure fold over an append-only event log: every operation
validates, produces a new immutable state, and appends the canonical JSON
form of its event, so refolding the log from genesis reproduces the state
bit-exactly on any replica. Events cover the full cycle -- escrow the
reward, publish data, accept rate-limited model submissions, score and
settle, pay out -- plus a main driver that applies a fair-play audit
first, folds an event stream, and finishes with a reward pass that pays a
settled winner with a valid registered wallet automatically.

Reward units are plain non-negative integers. Fairness rules enforced on
submission, in order: the contract must be open, the reward escrowed, the
per-day submission limit not exhausted, the artifact non-empty, and its
format both negotiated and decodable.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace
from enum import Enum

from .arm import ItemTransaction
from .lifecycle import ArtifactFormat, DecodeError, ModelArtifact, NoModel
from .lifecycle import decode_rules, evaluate_rules


class ContractError(Exception):
    """Base class for contract rule violations."""


class WrongPhase(ContractError):
    pass


class NonPositiveAmount(ContractError):
    pass


class FormatRejected(ContractError):
    pass


class SubmissionLimitReached(ContractError):
    pass


class NoEscrow(ContractError):
    pass


class BadWallet(ContractError):
    pass


class NotWinner(ContractError):
    pass


class AlreadyCollected(ContractError):
    pass


class NoSubmissions(ContractError):
    pass


class NoValidationData(ContractError):
    pass


class FairPlayViolation(ContractError):
    pass


class MalformedEvent(ContractError):
    pass


class Phase(Enum):
    OPEN = "open"
    EVALUATING = "evaluating"
    SETTLED = "settled"


PHASE_RANK = {Phase.OPEN: 0, Phase.EVALUATING: 1, Phase.SETTLED: 2}


@dataclass(frozen=True)
class Wallet:
    participant: str
    balance: int = 0
    valid: bool = True

    def __post_init__(self):
        if self.balance < 0:
            raise ValueError("balance must be non-negative")


@dataclass(frozen=True)
class Submission:
    participant: str
    artifact_format: str
    payload: bytes
    day: int
    score: float | None = None


@dataclass(frozen=True)
class ContractState:
    daily_limit: int = 5
    metric: str = "mean_confidence"
    accepted_formats: tuple[str, ...] = (
        ArtifactFormat.RULESET_TEXT.value, ArtifactFormat.RULESET_BINARY.value)
    phase: Phase = Phase.OPEN
    reward_pool: int = 0
    deposits: tuple[tuple[str, int], ...] = ()
    submissions: tuple[Submission, ...] = ()
    wallets: tuple[Wallet, ...] = ()
    payouts: tuple[tuple[str, int], ...] = ()
    winner: str | None = None
    requirements: str | None = None
    training_data: tuple | None = None
    validation_data: tuple | None = None
    scoring_data: tuple | None = None
    artifact_persisted: bool = False
    event_log: tuple[str, ...] = ()


def genesis_state(daily_limit: int = 5, metric: str = "mean_confidence",
                  accepted_formats=None) -> ContractState:
    if daily_limit < 1:
        raise ValueError("daily_limit must be at least 1")
    formats = tuple(accepted_formats) if accepted_formats is not None else (
        ArtifactFormat.RULESET_TEXT.value, ArtifactFormat.RULESET_BINARY.value)
    return ContractState(daily_limit=daily_limit, metric=metric,
                         accepted_formats=formats)


def _canonical_event(event: dict) -> str:
    return json.dumps(event, sort_keys=True, separators=(",", ":"))


def _log(state: ContractState, event: dict, **changes) -> ContractState:
    changes["event_log"] = state.event_log + (_canonical_event(event),)
    return replace(state, **changes)


def _canonical_txns(txns) -> tuple:
    return tuple((t.patient_id, tuple(sorted(t.items))) for t in txns)


def _txns_from_canonical(canonical):
    return [ItemTransaction(pid, frozenset(items)) for pid, items in canonical]


# --- operations -------------------------------------------------------------

def deposit_reward(state: ContractState, giver: str, amount: int) -> ContractState:
    """Escrow reward units into the pool while the contract is open."""
    if state.phase is not Phase.OPEN:
        raise WrongPhase(f"deposits are allowed only while open, not {state.phase.value}")
    if type(amount) is not int or amount <= 0:
        raise NonPositiveAmount("deposit amount must be a positive integer")
    return _log(state, {"kind": "deposit_reward", "giver": giver, "amount": amount},
                reward_pool=state.reward_pool + amount,
                deposits=state.deposits + ((giver, amount),))


def register_wallet(state: ContractState, participant: str, valid: bool = True) -> ContractState:
    """Register (or replace) a participant's payout wallet."""
    kept = tuple(w for w in state.wallets if w.participant != participant)
    existing = next((w for w in state.wallets if w.participant == participant), None)
    balance = existing.balance if existing else 0
    return _log(state, {"kind": "register_wallet", "participant": participant,
                        "valid": bool(valid)},
                wallets=kept + (Wallet(participant, balance, bool(valid)),))


def publish_dataset(state: ContractState, slot: str, txns) -> ContractState:
    """Make a dataset available to participants (training / validation /
    scoring slots, mirroring the lifecycle data-preparation steps)."""
    if state.phase is not Phase.OPEN:
        raise WrongPhase("datasets can be published only while open")
    if slot not in ("training_data", "validation_data", "scoring_data"):
        raise MalformedEvent(f"unknown dataset slot {slot!r}")
    canonical = _canonical_txns(txns)
    kind = {"training_data": "model_training", "validation_data": "model_validation",
            "scoring_data": "model_scoring"}[slot]
    return _log(state, {"kind": kind,
                        "transactions": [[p, list(i)] for p, i in canonical]},
                **{slot: canonical})


def record_requirements(state: ContractState, requirements: str | None) -> ContractState:
    if state.phase is not Phase.OPEN:
        raise WrongPhase("initialization is allowed only while open")
    return _log(state, {"kind": "model_initialization", "requirements": requirements},
                requirements=requirements)


def submissions_today(state: ContractState, participant: str, day: int) -> int:
    return sum(1 for s in state.submissions
               if s.participant == participant and s.day == day)


def submit_model(state: ContractState, participant: str, artifact: ModelArtifact,
                 day: int) -> ContractState:
    """Accept a model submission after the fair-play and format checks."""
    if state.phase is not Phase.OPEN:
        raise WrongPhase("submissions are allowed only while open")
    if state.reward_pool <= 0:
        raise NoEscrow("no reward has been escrowed")
    if submissions_today(state, participant, day) >= state.daily_limit:
        raise SubmissionLimitReached(
            f"{participant} already made {state.daily_limit} submissions on day {day}")
    if not artifact.payload:
        raise NoModel("submitted artifact is empty")
    fmt_name = artifact.format.value
    if fmt_name not in state.accepted_formats:
        raise FormatRejected(f"format {fmt_name} is not accepted by this contract")
    try:
        decode_rules(artifact.payload, artifact.format)
    except DecodeError as exc:
        raise FormatRejected(f"payload does not decode as {fmt_name}: {exc}") from exc
    submission = Submission(participant, fmt_name, artifact.payload, day)
    return _log(state, {"kind": "model_submission", "participant": participant,
                        "format": fmt_name, "day": day,
                        "payload_b64": base64.b64encode(artifact.payload).decode("ascii")},
                submissions=state.submissions + (submission,))


def _validation_txns(state: ContractState, explicit):
    if explicit is not None:
        return list(explicit)
    for canonical in (state.validation_data, state.scoring_data, state.training_data):
        if canonical is not None:
            return _txns_from_canonical(canonical)
    raise NoValidationData("no validation data was supplied or published")


def evaluate_and_settle(state: ContractState, validation_txns=None,
                        metric: str | None = None) -> ContractState:
    """Score every submission, pick the winner, and settle.

    Winner is the highest score; ties go to the earliest submission. The
    phase moves OPEN -> EVALUATING -> SETTLED within this one event.
    """
    if state.phase is not Phase.OPEN:
        raise WrongPhase("evaluation requires an open contract")
    if not state.submissions:
        raise NoSubmissions("nothing to evaluate")
    txns = _validation_txns(state, validation_txns)
    metric_name = metric if metric is not None else state.metric

    state = replace(state, phase=Phase.EVALUATING)
    scored = []
    best_index = 0
    for index, sub in enumerate(state.submissions):
        rules = decode_rules(sub.payload, ArtifactFormat(sub.artifact_format))
        score = evaluate_rules(rules, txns, metric_name)
        scored.append(replace(sub, score=score))
        if score > scored[best_index].score:
            best_index = index
    winner = scored[best_index].participant

    event = {"kind": "model_evaluation", "metric": metric_name,
             "transactions": ([[t.patient_id, sorted(t.items)] for t in txns]
                              if validation_txns is not None else None)}
    return _log(state, event, phase=Phase.SETTLED, winner=winner,
                submissions=tuple(scored))


def collect_reward(state: ContractState, participant: str, wallet: Wallet,
                   share_with=()) -> tuple[ContractState, dict]:
    """Pay out the pool to the settled winner (optionally split equally
    with co-recipients, remainder to the winner). Returns the new state
    and the payout record."""
    if state.phase is not Phase.SETTLED:
        raise WrongPhase("rewards are collectable only after settlement")
    if participant != state.winner:
        raise NotWinner(f"{participant} is not the winner")
    if not wallet.valid:
        raise BadWallet(f"wallet of {participant} is not valid")
    if state.reward_pool <= 0:
        raise AlreadyCollected("the reward pool is empty")

    recipients = [participant]
    for other in share_with:
        if other != participant and other not in recipients:
            recipients.append(other)
    base_share, remainder = divmod(state.reward_pool, len(recipients))
    amounts = {r: base_share for r in recipients}
    amounts[participant] += remainder

    wallets = tuple(
        replace(w, balance=w.balance + amounts[w.participant])
        if w.participant in amounts else w
        for w in state.wallets
    )
    payout = {"recipients": amounts, "total": state.reward_pool}
    event = {"kind": "collect_reward", "participant": participant,
             "wallet_valid": True, "share_with": list(recipients[1:])}
    new_state = _log(state, event, reward_pool=0, wallets=wallets,
                     payouts=state.payouts + tuple(sorted(amounts.items())))
    return new_state, payout


def mark_artifact_persisted(state: ContractState) -> ContractState:
    if state.phase is not Phase.SETTLED:
        raise WrongPhase("serialization happens after settlement")
    return _log(state, {"kind": "model_serialization"}, artifact_persisted=True)


def clean_up(state: ContractState) -> ContractState:
    return _log(state, {"kind": "model_clean_up"}, requirements=None,
                training_data=None, validation_data=None, scoring_data=None)


# --- event fold -------------------------------------------------------------

_EVENT_KEYS = {
    "deposit_reward": {"giver", "amount"},
    "register_wallet": {"participant", "valid"},
    "model_initialization": {"requirements"},
    "model_training": {"transactions"},
    "model_validation": {"transactions"},
    "model_scoring": {"transactions"},
    "model_submission": {"participant", "format", "day", "payload_b64", "payload_text"},
    "model_evaluation": {"metric", "transactions"},
    "model_serialization": set(),
    "model_clean_up": set(),
    "collect_reward": {"participant", "wallet_valid", "share_with"},
}

KNOWN_EVENT_KINDS = frozenset(_EVENT_KEYS)


def _event_txns(event):
    txns = event.get("transactions")
    if txns is None:
        return None
    try:
        return [ItemTransaction(pid, frozenset(items)) for pid, items in txns]
    except (TypeError, ValueError) as exc:
        raise MalformedEvent(f"bad transactions payload: {exc}") from exc


def _submission_artifact(event) -> ModelArtifact:
    from .lifecycle import ArtifactMetadata

    try:
        fmt = ArtifactFormat(event.get("format"))
    except ValueError as exc:
        raise FormatRejected(str(exc)) from exc
    if "payload_b64" in event:
        try:
            payload = base64.b64decode(event["payload_b64"], validate=True)
        except Exception as exc:
            raise MalformedEvent(f"bad base64 payload: {exc}") from exc
    elif "payload_text" in event:
        payload = str(event["payload_text"]).encode("utf-8")
    else:
        payload = b""
    meta = ArtifactMetadata(event.get("participant", ""), 0, 0, "")
    return ModelArtifact(fmt, payload, meta)


def apply_event(state: ContractState, event: dict) -> ContractState:
    """Apply one event dict; raises ContractError subclasses on violation.

    Unknown kinds raise MalformedEvent here; contract_main treats them as
    the loop-exit signal instead.
    """
    if not isinstance(event, dict) or "kind" not in event:
        raise MalformedEvent("event must be an object with a kind")
    kind = event["kind"]
    allowed = _EVENT_KEYS.get(kind)
    if allowed is None:
        raise MalformedEvent(f"unknown event kind {kind!r}")
    extra = set(event) - allowed - {"kind"}
    if extra:
        raise MalformedEvent(f"unexpected keys {sorted(extra)} in {kind} event")

    if kind == "deposit_reward":
        state = deposit_reward(state, str(event.get("giver", "")), event.get("amount"))
    elif kind == "register_wallet":
        state = register_wallet(state, str(event.get("participant", "")),
                                bool(event.get("valid", True)))
    elif kind == "model_initialization":
        state = record_requirements(state, event.get("requirements"))
    elif kind == "model_training":
        state = publish_dataset(state, "training_data", _event_txns(event) or [])
    elif kind == "model_validation":
        state = publish_dataset(state, "validation_data", _event_txns(event) or [])
    elif kind == "model_scoring":
        state = publish_dataset(state, "scoring_data", _event_txns(event) or [])
    elif kind == "model_submission":
        state = submit_model(state, str(event.get("participant", "")),
                             _submission_artifact(event), int(event.get("day", 0)))
    elif kind == "model_evaluation":
        state = evaluate_and_settle(state, _event_txns(event), event.get("metric"))
    elif kind == "model_serialization":
        state = mark_artifact_persisted(state)
    elif kind == "model_clean_up":
        state = clean_up(state)
    elif kind == "collect_reward":
        participant = str(event.get("participant", ""))
        registered = next((w for w in state.wallets if w.participant == participant), None)
        if "wallet_valid" in event:
            wallet = Wallet(participant, registered.balance if registered else 0,
                            bool(event["wallet_valid"]))
        elif registered is not None:
            wallet = registered
        else:
            raise BadWallet(f"no wallet on file for {participant}")
        state, _ = collect_reward(state, participant, wallet,
                                  event.get("share_with", ()))
    _check_conservation(state)
    return state


def _check_conservation(state: ContractState):
    deposited = sum(a for _, a in state.deposits)
    paid = sum(a for _, a in state.payouts)
    if deposited != state.reward_pool + paid:
        raise FairPlayViolation(
            f"value leak: deposits {deposited} != pool {state.reward_pool} + payouts {paid}")


def fair_play_check(state: ContractState) -> None:
    """Audit the standing fairness invariants; raises FairPlayViolation."""
    _check_conservation(state)
    if state.reward_pool < 0:
        raise FairPlayViolation("negative reward pool")
    if state.winner is not None and state.phase is not Phase.SETTLED:
        raise FairPlayViolation("winner recorded before settlement")
    seen: dict[tuple[str, int], int] = {}
    for sub in state.submissions:
        key = (sub.participant, sub.day)
        seen[key] = seen.get(key, 0) + 1
        if seen[key] > state.daily_limit:
            raise FairPlayViolation(f"daily limit exceeded by {key[0]} on day {key[1]}")


@dataclass(frozen=True)
class ContractRunResult:
    state: ContractState
    applied: int
    halted_on_unknown: bool = False
    error: Exception | None = None
    payout: dict | None = field(default=None)

    @property
    def ok(self) -> bool:
        return self.error is None


def contract_main(state: ContractState, events) -> ContractRunResult:
    """Fair-play audit, then fold the event stream, then the reward pass.

    An unknown event kind exits the loop cleanly; a rule violation halts
    the fold and is recorded on the result. After the stream, a settled
    winner with a valid registered wallet and an uncollected pool is paid
    in full automatically.
    """
    fair_play_check(state)
    applied = 0
    halted_on_unknown = False
    error = None
    for event in events:
        kind = event.get("kind") if isinstance(event, dict) else None
        if kind not in KNOWN_EVENT_KINDS:
            halted_on_unknown = True
            break
        try:
            state = apply_event(state, event)
        except ContractError as exc:
            error = exc
            break
        applied += 1

    payout = None
    if (error is None and state.phase is Phase.SETTLED and state.reward_pool > 0
            and state.winner is not None):
        wallet = next((w for w in state.wallets if w.participant == state.winner), None)
        if wallet is not None and wallet.valid:
            state, payout = collect_reward(state, state.winner, wallet)
    return ContractRunResult(state, applied, halted_on_unknown, error, payout)


# --- canonical encoding and persistence -------------------------------------

def state_to_dict(state: ContractState) -> dict:
    return {
        "daily_limit": state.daily_limit,
        "metric": state.metric,
        "accepted_formats": list(state.accepted_formats),
        "phase": state.phase.value,
        "reward_pool": state.reward_pool,
        "deposits": [list(d) for d in state.deposits],
        "submissions": [{
            "participant": s.participant,
            "format": s.artifact_format,
            "payload_b64": base64.b64encode(s.payload).decode("ascii"),
            "day": s.day,
            "score": s.score,
        } for s in state.submissions],
        "wallets": [[w.participant, w.balance, w.valid] for w in state.wallets],
        "payouts": [list(p) for p in state.payouts],
        "winner": state.winner,
        "requirements": state.requirements,
        "training_data": _data_to_list(state.training_data),
        "validation_data": _data_to_list(state.validation_data),
        "scoring_data": _data_to_list(state.scoring_data),
        "artifact_persisted": state.artifact_persisted,
        "event_log": [json.loads(e) for e in state.event_log],
    }


def _data_to_list(canonical):
    return None if canonical is None else [[p, list(i)] for p, i in canonical]


def encode_state(state: ContractState) -> bytes:
    """Canonical byte encoding for replica comparison."""
    return json.dumps(state_to_dict(state), sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def replay(state: ContractState) -> ContractState:
    """Refold the state's own event log from genesis."""
    rebuilt = genesis_state(state.daily_limit, state.metric, state.accepted_formats)
    for line in state.event_log:
        rebuilt = apply_event(rebuilt, json.loads(line))
    return rebuilt


def events_to_jsonl(events) -> str:
    return "".join(_canonical_event(e) + "\n" for e in events)


def events_from_jsonl(text: str) -> list[dict]:
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedEvent(f"line {lineno}: {exc}") from exc
        if not isinstance(event, dict):
            raise MalformedEvent(f"line {lineno}: event must be an object")
        events.append(event)
    return events


def write_events(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(events_to_jsonl(events))


def load_events(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return events_from_jsonl(fh.read())
