"""Event-sourced conversation state machine.

A conversation is an append-only log of records (one genesis record, then
turns and coordinator events). Live state is only ever produced by folding
records through `Conversation.append`, so reloading a transcript and
replaying it reconstructs the exact same terminal state. The SessionManager
drives actors (bot or human) on top of that log: it owns the side-effectful
parts — model calls, revelation checks, recommendation lifecycle, limits,
persistence — and emits plain records.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .content import Product
from .errors import (
    MalformedRecommendationBlock,
    NoPendingRecommendation,
    NotBotTurn,
    OutOfTurn,
    ReplayError,
    TerminalState,
    UnknownProfile,
)
from .gateway import BoundClient, Gateway, ProviderBinding
from .revelation import RevelationState, maybe_reveal
from .seller import SellerConfig, Variant, seller_turn
from .shopper import DecisionKind, ShopperState, parse_decision, shopper_turn
from .shopper import strip_decision_tokens
from .workspace import CategoryContent, Workspace

DEFAULT_MAX_TURNS = 40  # ~3x the typical session length; ends stalled chats


class Status(str, Enum):
    ACTIVE = "active"
    ACCEPTED = "accepted"
    EXHAUSTED = "exhausted"
    ABORTED = "aborted"


@dataclass(frozen=True)
class Record:
    """One transcript line: {cid, seq, kind, role, utterance, meta}."""

    cid: str
    seq: int
    kind: str  # session | turn | revelation | recommendation | decision | status
    role: str | None
    utterance: str | None
    meta: Mapping

    def to_json(self) -> str:
        return json.dumps(
            {"cid": self.cid, "seq": self.seq, "kind": self.kind,
             "role": self.role, "utterance": self.utterance,
             "meta": self.meta},
            sort_keys=True, separators=(",", ":"))


def record_from_json(line: str) -> Record:
    data = json.loads(line)
    return Record(cid=data["cid"], seq=data["seq"], kind=data["kind"],
                  role=data.get("role"), utterance=data.get("utterance"),
                  meta=data.get("meta") or {})


def records_to_jsonl(records: Iterable[Record]) -> str:
    return "\n".join(record.to_json() for record in records)


def records_from_jsonl(text: str) -> list[Record]:
    return [record_from_json(line) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class Turn:
    index: int
    role: str
    utterance: str
    seller_meta: Mapping | None = None
    grounded_paragraphs: tuple[int, ...] | None = None


@dataclass(frozen=True)
class Event:
    kind: str
    payload: Mapping
    turn_index: int


@dataclass
class PendingRecommendation:
    turn_index: int
    product_ids: tuple[str, ...]
    # Set once a shopper turn passes without a decision; the next seller
    # turn auto-resolves a stale recommendation as rejected.
    stale: bool = False


class Conversation:
    """The fold of a record log. Mutated only via append()."""

    def __init__(self) -> None:
        self.cid: str = ""
        self.category: str = ""
        self.seller_kind: str = "bot"
        self.shopper_kind: str = "bot"
        self.profile_ref: str = ""
        self.variant: str = Variant.FULL.value
        self.seed: int | None = None
        self.max_turns: int = DEFAULT_MAX_TURNS
        self.records: list[Record] = []
        self.turns: list[Turn] = []
        self.events: list[Event] = []
        self.status: Status = Status.ACTIVE
        self.pending: PendingRecommendation | None = None
        self.accepted_product: str | None = None

    # -- reducer ---------------------------------------------------------

    def append(self, record: Record) -> None:
        if record.seq != len(self.records):
            raise ReplayError(f"expected seq {len(self.records)}, got {record.seq}")
        if self.records and record.cid != self.cid:
            raise ReplayError("record cid does not match conversation")
        handler = getattr(self, f"_apply_{record.kind}", None)
        if handler is None:
            raise ReplayError(f"unknown record kind {record.kind!r}")
        if record.kind != "session" and self.status is not Status.ACTIVE:
            raise TerminalState(f"conversation is {self.status.value}")
        handler(record)
        self.records.append(record)

    def _apply_session(self, record: Record) -> None:
        if self.records:
            raise ReplayError("session record must be first")
        meta = record.meta
        self.cid = record.cid
        self.category = meta["category"]
        self.seller_kind = meta["seller_kind"]
        self.shopper_kind = meta["shopper_kind"]
        self.profile_ref = meta["profile"]
        self.variant = meta.get("variant", Variant.FULL.value)
        self.seed = meta.get("seed")
        self.max_turns = meta.get("max_turns", DEFAULT_MAX_TURNS)

    def _apply_turn(self, record: Record) -> None:
        expected = "shopper" if not self.turns else (
            "seller" if self.turns[-1].role == "shopper" else "shopper")
        if record.role != expected:
            raise ReplayError(f"expected a {expected} turn, got {record.role}")
        if record.utterance is None:
            raise ReplayError("turn record has no utterance")
        grounded = record.meta.get("grounded_paragraphs")
        self.turns.append(Turn(
            index=len(self.turns), role=record.role,
            utterance=record.utterance,
            seller_meta=record.meta.get("seller"),
            grounded_paragraphs=None if grounded is None else tuple(grounded)))
        if record.role == "shopper" and self.pending is not None:
            self.pending.stale = True

    def _apply_revelation(self, record: Record) -> None:
        self.events.append(Event("revelation", record.meta,
                                 record.meta["turn_index"]))

    def _apply_recommendation(self, record: Record) -> None:
        if self.pending is not None:
            raise ReplayError("a recommendation is already pending")
        ids = tuple(record.meta["product_ids"])
        if not ids:
            raise ReplayError("recommendation must name at least one product")
        self.events.append(Event("recommendation", record.meta,
                                 record.meta["turn_index"]))
        self.pending = PendingRecommendation(
            turn_index=record.meta["turn_index"], product_ids=ids)

    def _apply_decision(self, record: Record) -> None:
        if self.pending is None:
            raise ReplayError("decision without a pending recommendation")
        meta = record.meta
        if meta.get("rec_turn_index") != self.pending.turn_index:
            raise ReplayError("decision does not reference the pending "
                              "recommendation")
        if meta.get("product_id") not in self.pending.product_ids:
            raise ReplayError("decision names a product that was not pending")
        self.events.append(Event("decision", meta, meta["turn_index"]))
        if meta["decision"] == "accept":
            self.status = Status.ACCEPTED
            self.accepted_product = meta["product_id"]
        self.pending = None

    def _apply_status(self, record: Record) -> None:
        new = Status(record.meta["status"])
        if new not in (Status.EXHAUSTED, Status.ABORTED):
            raise ReplayError(f"illegal status transition to {new.value}")
        self.events.append(Event("status", record.meta, len(self.turns)))
        self.status = new

    # -- derived views -----------------------------------------------------

    def history(self) -> list[tuple[str, str]]:
        return [(turn.role, turn.utterance) for turn in self.turns]

    def next_role(self) -> str:
        if not self.turns:
            return "shopper"
        return "seller" if self.turns[-1].role == "shopper" else "shopper"

    def serialize(self) -> str:
        return records_to_jsonl(self.records)


def replay(records: Sequence[Record]) -> Conversation:
    """Fold a record log back into a conversation."""
    conv = Conversation()
    for record in records:
        conv.append(record)
    return conv


def replay_jsonl(text: str) -> Conversation:
    return replay(records_from_jsonl(text))


# --------------------------------------------------------------------------
# Statistics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConversationStats:
    mean_seller_words: float
    mean_shopper_words: float
    n_turns: int
    turns_before_first_rec: int
    n_recommendations: int
    n_revelations: int


def _mean_words(turns: Sequence[Turn], role: str) -> float:
    counts = [len(t.utterance.split()) for t in turns if t.role == role]
    return sum(counts) / len(counts) if counts else 0.0


def compute_stats(conv: Conversation) -> ConversationStats:
    recs = [e for e in conv.events if e.kind == "recommendation"]
    first_rec = recs[0].payload["turn_index"] if recs else len(conv.turns)
    return ConversationStats(
        mean_seller_words=_mean_words(conv.turns, "seller"),
        mean_shopper_words=_mean_words(conv.turns, "shopper"),
        n_turns=len(conv.turns),
        turns_before_first_rec=first_rec,
        n_recommendations=len(recs),
        n_revelations=sum(1 for e in conv.events if e.kind == "revelation"))


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------

class TranscriptStore:
    """Crash-safe per-conversation JSONL append."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, cid: str) -> Path:
        return self.directory / f"{cid}.jsonl"

    def append(self, record: Record) -> None:
        with self._path(record.cid).open("a", encoding="utf-8") as handle:
            handle.write(record.to_json() + "\n")
            handle.flush()

    def load(self, cid: str) -> list[Record]:
        path = self._path(cid)
        if not path.exists():
            raise KeyError(cid)
        return records_from_jsonl(path.read_text(encoding="utf-8"))

    def list_cids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.jsonl"))


# --------------------------------------------------------------------------
# Session manager
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SessionBindings:
    seller: ProviderBinding | None = None
    shopper: ProviderBinding | None = None
    # Degraded response-generation stage (the weaker-generator ablation).
    response: ProviderBinding | None = None


@dataclass(frozen=True)
class SessionConfig:
    category: str
    profile: str
    seller_kind: str = "bot"
    shopper_kind: str = "bot"
    variant: Variant = Variant.FULL
    seed: int | None = None
    max_turns: int = DEFAULT_MAX_TURNS
    cid: str | None = None
    bindings: SessionBindings = field(default_factory=SessionBindings)


class _Session:
    """Runtime attachments for one conversation (never serialized)."""

    def __init__(self, conv: Conversation, content: CategoryContent,
                 revelation: RevelationState, seller_config: SellerConfig,
                 seller_llm: BoundClient | None,
                 shopper_llm: BoundClient | None,
                 response_llm: BoundClient | None):
        self.conv = conv
        self.content = content
        self.revelation = revelation
        self.seller_config = seller_config
        self.seller_llm = seller_llm
        self.shopper_llm = shopper_llm
        self.response_llm = response_llm
        self.lock = threading.RLock()
        self.changed = threading.Condition()


class SessionManager:
    """Coordinates actors over the record log; single writer per conversation."""

    def __init__(self, workspace: Workspace, gateway: Gateway,
                 *, default_bindings: SessionBindings | None = None,
                 revelation_threshold: float = 0.6,
                 seller_config: SellerConfig | None = None,
                 store: TranscriptStore | None = None):
        self.workspace = workspace
        self.gateway = gateway
        self.default_bindings = default_bindings or SessionBindings()
        self.revelation_threshold = revelation_threshold
        self.seller_config = seller_config or SellerConfig()
        self.store = store
        self._sessions: dict[str, _Session] = {}
        self._registry_lock = threading.Lock()
        self.product_query_log: list[dict] = []

    # -- lifecycle -------------------------------------------------------

    def start_session(self, config: SessionConfig) -> Conversation:
        content = self.workspace.get(config.category)
        profile = content.profile(config.profile)
        if profile is None:
            raise UnknownProfile(config.profile)
        cid = config.cid or f"c-{uuid.uuid4().hex[:12]}"
        conv = Conversation()
        conv.append(Record(
            cid=cid, seq=0, kind="session", role=None, utterance=None,
            meta={"category": config.category,
                  "seller_kind": config.seller_kind,
                  "shopper_kind": config.shopper_kind,
                  "profile": config.profile,
                  "variant": config.variant.value,
                  "seed": config.seed,
                  "max_turns": config.max_turns}))
        revelation = RevelationState.create(
            profile, content.questions, self.workspace.provider,
            threshold=self.revelation_threshold)
        seller_cfg = replace(self.seller_config, variant=config.variant,
                             category=config.category)
        session = _Session(
            conv, content, revelation, seller_cfg,
            seller_llm=self._client(config.bindings.seller,
                                    self.default_bindings.seller),
            shopper_llm=self._client(config.bindings.shopper,
                                     self.default_bindings.shopper),
            response_llm=self._client(config.bindings.response,
                                      self.default_bindings.response))
        with self._registry_lock:
            self._sessions[cid] = session
        if self.store:
            for record in conv.records:
                self.store.append(record)
        if config.shopper_kind == "bot":
            with session.lock:
                self._bot_shopper_turn(session)
        return conv

    def _client(self, override: ProviderBinding | None,
                default: ProviderBinding | None) -> BoundClient | None:
        binding = override or default
        return BoundClient(self.gateway, binding) if binding else None

    def session(self, cid: str) -> _Session:
        with self._registry_lock:
            if cid not in self._sessions:
                raise KeyError(cid)
            return self._sessions[cid]

    def conversation(self, cid: str) -> Conversation:
        return self.session(cid).conv

    def cids(self) -> list[str]:
        with self._registry_lock:
            return sorted(self._sessions)

    # -- record plumbing ---------------------------------------------------

    def _commit(self, session: _Session, kind: str, role: str | None,
                utterance: str | None, meta: Mapping) -> Record:
        record = Record(cid=session.conv.cid, seq=len(session.conv.records),
                        kind=kind, role=role, utterance=utterance, meta=meta)
        session.conv.append(record)
        if self.store:
            self.store.append(record)
        with session.changed:
            session.changed.notify_all()
        return record

    # -- stepping ----------------------------------------------------------

    def step(self, conv: Conversation) -> Conversation:
        """Advance exactly one bot turn."""
        session = self.session(conv.cid)
        with session.lock:
            if conv.status is not Status.ACTIVE:
                raise TerminalState(f"conversation is {conv.status.value}")
            role = conv.next_role()
            actor_kind = (conv.seller_kind if role == "seller"
                          else conv.shopper_kind)
            if actor_kind != "bot":
                raise NotBotTurn(f"next actor ({role}) is human")
            if role == "seller":
                self._bot_seller_turn(session)
            else:
                self._bot_shopper_turn(session)
            self.enforce_limits(conv)
        return conv

    def run_bots(self, conv: Conversation, *, max_steps: int = 200) -> Conversation:
        """Step until terminal or a human actor is up next."""
        for _ in range(max_steps):
            if conv.status is not Status.ACTIVE:
                break
            role = conv.next_role()
            kind = conv.seller_kind if role == "seller" else conv.shopper_kind
            if kind != "bot":
                break
            self.step(conv)
        return conv

    def _bot_shopper_turn(self, session: _Session) -> None:
        conv = session.conv
        if session.shopper_llm is None:
            raise NotBotTurn("no shopper binding configured")
        pending_products: tuple[Product, ...] | None = None
        if conv.pending is not None:
            pending_products = tuple(session.content.catalog.get(pid)
                                     for pid in conv.pending.product_ids)
        state = ShopperState(profile=session.revelation.profile,
                             revelation=session.revelation,
                             pending_recommendation=pending_products)
        utterance, decision = shopper_turn(state, conv.history(),
                                           session.shopper_llm)
        turn_index = len(conv.turns)
        self._commit(session, "turn", "shopper", utterance, {})
        if decision.kind is not DecisionKind.NONE and conv.pending is not None:
            self._commit(session, "decision", None, None, {
                "turn_index": turn_index,
                "decision": decision.kind.value,
                "product_id": decision.product_id,
                "rec_turn_index": conv.pending.turn_index,
                "auto": False})

    def _bot_seller_turn(self, session: _Session) -> None:
        conv = session.conv
        if session.seller_llm is None:
            raise NotBotTurn("no seller binding configured")
        indexes = self.workspace.indexes(conv.category)
        result = seller_turn(conv.history(), indexes, session.seller_llm,
                             session.seller_config,
                             response_llm=session.response_llm)
        meta = {"seller": {
            "action": result.action.value,
            "query": result.query,
            "retrieved": None if result.retrieved is None
            else list(result.retrieved),
            "recommended": None if result.recommended_products is None
            else list(result.recommended_products),
            "regenerated": result.regenerated}}
        self._commit_seller_turn(session, result.utterance, meta,
                                 result.recommended_products or ())

    def _commit_seller_turn(self, session: _Session, utterance: str,
                            meta: Mapping,
                            recommended: Sequence[str]) -> None:
        conv = session.conv
        turn_index = len(conv.turns)
        self._commit(session, "turn", "seller", utterance, meta)
        if conv.pending is not None and conv.pending.stale:
            # One grace exchange has passed; resolve the old recommendation.
            self._commit(session, "decision", None, None, {
                "turn_index": turn_index,
                "decision": "reject",
                "product_id": conv.pending.product_ids[0],
                "rec_turn_index": conv.pending.turn_index,
                "auto": True})
        if recommended:
            self._commit(session, "recommendation", None, None, {
                "turn_index": turn_index,
                "product_ids": list(recommended)})
        # Evaluate revelation now so a human shopper sees the coordinator
        # message before composing; at most one reveal per shopper turn.
        reveal = maybe_reveal(session.revelation, utterance)
        if reveal is not None:
            self._commit(session, "revelation", None, None, {
                "turn_index": len(conv.turns),
                "qid": reveal.qid,
                "question": reveal.question,
                "option": reveal.option})

    # -- human actors --------------------------------------------------------

    def submit_human_message(self, conv: Conversation, role: str,
                             utterance: str,
                             grounded_paragraphs: Sequence[int] | None = None,
                             recommended_products: Sequence[str] | None = None,
                             ) -> Conversation:
        session = self.session(conv.cid)
        with session.lock:
            if conv.status is not Status.ACTIVE:
                raise TerminalState(f"conversation is {conv.status.value}")
            if role not in ("seller", "shopper"):
                raise OutOfTurn(f"unknown role {role!r}")
            if conv.next_role() != role:
                raise OutOfTurn(f"it is not the {role}'s turn")
            actor_kind = (conv.seller_kind if role == "seller"
                          else conv.shopper_kind)
            if actor_kind != "human":
                raise OutOfTurn(f"the {role} in this session is a bot")
            if not utterance.strip():
                raise OutOfTurn("message must be non-empty")
            if role == "seller":
                recommended = tuple(recommended_products or ())
                unknown = [pid for pid in recommended
                           if pid not in session.content.catalog.ids]
                if unknown:
                    raise MalformedRecommendationBlock(
                        f"recommended ids not in catalog: {unknown}")
                meta: dict = {}
                if grounded_paragraphs is not None:
                    meta["grounded_paragraphs"] = list(grounded_paragraphs)
                self._commit_seller_turn(session, utterance, meta, recommended)
            else:
                pending_products = None
                if conv.pending is not None:
                    pending_products = tuple(session.content.catalog.get(pid)
                                             for pid in conv.pending.product_ids)
                decision = parse_decision(utterance, pending_products)
                turn_index = len(conv.turns)
                shown = (strip_decision_tokens(utterance)
                         if decision.kind is not DecisionKind.NONE else utterance)
                self._commit(session, "turn", "shopper", shown, {})
                if decision.kind is not DecisionKind.NONE and conv.pending is not None:
                    self._commit(session, "decision", None, None, {
                        "turn_index": turn_index,
                        "decision": decision.kind.value,
                        "product_id": decision.product_id,
                        "rec_turn_index": conv.pending.turn_index,
                        "auto": False})
            self.enforce_limits(conv)
        return conv

    def submit_human_decision(self, conv: Conversation, role: str,
                              decision: str,
                              product_id: str | None = None) -> Conversation:
        if decision not in ("accept", "reject"):
            raise OutOfTurn(f"decision must be accept or reject, got {decision!r}")
        session = self.session(conv.cid)
        with session.lock:
            if conv.status is not Status.ACTIVE:
                raise TerminalState(f"conversation is {conv.status.value}")
            if role != "shopper" or conv.shopper_kind != "human":
                raise OutOfTurn("only a human shopper submits button decisions")
            if conv.pending is None:
                raise NoPendingRecommendation("no recommendation is pending")
            chosen = product_id or conv.pending.product_ids[0]
            if chosen not in conv.pending.product_ids:
                raise NoPendingRecommendation(
                    f"product {chosen!r} is not part of the pending "
                    "recommendation")
            self._commit(session, "decision", None, None, {
                "turn_index": max(len(conv.turns) - 1, 0),
                "decision": decision,
                "product_id": chosen,
                "rec_turn_index": conv.pending.turn_index,
                "auto": False})
        return conv

    # -- limits ---------------------------------------------------------------

    def enforce_limits(self, conv: Conversation,
                       max_turns: int | None = None) -> Conversation:
        limit = conv.max_turns if max_turns is None else max_turns
        if conv.status is Status.ACTIVE and len(conv.turns) >= limit:
            session = self.session(conv.cid)
            self._commit(session, "status", None, None,
                         {"status": Status.EXHAUSTED.value,
                          "reason": f"reached {limit} turns"})
        return conv

    def abort(self, conv: Conversation, reason: str = "aborted") -> Conversation:
        session = self.session(conv.cid)
        with session.lock:
            if conv.status is not Status.ACTIVE:
                raise TerminalState(f"conversation is {conv.status.value}")
            self._commit(session, "status", None, None,
                         {"status": Status.ABORTED.value, "reason": reason})
        return conv

    # -- search logging (human seller product lookups) -------------------------

    def log_product_query(self, category: str, query: str, k: int,
                          result_ids: Sequence[str],
                          cid: str | None = None) -> None:
        self.product_query_log.append({
            "cid": cid, "category": category, "query": query, "k": k,
            "result_ids": list(result_ids)})
