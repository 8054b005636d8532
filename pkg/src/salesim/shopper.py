"""Model-backed shopper actor.

The shopper replies in character, leaks at most the preferences that have
been revealed so far, and flags accept/reject decisions on a pending
recommendation with literal [ACCEPT] / [REJECT] tokens.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .content import PreferenceProfile, Product
from .errors import UnannotatedProfile
from .gateway import BoundClient, CompletionRequest, user_request
from .prompts import load_template, render, render_history
from .revelation import RevelationState

log = logging.getLogger(__name__)

ACCEPT_TOKEN = "[ACCEPT]"
REJECT_TOKEN = "[REJECT]"
SHOPPER_MAX_TOKENS = 256

History = Sequence[tuple[str, str]]  # (role, utterance), role in {seller, shopper}


class DecisionKind(Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    NONE = "none"


@dataclass(frozen=True)
class ShopperDecision:
    kind: DecisionKind
    product_id: str | None = None

    def __post_init__(self) -> None:
        if (self.kind is DecisionKind.NONE) != (self.product_id is None):
            raise ValueError("product_id must be present iff kind is not none")


@dataclass
class ShopperState:
    profile: PreferenceProfile
    revelation: RevelationState
    # Full records of the currently recommended products, if any; the shopper
    # has seen their details in the recommendation message.
    pending_recommendation: tuple[Product, ...] | None = None

    def __post_init__(self) -> None:
        if self.pending_recommendation is not None and not self.pending_recommendation:
            raise ValueError("pending_recommendation must be non-empty when present")


def build_shopper_prompt(state: ShopperState, history: History,
                         *, max_tokens: int = SHOPPER_MAX_TOKENS) -> CompletionRequest:
    """Instantiate the shopper template with only the revealed preferences."""
    lines = [f"- {rev.question}: {rev.option}"
             for rev in state.revelation.revealed_pairs()]
    rendered = render(load_template("shopper_v1"),
                      product=state.profile.category,
                      preferences="\n".join(lines),
                      chat_history=render_history(history))
    return user_request(rendered, max_tokens=max_tokens)


def parse_decision(utterance: str,
                   pending: Sequence[Product] | Sequence[str] | None) -> ShopperDecision:
    """Scan for the first literal [ACCEPT] / [REJECT] token (case-sensitive).

    Product resolution: with a single pending item, that item; with several,
    the pending product whose name shares the most words with the utterance
    (ties to pending order); with no mention, the first pending item.
    """
    if not pending:
        return ShopperDecision(DecisionKind.NONE)
    accept_at = utterance.find(ACCEPT_TOKEN)
    reject_at = utterance.find(REJECT_TOKEN)
    if accept_at == -1 and reject_at == -1:
        return ShopperDecision(DecisionKind.NONE)
    if accept_at == -1:
        kind = DecisionKind.REJECT
    elif reject_at == -1:
        kind = DecisionKind.ACCEPT
    else:
        kind = DecisionKind.ACCEPT if accept_at < reject_at else DecisionKind.REJECT
    return ShopperDecision(kind, _resolve_product(utterance, pending))


def _pid(item: Product | str) -> str:
    return item if isinstance(item, str) else item.id


def _name(item: Product | str) -> str:
    return "" if isinstance(item, str) else item.name


def _resolve_product(utterance: str,
                     pending: Sequence[Product] | Sequence[str]) -> str:
    if len(pending) == 1:
        return _pid(pending[0])
    utterance_words = set(re.findall(r"[a-z0-9]+", utterance.lower()))
    best_id, best_hits = None, 0
    for item in pending:
        name_words = {w for w in re.findall(r"[a-z0-9]+", _name(item).lower())
                      if len(w) >= 3}
        hits = len(name_words & utterance_words)
        if hits > best_hits:
            best_id, best_hits = _pid(item), hits
    return best_id if best_id is not None else _pid(pending[0])


def strip_decision_tokens(utterance: str) -> str:
    cleaned = utterance.replace(ACCEPT_TOKEN, " ").replace(REJECT_TOKEN, " ")
    return re.sub(r"[ \t]{2,}", " ", cleaned).strip()


def shopper_turn(state: ShopperState, history: History,
                 llm: BoundClient) -> tuple[str, ShopperDecision]:
    """One shopper reply: prompt, complete, parse the decision."""
    request = build_shopper_prompt(state, history)
    text = llm.complete(request, tag="shopper").strip()
    if state.pending_recommendation is None:
        if ACCEPT_TOKEN in text or REJECT_TOKEN in text:
            log.warning("shopper emitted a decision token with no pending "
                        "recommendation; ignoring")
        return text, ShopperDecision(DecisionKind.NONE)
    decision = parse_decision(text, state.pending_recommendation)
    if decision.kind is not DecisionKind.NONE:
        text = strip_decision_tokens(text)
    return text, decision


def oracle_accept(profile: PreferenceProfile, product_id: str) -> bool:
    """Ground-truth acceptability per the annotated profile."""
    if profile.acceptable_products is None:
        raise UnannotatedProfile(f"profile {profile.pid} is not annotated")
    return product_id in profile.acceptable_products
