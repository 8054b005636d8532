"""Model-backed seller actor: action decision -> query -> retrieval ->
grounded response -> regeneration, with pluggable ablation variants.

Variants swap single stages for rule-based or degraded alternatives:
rule_ad (fixed action schedule), key_qg (keyword queries), no_regen (no
rewrite of truncated replies), small_rg (weaker model on response
generation only, wired through a separate binding).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .content import ProductCatalog, product_search_text
from .errors import EmptyQuery, MalformedRecommendationBlock, UnparseableAction
from .gateway import BoundClient, user_request
from .prompts import load_template, render, render_history
from .retrieval import EmbeddingProvider, VectorIndex, search

History = Sequence[tuple[str, str]]


class SellerAction(Enum):
    KNOWLEDGE_SEARCH = "knowledge_search"
    PRODUCT_SEARCH = "product_search"
    RESPOND_DIRECTLY = "respond_directly"


ACTION_LABELS = {
    "knowledge search": SellerAction.KNOWLEDGE_SEARCH,
    "knowledge_search": SellerAction.KNOWLEDGE_SEARCH,
    "product search": SellerAction.PRODUCT_SEARCH,
    "product_search": SellerAction.PRODUCT_SEARCH,
    "respond directly": SellerAction.RESPOND_DIRECTLY,
    "respond_directly": SellerAction.RESPOND_DIRECTLY,
    "response generation": SellerAction.RESPOND_DIRECTLY,
}

ACTION_DISPLAY = {
    SellerAction.KNOWLEDGE_SEARCH: "Knowledge Search",
    SellerAction.PRODUCT_SEARCH: "Product Search",
    SellerAction.RESPOND_DIRECTLY: "Respond Directly",
}


class Variant(str, Enum):
    FULL = "full"
    RULE_AD = "rule_ad"
    KEY_QG = "key_qg"
    NO_REGEN = "no_regen"
    SMALL_RG = "small_rg"


# Ablation-table row order (degraded response generation first, full last).
VARIANT_TABLE_ORDER = (Variant.SMALL_RG, Variant.RULE_AD, Variant.KEY_QG,
                       Variant.NO_REGEN, Variant.FULL)

RECOMMEND_LINE = re.compile(r"^\s*RECOMMEND:\s*(.*?)\s*$", re.MULTILINE)

# Fixed list for the keyword-query variant: standard function words plus the
# conversational filler common in shopping chat. Order-independent set;
# extraction ties break by first occurrence in the utterance.
STOPWORDS = frozenset("""
a about after again against all also am an and any are as at be because been
before being below between both but by can cant could d did didn do does
doing don dont down during each few for from further get got had has have
having he hello her here hers him his how hi i id if ill im in into is isn
it its just like ll looking m me more most mostly my need no nor not now of
off ok okay on once only or other our out over own please re really s same
she should so some such sure t tell than that thanks thank the their them
then there these they this those through to too under until up usually ve
very want was wasn we well were what when where which while who whom why
will with would yeah yes you your yours
""".split())


@dataclass(frozen=True)
class SellerConfig:
    knowledge_k: int = 3
    product_k: int = 4
    max_tokens: int = 180
    variant: Variant = Variant.FULL
    category: str = ""
    # rule_ad: knowledge for this many seller turns, then product search.
    rule_ad_knowledge_turns: int = 6


@dataclass(frozen=True)
class SellerIndexes:
    guide: VectorIndex
    products: VectorIndex
    provider: EmbeddingProvider
    catalog: ProductCatalog


@dataclass(frozen=True)
class SellerTurn:
    utterance: str
    action: SellerAction
    query: str | None
    retrieved: tuple[str, ...] | None
    recommended_products: tuple[str, ...] | None
    regenerated: bool

    def __post_init__(self) -> None:
        if (self.query is None) != (self.action is SellerAction.RESPOND_DIRECTLY):
            raise ValueError("query must be present iff the action retrieves")


def seller_turn_number(history: History) -> int:
    """1-based index of the seller turn about to be generated."""
    return sum(1 for role, _ in history if role == "seller") + 1


def decide_action(history: History, llm: BoundClient,
                  config: SellerConfig) -> SellerAction:
    """Pick the tool for this turn; one retry on an unparseable label."""
    if config.variant is Variant.RULE_AD:
        if seller_turn_number(history) <= config.rule_ad_knowledge_turns:
            return SellerAction.KNOWLEDGE_SEARCH
        return SellerAction.PRODUCT_SEARCH
    prompt = render(load_template("seller_action_v1"),
                    category=config.category or "the product",
                    chat_history=render_history(history))
    for attempt in range(2):
        completion = llm.complete(user_request(prompt, max_tokens=16),
                                  tag="action_decision")
        action = _parse_action(completion)
        if action is not None:
            return action
    raise UnparseableAction(f"no action label in completion: {completion!r}")


def _parse_action(completion: str) -> SellerAction | None:
    normalized = re.sub(r"[^a-z_ ]", "", completion.strip().lower())
    normalized = re.sub(r"\s+", " ", normalized).strip()
    return ACTION_LABELS.get(normalized)


def generate_query(history: History, action: SellerAction, llm: BoundClient,
                   config: SellerConfig) -> str:
    if action is SellerAction.RESPOND_DIRECTLY:
        raise ValueError("respond_directly takes no query")
    if config.variant is Variant.KEY_QG:
        query = keyword_query(history[-1][1] if history else "")
    else:
        prompt = render(load_template("seller_query_v1"),
                        tool=ACTION_DISPLAY[action],
                        chat_history=render_history(history))
        query = llm.complete(user_request(prompt, max_tokens=32),
                             tag="query_generation").strip().strip('"').strip()
    if not query:
        raise EmptyQuery("query generation produced an empty query")
    return query


def keyword_query(utterance: str, limit: int = 5) -> str:
    """Top non-stopword tokens by frequency, ties by first occurrence."""
    tokens = re.findall(r"[a-z0-9]+", utterance.lower())
    keywords = [t for t in tokens if t not in STOPWORDS]
    counts = Counter(keywords)
    first_seen = {t: i for i, t in reversed(list(enumerate(keywords)))}
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return " ".join(ranked[:limit])


def knowledge_lookup(query: str, guide_index: VectorIndex,
                     provider: EmbeddingProvider,
                     config: SellerConfig) -> tuple[str, tuple[str, ...]]:
    """Top paragraphs joined by one blank line, in rank order."""
    hits = search(guide_index, query, config.knowledge_k, provider)
    ids = tuple(entry_id for entry_id, _ in hits)
    text = "\n\n".join(guide_index.get(entry_id).payload for entry_id in ids)
    return text, ids


def product_lookup(query: str, product_index: VectorIndex,
                   provider: EmbeddingProvider,
                   config: SellerConfig) -> list[str]:
    hits = search(product_index, query, config.product_k, provider)
    return [entry_id for entry_id, _ in hits]


def _product_results_text(ids: Sequence[str], catalog: ProductCatalog) -> str:
    blocks = []
    for pid in ids:
        product = catalog.get(pid)
        blocks.append(f"[{pid}] {product_search_text(product)}")
    return "\n\n".join(blocks)


_RECOMMEND_INSTRUCTION = (
    "Decide which of the retrieved products, if any, to recommend now; you "
    "do not have to mention all of them. End your reply with one final line "
    "of the form:\nRECOMMEND: <comma-separated product ids>\n"
    "or, if you recommend nothing yet:\nRECOMMEND: none")


def generate_response(history: History, action: SellerAction,
                      query: str | None, retrieved_text: str | None,
                      llm: BoundClient, config: SellerConfig,
                      retrieved_ids: Sequence[str] | None = None,
                      ) -> tuple[str, tuple[str, ...] | None, bool]:
    """Compose the reply; returns (utterance, recommended, truncated).

    Product-search replies must carry a machine-readable RECOMMEND line
    naming a subset of the retrieved ids ("none" for the empty subset);
    the line is stripped before display.
    """
    if (retrieved_text is None) != (action is SellerAction.RESPOND_DIRECTLY):
        raise ValueError("retrieved_text must be present iff the action retrieves")
    if action is SellerAction.RESPOND_DIRECTLY:
        prompt = render(load_template("seller_response_plain_v1"),
                        chat_history=render_history(history))
    else:
        instruction = (_RECOMMEND_INSTRUCTION
                       if action is SellerAction.PRODUCT_SEARCH else "")
        prompt = render(load_template("seller_response_knowledge_v1"),
                        chat_history=render_history(history),
                        action=ACTION_DISPLAY[action], query=query or "",
                        results=retrieved_text,
                        recommend_instruction=instruction)
    record = llm.call(user_request(prompt, max_tokens=config.max_tokens),
                      tag="response_generation")
    utterance = record.response.strip()
    if action is not SellerAction.PRODUCT_SEARCH:
        return utterance, None, record.truncated
    recommended = _parse_recommend_block(utterance, retrieved_ids or ())
    utterance = RECOMMEND_LINE.sub("", utterance).strip()
    return utterance, recommended, record.truncated


def _parse_recommend_block(utterance: str,
                           retrieved_ids: Sequence[str]) -> tuple[str, ...]:
    matches = RECOMMEND_LINE.findall(utterance)
    if not matches:
        raise MalformedRecommendationBlock(
            "product-search reply is missing its RECOMMEND line")
    payload = matches[-1].strip()
    if not payload or payload.lower() == "none":
        return ()
    ids = tuple(token.strip() for token in payload.split(",") if token.strip())
    unknown = [pid for pid in ids if pid not in set(retrieved_ids)]
    if unknown:
        raise MalformedRecommendationBlock(
            f"recommended ids not among retrieved: {unknown}")
    return ids


def regenerate_if_truncated(utterance: str, truncated: bool,
                            llm: BoundClient,
                            config: SellerConfig) -> tuple[str, bool]:
    """At most one rewrite of a cut-off reply; no_regen passes through."""
    if not truncated or config.variant is Variant.NO_REGEN:
        return utterance, False
    prompt = render(load_template("seller_rewrite_v1"),
                    max_tokens=config.max_tokens, response=utterance)
    rewritten = llm.complete(
        user_request(prompt, max_tokens=config.max_tokens),
        tag="regenerate").strip()
    return rewritten, True


def seller_turn(history: History, indexes: SellerIndexes, llm: BoundClient,
                config: SellerConfig,
                response_llm: BoundClient | None = None) -> SellerTurn:
    """Full pipeline for one seller turn, recording every intermediate.

    ``response_llm`` overrides the binding for response generation and
    regeneration only (the small_rg ablation).
    """
    gen_llm = response_llm or llm
    action = decide_action(history, llm, config)
    query: str | None = None
    retrieved: tuple[str, ...] | None = None
    retrieved_text: str | None = None
    if action is SellerAction.KNOWLEDGE_SEARCH:
        query = generate_query(history, action, llm, config)
        retrieved_text, retrieved = knowledge_lookup(
            query, indexes.guide, indexes.provider, config)
    elif action is SellerAction.PRODUCT_SEARCH:
        query = generate_query(history, action, llm, config)
        ids = product_lookup(query, indexes.products, indexes.provider, config)
        retrieved = tuple(ids)
        retrieved_text = _product_results_text(ids, indexes.catalog)
    utterance, recommended, truncated = generate_response(
        history, action, query, retrieved_text, gen_llm, config,
        retrieved_ids=retrieved)
    utterance, regenerated = regenerate_if_truncated(
        utterance, truncated, gen_llm, config)
    return SellerTurn(utterance=utterance, action=action, query=query,
                      retrieved=retrieved, recommended_products=recommended,
                      regenerated=regenerated)
