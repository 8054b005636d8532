from __future__ import annotations

import random
import re
from collections import Counter

import pytest

from salesim.errors import (
    EmptyQuery,
    MalformedRecommendationBlock,
    UnparseableAction,
)
from salesim.gateway import Gateway
from salesim.seller import (
    STOPWORDS,
    SellerAction,
    SellerConfig,
    SellerTurn,
    Variant,
    decide_action,
    generate_query,
    generate_response,
    keyword_query,
    knowledge_lookup,
    product_lookup,
    regenerate_if_truncated,
    seller_turn,
)
from tests.conftest import ordinal_client

FULL = SellerConfig(category="coffee-makers")


def history_with_seller_turns(n: int) -> list[tuple[str, str]]:
    history: list[tuple[str, str]] = [("shopper", "Hi, I need help.")]
    for i in range(n):
        history.append(("seller", f"Seller line {i}."))
        history.append(("shopper", f"Shopper line {i}."))
    return history


# --------------------------------------------------------------------------
# Action decision
# --------------------------------------------------------------------------

def test_rule_ad_schedule():
    config = SellerConfig(variant=Variant.RULE_AD)
    for prior in range(0, 6):  # seller turns 1..6
        action = decide_action(history_with_seller_turns(prior), None, config)
        assert action is SellerAction.KNOWLEDGE_SEARCH
    for prior in range(6, 10):  # seller turns 7+
        action = decide_action(history_with_seller_turns(prior), None, config)
        assert action is SellerAction.PRODUCT_SEARCH


def test_action_label_parse(gateway):
    llm = ordinal_client(gateway, ["Product Search"])
    assert decide_action([], llm, FULL) is SellerAction.PRODUCT_SEARCH
    llm = ordinal_client(gateway, ["  knowledge search.  "])
    assert decide_action([], llm, FULL) is SellerAction.KNOWLEDGE_SEARCH
    llm = ordinal_client(gateway, ["Respond Directly"])
    assert decide_action([], llm, FULL) is SellerAction.RESPOND_DIRECTLY


def test_action_retries_once_then_fails(gateway):
    llm = ordinal_client(gateway, ["garbage", "Product Search"])
    assert decide_action([], llm, FULL) is SellerAction.PRODUCT_SEARCH
    llm = ordinal_client(gateway, ["garbage", "more garbage"])
    with pytest.raises(UnparseableAction):
        decide_action([], llm, FULL)


# --------------------------------------------------------------------------
# Query generation
# --------------------------------------------------------------------------

def test_key_qg_hand_counted_example():
    utterance = ("I want a quiet vacuum for pet hair on hardwood floors "
                 "under $300")
    assert keyword_query(utterance) == "quiet vacuum pet hair hardwood"


def test_key_qg_short_input_no_padding():
    assert keyword_query("need a TV") == "tv"


def test_key_qg_frequency_then_document_order():
    assert keyword_query("grinder grinder burr carafe burr pump filter") == \
        "grinder burr carafe pump filter"


def test_key_qg_variant_uses_latest_utterance(gateway):
    config = SellerConfig(variant=Variant.KEY_QG)
    history = [("shopper", "Hi"),
               ("seller", "Welcome"),
               ("shopper", "I want a quiet espresso machine under $300")]
    query = generate_query(history, SellerAction.KNOWLEDGE_SEARCH, None, config)
    assert query == "quiet espresso machine 300"


def test_key_qg_all_stopwords_is_empty_query():
    config = SellerConfig(variant=Variant.KEY_QG)
    with pytest.raises(EmptyQuery):
        generate_query([("shopper", "well yes please do")],
                       SellerAction.KNOWLEDGE_SEARCH, None, config)


def test_llm_query_verbatim(gateway):
    llm = ordinal_client(gateway, ['"burr grinder capacity"'])
    query = generate_query([("shopper", "hi")], SellerAction.KNOWLEDGE_SEARCH,
                           llm, FULL)
    assert query == "burr grinder capacity"


def keyword_oracle(utterance: str) -> str:
    """Independent reimplementation: frequency-ranked non-stopword tokens,
    ties by first occurrence, top 5, joined by spaces."""
    tokens = [t for t in re.findall(r"[a-z0-9]+", utterance.lower())
              if t not in STOPWORDS]
    counts = Counter(tokens)
    firsts: dict[str, int] = {}
    for i, tok in enumerate(tokens):
        firsts.setdefault(tok, i)
    ordered = sorted(counts.keys(), key=lambda t: (-counts[t], firsts[t]))
    return " ".join(ordered[:5])


def test_key_qg_matches_oracle_on_fuzzed_utterances():
    rng = random.Random(99)
    vocab = (["vacuum", "quiet", "espresso", "budget", "oled", "wireless",
              "grinder", "pods", "carafe", "hdmi"] +
             ["the", "a", "for", "want", "i", "on", "under", "need"])
    for _ in range(50):
        utterance = " ".join(rng.choice(vocab)
                             for _ in range(rng.randint(1, 25)))
        assert keyword_query(utterance) == keyword_oracle(utterance)


# --------------------------------------------------------------------------
# Lookups
# --------------------------------------------------------------------------

def test_knowledge_lookup_three_paragraphs(workspace):
    indexes = workspace.indexes("coffee-makers")
    text, ids = knowledge_lookup("espresso machine pressure",
                                 indexes.guide, indexes.provider, FULL)
    assert len(ids) == 3
    assert text.count("\n\n") == 2  # k-1 separators
    first = workspace.get("coffee-makers").guide.paragraphs
    assert text.split("\n\n")[0] in [p for _, p in first]


def test_knowledge_lookup_clamps(provider):
    from salesim.retrieval import build_index

    index = build_index([("a", "one"), ("b", "two")], provider)
    text, ids = knowledge_lookup("one", index, provider, FULL)
    assert len(ids) == 2
    assert text.count("\n\n") == 1


def test_product_lookup_top_four(workspace):
    indexes = workspace.indexes("coffee-makers")
    ids = product_lookup("drip coffee", indexes.products, indexes.provider,
                         FULL)
    assert len(ids) == 4


def test_product_lookup_self_retrieval(workspace):
    from salesim.content import product_search_text

    indexes = workspace.indexes("coffee-makers")
    target = workspace.get("coffee-makers").catalog.get("cm-03")
    ids = product_lookup(product_search_text(target), indexes.products,
                         indexes.provider, FULL)
    assert ids[0] == "cm-03"


def test_product_lookup_matches_bruteforce(workspace):
    from salesim.retrieval import cosine

    indexes = workspace.indexes("coffee-makers")
    query = "compact pod machine"
    query_vec = indexes.provider.embed(query)
    expected = sorted(
        ((cosine(e.vector, query_vec), e.entry_id)
         for e in indexes.products.entries),
        key=lambda pair: (-pair[0], pair[1]))
    ids = product_lookup(query, indexes.products, indexes.provider, FULL)
    assert ids == [eid for _, eid in expected[:4]]


# --------------------------------------------------------------------------
# Response generation
# --------------------------------------------------------------------------

def test_response_product_subset_selected(gateway):
    llm = ordinal_client(gateway, ["Take a look at this one.\nRECOMMEND: p3"])
    utterance, recommended, truncated = generate_response(
        [("shopper", "hi")], SellerAction.PRODUCT_SEARCH, "q", "results",
        llm, FULL, retrieved_ids=["p1", "p2", "p3", "p4"])
    assert recommended == ("p3",)
    assert "RECOMMEND" not in utterance
    assert truncated is False


def test_response_recommend_none_is_empty_subset(gateway):
    llm = ordinal_client(gateway, ["Let me narrow it down.\nRECOMMEND: none"])
    _, recommended, _ = generate_response(
        [], SellerAction.PRODUCT_SEARCH, "q", "results", llm, FULL,
        retrieved_ids=["p1"])
    assert recommended == ()


def test_response_direct_has_no_recommendation(gateway):
    llm = ordinal_client(gateway, ["My pleasure, happy to help!"])
    utterance, recommended, _ = generate_response(
        [("shopper", "thanks")], SellerAction.RESPOND_DIRECTLY, None, None,
        llm, FULL)
    assert recommended is None
    assert utterance == "My pleasure, happy to help!"


def test_response_unknown_id_malformed(gateway):
    llm = ordinal_client(gateway, ["Here you go.\nRECOMMEND: p9"])
    with pytest.raises(MalformedRecommendationBlock):
        generate_response([], SellerAction.PRODUCT_SEARCH, "q", "results",
                          llm, FULL, retrieved_ids=["p1", "p2"])


def test_response_missing_block_malformed(gateway):
    llm = ordinal_client(gateway, ["Here you go."])
    with pytest.raises(MalformedRecommendationBlock):
        generate_response([], SellerAction.PRODUCT_SEARCH, "q", "results",
                          llm, FULL, retrieved_ids=["p1"])


def test_response_precondition():
    with pytest.raises(ValueError):
        generate_response([], SellerAction.RESPOND_DIRECTLY, None, "text",
                          None, FULL)


# --------------------------------------------------------------------------
# Regeneration
# --------------------------------------------------------------------------

def test_regen_passthrough_when_not_truncated(gateway):
    llm = ordinal_client(gateway, [])
    assert regenerate_if_truncated("fine", False, llm, FULL) == ("fine", False)


def test_regen_disabled_by_variant(gateway):
    config = SellerConfig(variant=Variant.NO_REGEN)
    llm = ordinal_client(gateway, [])
    assert regenerate_if_truncated("cut off mid", True, llm, config) == \
        ("cut off mid", False)


def test_regen_rewrites_once(gateway):
    llm = ordinal_client(gateway, ["Short answer."])
    assert regenerate_if_truncated("long truncated text", True, llm, FULL) == \
        ("Short answer.", True)
    assert gateway.calls[-1].tag == "regenerate"


# --------------------------------------------------------------------------
# Full pipeline
# --------------------------------------------------------------------------

def test_seller_turn_knowledge_pipeline(workspace, gateway):
    indexes = workspace.indexes("coffee-makers")
    llm = ordinal_client(gateway, [
        "Knowledge Search", "grind size", "Grind matters a lot."])
    result = seller_turn([("shopper", "hi")], indexes, llm, FULL)
    assert result.action is SellerAction.KNOWLEDGE_SEARCH
    assert result.query == "grind size"
    assert result.retrieved is not None and len(result.retrieved) == 3
    assert result.recommended_products is None
    assert result.regenerated is False
    assert result.utterance == "Grind matters a lot."


def test_seller_turn_product_pipeline(workspace, gateway):
    indexes = workspace.indexes("coffee-makers")
    llm = ordinal_client(gateway, [
        "Product Search", "compact pod machine",
        "The SoloServe fits.\nRECOMMEND: cm-04"])
    result = seller_turn([("shopper", "hi")], indexes, llm, FULL)
    assert result.action is SellerAction.PRODUCT_SEARCH
    assert result.retrieved is not None and len(result.retrieved) <= 4
    assert result.recommended_products == ("cm-04",)
    assert set(result.recommended_products) <= set(result.retrieved)


def test_seller_turn_stage_coherence_direct(workspace, gateway):
    indexes = workspace.indexes("coffee-makers")
    llm = ordinal_client(gateway, ["Respond Directly", "Happy to help!"])
    result = seller_turn([("shopper", "thanks!")], indexes, llm, FULL)
    assert result.query is None and result.retrieved is None


def test_seller_turn_invariant():
    with pytest.raises(ValueError):
        SellerTurn(utterance="u", action=SellerAction.RESPOND_DIRECTLY,
                   query="q", retrieved=None, recommended_products=None,
                   regenerated=False)


def test_variant_equivalence_without_truncation(workspace):
    """full and no_regen produce identical turns when nothing truncates."""
    def run(variant: Variant) -> SellerTurn:
        gateway = Gateway(sleep=lambda _s: None)
        llm = ordinal_client(gateway, [
            "Knowledge Search", "grind size", "Grind matters."])
        config = SellerConfig(variant=variant, category="coffee-makers")
        return seller_turn([("shopper", "hi")],
                           workspace.indexes("coffee-makers"), llm, config)

    assert run(Variant.FULL) == run(Variant.NO_REGEN)


def test_small_rg_uses_response_binding(workspace, gateway):
    indexes = workspace.indexes("coffee-makers")
    main = ordinal_client(gateway, ["Knowledge Search", "grind size"])
    degraded = ordinal_client(gateway, ["tiny reply"])
    config = SellerConfig(variant=Variant.SMALL_RG, category="coffee-makers")
    result = seller_turn([("shopper", "hi")], indexes, main, config,
                         response_llm=degraded)
    assert result.utterance == "tiny reply"
    tags = [(c.provider_id, c.tag) for c in gateway.calls]
    assert tags[-1][0] == degraded.binding.provider_id
    assert tags[-1][1] == "response_generation"
