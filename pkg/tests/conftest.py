from __future__ import annotations

from pathlib import Path

import pytest

from salesim.gateway import BoundClient, Gateway
from salesim.orchestrator import SessionBindings, SessionConfig, SessionManager
from salesim.retrieval import HashingEmbedder
from salesim.seller import Variant
from salesim.workspace import Workspace

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
CONTENT_DIR = FIXTURES / "demo-content"


@pytest.fixture(scope="session")
def provider() -> HashingEmbedder:
    return HashingEmbedder(dim=256, seed=0)


@pytest.fixture(scope="session")
def workspace(provider) -> Workspace:
    return Workspace.load(CONTENT_DIR, provider)


@pytest.fixture()
def gateway() -> Gateway:
    # No real sleeping between scripted retries.
    return Gateway(sleep=lambda _s: None)


@pytest.fixture()
def manager(workspace, gateway) -> SessionManager:
    return SessionManager(workspace, gateway)


def ordinal_client(gateway: Gateway, responses, **kwargs) -> BoundClient:
    return BoundClient(gateway, gateway.register_ordinal_script(responses, **kwargs))


def demo_script(*, accept: bool = True, variant: Variant = Variant.FULL,
                recommend: str = "cm-02", knowledge_turns: int = 1) -> list[str]:
    """Ordinal responses for one standard scripted bot-bot conversation.

    Call order per exchange (full variant): action, query, response; shopper
    turns take one call each, starting with the opening request. rule_ad
    skips action calls but follows the fixed schedule (6 knowledge turns
    before the product turn); key_qg skips query calls.
    """
    opening = "Hi! I'm looking for a coffee maker and could use some advice."
    knowledge_reply = ("Drip machines brew a full carafe while espresso pulls "
                       "concentrated shots. How many cups of coffee do you "
                       "drink per day?")
    # keyword-bearing so the key_qg variant retrieves the scripted product
    shopper_mid = ("Usually 2-4 cups. A compact AeroPlus drip brewer would "
                   "fit my counter.")
    product_reply = ("Based on what you've told me, the AeroPlus Compact "
                     "5-Cup Drip Brewer is a great fit for a drip drinker.\n"
                     f"RECOMMEND: {recommend}")
    closing = ("[ACCEPT] Thanks, I'll take it!" if accept
               else "[REJECT] That's not what I had in mind.")

    n_knowledge = 6 if variant is Variant.RULE_AD else knowledge_turns
    script = [opening]
    for i in range(n_knowledge):
        if variant is not Variant.RULE_AD:
            script.append("Knowledge Search")
        if variant is not Variant.KEY_QG:
            script.append("coffee maker types drip espresso pod")
        script.append(knowledge_reply)
        script.append(shopper_mid if i == 0
                      else f"Tell me more about the compact AeroPlus drip "
                           f"brewer, please ({i}).")
    if variant is not Variant.RULE_AD:
        script.append("Product Search")
    if variant is not Variant.KEY_QG:
        script.append("AeroPlus compact 5-cup drip brewer")
    script.append(product_reply)
    script.append(closing)
    return script


def fixture_conversation(cid: str, steps, *, category: str = "coffee-makers",
                         profile: str = "prof-01"):
    """Build a Conversation straight from records.

    ``steps`` is a list of tuples:
      ("turn", role, utterance)
      ("rec", [product ids])            attaches to the latest seller turn
      ("dec", "accept"/"reject", pid)   resolves the pending recommendation
      ("status", "exhausted"/"aborted")
    """
    from salesim.orchestrator import Conversation, Record

    conv = Conversation()
    conv.append(Record(cid=cid, seq=0, kind="session", role=None,
                       utterance=None,
                       meta={"category": category, "seller_kind": "bot",
                             "shopper_kind": "bot", "profile": profile}))
    rec_turn = None
    for step in steps:
        seq = len(conv.records)
        if step[0] == "turn":
            _, role, utterance = step
            conv.append(Record(cid=cid, seq=seq, kind="turn", role=role,
                               utterance=utterance, meta={}))
        elif step[0] == "rec":
            rec_turn = len(conv.turns) - 1
            conv.append(Record(cid=cid, seq=seq, kind="recommendation",
                               role=None, utterance=None,
                               meta={"turn_index": rec_turn,
                                     "product_ids": list(step[1])}))
        elif step[0] == "dec":
            _, decision, pid = step
            conv.append(Record(cid=cid, seq=seq, kind="decision", role=None,
                               utterance=None,
                               meta={"turn_index": len(conv.turns) - 1,
                                     "decision": decision, "product_id": pid,
                                     "rec_turn_index": rec_turn,
                                     "auto": False}))
        elif step[0] == "status":
            conv.append(Record(cid=cid, seq=seq, kind="status", role=None,
                               utterance=None,
                               meta={"status": step[1], "reason": "fixture"}))
        else:
            raise ValueError(step[0])
    return conv


def run_demo_conversation(manager: SessionManager, gateway: Gateway,
                          *, profile: str = "prof-01", cid: str | None = None,
                          variant: Variant = Variant.FULL,
                          accept: bool = True, recommend: str = "cm-02",
                          max_turns: int = 40, knowledge_turns: int = 1):
    """Start and finish one scripted bot-bot conversation.

    With accept=False pass max_turns equal to the script's turn count
    (3 + 2 * knowledge turns) so the session exhausts right after the
    rejection instead of running the script dry.
    """
    binding = gateway.register_ordinal_script(
        demo_script(accept=accept, variant=variant, recommend=recommend,
                    knowledge_turns=knowledge_turns))
    conv = manager.start_session(SessionConfig(
        category="coffee-makers", profile=profile, variant=variant,
        cid=cid, max_turns=max_turns,
        bindings=SessionBindings(seller=binding, shopper=binding,
                                 response=binding)))
    manager.run_bots(conv)
    return conv
