"""HTTP facade for sessions, content, streaming, and evaluation.

Information asymmetry is enforced here: the shopper view never contains
unrevealed preference text or the ground-truth acceptable set, and the
seller view never contains revelation events or the profile. Roles travel
as signed session tokens ("<role>.<sig>"); there is no further auth.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from typing import Iterator

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import evaluation
from .content import product_to_json
from .errors import (
    MalformedRecommendationBlock,
    NoPendingRecommendation,
    NotBotTurn,
    OutOfTurn,
    SalesimError,
    TerminalState,
    UnknownCategory,
    UnknownProfile,
)
from .orchestrator import (
    Conversation,
    SessionConfig,
    SessionManager,
    Status,
    compute_stats,
)
from .retrieval import search
from .seller import Variant

ROLES = ("seller", "shopper", "observer")

_NOT_FOUND = (UnknownCategory, UnknownProfile)
_CONFLICT = (OutOfTurn, TerminalState, NotBotTurn, NoPendingRecommendation,
             MalformedRecommendationBlock)


def sign_role(secret: str, cid: str, role: str) -> str:
    sig = hmac.new(secret.encode(), f"{cid}:{role}".encode(),
                   hashlib.sha256).hexdigest()[:20]
    return f"{role}.{sig}"


def resolve_role(secret: str, cid: str, token: str) -> str | None:
    if "." not in token:
        return None
    role, _ = token.split(".", 1)
    if role not in ROLES:
        return None
    if hmac.compare_digest(token, sign_role(secret, cid, role)):
        return role
    return None


# --------------------------------------------------------------------------
# Role-filtered views
# --------------------------------------------------------------------------

def visible_records(conv: Conversation, role: str) -> list[dict]:
    """The transcript slice a role may see, as JSON-able dicts.

    observer: everything. seller: no revelation events, no genesis.
    shopper: no genesis, no seller metadata — only utterances, coordinator
    reveals, recommendations and decisions.
    """
    out = []
    for record in conv.records:
        if role != "observer" and record.kind == "session":
            continue
        if role == "seller" and record.kind == "revelation":
            continue
        data = {"cid": record.cid, "seq": record.seq, "kind": record.kind,
                "role": record.role, "utterance": record.utterance,
                "meta": dict(record.meta)}
        if role == "shopper" and record.kind == "turn":
            data["meta"] = {}
        out.append(data)
    return out


def session_view(manager: SessionManager, conv: Conversation,
                 role: str) -> dict:
    session = manager.session(conv.cid)
    view: dict = {
        "cid": conv.cid,
        "category": conv.category,
        "status": conv.status.value,
        "role": role,
        "seller_kind": conv.seller_kind,
        "shopper_kind": conv.shopper_kind,
        "next_role": conv.next_role() if conv.status is Status.ACTIVE else None,
        "records": visible_records(conv, role),
    }
    if conv.pending is not None:
        view["pending_recommendation"] = {
            "turn_index": conv.pending.turn_index,
            "products": [product_to_json(session.content.catalog.get(pid))
                         for pid in conv.pending.product_ids]}
    else:
        view["pending_recommendation"] = None
    if role == "shopper":
        view["revealed_preferences"] = [
            {"qid": r.qid, "question": r.question, "option": r.option}
            for r in session.revelation.revealed_pairs()]
    if role in ("seller", "observer"):
        view["guide"] = f"/v1/guide/{conv.category}"
        view["catalog"] = f"/v1/catalog/{conv.category}"
        view["catalog_search"] = f"/v1/catalog/{conv.category}/search"
    return view


# --------------------------------------------------------------------------
# Request bodies
# --------------------------------------------------------------------------

class StartSessionBody(BaseModel):
    category: str
    profile: str
    seller_kind: str = "bot"
    shopper_kind: str = "bot"
    variant: str = "full"
    seed: int | None = None
    max_turns: int = 40


class MessageBody(BaseModel):
    role: str  # signed token
    utterance: str
    grounded_paragraphs: list[int] | None = None
    recommended_products: list[str] | None = None


class DecisionBody(BaseModel):
    role: str  # signed token
    decision: str
    product_id: str | None = None


class AnnotationBody(BaseModel):
    records: list[dict] = Field(default_factory=list)


# --------------------------------------------------------------------------
# App factory
# --------------------------------------------------------------------------

def create_app(manager: SessionManager, *, secret: str = "dev-secret",
               nli_provider: evaluation.NliProvider | None = None,
               judge=None, faithfulness_judge=None,
               static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="salesim", version="0.1.0")
    nli = nli_provider or evaluation.LexicalContainmentNli()
    faith = faithfulness_judge
    reports: dict[str, dict] = {}
    annotations: list[dict] = []

    def error(code: str, message: str, status: int) -> JSONResponse:
        return JSONResponse({"code": code, "message": message},
                            status_code=status)

    @app.exception_handler(SalesimError)
    async def _domain_error(request: Request, exc: SalesimError):
        if isinstance(exc, _NOT_FOUND):
            return error(type(exc).__name__, str(exc), 404)
        if isinstance(exc, _CONFLICT):
            return error(type(exc).__name__, str(exc), 409)
        return error(type(exc).__name__, str(exc), 400)

    @app.exception_handler(KeyError)
    async def _missing(request: Request, exc: KeyError):
        return error("NotFound", f"unknown id {exc}", 404)

    def _conv(cid: str) -> Conversation:
        return manager.conversation(cid)

    def _role_or_403(cid: str, token: str):
        role = resolve_role(secret, cid, token)
        if role is None:
            return None
        return role

    # -- sessions --------------------------------------------------------

    @app.post("/v1/sessions")
    def start_session(body: StartSessionBody):
        conv = manager.start_session(SessionConfig(
            category=body.category, profile=body.profile,
            seller_kind=body.seller_kind, shopper_kind=body.shopper_kind,
            variant=Variant(body.variant), seed=body.seed,
            max_turns=body.max_turns))
        return {
            "cid": conv.cid,
            "status": conv.status.value,
            "tokens": {role: sign_role(secret, conv.cid, role)
                       for role in ROLES},
        }

    @app.get("/v1/sessions/{cid}")
    def get_session(cid: str, role: str = Query(...)):
        conv = _conv(cid)
        resolved = _role_or_403(cid, role)
        if resolved is None:
            return error("Forbidden", "invalid role token", 403)
        return session_view(manager, conv, resolved)

    @app.post("/v1/sessions/{cid}/messages")
    def post_message(cid: str, body: MessageBody):
        conv = _conv(cid)
        resolved = _role_or_403(cid, body.role)
        if resolved is None or resolved == "observer":
            return error("Forbidden", "invalid role token", 403)
        manager.submit_human_message(
            conv, resolved, body.utterance,
            grounded_paragraphs=body.grounded_paragraphs,
            recommended_products=body.recommended_products)
        manager.run_bots(conv)
        return session_view(manager, conv, resolved)

    @app.post("/v1/sessions/{cid}/decision")
    def post_decision(cid: str, body: DecisionBody):
        conv = _conv(cid)
        resolved = _role_or_403(cid, body.role)
        if resolved is None or resolved == "observer":
            return error("Forbidden", "invalid role token", 403)
        manager.submit_human_decision(conv, resolved, body.decision,
                                      product_id=body.product_id)
        manager.run_bots(conv)
        return session_view(manager, conv, resolved)

    @app.post("/v1/sessions/{cid}/step")
    def step_session(cid: str, role: str = Query(...)):
        conv = _conv(cid)
        resolved = _role_or_403(cid, role)
        if resolved is None:
            return error("Forbidden", "invalid role token", 403)
        manager.step(conv)
        return session_view(manager, conv, resolved)

    @app.get("/v1/sessions/{cid}/stream")
    def stream_session(cid: str, role: str = Query(...),
                       since: int = Query(0)):
        conv = _conv(cid)
        resolved = _role_or_403(cid, role)
        if resolved is None:
            return error("Forbidden", "invalid role token", 403)
        session = manager.session(cid)

        def event_feed() -> Iterator[str]:
            sent: set[int] = set()
            cursor = since
            while True:
                visible = [r for r in visible_records(conv, resolved)
                           if r["seq"] >= cursor and r["seq"] not in sent]
                for item in visible:
                    sent.add(item["seq"])
                    yield f"data: {json.dumps(item, sort_keys=True)}\n\n"
                if conv.status is not Status.ACTIVE:
                    yield "event: end\ndata: {}\n\n"
                    return
                with session.changed:
                    session.changed.wait(timeout=0.25)

        return StreamingResponse(event_feed(), media_type="text/event-stream")

    @app.get("/v1/sessions/{cid}/stats")
    def session_stats(cid: str):
        conv = _conv(cid)
        stats = compute_stats(conv)
        return {"cid": cid, "status": conv.status.value,
                "mean_seller_words": stats.mean_seller_words,
                "mean_shopper_words": stats.mean_shopper_words,
                "n_turns": stats.n_turns,
                "turns_before_first_rec": stats.turns_before_first_rec,
                "n_recommendations": stats.n_recommendations,
                "n_revelations": stats.n_revelations}

    # -- content -----------------------------------------------------------

    @app.get("/v1/guide/{category}")
    def get_guide(category: str):
        guide = manager.workspace.get(category).guide
        return {"category": guide.category, "title": guide.title,
                "paragraphs": [{"index": i, "text": t}
                               for i, t in guide.paragraphs]}

    @app.get("/v1/catalog/{category}")
    def get_catalog(category: str):
        catalog = manager.workspace.get(category).catalog
        return {"category": catalog.category,
                "products": [product_to_json(p) for p in catalog.products]}

    @app.get("/v1/catalog/{category}/search")
    def search_catalog(category: str, q: str = Query(...),
                       k: int = Query(4, ge=1), cid: str | None = None):
        indexes = manager.workspace.indexes(category)
        hits = search(indexes.products, q, k, indexes.provider)
        manager.log_product_query(category, q, k,
                                  [pid for pid, _ in hits], cid=cid)
        catalog = manager.workspace.get(category).catalog
        return {"query": q, "results": [
            {**product_to_json(catalog.get(pid)), "score": score}
            for pid, score in hits]}

    # -- evaluation ----------------------------------------------------------

    @app.post("/v1/eval/{cid}")
    def evaluate_session(cid: str):
        conv = _conv(cid)
        session = manager.session(cid)
        profile = session.revelation.profile
        report = evaluation.evaluate_conversation(
            conv, profile, session.content.guide, session.content.catalog,
            nli_provider=nli, judge=judge, quiz=session.content.quiz,
            faithfulness_judge=faith)
        data = evaluation.report_to_json(report)
        reports[cid] = data
        return data

    @app.get("/v1/reports")
    def get_reports():
        return {"reports": [reports[cid] for cid in sorted(reports)]}

    @app.post("/v1/annotations")
    def post_annotations(body: AnnotationBody):
        required = {"cid", "metric", "value", "annotator"}
        for record in body.records:
            if not required.issubset(record):
                return error("InvalidAnnotation",
                             f"annotation needs fields {sorted(required)}", 422)
        annotations.extend(body.records)
        return {"accepted": len(body.records), "total": len(annotations)}

    @app.get("/v1/annotations")
    def get_annotations():
        return {"annotations": annotations}

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="ui")

    return app
