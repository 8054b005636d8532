from __future__ import annotations

import json

import pytest

from salesim.content import PreferenceProfile, ingest_buying_guide
from salesim.errors import UnannotatedProfile, UnparseableJudgeAnswer
from salesim.evaluation import (
    AblationConfig,
    Annotation,
    EvaluationReport,
    GroundedSentenceJudge,
    LexicalContainmentNli,
    LlmFaithfulnessJudge,
    aggregate_reports,
    apply_annotations,
    evaluate_conversation,
    faithfulness_check,
    fluency_judge,
    format_table,
    informativeness_entailment,
    quiz_score,
    read_annotations_csv,
    recommendation_accuracy,
    reports_to_jsonl,
    rows_to_csv,
    run_ablation,
)
from salesim.orchestrator import SessionBindings, SessionManager
from salesim.seller import Variant
from tests.conftest import demo_script, fixture_conversation, ordinal_client

ANNOTATED = PreferenceProfile("pr", "coffee-makers", (("q1", "2-4"),),
                              acceptable_products=frozenset({"cm-01", "cm-02"}))


def accepted_conv(pid: str, cid: str = "conv-1"):
    return fixture_conversation(cid, [
        ("turn", "shopper", "Hi, I need a coffee maker."),
        ("turn", "seller", "Try this one."),
        ("rec", [pid]),
        ("turn", "shopper", "Sounds good."),
        ("dec", "accept", pid),
    ])


# --------------------------------------------------------------------------
# Recommendation accuracy
# --------------------------------------------------------------------------

def test_rec_accepted_in_set():
    assert recommendation_accuracy(accepted_conv("cm-01"), ANNOTATED) == 1


def test_rec_accepted_outside_set():
    assert recommendation_accuracy(accepted_conv("cm-04"), ANNOTATED) == 0


def test_rec_exhausted_is_zero():
    conv = fixture_conversation("conv-2", [
        ("turn", "shopper", "hello"),
        ("turn", "seller", "hi"),
        ("status", "exhausted"),
    ])
    assert recommendation_accuracy(conv, ANNOTATED) == 0


def test_rec_requires_annotation():
    bare = PreferenceProfile("pr", "c", (("q1", "a"),))
    with pytest.raises(UnannotatedProfile):
        recommendation_accuracy(accepted_conv("cm-01"), bare)


def test_rec_invariant_to_rewording():
    first = accepted_conv("cm-01")
    reworded = fixture_conversation("conv-3", [
        ("turn", "shopper", "completely different text"),
        ("turn", "seller", "other words entirely"),
        ("rec", ["cm-01"]),
        ("turn", "shopper", "yet another phrasing"),
        ("dec", "accept", "cm-01"),
    ])
    assert recommendation_accuracy(first, ANNOTATED) == \
        recommendation_accuracy(reworded, ANNOTATED) == 1


# --------------------------------------------------------------------------
# Informativeness (entailment coverage)
# --------------------------------------------------------------------------

def fifty_paragraph_guide():
    blocks = [f"Guide paragraph number {i} with facts." for i in range(50)]
    return ingest_buying_guide("\n\n".join(blocks), "c")


def test_inf_e_containment_fraction():
    guide = fifty_paragraph_guide()
    copied = [text for _, text in guide.paragraphs[:5]]
    conv = fixture_conversation("conv-4", [
        ("turn", "shopper", "hi"),
        ("turn", "seller", " ".join(copied[:2])),
        ("turn", "shopper", "go on"),
        ("turn", "seller", " ".join(copied[2:])),
    ])
    score = informativeness_entailment(conv, guide, LexicalContainmentNli())
    assert score == 5 / 50


def test_inf_e_empty_seller_side_is_zero():
    conv = fixture_conversation("conv-5", [("turn", "shopper", "hello?")])
    assert informativeness_entailment(conv, fifty_paragraph_guide(),
                                      LexicalContainmentNli()) == 0.0


def test_inf_e_monotone_in_seller_content():
    guide = fifty_paragraph_guide()
    paragraphs = [text for _, text in guide.paragraphs]
    nli = LexicalContainmentNli()
    steps = [
        ("turn", "shopper", "hi"),
        ("turn", "seller", paragraphs[0]),
    ]
    previous = informativeness_entailment(
        fixture_conversation("conv-6", steps), guide, nli)
    for i in range(1, 6):
        steps = steps + [("turn", "shopper", f"more {i}"),
                         ("turn", "seller", paragraphs[i])]
        current = informativeness_entailment(
            fixture_conversation("conv-6", steps), guide, nli)
        assert current >= previous
        previous = current


# --------------------------------------------------------------------------
# Quiz
# --------------------------------------------------------------------------

def test_quiz_all_correct(workspace, gateway):
    quiz = workspace.get("coffee-makers").quiz
    judge = ordinal_client(gateway, [item.answer for item in quiz.items])
    conv = accepted_conv("cm-01")
    assert quiz_score(conv, quiz, judge) == 1.0


def test_quiz_abstentions_count_incorrect(workspace, gateway):
    quiz = workspace.get("coffee-makers").quiz
    judge = ordinal_client(
        gateway, ["Cannot answer based on the conversation"] * 3)
    assert quiz_score(accepted_conv("cm-01"), quiz, judge) == 0.0


def test_quiz_partial_score(workspace, gateway):
    quiz = workspace.get("coffee-makers").quiz
    answers = [quiz.items[0].answer,
               "Cannot answer based on the conversation",
               quiz.items[2].answer]
    judge = ordinal_client(gateway, answers)
    assert quiz_score(accepted_conv("cm-01"), quiz, judge) == pytest.approx(2 / 3)


def test_quiz_unparseable_judge(workspace, gateway):
    quiz = workspace.get("coffee-makers").quiz
    judge = ordinal_client(gateway, ["perhaps maybe"])
    with pytest.raises(UnparseableJudgeAnswer):
        quiz_score(accepted_conv("cm-01"), quiz, judge)


# --------------------------------------------------------------------------
# Fluency
# --------------------------------------------------------------------------

def test_fluency_parse(gateway):
    judge = ordinal_client(gateway, ["5 / human"])
    assert fluency_judge(accepted_conv("cm-01"), judge) == (5, True)
    judge = ordinal_client(gateway, ["3 / bot"])
    assert fluency_judge(accepted_conv("cm-01"), judge) == (3, False)


def test_fluency_out_of_range(gateway):
    judge = ordinal_client(gateway, ["6"])
    with pytest.raises(UnparseableJudgeAnswer):
        fluency_judge(accepted_conv("cm-01"), judge)


def test_fluency_missing_verdict(gateway):
    judge = ordinal_client(gateway, ["4"])
    with pytest.raises(UnparseableJudgeAnswer):
        fluency_judge(accepted_conv("cm-01"), judge)


# --------------------------------------------------------------------------
# Faithfulness
# --------------------------------------------------------------------------

def test_llm_judge_structured_finding(workspace, gateway):
    content = workspace.get("coffee-makers")
    response = json.dumps({
        "claim": "the Cuisinart DCC-3200P1 has a hot water dispenser",
        "explanation": "the document does not mention a hot water dispenser",
        "turn_index": 3})
    judge = LlmFaithfulnessJudge(ordinal_client(gateway, [response]))
    findings = faithfulness_check(accepted_conv("cm-01"), content.guide,
                                  content.catalog, judge)
    assert len(findings) == 1
    assert "hot water dispenser" in findings[0].claim
    assert findings[0].turn_index == 3


def test_llm_judge_none(workspace, gateway):
    content = workspace.get("coffee-makers")
    judge = LlmFaithfulnessJudge(ordinal_client(gateway, ["NONE"]))
    assert faithfulness_check(accepted_conv("cm-01"), content.guide,
                              content.catalog, judge) == []


def test_grounded_by_construction_has_zero_findings(workspace):
    content = workspace.get("coffee-makers")
    paragraphs = [text for _, text in content.guide.paragraphs]
    conv = fixture_conversation("conv-7", [
        ("turn", "shopper", "hi"),
        ("turn", "seller", paragraphs[2]),
        ("turn", "shopper", "tell me more"),
        ("turn", "seller", paragraphs[3]),
    ])
    findings = faithfulness_check(conv, content.guide, content.catalog,
                                  GroundedSentenceJudge())
    assert findings == []


def test_grounded_judge_flags_invented_sentence(workspace):
    content = workspace.get("coffee-makers")
    conv = fixture_conversation("conv-8", [
        ("turn", "shopper", "hi"),
        ("turn", "seller", "This machine also dispenses soft-serve ice cream."),
    ])
    findings = faithfulness_check(conv, content.guide, content.catalog,
                                  GroundedSentenceJudge())
    assert len(findings) == 1
    assert findings[0].turn_index == 1


# --------------------------------------------------------------------------
# Report ranges / aggregation
# --------------------------------------------------------------------------

def test_report_range_validation():
    with pytest.raises(ValueError):
        EvaluationReport(cid="x", rec=2, inf_e=0.5)
    with pytest.raises(ValueError):
        EvaluationReport(cid="x", rec=1, inf_e=1.5)
    with pytest.raises(ValueError):
        EvaluationReport(cid="x", rec=1, inf_e=0.5, flu_e=0.5)


def test_aggregate_is_arithmetic_mean():
    reports = [EvaluationReport(cid=f"c{i}", rec=i % 2, inf_e=i / 10,
                                flu_e=1.0 + i, flu_i=bool(i % 2))
               for i in range(4)]
    row = aggregate_reports("full", reports)
    assert row.rec == sum(r.rec for r in reports) / 4
    assert row.inf_e == sum(r.inf_e for r in reports) / 4
    assert row.flu_e == sum(r.flu_e for r in reports) / 4
    assert row.flu_i == 0.5
    assert row.n == 4


def test_evaluate_conversation_bundle(workspace, gateway):
    content = workspace.get("coffee-makers")
    profile = content.profile("prof-01")
    conv = accepted_conv("cm-01")
    judge = ordinal_client(gateway, ["4 / human",
                                     *[i.answer for i in content.quiz.items]])
    report = evaluate_conversation(
        conv, profile, content.guide, content.catalog,
        nli_provider=LexicalContainmentNli(), judge=judge,
        quiz=content.quiz, faithfulness_judge=GroundedSentenceJudge())
    assert report.rec == 1
    assert report.flu_e == 4.0 and report.flu_i is True
    assert report.inf_q == 1.0
    assert 0.0 <= report.inf_e <= 1.0
    assert len(report.faithfulness_findings) > 0  # scripted chat is ungrounded


# --------------------------------------------------------------------------
# Ablation runner
# --------------------------------------------------------------------------

def run_scripted_ablation(workspace, seed: int):
    gateway_local = __import__("salesim.gateway", fromlist=["Gateway"]) \
        .Gateway(sleep=lambda _s: None)
    manager = SessionManager(workspace, gateway_local)
    nli = LexicalContainmentNli()

    def factory(variant: Variant, i: int) -> SessionBindings:
        binding = gateway_local.register_ordinal_script(
            demo_script(variant=variant))
        return SessionBindings(seller=binding, shopper=binding,
                               response=binding)

    def evaluator(conv):
        session = manager.session(conv.cid)
        judge = ordinal_client(gateway_local, ["5 / human"])
        return evaluate_conversation(
            conv, session.revelation.profile, session.content.guide,
            session.content.catalog, nli_provider=nli, judge=judge)

    config = AblationConfig(
        variants=(Variant.FULL, Variant.RULE_AD), n_per_variant=3,
        categories=("coffee-makers",), seed=seed, binding_factory=factory)
    return run_ablation(manager, config, evaluator)


def test_ablation_two_variants_three_runs(workspace):
    rows, reports = run_scripted_ablation(workspace, seed=5)
    assert [row.variant for row in rows] == ["rule_ad", "full"]  # table order
    assert all(row.n == 3 for row in rows)
    assert len(reports) == 6
    for row, chunk in zip(rows, [reports[:3], reports[3:]]):
        assert row.rec == sum(r.rec for r in chunk) / 3
        assert row.inf_e == pytest.approx(sum(r.inf_e for r in chunk) / 3)


def test_ablation_deterministic_reports(workspace):
    _, first = run_scripted_ablation(workspace, seed=9)
    _, second = run_scripted_ablation(workspace, seed=9)
    assert reports_to_jsonl(first) == reports_to_jsonl(second)


def test_table_and_csv_shapes():
    rows = [aggregate_reports("full", [
        EvaluationReport(cid="a", rec=1, inf_e=0.5, flu_e=5.0, flu_i=True)])]
    table = format_table(rows)
    assert "Flu_e" in table and "Rec" in table
    assert "full" in table
    csv_text = rows_to_csv(rows)
    assert csv_text.splitlines()[0] == "variant,flu_e,flu_i,inf_e,rec,n"


# --------------------------------------------------------------------------
# Human annotation import
# --------------------------------------------------------------------------

def test_annotation_csv_round_trip(tmp_path):
    path = tmp_path / "annotations.csv"
    path.write_text("cid,metric,value,annotator\n"
                    "conv-1,flu_e,4,w1\n"
                    "conv-1,flu_e,5,w2\n"
                    "conv-1,flu_i,1,w1\n"
                    "conv-1,inf_q,0.667,w1\n", encoding="utf-8")
    annotations = read_annotations_csv(path)
    assert annotations[0] == Annotation("conv-1", "flu_e", 4.0, "w1")
    report = EvaluationReport(cid="conv-1", rec=1, inf_e=0.2)
    merged = apply_annotations(report, annotations)
    assert merged.flu_e == 4.5
    assert merged.flu_i is True
    assert merged.inf_q == pytest.approx(0.667)
    assert merged.rec == 1 and merged.inf_e == 0.2  # untouched
