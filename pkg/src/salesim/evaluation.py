"""Seller evaluation: recommendation accuracy, informativeness (entailment
coverage and quiz), fluency judging, faithfulness findings, and the ablation
runner that aggregates them per variant.

Judged metrics accept either a model judge (through the gateway) or recorded
human annotations imported from CSV. Deterministic oracle implementations
(lexical containment NLI, grounded-sentence faithfulness) keep everything
testable offline.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .content import BuyingGuide, PreferenceProfile, ProductCatalog, product_search_text
from .errors import UnannotatedProfile, UnparseableJudgeAnswer
from .gateway import BoundClient, user_request
from .orchestrator import (
    Conversation,
    SessionBindings,
    SessionConfig,
    SessionManager,
    Status,
)
from .prompts import load_template, render
from .seller import VARIANT_TABLE_ORDER, Variant


# --------------------------------------------------------------------------
# Report types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FaithfulnessFinding:
    claim: str
    explanation: str
    turn_index: int


@dataclass(frozen=True)
class EvaluationReport:
    cid: str
    rec: int
    inf_e: float
    inf_q: float | None = None
    flu_e: float | None = None
    flu_i: bool | None = None
    faithfulness_findings: tuple[FaithfulnessFinding, ...] = ()

    def __post_init__(self) -> None:
        if self.rec not in (0, 1):
            raise ValueError("rec must be 0 or 1")
        if not 0.0 <= self.inf_e <= 1.0:
            raise ValueError("inf_e must be in [0, 1]")
        if self.inf_q is not None and not 0.0 <= self.inf_q <= 1.0:
            raise ValueError("inf_q must be in [0, 1]")
        if self.flu_e is not None and not 1.0 <= self.flu_e <= 5.0:
            raise ValueError("flu_e must be in [1, 5]")


@dataclass(frozen=True)
class AblationRow:
    variant: str
    flu_e: float
    flu_i: float
    inf_e: float
    rec: float
    n: int


# --------------------------------------------------------------------------
# Recommendation accuracy
# --------------------------------------------------------------------------

def recommendation_accuracy(conv: Conversation,
                            profile: PreferenceProfile) -> int:
    """1 iff the conversation ended accepted on a ground-truth-acceptable
    product; exhausted/aborted conversations score 0."""
    if profile.acceptable_products is None:
        raise UnannotatedProfile(f"profile {profile.pid} is not annotated")
    if conv.status is not Status.ACCEPTED or conv.accepted_product is None:
        return 0
    return 1 if conv.accepted_product in profile.acceptable_products else 0


# --------------------------------------------------------------------------
# Informativeness — entailment coverage
# --------------------------------------------------------------------------

class NliProvider(Protocol):
    def score(self, premise: str, hypothesis: str) -> float: ...


class LexicalContainmentNli:
    """Oracle NLI: 1.0 when the hypothesis appears verbatim (whitespace-
    normalized) inside the premise, else 0.0."""

    @staticmethod
    def _norm(text: str) -> str:
        return " ".join(text.split())

    def score(self, premise: str, hypothesis: str) -> float:
        return 1.0 if self._norm(hypothesis) in self._norm(premise) else 0.0


class TokenOverlapNli:
    """Heuristic NLI for live runs without a hosted model: the fraction of
    hypothesis tokens that appear in the premise."""

    def score(self, premise: str, hypothesis: str) -> float:
        premise_tokens = set(re.findall(r"[a-z0-9]+", premise.lower()))
        hypothesis_tokens = re.findall(r"[a-z0-9]+", hypothesis.lower())
        if not hypothesis_tokens:
            return 0.0
        hit = sum(1 for tok in hypothesis_tokens if tok in premise_tokens)
        return hit / len(hypothesis_tokens)


ENTAILMENT_CUTOFF = 0.5


def informativeness_entailment(conv: Conversation, guide: BuyingGuide,
                               nli_provider: NliProvider) -> float:
    """Guide coverage: the fraction of guide paragraphs entailed by at least
    one seller utterance (max over utterances, cutoff 0.5).

    Direction note: the score base is guide paragraphs, so appending seller
    content can only raise it. The converse (utterance precision) can be
    swapped in here if a deployment needs it; this is the single place the
    direction is fixed.
    """
    seller_utterances = [t.utterance for t in conv.turns if t.role == "seller"]
    if not seller_utterances or not guide.paragraphs:
        return 0.0
    covered = 0
    for _, paragraph in guide.paragraphs:
        best = max(nli_provider.score(utterance, paragraph)
                   for utterance in seller_utterances)
        if best >= ENTAILMENT_CUTOFF:
            covered += 1
    return covered / len(guide.paragraphs)


# --------------------------------------------------------------------------
# Informativeness — knowledge quiz
# --------------------------------------------------------------------------

ABSTAIN = "Cannot answer based on the conversation"


def render_transcript(conv: Conversation) -> str:
    labels = {"seller": "Salesperson", "shopper": "Shopper"}
    return "\n".join(f"[{t.index}] {labels[t.role]}: {t.utterance}"
                     for t in conv.turns)


def quiz_score(conv: Conversation, quiz, judge: BoundClient) -> float:
    """The judge answers each item from the transcript alone; abstentions
    count as incorrect. Score = correct / 3."""
    correct = 0
    for item in quiz.items:
        options = list(item.options) + [ABSTAIN]
        prompt = render(load_template("judge_quiz_v1"),
                        transcript=render_transcript(conv),
                        statement=item.statement,
                        options=" / ".join(options))
        answer = judge.complete(user_request(prompt, max_tokens=32),
                                tag="judge_quiz").strip().strip(".")
        matched = _match_option(answer, options)
        if matched is None:
            raise UnparseableJudgeAnswer(
                f"quiz judge answered {answer!r}, expected one of {options}")
        if matched == item.answer:
            correct += 1
    return correct / len(quiz.items)


def _match_option(answer: str, options: Sequence[str]) -> str | None:
    folded = answer.strip().lower()
    for option in options:
        if folded == option.lower():
            return option
    # Allow an answer that starts with the option, e.g. "True." or
    # "False - the guide says ...".
    for option in options:
        if folded.startswith(option.lower()):
            return option
    return None


# --------------------------------------------------------------------------
# Fluency
# --------------------------------------------------------------------------

_RATING_RE = re.compile(r"\b([0-9]+)\b")


def fluency_judge(conv: Conversation, judge: BoundClient) -> tuple[int, bool]:
    """Two judged answers from one call: rating 1-5 and human/bot guess."""
    if not conv.turns:
        raise ValueError("cannot judge an empty conversation")
    prompt = render(load_template("judge_fluency_v1"),
                    transcript=render_transcript(conv))
    answer = judge.complete(user_request(prompt, max_tokens=16),
                            tag="judge_fluency").strip()
    match = _RATING_RE.search(answer)
    if not match:
        raise UnparseableJudgeAnswer(f"no rating in {answer!r}")
    rating = int(match.group(1))
    if not 1 <= rating <= 5:
        raise UnparseableJudgeAnswer(f"rating {rating} outside 1-5")
    lowered = answer.lower()
    is_human = bool(re.search(r"\bhuman\b", lowered))
    is_bot = bool(re.search(r"\bbot\b", lowered))
    if is_human == is_bot:
        raise UnparseableJudgeAnswer(f"no human/bot verdict in {answer!r}")
    return rating, is_human


# --------------------------------------------------------------------------
# Faithfulness
# --------------------------------------------------------------------------

class FaithfulnessJudge(Protocol):
    def review(self, conv: Conversation, guide: BuyingGuide,
               catalog: ProductCatalog) -> list[FaithfulnessFinding]: ...


class LlmFaithfulnessJudge:
    """Prompts a judge with guide + catalog + transcript; parses JSON-line
    findings."""

    def __init__(self, judge: BoundClient):
        self.judge = judge

    def review(self, conv: Conversation, guide: BuyingGuide,
               catalog: ProductCatalog) -> list[FaithfulnessFinding]:
        catalog_text = "\n\n".join(product_search_text(p)
                                   for p in catalog.products)
        prompt = render(load_template("judge_faithfulness_v1"),
                        guide=guide.text(), catalog=catalog_text,
                        transcript=render_transcript(conv))
        answer = self.judge.complete(user_request(prompt, max_tokens=1024),
                                     tag="judge_faithfulness").strip()
        if answer.upper().startswith("NONE"):
            return []
        findings = []
        for line in answer.splitlines():
            line = line.strip().strip("`").rstrip(",")
            if not (line.startswith("{") and line.endswith("}")):
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError:
                continue
            if "claim" in data:
                findings.append(FaithfulnessFinding(
                    claim=str(data["claim"]),
                    explanation=str(data.get("explanation", "")),
                    turn_index=int(data.get("turn_index", -1))))
        if not findings:
            raise UnparseableJudgeAnswer(
                f"faithfulness judge returned neither NONE nor findings: "
                f"{answer[:120]!r}")
        return findings


class GroundedSentenceJudge:
    """Deterministic oracle: flags seller sentences that appear nowhere in
    the guide or the catalog text (whitespace-normalized containment)."""

    @staticmethod
    def _norm(text: str) -> str:
        return " ".join(text.split())

    def review(self, conv: Conversation, guide: BuyingGuide,
               catalog: ProductCatalog) -> list[FaithfulnessFinding]:
        source = self._norm(guide.text() + " " + " ".join(
            product_search_text(p) for p in catalog.products))
        findings = []
        for turn in conv.turns:
            if turn.role != "seller":
                continue
            for sentence in re.split(r"(?<=[.!?])\s+", turn.utterance):
                sentence = sentence.strip()
                if sentence and self._norm(sentence) not in source:
                    findings.append(FaithfulnessFinding(
                        claim=sentence,
                        explanation="not supported by the guide or catalog",
                        turn_index=turn.index))
        return findings


def faithfulness_check(conv: Conversation, guide: BuyingGuide,
                       catalog: ProductCatalog,
                       judge: FaithfulnessJudge) -> list[FaithfulnessFinding]:
    return judge.review(conv, guide, catalog)


# --------------------------------------------------------------------------
# Whole-conversation evaluation
# --------------------------------------------------------------------------

def evaluate_conversation(conv: Conversation, profile: PreferenceProfile,
                          guide: BuyingGuide, catalog: ProductCatalog,
                          *, nli_provider: NliProvider,
                          judge: BoundClient | None = None,
                          quiz=None,
                          faithfulness_judge: FaithfulnessJudge | None = None,
                          ) -> EvaluationReport:
    flu_e = flu_i = inf_q = None
    if judge is not None:
        rating, is_human = fluency_judge(conv, judge)
        flu_e, flu_i = float(rating), is_human
        if quiz is not None:
            inf_q = quiz_score(conv, quiz, judge)
    findings: tuple[FaithfulnessFinding, ...] = ()
    if faithfulness_judge is not None:
        findings = tuple(faithfulness_check(conv, guide, catalog,
                                            faithfulness_judge))
    return EvaluationReport(
        cid=conv.cid,
        rec=recommendation_accuracy(conv, profile),
        inf_e=informativeness_entailment(conv, guide, nli_provider),
        inf_q=inf_q, flu_e=flu_e, flu_i=flu_i,
        faithfulness_findings=findings)


# --------------------------------------------------------------------------
# Ablation runner
# --------------------------------------------------------------------------

BindingFactory = Callable[[Variant, int], SessionBindings]


@dataclass(frozen=True)
class AblationConfig:
    variants: tuple[Variant, ...]
    n_per_variant: int
    categories: tuple[str, ...]
    seed: int = 0
    max_turns: int = 40
    binding_factory: BindingFactory | None = None


def run_ablation(manager: SessionManager, config: AblationConfig,
                 evaluator: Callable[[Conversation], EvaluationReport],
                 ) -> tuple[list[AblationRow], list[EvaluationReport]]:
    """Run N bot-bot conversations per variant and aggregate the four
    headline metrics. Rows come back in the canonical table order."""
    rows: list[AblationRow] = []
    all_reports: list[EvaluationReport] = []
    ordered = [v for v in VARIANT_TABLE_ORDER if v in config.variants]
    for variant in ordered:
        reports = []
        for i in range(config.n_per_variant):
            category = config.categories[i % len(config.categories)]
            content = manager.workspace.get(category)
            profile = content.profiles[i % len(content.profiles)]
            bindings = (config.binding_factory(variant, i)
                        if config.binding_factory else SessionBindings())
            conv = manager.start_session(SessionConfig(
                category=category, profile=profile.pid,
                variant=variant, seed=config.seed + i,
                max_turns=config.max_turns,
                cid=f"abl-{variant.value}-{config.seed}-{i:03d}",
                bindings=bindings))
            manager.run_bots(conv)
            reports.append(evaluator(conv))
        rows.append(aggregate_reports(variant.value, reports))
        all_reports.extend(reports)
    return rows, all_reports


def aggregate_reports(variant: str,
                      reports: Sequence[EvaluationReport]) -> AblationRow:
    n = len(reports)
    if n == 0:
        return AblationRow(variant, 0.0, 0.0, 0.0, 0.0, 0)
    return AblationRow(
        variant=variant,
        flu_e=sum(r.flu_e or 0.0 for r in reports) / n,
        flu_i=sum(1.0 for r in reports if r.flu_i) / n,
        inf_e=sum(r.inf_e for r in reports) / n,
        rec=sum(r.rec for r in reports) / n,
        n=n)


# --------------------------------------------------------------------------
# Export / import
# --------------------------------------------------------------------------

def report_to_json(report: EvaluationReport) -> dict:
    return {
        "cid": report.cid, "rec": report.rec, "inf_e": report.inf_e,
        "inf_q": report.inf_q, "flu_e": report.flu_e, "flu_i": report.flu_i,
        "faithfulness_findings": [
            {"claim": f.claim, "explanation": f.explanation,
             "turn_index": f.turn_index}
            for f in report.faithfulness_findings]}


def reports_to_jsonl(reports: Iterable[EvaluationReport]) -> str:
    return "\n".join(json.dumps(report_to_json(r), sort_keys=True,
                                separators=(",", ":"))
                     for r in reports)


def rows_to_csv(rows: Sequence[AblationRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["variant", "flu_e", "flu_i", "inf_e", "rec", "n"])
    for row in rows:
        writer.writerow([row.variant, f"{row.flu_e:.4f}", f"{row.flu_i:.4f}",
                         f"{row.inf_e:.4f}", f"{row.rec:.4f}", row.n])
    return buffer.getvalue()


def format_table(rows: Sequence[AblationRow]) -> str:
    """Plain-text aggregate table in the canonical column order."""
    header = f"{'variant':<12} {'Flu_e':>6} {'Flu_i':>6} {'Inf_e':>6} {'Rec':>6}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(f"{row.variant:<12} {row.flu_e:>6.2f} {row.flu_i:>6.2f} "
                     f"{row.inf_e:>6.2f} {row.rec:>6.2f}")
    return "\n".join(lines)


@dataclass(frozen=True)
class Annotation:
    cid: str
    metric: str
    value: float
    annotator: str


def read_annotations_csv(path: str | Path) -> list[Annotation]:
    """CSV columns: cid, metric, value, annotator."""
    reader = csv.DictReader(io.StringIO(Path(path).read_text(encoding="utf-8")))
    return [Annotation(cid=row["cid"], metric=row["metric"],
                       value=float(row["value"]), annotator=row["annotator"])
            for row in reader]


def apply_annotations(report: EvaluationReport,
                      annotations: Sequence[Annotation]) -> EvaluationReport:
    """Override judged metrics with the mean of human annotations for the
    same conversation; other metrics are untouched."""
    mine = [a for a in annotations if a.cid == report.cid]
    values: dict[str, list[float]] = {}
    for annotation in mine:
        values.setdefault(annotation.metric, []).append(annotation.value)
    updated = report
    if "flu_e" in values:
        mean = sum(values["flu_e"]) / len(values["flu_e"])
        updated = replace(updated, flu_e=mean)
    if "flu_i" in values:
        rate = sum(values["flu_i"]) / len(values["flu_i"])
        updated = replace(updated, flu_i=rate >= 0.5)
    if "inf_q" in values:
        mean = sum(values["inf_q"]) / len(values["inf_q"])
        updated = replace(updated, inf_q=mean)
    return updated
