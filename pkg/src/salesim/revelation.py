"""Gradual preference revelation.

A shopper starts out knowing only the product category. Each time the seller
says something semantically close to one of the assigned preference
questions, that one preference unlocks for the shopper — at most one per
shopper turn, never re-revealed, never forced to complete.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .content import PreferenceProfile, PreferenceQuestion
from .retrieval import EmbeddingProvider, cosine

DEFAULT_THRESHOLD = 0.6


@dataclass(frozen=True)
class Revelation:
    qid: str
    question: str
    option: str


@dataclass
class RevelationState:
    profile: PreferenceProfile
    questions: Mapping[str, PreferenceQuestion]
    provider: EmbeddingProvider
    threshold: float = DEFAULT_THRESHOLD
    revealed: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must be in (0, 1]")
        for qid, _ in self.profile.answers:
            if qid not in self.questions:
                raise ValueError(f"no question text for assigned qid {qid!r}")
        if len(self.revealed) != len(set(self.revealed)):
            raise ValueError("revealed qids must be unique")

    @classmethod
    def create(cls, profile: PreferenceProfile,
               questions: Sequence[PreferenceQuestion],
               provider: EmbeddingProvider,
               threshold: float = DEFAULT_THRESHOLD) -> "RevelationState":
        return cls(profile=profile,
                   questions={q.qid: q for q in questions},
                   provider=provider, threshold=threshold)

    def unrevealed(self) -> list[tuple[str, str]]:
        """Assigned (qid, option) pairs not yet revealed, questionnaire order."""
        return [(qid, option) for qid, option in self.profile.answers
                if qid not in self.revealed]

    def revealed_pairs(self) -> list[Revelation]:
        return [Revelation(qid, self.questions[qid].question,
                           self.profile.answer_for(qid) or "")
                for qid in self.revealed]


def maybe_reveal(state: RevelationState,
                 last_seller_utterance: str) -> Revelation | None:
    """Reveal the best-matching unrevealed preference, if any clears the bar.

    Similarity compares the whole seller utterance against each unrevealed
    question's text. Ties on the maximum go to questionnaire order. Returns
    None when nothing is left to reveal or no similarity reaches threshold.
    """
    candidates = state.unrevealed()
    if not candidates or not last_seller_utterance.strip():
        return None
    utterance_vec = state.provider.embed(last_seller_utterance)
    best: tuple[float, str, str] | None = None
    for qid, option in candidates:
        score = cosine(utterance_vec,
                       state.provider.embed(state.questions[qid].question))
        if best is None or score > best[0]:
            best = (score, qid, option)
    score, qid, option = best
    if score < state.threshold:
        return None
    state.revealed.append(qid)
    return Revelation(qid=qid, question=state.questions[qid].question,
                      option=option)


def revelation_count(state: RevelationState) -> int:
    return len(state.revealed)
