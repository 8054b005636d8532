"""Loading and holding the per-category content elements.

Directory layout, one subdirectory per category:

    content_dir/
      coffee-makers/
        catalog.json       array of products
        guide.md or .txt   buying guide text, blank-line paragraphs
        preferences.json   {questions, profiles, rules}
        quiz.json          optional

Everything loaded here is immutable and shared across conversations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .content import (
    BuyingGuide,
    KnowledgeQuiz,
    PreferenceProfile,
    PreferenceQuestion,
    ProductCatalog,
    annotate_acceptable,
    catalog_from_json,
    ingest_buying_guide,
    preferences_from_json,
    product_search_text,
    quiz_from_json,
)
from .errors import UnknownCategory, UnknownProfile
from .retrieval import EmbeddingProvider, HashingEmbedder, build_index
from .seller import SellerIndexes


@dataclass(frozen=True)
class CategoryContent:
    category: str
    catalog: ProductCatalog
    guide: BuyingGuide
    questions: tuple[PreferenceQuestion, ...]
    profiles: tuple[PreferenceProfile, ...]
    rules: Mapping[tuple[str, str], Mapping]
    quiz: KnowledgeQuiz | None = None

    def profile(self, pid: str) -> PreferenceProfile:
        for profile in self.profiles:
            if profile.pid == pid:
                return profile
        raise UnknownProfile(f"no profile {pid!r} in category {self.category!r}")


class Workspace:
    """All loaded categories plus cached retrieval indexes."""

    def __init__(self, provider: EmbeddingProvider | None = None):
        self.provider = provider or HashingEmbedder()
        self._categories: dict[str, CategoryContent] = {}
        self._indexes: dict[str, SellerIndexes] = {}

    def add(self, content: CategoryContent) -> None:
        self._categories[content.category] = content
        self._indexes.pop(content.category, None)

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(sorted(self._categories))

    def get(self, category: str) -> CategoryContent:
        if category not in self._categories:
            raise UnknownCategory(f"no content loaded for {category!r}")
        return self._categories[category]

    def indexes(self, category: str) -> SellerIndexes:
        """Build (once) the guide-paragraph and product indexes."""
        if category not in self._indexes:
            content = self.get(category)
            guide_index = build_index(
                [(f"par-{i}", text) for i, text in content.guide.paragraphs],
                self.provider)
            product_index = build_index(
                [(p.id, product_search_text(p)) for p in content.catalog.products],
                self.provider)
            self._indexes[category] = SellerIndexes(
                guide=guide_index, products=product_index,
                provider=self.provider, catalog=content.catalog)
        return self._indexes[category]

    @classmethod
    def load(cls, content_dir: str | Path,
             provider: EmbeddingProvider | None = None,
             *, annotate: bool = True) -> "Workspace":
        """Scan a content directory; optionally (re)annotate profiles from
        the predicate table so ground truth is always consistent with it."""
        workspace = cls(provider)
        root = Path(content_dir)
        if not root.is_dir():
            raise UnknownCategory(f"content dir {root} does not exist")
        for child in sorted(root.iterdir()):
            if not child.is_dir():
                continue
            workspace.add(load_category(child, annotate=annotate))
        return workspace


def load_category(path: Path, *, annotate: bool = True) -> CategoryContent:
    category = path.name
    catalog = catalog_from_json(
        category, json.loads((path / "catalog.json").read_text(encoding="utf-8")))
    guide_path = path / "guide.md"
    if not guide_path.exists():
        guide_path = path / "guide.txt"
    guide = ingest_buying_guide(guide_path.read_text(encoding="utf-8"), category)
    questions, profiles, rules = preferences_from_json(
        json.loads((path / "preferences.json").read_text(encoding="utf-8")))
    if annotate and rules:
        profiles = [annotate_acceptable(p, catalog, rules) for p in profiles]
    quiz = None
    quiz_path = path / "quiz.json"
    if quiz_path.exists():
        quiz = quiz_from_json(json.loads(quiz_path.read_text(encoding="utf-8")))
    return CategoryContent(category=category, catalog=catalog, guide=guide,
                           questions=tuple(questions), profiles=tuple(profiles),
                           rules=rules, quiz=quiz)
