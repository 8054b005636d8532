"""Content elements: product catalog, buying guide, shopping preferences, quiz.

Catalogs, questionnaires, profiles and quizzes are produced by model-backed
pipelines; buying guides are ingested from local text/markdown files. All
values are immutable once constructed and round-trip through JSON.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Mapping, Sequence

from .errors import (
    EmptyGuide,
    InsufficientNames,
    InvalidOption,
    InvalidPrice,
    ParseFailure,
    UnmappedAnswer,
    WrongCount,
)
from .gateway import BoundClient, user_request
from .prompts import load_template, render

log = logging.getLogger(__name__)

GENERATION_ATTEMPTS = 3  # per pipeline stage
CATALOG_SOFT_BOUNDS = (20, 40)

# US-style price strings only: "$1,699.99", "$300", "$49.99".
_PRICE_RE = re.compile(r"^\$(\d{1,3}(?:,\d{3})*|\d+)(\.\d{2})?$")


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Product:
    id: str
    name: str
    price: Decimal
    description: str
    features: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("product name must be non-empty")
        if self.price <= 0:
            raise InvalidPrice(f"price must be positive, got {self.price}")
        if not self.features:
            raise ValueError("product needs at least one feature")


@dataclass(frozen=True)
class ProductCatalog:
    category: str
    products: tuple[Product, ...]

    def __post_init__(self) -> None:
        ids = [p.id for p in self.products]
        if len(ids) != len(set(ids)):
            raise ValueError("product ids must be unique within a catalog")
        lo, hi = CATALOG_SOFT_BOUNDS
        if self.products and not lo <= len(self.products) <= hi:
            log.warning("catalog %r has %d products (target ~30, soft bounds %s)",
                        self.category, len(self.products), CATALOG_SOFT_BOUNDS)

    def get(self, product_id: str) -> Product:
        for product in self.products:
            if product.id == product_id:
                return product
        raise KeyError(product_id)

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(p.id for p in self.products)


@dataclass(frozen=True)
class BuyingGuide:
    category: str
    title: str
    paragraphs: tuple[tuple[int, str], ...]

    def __post_init__(self) -> None:
        if not self.paragraphs:
            raise EmptyGuide("guide must contain at least one paragraph")
        for expected, (index, text) in enumerate(self.paragraphs):
            if index != expected:
                raise ValueError("paragraph indices must be contiguous from 0")
            if not text:
                raise ValueError("paragraphs must be non-empty")

    def text(self) -> str:
        return "\n\n".join(text for _, text in self.paragraphs)


@dataclass(frozen=True)
class PreferenceQuestion:
    qid: str
    question: str
    options: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.options) < 2:
            raise ValueError(f"question {self.qid} needs at least 2 options")


@dataclass(frozen=True)
class PreferenceProfile:
    pid: str
    category: str
    answers: tuple[tuple[str, str], ...]
    # None until annotate_acceptable() runs; empty set is a valid annotation.
    acceptable_products: frozenset[str] | None = None

    def __post_init__(self) -> None:
        qids = [qid for qid, _ in self.answers]
        if len(qids) != len(set(qids)):
            raise ValueError("each qid may be answered at most once")

    def answer_for(self, qid: str) -> str | None:
        for answered_qid, option in self.answers:
            if answered_qid == qid:
                return option
        return None


@dataclass(frozen=True)
class QuizItem:
    statement: str
    answer: str
    paragraph_index: int
    options: tuple[str, ...] = ("True", "False")

    def __post_init__(self) -> None:
        if self.answer not in self.options:
            raise ValueError("quiz answer key must be one of the options")


@dataclass(frozen=True)
class KnowledgeQuiz:
    category: str
    items: tuple[QuizItem, QuizItem, QuizItem]

    def __post_init__(self) -> None:
        if len(self.items) != 3:
            raise WrongCount(f"quiz needs exactly 3 items, got {len(self.items)}")


def validate_profile(profile: PreferenceProfile,
                     questions: Sequence[PreferenceQuestion]) -> None:
    """Every answer must pick a valid option of an existing question."""
    by_qid = {q.qid: q for q in questions}
    for qid, option in profile.answers:
        question = by_qid.get(qid)
        if question is None:
            raise InvalidOption(f"answer references unknown question {qid!r}")
        if option not in question.options:
            raise InvalidOption(
                f"option {option!r} is not valid for question {qid!r}")


# --------------------------------------------------------------------------
# Parsing helpers
# --------------------------------------------------------------------------

def _json_objects(text: str) -> list[dict]:
    """Best-effort: one JSON object per line, ignoring fences and prose."""
    objects = []
    for line in text.splitlines():
        line = line.strip().strip("`").rstrip(",")
        if not (line.startswith("{") and line.endswith("}")):
            continue
        try:
            value = json.loads(line)
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            objects.append(value)
    return objects


def _first_json_object(text: str) -> dict:
    """Extract the first {...} block, tolerating surrounding prose."""
    start = text.find("{")
    if start == -1:
        raise ParseFailure("no JSON object in completion")
    depth = 0
    for pos in range(start, len(text)):
        if text[pos] == "{":
            depth += 1
        elif text[pos] == "}":
            depth -= 1
            if depth == 0:
                try:
                    value = json.loads(text[start:pos + 1])
                except json.JSONDecodeError as exc:
                    raise ParseFailure(f"malformed JSON object: {exc}") from exc
                if not isinstance(value, dict):
                    raise ParseFailure("expected a JSON object")
                return value
    raise ParseFailure("unterminated JSON object in completion")


def parse_price(raw: object) -> Decimal:
    """Normalize a price to Decimal.

    Strings must match the US grammar "$d[,ddd]*(.dd)?"; anything else is a
    ParseFailure. Bare JSON numbers are accepted as already normalized.
    Non-positive amounts are InvalidPrice.
    """
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        price = Decimal(str(raw))
    elif isinstance(raw, str):
        match = _PRICE_RE.match(raw.strip())
        if not match:
            raise ParseFailure(f"price {raw!r} does not match the price grammar")
        whole, cents = match.groups()
        price = Decimal(whole.replace(",", "") + (cents or ""))
    else:
        raise ParseFailure(f"price must be a string or number, got {type(raw)}")
    if price <= 0:
        raise InvalidPrice(f"price must be positive, got {price}")
    return price


# --------------------------------------------------------------------------
# Generation pipelines
# --------------------------------------------------------------------------

def generate_product_names(category: str, llm: BoundClient,
                           *, target: int = 30) -> list[str]:
    """Prompt for product names until the target count or the attempt cap."""
    if not category:
        raise ValueError("category must be non-empty")
    prompt = render(load_template("catalog_names_v1"),
                    count=target, category=category)
    names: list[str] = []
    seen: set[str] = set()
    for _ in range(GENERATION_ATTEMPTS):
        completion = llm.complete(user_request(prompt, max_tokens=2048),
                                  tag="catalog_names")
        parsed = [obj["name"] for obj in _json_objects(completion)
                  if isinstance(obj.get("name"), str) and obj["name"].strip()]
        if not parsed:
            raise ParseFailure("completion contained no parsable names")
        for name in parsed:
            name = name.strip()
            if name not in seen:
                seen.add(name)
                names.append(name)
        if len(names) >= target:
            return names
    if len(names) < 20:
        raise InsufficientNames(
            f"only {len(names)} names after {GENERATION_ATTEMPTS} attempts")
    return names


def generate_product_metadata(name: str, llm: BoundClient,
                              *, product_id: str | None = None) -> Product:
    """Prompt for {name, price, description, features} and build a Product."""
    if not name:
        raise ValueError("name must be non-empty")
    prompt = render(load_template("catalog_metadata_v1"), name=name)
    completion = llm.complete(user_request(prompt, max_tokens=1024),
                              tag="catalog_metadata")
    data = _first_json_object(completion)
    features = data.get("features")
    if not isinstance(features, list) or not features or \
            not all(isinstance(f, str) and f for f in features):
        raise ParseFailure("features must be a non-empty list of strings")
    description = data.get("description")
    if not isinstance(description, str) or not description:
        raise ParseFailure("description missing")
    price = parse_price(data.get("price"))
    if product_id is None:
        import uuid
        product_id = f"p-{uuid.uuid4().hex[:8]}"
    return Product(id=product_id, name=str(data.get("name") or name),
                   price=price, description=description,
                   features=tuple(features))


def generate_catalog(category: str, llm: BoundClient,
                     *, target: int = 30) -> ProductCatalog:
    """Full pipeline: names then per-name metadata, ids p01, p02, ..."""
    names = generate_product_names(category, llm, target=target)
    products = tuple(
        generate_product_metadata(name, llm, product_id=f"p{i + 1:02d}")
        for i, name in enumerate(names))
    return ProductCatalog(category=category, products=products)


def ingest_buying_guide(raw_text: str, category: str,
                        *, title: str = "") -> BuyingGuide:
    """Split local guide text into paragraphs on blank-line boundaries."""
    if not raw_text:
        raise EmptyGuide("guide text is empty")
    fragments = [frag.strip() for frag in re.split(r"\n\s*\n", raw_text)]
    paragraphs = tuple((i, frag) for i, frag in
                       enumerate(frag for frag in fragments if frag))
    if not paragraphs:
        raise EmptyGuide("guide text contains no paragraphs")
    return BuyingGuide(category=category,
                       title=title or f"{category} buying guide",
                       paragraphs=paragraphs)


def generate_preference_questions(guide: BuyingGuide,
                                  llm: BoundClient) -> list[PreferenceQuestion]:
    """Two-stage pipeline: 5 questions from the guide, then options for each."""
    prompt = render(load_template("pref_questions_v1"),
                    category=guide.category, guide=guide.text())
    questions: list[str] = []
    for _ in range(GENERATION_ATTEMPTS):
        completion = llm.complete(user_request(prompt, max_tokens=1024),
                                  tag="pref_questions")
        parsed = [obj["question"] for obj in _json_objects(completion)
                  if isinstance(obj.get("question"), str) and obj["question"].strip()]
        if not parsed:
            raise ParseFailure("completion contained no parsable questions")
        if len(parsed) == 5:
            questions = [q.strip() for q in parsed]
            break
    if len(questions) != 5:
        raise WrongCount(f"expected 5 questions, got {len(parsed)} after "
                         f"{GENERATION_ATTEMPTS} attempts")

    result = []
    for i, question in enumerate(questions):
        option_prompt = render(load_template("pref_options_v1"),
                               question=question)
        completion = llm.complete(user_request(option_prompt, max_tokens=256),
                                  tag="pref_options")
        options = _parse_options(completion)
        result.append(PreferenceQuestion(qid=f"q{i + 1}", question=question,
                                         options=options))
    return result


def _parse_options(completion: str) -> tuple[str, ...]:
    start, end = completion.find("["), completion.rfind("]")
    if start == -1 or end == -1 or end < start:
        raise ParseFailure("no JSON array of options in completion")
    try:
        values = json.loads(completion[start:end + 1])
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"malformed options array: {exc}") from exc
    options: list[str] = []
    for value in values:
        if not isinstance(value, str) or not value.strip():
            raise ParseFailure("options must be non-empty strings")
        value = value.strip()
        if value not in options:
            options.append(value)
    if len(options) < 2:
        raise ParseFailure("need at least 2 distinct options")
    return tuple(options)


def generate_preference_profiles(questions: Sequence[PreferenceQuestion],
                                 llm: BoundClient, *, category: str,
                                 count: int = 10) -> list[PreferenceProfile]:
    """Select realistic answer combinations; every answer is validated."""
    if len(questions) != 5:
        raise ValueError("profile generation expects 5 questions")
    questionnaire = "\n".join(
        f"{q.qid}: {q.question} Options: {json.dumps(list(q.options))}"
        for q in questions)
    prompt = render(load_template("pref_profiles_v1"),
                    category=category, questionnaire=questionnaire)
    rows: list[dict] = []
    for _ in range(GENERATION_ATTEMPTS):
        completion = llm.complete(user_request(prompt, max_tokens=2048),
                                  tag="pref_profiles")
        rows = [obj for obj in _json_objects(completion)
                if isinstance(obj.get("answers"), dict)]
        if len(rows) == count:
            break
    if len(rows) != count:
        raise ParseFailure(f"expected {count} profiles, got {len(rows)} after "
                           f"{GENERATION_ATTEMPTS} attempts")

    order = {q.qid: i for i, q in enumerate(questions)}
    profiles = []
    for i, row in enumerate(rows):
        answers = sorted(row["answers"].items(),
                         key=lambda kv: order.get(kv[0], len(order)))
        profile = PreferenceProfile(pid=f"prof-{i + 1:02d}", category=category,
                                    answers=tuple((qid, str(opt))
                                                  for qid, opt in answers))
        validate_profile(profile, questions)
        profiles.append(profile)
    return profiles


def generate_quiz(guide: BuyingGuide, llm: BoundClient) -> KnowledgeQuiz:
    """3 keyed items, each citing the guide paragraph that supports it."""
    prompt = render(load_template("quiz_v1"), guide=guide.text())
    items: list[QuizItem] = []
    for _ in range(GENERATION_ATTEMPTS):
        completion = llm.complete(user_request(prompt, max_tokens=1024),
                                  tag="quiz")
        rows = _json_objects(completion)
        if not rows:
            raise ParseFailure("completion contained no parsable quiz items")
        items = [_parse_quiz_item(row, guide) for row in rows]
        if len(items) == 3:
            break
    if len(items) != 3:
        raise WrongCount(f"expected 3 quiz items, got {len(items)} after "
                         f"{GENERATION_ATTEMPTS} attempts")
    return KnowledgeQuiz(category=guide.category,
                         items=(items[0], items[1], items[2]))


def _parse_quiz_item(row: dict, guide: BuyingGuide) -> QuizItem:
    statement = row.get("statement") or row.get("question")
    if not isinstance(statement, str) or not statement.strip():
        raise ParseFailure("quiz item has no statement")
    paragraph = row.get("paragraph")
    if not isinstance(paragraph, int) or not 0 <= paragraph < len(guide.paragraphs):
        raise ParseFailure("quiz item must cite a valid paragraph index")
    options = row.get("options") or ["True", "False"]
    if not isinstance(options, list) or len(options) < 2:
        raise ParseFailure("quiz item options malformed")
    answer = row.get("answer")
    if isinstance(answer, bool):
        answer = "True" if answer else "False"
    if not isinstance(answer, str) or answer not in options:
        raise ParseFailure("quiz answer key must be one of the options")
    return QuizItem(statement=statement.strip(), answer=answer,
                    paragraph_index=paragraph,
                    options=tuple(str(o) for o in options))


# --------------------------------------------------------------------------
# Ground-truth acceptability predicates
# --------------------------------------------------------------------------
#
# The predicate table is the machine-readable stand-in for manual acceptable-
# product annotation: rules[(qid, option)] -> predicate. A profile's
# acceptable set is the conjunction of the predicates of all its answers.

PredicateTable = Mapping[tuple[str, str], Mapping]


def evaluate_predicate(pred: Mapping, product: Product) -> bool:
    kind = pred.get("kind")
    value = pred.get("value")
    if kind == "true":
        return True
    if kind == "price_max":
        return product.price <= Decimal(str(value))
    if kind == "price_min":
        return product.price >= Decimal(str(value))
    if kind == "feature_contains":
        needle = str(value).lower()
        return any(needle in f.lower() for f in product.features)
    if kind == "name_contains":
        return str(value).lower() in product.name.lower()
    if kind == "description_contains":
        return str(value).lower() in product.description.lower()
    if kind == "text_contains":
        needle = str(value).lower()
        haystack = " ".join([product.name, product.description,
                             *product.features]).lower()
        return needle in haystack
    if kind == "all_of":
        return all(evaluate_predicate(p, product) for p in value)
    if kind == "any_of":
        return any(evaluate_predicate(p, product) for p in value)
    raise ValueError(f"unknown predicate kind {kind!r}")


def annotate_acceptable(profile: PreferenceProfile, catalog: ProductCatalog,
                        rules: PredicateTable) -> PreferenceProfile:
    """Fill acceptable_products with the conjunction of answer predicates."""
    predicates = []
    for qid, option in profile.answers:
        pred = rules.get((qid, option))
        if pred is None:
            raise UnmappedAnswer(f"no predicate for ({qid!r}, {option!r})")
        predicates.append(pred)
    acceptable = frozenset(
        product.id for product in catalog.products
        if all(evaluate_predicate(pred, product) for pred in predicates))
    return replace(profile, acceptable_products=acceptable)


def product_search_text(product: Product) -> str:
    """Fixed template for a product's retrievable document."""
    features = "; ".join(product.features)
    return (f"{product.name}\nPrice: ${product.price}\n"
            f"Description: {product.description}\nFeatures: {features}")


# --------------------------------------------------------------------------
# JSON round-trips
# --------------------------------------------------------------------------

def product_to_json(product: Product) -> dict:
    return {"id": product.id, "name": product.name,
            "price": str(product.price), "description": product.description,
            "features": list(product.features)}


def product_from_json(data: Mapping) -> Product:
    return Product(id=data["id"], name=data["name"],
                   price=Decimal(data["price"]),
                   description=data["description"],
                   features=tuple(data["features"]))


def catalog_to_json(catalog: ProductCatalog) -> list[dict]:
    """catalog.json holds a bare array of products; category comes from
    the directory layout."""
    return [product_to_json(p) for p in catalog.products]


def catalog_from_json(category: str, data: Sequence[Mapping]) -> ProductCatalog:
    return ProductCatalog(category=category,
                          products=tuple(product_from_json(d) for d in data))


def question_to_json(question: PreferenceQuestion) -> dict:
    return {"qid": question.qid, "question": question.question,
            "options": list(question.options)}


def question_from_json(data: Mapping) -> PreferenceQuestion:
    return PreferenceQuestion(qid=data["qid"], question=data["question"],
                              options=tuple(data["options"]))


def profile_to_json(profile: PreferenceProfile) -> dict:
    out = {"pid": profile.pid, "category": profile.category,
           "answers": [[qid, option] for qid, option in profile.answers]}
    if profile.acceptable_products is not None:
        out["acceptable_products"] = sorted(profile.acceptable_products)
    return out


def profile_from_json(data: Mapping) -> PreferenceProfile:
    acceptable = data.get("acceptable_products")
    return PreferenceProfile(
        pid=data["pid"], category=data["category"],
        answers=tuple((qid, option) for qid, option in data["answers"]),
        acceptable_products=None if acceptable is None else frozenset(acceptable))


def rules_to_json(rules: PredicateTable) -> dict:
    out: dict[str, dict] = {}
    for (qid, option), pred in rules.items():
        out.setdefault(qid, {})[option] = dict(pred)
    return out


def rules_from_json(data: Mapping) -> dict[tuple[str, str], Mapping]:
    return {(qid, option): pred
            for qid, options in data.items()
            for option, pred in options.items()}


def preferences_to_json(questions: Sequence[PreferenceQuestion],
                        profiles: Sequence[PreferenceProfile],
                        rules: PredicateTable | None = None) -> dict:
    out = {"questions": [question_to_json(q) for q in questions],
           "profiles": [profile_to_json(p) for p in profiles]}
    if rules is not None:
        out["rules"] = rules_to_json(rules)
    return out


def preferences_from_json(data: Mapping) -> tuple[
        list[PreferenceQuestion], list[PreferenceProfile],
        dict[tuple[str, str], Mapping]]:
    questions = [question_from_json(q) for q in data["questions"]]
    profiles = [profile_from_json(p) for p in data["profiles"]]
    for profile in profiles:
        validate_profile(profile, questions)
    rules = rules_from_json(data.get("rules", {}))
    return questions, profiles, rules


def quiz_to_json(quiz: KnowledgeQuiz) -> dict:
    return {"category": quiz.category,
            "items": [{"statement": item.statement,
                       "options": list(item.options),
                       "answer": item.answer,
                       "paragraph": item.paragraph_index}
                      for item in quiz.items]}


def quiz_from_json(data: Mapping) -> KnowledgeQuiz:
    items = tuple(QuizItem(statement=i["statement"], answer=i["answer"],
                           paragraph_index=i["paragraph"],
                           options=tuple(i.get("options", ("True", "False"))))
                  for i in data["items"])
    if len(items) != 3:
        raise WrongCount(f"quiz needs exactly 3 items, got {len(items)}")
    return KnowledgeQuiz(category=data["category"], items=items)
