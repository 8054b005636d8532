"""Command-line entry points: content generation, simulation, serving,
evaluation, ablation, export."""

from __future__ import annotations

import json
from pathlib import Path

import click
import yaml

from . import evaluation
from .content import (
    catalog_to_json,
    generate_catalog,
    generate_preference_profiles,
    generate_preference_questions,
    generate_quiz,
    ingest_buying_guide,
    preferences_to_json,
    quiz_to_json,
)
from .gateway import BoundClient, Gateway
from .orchestrator import (
    SessionBindings,
    SessionConfig,
    SessionManager,
    TranscriptStore,
    compute_stats,
    records_to_jsonl,
    replay,
)
from .seller import Variant
from .workspace import Workspace


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith((".yaml", ".yml")):
        return yaml.safe_load(text) or {}
    return json.loads(text)


def _scripted_gateway(script_path: str) -> tuple[Gateway, list[list[str]], list[str]]:
    """Load a script fixture: {"conversations": [[resp, ...], ...],
    "judge": [resp, ...]}. A bare JSON array is a single shared script."""
    data = json.loads(Path(script_path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        conversations = [data]
        judge: list[str] = []
    else:
        conversations = data.get("conversations", [])
        judge = data.get("judge", [])
    if not conversations:
        raise click.UsageError("script fixture has no conversations")
    return Gateway(), conversations, judge


def _live_gateway(config: dict) -> tuple[Gateway, SessionBindings]:
    gateway, binding = Gateway.from_env(config.get("env"))
    return gateway, SessionBindings(seller=binding, shopper=binding)


@click.group()
def main() -> None:
    """Simulate and evaluate knowledge-grounded sales conversations."""


@main.command("gen-catalog")
@click.option("--category", required=True)
@click.option("--count", default=30, show_default=True)
@click.option("--out", default="catalog.json", show_default=True)
@click.option("--scripted", default=None, help="Path to a script fixture.")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None)
def gen_catalog(category: str, count: int, out: str, scripted: str | None,
                seed: int, config_path: str | None) -> None:
    """Generate a product catalog for CATEGORY."""
    llm = _make_client(scripted, config_path)
    catalog = generate_catalog(category, llm, target=count)
    Path(out).write_text(json.dumps(catalog_to_json(catalog), indent=2),
                         encoding="utf-8")
    click.echo(f"wrote {len(catalog.products)} products to {out}")


@main.command("gen-prefs")
@click.option("--guide", "guide_path", required=True)
@click.option("--category", default=None)
@click.option("--out", default="preferences.json", show_default=True)
@click.option("--scripted", default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None)
def gen_prefs(guide_path: str, category: str | None, out: str,
              scripted: str | None, seed: int, config_path: str | None) -> None:
    """Generate a questionnaire and 10 profiles from a buying guide."""
    category = category or Path(guide_path).stem
    guide = ingest_buying_guide(Path(guide_path).read_text(encoding="utf-8"),
                                category)
    llm = _make_client(scripted, config_path)
    questions = generate_preference_questions(guide, llm)
    profiles = generate_preference_profiles(questions, llm, category=category)
    Path(out).write_text(
        json.dumps(preferences_to_json(questions, profiles), indent=2),
        encoding="utf-8")
    click.echo(f"wrote {len(questions)} questions and {len(profiles)} "
               f"profiles to {out}")


@main.command("gen-quiz")
@click.option("--guide", "guide_path", required=True)
@click.option("--category", default=None)
@click.option("--out", default="quiz.json", show_default=True)
@click.option("--scripted", default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None)
def gen_quiz(guide_path: str, category: str | None, out: str,
             scripted: str | None, seed: int, config_path: str | None) -> None:
    """Generate a 3-item knowledge quiz from a buying guide."""
    category = category or Path(guide_path).stem
    guide = ingest_buying_guide(Path(guide_path).read_text(encoding="utf-8"),
                                category)
    llm = _make_client(scripted, config_path)
    quiz = generate_quiz(guide, llm)
    Path(out).write_text(json.dumps(quiz_to_json(quiz), indent=2),
                         encoding="utf-8")
    click.echo(f"wrote quiz to {out}")


def _make_client(scripted: str | None, config_path: str | None) -> BoundClient:
    if scripted:
        gateway, conversations, _ = _scripted_gateway(scripted)
        responses = [r for script in conversations for r in script]
        binding = gateway.register_ordinal_script(responses)
        return BoundClient(gateway, binding)
    gateway, binding = Gateway.from_env(_load_config(config_path).get("env"))
    return BoundClient(gateway, binding)


def _manager(content_dir: str, config: dict, gateway: Gateway,
             store_dir: str | None) -> SessionManager:
    workspace = Workspace.load(content_dir)
    store = TranscriptStore(store_dir) if store_dir else None
    return SessionManager(workspace, gateway,
                          revelation_threshold=config.get("threshold", 0.6),
                          store=store)


@main.command()
@click.option("--category", required=True)
@click.option("--n", default=1, show_default=True)
@click.option("--variant", default="full", show_default=True)
@click.option("--content", "content_dir", default="fixtures/demo-content",
              show_default=True)
@click.option("--out", "store_dir", default="transcripts", show_default=True)
@click.option("--scripted", default=None)
@click.option("--max-turns", default=40, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None)
def simulate(category: str, n: int, variant: str, content_dir: str,
             store_dir: str, scripted: str | None, max_turns: int,
             seed: int, config_path: str | None) -> None:
    """Run N bot-bot conversations and persist their transcripts."""
    config = _load_config(config_path)
    if scripted:
        gateway, conversations, _ = _scripted_gateway(scripted)
        default = SessionBindings()
    else:
        gateway, default = _live_gateway(config)
        conversations = []
    manager = _manager(content_dir, config, gateway, store_dir)
    manager.default_bindings = default
    content = manager.workspace.get(category)
    for i in range(n):
        bindings = default
        if scripted:
            script = conversations[i % len(conversations)]
            binding = gateway.register_ordinal_script(script)
            bindings = SessionBindings(seller=binding, shopper=binding)
        profile = content.profiles[(seed + i) % len(content.profiles)]
        conv = manager.start_session(SessionConfig(
            category=category, profile=profile.pid,
            variant=Variant(variant), seed=seed + i, max_turns=max_turns,
            bindings=bindings))
        manager.run_bots(conv)
        stats = compute_stats(conv)
        click.echo(f"{conv.cid}: {conv.status.value} after {stats.n_turns} "
                   f"turns ({stats.n_recommendations} recs, "
                   f"{stats.n_revelations} reveals)")
    click.echo(f"transcripts in {store_dir}/")


@main.command()
@click.option("--content", "content_dir", default="fixtures/demo-content",
              show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--secret", default="dev-secret")
@click.option("--ui", "ui_dir", default="frontend", show_default=True,
              help="Static chat-UI directory; skipped when missing.")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None)
def serve(content_dir: str, host: str, port: int, secret: str, ui_dir: str,
          seed: int, config_path: str | None) -> None:
    """Serve the HTTP API and, when built, the chat UI."""
    import uvicorn

    from .api import create_app

    config = _load_config(config_path)
    try:
        gateway, default = _live_gateway(config)
    except Exception:
        gateway, default = Gateway(), SessionBindings()
        click.echo("no live provider configured; only human-human sessions "
                   "will advance", err=True)
    manager = _manager(content_dir, config, gateway,
                       config.get("transcript_dir"))
    manager.default_bindings = default
    static_dir = ui_dir if Path(ui_dir).is_dir() else None
    uvicorn.run(create_app(manager, secret=secret, static_dir=static_dir),
                host=host, port=port)


@main.command()
@click.option("--cid", required=True)
@click.option("--store", "store_dir", default="transcripts", show_default=True)
@click.option("--content", "content_dir", default="fixtures/demo-content",
              show_default=True)
@click.option("--judge-script", default=None,
              help="Ordinal judge responses (JSON array) for flu/quiz.")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None)
def evaluate(cid: str, store_dir: str, content_dir: str,
             judge_script: str | None, seed: int,
             config_path: str | None) -> None:
    """Evaluate a persisted conversation transcript."""
    store = TranscriptStore(store_dir)
    conv = replay(store.load(cid))
    workspace = Workspace.load(content_dir)
    content = workspace.get(conv.category)
    profile = content.profile(conv.profile_ref)
    judge = None
    if judge_script:
        gateway = Gateway()
        responses = json.loads(Path(judge_script).read_text(encoding="utf-8"))
        judge = BoundClient(gateway, gateway.register_ordinal_script(responses))
    report = evaluation.evaluate_conversation(
        conv, profile, content.guide, content.catalog,
        nli_provider=evaluation.LexicalContainmentNli(),
        judge=judge, quiz=content.quiz if judge else None,
        faithfulness_judge=evaluation.GroundedSentenceJudge())
    click.echo(json.dumps(evaluation.report_to_json(report), indent=2))


@main.command()
@click.option("--variants", default="full", show_default=True,
              help="Comma-separated variant names.")
@click.option("--n", default=3, show_default=True)
@click.option("--category", "categories", multiple=True)
@click.option("--content", "content_dir", default="fixtures/demo-content",
              show_default=True)
@click.option("--scripted", default=None)
@click.option("--out", default=None, help="Also write reports.jsonl + CSV here.")
@click.option("--max-turns", default=40, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None)
def ablate(variants: str, n: int, categories: tuple[str, ...],
           content_dir: str, scripted: str | None, out: str | None,
           max_turns: int, seed: int, config_path: str | None) -> None:
    """Run the ablation matrix and print the aggregate table."""
    config = _load_config(config_path)
    chosen = tuple(Variant(v.strip()) for v in variants.split(","))
    if scripted:
        gateway, conversations, judge_responses = _scripted_gateway(scripted)
        factory_state = {"i": 0}

        def factory(variant: Variant, i: int) -> SessionBindings:
            script = conversations[factory_state["i"] % len(conversations)]
            factory_state["i"] += 1
            binding = gateway.register_ordinal_script(script)
            return SessionBindings(seller=binding, shopper=binding,
                                   response=binding)
    else:
        gateway, default = _live_gateway(config)
        judge_responses = []

        def factory(variant: Variant, i: int) -> SessionBindings:
            return default

    manager = _manager(content_dir, config, gateway, None)
    if not categories:
        categories = manager.workspace.categories
    judge = None
    if judge_responses:
        judge = BoundClient(gateway, gateway.register_ordinal_script(
            [r for r in judge_responses] * max(1, n * len(chosen))))
    nli = evaluation.LexicalContainmentNli()

    def evaluator(conv) -> evaluation.EvaluationReport:
        session = manager.session(conv.cid)
        return evaluation.evaluate_conversation(
            conv, session.revelation.profile, session.content.guide,
            session.content.catalog, nli_provider=nli, judge=judge)

    rows, reports = evaluation.run_ablation(
        manager,
        evaluation.AblationConfig(variants=chosen, n_per_variant=n,
                                  categories=tuple(categories), seed=seed,
                                  max_turns=max_turns,
                                  binding_factory=factory),
        evaluator)
    click.echo(evaluation.format_table(rows))
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "reports.jsonl").write_text(
            evaluation.reports_to_jsonl(reports), encoding="utf-8")
        (out_dir / "aggregate.csv").write_text(
            evaluation.rows_to_csv(rows), encoding="utf-8")
        click.echo(f"reports in {out_dir}/")


@main.command()
@click.option("--cid", required=True)
@click.option("--store", "store_dir", default="transcripts", show_default=True)
@click.option("--format", "fmt", default="jsonl", show_default=True,
              type=click.Choice(["jsonl"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None)
def export(cid: str, store_dir: str, fmt: str, seed: int,
           config_path: str | None) -> None:
    """Print a persisted transcript."""
    store = TranscriptStore(store_dir)
    click.echo(records_to_jsonl(store.load(cid)))


if __name__ == "__main__":
    main()
