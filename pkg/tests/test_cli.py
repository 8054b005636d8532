from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from salesim.cli import main
from tests.conftest import CONTENT_DIR, FIXTURES, demo_script

DEMO_SCRIPT = FIXTURES / "demo_script.json"


@pytest.fixture()
def runner():
    return CliRunner()


def write_script(path: Path, conversations, judge=None) -> Path:
    payload = {"conversations": conversations}
    if judge:
        payload["judge"] = judge
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_simulate_writes_transcripts(runner, tmp_path):
    out = tmp_path / "transcripts"
    result = runner.invoke(main, [
        "simulate", "--category", "coffee-makers", "--n", "10",
        "--variant", "full", "--content", str(CONTENT_DIR),
        "--out", str(out), "--scripted", str(DEMO_SCRIPT)])
    assert result.exit_code == 0, result.output
    transcripts = list(out.glob("*.jsonl"))
    assert len(transcripts) == 10
    assert "accepted" in result.output


def test_simulate_then_evaluate_with_known_accept(runner, tmp_path):
    out = tmp_path / "transcripts"
    script = write_script(tmp_path / "script.json", [demo_script()])
    result = runner.invoke(main, [
        "simulate", "--category", "coffee-makers", "--n", "1",
        "--content", str(CONTENT_DIR), "--out", str(out),
        "--scripted", str(script)])
    assert result.exit_code == 0, result.output
    cid = list(out.glob("*.jsonl"))[0].stem
    result = runner.invoke(main, [
        "evaluate", "--cid", cid, "--store", str(out),
        "--content", str(CONTENT_DIR)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    # prof-01 accepts cm-02 in the demo script, which is in its ground truth
    assert report["rec"] == 1
    assert report["cid"] == cid


def test_export_prints_jsonl(runner, tmp_path):
    out = tmp_path / "transcripts"
    runner.invoke(main, [
        "simulate", "--category", "coffee-makers", "--n", "1",
        "--content", str(CONTENT_DIR), "--out", str(out),
        "--scripted", str(DEMO_SCRIPT)])
    cid = list(out.glob("*.jsonl"))[0].stem
    result = runner.invoke(main, ["export", "--cid", cid,
                                  "--store", str(out)])
    assert result.exit_code == 0
    lines = [json.loads(line) for line in result.output.strip().splitlines()]
    assert lines[0]["kind"] == "session"
    assert lines[-1]["kind"] in ("decision", "status")


def test_ablate_two_variants_table(runner, tmp_path):
    # scripts must match variants; supply one per conversation in run order
    from salesim.seller import Variant

    conversations = []
    for variant in (Variant.RULE_AD, Variant.FULL):
        conversations.extend(demo_script(variant=variant) for _ in range(3))
    script = write_script(tmp_path / "script.json", conversations,
                          judge=["5 / human"])
    result = runner.invoke(main, [
        "ablate", "--variants", "full,rule_ad", "--n", "3",
        "--category", "coffee-makers", "--content", str(CONTENT_DIR),
        "--scripted", str(script), "--out", str(tmp_path / "reports")])
    assert result.exit_code == 0, result.output
    assert "rule_ad" in result.output and "full" in result.output
    table_lines = [line for line in result.output.splitlines()
                   if line.startswith(("rule_ad", "full"))]
    assert len(table_lines) == 2
    assert table_lines[0].startswith("rule_ad")  # canonical row order
    reports = (tmp_path / "reports" / "reports.jsonl").read_text().splitlines()
    assert len(reports) == 6
    csv_head = (tmp_path / "reports" / "aggregate.csv").read_text().splitlines()[0]
    assert csv_head == "variant,flu_e,flu_i,inf_e,rec,n"


def test_gen_catalog_scripted(runner, tmp_path):
    names = "\n".join(json.dumps({"name": f"Maker {i}"}) for i in range(30))
    metas = [json.dumps({"name": f"Maker {i}", "price": f"${20 + i}.99",
                         "description": f"Machine number {i}.",
                         "features": [f"feature-{i}", "steel body"]})
             for i in range(30)]
    script = write_script(tmp_path / "gen.json", [[names, *metas]])
    out = tmp_path / "catalog.json"
    result = runner.invoke(main, [
        "gen-catalog", "--category", "coffee-makers", "--count", "30",
        "--out", str(out), "--scripted", str(script)])
    assert result.exit_code == 0, result.output
    data = json.loads(out.read_text())
    assert len(data) == 30
    assert data[0]["price"] == "20.99"


def test_gen_prefs_scripted(runner, tmp_path):
    questions = "\n".join(json.dumps({"question": f"Question {i}?"})
                          for i in range(5))
    options = ['["a", "b", "c"]'] * 5
    profiles = "\n".join(
        json.dumps({"answers": {f"q{j + 1}": "abc"[(i // 3 ** j) % 3]
                                for j in range(5)}})
        for i in range(10))
    script = write_script(tmp_path / "gen.json",
                          [[questions, *options, profiles]])
    out = tmp_path / "preferences.json"
    result = runner.invoke(main, [
        "gen-prefs", "--guide", str(CONTENT_DIR / "coffee-makers/guide.md"),
        "--category", "coffee-makers", "--out", str(out),
        "--scripted", str(script)])
    assert result.exit_code == 0, result.output
    data = json.loads(out.read_text())
    assert len(data["questions"]) == 5
    assert len(data["profiles"]) == 10


def test_gen_quiz_scripted(runner, tmp_path):
    rows = "\n".join([
        json.dumps({"statement": "Espresso machines can only make espresso "
                                 "shots.", "options": ["True", "False"],
                    "answer": "False", "paragraph": 3}),
        json.dumps({"statement": "Pod machines need no measuring.",
                    "options": ["True", "False"], "answer": "True",
                    "paragraph": 4}),
        json.dumps({"statement": "Descaling is pointless.",
                    "options": ["True", "False"], "answer": "False",
                    "paragraph": 10}),
    ])
    script = write_script(tmp_path / "gen.json", [[rows]])
    out = tmp_path / "quiz.json"
    result = runner.invoke(main, [
        "gen-quiz", "--guide", str(CONTENT_DIR / "coffee-makers/guide.md"),
        "--category", "coffee-makers", "--out", str(out),
        "--scripted", str(script)])
    assert result.exit_code == 0, result.output
    data = json.loads(out.read_text())
    assert len(data["items"]) == 3


def test_usage_error_nonzero_exit(runner):
    result = runner.invoke(main, ["simulate"])  # missing --category
    assert result.exit_code != 0
