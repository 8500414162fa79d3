"""Provider ports (stub and HTTP) plus the end-to-end review pipeline."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from tracereview import (
    Anchor,
    CanonicalIssue,
    ClaimSetting,
    MalformedProviderOutput,
    ProviderError,
    RunConfig,
    load_bundle,
    run_review,
)
from tracereview.ports import HttpPort, StubAnalyst, StubJudge, StubRetriever
from tracereview.pipeline import build_ports


# --- stub retriever -----------------------------------------------------------

CORPUS = [
    {"source_id": "s2", "title": "Older work on reviewing", "task": "reviewing",
     "benchmark": "B1", "metric": "coverage"},
    {"source_id": "s1", "title": "A framework for anchored notes", "task": "other",
     "benchmark": "B2", "metric": "precision"},
]


def test_stub_retriever_setting_match_is_any_field():
    retriever = StubRetriever(CORPUS)
    hits = retriever.search("whatever", ClaimSetting("reviewing", "nowhere", "nothing"))
    assert [c.source_id for c in hits] == ["s2"]
    hits = retriever.search("whatever", ClaimSetting("no", "B2", "none"))
    assert [c.source_id for c in hits] == ["s1"]


def test_stub_retriever_without_setting_uses_title_words():
    retriever = StubRetriever(CORPUS)
    hits = retriever.search("Does the anchored claim hold?", None)
    assert [c.source_id for c in hits] == ["s1"]
    assert retriever.search("Nope nope nope", None) == []


def test_stub_retriever_orders_by_source_id():
    both = ClaimSetting("reviewing", "B2", "none")
    hits = StubRetriever(CORPUS).search("q", both)
    assert [c.source_id for c in hits] == ["s1", "s2"]


# --- stub judge -----------------------------------------------------------------

def test_stub_judge_keyphrase_and_malformed():
    judge = StubJudge({
        "keyphrases": {"p1:i1": "unstated temperature"},
        "malformed": ["p1:i2"],
    })
    issue1 = CanonicalIssue("i1", "p1", "major", "c", "desc one")
    issue2 = CanonicalIssue("i2", "p1", "major", "c", "desc two")
    issue3 = CanonicalIssue("i3", "p1", "major", "c", "desc three")
    assert judge.judge_issue(issue1, "the Unstated Temperature bug") == {"label": 1}
    assert judge.judge_issue(issue1, "nothing relevant") == {"label": 0}
    assert "label" not in judge.judge_issue(issue2, "anything")
    # No configured phrase: the description itself is the phrase.
    assert judge.judge_issue(issue3, "covers desc three fully") == {"label": 1}


# --- port construction ----------------------------------------------------------

def test_build_ports_stub_requires_analyst_fixture():
    with pytest.raises(MalformedProviderOutput):
        build_ports(RunConfig(mode="stub"))


def test_build_ports_live_requires_urls():
    with pytest.raises(MalformedProviderOutput):
        build_ports(RunConfig(mode="live", analyst_url="http://localhost:1"))


def test_build_ports_unknown_mode():
    with pytest.raises(MalformedProviderOutput):
        build_ports(RunConfig(mode="dream"))


# --- HTTP transport ---------------------------------------------------------------

class CannedHandler(BaseHTTPRequestHandler):
    body: bytes = b'{"ok": true}'
    status: int = 200

    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        self.send_response(self.status)
        self.end_headers()
        self.wfile.write(self.body)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = HTTPServer(("127.0.0.1", 0), CannedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_http_port_logs_digests(http_server):
    CannedHandler.body = b'{"claims": []}'
    audit: list = []
    port = HttpPort("analyst", http_server, token="tok", audit_log=audit)
    assert port.call("ledger_claims", {"x": 1}) == {"claims": []}
    assert len(audit) == 1
    record = audit[0]
    assert record["provider"] == "analyst" and record["op"] == "ledger_claims"
    assert len(record["request_sha256"]) == 64
    assert len(record["response_sha256"]) == 64


def test_http_port_non_json_is_malformed(http_server):
    CannedHandler.body = b"<html>oops</html>"
    port = HttpPort("judge", http_server)
    with pytest.raises(MalformedProviderOutput):
        port.call("judge_issue", {})
    CannedHandler.body = b'{"ok": true}'


def test_http_port_connection_failure_is_provider_error():
    port = HttpPort("retriever", "http://127.0.0.1:9", timeout=0.5)
    with pytest.raises(ProviderError):
        port.call("search", {})


# --- pipeline ---------------------------------------------------------------------

def demo_config(demo_dir) -> RunConfig:
    return RunConfig(
        mode="stub",
        analyst_fixture=str(demo_dir / "analyst.json"),
        retriever_fixture=str(demo_dir / "corpus.jsonl"),
    )


def test_run_review_demo_passes_gate(tmp_path, demo_dir):
    outcome = run_review(
        demo_dir / "demo-paper.jsonl", tmp_path / "out", demo_config(demo_dir)
    )
    assert outcome.ready
    assert outcome.n_annotations >= 10
    assert outcome.counters.n_search >= 3
    assert outcome.counters.n_intent >= 3
    pkg, manifest = load_bundle(outcome.bundle_dir)
    assert manifest["doc_id"] == "demo-paper"
    assert len(pkg.annotations) == outcome.n_annotations


def test_run_review_is_deterministic(tmp_path, demo_dir):
    config = demo_config(demo_dir)
    first = run_review(demo_dir / "demo-paper.jsonl", tmp_path / "a", config)
    second = run_review(demo_dir / "demo-paper.jsonl", tmp_path / "b", config)
    for path in sorted(first.bundle_dir.iterdir()):
        twin = second.bundle_dir / path.name
        assert path.read_bytes() == twin.read_bytes(), path.name


def test_run_review_refuses_and_writes_reason_report(tmp_path, demo_dir):
    config = RunConfig(
        mode="stub",
        analyst_fixture=str(demo_dir / "analyst.json"),
        retriever_fixture=str(demo_dir / "corpus.jsonl"),
        gamma=99,
    )
    outcome = run_review(demo_dir / "demo-paper.jsonl", tmp_path / "out", config, doc_id="demo-paper")
    assert not outcome.ready
    assert outcome.bundle_dir is None
    report = json.loads((tmp_path / "out" / "not_ready.json").read_text())
    assert report["ready"] is False
    assert any("AnnotationBudget" in r for r in report["reasons"])
    assert not (tmp_path / "out" / "report.json").exists()


def test_run_review_rejects_fixture_for_other_document(tmp_path, demo_dir):
    with pytest.raises(MalformedProviderOutput):
        run_review(
            demo_dir / "demo-paper.jsonl",
            tmp_path / "out",
            demo_config(demo_dir),
            doc_id="some-other-paper",
        )


def test_demo_exercises_fallback_and_exact_geometry(tmp_path, demo_dir):
    outcome = run_review(demo_dir / "demo-paper.jsonl", tmp_path / "out", demo_config(demo_dir))
    plan = json.loads((outcome.bundle_dir / "overlay_plan.json").read_text())
    spaces = {
        rect["space"]
        for page in plan["pages"]
        for hl in page["highlights"]
        for rect in hl["rects"]
    }
    assert spaces == {"page-local", "normalized"}
