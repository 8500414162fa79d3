"""Provider ports: the analyst, retriever, and judge seams.

Each port runs in one of two modes. Stub mode replays deterministic fixtures
(keyed by document id for the analyst) so a full pipeline run is
bit-reproducible offline. Live mode wraps an HTTP endpoint: every call is a
JSON POST with a timeout, and request/response digests land in the run's
audit log. Transport failures surface as ProviderError; structurally bad
payloads surface as MalformedProviderOutput at the call sites that parse
them.
"""

from __future__ import annotations

import hashlib
import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .annotations import ProvisionalAnnotation, SEVERITY_MINOR
from .doc_model import Anchor, AnchoredDocument
from .errors import MalformedProviderOutput, ProviderError
from .eval_coverage import CanonicalIssue
from .ledger import AgendaItem, ClaimDraft, LedgerEntry, SpanEvidence, SpanFinding
from .verification import ClaimSetting, Comparator


class AnalystPort(Protocol):
    """Text-judgment provider: claims, agenda, span readings, verdicts, prose."""

    def ledger_claims(self, doc: AnchoredDocument) -> Sequence[ClaimDraft]: ...

    def agenda_items(self, ledger: Sequence[LedgerEntry]) -> Sequence[AgendaItem] | None: ...

    def read_span(self, doc: AnchoredDocument, span: Anchor) -> SpanEvidence: ...

    def claim_setting(self, item: AgendaItem) -> ClaimSetting | None: ...

    def overlap_signals(
        self, question_id: str, comparables: Sequence[Comparator]
    ) -> Sequence[str] | None: ...

    def assign_severity(self, draft: ProvisionalAnnotation) -> str: ...

    def report_sections(self, ledger, verifications, annotations) -> dict[str, str]: ...


class RetrieverPort(Protocol):
    """Literature search provider."""

    def search(self, question_text: str, setting: ClaimSetting | None) -> Sequence[Comparator]: ...


class JudgePort(Protocol):
    """Coverage judge provider."""

    def judge_issue(self, issue: CanonicalIssue, review_text: str) -> object: ...


def _anchor_from_obj(obj: dict) -> Anchor:
    return Anchor(obj["page"], obj["k_start"], obj["k_end"])


def _span_key(span: Anchor) -> str:
    return f"{span.page}:{span.k_start}-{span.k_end}"


def _setting_from_obj(obj: dict | None) -> ClaimSetting | None:
    if obj is None:
        return None
    return ClaimSetting(
        task=obj.get("task", ""),
        benchmark=obj.get("benchmark", ""),
        primary_metric=obj.get("primary_metric", ""),
    )


class StubAnalyst:
    """Fixture-driven analyst; every answer is a lookup, never a computation.

    The fixture is one JSON object per document (see fixtures/demo/analyst.json
    for the exhaustive shape). Span notes are keyed "page:k_start-k_end";
    annotation drafts are emitted only on the first read of their span so a
    revisit cannot duplicate them.
    """

    def __init__(self, fixture: dict):
        self.fixture = fixture
        self.doc_id = fixture.get("doc_id", "")
        self._emitted_spans: set[str] = set()

    @classmethod
    def from_file(cls, path: str | Path) -> "StubAnalyst":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def ledger_claims(self, doc: AnchoredDocument) -> list[ClaimDraft]:
        drafts = []
        for obj in self.fixture.get("claims", []):
            drafts.append(
                ClaimDraft(
                    claim_id=obj["claim_id"],
                    claim_text=obj["claim_text"],
                    evidence=tuple(_anchor_from_obj(a) for a in obj.get("evidence", [])),
                    risk_text=obj.get("risk_text", ""),
                    contradictions=tuple(
                        _anchor_from_obj(a) for a in obj.get("contradictions", [])
                    ),
                )
            )
        return drafts

    def agenda_items(self, ledger: Sequence[LedgerEntry]) -> list[AgendaItem] | None:
        raw = self.fixture.get("agenda")
        if raw is None:
            return None
        return [
            AgendaItem(
                question_id=obj["question_id"],
                question_text=obj["question_text"],
                source_claims=tuple(obj["source_claims"]),
                risk_rank=obj["risk_rank"],
            )
            for obj in raw
        ]

    def read_span(self, doc: AnchoredDocument, span: Anchor) -> SpanEvidence:
        key = _span_key(span)
        note = self.fixture.get("span_notes", {}).get(key, {})
        findings = tuple(
            SpanFinding(
                claim_id=obj["claim_id"],
                anchors=tuple(_anchor_from_obj(a) for a in obj["anchors"]),
                contradiction=obj.get("contradiction", False),
            )
            for obj in note.get("findings", [])
        )
        drafts: tuple[ProvisionalAnnotation, ...] = ()
        if key not in self._emitted_spans:
            self._emitted_spans.add(key)
            drafts = tuple(
                ProvisionalAnnotation(
                    ann_id=obj["ann_id"],
                    anchor=_anchor_from_obj(obj["anchor"]),
                    category=obj["category"],
                    summary=obj["summary"],
                    body=obj.get("body", obj["summary"]),
                    risk_text=obj["risk_text"],
                    repair_text=obj["repair_text"],
                    suggested_severity=obj.get("suggested_severity", SEVERITY_MINOR),
                    question_id=obj.get("question_id"),
                )
                for obj in note.get("annotations", [])
            )
        return SpanEvidence(span=span, findings=findings, drafts=drafts)

    def claim_setting(self, item: AgendaItem) -> ClaimSetting | None:
        return _setting_from_obj(self.fixture.get("claim_settings", {}).get(item.question_id))

    def overlap_signals(
        self, question_id: str, comparables: Sequence[Comparator]
    ) -> list[str] | None:
        signals = self.fixture.get("overlap_signals", {}).get(question_id)
        return list(signals) if signals is not None else None

    def assign_severity(self, draft: ProvisionalAnnotation) -> str:
        overrides = self.fixture.get("severities", {})
        return overrides.get(draft.ann_id, draft.suggested_severity)

    def report_sections(self, ledger, verifications, annotations) -> dict[str, str]:
        return dict(self.fixture.get("report", {}))


class StubRetriever:
    """Fixed corpus filtered deterministically.

    With a setting: a record is returned when any one of task, benchmark, or
    metric matches (case and whitespace insensitive); the comparability gate
    downstream decides which of those are truly comparable. Without a setting:
    a record is returned when its title shares a word of length >= 4 with the
    question text. Results are ordered by source id.
    """

    def __init__(self, corpus: Sequence[dict]):
        self.corpus = list(corpus)

    @classmethod
    def from_file(cls, path: str | Path) -> "StubRetriever":
        records = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(json.loads(line))
        return cls(records)

    @staticmethod
    def _norm(text: str) -> str:
        return " ".join(text.casefold().split())

    def search(self, question_text: str, setting: ClaimSetting | None) -> list[Comparator]:
        hits = []
        for record in self.corpus:
            if setting is not None:
                matched = (
                    self._norm(record.get("task", "")) == self._norm(setting.task)
                    or self._norm(record.get("benchmark", "")) == self._norm(setting.benchmark)
                    or self._norm(record.get("metric", "")) == self._norm(setting.primary_metric)
                )
            else:
                question_words = {
                    w for w in self._norm(question_text).split() if len(w) >= 4
                }
                title_words = set(self._norm(record.get("title", "")).split())
                matched = bool(question_words & title_words)
            if matched:
                hits.append(
                    Comparator(
                        source_id=record["source_id"],
                        title=record.get("title", ""),
                        setting=ClaimSetting(
                            task=record.get("task", ""),
                            benchmark=record.get("benchmark", ""),
                            primary_metric=record.get("metric", ""),
                        ),
                        snippets=tuple(record.get("snippets", [])),
                    )
                )
        hits.sort(key=lambda c: c.source_id)
        return hits


class StubJudge:
    """Exact-keyphrase coverage judge.

    The fixture maps "paper_id:issue_id" to a keyphrase; an issue counts as
    covered when its phrase occurs in the review text (case insensitive).
    Issues without a configured phrase fall back to their description. Ids
    listed under "malformed" return an unparseable payload on purpose, which
    the caller must convert to the missing label.
    """

    def __init__(self, fixture: dict | None = None):
        fixture = fixture or {}
        self.keyphrases: dict = fixture.get("keyphrases", {})
        self.malformed: set[str] = set(fixture.get("malformed", []))

    @classmethod
    def from_file(cls, path: str | Path) -> "StubJudge":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def judge_issue(self, issue: CanonicalIssue, review_text: str) -> object:
        key = f"{issue.paper_id}:{issue.issue_id}"
        if key in self.malformed:
            return {"verdict": "unintelligible"}
        phrase = self.keyphrases.get(key, issue.description)
        covered = phrase.casefold() in review_text.casefold()
        return {"label": 1 if covered else 0}


# --- live transport -----------------------------------------------------------

@dataclass
class HttpPort:
    """Thin JSON-over-POST transport with digest logging.

    Credentials come from the environment only (never flags or config files);
    the caller passes the resolved token in. Every completed call appends a
    record with sha256 digests of the request and response bodies to the
    shared audit log.
    """

    provider: str
    url: str
    token: str | None = None
    timeout: float = 30.0
    audit_log: list = field(default_factory=list)

    def call(self, op: str, payload: object) -> object:
        body = json.dumps({"op": op, "payload": payload}, sort_keys=True).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        request = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                raw = response.read()
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise ProviderError(f"{self.provider} call {op!r} failed: {exc}") from exc
        self.audit_log.append(
            {
                "provider": self.provider,
                "op": op,
                "request_sha256": hashlib.sha256(body).hexdigest(),
                "response_sha256": hashlib.sha256(raw).hexdigest(),
            }
        )
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedProviderOutput(
                f"{self.provider} returned non-JSON for {op!r}"
            ) from exc


def _doc_payload(doc: AnchoredDocument) -> dict:
    return {
        "pages": {
            str(page): [
                {"text": line.text, "kind": line.kind, "bbox": list(line.bbox) if line.bbox else None}
                for line in doc.pages[page]
            ]
            for page in doc.page_numbers()
        }
    }


class LiveAnalyst:
    """Analyst over HTTP; responses are parsed strictly."""

    def __init__(self, port: HttpPort):
        self.port = port

    def ledger_claims(self, doc: AnchoredDocument) -> list[ClaimDraft]:
        raw = self.port.call("ledger_claims", _doc_payload(doc))
        try:
            return [
                ClaimDraft(
                    claim_id=obj["claim_id"],
                    claim_text=obj["claim_text"],
                    evidence=tuple(_anchor_from_obj(a) for a in obj.get("evidence", [])),
                    risk_text=obj.get("risk_text", ""),
                    contradictions=tuple(
                        _anchor_from_obj(a) for a in obj.get("contradictions", [])
                    ),
                )
                for obj in raw
            ]
        except (TypeError, KeyError) as exc:
            raise MalformedProviderOutput(f"bad ledger_claims payload: {exc}") from exc

    def agenda_items(self, ledger: Sequence[LedgerEntry]) -> list[AgendaItem] | None:
        raw = self.port.call(
            "agenda_items",
            [{"claim_id": e.claim_id, "claim_text": e.claim_text, "status": e.status} for e in ledger],
        )
        if raw is None:
            return None
        try:
            return [
                AgendaItem(
                    question_id=obj["question_id"],
                    question_text=obj["question_text"],
                    source_claims=tuple(obj["source_claims"]),
                    risk_rank=obj["risk_rank"],
                )
                for obj in raw
            ]
        except (TypeError, KeyError) as exc:
            raise MalformedProviderOutput(f"bad agenda_items payload: {exc}") from exc

    def read_span(self, doc: AnchoredDocument, span: Anchor) -> SpanEvidence:
        raw = self.port.call(
            "read_span",
            {
                "span": {"page": span.page, "k_start": span.k_start, "k_end": span.k_end},
                "lines": [line.text for line in doc.lines(span.page, span.k_start, span.k_end)],
            },
        )
        try:
            findings = tuple(
                SpanFinding(
                    claim_id=obj["claim_id"],
                    anchors=tuple(_anchor_from_obj(a) for a in obj["anchors"]),
                    contradiction=obj.get("contradiction", False),
                )
                for obj in raw.get("findings", [])
            )
            drafts = tuple(
                ProvisionalAnnotation(
                    ann_id=obj["ann_id"],
                    anchor=_anchor_from_obj(obj["anchor"]),
                    category=obj["category"],
                    summary=obj["summary"],
                    body=obj.get("body", obj["summary"]),
                    risk_text=obj["risk_text"],
                    repair_text=obj["repair_text"],
                    suggested_severity=obj.get("suggested_severity", SEVERITY_MINOR),
                    question_id=obj.get("question_id"),
                )
                for obj in raw.get("annotations", [])
            )
        except (AttributeError, TypeError, KeyError) as exc:
            raise MalformedProviderOutput(f"bad read_span payload: {exc}") from exc
        return SpanEvidence(span=span, findings=findings, drafts=drafts)

    def claim_setting(self, item: AgendaItem) -> ClaimSetting | None:
        raw = self.port.call(
            "claim_setting",
            {"question_id": item.question_id, "question_text": item.question_text},
        )
        if raw is None:
            return None
        if not isinstance(raw, dict):
            raise MalformedProviderOutput("claim_setting payload must be an object or null")
        return _setting_from_obj(raw)

    def overlap_signals(
        self, question_id: str, comparables: Sequence[Comparator]
    ) -> list[str] | None:
        raw = self.port.call(
            "overlap_signals",
            {
                "question_id": question_id,
                "comparables": [
                    {"source_id": c.source_id, "title": c.title, "snippets": list(c.snippets)}
                    for c in comparables
                ],
            },
        )
        if raw is None:
            return None
        if not isinstance(raw, list):
            raise MalformedProviderOutput("overlap_signals payload must be a list or null")
        return [str(v) for v in raw]

    def assign_severity(self, draft: ProvisionalAnnotation) -> str:
        raw = self.port.call(
            "assign_severity",
            {"ann_id": draft.ann_id, "summary": draft.summary, "risk_text": draft.risk_text},
        )
        if not isinstance(raw, str):
            raise MalformedProviderOutput("assign_severity payload must be a string")
        return raw

    def report_sections(self, ledger, verifications, annotations) -> dict[str, str]:
        raw = self.port.call(
            "report_sections",
            {
                "claims": [e.claim_text for e in ledger],
                "tags": [v.tag for v in verifications],
                "annotation_summaries": [a.summary for a in annotations],
            },
        )
        if not isinstance(raw, dict):
            raise MalformedProviderOutput("report_sections payload must be an object")
        return {str(k): str(v) for k, v in raw.items()}


class LiveRetriever:
    def __init__(self, port: HttpPort):
        self.port = port

    def search(self, question_text: str, setting: ClaimSetting | None) -> list[Comparator]:
        raw = self.port.call(
            "search",
            {
                "question": question_text,
                "setting": None
                if setting is None
                else {
                    "task": setting.task,
                    "benchmark": setting.benchmark,
                    "primary_metric": setting.primary_metric,
                },
            },
        )
        try:
            return [
                Comparator(
                    source_id=obj["source_id"],
                    title=obj.get("title", ""),
                    setting=ClaimSetting(
                        task=obj.get("task", ""),
                        benchmark=obj.get("benchmark", ""),
                        primary_metric=obj.get("metric", ""),
                    ),
                    snippets=tuple(obj.get("snippets", [])),
                )
                for obj in raw
            ]
        except (TypeError, KeyError) as exc:
            raise MalformedProviderOutput(f"bad search payload: {exc}") from exc


class LiveJudge:
    def __init__(self, port: HttpPort):
        self.port = port

    def judge_issue(self, issue: CanonicalIssue, review_text: str) -> object:
        return self.port.call(
            "judge_issue",
            {
                "paper_id": issue.paper_id,
                "issue_id": issue.issue_id,
                "description": issue.description,
                "review_text": review_text,
            },
        )
