"""End-to-end review pipeline.

Order of operations: ingest the block list, build the claim ledger, derive
the verification agenda, verify every question against retrieved prior work
(fanned out over a thread pool, merged back in question-id order), run the
two-pass anchored read that grows evidence and drafts annotations, finalize
severities, assemble the package, and export through the readiness gate.

Pass one of the read covers every paragraph span in agenda-priority order.
Pass two revisits the spans implicated by still-open questions; if any open
question's claim has no evidence anywhere, pass two widens to the whole
document (the claim could live anywhere), which is also what arms the
missing-anchor confirmation rule.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .annotations import Annotation, default_taxonomy, finalize_annotation
from .config import RunConfig
from .doc_model import AnchoredDocument, ingest_block_list, load_block_list, paragraph_spans
from .errors import MalformedProviderOutput, NotReady, ReadingComplete
from .ledger import (
    AgendaItem,
    LedgerEntry,
    ReadCursor,
    STATUS_SUSPECTED,
    build_ledger,
    derive_agenda,
    entry_to_dict,
    final_status_sweep,
    implicated_spans,
    item_to_dict,
    select_span,
    update_ledger,
)
from .ports import (
    HttpPort,
    LiveAnalyst,
    LiveJudge,
    LiveRetriever,
    StubAnalyst,
    StubJudge,
    StubRetriever,
)
from .review_package import (
    Budgets,
    ProcessCounters,
    RunCounters,
    export_package,
    synthesize,
)
from .verification import VerificationResult, retrieve, verify


@dataclass
class Ports:
    analyst: object
    retriever: object
    judge: object
    audit_log: list


def build_ports(config: RunConfig) -> Ports:
    """Construct the three providers for the configured mode.

    Raises:
        MalformedProviderOutput: stub mode without the needed fixture paths,
            or live mode without the needed URLs.
    """
    audit: list = []
    if config.mode == "stub":
        if not config.analyst_fixture:
            raise MalformedProviderOutput("stub mode needs an analyst fixture path")
        analyst = StubAnalyst.from_file(config.analyst_fixture)
        retriever = (
            StubRetriever.from_file(config.retriever_fixture)
            if config.retriever_fixture
            else StubRetriever([])
        )
        judge = StubJudge.from_file(config.judge_fixture) if config.judge_fixture else StubJudge()
        return Ports(analyst=analyst, retriever=retriever, judge=judge, audit_log=audit)
    if config.mode == "live":
        for name, url in (
            ("analyst", config.analyst_url),
            ("retriever", config.retriever_url),
        ):
            if not url:
                raise MalformedProviderOutput(f"live mode needs --{name}-url")
        analyst = LiveAnalyst(
            HttpPort("analyst", config.analyst_url, config.token_for("analyst"),
                     config.timeout, audit)
        )
        retriever = LiveRetriever(
            HttpPort("retriever", config.retriever_url, config.token_for("retriever"),
                     config.timeout, audit)
        )
        judge = (
            LiveJudge(
                HttpPort("judge", config.judge_url, config.token_for("judge"),
                         config.timeout, audit)
            )
            if config.judge_url
            else StubJudge()
        )
        return Ports(analyst=analyst, retriever=retriever, judge=judge, audit_log=audit)
    raise MalformedProviderOutput(f"unknown mode {config.mode!r}")


def run_verification(
    agenda: Sequence[AgendaItem],
    analyst,
    retriever,
    counters: RunCounters,
    workers: int = 4,
) -> list[VerificationResult]:
    """Verify every question, concurrently, merged in question-id order.

    The counters absorb concurrent updates behind a lock; ordering of the
    result list never depends on scheduling.
    """

    def _one(item: AgendaItem) -> VerificationResult:
        setting = analyst.claim_setting(item)
        comparators = retrieve(item, setting, retriever, counters)
        return verify(item, setting, comparators, analyst, counters, budget_met=True)

    if workers <= 1 or len(agenda) <= 1:
        results = [_one(item) for item in agenda]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, agenda))
    return sorted(results, key=lambda r: r.question_id)


def _drain_cursor(
    doc: AnchoredDocument,
    ledger: list[LedgerEntry],
    agenda: Sequence[AgendaItem],
    cursor: ReadCursor,
    analyst,
    provisional: list,
    visits: Counter,
) -> list[LedgerEntry]:
    while True:
        try:
            span = select_span(doc, ledger, agenda, cursor)
        except ReadingComplete:
            return ledger
        visits[span.key()] += 1
        evidence = analyst.read_span(doc, span)
        if evidence.span != span:
            raise MalformedProviderOutput(
                f"analyst answered for span {evidence.span.key()}, asked {span.key()}"
            )
        ledger, provisional[:] = update_ledger(ledger, provisional, evidence)


def run_read_loop(
    doc: AnchoredDocument,
    ledger: list[LedgerEntry],
    agenda: Sequence[AgendaItem],
    analyst,
) -> tuple[list[LedgerEntry], list, Counter]:
    """Two-pass anchored read; returns the updated ledger, drafts, and visits."""
    spans = paragraph_spans(doc)
    provisional: list = []
    visits: Counter = Counter()

    cursor = ReadCursor.for_spans(spans)
    ledger = _drain_cursor(doc, ledger, agenda, cursor, analyst, provisional, visits)

    by_id = {e.claim_id: e for e in ledger}
    open_items = [
        item
        for item in agenda
        if any(by_id[cid].status == STATUS_SUSPECTED for cid in item.source_claims if cid in by_id)
    ]
    needs_full_pass = any(
        not by_id[cid].evidence
        for item in open_items
        for cid in item.source_claims
        if cid in by_id
    )
    if needs_full_pass:
        revisit = list(spans)
    else:
        keys_seen: set[tuple[int, int, int]] = set()
        revisit = []
        for item in sorted(open_items, key=lambda i: i.risk_rank):
            for span in implicated_spans(spans, ledger, item):
                if span.key() not in keys_seen:
                    keys_seen.add(span.key())
                    revisit.append(span)
    if revisit:
        cursor = ReadCursor.for_spans(revisit)
        ledger = _drain_cursor(doc, ledger, agenda, cursor, analyst, provisional, visits)

    second_pass_done = bool(spans) and all(visits[s.key()] >= 2 for s in spans)
    ledger = final_status_sweep(ledger, second_pass_done)
    return ledger, provisional, visits


def finalize_annotations(provisional: Sequence, analyst) -> tuple[Annotation, ...]:
    """Stage-two severity assignment; duplicate draft ids keep first emission."""
    seen: set[str] = set()
    final: list[Annotation] = []
    for draft in provisional:
        if draft.ann_id in seen:
            continue
        seen.add(draft.ann_id)
        final.append(finalize_annotation(draft, analyst.assign_severity(draft)))
    return tuple(final)


@dataclass
class ReviewOutcome:
    ready: bool
    bundle_dir: Path | None
    reasons: tuple[str, ...]
    counters: ProcessCounters
    n_annotations: int
    doc_id: str


def run_review(
    manuscript_path: str | Path,
    out_dir: str | Path,
    config: RunConfig,
    doc_id: str | None = None,
) -> ReviewOutcome:
    """The whole pipeline, from block list to exported bundle (or refusal).

    On a gate failure nothing but a not_ready.json report lands in out_dir;
    a partial bundle is never written.
    """
    manuscript_path = Path(manuscript_path)
    doc_id = doc_id or manuscript_path.stem
    doc = ingest_block_list(load_block_list(manuscript_path))
    ports = build_ports(config)

    fixture_doc = getattr(ports.analyst, "doc_id", "")
    if fixture_doc and fixture_doc != doc_id:
        raise MalformedProviderOutput(
            f"analyst fixture is keyed to document {fixture_doc!r}, not {doc_id!r}"
        )

    counters = RunCounters()
    ledger = build_ledger(doc, ports.analyst)
    agenda = derive_agenda(ledger, ports.analyst)
    verifications = run_verification(
        agenda, ports.analyst, ports.retriever, counters, config.workers
    )
    ledger, provisional, _visits = run_read_loop(doc, ledger, agenda, ports.analyst)
    annotations = finalize_annotations(provisional, ports.analyst)

    pkg = synthesize(
        doc, ledger, agenda, verifications, annotations, ports.analyst, counters.snapshot()
    )
    budgets = Budgets(alpha=config.alpha, beta=config.beta, gamma=config.gamma)
    taxonomy = default_taxonomy(config.extra_category)

    out = Path(out_dir)
    try:
        bundle = export_package(
            pkg,
            doc,
            out,
            budgets=budgets,
            taxonomy=taxonomy,
            manifest_extra={"doc_id": doc_id, "mode": config.mode, "seed": config.seed},
            audit_log=ports.audit_log,
            extra_files={
                "ledger.json": [entry_to_dict(e) for e in ledger],
                "agenda.json": [item_to_dict(i) for i in agenda],
            },
        )
    except NotReady as refusal:
        out.mkdir(parents=True, exist_ok=True)
        report = {"ready": False, "reasons": refusal.reasons, "doc_id": doc_id}
        (out / "not_ready.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return ReviewOutcome(
            ready=False,
            bundle_dir=None,
            reasons=tuple(refusal.reasons),
            counters=pkg.counters,
            n_annotations=len(pkg.annotations),
            doc_id=doc_id,
        )
    return ReviewOutcome(
        ready=True,
        bundle_dir=bundle,
        reasons=(),
        counters=pkg.counters,
        n_annotations=len(pkg.annotations),
        doc_id=doc_id,
    )
