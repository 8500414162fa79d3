"""Claim ledger, verification agenda, and the re-read cursor.

The first reading of a manuscript produces a ledger: one entry per load-bearing
claim, each tied to the anchors that support it and to a short account of what
breaks if the claim fails. Suspected entries spawn agenda questions; the agenda
drives both retrieval and the second, targeted read.

Statuses move in one direction. An entry is confirmed when the manuscript
itself settles the matter (an internal contradiction, or no supporting anchor
after the document has been read twice); it never returns to suspected.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

from .annotations import ProvisionalAnnotation
from .doc_model import Anchor, AnchoredDocument
from .errors import EvidenceOutOfSpan, MalformedProviderOutput, ReadingComplete

STATUS_SUSPECTED = "suspected"
STATUS_CONFIRMED = "confirmed"
STATUSES = frozenset({STATUS_SUSPECTED, STATUS_CONFIRMED})


@dataclass(frozen=True)
class LedgerEntry:
    """One load-bearing claim with its supporting and contradicting anchors."""

    claim_id: str
    claim_text: str
    evidence: tuple[Anchor, ...]
    risk_text: str
    status: str
    contradictions: tuple[Anchor, ...] = ()


@dataclass(frozen=True)
class ClaimDraft:
    """Raw claim as emitted by the analyst port, before validation."""

    claim_id: str
    claim_text: str
    evidence: tuple[Anchor, ...] = ()
    risk_text: str = ""
    contradictions: tuple[Anchor, ...] = ()


@dataclass(frozen=True)
class AgendaItem:
    """One verification question, ranked by how much rides on the answer."""

    question_id: str
    question_text: str
    source_claims: tuple[str, ...]
    risk_rank: int


@dataclass(frozen=True)
class SpanFinding:
    """Evidence for one claim discovered while reading a span."""

    claim_id: str
    anchors: tuple[Anchor, ...]
    contradiction: bool = False


@dataclass(frozen=True)
class SpanEvidence:
    """Everything the analyst reported for one just-read span."""

    span: Anchor
    findings: tuple[SpanFinding, ...] = ()
    drafts: tuple[ProvisionalAnnotation, ...] = ()


@dataclass
class ReadCursor:
    """Mutable position in a reading pass over a fixed span roster."""

    spans: tuple[Anchor, ...]
    visited: set[tuple[int, int, int]] = field(default_factory=set)
    next_priority: deque[Anchor] = field(default_factory=deque)

    @classmethod
    def for_spans(cls, spans: Sequence[Anchor]) -> "ReadCursor":
        return cls(spans=tuple(spans))

    def remaining(self) -> int:
        return sum(1 for s in self.spans if s.key() not in self.visited)


def apply_status_rule(
    entry: LedgerEntry, contradiction_found: bool, second_pass_done: bool
) -> str:
    """Single source of truth for status transitions.

    Confirmed when an internal contradiction was found, or when the claim
    still has no supporting anchor after a full second pass. Confirmation is
    permanent: an already confirmed entry stays confirmed regardless of the
    flags, which is what keeps the no-backsliding invariant.
    """
    if entry.status == STATUS_CONFIRMED:
        return STATUS_CONFIRMED
    if contradiction_found or (not entry.evidence and second_pass_done):
        return STATUS_CONFIRMED
    return STATUS_SUSPECTED


def _validated_anchors(
    doc: AnchoredDocument, anchors: Sequence[Anchor], claim_id: str, label: str
) -> tuple[Anchor, ...]:
    for anchor in anchors:
        if not doc.contains(anchor):
            raise MalformedProviderOutput(
                f"claim {claim_id!r}: {label} anchor {anchor.key()} outside document"
            )
    return tuple(sorted(set(anchors), key=Anchor.key))


def build_ledger(doc: AnchoredDocument, analyst) -> list[LedgerEntry]:
    """First-pass ledger from the analyst's claim drafts.

    Every anchor is checked against the document before it is admitted, and
    claim ids must be unique and non-empty. Statuses are assigned through
    apply_status_rule with the second-pass flag off, so at this point an entry
    is confirmed only by an internal contradiction.

    Raises:
        MalformedProviderOutput: invalid anchor, duplicate or empty claim id,
            or empty claim text.
    """
    entries: list[LedgerEntry] = []
    seen: set[str] = set()
    for draft in analyst.ledger_claims(doc):
        if not draft.claim_id:
            raise MalformedProviderOutput("claim with empty id")
        if draft.claim_id in seen:
            raise MalformedProviderOutput(f"duplicate claim id {draft.claim_id!r}")
        if not draft.claim_text.strip():
            raise MalformedProviderOutput(f"claim {draft.claim_id!r} has empty text")
        seen.add(draft.claim_id)
        evidence = _validated_anchors(doc, draft.evidence, draft.claim_id, "evidence")
        contradictions = _validated_anchors(
            doc, draft.contradictions, draft.claim_id, "contradiction"
        )
        base = LedgerEntry(
            claim_id=draft.claim_id,
            claim_text=draft.claim_text,
            evidence=evidence,
            risk_text=draft.risk_text,
            status=STATUS_SUSPECTED,
            contradictions=contradictions,
        )
        status = apply_status_rule(base, bool(contradictions), second_pass_done=False)
        entries.append(replace(base, status=status))
    return entries


def derive_agenda(ledger: Sequence[LedgerEntry], analyst=None) -> list[AgendaItem]:
    """Agenda of verification questions over the suspected entries.

    The analyst may cluster claims into questions and supply the risk order;
    without one (or when it abstains) every suspected entry becomes its own
    question in ledger order. Claims that have no evidence at all are force
    listed: if the analyst's clustering misses one, an item is appended for it.
    Ranks must come out as a permutation of 1..M.
    """
    suspected = [e for e in ledger if e.status == STATUS_SUSPECTED]
    suspected_ids = {e.claim_id for e in suspected}

    raw = analyst.agenda_items(ledger) if analyst is not None else None
    if raw is None:
        items = [
            AgendaItem(
                question_id=f"q-{entry.claim_id}",
                question_text=f"Does the cited evidence establish: {entry.claim_text}",
                source_claims=(entry.claim_id,),
                risk_rank=rank,
            )
            for rank, entry in enumerate(suspected, start=1)
        ]
    else:
        items = list(raw)
        seen_ids: set[str] = set()
        seen_ranks: set[int] = set()
        for item in items:
            if not item.question_id or item.question_id in seen_ids:
                raise MalformedProviderOutput(f"bad agenda question id {item.question_id!r}")
            seen_ids.add(item.question_id)
            if not item.question_text.strip():
                raise MalformedProviderOutput(f"agenda item {item.question_id!r} has empty text")
            if not item.source_claims:
                raise MalformedProviderOutput(f"agenda item {item.question_id!r} cites no claims")
            for claim_id in item.source_claims:
                if claim_id not in suspected_ids:
                    raise MalformedProviderOutput(
                        f"agenda item {item.question_id!r} cites non-suspected claim {claim_id!r}"
                    )
            if item.risk_rank in seen_ranks:
                raise MalformedProviderOutput(f"duplicate risk rank {item.risk_rank}")
            seen_ranks.add(item.risk_rank)
        covered = {cid for item in items for cid in item.source_claims}
        next_rank = max(seen_ranks, default=0) + 1
        for entry in suspected:
            if not entry.evidence and entry.claim_id not in covered:
                items.append(
                    AgendaItem(
                        question_id=f"q-forced-{entry.claim_id}",
                        question_text=(
                            f"No anchor supports: {entry.claim_text} Locate support or confirm the gap."
                        ),
                        source_claims=(entry.claim_id,),
                        risk_rank=next_rank,
                    )
                )
                next_rank += 1

    ranks = sorted(item.risk_rank for item in items)
    if ranks != list(range(1, len(items) + 1)):
        raise MalformedProviderOutput(f"risk ranks {ranks} are not a permutation of 1..{len(items)}")
    return items


def _spans_overlap(span: Anchor, anchor: Anchor) -> bool:
    return span.page == anchor.page and not (
        span.k_end < anchor.k_start or anchor.k_end < span.k_start
    )


def implicated_spans(
    spans: Sequence[Anchor], ledger: Sequence[LedgerEntry], item: AgendaItem
) -> list[Anchor]:
    """Spans that intersect any evidence anchor of the item's source claims."""
    by_id = {e.claim_id: e for e in ledger}
    hits = []
    for span in spans:
        for claim_id in item.source_claims:
            entry = by_id.get(claim_id)
            if entry and any(_spans_overlap(span, a) for a in entry.evidence):
                hits.append(span)
                break
    return hits


def select_span(
    doc: AnchoredDocument,
    ledger: Sequence[LedgerEntry],
    agenda: Sequence[AgendaItem],
    cursor: ReadCursor,
) -> Anchor:
    """Pop the highest-priority unvisited span and mark it visited.

    Priority: spans implicated by the lowest-ranked agenda item first, then
    everything else in (page, line) order, which is what guarantees that every
    span is eventually returned. Priorities are recomputed on each call since
    the ledger moves between reads; the refreshed queue is left on the cursor.

    Raises:
        ReadingComplete: nothing left to read on this cursor.
    """
    candidates = [s for s in cursor.spans if s.key() not in cursor.visited]
    if not candidates:
        raise ReadingComplete(f"all {len(cursor.spans)} spans visited")

    rank_of: dict[tuple[int, int, int], int] = {}
    for item in sorted(agenda, key=lambda i: i.risk_rank):
        for span in implicated_spans(candidates, ledger, item):
            rank_of.setdefault(span.key(), item.risk_rank)

    ordered = sorted(
        candidates,
        key=lambda s: (rank_of.get(s.key(), len(agenda) + 1), s.page, s.k_start),
    )
    cursor.next_priority = deque(ordered)
    chosen = cursor.next_priority.popleft()
    cursor.visited.add(chosen.key())
    return chosen


def _require_within(span: Anchor, anchor: Anchor, what: str) -> None:
    if not (
        anchor.page == span.page
        and span.k_start <= anchor.k_start
        and anchor.k_end <= span.k_end
    ):
        raise EvidenceOutOfSpan(
            f"{what} anchor {anchor.key()} outside just-read span {span.key()}"
        )


def update_ledger(
    ledger: Sequence[LedgerEntry],
    annotations_so_far: Sequence[ProvisionalAnnotation],
    span_evidence: SpanEvidence,
) -> tuple[list[LedgerEntry], list[ProvisionalAnnotation]]:
    """Fold one span's findings into the ledger; collect provisional notes.

    Evidence sets only grow. Every cited anchor must lie inside the span that
    was actually read (EvidenceOutOfSpan otherwise), and findings must cite
    known claims. Statuses are recomputed through apply_status_rule with the
    second-pass flag off; the end-of-reading sweep is the caller's job.
    """
    span = span_evidence.span
    by_id = {e.claim_id: e for e in ledger}
    for finding in span_evidence.findings:
        if finding.claim_id not in by_id:
            raise MalformedProviderOutput(f"finding cites unknown claim {finding.claim_id!r}")
        for anchor in finding.anchors:
            _require_within(span, anchor, "evidence")
    for draft in span_evidence.drafts:
        _require_within(span, draft.anchor, "annotation")

    updated = {cid: entry for cid, entry in by_id.items()}
    for finding in span_evidence.findings:
        entry = updated[finding.claim_id]
        if finding.contradiction:
            contradictions = tuple(
                sorted(set(entry.contradictions) | set(finding.anchors), key=Anchor.key)
            )
            evidence = entry.evidence
        else:
            contradictions = entry.contradictions
            evidence = tuple(sorted(set(entry.evidence) | set(finding.anchors), key=Anchor.key))
        entry = replace(entry, evidence=evidence, contradictions=contradictions)
        status = apply_status_rule(entry, bool(entry.contradictions), second_pass_done=False)
        updated[finding.claim_id] = replace(entry, status=status)

    new_ledger = [updated[e.claim_id] for e in ledger]
    new_annotations = list(annotations_so_far) + list(span_evidence.drafts)
    return new_ledger, new_annotations


def final_status_sweep(
    ledger: Sequence[LedgerEntry], second_pass_done: bool
) -> list[LedgerEntry]:
    """Re-run the status rule once reading ends (the missing-anchor clause)."""
    out = []
    for entry in ledger:
        status = apply_status_rule(entry, bool(entry.contradictions), second_pass_done)
        out.append(replace(entry, status=status))
    return out


# --- audit serialization -----------------------------------------------------

def _anchor_to_dict(anchor: Anchor) -> dict:
    return {"page": anchor.page, "k_start": anchor.k_start, "k_end": anchor.k_end}


def _anchor_from_dict(obj: dict) -> Anchor:
    return Anchor(obj["page"], obj["k_start"], obj["k_end"])


def entry_to_dict(entry: LedgerEntry) -> dict:
    return {
        "claim_id": entry.claim_id,
        "claim_text": entry.claim_text,
        "evidence": [_anchor_to_dict(a) for a in entry.evidence],
        "risk_text": entry.risk_text,
        "status": entry.status,
        "contradictions": [_anchor_to_dict(a) for a in entry.contradictions],
    }


def entry_from_dict(obj: dict) -> LedgerEntry:
    return LedgerEntry(
        claim_id=obj["claim_id"],
        claim_text=obj["claim_text"],
        evidence=tuple(_anchor_from_dict(a) for a in obj["evidence"]),
        risk_text=obj["risk_text"],
        status=obj["status"],
        contradictions=tuple(_anchor_from_dict(a) for a in obj["contradictions"]),
    )


def item_to_dict(item: AgendaItem) -> dict:
    return {
        "question_id": item.question_id,
        "question_text": item.question_text,
        "source_claims": list(item.source_claims),
        "risk_rank": item.risk_rank,
    }


def item_from_dict(obj: dict) -> AgendaItem:
    return AgendaItem(
        question_id=obj["question_id"],
        question_text=obj["question_text"],
        source_claims=tuple(obj["source_claims"]),
        risk_rank=obj["risk_rank"],
    )
