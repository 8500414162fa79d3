"""Agenda-driven verification against retrieved prior work.

Each agenda question is resolved in three moves: retrieve candidate prior
work, partition the candidates through a matched-setting comparability gate
(same task, same benchmark, same primary metric, nothing looser), then assign
a conservative novelty tag. Claims that cannot be mapped to a concrete
setting, and candidate sets with mixed overlap signals, collapse to
"unclear" rather than to a verdict.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .errors import IncompleteSetting, MalformedProviderOutput

TAG_SUPPORTED = "supported"
TAG_PARTIAL = "partially_overlapping"
TAG_SUBSTANTIAL = "substantially_overlapped"
TAG_UNCLEAR = "unclear"
NOVELTY_TAGS = frozenset({TAG_SUPPORTED, TAG_PARTIAL, TAG_SUBSTANTIAL, TAG_UNCLEAR})

# Signals an analyst may emit per examined candidate. "unclear" is allowed as
# an explicit abstention; anything else must be a real overlap verdict.
_ALLOWED_SIGNALS = frozenset({TAG_SUPPORTED, TAG_PARTIAL, TAG_SUBSTANTIAL, TAG_UNCLEAR})

_WS = re.compile(r"\s+")


def _norm(value: str) -> str:
    return _WS.sub(" ", value.strip().casefold())


@dataclass(frozen=True)
class ClaimSetting:
    """The experimental setting a novelty or superiority claim lives in."""

    task: str
    benchmark: str
    primary_metric: str

    def fields(self) -> tuple[str, str, str]:
        return (self.task, self.benchmark, self.primary_metric)


@dataclass(frozen=True)
class Comparator:
    """One retrieved prior-work candidate."""

    source_id: str
    title: str
    setting: ClaimSetting
    snippets: tuple[str, ...] = ()


@dataclass(frozen=True)
class VerificationResult:
    """Outcome for one agenda question."""

    question_id: str
    tag: str
    comparable_ids: tuple[str, ...]
    background_ids: tuple[str, ...]
    rationale: str


def comparability_gate(claim_setting: ClaimSetting, candidate: ClaimSetting) -> bool:
    """True only when task, benchmark, and primary metric all match.

    Matching is exact up to case and whitespace; there is deliberately no
    fuzzy matching here, a near-miss benchmark is background, not comparable.

    Raises:
        IncompleteSetting: the claim side is missing any of its three fields.
    """
    if any(not f.strip() for f in claim_setting.fields()):
        raise IncompleteSetting(f"claim setting {claim_setting} has an empty field")
    return (
        _norm(claim_setting.task) == _norm(candidate.task)
        and _norm(claim_setting.benchmark) == _norm(candidate.benchmark)
        and _norm(claim_setting.primary_metric) == _norm(candidate.primary_metric)
    )


def assign_novelty_tag(
    claim_mappable: bool,
    comparables: Sequence[Comparator],
    analyst_signals: Sequence[str] | None,
    budget_met: bool = True,
) -> str:
    """Conservative tag assignment.

    Order of precedence: an unmappable claim is unclear; a mappable claim with
    a met retrieval budget and zero comparables is supported; absent or mixed
    analyst signals are unclear; a uniform signal is taken at face value.
    """
    if not claim_mappable:
        return TAG_UNCLEAR
    if budget_met and not comparables:
        return TAG_SUPPORTED
    if not analyst_signals:
        return TAG_UNCLEAR
    for signal in analyst_signals:
        if signal not in _ALLOWED_SIGNALS:
            raise MalformedProviderOutput(f"unknown overlap signal {signal!r}")
    distinct = set(analyst_signals)
    if len(distinct) > 1:
        return TAG_UNCLEAR
    return distinct.pop()


def retrieve(item, setting: ClaimSetting | None, retriever, counters=None) -> list[Comparator]:
    """One retrieval call for one question. Counts against the search budget.

    The question id is marked covered as soon as its retrieval completes, and
    again when verify() finishes; the covered set makes that idempotent.
    ProviderError from the port propagates unchanged.
    """
    results = list(retriever.search(item.question_text, setting))
    if counters is not None:
        counters.record_search(item.question_id)
    return results


def verify(
    item,
    setting: ClaimSetting | None,
    comparators: Sequence[Comparator],
    analyst,
    counters=None,
    budget_met: bool = True,
) -> VerificationResult:
    """Gate the candidates and assign the question's novelty tag.

    A question without a mappable setting routes every candidate to the
    background set and comes out unclear. IncompleteSetting from the gate
    propagates: a half-specified setting is a provider defect, not background.
    """
    if setting is None:
        comparable: list[Comparator] = []
        background = list(comparators)
    else:
        comparable = [c for c in comparators if comparability_gate(setting, c.setting)]
        background = [c for c in comparators if not comparability_gate(setting, c.setting)]

    signals = None
    if comparable:
        signals = analyst.overlap_signals(item.question_id, tuple(comparable))
    tag = assign_novelty_tag(
        claim_mappable=setting is not None,
        comparables=comparable,
        analyst_signals=signals,
        budget_met=budget_met,
    )
    rationale = (
        f"{len(comparable)} comparable and {len(background)} background source(s) "
        f"after the matched-setting gate; tag {tag}."
    )
    if counters is not None:
        counters.mark_covered(item.question_id)
    return VerificationResult(
        question_id=item.question_id,
        tag=tag,
        comparable_ids=tuple(c.source_id for c in comparable),
        background_ids=tuple(c.source_id for c in background),
        rationale=rationale,
    )


def result_to_dict(result: VerificationResult) -> dict:
    return {
        "question_id": result.question_id,
        "tag": result.tag,
        "comparable_ids": list(result.comparable_ids),
        "background_ids": list(result.background_ids),
        "rationale": result.rationale,
    }


def result_from_dict(obj: dict) -> VerificationResult:
    return VerificationResult(
        question_id=obj["question_id"],
        tag=obj["tag"],
        comparable_ids=tuple(obj["comparable_ids"]),
        background_ids=tuple(obj["background_ids"]),
        rationale=obj["rationale"],
    )
