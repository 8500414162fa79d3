"""Strict-policy coverage scoring against a canonical issue list.

Evaluation protocol one: given a curated list of ground-truth issues per
paper, each system's review either covers an issue (1), misses it (0), or got
no usable verdict from the judge (missing). The policy is strict on purpose:
absent and missing verdicts both score zero while the issue stays in the
denominator, so silence can only hurt. All arithmetic stays in exact
fractions until formatting, and an empty denominator is reported as
undefined, never as zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .annotations import SEVERITY_MAJOR, SEVERITY_MINOR, SEVERITIES
from .errors import (
    DuplicateLabel,
    EmptyDenominator,
    MalformedRecord,
    UnknownIssue,
)

MISSING = "missing"
LABEL_VALUES = (0, 1, MISSING)


@dataclass(frozen=True)
class CanonicalIssue:
    """One ground-truth issue for one paper."""

    issue_id: str
    paper_id: str
    severity: str
    category: str
    description: str


@dataclass(frozen=True)
class CoverageLabel:
    """One judged verdict: did this system's review cover this issue."""

    system_id: str
    paper_id: str
    issue_id: str
    label: int | str


@dataclass(frozen=True)
class CoverageRow:
    """One system's line in the coverage table. None means undefined."""

    system_id: str
    overall: Fraction | None
    major: Fraction | None
    minor: Fraction | None
    critical_miss: Fraction | None


def load_issue_file(path: str | Path) -> list[CanonicalIssue]:
    """Read the line-delimited issue list.

    Raises:
        MalformedRecord: missing field, bad severity, or a duplicate
            (paper_id, issue_id) pair.
    """
    issues: list[CanonicalIssue] = []
    seen: set[tuple[str, str]] = set()
    for index, obj in _iter_records(path):
        for field_name in ("issue_id", "paper_id", "severity", "category", "description"):
            if field_name not in obj:
                raise MalformedRecord(f"issue record {index}: missing {field_name}")
        if obj["severity"] not in SEVERITIES:
            raise MalformedRecord(
                f"issue record {index}: severity must be one of {sorted(SEVERITIES)}"
            )
        key = (obj["paper_id"], obj["issue_id"])
        if key in seen:
            raise MalformedRecord(f"issue record {index}: duplicate issue {key}")
        seen.add(key)
        issues.append(
            CanonicalIssue(
                issue_id=obj["issue_id"],
                paper_id=obj["paper_id"],
                severity=obj["severity"],
                category=obj["category"],
                description=obj["description"],
            )
        )
    return issues


def load_label_file(path: str | Path, issues: Sequence[CanonicalIssue]) -> list[CoverageLabel]:
    """Read the line-delimited label file and check it against the issues.

    Raises:
        DuplicateLabel: two records share (system, paper, issue).
        UnknownIssue: a record cites a pair absent from the issue list.
        MalformedRecord: missing field or a label outside {0, 1, "missing"}.
    """
    known = {(i.paper_id, i.issue_id) for i in issues}
    labels: list[CoverageLabel] = []
    seen: set[tuple[str, str, str]] = set()
    for index, obj in _iter_records(path):
        for field_name in ("system_id", "paper_id", "issue_id", "label"):
            if field_name not in obj:
                raise MalformedRecord(f"label record {index}: missing {field_name}")
        label = obj["label"]
        if label not in (0, 1, MISSING) or isinstance(label, bool):
            raise MalformedRecord(f"label record {index}: label {label!r} not in {{0, 1, missing}}")
        if (obj["paper_id"], obj["issue_id"]) not in known:
            raise UnknownIssue(
                f"label record {index}: no issue {(obj['paper_id'], obj['issue_id'])}"
            )
        key = (obj["system_id"], obj["paper_id"], obj["issue_id"])
        if key in seen:
            raise DuplicateLabel(f"label record {index}: duplicate key {key}")
        seen.add(key)
        labels.append(CoverageLabel(obj["system_id"], obj["paper_id"], obj["issue_id"], label))
    return labels


def _iter_records(path: str | Path) -> Iterable[tuple[int, dict]]:
    index = 0
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"record {index}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedRecord(f"record {index}: not an object")
        yield index, obj
        index += 1


def _label_map(labels: Sequence[CoverageLabel], system_id: str) -> dict[tuple[str, str], int | str]:
    return {
        (lab.paper_id, lab.issue_id): lab.label
        for lab in labels
        if lab.system_id == system_id
    }


def _covered_fraction(
    issues: Sequence[CanonicalIssue], label_of: Mapping[tuple[str, str], int | str]
) -> Fraction | None:
    """Strict fold: numerator counts only explicit 1s, denominator all issues."""
    if not issues:
        return None
    hits = sum(1 for issue in issues if label_of.get((issue.paper_id, issue.issue_id)) == 1)
    return Fraction(hits, len(issues))


def overall_coverage(
    issues: Sequence[CanonicalIssue], labels: Sequence[CoverageLabel], system_id: str
) -> Fraction:
    """Covered share over every issue of every paper.

    Raises:
        EmptyDenominator: the issue list is empty.
    """
    value = _covered_fraction(issues, _label_map(labels, system_id))
    if value is None:
        raise EmptyDenominator("no issues to cover")
    return value


def severity_coverage(
    issues: Sequence[CanonicalIssue], labels: Sequence[CoverageLabel], system_id: str
) -> dict[str, Fraction | None]:
    """Major and minor coverage plus the critical-miss complement.

    critical_miss = 1 - major coverage; each value is None (undefined) when
    its severity bucket holds no issues.
    """
    label_of = _label_map(labels, system_id)
    major = _covered_fraction([i for i in issues if i.severity == SEVERITY_MAJOR], label_of)
    minor = _covered_fraction([i for i in issues if i.severity == SEVERITY_MINOR], label_of)
    return {
        "major": major,
        "minor": minor,
        "critical_miss": (1 - major) if major is not None else None,
    }


def category_coverage(
    issues: Sequence[CanonicalIssue], labels: Sequence[CoverageLabel], system_id: str
) -> dict[str, Fraction]:
    """Per-category coverage over categories that actually have issues."""
    label_of = _label_map(labels, system_id)
    out: dict[str, Fraction] = {}
    for category in sorted({i.category for i in issues}):
        subset = [i for i in issues if i.category == category]
        value = _covered_fraction(subset, label_of)
        if value is not None:
            out[category] = value
    return out


def coverage_rows(
    issues: Sequence[CanonicalIssue],
    labels: Sequence[CoverageLabel],
    systems: Sequence[str] | None = None,
) -> list[CoverageRow]:
    """Table rows for all systems, best overall coverage first.

    Systems default to those present in the label file; pass them explicitly
    to include a system that produced no labels at all (it scores zero).
    """
    if systems is None:
        systems = sorted({lab.system_id for lab in labels})
    rows = []
    for system_id in systems:
        overall = overall_coverage(issues, labels, system_id)
        by_severity = severity_coverage(issues, labels, system_id)
        rows.append(
            CoverageRow(
                system_id=system_id,
                overall=overall,
                major=by_severity["major"],
                minor=by_severity["minor"],
                critical_miss=by_severity["critical_miss"],
            )
        )
    rows.sort(key=lambda r: (-(r.overall if r.overall is not None else -1), r.system_id))
    return rows


def format_fraction_pct(value: Fraction | None) -> str:
    """'57.14' style two-decimal percent, or the explicit word 'undefined'."""
    if value is None:
        return "undefined"
    return f"{float(value) * 100:.2f}"


# --- judge-driven labeling ----------------------------------------------------

def judge_coverage(issue: CanonicalIssue, review_text: str, system_id: str, judge) -> CoverageLabel:
    """Ask the judge port for one verdict; unparseable output becomes MISSING.

    Transport failures (ProviderError) propagate; a judge that answered with
    something other than a 0/1 label yields the explicit missing value.
    """
    raw = judge.judge_issue(issue, review_text)
    label: int | str
    if isinstance(raw, Mapping) and raw.get("label") in (0, 1) and not isinstance(raw.get("label"), bool):
        label = raw["label"]
    else:
        label = MISSING
    return CoverageLabel(
        system_id=system_id, paper_id=issue.paper_id, issue_id=issue.issue_id, label=label
    )


def judge_reviews(
    issues: Sequence[CanonicalIssue],
    reviews: Sequence[Mapping[str, str]],
    judge,
) -> list[CoverageLabel]:
    """Label every issue of every reviewed paper, one verdict per issue.

    `reviews` records carry system_id, paper_id, and review_text. Each
    (system, paper, issue) triple is judged exactly once; a duplicate review
    record for the same (system, paper) is a caller error.

    Raises:
        DuplicateLabel: two review records for one (system, paper).
    """
    seen: set[tuple[str, str]] = set()
    labels: list[CoverageLabel] = []
    for review in reviews:
        key = (review["system_id"], review["paper_id"])
        if key in seen:
            raise DuplicateLabel(f"two reviews for {key}")
        seen.add(key)
        for issue in issues:
            if issue.paper_id != review["paper_id"]:
                continue
            labels.append(
                judge_coverage(issue, review["review_text"], review["system_id"], judge)
            )
    return labels
