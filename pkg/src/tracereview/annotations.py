"""Anchored annotations and the overlay layout engine.

Every annotation pins one finding to one anchor and must carry, besides its
category and severity, the three texts that make it actionable: a summary, a
risk statement, and a repair action. Validation returns the full violation
list rather than stopping at the first problem.

Layout targets a margin column on each page. Callout bodies are packed top to
bottom in highlight order; the first body that does not fit sends itself and
everything after it to a continuation sheet (a prefix rule, so the inline set
is always the maximal leading run). Continued annotations keep a compact index
card in the margin so the page still shows one marker per annotation. Inline
bodies are guaranteed to stay inside the zone; a pathological card stack may
run past the zone bottom, but cards never overlap.

The output is a geometric render plan, not rendered pages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .doc_model import Anchor, AnchoredDocument, Rect, anchor_rects
from .errors import BadGeometry, DuplicateAnnotation

NAMED_CATEGORIES = (
    "Novelty",
    "Clarity",
    "Presentation",
    "Soundness",
    "Experiments",
    "Ethics",
    "Other",
)

SEVERITY_MAJOR = "major"
SEVERITY_MINOR = "minor"
SEVERITIES = frozenset({SEVERITY_MAJOR, SEVERITY_MINOR})


def default_taxonomy(extra_category: str | None = None) -> tuple[str, ...]:
    """The seven built-in category labels, plus one configured extra if given."""
    if extra_category and extra_category not in NAMED_CATEGORIES:
        return NAMED_CATEGORIES + (extra_category,)
    return NAMED_CATEGORIES


@dataclass(frozen=True)
class ProvisionalAnnotation:
    """Annotation draft from the reading loop; severity not yet assigned."""

    ann_id: str
    anchor: Anchor
    category: str
    summary: str
    body: str
    risk_text: str
    repair_text: str
    suggested_severity: str = SEVERITY_MINOR
    question_id: str | None = None


@dataclass(frozen=True)
class Annotation:
    """Finalized anchored finding."""

    ann_id: str
    anchor: Anchor
    category: str
    severity: str
    summary: str
    body: str
    risk_text: str
    repair_text: str
    question_id: str | None = None


def finalize_annotation(draft: ProvisionalAnnotation, severity: str) -> Annotation:
    return Annotation(
        ann_id=draft.ann_id,
        anchor=draft.anchor,
        category=draft.category,
        severity=severity,
        summary=draft.summary,
        body=draft.body,
        risk_text=draft.risk_text,
        repair_text=draft.repair_text,
        question_id=draft.question_id,
    )


def _anchor_in_bounds(anchor: Anchor, doc: AnchoredDocument | Mapping[int, int]) -> bool:
    if isinstance(doc, AnchoredDocument):
        return doc.contains(anchor)
    count = doc.get(anchor.page)
    return count is not None and anchor.k_end <= count


def validate_annotation(
    ann: Annotation,
    doc: AnchoredDocument | Mapping[int, int],
    taxonomy: Sequence[str] = NAMED_CATEGORIES,
) -> list[str]:
    """All violations for one annotation (empty list means valid).

    Codes: AnchorOutOfRange, MissingSummary, MissingRiskText,
    MissingRepairAction, BadCategory, BadSeverity. The document may be given
    as a page-to-line-count mapping so exported bundles can self-check.
    """
    violations: list[str] = []
    if not _anchor_in_bounds(ann.anchor, doc):
        violations.append("AnchorOutOfRange")
    if not ann.summary.strip():
        violations.append("MissingSummary")
    if not ann.risk_text.strip():
        violations.append("MissingRiskText")
    if not ann.repair_text.strip():
        violations.append("MissingRepairAction")
    if ann.category not in taxonomy:
        violations.append("BadCategory")
    if ann.severity not in SEVERITIES:
        violations.append("BadSeverity")
    return violations


# --- layout -------------------------------------------------------------------

@dataclass(frozen=True)
class PageGeometry:
    """Drawing frame for one page. Normalized pages use the 0..100 square."""

    width: float
    height: float
    normalized: bool = False


@dataclass(frozen=True)
class LayoutConfig:
    """Packing knobs, all as fractions of page dimensions (unit free)."""

    margin_frac: float = 0.25
    chars_per_line: int = 40
    line_height_frac: float = 0.02
    card_height_frac: float = 0.04
    gap_frac: float = 0.01
    max_callout_frac: float = 0.30


@dataclass(frozen=True)
class CalloutPlacement:
    """One margin marker: body rect (or index card when continued)."""

    ann_id: str
    page: int
    marker_index: int
    rect: Rect
    connector: tuple[tuple[float, float], tuple[float, float]]
    continued: bool


@dataclass(frozen=True)
class SheetEntry:
    ann_id: str
    body: str


@dataclass(frozen=True)
class ContinuationSheet:
    """Overflow sheet: full bodies plus back links to their page markers."""

    sheet_id: str
    page: int
    entries: tuple[SheetEntry, ...]
    back_links: tuple[tuple[int, int], ...]


def page_geometry(doc: AnchoredDocument, page: int) -> PageGeometry:
    scale = doc.ref_scales.get(page)
    if scale is None:
        return PageGeometry(100.0, 100.0, normalized=True)
    return PageGeometry(scale[0], scale[1], normalized=False)


def margin_zone(geometry: PageGeometry, margin_frac: float) -> Rect:
    """The rightmost `margin_frac` of the page, full height."""
    return Rect(
        x_min=geometry.width * (1.0 - margin_frac),
        y_min=0.0,
        x_max=geometry.width,
        y_max=geometry.height,
        normalized=geometry.normalized,
    )


def estimate_callout_height(
    ann: Annotation, geometry: PageGeometry, config: LayoutConfig
) -> float:
    """Body length to height, via configured chars per line and line height."""
    text = ann.summary + " " + ann.body
    lines = max(1, math.ceil(len(text) / config.chars_per_line))
    return lines * config.line_height_frac * geometry.height


def _sort_top(rects: Sequence[Rect], geometry: PageGeometry) -> float:
    # Fallback rects are normalized even on pages with native units; project
    # them into the page frame so ordering mixes both kinds correctly.
    first = rects[0]
    if first.normalized and not geometry.normalized:
        return first.y_min / 100.0 * geometry.height
    return first.y_min


def layout_callouts(
    page_anns: Sequence[Annotation],
    page: int,
    geometry: PageGeometry,
    zone: Rect,
    max_callout_height: float,
    highlights: Mapping[str, Sequence[Rect]],
    config: LayoutConfig = LayoutConfig(),
) -> tuple[list[CalloutPlacement], list[ContinuationSheet]]:
    """Greedy top-down packing of one page's callouts into the margin zone.

    Annotations are processed in highlight vertical order and markers are
    numbered 1..n in that order. The first body that fails to fit (too tall
    for the cap, or past the zone bottom) flips the layout into continuation
    mode: it and every later annotation get an index card in the margin and a
    full-body entry on the page's continuation sheet.

    Raises:
        BadGeometry: zone without positive area, or nonpositive height cap.
    """
    if not zone.is_valid():
        raise BadGeometry(f"margin zone {zone} has nonpositive area")
    if max_callout_height <= 0:
        raise BadGeometry(f"max callout height {max_callout_height} is nonpositive")
    if geometry.width <= 0 or geometry.height <= 0:
        raise BadGeometry(f"page geometry {geometry} has nonpositive extent")

    ordered = sorted(
        page_anns, key=lambda a: (_sort_top(highlights[a.ann_id], geometry), a.ann_id)
    )
    gap = config.gap_frac * geometry.height
    card_height = config.card_height_frac * geometry.height

    placements: list[CalloutPlacement] = []
    entries: list[SheetEntry] = []
    back_links: list[tuple[int, int]] = []
    cursor = zone.y_min
    overflowed = False
    for marker, ann in enumerate(ordered, start=1):
        if not overflowed:
            height = estimate_callout_height(ann, geometry, config)
            if height > max_callout_height or cursor + height > zone.y_max:
                overflowed = True
        if overflowed:
            height = card_height
        rect = Rect(zone.x_min, cursor, zone.x_max, cursor + height, zone.normalized)
        cursor += height + gap
        first_hl = highlights[ann.ann_id][0]
        hl_y = _sort_top(highlights[ann.ann_id], geometry)
        hl_x = (
            first_hl.x_max / 100.0 * geometry.width
            if first_hl.normalized and not geometry.normalized
            else first_hl.x_max
        )
        connector = ((hl_x, hl_y), (rect.x_min, (rect.y_min + rect.y_max) / 2.0))
        placements.append(
            CalloutPlacement(
                ann_id=ann.ann_id,
                page=page,
                marker_index=marker,
                rect=rect,
                connector=connector,
                continued=overflowed,
            )
        )
        if overflowed:
            entries.append(SheetEntry(ann.ann_id, ann.body))
            back_links.append((page, marker))

    sheets: list[ContinuationSheet] = []
    if entries:
        sheets.append(
            ContinuationSheet(
                sheet_id=f"sheet-p{page}",
                page=page,
                entries=tuple(entries),
                back_links=tuple(back_links),
            )
        )
    return placements, sheets


# --- overlay plan -------------------------------------------------------------

@dataclass(frozen=True)
class HighlightSet:
    ann_id: str
    rects: tuple[Rect, ...]


@dataclass(frozen=True)
class PageOverlay:
    page: int
    geometry: PageGeometry
    highlights: tuple[HighlightSet, ...]
    placements: tuple[CalloutPlacement, ...]
    sheets: tuple[ContinuationSheet, ...]


@dataclass(frozen=True)
class OverlayPlan:
    pages: tuple[PageOverlay, ...]


def render_overlay_plan(
    doc: AnchoredDocument,
    annotations: Sequence[Annotation],
    config: LayoutConfig = LayoutConfig(),
) -> OverlayPlan:
    """Geometric overlay for the whole document.

    Each annotation contributes exactly one highlight set (exact per-line rects
    when every spanned line has geometry, otherwise the normalized fallback
    band) and exactly one margin placement on its page.

    Raises:
        DuplicateAnnotation: two annotations share an id.
        AnchorOutOfRange: an annotation anchor is outside the document.
    """
    seen: set[str] = set()
    for ann in annotations:
        if ann.ann_id in seen:
            raise DuplicateAnnotation(f"annotation id {ann.ann_id!r} appears twice")
        seen.add(ann.ann_id)

    by_page: dict[int, list[Annotation]] = {}
    for ann in annotations:
        by_page.setdefault(ann.anchor.page, []).append(ann)

    pages: list[PageOverlay] = []
    for page in sorted(by_page):
        anns = by_page[page]
        geometry = page_geometry(doc, page)
        highlights = {ann.ann_id: tuple(anchor_rects(doc, ann.anchor)) for ann in anns}
        zone = margin_zone(geometry, config.margin_frac)
        placements, sheets = layout_callouts(
            anns,
            page,
            geometry,
            zone,
            config.max_callout_frac * geometry.height,
            highlights,
            config,
        )
        ordered_ids = [p.ann_id for p in placements]
        pages.append(
            PageOverlay(
                page=page,
                geometry=geometry,
                highlights=tuple(HighlightSet(aid, highlights[aid]) for aid in ordered_ids),
                placements=tuple(placements),
                sheets=tuple(sheets),
            )
        )
    return OverlayPlan(pages=tuple(pages))


# --- serialization ------------------------------------------------------------

def _rect_to_dict(rect: Rect) -> dict:
    return {
        "x_min": rect.x_min,
        "y_min": rect.y_min,
        "x_max": rect.x_max,
        "y_max": rect.y_max,
        "space": "normalized" if rect.normalized else "page-local",
    }


def _rect_from_dict(obj: dict) -> Rect:
    return Rect(
        obj["x_min"], obj["y_min"], obj["x_max"], obj["y_max"],
        normalized=obj["space"] == "normalized",
    )


def annotation_to_dict(ann: Annotation) -> dict:
    return {
        "ann_id": ann.ann_id,
        "anchor": {"page": ann.anchor.page, "k_start": ann.anchor.k_start, "k_end": ann.anchor.k_end},
        "category": ann.category,
        "severity": ann.severity,
        "summary": ann.summary,
        "body": ann.body,
        "risk_text": ann.risk_text,
        "repair_text": ann.repair_text,
        "question_id": ann.question_id,
    }


def annotation_from_dict(obj: dict) -> Annotation:
    a = obj["anchor"]
    return Annotation(
        ann_id=obj["ann_id"],
        anchor=Anchor(a["page"], a["k_start"], a["k_end"]),
        category=obj["category"],
        severity=obj["severity"],
        summary=obj["summary"],
        body=obj["body"],
        risk_text=obj["risk_text"],
        repair_text=obj["repair_text"],
        question_id=obj.get("question_id"),
    )


def plan_to_dict(plan: OverlayPlan) -> dict:
    return {
        "pages": [
            {
                "page": po.page,
                "geometry": {
                    "width": po.geometry.width,
                    "height": po.geometry.height,
                    "space": "normalized" if po.geometry.normalized else "page-local",
                },
                "highlights": [
                    {"ann_id": hs.ann_id, "rects": [_rect_to_dict(r) for r in hs.rects]}
                    for hs in po.highlights
                ],
                "placements": [
                    {
                        "ann_id": p.ann_id,
                        "page": p.page,
                        "marker_index": p.marker_index,
                        "rect": _rect_to_dict(p.rect),
                        "connector": [list(p.connector[0]), list(p.connector[1])],
                        "continued": p.continued,
                    }
                    for p in po.placements
                ],
                "sheets": [
                    {
                        "sheet_id": s.sheet_id,
                        "page": s.page,
                        "entries": [{"ann_id": e.ann_id, "body": e.body} for e in s.entries],
                        "back_links": [list(b) for b in s.back_links],
                    }
                    for s in po.sheets
                ],
            }
            for po in plan.pages
        ]
    }


def plan_from_dict(obj: dict) -> OverlayPlan:
    pages = []
    for po in obj["pages"]:
        geom = PageGeometry(
            po["geometry"]["width"],
            po["geometry"]["height"],
            normalized=po["geometry"]["space"] == "normalized",
        )
        highlights = tuple(
            HighlightSet(h["ann_id"], tuple(_rect_from_dict(r) for r in h["rects"]))
            for h in po["highlights"]
        )
        placements = tuple(
            CalloutPlacement(
                ann_id=p["ann_id"],
                page=p["page"],
                marker_index=p["marker_index"],
                rect=_rect_from_dict(p["rect"]),
                connector=(tuple(p["connector"][0]), tuple(p["connector"][1])),
                continued=p["continued"],
            )
            for p in po["placements"]
        )
        sheets = tuple(
            ContinuationSheet(
                sheet_id=s["sheet_id"],
                page=s["page"],
                entries=tuple(SheetEntry(e["ann_id"], e["body"]) for e in s["entries"]),
                back_links=tuple(tuple(b) for b in s["back_links"]),
            )
            for s in po["sheets"]
        )
        pages.append(PageOverlay(po["page"], geom, highlights, placements, sheets))
    return OverlayPlan(pages=tuple(pages))
