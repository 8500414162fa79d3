"""Anchored document model.

A manuscript arrives as an ordered list of layout blocks. Each block becomes
one line of its page, so an anchor (page, k_start, k_end) names a contiguous
1-based inclusive line run. Geometry is optional: blocks may carry a bounding
box in whatever units the extractor used. Units are treated as opaque; each
page gets a reference scale from the maximum box extents seen on it, and pages
without any boxes fall back to a normalized 0..100 space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AnchorOutOfRange, EmptyDocument, FallbackRequired, MalformedBlock

BLOCK_KINDS = frozenset({"header", "text", "equation", "table", "image", "caption"})

# Fallback highlights span this horizontal band of the normalized page.
FALLBACK_X_MIN = 8.0
FALLBACK_X_MAX = 92.0


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle. `normalized` marks 0..100 page-fraction coords.

    A valid rect has positive area (x_min < x_max, y_min < y_max). Construction
    does not enforce this so that boundary checks can report domain errors
    (MalformedBlock at ingest, BadGeometry at layout) instead of a bare
    ValueError; use `is_valid` where it matters.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    normalized: bool = False

    def is_valid(self) -> bool:
        return self.x_min < self.x_max and self.y_min < self.y_max

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class BlockRecord:
    """One extractor block: a page number, a kind, text, and an optional box."""

    page: int
    kind: str
    text: str
    bbox: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class Line:
    """One line of an anchored page (text plus optional geometry)."""

    text: str
    kind: str
    bbox: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class Anchor:
    """Contiguous line run on one page, 1-based inclusive on both ends."""

    page: int
    k_start: int
    k_end: int

    def __post_init__(self) -> None:
        if self.page < 1 or self.k_start < 1 or self.k_end < self.k_start:
            raise AnchorOutOfRange(
                f"anchor ({self.page}, {self.k_start}, {self.k_end}) is not a valid line run"
            )

    def key(self) -> tuple[int, int, int]:
        return (self.page, self.k_start, self.k_end)


@dataclass(frozen=True)
class AnchoredDocument:
    """Pages of lines plus per-page reference scales.

    `ref_scales[page]` is (width, height) from the maximum box extents observed
    on that page, or None when the page carries no geometry at all.
    """

    pages: dict[int, tuple[Line, ...]]
    ref_scales: dict[int, tuple[float, float] | None]

    def page_numbers(self) -> tuple[int, ...]:
        return tuple(sorted(self.pages))

    def line_count(self, page: int) -> int:
        if page not in self.pages:
            raise AnchorOutOfRange(f"page {page} not in document")
        return len(self.pages[page])

    def lines(self, page: int, k_start: int, k_end: int) -> tuple[Line, ...]:
        self._check_range(page, k_start, k_end)
        return self.pages[page][k_start - 1 : k_end]

    def contains(self, anchor: Anchor) -> bool:
        return (
            anchor.page in self.pages
            and 1 <= anchor.k_start <= anchor.k_end <= len(self.pages[anchor.page])
        )

    def _check_range(self, page: int, k_start: int, k_end: int) -> None:
        if page not in self.pages:
            raise AnchorOutOfRange(f"page {page} not in document")
        count = len(self.pages[page])
        if not (1 <= k_start <= k_end <= count):
            raise AnchorOutOfRange(
                f"lines {k_start}..{k_end} outside page {page} (has {count})"
            )


def _validate_block(index: int, block: BlockRecord) -> None:
    if not isinstance(block.page, int) or isinstance(block.page, bool) or block.page < 1:
        raise MalformedBlock(index, f"page must be an integer >= 1, got {block.page!r}")
    if block.kind not in BLOCK_KINDS:
        raise MalformedBlock(index, f"unknown kind {block.kind!r}")
    if not isinstance(block.text, str):
        raise MalformedBlock(index, "text must be a string")
    if block.bbox is None:
        return
    box = block.bbox
    if len(box) != 4 or any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in box):
        raise MalformedBlock(index, f"bbox must be 4 numbers, got {box!r}")
    x_min, y_min, x_max, y_max = box
    if not (x_min < x_max and y_min < y_max):
        raise MalformedBlock(index, f"bbox {box!r} has nonpositive extent")


def ingest_block_list(blocks: Sequence[BlockRecord]) -> AnchoredDocument:
    """Build an AnchoredDocument from ordered blocks.

    Line numbering on each page follows input order (ingest is order
    preserving). Pages need not be contiguous.

    Raises:
        EmptyDocument: no blocks at all.
        MalformedBlock: a block fails validation; carries the 0-based index.
    """
    if not blocks:
        raise EmptyDocument("block list is empty")
    pages: dict[int, list[Line]] = {}
    for index, block in enumerate(blocks):
        _validate_block(index, block)
        bbox = tuple(float(v) for v in block.bbox) if block.bbox is not None else None
        pages.setdefault(block.page, []).append(Line(block.text, block.kind, bbox))
    ref_scales: dict[int, tuple[float, float] | None] = {}
    for page, lines in pages.items():
        boxes = [line.bbox for line in lines if line.bbox is not None]
        if boxes:
            ref_scales[page] = (max(b[2] for b in boxes), max(b[3] for b in boxes))
        else:
            ref_scales[page] = None
    return AnchoredDocument(
        pages={page: tuple(lines) for page, lines in pages.items()},
        ref_scales=ref_scales,
    )


def load_block_list(path: str | Path) -> list[BlockRecord]:
    """Read the line-delimited block interchange file.

    One JSON object per line with fields page, kind, text, and optional bbox.
    Unknown fields are ignored; anything structurally wrong (bad JSON, missing
    field, unknown kind) raises MalformedBlock with the 0-based record index.
    Blank lines are skipped and do not consume an index.
    """
    records: list[BlockRecord] = []
    index = 0
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedBlock(index, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedBlock(index, "record must be a JSON object")
        missing = {"page", "kind", "text"} - obj.keys()
        if missing:
            raise MalformedBlock(index, f"missing fields: {sorted(missing)}")
        bbox = obj.get("bbox")
        if bbox is not None:
            if not isinstance(bbox, (list, tuple)):
                raise MalformedBlock(index, f"bbox must be an array, got {bbox!r}")
            bbox = tuple(bbox)
        record = BlockRecord(page=obj["page"], kind=obj["kind"], text=obj["text"], bbox=bbox)
        _validate_block(index, record)
        records.append(record)
        index += 1
    return records


def resolve_anchor_rects(doc: AnchoredDocument, anchor: Anchor) -> list[Rect]:
    """Exact highlight geometry: one rect per line of the span, input units.

    The per-line list is kept as is (no convex hull); downstream rendering
    decides how to merge. If any line in the span lacks a box the whole span
    routes to the fallback (FallbackRequired), never a mixed result.

    Raises:
        AnchorOutOfRange: anchor outside the document.
        FallbackRequired: at least one spanned line has no bbox.
    """
    lines = doc.lines(anchor.page, anchor.k_start, anchor.k_end)
    if any(line.bbox is None for line in lines):
        raise FallbackRequired(
            f"span {anchor.key()} has lines without geometry"
        )
    return [Rect(*line.bbox) for line in lines]


def fallback_rect(doc: AnchoredDocument, anchor: Anchor) -> Rect:
    """Whole-span highlight in normalized 0..100 page coordinates.

    The vertical band assumes evenly spaced lines: with L lines on the page,
    the span k_start..k_end maps to y in [100*(k_start-1)/L, 100*k_end/L].
    Horizontally the band covers the conventional text column x in [8, 92].
    """
    doc._check_range(anchor.page, anchor.k_start, anchor.k_end)
    total = doc.line_count(anchor.page)
    y_min = 100.0 * (anchor.k_start - 1) / total
    y_max = 100.0 * anchor.k_end / total
    return Rect(FALLBACK_X_MIN, y_min, FALLBACK_X_MAX, y_max, normalized=True)


def anchor_rects(doc: AnchoredDocument, anchor: Anchor) -> list[Rect]:
    """Resolve exact geometry, falling back to the normalized band when needed."""
    try:
        return resolve_anchor_rects(doc, anchor)
    except FallbackRequired:
        return [fallback_rect(doc, anchor)]


def paragraph_spans(doc: AnchoredDocument) -> list[Anchor]:
    """Paragraph-level spans: maximal same-kind line runs, in page order.

    A span breaks wherever the block kind changes, so a heading, the paragraph
    after it, and a following equation are three spans.
    """
    spans: list[Anchor] = []
    for page in doc.page_numbers():
        lines = doc.pages[page]
        start = 0
        for i in range(1, len(lines) + 1):
            if i == len(lines) or lines[i].kind != lines[start].kind:
                spans.append(Anchor(page, start + 1, i))
                start = i
    return spans


def iter_anchor_lines(doc: AnchoredDocument, anchor: Anchor) -> Iterable[str]:
    """Text of the spanned lines, for provider prompts and audit output."""
    return (line.text for line in doc.lines(anchor.page, anchor.k_start, anchor.k_end))
