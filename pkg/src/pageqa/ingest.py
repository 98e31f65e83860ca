"""OCR ingestion: pixel-box normalization and layout-aware paragraph grouping.

Input is one JSON record per page:

    {doc_id, page_no, width_px, height_px,
     lines: [{text, box: [x0, y0, x1, y1] in pixels}], tags?, masks?}

Lines are grouped into paragraphs by a two-knob layout heuristic: adjacent
lines in vertical order merge when the vertical gap is at most
``gap_factor`` times the median line height on the page AND their horizontal
overlap ratio is at least ``overlap_min``; the merge relation is closed
transitively. Paragraphs are emitted in reading order (top-to-bottom, then
left-to-right on their top-left corners).
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .model import BBox, Document, Page, Paragraph, TextLine

logger = logging.getLogger(__name__)

DEFAULT_GAP_FACTOR = 0.8
DEFAULT_OVERLAP_MIN = 0.3


class IngestError(ValueError):
    """Raised when an OCR record cannot be turned into a valid document."""


@dataclass
class MergeRules:
    """Thresholds for the line-merge predicate."""

    gap_factor: float = DEFAULT_GAP_FACTOR
    overlap_min: float = DEFAULT_OVERLAP_MIN


@dataclass
class IngestStats:
    """Counters accumulated while parsing; clamped boxes are warnings, not errors."""

    clamp_warnings: int = 0
    pages: int = 0
    lines: int = 0


def normalize_bbox(
    rect: tuple[float, float, float, float],
    page_dims: tuple[int, int],
    stats: Optional[IngestStats] = None,
) -> BBox:
    """Divide a pixel rectangle by the page dimensions.

    Rectangles extending past the page are clamped to the page bounds and
    counted in ``stats.clamp_warnings``.
    """
    w, h = page_dims
    if w <= 0 or h <= 0:
        raise IngestError(f"non-positive page dimensions {w}x{h}")
    x0, y0, x1, y1 = rect
    clamped = x0 < 0 or y0 < 0 or x1 > w or y1 > h
    if clamped:
        x0, x1 = max(0.0, x0), min(float(w), x1)
        y0, y1 = max(0.0, y0), min(float(h), y1)
        if stats is not None:
            stats.clamp_warnings += 1
        logger.warning("bbox clamped to page bounds: %s", rect)
    return BBox(x0 / w, y0 / h, x1 / w, y1 / h)


def _vertical_gap(a: BBox, b: BBox) -> float:
    """Gap between two boxes in y-order (b below a); overlap counts as zero."""
    return max(0.0, b.y_top - a.y_bottom)


def _horizontal_overlap_ratio(a: BBox, b: BBox) -> float:
    inter = min(a.x_right, b.x_right) - max(a.x_left, b.x_left)
    denom = min(a.width, b.width)
    if denom <= 0.0:
        return 0.0
    return max(0.0, inter) / denom


def _should_merge(a: BBox, b: BBox, median_height: float, rules: MergeRules) -> bool:
    return (
        _vertical_gap(a, b) <= rules.gap_factor * median_height
        and _horizontal_overlap_ratio(a, b) >= rules.overlap_min
    )


def group_lines(
    lines: list[TextLine],
    rules: Optional[MergeRules] = None,
    page_no: int = 1,
) -> list[Paragraph]:
    """Partition lines into paragraphs.

    The merge predicate applies to adjacent lines in (y_top, x_left) order
    and is closed transitively, so a paragraph is a maximal run of
    merge-linked lines. Paragraph text joins member lines with single spaces
    in reading order.
    """
    if not lines:
        return []
    rules = rules or MergeRules()
    ordered = sorted(lines, key=lambda ln: (ln.box.y_top, ln.box.x_left))
    median_height = statistics.median(ln.box.height for ln in ordered)

    groups: list[list[TextLine]] = [[ordered[0]]]
    for prev, cur in zip(ordered, ordered[1:]):
        if _should_merge(prev.box, cur.box, median_height, rules):
            groups[-1].append(cur)
        else:
            groups.append([cur])

    paragraphs = []
    for group in groups:
        box = group[0].box
        for ln in group[1:]:
            box = box.union(ln.box)
        paragraphs.append(
            Paragraph(
                text=" ".join(ln.text for ln in group),
                page_no=page_no,
                box=box,
                member_lines=tuple(ln.line_index for ln in group),
            )
        )
    paragraphs.sort(key=lambda p: (p.box.y_top, p.box.x_left))
    return paragraphs


_REQUIRED_PAGE_FIELDS = ("page_no", "width_px", "height_px", "lines")


def parse_document(
    raw: Iterable[dict[str, Any]],
    doc_id: str,
    rules: Optional[MergeRules] = None,
    stats: Optional[IngestStats] = None,
) -> Document:
    """Build a Document from a stream of per-page OCR records.

    Records may arrive in any page order; pages must form a gap-free 1..P
    range. Malformed records are rejected with the record index; whitespace-
    only lines are dropped.
    """
    stats = stats if stats is not None else IngestStats()
    pages_by_no: dict[int, Page] = {}
    for idx, record in enumerate(raw):
        for key in _REQUIRED_PAGE_FIELDS:
            if key not in record:
                raise IngestError(f"record {idx}: missing field {key!r}")
        page_no = record["page_no"]
        w, h = record["width_px"], record["height_px"]
        if not (isinstance(w, int) and isinstance(h, int)) or w <= 0 or h <= 0:
            raise IngestError(f"record {idx}: non-positive dimensions {w}x{h}")
        if not isinstance(page_no, int) or page_no < 1:
            raise IngestError(f"record {idx}: bad page_no {page_no!r}")
        if page_no in pages_by_no:
            raise IngestError(f"record {idx}: duplicate page {page_no}")

        lines = []
        for raw_line in record["lines"]:
            if "text" not in raw_line or "box" not in raw_line:
                raise IngestError(f"record {idx}: line missing text/box")
            text = raw_line["text"].strip()
            if not text:
                continue
            box = normalize_bbox(tuple(raw_line["box"]), (w, h), stats)
            lines.append(TextLine(text, box, len(lines)))

        tags = tuple(record["tags"]) if record.get("tags") is not None else None
        masks = (
            tuple(
                (label, normalize_bbox(tuple(box), (w, h), stats))
                for label, box in record["masks"]
            )
            if record.get("masks") is not None
            else None
        )
        pages_by_no[page_no] = Page(
            page_no=page_no,
            width_px=w,
            height_px=h,
            lines=tuple(lines),
            paragraphs=tuple(group_lines(lines, rules, page_no=page_no)),
            tags=tags,
            masks=masks,
        )
        stats.pages += 1
        stats.lines += len(lines)

    for expected in range(1, len(pages_by_no) + 1):
        if expected not in pages_by_no:
            raise IngestError(f"document {doc_id}: missing page {expected}")
    ordered_pages = tuple(pages_by_no[n] for n in sorted(pages_by_no))
    word_count = sum(p.token_length for p in ordered_pages)
    return Document(doc_id=doc_id, pages=ordered_pages, word_count=word_count)
