"""Core document data model.

A `Document` is a list of `Page`s; each page carries OCR text lines with
normalized bounding boxes and the paragraphs those lines were grouped into.
All coordinates are unitless fractions of the page width/height so that
downstream consumers never need the original pixel geometry.

Documents are immutable after construction and safe to share across threads.
Serialization uses a fixed key order so that emitted JSONL is byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized page coordinates (fractions in [0,1])."""

    x_left: float
    y_top: float
    x_right: float
    y_bottom: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x_left <= self.x_right <= 1.0):
            raise ValueError(f"invalid x extent: {self.x_left}..{self.x_right}")
        if not (0.0 <= self.y_top <= self.y_bottom <= 1.0):
            raise ValueError(f"invalid y extent: {self.y_top}..{self.y_bottom}")

    @property
    def width(self) -> float:
        return self.x_right - self.x_left

    @property
    def height(self) -> float:
        return self.y_bottom - self.y_top

    def union(self, other: "BBox") -> "BBox":
        return BBox(
            min(self.x_left, other.x_left),
            min(self.y_top, other.y_top),
            max(self.x_right, other.x_right),
            max(self.y_bottom, other.y_bottom),
        )

    def contains(self, other: "BBox") -> bool:
        return (
            self.x_left <= other.x_left
            and self.y_top <= other.y_top
            and self.x_right >= other.x_right
            and self.y_bottom >= other.y_bottom
        )

    def as_list(self) -> list[float]:
        return [self.x_left, self.y_top, self.x_right, self.y_bottom]

    @classmethod
    def from_list(cls, coords: Iterable[float]) -> "BBox":
        return cls(*coords)


@dataclass(frozen=True)
class TextLine:
    """One OCR line: trimmed text, normalized box, 0-based ordinal on its page."""

    text: str
    box: BBox
    line_index: int

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"line {self.line_index}: empty text")


@dataclass(frozen=True)
class Paragraph:
    """A group of lines merged by layout heuristics.

    `box` is the rectangle union of the member-line boxes; `member_lines`
    holds the line indices, each of which belongs to exactly one paragraph
    on the page.
    """

    text: str
    page_no: int
    box: BBox
    member_lines: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.member_lines:
            raise ValueError("paragraph with no member lines")


@dataclass(frozen=True)
class Page:
    """A single document page with its lines, paragraphs, and visual metadata.

    `tags` and `masks` are optional precomputed annotations supplied by the
    caller; nothing in this package ever computes them.
    """

    page_no: int
    width_px: int
    height_px: int
    lines: tuple[TextLine, ...]
    paragraphs: tuple[Paragraph, ...]
    tags: Optional[tuple[str, ...]] = None
    masks: Optional[tuple[tuple[str, BBox], ...]] = None

    def __post_init__(self) -> None:
        if self.page_no < 1:
            raise ValueError(f"page_no must be 1-based, got {self.page_no}")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError(f"page {self.page_no}: non-positive dimensions")

    @property
    def text(self) -> str:
        """Page text: paragraph texts joined by newlines, in reading order."""
        return "\n".join(p.text for p in self.paragraphs)

    @property
    def token_length(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Document:
    """A multi-page document; pages sorted ascending by page_no with no gaps."""

    doc_id: str
    pages: tuple[Page, ...]
    cluster: Optional[str] = None
    word_count: int = field(default=0)

    def __post_init__(self) -> None:
        expected = 1
        for page in self.pages:
            if page.page_no != expected:
                raise ValueError(
                    f"document {self.doc_id}: missing page {expected} "
                    f"(found page {page.page_no})"
                )
            expected += 1
        recount = sum(p.token_length for p in self.pages)
        if self.word_count != recount:
            raise ValueError(
                f"document {self.doc_id}: word_count {self.word_count} != {recount}"
            )

    @property
    def page_count(self) -> int:
        return len(self.pages)

    def page(self, page_no: int) -> Page:
        if not 1 <= page_no <= len(self.pages):
            raise KeyError(f"document {self.doc_id}: no page {page_no}")
        return self.pages[page_no - 1]


# ---------------------------------------------------------------------------
# Canonical serialization (fixed key order, byte-stable)
# ---------------------------------------------------------------------------


def document_to_dict(doc: Document) -> dict[str, Any]:
    return {
        "doc_id": doc.doc_id,
        "cluster": doc.cluster,
        "word_count": doc.word_count,
        "pages": [
            {
                "page_no": p.page_no,
                "width_px": p.width_px,
                "height_px": p.height_px,
                "lines": [
                    {"text": ln.text, "box": ln.box.as_list()} for ln in p.lines
                ],
                "paragraphs": [
                    {
                        "text": par.text,
                        "page_no": par.page_no,
                        "box": par.box.as_list(),
                        "member_lines": list(par.member_lines),
                    }
                    for par in p.paragraphs
                ],
                "tags": list(p.tags) if p.tags is not None else None,
                "masks": [[label, box.as_list()] for label, box in p.masks]
                if p.masks is not None
                else None,
            }
            for p in doc.pages
        ],
    }


def document_from_dict(record: dict[str, Any]) -> Document:
    pages = []
    for p in record["pages"]:
        lines = tuple(
            TextLine(ln["text"], BBox.from_list(ln["box"]), i)
            for i, ln in enumerate(p["lines"])
        )
        paragraphs = tuple(
            Paragraph(
                par["text"],
                par["page_no"],
                BBox.from_list(par["box"]),
                tuple(par["member_lines"]),
            )
            for par in p["paragraphs"]
        )
        tags = tuple(p["tags"]) if p.get("tags") is not None else None
        masks = (
            tuple((label, BBox.from_list(box)) for label, box in p["masks"])
            if p.get("masks") is not None
            else None
        )
        pages.append(
            Page(p["page_no"], p["width_px"], p["height_px"], lines, paragraphs,
                 tags, masks)
        )
    return Document(
        doc_id=record["doc_id"],
        pages=tuple(pages),
        cluster=record.get("cluster"),
        word_count=record["word_count"],
    )


def document_to_json(doc: Document) -> str:
    return json.dumps(document_to_dict(doc), ensure_ascii=False)


def document_from_json(line: str) -> Document:
    return document_from_dict(json.loads(line))


def write_documents_jsonl(docs: Iterable[Document], path: str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(document_to_json(doc) + "\n")
            n += 1
    return n


def read_documents_jsonl(path: str) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                docs.append(document_from_json(line))
    return docs
