"""Training and inference context assembly.

Contexts are windows of pages around a ground-truth page, rendered as
"=== Page {n} ===" blocks under a whitespace-token budget. Two training
formats are produced: multi-turn QA examples whose targets end with a
"(Page N)" citation marker, and reiteration examples whose target restates
the page index plus an excerpt of that page, reinforcing page localization.
`mix_datasets` interleaves the two streams at a configured proportion.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from typing import Any, Iterable, Literal, Mapping, Optional, Sequence

from .model import Document

logger = logging.getLogger(__name__)

PAGE_HEADER = "=== Page {n} ==="
CITATION_RE = re.compile(r"\(page(?:s)?\s+\d+", re.IGNORECASE)


@dataclass(frozen=True)
class WindowSpec:
    """How many pages to keep around the ground-truth page.

    mode "none" keeps only the ground-truth page; "fixed" keeps w pages on
    each side (clipped to the document, trimmed outside-in if over budget);
    "max" expands alternately left then right while the budget allows.
    """

    mode: Literal["none", "fixed", "max"]
    budget: int
    w: Optional[int] = None

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.mode == "fixed" and (self.w is None or self.w < 0):
            raise ValueError("fixed mode requires w >= 0")

    @classmethod
    def parse(cls, text: str, budget: int) -> "WindowSpec":
        """Parse 'none', 'max', or 'fixed:W'."""
        if text in ("none", "max"):
            return cls(text, budget)  # type: ignore[arg-type]
        if text.startswith("fixed:"):
            return cls("fixed", budget, int(text.split(":", 1)[1]))
        raise ValueError(f"bad window spec {text!r}")


@dataclass(frozen=True)
class TrainingExample:
    doc_id: str
    context_pages: tuple[int, ...]
    context_text: str
    history: tuple[tuple[str, str], ...]
    question: str
    target_answer: str


@dataclass(frozen=True)
class ReiterationExample:
    doc_id: str
    context_pages: tuple[int, ...]
    context_text: str
    question: str
    target: str


def window_pages(
    total_pages: int,
    gt_page: int,
    spec: WindowSpec,
    page_lengths: Mapping[int, int],
) -> list[int]:
    """Contiguous page window around the ground-truth page under the budget.

    fixed windows over budget are trimmed outside-in, removing the endpoint
    farther from the ground-truth page (right endpoint first on ties), so
    the ground-truth page is preserved last. max mode expands alternately
    left/right starting left; a side that no longer fits is skipped.
    """
    if not 1 <= gt_page <= total_pages:
        raise ValueError(f"gt_page {gt_page} out of range 1..{total_pages}")

    def length(n: int) -> int:
        return page_lengths[n]

    if spec.mode == "none":
        return [gt_page]

    if spec.mode == "fixed":
        lo = max(1, gt_page - spec.w)  # type: ignore[operator]
        hi = min(total_pages, gt_page + spec.w)  # type: ignore[operator]
        pages = list(range(lo, hi + 1))
        while len(pages) > 1 and sum(length(n) for n in pages) > spec.budget:
            left_dist = gt_page - pages[0]
            right_dist = pages[-1] - gt_page
            if right_dist >= left_dist:
                pages.pop()
            else:
                pages.pop(0)
        return pages

    # max mode: alternate expansion, left first.
    pages = [gt_page]
    total = length(gt_page)
    if total > spec.budget:
        return pages
    left, right = gt_page - 1, gt_page + 1
    prefer_left = True
    while True:
        sides = [("L", left), ("R", right)] if prefer_left else [
            ("R", right), ("L", left)
        ]
        added = False
        for side, n in sides:
            if 1 <= n <= total_pages and total + length(n) <= spec.budget:
                pages.append(n)
                total += length(n)
                if side == "L":
                    left -= 1
                else:
                    right += 1
                prefer_left = side != "L"
                added = True
                break
        if not added:
            return sorted(pages)


def render_context(doc: Document, pages: Sequence[int], budget: int) -> str:
    """Page blocks joined by blank lines; a lone over-budget page is
    truncated to the budget in whitespace tokens."""
    blocks = []
    for n in pages:
        text = doc.page(n).text
        if len(pages) == 1:
            tokens = text.split()
            if len(tokens) > budget:
                logger.warning(
                    "doc %s page %d truncated to %d tokens", doc.doc_id, n, budget
                )
                text = " ".join(tokens[:budget])
        blocks.append(PAGE_HEADER.format(n=n) + "\n" + text)
    return "\n\n".join(blocks)


def citation_marker(pages: Sequence[int]) -> str:
    pages = sorted(set(pages))
    if len(pages) == 1:
        return f"(Page {pages[0]})"
    return "(Pages " + ", ".join(str(p) for p in pages) + ")"


class SkippedExample(ValueError):
    """The dialogue turn cannot be realized against this document."""


def build_qa_example(
    doc: Document,
    dialogue: "DialogueRecord",  # noqa: F821 - qa_gen import would be circular
    turn_index: int,
    spec: WindowSpec,
) -> TrainingExample:
    """Training example for 1-based turn `turn_index` of a dialogue.

    History carries the prior turns verbatim; the target answer ends with
    the canonical citation marker for the turn's ground-truth page.
    """
    turns = dialogue.turns
    if not 1 <= turn_index <= len(turns):
        raise SkippedExample(f"turn {turn_index} out of range")
    turn = turns[turn_index - 1]
    gt_page = turn.page_no
    if gt_page is None or not 1 <= gt_page <= doc.page_count:
        raise SkippedExample(
            f"doc {doc.doc_id}: cited page {gt_page!r} absent from document"
        )
    lengths = {p.page_no: p.token_length for p in doc.pages}
    pages = window_pages(doc.page_count, gt_page, spec, lengths)
    target = turn.answer
    if not CITATION_RE.search(target):
        target = f"{target} {citation_marker([gt_page])}"
    return TrainingExample(
        doc_id=doc.doc_id,
        context_pages=tuple(pages),
        context_text=render_context(doc, pages, spec.budget),
        history=tuple((t.question, t.answer) for t in turns[: turn_index - 1]),
        question=turn.question,
        target_answer=target,
    )


def build_reiteration_example(
    doc: Document,
    dialogue: "DialogueRecord",  # noqa: F821
    turn_index: int,
    spec: WindowSpec,
    excerpt_tokens: int = 64,
) -> ReiterationExample:
    """Page-localization example: the target restates "Page {p}: " plus the
    first `excerpt_tokens` whitespace tokens of the ground-truth page."""
    qa = build_qa_example(doc, dialogue, turn_index, spec)
    gt_page = dialogue.turns[turn_index - 1].page_no
    excerpt = " ".join(doc.page(gt_page).text.split()[:excerpt_tokens])
    return ReiterationExample(
        doc_id=doc.doc_id,
        context_pages=qa.context_pages,
        context_text=qa.context_text,
        question=qa.question,
        target=f"Page {gt_page}: {excerpt}",
    )


# Observed corpus proportion of reiteration examples in the training mix:
# 64k reiteration against 360k QA examples.
DEFAULT_REITERATION_COUNT = 64_000
DEFAULT_QA_COUNT = 360_000
DEFAULT_MIX_RATIO = DEFAULT_REITERATION_COUNT / (
    DEFAULT_REITERATION_COUNT + DEFAULT_QA_COUNT
)


def mix_datasets(
    qa_stream: Sequence[Any],
    reiteration_stream: Sequence[Any],
    ratio: float,
    seed: int = 0,
) -> list[Any]:
    """Deterministic interleave with reiteration items paced at `ratio`.

    A fractional accumulator (seeded starting phase) emits one reiteration
    item each time it crosses 1, so every window of 1/ratio items carries
    one reiteration item (+-1). All items from both streams appear exactly
    once; when one stream runs dry the other is drained in order.
    """
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    if not qa_stream:
        raise ValueError("qa_stream is empty")
    rng = random.Random(seed)
    acc = rng.random()
    out: list[Any] = []
    qi, ri = 0, 0
    while qi < len(qa_stream) or ri < len(reiteration_stream):
        acc += ratio
        take_reit = acc >= 1.0
        if take_reit:
            acc -= 1.0
        if take_reit and ri < len(reiteration_stream):
            out.append(reiteration_stream[ri])
            ri += 1
        elif qi < len(qa_stream):
            out.append(qa_stream[qi])
            qi += 1
        elif ri < len(reiteration_stream):
            out.append(reiteration_stream[ri])
            ri += 1
    return out


# ---------------------------------------------------------------------------
# Training-file serialization
# ---------------------------------------------------------------------------


def example_to_dict(ex: TrainingExample | ReiterationExample) -> dict[str, Any]:
    if isinstance(ex, TrainingExample):
        return {
            "type": "qa",
            "doc_id": ex.doc_id,
            "context_pages": list(ex.context_pages),
            "context": ex.context_text,
            "history": [[q, a] for q, a in ex.history],
            "question": ex.question,
            "target": ex.target_answer,
        }
    return {
        "type": "reiteration",
        "doc_id": ex.doc_id,
        "context_pages": list(ex.context_pages),
        "context": ex.context_text,
        "history": [],
        "question": ex.question,
        "target": ex.target,
    }


def write_examples_jsonl(
    examples: Iterable[TrainingExample | ReiterationExample], path: str
) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_dict(ex), ensure_ascii=False) + "\n")
            n += 1
    return n
