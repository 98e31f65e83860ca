"""Shared fixtures: synthetic documents and deterministic mock gateways."""

from __future__ import annotations

import random

import pytest

from pageqa.gateway import MockGateway
from pageqa.model import BBox, Document, Page, Paragraph, TextLine


def make_line(text: str, x0: float, y0: float, x1: float, y1: float,
              index: int = 0) -> TextLine:
    return TextLine(text, BBox(x0, y0, x1, y1), index)


def make_page(page_no: int, texts: list[str]) -> Page:
    """One paragraph per text, stacked far apart vertically."""
    lines = []
    paragraphs = []
    for i, text in enumerate(texts):
        y0 = min(0.9, 0.05 + 0.1 * i)
        box = BBox(0.1, y0, 0.9, y0 + 0.02)
        lines.append(TextLine(text, box, i))
        paragraphs.append(Paragraph(text, page_no, box, (i,)))
    return Page(page_no, 1000, 1000, tuple(lines), tuple(paragraphs))


def make_document(doc_id: str, page_texts: list[str]) -> Document:
    pages = tuple(make_page(i + 1, [t] if t else [])
                  for i, t in enumerate(page_texts))
    return Document(doc_id, pages,
                    word_count=sum(len(t.split()) for t in page_texts))


def random_words(rng: random.Random, n: int, vocab_size: int = 500) -> str:
    return " ".join(f"w{rng.randrange(vocab_size)}" for _ in range(n))


def mock_gateway(records: list[dict]) -> MockGateway:
    return MockGateway(records)


@pytest.fixture
def always_answerable_gateway() -> MockGateway:
    """question -> fixed, answer -> answerable page 1, decompose -> 2 turns."""
    return MockGateway([
        {"role": "question_gen", "prompt_hash": "*",
         "reply": "What is discussed?"},
        {"role": "answer_gen", "prompt_hash": "*",
         "reply": {"answerable": True, "answer": "Topic X is discussed.",
                   "page": 1}},
        {"role": "decomposer", "prompt_hash": "*",
         "reply": {"turns": [
             {"question": "What topic appears?", "answer": "Topic X.",
              "page": 1},
             {"question": "Where is it discussed?",
              "answer": "On the first page.", "page": 1},
         ]}},
    ])
