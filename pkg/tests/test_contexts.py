"""Window computation, training-example assembly, dataset mixing."""

import random

import pytest

from pageqa.contexts import (
    SkippedExample,
    WindowSpec,
    build_qa_example,
    build_reiteration_example,
    example_to_dict,
    mix_datasets,
    window_pages,
)
from pageqa.qa_gen import DialogueRecord, QARecord

from conftest import make_document

AMPLE = 10**9


def lengths(total, each=100):
    return {n: each for n in range(1, total + 1)}


class TestWindowPages:
    def test_fixed_definition(self):
        spec = WindowSpec("fixed", AMPLE, 1)
        assert window_pages(10, 5, spec, lengths(10)) == [4, 5, 6]

    def test_fixed_boundary_clipping(self):
        spec = WindowSpec("fixed", AMPLE, 3)
        assert window_pages(10, 1, spec, lengths(10)) == [1, 2, 3, 4]

    def test_max_alternating_expansion(self):
        spec = WindowSpec("max", 350)
        assert window_pages(6, 4, spec, lengths(6)) == [3, 4, 5]

    def test_none_mode(self):
        spec = WindowSpec("none", 10)
        assert window_pages(10, 7, spec, lengths(10)) == [7]

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            window_pages(5, 6, WindowSpec("none", 10), lengths(5))

    def test_fixed_matches_brute_force_all_small_docs(self):
        for total in range(1, 51):
            page_lengths = lengths(total, 10)
            for g in range(1, total + 1):
                for w in (0, 1, 3):
                    got = window_pages(total, g, WindowSpec("fixed", AMPLE, w),
                                       page_lengths)
                    expect = list(range(max(1, g - w), min(total, g + w) + 1))
                    assert got == expect

    def test_max_matches_trace_oracle_randomized(self):
        rng = random.Random(13)
        for _ in range(200):
            total = rng.randrange(1, 30)
            g = rng.randrange(1, total + 1)
            page_lengths = {n: rng.randrange(1, 120)
                            for n in range(1, total + 1)}
            budget = rng.randrange(1, 1200)
            got = window_pages(total, g, WindowSpec("max", budget),
                               page_lengths)
            assert got == _max_oracle(total, g, budget, page_lengths)
            if page_lengths[g] <= budget:
                assert sum(page_lengths[n] for n in got) <= budget
            assert g in got
            assert got == list(range(got[0], got[-1] + 1))

    def test_fixed_trim_preserves_gt_page(self):
        page_lengths = {1: 500, 2: 500, 3: 10, 4: 500, 5: 500}
        got = window_pages(5, 3, WindowSpec("fixed", 20, 2), page_lengths)
        assert got == [3]
        # ties trim the right endpoint first, so the left neighbor survives
        got = window_pages(5, 3, WindowSpec("fixed", 515, 2), page_lengths)
        assert got == [2, 3]


def _max_oracle(total, g, budget, page_lengths):
    """Literal trace of alternating left-first expansion."""
    pages = [g]
    used = page_lengths[g]
    if used > budget:
        return [g]
    left, right = g - 1, g + 1
    prefer = "L"
    while True:
        order = ["L", "R"] if prefer == "L" else ["R", "L"]
        for side in order:
            n = left if side == "L" else right
            if 1 <= n <= total and used + page_lengths[n] <= budget:
                pages.append(n)
                used += page_lengths[n]
                if side == "L":
                    left -= 1
                else:
                    right += 1
                prefer = "R" if side == "L" else "L"
                break
        else:
            return sorted(pages)


def _dialogue(doc_id, turns):
    return DialogueRecord(
        doc_id=doc_id,
        persona_id="p1",
        turns=tuple(
            QARecord(question=q, answer=a, page_no=p, answerable=True,
                     persona_id="p1", doc_id=doc_id)
            for q, a, p in turns
        ),
    )


class TestBuildExamples:
    def setup_method(self):
        self.doc = make_document(
            "doc1",
            [f"page {n} body text with details number{n}" for n in range(1, 6)],
        )
        self.dialogue = _dialogue("doc1", [
            ("first question", "first answer", 2),
            ("second question", "second answer", 4),
        ])
        self.spec = WindowSpec("fixed", AMPLE, 1)

    def test_history_is_prior_turns(self):
        ex = build_qa_example(self.doc, self.dialogue, 2, self.spec)
        assert ex.history == (("first question", "first answer"),)

    def test_first_turn_empty_history(self):
        ex = build_qa_example(self.doc, self.dialogue, 1, self.spec)
        assert ex.history == ()

    def test_context_window_and_headers(self):
        ex = build_qa_example(self.doc, self.dialogue, 1, self.spec)
        assert ex.context_pages == (1, 2, 3)
        assert "=== Page 2 ===" in ex.context_text

    def test_citation_marker_appended(self):
        ex = build_qa_example(self.doc, self.dialogue, 2, self.spec)
        assert ex.target_answer.endswith("(Page 4)")

    def test_absent_page_skipped(self):
        bad = _dialogue("doc1", [("q", "a", 99)])
        with pytest.raises(SkippedExample, match="99"):
            build_qa_example(self.doc, bad, 1, self.spec)

    def test_reiteration_prefix(self):
        doc = make_document("d", ["", "", "", "", "", "",
                                  "alpha beta gamma delta"])
        dlg = _dialogue("d", [("where?", "described", 7)])
        ex = build_reiteration_example(doc, dlg, 1, WindowSpec("none", AMPLE),
                                       excerpt_tokens=2)
        assert ex.target == "Page 7: alpha beta"

    def test_reiteration_saturation(self):
        doc = make_document("d", ["alpha beta"])
        dlg = _dialogue("d", [("q", "a", 1)])
        ex = build_reiteration_example(doc, dlg, 1, WindowSpec("none", AMPLE),
                                       excerpt_tokens=50)
        assert ex.target == "Page 1: alpha beta"

    def test_byte_identical_across_runs(self):
        import json

        a = json.dumps(example_to_dict(
            build_qa_example(self.doc, self.dialogue, 2, self.spec)))
        b = json.dumps(example_to_dict(
            build_qa_example(self.doc, self.dialogue, 2, self.spec)))
        assert a == b


class TestMixDatasets:
    def test_contains_all_items_once(self):
        qa = [("qa", i) for i in range(90)]
        reit = [("re", i) for i in range(10)]
        mixed = mix_datasets(qa, reit, 0.1, seed=5)
        assert sorted(map(repr, mixed)) == sorted(map(repr, qa + reit))

    def test_exact_ratio_counts(self):
        qa = [("qa", i) for i in range(90)]
        reit = [("re", i) for i in range(10)]
        mixed = mix_datasets(qa, reit, 0.1, seed=1)
        assert sum(1 for kind, _ in mixed if kind == "re") == 10

    def test_window_density(self):
        qa = [("qa", i) for i in range(900)]
        reit = [("re", i) for i in range(100)]
        mixed = mix_datasets(qa, reit, 0.1, seed=2)
        for start in range(0, 1000, 10):
            window = mixed[start : start + 10]
            count = sum(1 for kind, _ in window if kind == "re")
            assert count <= 2  # one per window of 1/r, +-1

    def test_deterministic(self):
        qa = list(range(50))
        reit = list(range(100, 110))
        assert mix_datasets(qa, reit, 0.2, seed=3) == mix_datasets(
            qa, reit, 0.2, seed=3)

    def test_corpus_proportion(self):
        # the observed corpus mix: 64k reiteration vs 360k QA
        assert abs(64000 / (64000 + 360000) - 0.151) < 1e-3

    def test_empty_qa_rejected(self):
        with pytest.raises(ValueError):
            mix_datasets([], [1], 0.5, seed=0)

    def test_streams_order_preserved(self):
        qa = [("qa", i) for i in range(30)]
        reit = [("re", i) for i in range(5)]
        mixed = mix_datasets(qa, reit, 0.15, seed=4)
        assert [x for x in mixed if x[0] == "qa"] == qa
        assert [x for x in mixed if x[0] == "re"] == reit
