"""Answer scoring: text-overlap metrics plus page-grounding metrics.

Text metrics (BLEU-1..4, METEOR, ROUGE-1/2/L/Lsum) are implemented from
scratch over one fixed tokenization: lowercase with punctuation treated as
a separator. BLEU-n here is the order-n clipped precision with brevity
penalty (corpus-level counts when aggregating); ROUGE scores are F1.
METEOR matches unigrams exactly first, then on stems, and applies the
fragmentation penalty (a perfectly contiguous single-chunk alignment takes
no penalty, so identical strings score 1.0).

Page grounding: `page_generation_rate` is the fraction of answers carrying
any "(Page N)" marker; `page_accuracy` is the fraction of marker-carrying
answers whose cited set intersects the gold pages.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_PAGE_MARKER_RE = re.compile(r"\(\s*pages?\s+([0-9]+(?:\s*,\s*[0-9]+)*)\s*\)",
                             re.IGNORECASE)

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# Page references
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PageRef:
    pages: frozenset[int]

    @property
    def present(self) -> bool:
        return bool(self.pages)

    def render(self) -> str:
        if not self.pages:
            return ""
        ordered = sorted(self.pages)
        if len(ordered) == 1:
            return f"(Page {ordered[0]})"
        return "(Pages " + ", ".join(str(p) for p in ordered) + ")"


def extract_page_refs(answer: str) -> PageRef:
    """Union of all page numbers cited via "(Page N)" / "(Pages N, M)"."""
    pages: set[int] = set()
    for match in _PAGE_MARKER_RE.finditer(answer):
        pages.update(int(n) for n in match.group(1).split(","))
    return PageRef(frozenset(pages))


# ---------------------------------------------------------------------------
# n-gram machinery
# ---------------------------------------------------------------------------


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(cand: Counter, refs: Sequence[Counter]) -> int:
    matches = 0
    for gram, count in cand.items():
        best = max((ref.get(gram, 0) for ref in refs), default=0)
        matches += min(count, best)
    return matches


@dataclass
class BleuStats:
    """Corpus-accumulable clipped-match counts per n-gram order."""

    matches: list[int] = field(default_factory=lambda: [0, 0, 0, 0])
    totals: list[int] = field(default_factory=lambda: [0, 0, 0, 0])
    cand_len: int = 0
    ref_len: int = 0

    def add(self, cand_tokens: list[str], refs_tokens: list[list[str]]) -> None:
        self.cand_len += len(cand_tokens)
        self.ref_len += min(
            (len(r) for r in refs_tokens),
            key=lambda L: (abs(L - len(cand_tokens)), L),
        )
        for n in range(1, 5):
            cand = _ngrams(cand_tokens, n)
            refs = [_ngrams(r, n) for r in refs_tokens]
            self.matches[n - 1] += _clipped_matches(cand, refs)
            self.totals[n - 1] += sum(cand.values())

    def brevity_penalty(self) -> float:
        if self.cand_len == 0:
            return 0.0
        if self.cand_len >= self.ref_len:
            return 1.0
        import math

        return math.exp(1.0 - self.ref_len / self.cand_len)

    def bleu(self, n: int) -> float:
        if self.totals[n - 1] == 0:
            return 0.0
        precision = self.matches[n - 1] / self.totals[n - 1]
        return self.brevity_penalty() * precision


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(cand_tokens: list[str], refs_tokens: list[list[str]], n: int) -> float:
    """Best F1 over references for order-n n-gram overlap."""
    cand = _ngrams(cand_tokens, n)
    cand_total = sum(cand.values())
    best = 0.0
    for ref_tokens in refs_tokens:
        ref = _ngrams(ref_tokens, n)
        ref_total = sum(ref.values())
        if cand_total == 0 or ref_total == 0:
            continue
        overlap = _clipped_matches(cand, [ref])
        best = max(best, _f1(overlap / cand_total, overlap / ref_total))
    return best


def _lcs_table(a: Sequence[str], b: Sequence[str]) -> list[list[int]]:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    return _lcs_table(a, b)[len(a)][len(b)]


def rouge_l(cand_tokens: list[str], refs_tokens: list[list[str]]) -> float:
    best = 0.0
    for ref_tokens in refs_tokens:
        if not cand_tokens or not ref_tokens:
            continue
        lcs = _lcs_len(cand_tokens, ref_tokens)
        best = max(best, _f1(lcs / len(cand_tokens), lcs / len(ref_tokens)))
    return best


def _lcs_ref_positions(ref: Sequence[str], cand: Sequence[str]) -> set[int]:
    """Reference-token positions participating in one LCS with `cand`."""
    table = _lcs_table(ref, cand)
    positions: set[int] = set()
    i, j = len(ref), len(cand)
    while i > 0 and j > 0:
        if ref[i - 1] == cand[j - 1]:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return positions


def rouge_lsum(candidate: str, references: list[str]) -> float:
    """Summary-level LCS F1 over newline-split sentences (union-LCS)."""
    cand_sents = [tokenize(s) for s in candidate.split("\n") if s.strip()]
    best = 0.0
    for reference in references:
        ref_sents = [tokenize(s) for s in reference.split("\n") if s.strip()]
        cand_len = sum(len(s) for s in cand_sents)
        ref_len = sum(len(s) for s in ref_sents)
        if cand_len == 0 or ref_len == 0:
            continue
        cand_counts = Counter(tok for s in cand_sents for tok in s)
        hits = 0
        for ref_sent in ref_sents:
            union: set[int] = set()
            for cand_sent in cand_sents:
                union |= _lcs_ref_positions(ref_sent, cand_sent)
            for pos in union:
                tok = ref_sent[pos]
                if cand_counts.get(tok, 0) > 0:
                    cand_counts[tok] -= 1
                    hits += 1
        best = max(best, _f1(hits / cand_len, hits / ref_len))
    return best


# ---------------------------------------------------------------------------
# METEOR (exact + stem matching; no synonym dictionary)
# ---------------------------------------------------------------------------

_VOWELS = set("aeiou")


def _has_vowel(word: str) -> bool:
    return any(c in _VOWELS for c in word)


def stem(word: str) -> str:
    """Light suffix stemmer: enough for stem-level unigram matching."""
    for suffix, repl in (
        ("sses", "ss"), ("ies", "i"), ("ing", ""), ("edly", ""), ("ed", ""),
        ("ly", ""), ("s", ""),
    ):
        if word.endswith(suffix) and len(word) - len(suffix) >= 2:
            cut = word[: len(word) - len(suffix)] + repl
            if suffix in ("ing", "ed", "edly"):
                if not _has_vowel(cut):
                    continue
                if len(cut) >= 2 and cut[-1] == cut[-2] and cut[-1] not in "lsz":
                    cut = cut[:-1]
            return cut
    return word


def _align(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Greedy in-order alignment: exact stage first, then stems."""
    matched_c: set[int] = set()
    matched_r: set[int] = set()
    alignment: list[tuple[int, int]] = []
    for key in (lambda w: w, stem):
        ref_slots: dict[str, list[int]] = {}
        for j, word in enumerate(ref):
            if j not in matched_r:
                ref_slots.setdefault(key(word), []).append(j)
        for i, word in enumerate(cand):
            if i in matched_c:
                continue
            slots = ref_slots.get(key(word))
            if slots:
                j = slots.pop(0)
                matched_c.add(i)
                matched_r.add(j)
                alignment.append((i, j))
    alignment.sort()
    return alignment


def _chunks(alignment: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in alignment:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(cand_tokens: list[str], refs_tokens: list[list[str]]) -> float:
    best = 0.0
    for ref_tokens in refs_tokens:
        if not cand_tokens or not ref_tokens:
            continue
        alignment = _align(cand_tokens, ref_tokens)
        m = len(alignment)
        if m == 0:
            continue
        precision = m / len(cand_tokens)
        recall = m / len(ref_tokens)
        fmean = precision * recall / (
            METEOR_ALPHA * precision + (1.0 - METEOR_ALPHA) * recall
        )
        ch = _chunks(alignment)
        penalty = 0.0 if ch <= 1 else METEOR_GAMMA * (ch / m) ** METEOR_BETA
        best = max(best, fmean * (1.0 - penalty))
    return best


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

METRIC_COLUMNS = (
    "bleu_1", "bleu_2", "bleu_3", "bleu_4", "meteor",
    "rouge_1", "rouge_2", "rouge_l", "rouge_lsum",
    "page_generation_rate", "page_accuracy",
)


@dataclass
class MetricReport:
    bleu_1: float = 0.0
    bleu_2: float = 0.0
    bleu_3: float = 0.0
    bleu_4: float = 0.0
    meteor: float = 0.0
    rouge_1: float = 0.0
    rouge_2: float = 0.0
    rouge_l: float = 0.0
    rouge_lsum: float = 0.0
    page_generation_rate: float = 0.0
    page_accuracy: float = 0.0
    bert_score: Optional[float] = None
    counts: dict[str, int] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {c: getattr(self, c) for c in METRIC_COLUMNS}
        if self.bert_score is not None:
            out["bert_score"] = self.bert_score
        out.update(self.counts)
        return out


def text_metrics(candidate: str, references: list[str]) -> MetricReport:
    """Single-example scores; empty candidates score zero and are flagged."""
    if not references:
        raise ValueError("at least one reference is required")
    report = MetricReport()
    cand_tokens = tokenize(candidate)
    refs_tokens = [tokenize(r) for r in references]
    if not cand_tokens:
        logger.warning("empty candidate; all metrics zero")
        report.flags.append("empty_candidate")
        return report
    stats = BleuStats()
    stats.add(cand_tokens, refs_tokens)
    report.bleu_1 = stats.bleu(1)
    report.bleu_2 = stats.bleu(2)
    report.bleu_3 = stats.bleu(3)
    report.bleu_4 = stats.bleu(4)
    report.rouge_1 = rouge_n(cand_tokens, refs_tokens, 1)
    report.rouge_2 = rouge_n(cand_tokens, refs_tokens, 2)
    report.rouge_l = rouge_l(cand_tokens, refs_tokens)
    report.rouge_lsum = rouge_lsum(candidate, references)
    report.meteor = meteor(cand_tokens, refs_tokens)
    return report


def page_metrics(
    predictions: Sequence[tuple[str, set[int]]]
) -> tuple[float, float, dict[str, int]]:
    """(rate, accuracy, counts) for a list of (answer, gold_pages) pairs.

    An answer is correct when its cited set intersects the gold set.
    Accuracy over zero referencing answers is reported as 0 and flagged via
    the counts.
    """
    n_examples = len(predictions)
    n_with_refs = 0
    n_correct = 0
    for answer, gold in predictions:
        if not gold:
            raise ValueError("gold_pages must be non-empty for every example")
        ref = extract_page_refs(answer)
        if ref.present:
            n_with_refs += 1
            if ref.pages & set(gold):
                n_correct += 1
    rate = n_with_refs / n_examples if n_examples else 0.0
    accuracy = n_correct / n_with_refs if n_with_refs else 0.0
    if n_with_refs == 0:
        logger.warning("no answers carried page references; accuracy set to 0")
    counts = {
        "n_examples": n_examples,
        "n_with_refs": n_with_refs,
        "n_correct_refs": n_correct,
    }
    return rate, accuracy, counts


# ---------------------------------------------------------------------------
# Run-level evaluation
# ---------------------------------------------------------------------------


class EvaluationError(ValueError):
    pass


def _read_jsonl(path: str) -> list[dict[str, Any]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


GROUP_KEYS = ("window", "reiteration", "finder")


def _aggregate(
    examples: Sequence[tuple[str, list[str], set[int]]],
    embed_fn=None,
) -> MetricReport:
    report = MetricReport()
    stats = BleuStats()
    sums = {k: 0.0 for k in ("meteor", "rouge_1", "rouge_2", "rouge_l",
                             "rouge_lsum")}
    for candidate, references, _ in examples:
        cand_tokens = tokenize(candidate)
        refs_tokens = [tokenize(r) for r in references]
        if cand_tokens:
            stats.add(cand_tokens, refs_tokens)
            sums["rouge_1"] += rouge_n(cand_tokens, refs_tokens, 1)
            sums["rouge_2"] += rouge_n(cand_tokens, refs_tokens, 2)
            sums["rouge_l"] += rouge_l(cand_tokens, refs_tokens)
            sums["rouge_lsum"] += rouge_lsum(candidate, references)
            sums["meteor"] += meteor(cand_tokens, refs_tokens)
    n = len(examples)
    report.bleu_1 = stats.bleu(1)
    report.bleu_2 = stats.bleu(2)
    report.bleu_3 = stats.bleu(3)
    report.bleu_4 = stats.bleu(4)
    for key, total in sums.items():
        setattr(report, key, total / n if n else 0.0)
    rate, accuracy, counts = page_metrics(
        [(cand, gold) for cand, _, gold in examples]
    )
    report.page_generation_rate = rate
    report.page_accuracy = accuracy
    report.counts = counts
    if embed_fn is not None:
        import numpy as np

        scores = []
        for candidate, references, _ in examples:
            vecs = embed_fn([candidate, references[0]])
            scores.append(float(np.dot(vecs[0], vecs[1])))
        report.bert_score = sum(scores) / len(scores) if scores else 0.0
    return report


def evaluate_run(
    predictions_path: str,
    references_path: str,
    embed_fn=None,
) -> dict[str, MetricReport]:
    """Score a prediction file against a reference file, aligned by id.

    Predictions: JSONL {id, answer}. References: JSONL {id, answer or
    references, gold_pages, window?, reiteration?, finder?}. Returns a
    report per condition group plus the key "overall".
    """
    preds = {r["id"]: r for r in _read_jsonl(predictions_path)}
    refs = {r["id"]: r for r in _read_jsonl(references_path)}
    if not preds:
        raise EvaluationError(f"{predictions_path}: no predictions")
    missing = sorted(set(refs) - set(preds)) + sorted(set(preds) - set(refs))
    if missing:
        raise EvaluationError(f"id mismatch between files: {missing}")

    grouped: dict[str, list[tuple[str, list[str], set[int]]]] = {}
    for example_id in sorted(refs):
        ref = refs[example_id]
        references = ref.get("references") or [ref["answer"]]
        gold = set(ref["gold_pages"])
        item = (preds[example_id]["answer"], references, gold)
        group = "|".join(str(ref.get(k, "-")) for k in GROUP_KEYS)
        grouped.setdefault(group, []).append(item)
        grouped.setdefault("overall", []).append(item)
    return {group: _aggregate(items, embed_fn) for group, items in
            sorted(grouped.items())}


def write_report_csv(reports: dict[str, MetricReport], path: str) -> None:
    columns = ["group", *METRIC_COLUMNS, "n_examples", "n_with_refs",
               "n_correct_refs"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for group, report in reports.items():
            row = report.as_dict()
            writer.writerow([group] + [row.get(c, "") for c in columns[1:]])


def format_report_table(reports: dict[str, MetricReport]) -> str:
    header = ["group", *METRIC_COLUMNS]
    widths = [max(len(h), 8) for h in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for group, report in reports.items():
        row = [group] + [f"{getattr(report, c):.4f}" for c in METRIC_COLUMNS]
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines)
