"""Taxonomy tagging and stratified corpus sampling.

Page and label embeddings are supplied precomputed; this module only does
the cosine ranking, cluster assignment through a label->parent taxonomy
tree, and seeded balanced sampling over (sub-label, page-count-bucket)
strata.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

TOP_LABELS = 5

# Page-count buckets used as sampling strata. Upper bounds are inclusive.
PAGE_BUCKETS: tuple[tuple[str, int, int], ...] = (
    ("1", 1, 1),
    ("2", 2, 2),
    ("3-5", 3, 5),
    ("6-10", 6, 10),
    ("11-20", 11, 20),
    ("21-50", 21, 50),
    ("51-100", 51, 100),
    (">100", 101, 10**9),
)

MULTI_HOP_MIN_PAGES = 10


def page_bucket(page_count: int) -> str:
    """Bucket key for a document's page count."""
    if page_count < 1:
        raise ValueError(f"page_count must be >= 1, got {page_count}")
    for name, lo, hi in PAGE_BUCKETS:
        if lo <= page_count <= hi:
            return name
    raise AssertionError("unreachable")


def multi_hop_eligible(page_count: int) -> bool:
    """Long-document filter applied before multi-hop QA generation."""
    return page_count > MULTI_HOP_MIN_PAGES


class TaxonomyTree:
    """Label hierarchy given as a label -> parent mapping (roots map to None)."""

    def __init__(self, parent_of: Mapping[str, Optional[str]]):
        self.parent_of = dict(parent_of)

    def top_level(self, label: str) -> str:
        seen = set()
        cur = label
        while True:
            if cur in seen:
                raise ValueError(f"taxonomy cycle at {cur!r}")
            seen.add(cur)
            parent = self.parent_of.get(cur)
            if parent is None:
                return cur
            cur = parent


@dataclass(frozen=True)
class TagPrediction:
    doc_id: str
    ranked_labels: tuple[tuple[str, float], ...]
    cluster: str
    short_candidate_set: bool = False


def tag_page(
    page_embedding: np.ndarray,
    label_embeddings: Mapping[str, np.ndarray],
    taxonomy: TaxonomyTree,
    doc_id: str = "",
) -> TagPrediction:
    """Rank candidate labels by cosine similarity and keep the top five.

    All vectors must be unit-norm and share one dimension. Ties break by
    label lexicographic order. With fewer than five candidates the whole
    ranking is returned and flagged.
    """
    page = np.asarray(page_embedding, dtype=np.float64)
    if abs(float(np.linalg.norm(page)) - 1.0) > 1e-6:
        raise ValueError("page embedding is not unit-norm")
    scored = []
    for label in sorted(label_embeddings):
        vec = np.asarray(label_embeddings[label], dtype=np.float64)
        if vec.shape != page.shape:
            raise ValueError(
                f"label {label!r}: dimension {vec.shape} != page {page.shape}"
            )
        if abs(float(np.linalg.norm(vec)) - 1.0) > 1e-6:
            raise ValueError(f"label {label!r} embedding is not unit-norm")
        scored.append((label, float(page @ vec)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    short = len(scored) < TOP_LABELS
    if short:
        logger.warning("only %d candidate labels available", len(scored))
    top = tuple(scored[:TOP_LABELS])
    return TagPrediction(
        doc_id=doc_id,
        ranked_labels=top,
        cluster=taxonomy.top_level(top[0][0]),
        short_candidate_set=short,
    )


def select_top_clusters(cluster_counts: Mapping[str, int], k: int) -> list[str]:
    """The K most populous clusters, largest first, ties lexicographic."""
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    ordered = sorted(cluster_counts, key=lambda c: (-cluster_counts[c], c))
    if k > len(ordered):
        logger.warning("K=%d exceeds %d clusters; returning all", k, len(ordered))
    return ordered[:k]


@dataclass
class SamplingPlan:
    """Per-cluster quota split across (sub_label, page_bucket) strata.

    ``strata`` maps stratum key to its target count; targets must sum to
    ``per_cluster_quota``. When ``strata`` is empty, targets are derived
    proportionally from the available documents.
    """

    per_cluster_quota: int
    seed: int
    strata: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.per_cluster_quota < 1:
            raise ValueError("per_cluster_quota must be positive")
        if self.strata and sum(self.strata.values()) != self.per_cluster_quota:
            raise ValueError("stratum targets must sum to per_cluster_quota")


@dataclass(frozen=True)
class DocMeta:
    doc_id: str
    cluster: str
    sub_label: str
    page_count: int


def _equal_targets(keys: Sequence[tuple[str, str]], quota: int) -> dict:
    """Balanced apportionment: equal share per stratum, remainder to the
    earliest keys in sorted order."""
    ordered = sorted(keys)
    if not ordered:
        return {}
    base, rem = divmod(quota, len(ordered))
    return {key: base + (1 if i < rem else 0) for i, key in enumerate(ordered)}


def _proportional_targets(sizes: dict[tuple[str, str], int], quota: int) -> dict:
    """Largest-remainder apportionment of `quota` over strata by size."""
    total = sum(sizes.values())
    if total == 0:
        return {key: 0 for key in sizes}
    raw = {key: quota * n / total for key, n in sizes.items()}
    targets = {key: int(raw[key]) for key in sizes}
    leftover = quota - sum(targets.values())
    by_remainder = sorted(sizes, key=lambda k: (-(raw[k] - targets[k]), k))
    for key in by_remainder[:leftover]:
        targets[key] += 1
    return targets


def balanced_sample(
    docs: Sequence[DocMeta],
    plan: SamplingPlan,
    exclude: frozenset[str] = frozenset(),
) -> list[str]:
    """Draw a balanced sample per cluster.

    Within each cluster, documents are grouped into (sub_label, page_bucket)
    strata, each stratum is shuffled with a seed derived from (plan.seed,
    cluster, stratum), and targets are met with quota from short or empty
    strata redistributed proportionally across the remainder. Passing the ids
    of a previous draw as ``exclude`` keeps train/test draws disjoint.
    """
    by_cluster: dict[str, dict[tuple[str, str], list[str]]] = {}
    for doc in docs:
        if doc.doc_id in exclude:
            continue
        key = (doc.sub_label, page_bucket(doc.page_count))
        by_cluster.setdefault(doc.cluster, {}).setdefault(key, []).append(doc.doc_id)

    selected: list[str] = []
    for cluster in sorted(by_cluster):
        strata = by_cluster[cluster]
        available = sum(len(ids) for ids in strata.values())
        quota = plan.per_cluster_quota
        if quota > available:
            logger.warning(
                "cluster %s: quota %d > %d available; shrinking", cluster, quota,
                available,
            )
            quota = available
        if plan.strata:
            targets = {k: plan.strata.get(k, 0) for k in strata}
        else:
            targets = _equal_targets(list(strata), quota)
        # Redistribute shortfalls from under-filled strata until stable.
        while True:
            shortfall = 0
            capped = {}
            for key in sorted(strata):
                take = min(targets.get(key, 0), len(strata[key]))
                shortfall += targets.get(key, 0) - take
                capped[key] = take
            targets = capped
            if shortfall == 0:
                break
            spare = {
                key: len(strata[key]) - targets[key]
                for key in sorted(strata)
                if len(strata[key]) > targets[key]
            }
            if not spare:
                break
            extra = _proportional_targets(spare, min(shortfall, sum(spare.values())))
            for key, inc in extra.items():
                targets[key] += inc

        for key in sorted(strata):
            ids = sorted(strata[key])
            rng = random.Random(f"{plan.seed}|{cluster}|{key[0]}|{key[1]}")
            rng.shuffle(ids)
            selected.extend(ids[: targets[key]])
    return selected
