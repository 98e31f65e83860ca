"""Query-based page retrieval with a trainable linear encoder.

The encoder maps text to a unit vector: a signed-hash bag of word unigrams
and bigrams is projected through a learned feature_dim x embed_dim matrix
and L2-normalized. The projection is trained with the multiple-negatives
ranking loss over in-batch query/positive-page pairs:

    L = -(1/B) sum_b log( exp(s_bb / tau) / sum_k exp(s_bk / tau) )

where s_bk is the cosine similarity between query b and positive page k.
Gradients are computed analytically (see `mnrl_loss_and_grad`); plain
mini-batch gradient descent keeps training fully deterministic for a given
seed.

At inference, pages are ranked by cosine similarity to the query and a
token-budgeted context is grown from the top pages outward to adjacent
pages (`select_context`).
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import Document

logger = logging.getLogger(__name__)

DEFAULT_FEATURE_DIM = 4096
DEFAULT_EMBED_DIM = 64
DEFAULT_TAU = 0.05

_PARAMS_MAGIC = b"PGF1"
_PARAMS_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the last finite parameters."""

    def __init__(self, message: str, params: "EncoderParams"):
        super().__init__(message)
        self.params = params


@dataclass
class EncoderParams:
    feature_dim: int
    embed_dim: int
    projection: np.ndarray  # feature_dim x embed_dim
    tau: float = DEFAULT_TAU
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        self.projection = np.asarray(self.projection, dtype=np.float64)
        if self.projection.shape != (self.feature_dim, self.embed_dim):
            raise ValueError(
                f"projection shape {self.projection.shape} != "
                f"({self.feature_dim}, {self.embed_dim})"
            )
        if not np.all(np.isfinite(self.projection)):
            raise ValueError("projection contains non-finite values")

    @classmethod
    def fresh(
        cls,
        feature_dim: int = DEFAULT_FEATURE_DIM,
        embed_dim: int = DEFAULT_EMBED_DIM,
        tau: float = DEFAULT_TAU,
        seed: int = 0,
    ) -> "EncoderParams":
        rng = np.random.default_rng(seed)
        projection = rng.standard_normal((feature_dim, embed_dim)) / np.sqrt(
            feature_dim
        )
        return cls(feature_dim, embed_dim, projection, tau, seed)


@dataclass(frozen=True)
class ScoredPage:
    page_no: int
    score: float
    token_length: int


@dataclass
class ContextSelection:
    pages: list[int]
    total_tokens: int
    budget: int
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.total_tokens > self.budget:
            raise ValueError("selection exceeds budget")
        if len(set(self.pages)) != len(self.pages):
            raise ValueError("duplicate pages in selection")


# ---------------------------------------------------------------------------
# Feature extraction and encoding
# ---------------------------------------------------------------------------


def _signed_hash(gram: str) -> tuple[int, float]:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "big")
    sign = 1.0 if value & 1 else -1.0
    return value >> 1, sign


def featurize(text: str, feature_dim: int) -> np.ndarray:
    """Signed-hash bag of lowercase word unigrams and bigrams."""
    tokens = text.lower().split()
    vec = np.zeros(feature_dim, dtype=np.float64)
    grams: list[str] = list(tokens)
    grams.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    for gram in grams:
        bucket, sign = _signed_hash(gram)
        vec[bucket % feature_dim] += sign
    return vec


def _fallback_unit(embed_dim: int) -> np.ndarray:
    unit = np.zeros(embed_dim, dtype=np.float64)
    unit[0] = 1.0
    return unit


def encode(text: str, params: EncoderParams) -> np.ndarray:
    """Unit-norm embedding of `text`. Degenerate (feature-free) inputs map
    to a fixed deterministic unit vector."""
    features = featurize(text, params.feature_dim)
    z = features @ params.projection
    norm = float(np.linalg.norm(z))
    if norm < 1e-12:
        logger.warning("degenerate text mapped to fallback unit vector")
        return _fallback_unit(params.embed_dim)
    return z / norm


# ---------------------------------------------------------------------------
# Loss and analytic gradient
# ---------------------------------------------------------------------------


def mnrl_loss(sims: np.ndarray, tau: float) -> float:
    """Multiple-negatives ranking loss over a BxB cosine-similarity matrix.

    Row b treats column b as the positive and the rest of the batch as
    negatives. Computed with max-subtraction for numerical stability.
    """
    s = np.asarray(sims, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] < 1:
        raise ValueError(f"sims must be square BxB, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("sims contains non-finite values")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    scaled = s / tau
    row_max = scaled.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(scaled - row_max).sum(axis=1))
    return float(np.mean(lse - np.diag(scaled)))


def _softmax_rows(scaled: np.ndarray) -> np.ndarray:
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mnrl_loss_and_grad(
    query_feats: np.ndarray,
    page_feats: np.ndarray,
    projection: np.ndarray,
    tau: float,
) -> tuple[float, np.ndarray]:
    """Loss and its analytic gradient w.r.t. the projection matrix.

    Forward: Z = F P, rows normalized to E, S = E_q E_c^T, then `mnrl_loss`.
    The backward pass threads dL/dS through the cosine (row normalization)
    back to P.
    """
    b = query_feats.shape[0]
    zq = query_feats @ projection
    zc = page_feats @ projection
    nq = np.linalg.norm(zq, axis=1, keepdims=True)
    nc = np.linalg.norm(zc, axis=1, keepdims=True)
    nq = np.where(nq < 1e-12, 1.0, nq)
    nc = np.where(nc < 1e-12, 1.0, nc)
    eq = zq / nq
    ec = zc / nc
    sims = eq @ ec.T
    loss = mnrl_loss(sims, tau)

    probs = _softmax_rows(sims / tau)
    dsims = (probs - np.eye(b)) / (b * tau)
    deq = dsims @ ec
    dec = dsims.T @ eq
    # d(z/|z|) backward: dz = (de - e (e . de)) / |z|
    dzq = (deq - eq * np.sum(eq * deq, axis=1, keepdims=True)) / nq
    dzc = (dec - ec * np.sum(ec * dec, axis=1, keepdims=True)) / nc
    grad = query_feats.T @ dzq + page_feats.T @ dzc
    return loss, grad


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 1
    learning_rate: float = 2e-5
    tau: float = DEFAULT_TAU
    seed: int = 0
    feature_dim: int = DEFAULT_FEATURE_DIM
    embed_dim: int = DEFAULT_EMBED_DIM
    warmup_ratio: float = 0.0


# Preset mirroring the reference training recipe for the retrieval model:
# 100k sampled pairs, one epoch, batch 16, lr 2e-5, warmup ratio 0.1.
REFERENCE_TRAIN_CONFIG = TrainConfig(
    batch_size=16, epochs=1, learning_rate=2e-5, warmup_ratio=0.1
)


@dataclass
class TrainResult:
    params: EncoderParams
    epoch_losses: list[float]


def train_encoder(
    pairs: Sequence[tuple[str, str]], config: TrainConfig
) -> TrainResult:
    """Fit the projection by mini-batch gradient descent on the ranking loss.

    Batches are seeded shuffles of the pairs; a trailing batch of size one is
    skipped (in-batch negatives need at least two pairs). Fully deterministic
    for a given config.
    """
    if not pairs:
        raise ValueError("no training pairs")
    if config.batch_size < 2:
        raise ValueError("batch_size must be >= 2 for in-batch negatives")
    if config.batch_size > len(pairs):
        raise ValueError(
            f"batch_size {config.batch_size} > {len(pairs)} pairs available"
        )

    params = EncoderParams.fresh(
        config.feature_dim, config.embed_dim, config.tau, config.seed
    )
    qfeats = np.stack([featurize(q, config.feature_dim) for q, _ in pairs])
    cfeats = np.stack([featurize(c, config.feature_dim) for _, c in pairs])

    rng = np.random.default_rng(config.seed)
    n_batches_total = max(1, config.epochs * (len(pairs) // config.batch_size))
    warmup_steps = int(config.warmup_ratio * n_batches_total)
    step = 0
    epoch_losses: list[float] = []
    projection = params.projection
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            loss, grad = mnrl_loss_and_grad(
                qfeats[idx], cfeats[idx], projection, config.tau
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at step {step}",
                    EncoderParams(
                        config.feature_dim, config.embed_dim, projection,
                        config.tau, config.seed,
                    ),
                )
            lr = config.learning_rate
            if warmup_steps and step < warmup_steps:
                lr *= (step + 1) / warmup_steps
            projection = projection - lr * grad
            batch_losses.append(loss)
            step += 1
        epoch_losses.append(float(np.mean(batch_losses)) if batch_losses else 0.0)

    final = EncoderParams(
        config.feature_dim, config.embed_dim, projection, config.tau, config.seed
    )
    return TrainResult(params=final, epoch_losses=epoch_losses)


def write_loss_trace(result: TrainResult, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in enumerate(result.epoch_losses, start=1):
            fh.write(f"{epoch},{loss!r}\n")


# ---------------------------------------------------------------------------
# Scoring and context selection
# ---------------------------------------------------------------------------


def score_pages(
    doc: Document, query: str, params: EncoderParams
) -> list[ScoredPage]:
    """Cosine scores of every page against the query, best first.

    Ties break by ascending page number.
    """
    if not doc.pages:
        raise ValueError(f"document {doc.doc_id} has no pages")
    hq = encode(query, params)
    scored = []
    for page in doc.pages:
        hp = encode(page.text, params)
        scored.append(
            ScoredPage(
                page_no=page.page_no,
                score=float(hq @ hp),
                token_length=page.token_length,
            )
        )
    scored.sort(key=lambda sp: (-sp.score, sp.page_no))
    return scored


def select_context(
    ranked: Sequence[ScoredPage], budget: int, k_top: int = 1
) -> ContextSelection:
    """Grow a token-budgeted page set from the top-ranked pages.

    Seeds the selection with up to `k_top` highest-scored pages that fit the
    remaining budget, then repeatedly adds, among pages adjacent to any
    selected page, the highest-scored one that still fits (score ties go to
    the lower page number). If nothing fits at all, the single best page is
    kept, truncated to the budget, and flagged.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if k_top < 1:
        raise ValueError(f"k_top must be >= 1, got {k_top}")
    if not ranked:
        return ContextSelection(pages=[], total_tokens=0, budget=budget)

    by_page = {sp.page_no: sp for sp in ranked}
    selected: set[int] = set()
    total = 0
    for sp in ranked:
        if len(selected) >= k_top:
            break
        if total + sp.token_length <= budget:
            selected.add(sp.page_no)
            total += sp.token_length
    if not selected:
        best = ranked[0]
        return ContextSelection(
            pages=[best.page_no], total_tokens=budget, budget=budget, truncated=True
        )

    while True:
        frontier = [
            by_page[n]
            for p in selected
            for n in (p - 1, p + 1)
            if n in by_page and n not in selected
        ]
        frontier = [sp for sp in frontier if total + sp.token_length <= budget]
        if not frontier:
            break
        nxt = min(frontier, key=lambda sp: (-sp.score, sp.page_no))
        selected.add(nxt.page_no)
        total += nxt.token_length

    return ContextSelection(pages=sorted(selected), total_tokens=total, budget=budget)


# ---------------------------------------------------------------------------
# Parameter persistence (versioned binary format)
# ---------------------------------------------------------------------------


def save_params(params: EncoderParams, path: str) -> None:
    header = _PARAMS_MAGIC + struct.pack(
        "<IIIdq",
        _PARAMS_VERSION,
        params.feature_dim,
        params.embed_dim,
        params.tau,
        params.seed,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.projection.astype("<f8").tobytes(order="C"))


def load_params(path: str) -> EncoderParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _PARAMS_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, feature_dim, embed_dim, tau, seed = struct.unpack(
            "<IIIdq", fh.read(struct.calcsize("<IIIdq"))
        )
        if version != _PARAMS_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        raw = fh.read(feature_dim * embed_dim * 8)
        projection = np.frombuffer(raw, dtype="<f8").reshape(feature_dim, embed_dim)
    return EncoderParams(feature_dim, embed_dim, projection.copy(), tau, seed)
