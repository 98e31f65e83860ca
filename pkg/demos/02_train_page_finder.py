"""Walkthrough: train the page finder and watch budgeted context selection.

Plants one keyword-bearing page per synthetic document, trains the hashed
n-gram encoder with the in-batch-negatives ranking loss, reports planted-
page recall before and after training, then selects a token-budgeted
context for one query.
"""

import random

from pageqa.finder import (
    EncoderParams,
    TrainConfig,
    score_pages,
    select_context,
    train_encoder,
)
from pageqa.model import BBox, Document, Page, Paragraph, TextLine

N_DOCS = 60
N_PAGES = 12


def make_doc(doc_id: str, texts: list[str]) -> Document:
    pages = []
    for i, text in enumerate(texts):
        box = BBox(0.1, 0.1, 0.9, 0.15)
        pages.append(Page(i + 1, 1000, 1000,
                          (TextLine(text, box, 0),),
                          (Paragraph(text, i + 1, box, (0,)),)))
    return Document(doc_id, tuple(pages),
                    word_count=sum(len(t.split()) for t in texts))


def build_corpus(seed: int = 0):
    rng = random.Random(seed)
    docs, queries, gold = [], [], []
    for d in range(N_DOCS):
        planted = rng.randrange(1, N_PAGES + 1)
        texts = []
        for p in range(1, N_PAGES + 1):
            words = " ".join(f"w{rng.randrange(400)}" for _ in range(25))
            if p == planted:
                words += f" clause{d} clause{d}"
            texts.append(words)
        docs.append(make_doc(f"doc{d}", texts))
        queries.append(f"what does clause{d} require")
        gold.append(planted)
    return docs, queries, gold


def recall(docs, queries, gold, params) -> float:
    hits = sum(score_pages(doc, q, params)[0].page_no == g
               for doc, q, g in zip(docs, queries, gold))
    return hits / len(docs)


def main() -> None:
    docs, queries, gold = build_corpus()
    pairs = [(q, doc.page(g).text) for doc, q, g in zip(docs, queries, gold)]

    config = TrainConfig(batch_size=16, epochs=8, learning_rate=0.1, tau=0.2,
                         seed=0, feature_dim=4096, embed_dim=64)
    fresh = EncoderParams.fresh(config.feature_dim, config.embed_dim,
                                config.tau, config.seed)
    print(f"top-1 recall before training: {recall(docs, queries, gold, fresh):.3f}")

    result = train_encoder(pairs, config)
    print("epoch losses:", " ".join(f"{l:.3f}" for l in result.epoch_losses))
    print(f"top-1 recall after training:  "
          f"{recall(docs, queries, gold, result.params):.3f}\n")

    doc, query = docs[0], queries[0]
    ranked = score_pages(doc, query, result.params)
    selection = select_context(ranked, budget=80, k_top=1)
    print(f"query: {query!r}")
    print(f"selected pages {selection.pages} "
          f"({selection.total_tokens} tokens of an 80-token budget, "
          f"truncated={selection.truncated})")


if __name__ == "__main__":
    main()
