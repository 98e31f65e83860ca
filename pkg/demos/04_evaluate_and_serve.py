"""Walkthrough: scoring answers and running a grounded multi-turn session.

First scores a few prediction/reference pairs with the full metric suite
(BLEU, ROUGE, METEOR, page grounding), then drives the QA service directly
with a scripted gateway to show page selection, citation parsing, and
history threading.
"""

import numpy as np

from pageqa.finder import EncoderParams
from pageqa.gateway import MockGateway
from pageqa.metrics import page_metrics, text_metrics
from pageqa.service import QAService

from importlib import import_module

make_doc = import_module("02_train_page_finder").make_doc


def show_metrics() -> None:
    pairs = [
        ("the accord was ratified in 1884 (Page 2)",
         "the accord was ratified in 1884 (Page 2)", {2}),
        ("ratified in 1884", "the accord was ratified in 1884 (Page 2)", {2}),
        ("it concerns fishing rights (Page 3)",
         "the accord was ratified in 1884 (Page 2)", {2}),
    ]
    print("per-pair text metrics:")
    for cand, ref, _ in pairs:
        r = text_metrics(cand, [ref])
        print(f"  bleu1={r.bleu_1:.3f} rouge_l={r.rouge_l:.3f} "
              f"meteor={r.meteor:.3f}  {cand!r}")
    rate, accuracy, counts = page_metrics(
        [(cand, gold) for cand, _, gold in pairs])
    print(f"page generation rate {rate:.3f}, page accuracy {accuracy:.3f} "
          f"({counts})\n")


def show_service() -> None:
    texts = [f"filler section {n} with routine content" for n in range(1, 11)]
    texts[6] = "the accord was ratified in 1884 by the coastal assembly"
    doc = make_doc("accord", texts)

    gateway = MockGateway([
        {"role": "qa_assistant", "prompt_hash": "*",
         "reply": "It was ratified in 1884 (Page 7)."},
    ])
    dim = 1024
    service = QAService(
        params=EncoderParams(dim, dim, np.eye(dim), tau=0.2, seed=0),
        gateway=gateway,
        default_budget=60,
    )
    service.add_document(doc)
    session = service.create_session("accord")

    turn = service.ask(session, "when was the accord ratified?")
    print(f"selected pages: {turn.selected_pages}")
    print(f"answer: {turn.answer}")
    print(f"cited pages: {sorted(turn.cited_pages)}")

    service.ask(session, "who ratified it?")
    prompt = gateway.calls[-1].prompt
    print("second prompt threads the first exchange:",
          "User: when was the accord ratified?" in prompt)


if __name__ == "__main__":
    show_metrics()
    show_service()
