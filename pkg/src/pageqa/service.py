"""Multi-turn grounded QA service.

Holds ingested documents and trained retriever parameters as immutable
shared state. Each ask scores the document's pages against the current
question, selects a token-budgeted context, sends context + serialized
history + question to the gateway, and returns the answer with its parsed
page citations. Sessions are in-memory, append-only, and serialize their
own asks; optional JSONL persistence appends one record per turn.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .contexts import render_context
from .finder import EncoderParams, score_pages, select_context
from .gateway import Gateway, GatewayError, GenRequest
from .ingest import parse_document
from .metrics import extract_page_refs
from .model import Document, document_from_dict

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 8192
ASK_PROMPT = (
    "Answer using only the provided pages and cite the supporting page "
    "as (Page N).\n\n{context}\n\n{history}User: {question}\nAssistant:"
)


@dataclass
class Turn:
    question: str
    answer: str
    cited_pages: set[int]
    selected_pages: list[int]
    scores: dict[int, float]


@dataclass
class Session:
    session_id: str
    doc_id: str
    budget: int
    created_at: float = field(default_factory=time.time)
    history: list[Turn] = field(default_factory=list)
    include_last_answer: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class QAService:
    def __init__(
        self,
        params: EncoderParams,
        gateway: Gateway,
        default_budget: int = DEFAULT_BUDGET,
        k_top: int = 1,
        persist_dir: Optional[str] = None,
    ):
        self.params = params
        self.gateway = gateway
        self.default_budget = default_budget
        self.k_top = k_top
        self.persist_dir = persist_dir
        self.documents: dict[str, Document] = {}
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    def add_document(self, doc: Document) -> None:
        with self._registry_lock:
            self.documents[doc.doc_id] = doc

    def create_session(
        self,
        doc_id: str,
        budget: Optional[int] = None,
        include_last_answer: bool = False,
    ) -> Session:
        if doc_id not in self.documents:
            raise KeyError(f"unknown document {doc_id!r}")
        session = Session(
            session_id=uuid.uuid4().hex,
            doc_id=doc_id,
            budget=budget or self.default_budget,
            include_last_answer=include_last_answer,
        )
        with self._registry_lock:
            self.sessions[session.session_id] = session
        return session

    def ask(self, session: Session, question: str) -> Turn:
        """One grounded QA turn; the history grows only on success."""
        doc = self.documents[session.doc_id]
        with session.lock:
            query = question
            if session.include_last_answer and session.history:
                query = f"{question} {session.history[-1].answer}"
            ranked = score_pages(doc, query, self.params)
            selection = select_context(ranked, session.budget, self.k_top)
            history_text = "".join(
                f"User: {t.question}\nAssistant: {t.answer}\n"
                for t in session.history
            )
            prompt = ASK_PROMPT.format(
                context=render_context(doc, selection.pages, session.budget),
                history=history_text,
                question=question,
            )
            answer = self.gateway.generate(
                GenRequest(role="qa_assistant", prompt=prompt)
            )
            turn = Turn(
                question=question,
                answer=answer,
                cited_pages=set(extract_page_refs(answer).pages),
                selected_pages=selection.pages,
                scores={sp.page_no: sp.score for sp in ranked},
            )
            session.history.append(turn)
            self._persist(session, turn)
            return turn

    def _persist(self, session: Session, turn: Turn) -> None:
        if not self.persist_dir:
            return
        path = f"{self.persist_dir}/{session.session_id}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({
                "question": turn.question,
                "answer": turn.answer,
                "cited_pages": sorted(turn.cited_pages),
                "selected_pages": turn.selected_pages,
            }, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


class SessionRequest(BaseModel):
    doc_id: str
    budget: Optional[int] = None


class AskRequest(BaseModel):
    question: str


def create_app(service: QAService) -> FastAPI:
    app = FastAPI(title="pageqa")

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/documents")
    def add_document(payload: dict[str, Any]) -> dict[str, Any]:
        try:
            if "pages" in payload and payload["pages"] and "lines" in payload[
                "pages"
            ][0] and "paragraphs" in payload["pages"][0]:
                doc = document_from_dict(payload)
            else:
                doc = parse_document(payload["pages"], payload["doc_id"])
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        service.add_document(doc)
        return {"doc_id": doc.doc_id, "pages": doc.page_count}

    @app.get("/documents/{doc_id}/pages/{page_no}")
    def get_page(doc_id: str, page_no: int) -> dict[str, Any]:
        doc = service.documents.get(doc_id)
        if doc is None:
            raise HTTPException(status_code=404, detail=f"unknown document {doc_id}")
        try:
            page = doc.page(page_no)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {
            "doc_id": doc_id,
            "page_no": page_no,
            "page_count": doc.page_count,
            "text": page.text,
            "paragraphs": [
                {"text": p.text, "box": p.box.as_list()} for p in page.paragraphs
            ],
        }

    @app.post("/sessions")
    def create_session(req: SessionRequest) -> dict[str, Any]:
        try:
            session = service.create_session(req.doc_id, req.budget)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"session_id": session.session_id}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict[str, Any]:
        session = service.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return {
            "session_id": session.session_id,
            "doc_id": session.doc_id,
            "history": [
                {
                    "question": t.question,
                    "answer": t.answer,
                    "cited_pages": sorted(t.cited_pages),
                }
                for t in session.history
            ],
        }

    @app.post("/sessions/{session_id}/ask")
    def ask(session_id: str, req: AskRequest) -> dict[str, Any]:
        session = service.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        try:
            turn = service.ask(session, req.question)
        except GatewayError as exc:
            raise HTTPException(
                status_code=503,
                detail={"error": str(exc), "retryable": True},
            )
        return {
            "answer": turn.answer,
            "cited_pages": sorted(turn.cited_pages),
            "selected_pages": turn.selected_pages,
            "scores": {str(k): v for k, v in turn.scores.items()},
        }

    return app
