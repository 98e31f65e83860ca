"""Persona-conditioned multi-turn QA dataset generation.

Per document, the generation loop runs bounded rounds: sample personas,
ask the gateway for a question per persona, check answerability and page
grounding through the structured answer role, then decompose the grounded
pair into a multi-turn sequence. The answerable-pair counter `n` advances
per pair; the attempt counter `m` advances once per round. With a
deterministic mock gateway and a fixed seed, output is byte-identical
across runs.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .gateway import Gateway, GatewayError, GenRequest, ReplyParseError
from .model import Document

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Persona:
    """Six-attribute user profile driving question diversity."""

    name: str
    age: int
    gender: str
    major_background: str
    previous_experience: str
    hobbies: str

    def __post_init__(self) -> None:
        if self.age <= 0:
            raise ValueError("age must be a positive integer")
        for attr in ("name", "gender", "major_background", "previous_experience",
                     "hobbies"):
            if not getattr(self, attr):
                raise ValueError(f"persona attribute {attr!r} is empty")

    @property
    def persona_id(self) -> str:
        return self.name

    def describe(self) -> str:
        return (
            f"Name: {self.name}; Age: {self.age}; Gender: {self.gender}; "
            f"Major Background: {self.major_background}; "
            f"Previous Experience: {self.previous_experience}; "
            f"Hobbies: {self.hobbies}"
        )


@dataclass(frozen=True)
class QARecord:
    question: str
    answer: str
    page_no: Optional[int]
    answerable: bool
    persona_id: str
    doc_id: str

    def __post_init__(self) -> None:
        if self.answerable and self.page_no is None:
            raise ValueError("answerable record requires a page_no")


@dataclass(frozen=True)
class DialogueRecord:
    doc_id: str
    persona_id: str
    turns: tuple[QARecord, ...]

    def __post_init__(self) -> None:
        if not self.turns:
            raise ValueError("dialogue with no turns")
        if any(t.doc_id != self.doc_id for t in self.turns):
            raise ValueError("turn doc_id mismatch")


@dataclass
class GenerationBudget:
    n_qa: int
    max_attempts: int
    personas_per_round: int = 1
    seed: int = 0
    emit_single_turn: bool = True
    max_gateway_retries: int = 2

    def __post_init__(self) -> None:
        if self.n_qa < 1 or self.max_attempts < 1:
            raise ValueError("n_qa and max_attempts must be >= 1")


@dataclass
class GenerationResult:
    dialogues: list[DialogueRecord]
    n_answerable: int
    m_attempts: int
    dropped_malformed: int = 0
    single_turn_pairs: int = 0
    failed: bool = False


# Prompt templates are deliberately plain; live deployments version them as
# files (see cli.RunConfig.templates_dir).
QUESTION_PROMPT = (
    "You are the following user:\n{persona}\n\n"
    "Given this document, ask one question you would genuinely want "
    "answered.\n\nDocument {doc_id}:\n{doc_text}"
)
ANSWER_PROMPT = (
    "Document {doc_id}:\n{doc_text}\n\nQuestion: {question}\n\n"
    "Reply as JSON {{\"answerable\": bool, \"answer\": str, \"page\": int}} "
    "where page is the 1-based page supporting the answer."
)
DECOMPOSE_PROMPT = (
    "Decompose this QA pair into a coherent multi-turn sequence.\n"
    "Reply as JSON {{\"turns\": [{{\"question\": str, \"answer\": str, "
    "\"page\": int}}]}}.\n\nQ: {question}\nA: {answer}"
)


def sample_personas(
    pool: Sequence[Persona],
    cluster_tags: Sequence[str],
    n: int,
    seed: int | str = 0,
) -> list[Persona]:
    """Seeded uniform sample without replacement of min(n, |pool|) personas.

    `cluster_tags` only feeds prompt construction downstream; it does not
    bias the draw.
    """
    if not pool:
        raise ValueError("persona pool is empty")
    rng = random.Random(f"{seed}|{','.join(cluster_tags)}")
    if n >= len(pool):
        shuffled = list(pool)
        rng.shuffle(shuffled)
        return shuffled
    return rng.sample(list(pool), n)


def _doc_text(doc: Document) -> str:
    return "\n\n".join(p.text for p in doc.pages)


def decompose_qa(
    question: str,
    answer: str,
    gateway: Gateway,
    source_page: Optional[int] = None,
) -> list[tuple[str, str, Optional[int]]]:
    """Split one grounded pair into an ordered QA sequence.

    The source answer's page propagates to every sub-turn that lacks its
    own; an empty gateway reply falls back to the single original pair.
    """
    reply = gateway.generate(
        GenRequest(role="decomposer", prompt=DECOMPOSE_PROMPT.format(
            question=question, answer=answer
        ))
    )
    turns = reply.get("turns", [])
    if not turns:
        return [(question, answer, source_page)]
    return [
        (t["question"], t["answer"], t.get("page") or source_page) for t in turns
    ]


def generate_for_document(
    doc: Document,
    personas: Sequence[Persona],
    budget: GenerationBudget,
    gateway: Gateway,
    cluster_tags: Sequence[str] = (),
) -> GenerationResult:
    """Bounded persona-driven QA generation loop for one document.

    While fewer than `n_qa` answerable pairs exist and fewer than
    `max_attempts` rounds have run: sample personas, generate one question
    per persona, generate a grounded answer, decompose, and emit the
    sequence (single-turn sequences only when `emit_single_turn`).
    Gateway failures mark the document failed; malformed structured replies
    drop the pair and are counted.
    """
    result = GenerationResult(dialogues=[], n_answerable=0, m_attempts=0)
    rng = random.Random(f"{budget.seed}|{doc.doc_id}")
    doc_text = _doc_text(doc)
    try:
        while result.n_answerable < budget.n_qa and result.m_attempts < budget.max_attempts:
            round_seed = rng.random()
            round_personas = sample_personas(
                personas, cluster_tags, budget.personas_per_round, round_seed
            )
            for persona in round_personas:
                question = gateway.generate(
                    GenRequest(
                        role="question_gen",
                        prompt=QUESTION_PROMPT.format(
                            persona=persona.describe(),
                            doc_id=doc.doc_id,
                            doc_text=doc_text,
                        ),
                    )
                )
                try:
                    verdict = gateway.generate(
                        GenRequest(
                            role="answer_gen",
                            prompt=ANSWER_PROMPT.format(
                                doc_id=doc.doc_id,
                                doc_text=doc_text,
                                question=question,
                            ),
                        )
                    )
                except ReplyParseError as exc:
                    logger.warning("doc %s: dropped malformed pair: %s",
                                   doc.doc_id, exc)
                    result.dropped_malformed += 1
                    continue
                if not verdict["answerable"]:
                    continue
                sub_turns = decompose_qa(
                    question, verdict["answer"], gateway, verdict["page"]
                )
                if len(sub_turns) == 1:
                    result.single_turn_pairs += 1
                if len(sub_turns) > 1 or budget.emit_single_turn:
                    result.dialogues.append(
                        DialogueRecord(
                            doc_id=doc.doc_id,
                            persona_id=persona.persona_id,
                            turns=tuple(
                                QARecord(
                                    question=q,
                                    answer=a,
                                    page_no=page,
                                    answerable=True,
                                    persona_id=persona.persona_id,
                                    doc_id=doc.doc_id,
                                )
                                for q, a, page in sub_turns
                            ),
                        )
                    )
                result.n_answerable += 1
            result.m_attempts += 1
    except GatewayError as exc:
        logger.error("doc %s: gateway failed (%d attempts); skipping",
                     doc.doc_id, exc.attempts)
        result.failed = True
    return result


# ---------------------------------------------------------------------------
# Dataset serialization
# ---------------------------------------------------------------------------


def dialogue_to_dict(rec: DialogueRecord) -> dict[str, Any]:
    return {
        "doc_id": rec.doc_id,
        "persona_id": rec.persona_id,
        "turns": [
            {"question": t.question, "answer": t.answer, "page": t.page_no}
            for t in rec.turns
        ],
    }


def dialogue_from_dict(record: dict[str, Any]) -> DialogueRecord:
    return DialogueRecord(
        doc_id=record["doc_id"],
        persona_id=record["persona_id"],
        turns=tuple(
            QARecord(
                question=t["question"],
                answer=t["answer"],
                page_no=t["page"],
                answerable=True,
                persona_id=record["persona_id"],
                doc_id=record["doc_id"],
            )
            for t in record["turns"]
        ),
    )


def write_dialogues_jsonl(dialogues: Iterable[DialogueRecord], path: str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dialogues:
            fh.write(json.dumps(dialogue_to_dict(rec), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_dialogues_jsonl(path: str) -> list[DialogueRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(dialogue_from_dict(json.loads(line)))
    return out
