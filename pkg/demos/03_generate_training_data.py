"""Walkthrough: persona-driven QA generation and training-context assembly.

Runs the bounded generation loop against the scripted mock gateway, then
turns the resulting dialogues into windowed QA examples plus content-
reiteration examples and mixes the two streams at a fixed ratio.
"""

from pageqa.contexts import (
    WindowSpec,
    build_qa_example,
    build_reiteration_example,
    mix_datasets,
)
from pageqa.gateway import MockGateway
from pageqa.qa_gen import GenerationBudget, Persona, generate_for_document

from importlib import import_module

make_doc = import_module("02_train_page_finder").make_doc

PERSONA = Persona(
    name="Rosa",
    age=41,
    gender="female",
    major_background="maritime law",
    previous_experience="port authority compliance",
    hobbies="sailing",
)

GATEWAY = MockGateway([
    {"role": "question_gen", "prompt_hash": "*",
     "reply": "What does the accord require of coastal states?"},
    {"role": "answer_gen", "prompt_hash": "*",
     "reply": {"answerable": True,
               "answer": "They must register all survey vessels.",
               "page": 2}},
    {"role": "decomposer", "prompt_hash": "*",
     "reply": {"turns": [
         {"question": "Who does the accord bind?",
          "answer": "Coastal states.", "page": 2},
         {"question": "What must they do?",
          "answer": "Register all survey vessels.", "page": 2},
     ]}},
])


def main() -> None:
    doc = make_doc("accord", [
        "preamble and definitions of coastal jurisdiction",
        "coastal states shall register all survey vessels annually",
        "enforcement schedules and annexes",
    ])

    result = generate_for_document(
        doc, [PERSONA], GenerationBudget(n_qa=3, max_attempts=5, seed=1),
        GATEWAY,
    )
    print(f"generated {len(result.dialogues)} dialogues "
          f"(n={result.n_answerable} answerable pairs over "
          f"m={result.m_attempts} rounds)\n")

    spec = WindowSpec("fixed", budget=8192, w=1)
    qa_examples, reiteration = [], []
    for dialogue in result.dialogues:
        for j in range(1, len(dialogue.turns) + 1):
            qa_examples.append(build_qa_example(doc, dialogue, j, spec))
            reiteration.append(
                build_reiteration_example(doc, dialogue, j, spec, 12))

    ex = qa_examples[1]
    print(f"QA example (turn 2): context pages {ex.context_pages}, "
          f"history of {len(ex.history)} turn(s)")
    print(f"  target: {ex.target_answer}")
    print(f"reiteration target: {reiteration[0].target}\n")

    mixed = mix_datasets(qa_examples, reiteration[:1], ratio=0.15, seed=0)
    print("mixed stream types:",
          " ".join(type(m).__name__ for m in mixed))


if __name__ == "__main__":
    main()
