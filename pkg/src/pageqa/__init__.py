"""Page-grounded long-document question answering toolkit.

Subpackages cover the full pipeline: OCR ingestion with paragraph grouping
(`ingest`), taxonomy tagging and stratified corpus sampling (`taxonomy`),
a trainable page retriever with budgeted context selection (`finder`),
training-context assembly (`contexts`), persona-driven multi-turn QA
generation (`qa_gen`), answer scoring with page-grounding metrics
(`metrics`), an LLM gateway with a deterministic mock (`gateway`), and a
multi-turn serving layer (`service`).
"""

__version__ = "0.1.0"
