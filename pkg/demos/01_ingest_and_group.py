"""Walkthrough: OCR line records -> paragraph-grouped canonical documents.

Builds a tiny two-page document from raw line boxes, shows how vertically
close lines merge into paragraphs, and round-trips the result through the
canonical JSONL serialization.
"""

import json
import tempfile

from pageqa.ingest import IngestStats, MergeRules, parse_document
from pageqa.model import read_documents_jsonl, write_documents_jsonl

RECORDS = [
    {
        "doc_id": "demo-report",
        "page_no": 1,
        "width_px": 1000,
        "height_px": 1400,
        "lines": [
            # two tight lines -> one paragraph
            {"text": "Quarterly results improved in every", "box": [80, 100, 900, 130]},
            {"text": "region except the northern district.", "box": [80, 135, 860, 165]},
            # a big vertical gap -> a second paragraph
            {"text": "Staffing remained flat year over year.", "box": [80, 400, 880, 430]},
        ],
    },
    {
        "doc_id": "demo-report",
        "page_no": 2,
        "width_px": 1000,
        "height_px": 1400,
        "lines": [
            {"text": "Appendix: methodology notes.", "box": [80, 100, 700, 130]},
        ],
    },
]


def main() -> None:
    stats = IngestStats()
    doc = parse_document(RECORDS, "demo-report", MergeRules(), stats)
    print(f"ingested {doc.page_count} pages, {doc.word_count} words, "
          f"{stats.clamp_warnings} clamp warnings\n")

    for page in doc.pages:
        print(f"--- page {page.page_no}: {len(page.paragraphs)} paragraph(s)")
        for para in page.paragraphs:
            print(f"  [{para.box.x_left:.2f},{para.box.y_top:.2f}] {para.text}")
    print()

    with tempfile.NamedTemporaryFile("r", suffix=".jsonl") as fh:
        write_documents_jsonl([doc], fh.name)
        (restored,) = read_documents_jsonl(fh.name)
        line = json.dumps({"doc_id": restored.doc_id, "pages": restored.page_count})
        print(f"round-trip ok: {line}")
        assert restored == doc


if __name__ == "__main__":
    main()
