"""End-to-end CLI runs over temporary artifacts."""

import json
from pathlib import Path

import pytest

from pageqa.cli import main
from pageqa.model import read_documents_jsonl, write_documents_jsonl
from pageqa.qa_gen import DialogueRecord, QARecord, write_dialogues_jsonl

from conftest import make_document


def _jsonl(path: Path, rows) -> str:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows),
                    encoding="utf-8")
    return str(path)


@pytest.fixture()
def ocr_records(tmp_path):
    rows = []
    for page_no in (1, 2):
        rows.append({
            "doc_id": "doc-a",
            "page_no": page_no,
            "width_px": 1000,
            "height_px": 1400,
            "lines": [
                {"text": f"page {page_no} heading", "box": [50, 40, 400, 70]},
                {"text": "body line follows", "box": [50, 80, 400, 110]},
            ],
        })
    return _jsonl(tmp_path / "ocr.jsonl", rows)


class TestIngestCommand:
    def test_writes_documents_and_manifest(self, tmp_path, ocr_records):
        out = tmp_path / "docs.jsonl"
        assert main(["ingest", "--input", ocr_records,
                     "--output", str(out)]) == 0
        docs = read_documents_jsonl(str(out))
        assert [d.doc_id for d in docs] == ["doc-a"]
        assert docs[0].page_count == 2
        manifest = json.loads(
            (tmp_path / "docs.jsonl.manifest.json").read_text())
        assert manifest["command"] == "ingest"
        assert ocr_records in manifest["input_hashes"]
        assert str(out) in manifest["output_hashes"]

    def test_missing_input_is_validation_failure(self, tmp_path):
        assert main(["ingest", "--input", str(tmp_path / "nope.jsonl"),
                     "--output", str(tmp_path / "o.jsonl")]) == 1


class TestSampleCommand:
    def _docs(self, tmp_path):
        rows = [
            {"doc_id": f"d{i}", "cluster": "law", "sub_label": "contracts",
             "page_count": 12}
            for i in range(30)
        ]
        return _jsonl(tmp_path / "meta.jsonl", rows)

    def test_repeated_seed_is_byte_identical(self, tmp_path):
        docs = self._docs(tmp_path)
        out1, out2 = tmp_path / "s1.txt", tmp_path / "s2.txt"
        for out in (out1, out2):
            assert main(["sample", "--docs", docs, "--quota", "5",
                         "--seed", "7", "--output", str(out)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert len(out1.read_text().split()) == 5

    def test_exclude_keeps_draws_disjoint(self, tmp_path):
        docs = self._docs(tmp_path)
        train, test = tmp_path / "train.txt", tmp_path / "test.txt"
        main(["sample", "--docs", docs, "--quota", "10", "--seed", "1",
              "--output", str(train)])
        main(["sample", "--docs", docs, "--quota", "10", "--seed", "2",
              "--exclude", str(train), "--output", str(test)])
        assert not set(train.read_text().split()) & set(test.read_text().split())


class TestBuildTrainCommand:
    def test_windowed_examples(self, tmp_path):
        doc = make_document("doc-a", [f"page {n} words here" for n in range(1, 6)])
        docs_path = tmp_path / "docs.jsonl"
        write_documents_jsonl([doc], str(docs_path))
        turns = tuple(
            QARecord(question=f"q{j}", answer=f"a{j}", page_no=3,
                     answerable=True, persona_id="p0", doc_id="doc-a")
            for j in range(2)
        )
        dialogues_path = tmp_path / "dialogues.jsonl"
        write_dialogues_jsonl(
            [DialogueRecord("doc-a", "p0", turns)], str(dialogues_path))
        out = tmp_path / "train.jsonl"
        assert main(["build-train", "--docs", str(docs_path),
                     "--dialogues", str(dialogues_path),
                     "--window", "fixed:1", "--budget", "8192",
                     "--output", str(out)]) == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        qa_rows = [r for r in rows if r["type"] == "qa"]
        assert len(qa_rows) == 2
        # fixed:1 window around the gold page 3
        assert qa_rows[0]["context_pages"] == [2, 3, 4]
        assert "(Page 3)" in qa_rows[0]["target"]
        assert (tmp_path / "train.jsonl.manifest.json").exists()


class TestTrainFinderCommand:
    def test_trains_and_traces(self, tmp_path):
        pairs = [{"query": f"question about topic {i}",
                  "positive": f"topic {i} page content"} for i in range(32)]
        pairs_path = _jsonl(tmp_path / "pairs.jsonl", pairs)
        out = tmp_path / "finder.bin"
        trace = tmp_path / "loss.csv"
        assert main(["train-finder", "--pairs", pairs_path,
                     "--batch-size", "8", "--epochs", "2",
                     "--learning-rate", "0.05", "--tau", "0.2",
                     "--feature-dim", "1024", "--embed-dim", "32",
                     "--output", str(out), "--trace", str(trace)]) == 0
        assert out.read_bytes()[:4] == b"PGF1"
        lines = trace.read_text().splitlines()
        assert lines[0] == "epoch,mean_loss"
        assert len(lines) == 3


class TestEvaluateCommand:
    def test_identity_run_scores_one(self, tmp_path, capsys):
        refs = [{"id": i, "answer": f"the answer is {i} (Page {i + 1})",
                 "gold_pages": [i + 1]} for i in range(4)]
        preds = [{"id": r["id"], "answer": r["answer"]} for r in refs]
        pred_path = _jsonl(tmp_path / "pred.jsonl", preds)
        ref_path = _jsonl(tmp_path / "ref.jsonl", refs)
        csv_path = tmp_path / "report.csv"
        assert main(["evaluate", "--pred", pred_path, "--ref", ref_path,
                     "--csv", str(csv_path)]) == 0
        table = capsys.readouterr().out
        assert "overall" in table
        assert "1.0000" in table
        header, *rows = csv_path.read_text().splitlines()
        assert "bleu_1" in header and rows

    def test_mismatched_ids_exit_nonzero(self, tmp_path):
        pred_path = _jsonl(tmp_path / "p.jsonl", [{"id": 1, "answer": "x"}])
        ref_path = _jsonl(tmp_path / "r.jsonl",
                          [{"id": 9, "answer": "x", "gold_pages": [1]}])
        assert main(["evaluate", "--pred", pred_path, "--ref", ref_path]) == 1


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, tmp_path):
        docs = _jsonl(tmp_path / "meta.jsonl", [
            {"doc_id": f"d{i}", "cluster": "c", "sub_label": "s",
             "page_count": 3} for i in range(20)
        ])
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"quota": 4, "seed": 11}))
        out_cfg = tmp_path / "from_config.txt"
        assert main(["--config", str(config), "sample", "--docs", docs,
                     "--quota", "4", "--output", str(out_cfg)]) == 0
        out_flag = tmp_path / "from_flag.txt"
        assert main(["sample", "--docs", docs, "--quota", "4", "--seed", "11",
                     "--output", str(out_flag)]) == 0
        assert out_cfg.read_text() == out_flag.read_text()

    def test_explicit_flag_overrides_config(self, tmp_path):
        docs = _jsonl(tmp_path / "meta.jsonl", [
            {"doc_id": f"d{i}", "cluster": "c", "sub_label": "s",
             "page_count": 3} for i in range(20)
        ])
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"quota": 2}))
        out = tmp_path / "out.txt"
        assert main(["--config", str(config), "sample", "--docs", docs,
                     "--quota", "6", "--output", str(out)]) == 0
        assert len(out.read_text().split()) == 6


class TestExitCodes:
    def test_unknown_command_is_validation_failure(self):
        assert main(["frobnicate"]) == 1

    def test_success_is_zero(self, tmp_path, ocr_records):
        assert main(["ingest", "--input", ocr_records,
                     "--output", str(tmp_path / "o.jsonl")]) == 0
