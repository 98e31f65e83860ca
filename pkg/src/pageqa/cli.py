"""Command-line entry point wiring the pipeline stages together.

Subcommands: ingest, tag, sample, gen-qa, build-train, train-finder,
evaluate, serve. Every artifact-producing command writes a manifest next to
its output with the resolved configuration and sha256 hashes of inputs and
outputs, so identical config + seed reproduces identical artifacts.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import contexts, finder, gateway as gw, ingest, metrics, qa_gen, taxonomy
from .model import read_documents_jsonl, write_documents_jsonl

logger = logging.getLogger(__name__)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(command: str, config: dict[str, Any],
                    inputs: Sequence[str], outputs: Sequence[str]) -> None:
    primary = Path(outputs[0])
    manifest = {
        "command": command,
        "config": config,
        "input_hashes": {p: _sha256(p) for p in inputs if Path(p).exists()},
        "output_hashes": {p: _sha256(p) for p in outputs if Path(p).exists()},
    }
    path = primary.with_suffix(primary.suffix + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _read_jsonl(path: str) -> list[dict[str, Any]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def _load_gateway(path: Optional[str]) -> gw.Gateway:
    if path is None:
        raise SystemExit("a --gateway-config file is required")
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    retry = gw.RetryPolicy(**raw.pop("retry", {}))
    config = gw.GatewayConfig(retry=retry, **raw)
    return gw.make_gateway(config)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    records = _read_jsonl(args.input)
    by_doc: dict[str, list[dict[str, Any]]] = {}
    for rec in records:
        by_doc.setdefault(rec["doc_id"], []).append(rec)
    rules = ingest.MergeRules(args.gap_factor, args.overlap_min)
    stats = ingest.IngestStats()
    docs = [
        ingest.parse_document(pages, doc_id, rules, stats)
        for doc_id, pages in sorted(by_doc.items())
    ]
    write_documents_jsonl(docs, args.output)
    logger.info("ingested %d documents, %d pages, %d clamp warnings",
                len(docs), stats.pages, stats.clamp_warnings)
    _write_manifest("ingest", vars(args) | {"func": None}, [args.input],
                    [args.output])
    return 0


def cmd_tag(args: argparse.Namespace) -> int:
    tree = taxonomy.TaxonomyTree(
        json.loads(Path(args.taxonomy).read_text(encoding="utf-8"))
    )
    labels = {
        rec["label"]: np.asarray(rec["vector"], dtype=np.float64)
        for rec in _read_jsonl(args.label_embeddings)
    }
    with open(args.output, "w", encoding="utf-8") as fh:
        for rec in _read_jsonl(args.page_embeddings):
            pred = taxonomy.tag_page(
                np.asarray(rec["vector"], dtype=np.float64), labels, tree,
                rec["doc_id"],
            )
            fh.write(json.dumps({
                "doc_id": pred.doc_id,
                "cluster": pred.cluster,
                "ranked_labels": [[lbl, sim] for lbl, sim in pred.ranked_labels],
            }, ensure_ascii=False) + "\n")
    _write_manifest("tag", vars(args) | {"func": None},
                    [args.page_embeddings, args.label_embeddings, args.taxonomy],
                    [args.output])
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    docs = [
        taxonomy.DocMeta(r["doc_id"], r["cluster"], r["sub_label"],
                         r["page_count"])
        for r in _read_jsonl(args.docs)
    ]
    exclude = frozenset()
    if args.exclude:
        exclude = frozenset(Path(args.exclude).read_text().split())
    plan = taxonomy.SamplingPlan(per_cluster_quota=args.quota, seed=args.seed)
    ids = taxonomy.balanced_sample(docs, plan, exclude)
    Path(args.output).write_text("\n".join(ids) + "\n", encoding="utf-8")
    _write_manifest("sample", vars(args) | {"func": None}, [args.docs],
                    [args.output])
    return 0


def cmd_gen_qa(args: argparse.Namespace) -> int:
    documents = read_documents_jsonl(args.docs)
    personas = [qa_gen.Persona(**rec) for rec in _read_jsonl(args.personas)]
    gateway = _load_gateway(args.gateway_config)
    budget = qa_gen.GenerationBudget(
        n_qa=args.n_qa,
        max_attempts=args.max_attempts,
        personas_per_round=args.personas_per_round,
        seed=args.seed,
        emit_single_turn=not args.multi_turn_only,
    )
    dialogues = []
    counters = {"n": 0, "m": 0, "failed_docs": 0}
    for doc in documents:
        if args.multi_hop_only and not taxonomy.multi_hop_eligible(doc.page_count):
            continue
        result = qa_gen.generate_for_document(doc, personas, budget, gateway)
        dialogues.extend(result.dialogues)
        counters["n"] += result.n_answerable
        counters["m"] += result.m_attempts
        counters["failed_docs"] += int(result.failed)
    qa_gen.write_dialogues_jsonl(dialogues, args.output)
    logger.info("generated %d dialogues (%s)", len(dialogues), counters)
    _write_manifest("gen-qa", vars(args) | {"func": None},
                    [args.docs, args.personas], [args.output])
    return 0


def cmd_build_train(args: argparse.Namespace) -> int:
    documents = {d.doc_id: d for d in read_documents_jsonl(args.docs)}
    dialogues = qa_gen.read_dialogues_jsonl(args.dialogues)
    spec = contexts.WindowSpec.parse(args.window, args.budget)
    qa_examples: list[Any] = []
    reiteration: list[Any] = []
    skipped = 0
    for dialogue in dialogues:
        doc = documents.get(dialogue.doc_id)
        if doc is None:
            skipped += len(dialogue.turns)
            continue
        for j in range(1, len(dialogue.turns) + 1):
            try:
                qa_examples.append(contexts.build_qa_example(doc, dialogue, j, spec))
                reiteration.append(contexts.build_reiteration_example(
                    doc, dialogue, j, spec, args.excerpt_tokens))
            except contexts.SkippedExample as exc:
                logger.warning("skipped example: %s", exc)
                skipped += 1
    mixed = contexts.mix_datasets(qa_examples, reiteration, args.ratio, args.seed)
    contexts.write_examples_jsonl(mixed, args.output)
    logger.info("wrote %d examples (%d skipped)", len(mixed), skipped)
    _write_manifest("build-train", vars(args) | {"func": None},
                    [args.docs, args.dialogues], [args.output])
    return 0


def cmd_train_finder(args: argparse.Namespace) -> int:
    pairs = [(r["query"], r["positive"]) for r in _read_jsonl(args.pairs)]
    config = finder.TrainConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        tau=args.tau,
        seed=args.seed,
        feature_dim=args.feature_dim,
        embed_dim=args.embed_dim,
        warmup_ratio=args.warmup_ratio,
    )
    result = finder.train_encoder(pairs, config)
    finder.save_params(result.params, args.output)
    if args.trace:
        finder.write_loss_trace(result, args.trace)
    _write_manifest("train-finder", vars(args) | {"func": None}, [args.pairs],
                    [args.output] + ([args.trace] if args.trace else []))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    reports = metrics.evaluate_run(args.pred, args.ref)
    print(metrics.format_report_table(reports))
    if args.csv:
        metrics.write_report_csv(reports, args.csv)
        _write_manifest("evaluate", vars(args) | {"func": None},
                        [args.pred, args.ref], [args.csv])
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import QAService, create_app

    params = finder.load_params(args.params)
    gateway = _load_gateway(args.gateway_config)
    service = QAService(params, gateway, default_budget=args.budget,
                        k_top=args.k_top)
    if args.docs:
        for doc in read_documents_jsonl(args.docs):
            service.add_document(doc)
    uvicorn.run(create_app(service), host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pageqa",
        description="Page-grounded long-document QA pipeline",
    )
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse OCR records into canonical documents")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--gap-factor", type=float, default=ingest.DEFAULT_GAP_FACTOR)
    p.add_argument("--overlap-min", type=float, default=ingest.DEFAULT_OVERLAP_MIN)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("tag", help="rank taxonomy labels from embeddings")
    p.add_argument("--page-embeddings", required=True)
    p.add_argument("--label-embeddings", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("sample", help="balanced stratified document sampling")
    p.add_argument("--docs", required=True)
    p.add_argument("--quota", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exclude", help="ids of a previous draw to stay disjoint from")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gen-qa", help="persona-driven multi-turn QA generation")
    p.add_argument("--docs", required=True)
    p.add_argument("--personas", required=True)
    p.add_argument("--gateway-config", required=True)
    p.add_argument("--n-qa", type=int, default=4)
    p.add_argument("--max-attempts", type=int, default=8)
    p.add_argument("--personas-per-round", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multi-turn-only", action="store_true")
    p.add_argument("--multi-hop-only", action="store_true",
                   help="only documents with more than 10 pages")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_gen_qa)

    p = sub.add_parser("build-train",
                       help="windowed QA + reiteration examples, mixed")
    p.add_argument("--docs", required=True)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--window", default="fixed:1", help="none | fixed:W | max")
    p.add_argument("--budget", type=int, default=8192)
    p.add_argument("--excerpt-tokens", type=int, default=64)
    p.add_argument("--ratio", type=float, default=contexts.DEFAULT_MIX_RATIO)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_build_train)

    p = sub.add_parser("train-finder", help="train the page retrieval encoder")
    p.add_argument("--pairs", required=True,
                   help="JSONL of {query, positive} text pairs")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--learning-rate", type=float, default=2e-5)
    p.add_argument("--tau", type=float, default=finder.DEFAULT_TAU)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-dim", type=int, default=finder.DEFAULT_FEATURE_DIM)
    p.add_argument("--embed-dim", type=int, default=finder.DEFAULT_EMBED_DIM)
    p.add_argument("--warmup-ratio", type=float, default=0.1)
    p.add_argument("--trace", help="CSV loss trace output")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_train_finder)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the grounded QA HTTP service")
    p.add_argument("--docs")
    p.add_argument("--params", required=True)
    p.add_argument("--gateway-config", required=True)
    p.add_argument("--budget", type=int, default=8192)
    p.add_argument("--k-top", type=int, default=1)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser,
                       argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        # Precedence: explicit flags > config file > parser defaults.
        defaults = parser.parse_args(
            [a for a in argv if a != "--config"
             and a != args.config]  # same command, defaults elsewhere
        )
        for key, value in file_values.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and getattr(args, attr) == getattr(
                defaults, attr, None
            ) and f"--{key}" not in argv:
                setattr(args, attr, value)
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = _apply_config_file(parser, list(argv if argv is not None
                                               else sys.argv[1:]))
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, SystemExit) as exc:
        logger.error("validation failure: %s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        logger.error("runtime failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
