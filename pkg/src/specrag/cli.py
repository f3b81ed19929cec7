"""Operator command line: ingest a corpus, query it, serve the API, evaluate.

Exit codes: 0 success, 1 ingest failures under --strict, 2 usage or config
error, 3 provider failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .chain import Pipeline, RetrievalParams
from .corpus import ChunkingParams
from .embedder import EmbedderConfig, build_embedder
from .errors import InvalidParams, ProviderError, RootNotFound, SpecragError
from .history import SessionStore
from .kb import build_kb, load_kb
from .llm import LlmConfig, build_llm
from .service import AppConfig, create_app, envelope_to_dict

EXIT_OK = 0
EXIT_STRICT_FAILURES = 1
EXIT_USAGE = 2
EXIT_PROVIDER = 3


def _load_config(path: str | None) -> AppConfig:
    if not path:
        return AppConfig()
    try:
        return AppConfig.from_file(path)
    except (OSError, json.JSONDecodeError, TypeError, SpecragError) as exc:
        raise InvalidParams(f"cannot read config {path}: {exc}")


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _embedder_config(cfg: AppConfig, args: argparse.Namespace) -> EmbedderConfig:
    base = cfg.embedder
    kind = args.embedder or base.kind
    return EmbedderConfig(
        kind=kind,
        dim=args.dim or base.dim,
        base_url=args.embed_url or base.base_url,
        model_name=base.model_name,
        api_key_env=base.api_key_env,
        batch_size=base.batch_size,
        timeout_s=base.timeout_s,
        max_retries=base.max_retries,
    )


def _llm_config(cfg: AppConfig, args: argparse.Namespace) -> LlmConfig:
    base = cfg.llm
    kind = args.llm or base.kind
    script = base.script
    if args.script:
        script = _load_script(args.script)
    return LlmConfig(
        kind=kind,
        base_url=args.llm_url or base.base_url,
        model_name=base.model_name,
        api_key_env=base.api_key_env,
        temperature=base.temperature,
        script=script,
        timeout_s=base.timeout_s,
        max_retries=base.max_retries,
    )


def _load_script(path: str) -> list[tuple[str, str]]:
    """Script file: JSON list of {"matcher", "reply"} objects or [m, r] pairs."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    script = []
    for entry in raw:
        if isinstance(entry, dict):
            script.append((entry["matcher"], entry["reply"]))
        else:
            matcher, reply = entry
            script.append((matcher, reply))
    return script


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    try:
        chunking = ChunkingParams(chunk_size=args.chunk_size, overlap=args.overlap)
        embedder = build_embedder(_embedder_config(cfg, args))
    except InvalidParams as exc:
        return _usage_error(str(exc))
    print(f"chunking: chunk_size={chunking.chunk_size} overlap={chunking.overlap}")
    try:
        report = build_kb(args.corpus, args.out, embedder, chunking=chunking)
    except RootNotFound as exc:
        return _usage_error(str(exc))
    except ProviderError as exc:
        print(f"error: embedding provider failed: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    for err in report.errors:
        print(f"skipped {err.path}: {err.kind}: {err.message}", file=sys.stderr)
    print(
        f"ingested {report.doc_count} documents, {report.chunk_count} chunks "
        f"(dim {report.dim}) -> {report.out_dir}"
    )
    if args.strict and report.errors:
        return EXIT_STRICT_FAILURES
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    index_dir = args.index or cfg.index_dir
    if not index_dir or not Path(index_dir).is_dir():
        return _usage_error(f"index directory not found: {index_dir!r}")
    try:
        kb = load_kb(index_dir)
        embedder = build_embedder(_embedder_config(cfg, args))
        llm = build_llm(_llm_config(cfg, args))
    except (SpecragError, OSError) as exc:
        return _usage_error(str(exc))

    retrieval = RetrievalParams(
        k=args.k if args.k is not None else cfg.retrieval.k,
        min_score=args.min_score if args.min_score is not None else cfg.retrieval.min_score,
        excluded_doc_ids=frozenset(args.exclude or []) | cfg.retrieval.excluded_doc_ids,
    )
    pipeline = Pipeline(
        kb=kb, embedder=embedder, llm=llm, retrieval=retrieval, verify=cfg.verify
    )
    store = SessionStore()
    session = store.create_session()
    try:
        env = pipeline.answer(store, session.session_id, args.question)
    except ProviderError as exc:
        print(f"error: provider failed: {exc}", file=sys.stderr)
        return EXIT_PROVIDER

    if args.format == "text":
        print(env.answer)
        print()
        print(f"Interpreted as: {env.standalone_query}")
        if env.references:
            print("References:")
            for ref in env.references:
                label = f" ({ref.spec_label})" if ref.spec_label else ""
                print(f"  - {ref.source_title}{label} [{ref.doc_id}]")
        print(f"verdict: {env.verdict}")
    else:
        print(json.dumps(envelope_to_dict(env), indent=2, ensure_ascii=False))
    return EXIT_OK


def load_qrels(path: str | Path) -> list[tuple[str, str]]:
    """Parse a qrels TSV (query<TAB>expected_doc_id), rejecting bad lines."""
    qrels: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise InvalidParams(f"malformed qrels line {lineno}: {line!r}")
            qrels.append((parts[0], parts[1]))
    if not qrels:
        raise InvalidParams("qrels file has no entries")
    return qrels


def run_eval(kb, embedder, qrels: list[tuple[str, str]], k: int) -> dict:
    """Recall@k and MRR of the expected document over retrieved chunk hits.

    Uses an open score threshold so the metrics reflect ranking alone.
    """
    from .chain import retrieve

    params = RetrievalParams(k=k, min_score=-1.0)
    per_query = []
    hits_at_k = 0
    rr_sum = 0.0
    for query, expected in qrels:
        retrieved = retrieve(query, params, kb, embedder)
        hit_docs = [d.chunk.doc_id for d in retrieved]
        rank = hit_docs.index(expected) + 1 if expected in hit_docs else 0
        if rank:
            hits_at_k += 1
            rr_sum += 1.0 / rank
        per_query.append(
            {
                "query": query,
                "expected": expected,
                "hits": [
                    {"chunk_id": d.chunk.chunk_id, "doc_id": d.chunk.doc_id, "score": d.score}
                    for d in retrieved
                ],
            }
        )
    n = len(qrels)
    return {
        "k": k,
        "recall": hits_at_k / n,
        "mrr": rr_sum / n,
        "per_query": per_query,
    }


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    index_dir = args.index or cfg.index_dir
    if not index_dir or not Path(index_dir).is_dir():
        return _usage_error(f"index directory not found: {index_dir!r}")
    try:
        kb = load_kb(index_dir)
        embedder = build_embedder(_embedder_config(cfg, args))
        qrels = load_qrels(args.qrels)
    except (SpecragError, OSError) as exc:
        return _usage_error(str(exc))
    try:
        report = run_eval(kb, embedder, qrels, args.k)
    except ProviderError as exc:
        print(f"error: provider failed: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    print(f"queries: {len(qrels)}  recall@{report['k']}: {report['recall']:.4f}  mrr: {report['mrr']:.4f}")
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        print(f"report written to {args.report}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    cfg = _load_config(args.config)
    if args.index:
        cfg.index_dir = args.index
    if args.addr:
        cfg.addr = args.addr
    if not cfg.index_dir or not Path(cfg.index_dir).is_dir():
        return _usage_error(f"index directory not found: {cfg.index_dir!r}")
    try:
        app = create_app(cfg)
    except SpecragError as exc:
        return _usage_error(str(exc))
    host, _, port = cfg.addr.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specrag",
        description="Retrieval-augmented question answering over standards documents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="service config JSON; flags override its fields")
        p.add_argument("--embedder", choices=["hash", "remote"], help="embedding provider")
        p.add_argument("--dim", type=int, help="hash embedder dimension")
        p.add_argument("--embed-url", help="remote embedder base URL")

    p_ingest = sub.add_parser("ingest", help="build an index directory from a corpus")
    add_common(p_ingest)
    p_ingest.add_argument("--corpus", required=True, help="directory of .txt/.md files")
    p_ingest.add_argument("--out", required=True, help="output index directory")
    p_ingest.add_argument("--chunk-size", type=int, default=4000)
    p_ingest.add_argument("--overlap", type=int, default=100)
    p_ingest.add_argument("--strict", action="store_true", help="fail if any file was skipped")

    p_query = sub.add_parser("query", help="one-shot question against an index")
    add_common(p_query)
    p_query.add_argument("question")
    p_query.add_argument("--index", help="index directory")
    p_query.add_argument("--llm", choices=["scripted", "remote"], help="chat provider")
    p_query.add_argument("--script", help="scripted provider script JSON file")
    p_query.add_argument("--llm-url", help="remote chat provider base URL")
    p_query.add_argument("--k", type=int, default=None)
    p_query.add_argument("--min-score", type=float, default=None)
    p_query.add_argument("--exclude", action="append", metavar="DOC_ID")
    p_query.add_argument("--format", choices=["json", "text"], default="json")

    p_eval = sub.add_parser("eval", help="retrieval metrics over a qrels file")
    add_common(p_eval)
    p_eval.add_argument("--index", help="index directory")
    p_eval.add_argument("--qrels", required=True, help="TSV: query<TAB>expected_doc_id")
    p_eval.add_argument("--k", type=int, default=4)
    p_eval.add_argument("--report", help="write per-query JSON report here")

    p_serve = sub.add_parser("serve", help="run the HTTP API")
    add_common(p_serve)
    p_serve.add_argument("--index", help="index directory")
    p_serve.add_argument("--addr", help="host:port to bind")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "ingest": cmd_ingest,
        "query": cmd_query,
        "eval": cmd_eval,
        "serve": cmd_serve,
    }
    try:
        code = handlers[args.command](args)
    except InvalidParams as exc:
        code = _usage_error(str(exc))
    return code


if __name__ == "__main__":
    sys.exit(main())
