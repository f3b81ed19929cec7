from __future__ import annotations

import json
from pathlib import Path

import pytest

from specrag.cli import load_qrels, main
from specrag.errors import InvalidParams
from specrag.kb import load_kb
from specrag.vindex import load as load_index

from conftest import ECN_CORPUS, ECN_QUESTION, FIXTURES


def _qrels_from_index(index_dir: Path, path: Path) -> int:
    """One qrels line per chunk, using the chunk's own text as the query."""
    kb = load_kb(index_dir)
    lines = []
    for cid, chunk in sorted(kb.chunks.items()):
        query = " ".join(chunk.text.split())
        lines.append(f"{query}\t{chunk.doc_id}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(lines)


class TestIngest:
    def test_fixture_corpus(self, tmp_path, capsys):
        out = tmp_path / "ix"
        code = main(["ingest", "--corpus", str(ECN_CORPUS), "--out", str(out), "--embedder", "hash"])
        assert code == 0
        printed = capsys.readouterr().out
        assert "chunk_size=4000 overlap=100" in printed
        assert "3 documents" in printed
        index = load_index(out)
        assert index.count == 3
        assert (out / "manifest.jsonl").exists()
        assert (out / "chunks.jsonl").exists()

    def test_missing_corpus_flag_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["ingest", "--out", "/tmp/somewhere"])
        assert exc_info.value.code == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_nonexistent_corpus_dir(self, tmp_path):
        code = main(["ingest", "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_strict_fails_on_bad_file(self, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        (corpus / "ok.txt").write_text("fine text", encoding="utf-8")
        (corpus / "bad.txt").write_bytes(b"\xff\xfe\x00")
        out = tmp_path / "ix"
        assert main(["ingest", "--corpus", str(corpus), "--out", str(out)]) == 0
        assert main(["ingest", "--corpus", str(corpus), "--out", str(out), "--strict"]) == 1


class TestQuery:
    def test_references_include_fixture_doc(self, ecn_index_dir, capsys):
        code = main(
            [
                "query",
                "--index", str(ecn_index_dir),
                "--llm", "scripted",
                "--script", str(FIXTURES / "ecn.script"),
                ECN_QUESTION,
            ]
        )
        assert code == 0
        body = json.loads(capsys.readouterr().out)
        assert body["verdict"] == "ok"
        assert any(r["spec_label"] == "23.334" for r in body["references"])

    def test_k_one_limits_retrieved(self, ecn_index_dir, capsys):
        code = main(
            [
                "query",
                "--index", str(ecn_index_dir),
                "--llm", "scripted",
                "--script", str(FIXTURES / "ecn.script"),
                "--k", "1",
                "--min-score", "-1",
                ECN_QUESTION,
            ]
        )
        assert code == 0
        body = json.loads(capsys.readouterr().out)
        assert len(body["retrieved"]) == 1

    def test_missing_index_usage_error(self, tmp_path):
        code = main(["query", "--index", str(tmp_path / "absent"), "question?"])
        assert code == 2

    def test_text_format(self, ecn_index_dir, capsys):
        code = main(
            [
                "query",
                "--index", str(ecn_index_dir),
                "--llm", "scripted",
                "--script", str(FIXTURES / "ecn.script"),
                "--format", "text",
                ECN_QUESTION,
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "References:" in out
        assert "Interpreted as:" in out


class TestEval:
    def test_perfect_recall_on_chunk_text_qrels(self, ecn_index_dir, tmp_path, capsys):
        qrels = tmp_path / "qrels.tsv"
        n = _qrels_from_index(ecn_index_dir, qrels)
        report_path = tmp_path / "report.json"
        code = main(
            [
                "eval",
                "--index", str(ecn_index_dir),
                "--qrels", str(qrels),
                "--report", str(report_path),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "recall@4: 1.0000" in out
        assert "mrr: 1.0000" in out
        report = json.loads(report_path.read_text())
        assert report["k"] == 4
        assert report["recall"] == 1.0 and report["mrr"] == 1.0
        assert len(report["per_query"]) == n
        assert {"query", "expected", "hits"} <= set(report["per_query"][0])

    def test_malformed_qrels_line_reported(self, ecn_index_dir, tmp_path, capsys):
        qrels = tmp_path / "qrels.tsv"
        qrels.write_text("good query\tdoc-1\nno tab here\n", encoding="utf-8")
        code = main(["eval", "--index", str(ecn_index_dir), "--qrels", str(qrels)])
        assert code == 2
        assert "line 2" in capsys.readouterr().err

    def test_empty_qrels_rejected(self, ecn_index_dir, tmp_path):
        qrels = tmp_path / "qrels.tsv"
        qrels.write_text("", encoding="utf-8")
        assert main(["eval", "--index", str(ecn_index_dir), "--qrels", str(qrels)]) == 2

    def test_k_flag(self, ecn_index_dir, tmp_path, capsys):
        qrels = tmp_path / "qrels.tsv"
        _qrels_from_index(ecn_index_dir, qrels)
        code = main(["eval", "--index", str(ecn_index_dir), "--qrels", str(qrels), "--k", "1"])
        assert code == 0
        assert "recall@1" in capsys.readouterr().out

    def test_load_qrels_contract(self, tmp_path):
        path = tmp_path / "q.tsv"
        path.write_text("alpha\td1\n\nbeta\td2\n", encoding="utf-8")
        assert load_qrels(path) == [("alpha", "d1"), ("beta", "d2")]
        path.write_text("only-one-column\n", encoding="utf-8")
        with pytest.raises(InvalidParams):
            load_qrels(path)


class TestConfigFlag:
    def test_config_file_supplies_index(self, ecn_index_dir, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {
                    "index_dir": str(ecn_index_dir),
                    "llm": {
                        "kind": "scripted",
                        "script": [["ECN", "configured reply"]],
                    },
                }
            )
        )
        code = main(["query", "--config", str(config), ECN_QUESTION])
        assert code == 0
        body = json.loads(capsys.readouterr().out)
        assert body["answer"] == "configured reply"

    def test_flags_override_config(self, ecn_index_dir, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"retrieval": {"k": 4}}))
        code = main(
            [
                "query",
                "--config", str(config),
                "--index", str(ecn_index_dir),
                "--llm", "scripted",
                "--script", str(FIXTURES / "ecn.script"),
                "--k", "1",
                "--min-score", "-1",
                ECN_QUESTION,
            ]
        )
        assert code == 0
        assert len(json.loads(capsys.readouterr().out)["retrieved"]) == 1

    def test_unreadable_config_usage_error(self, ecn_index_dir):
        assert main(["query", "--config", "/nope.json", "--index", str(ecn_index_dir), "q"]) == 2
