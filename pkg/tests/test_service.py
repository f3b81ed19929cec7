from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from specrag.chain import RetrievalParams
from specrag.errors import ProviderError
from specrag.llm import LlmConfig
from specrag.service import AppConfig, create_app

from conftest import ECN_QUESTION


@pytest.fixture()
def app_config(ecn_index_dir, ecn_script, hash_cfg):
    return AppConfig(
        index_dir=str(ecn_index_dir),
        embedder=hash_cfg,
        llm=LlmConfig(kind="scripted", script=ecn_script),
    )


@pytest.fixture()
def client(app_config):
    with TestClient(create_app(app_config), raise_server_exceptions=False) as c:
        yield c


def _new_session(client) -> str:
    resp = client.post("/v1/sessions")
    assert resp.status_code == 201
    return resp.json()["session_id"]


class TestSessions:
    def test_create_distinct(self, client):
        assert _new_session(client) != _new_session(client)

    def test_history_empty_on_fresh(self, client):
        sid = _new_session(client)
        resp = client.get(f"/v1/sessions/{sid}/history")
        assert resp.status_code == 200
        assert resp.json() == []

    def test_unknown_route_error_is_api_shaped(self, client):
        resp = client.get("/v1/definitely-not-a-route")
        assert resp.status_code == 404
        body = resp.json()
        assert set(body) == {"code", "message"}
        assert body["code"] == "not_found"
        resp = client.get("/v1/sessions")  # wrong method for this route
        assert resp.status_code in (404, 405)
        assert set(resp.json()) == {"code", "message"}

    def test_history_unknown_session(self, client):
        resp = client.get("/v1/sessions/ffffffffffffffffffffffffffffffff/history")
        assert resp.status_code == 404
        body = resp.json()
        assert body["code"] == "not_found" and "message" in body


class TestQuery:
    def test_valid_question_contract_shape(self, client):
        sid = _new_session(client)
        resp = client.post(f"/v1/sessions/{sid}/query", json={"question": ECN_QUESTION})
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("application/json")
        body = resp.json()
        assert set(body) == {"answer", "references", "retrieved", "verdict", "standalone_query"}
        assert body["verdict"] == "ok"
        assert body["references"][0]["spec_label"] == "23.334"
        assert body["retrieved"][0]["chunk"]["chunk_id"]

    def test_empty_question_400(self, client):
        sid = _new_session(client)
        resp = client.post(f"/v1/sessions/{sid}/query", json={"question": ""})
        assert resp.status_code == 400
        assert resp.json()["code"] == "bad_request"

    def test_unknown_session_404(self, client):
        resp = client.post(
            "/v1/sessions/ffffffffffffffffffffffffffffffff/query",
            json={"question": "x"},
        )
        assert resp.status_code == 404
        assert resp.json()["code"] == "not_found"

    def test_query_appends_history(self, client):
        sid = _new_session(client)
        client.post(f"/v1/sessions/{sid}/query", json={"question": ECN_QUESTION})
        turns = client.get(f"/v1/sessions/{sid}/history").json()
        assert len(turns) == 1
        assert turns[0]["query"] == ECN_QUESTION
        assert turns[0]["references"]

    def test_per_request_overrides(self, client):
        sid = _new_session(client)
        resp = client.post(
            f"/v1/sessions/{sid}/query",
            json={"question": ECN_QUESTION, "k": 1, "excluded_doc_ids": []},
        )
        assert resp.status_code == 200
        assert len(resp.json()["retrieved"]) <= 1

    def test_provider_failure_502(self, app_config, ecn_index_dir):
        class Failing:
            kind = "failing"
            call_count = 0

            def complete(self, messages):
                raise ProviderError("downstream sad", status=500)

        app = create_app(app_config, llm=Failing())
        with TestClient(app, raise_server_exceptions=False) as client:
            sid = _new_session(client)
            resp = client.post(f"/v1/sessions/{sid}/query", json={"question": ECN_QUESTION})
            assert resp.status_code == 502
            assert resp.json()["code"] == "provider_unavailable"

    def test_malformed_body_400(self, client):
        sid = _new_session(client)
        resp = client.post(
            f"/v1/sessions/{sid}/query",
            content=b"not json",
            headers={"Content-Type": "application/json"},
        )
        assert resp.status_code == 400


class TestIndexInfo:
    def test_counts_match_fixture(self, client, ecn_kb):
        resp = client.get("/v1/index")
        assert resp.status_code == 200
        body = resp.json()
        assert body["doc_count"] == 3
        assert body["chunk_count"] == ecn_kb.chunk_count
        assert body["dim"] == ecn_kb.dim
        assert body["embedder_kind"] == "hash"

    def test_no_index_503(self, hash_cfg):
        cfg = AppConfig(embedder=hash_cfg, llm=LlmConfig(kind="scripted"))
        with TestClient(create_app(cfg), raise_server_exceptions=False) as client:
            assert client.get("/v1/index").status_code == 503
            sid = _new_session(client)
            resp = client.post(f"/v1/sessions/{sid}/query", json={"question": "x"})
            assert resp.status_code == 503


class TestHealthAndReload:
    def test_health(self, client):
        resp = client.get("/v1/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_reload_swaps_snapshot(self, client, ecn_kb):
        resp = client.post("/v1/admin/reload")
        assert resp.status_code == 200
        assert resp.json()["chunk_count"] == ecn_kb.chunk_count
        assert client.get("/v1/index").json()["chunk_count"] == ecn_kb.chunk_count

    def test_reload_without_index_dir_errors(self, hash_cfg):
        cfg = AppConfig(embedder=hash_cfg, llm=LlmConfig(kind="scripted"))
        with TestClient(create_app(cfg), raise_server_exceptions=False) as client:
            resp = client.post("/v1/admin/reload")
            assert resp.status_code == 500
            assert resp.json()["code"] == "internal"


class TestConfig:
    def test_from_file_round_trip(self, tmp_path, ecn_index_dir):
        raw = {
            "addr": "0.0.0.0:9000",
            "index_dir": str(ecn_index_dir),
            "state_dir": str(tmp_path / "state"),
            "embedder": {"kind": "hash", "dim": 128},
            "llm": {"kind": "scripted", "script": [["ECN", "reply"]]},
            "retrieval": {"k": 2, "min_score": 0.05, "excluded_doc_ids": ["d1"]},
            "verify": {"no_docs_message": "nothing found", "banned_keywords": ["bad"]},
            "cors_origins": ["http://localhost:5173"],
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(raw))
        cfg = AppConfig.from_file(path)
        assert cfg.addr == "0.0.0.0:9000"
        assert cfg.embedder.dim == 128
        assert cfg.llm.script == [("ECN", "reply")]
        assert cfg.retrieval == RetrievalParams(k=2, min_score=0.05, excluded_doc_ids=frozenset({"d1"}))
        assert cfg.verify.no_docs_message == "nothing found"
        assert cfg.cors_origins == ["http://localhost:5173"]

    def test_cors_headers_present(self, app_config):
        app_config.cors_origins = ["http://ui.example"]
        with TestClient(create_app(app_config), raise_server_exceptions=False) as client:
            resp = client.get("/v1/health", headers={"Origin": "http://ui.example"})
            assert resp.headers.get("access-control-allow-origin") == "http://ui.example"
