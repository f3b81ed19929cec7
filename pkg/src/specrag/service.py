"""HTTP facade over the query pipeline.

Routes (all JSON):

* ``POST /v1/sessions`` -> 201 ``{"session_id"}``
* ``GET  /v1/sessions/{id}/history`` -> list of turns
* ``POST /v1/sessions/{id}/query`` -> answer envelope
* ``GET  /v1/index`` -> corpus/index counters
* ``GET  /v1/health`` -> ``{"status": "ok"}``
* ``POST /v1/admin/reload`` -> re-load the index dir and swap snapshots

The service never mutates the index; re-ingest happens out-of-band and the
reload endpoint swaps in the new snapshot atomically while in-flight requests
finish on the old one.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from .chain import AnswerEnvelope, PersonaConfig, Pipeline, RetrievalParams, VerifyConfig
from .embedder import Embedder, EmbedderConfig, build_embedder
from .errors import EmptyInput, ProviderError, SpecragError, UnknownSession
from .history import SessionStore
from .kb import KnowledgeBase, load_kb
from .llm import LlmClient, LlmConfig, build_llm

logger = logging.getLogger(__name__)

CODE_BAD_REQUEST = "bad_request"
CODE_NOT_FOUND = "not_found"
CODE_PROVIDER_UNAVAILABLE = "provider_unavailable"
CODE_INTERNAL = "internal"


@dataclass
class AppConfig:
    """Service configuration; JSON file fields mirror these names."""

    addr: str = "127.0.0.1:8080"
    index_dir: str = ""
    state_dir: str = ""
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    cors_origins: list[str] = field(default_factory=list)
    history_window: int = 10

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> AppConfig:
        cfg = cls()
        for key in ("addr", "index_dir", "state_dir", "history_window"):
            if key in raw:
                setattr(cfg, key, raw[key])
        if "cors_origins" in raw:
            cfg.cors_origins = list(raw["cors_origins"])
        if "embedder" in raw:
            cfg.embedder = EmbedderConfig(**raw["embedder"])
        if "llm" in raw:
            llm_raw = dict(raw["llm"])
            if "script" in llm_raw:
                llm_raw["script"] = [tuple(entry) for entry in llm_raw["script"]]
            cfg.llm = LlmConfig(**llm_raw)
        if "retrieval" in raw:
            r = dict(raw["retrieval"])
            if "excluded_doc_ids" in r:
                r["excluded_doc_ids"] = frozenset(r["excluded_doc_ids"])
            cfg.retrieval = RetrievalParams(**r)
        if "verify" in raw:
            cfg.verify = VerifyConfig(**raw["verify"])
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> AppConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def envelope_to_dict(env: AnswerEnvelope) -> dict[str, Any]:
    return {
        "answer": env.answer,
        "references": [asdict(r) for r in env.references],
        "retrieved": [
            {
                "chunk": asdict(d.chunk),
                "score": d.score,
                "source_title": d.source_title,
                "spec_label": d.spec_label,
            }
            for d in env.retrieved
        ],
        "verdict": env.verdict,
        "standalone_query": env.standalone_query,
    }


class ServiceState:
    """Mutable service state: snapshot-swappable pipeline plus sessions."""

    def __init__(
        self,
        config: AppConfig,
        kb: KnowledgeBase | None,
        embedder: Embedder,
        llm: LlmClient,
    ):
        self.config = config
        self.embedder = embedder
        self.llm = llm
        self.store = SessionStore(config.state_dir or None)
        self._swap_lock = threading.Lock()
        self.pipeline: Pipeline | None = None
        if kb is not None:
            self.pipeline = self._make_pipeline(kb)

    def _make_pipeline(self, kb: KnowledgeBase) -> Pipeline:
        return Pipeline(
            kb=kb,
            embedder=self.embedder,
            llm=self.llm,
            retrieval=self.config.retrieval,
            verify=self.config.verify,
            persona=PersonaConfig(),
            history_window=self.config.history_window,
        )

    def reload(self) -> KnowledgeBase:
        if not self.config.index_dir:
            raise SpecragError("no index_dir configured")
        kb = load_kb(self.config.index_dir)
        with self._swap_lock:
            self.pipeline = self._make_pipeline(kb)
        return kb


def create_app(
    config: AppConfig,
    kb: KnowledgeBase | None = None,
    embedder: Embedder | None = None,
    llm: LlmClient | None = None,
) -> FastAPI:
    """Build the application; `kb`/`embedder`/`llm` override config wiring."""
    if embedder is None:
        embedder = build_embedder(config.embedder)
    if llm is None:
        llm = build_llm(config.llm)
    if kb is None and config.index_dir:
        kb = load_kb(config.index_dir)
    state = ServiceState(config, kb, embedder, llm)

    app = FastAPI(title="specrag", docs_url=None, redoc_url=None)
    app.state.service = state

    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=config.cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(Exception)
    async def on_unhandled(request: Request, exc: Exception) -> JSONResponse:
        logger.exception("unhandled error on %s", request.url.path)
        return _error(500, CODE_INTERNAL, str(exc))

    # Router-level errors (unknown routes, bad methods) must also serialize
    # as the ApiError shape, not the framework default.
    @app.exception_handler(StarletteHTTPException)
    async def on_http_exception(request: Request, exc: StarletteHTTPException) -> JSONResponse:
        if exc.status_code == 404:
            code = CODE_NOT_FOUND
        elif exc.status_code < 500:
            code = CODE_BAD_REQUEST
        else:
            code = CODE_INTERNAL
        return _error(exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def on_validation(request: Request, exc: RequestValidationError) -> JSONResponse:
        return _error(400, CODE_BAD_REQUEST, str(exc))

    @app.post("/v1/sessions", status_code=201)
    def create_session() -> dict[str, str]:
        session = state.store.create_session()
        return {"session_id": session.session_id}

    @app.get("/v1/sessions/{session_id}/history")
    def session_history(session_id: str):
        try:
            session = state.store.get(session_id)
        except UnknownSession as exc:
            return _error(404, CODE_NOT_FOUND, str(exc))
        return [
            {
                "query": t.query,
                "answer": t.answer,
                "references": t.references,
                "timestamp": t.timestamp,
            }
            for t in session.turns
        ]

    @app.post("/v1/sessions/{session_id}/query")
    async def query(session_id: str, request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, CODE_BAD_REQUEST, "body must be JSON")
        if not isinstance(body, dict):
            return _error(400, CODE_BAD_REQUEST, "body must be a JSON object")
        question = body.get("question", "")
        if not isinstance(question, str) or not question.strip():
            return _error(400, CODE_BAD_REQUEST, "question must be a non-empty string")
        k = body.get("k")
        if k is not None and (not isinstance(k, int) or k < 1):
            return _error(400, CODE_BAD_REQUEST, "k must be a positive integer")
        excluded = body.get("excluded_doc_ids")
        if excluded is not None and not isinstance(excluded, list):
            return _error(400, CODE_BAD_REQUEST, "excluded_doc_ids must be a list")
        pipeline = state.pipeline
        if pipeline is None:
            return _error(503, CODE_INTERNAL, "no index mounted")
        try:
            lock = state.store.lock(session_id)
        except UnknownSession as exc:
            return _error(404, CODE_NOT_FOUND, str(exc))

        def run():
            # Providers block; keep the event loop free for other sessions.
            with lock:
                return pipeline.answer(
                    state.store,
                    session_id,
                    question,
                    k=k,
                    excluded_doc_ids=set(excluded) if excluded is not None else None,
                )

        try:
            env = await run_in_threadpool(run)
        except UnknownSession as exc:
            return _error(404, CODE_NOT_FOUND, str(exc))
        except EmptyInput as exc:
            return _error(400, CODE_BAD_REQUEST, str(exc))
        except ProviderError as exc:
            return _error(502, CODE_PROVIDER_UNAVAILABLE, str(exc))
        return envelope_to_dict(env)

    @app.get("/v1/index")
    def index_info():
        pipeline = state.pipeline
        if pipeline is None:
            return _error(503, CODE_INTERNAL, "no index mounted")
        kb_ = pipeline.kb
        return {
            "doc_count": kb_.doc_count,
            "chunk_count": kb_.chunk_count,
            "dim": kb_.dim,
            "embedder_kind": state.embedder.kind,
        }

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/admin/reload")
    def reload_index():
        try:
            kb_ = state.reload()
        except SpecragError as exc:
            return _error(500, CODE_INTERNAL, str(exc))
        return {"status": "ok", "chunk_count": kb_.chunk_count}

    return app
