from __future__ import annotations

import json
from pathlib import Path

import pytest

from specrag.embedder import EmbedderConfig, build_embedder
from specrag.kb import build_kb, load_kb
from specrag.llm import LlmConfig, build_llm
from specrag.vindex import warm_kernels

FIXTURES = Path(__file__).parent / "fixtures"
ECN_CORPUS = FIXTURES / "ecn"
ECN_QUESTION = (
    "What are the information elements included in the 'ECN Failure Indication', "
    "and how are they defined?"
)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Pay the one-off JIT compile before any timed test runs.
    warm_kernels()


@pytest.fixture(scope="session")
def hash_cfg() -> EmbedderConfig:
    return EmbedderConfig(kind="hash", dim=256)


@pytest.fixture(scope="session")
def hash_embedder(hash_cfg):
    return build_embedder(hash_cfg)


@pytest.fixture(scope="session")
def ecn_index_dir(tmp_path_factory, hash_embedder) -> Path:
    out = tmp_path_factory.mktemp("ecn-index")
    build_kb(ECN_CORPUS, out, hash_embedder)
    return out


@pytest.fixture()
def ecn_kb(ecn_index_dir):
    return load_kb(ecn_index_dir)


@pytest.fixture(scope="session")
def ecn_script() -> list[tuple[str, str]]:
    raw = json.loads((FIXTURES / "ecn.script").read_text(encoding="utf-8"))
    return [(entry["matcher"], entry["reply"]) for entry in raw]


@pytest.fixture()
def scripted_llm(ecn_script):
    return build_llm(LlmConfig(kind="scripted", script=ecn_script))
