"""Retrieval-augmented question answering over standards documents.

The package splits into an offline ingestion side (clean and chunk a corpus,
embed the chunks, build an HNSW vector index) and an online query side
(condense a conversational query, retrieve by cosine similarity, generate an
answer, and attach source references programmatically).
"""

from .corpus import Chunk, ChunkingParams, SourceDocument, chunk_text, clean_text, load_directory
from .embedder import EmbedderConfig, build_embedder, embed_batch, embed_query, hash_embed
from .errors import (
    DimMismatch,
    DuplicateId,
    EmptyInput,
    FormatError,
    InvalidParams,
    NoTokens,
    ProviderError,
    RootNotFound,
    SpecragError,
    UnknownSession,
    VersionMismatch,
)
from .history import Session, SessionStore, Turn
from .llm import ChatMessage, LlmConfig, build_llm, chat_complete
from .vindex import HnswIndex, HnswParams, SearchHit, brute_force_knn, cosine

__all__ = [
    "Chunk",
    "ChunkingParams",
    "SourceDocument",
    "chunk_text",
    "clean_text",
    "load_directory",
    "EmbedderConfig",
    "build_embedder",
    "embed_batch",
    "embed_query",
    "hash_embed",
    "HnswIndex",
    "HnswParams",
    "SearchHit",
    "brute_force_knn",
    "cosine",
    "ChatMessage",
    "LlmConfig",
    "build_llm",
    "chat_complete",
    "Session",
    "SessionStore",
    "Turn",
    "SpecragError",
    "DimMismatch",
    "DuplicateId",
    "EmptyInput",
    "FormatError",
    "InvalidParams",
    "NoTokens",
    "ProviderError",
    "RootNotFound",
    "UnknownSession",
    "VersionMismatch",
]

__version__ = "0.1.0"
