"""Knowledge base assembly: corpus -> chunks -> embeddings -> vector index.

An index directory is self-contained: the HNSW files, the chunk table, and
the document manifest all live together, so the query side can map a chunk
hit back to its source document and title.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus as corpus_mod
from . import vindex
from .corpus import Chunk, ChunkingParams, FileError, SourceDocument
from .embedder import Embedder
from .errors import FormatError
from .vindex import HnswIndex, HnswParams

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.jsonl"


@dataclass
class KnowledgeBase:
    """A loaded index plus the chunk and document metadata behind it."""

    index: HnswIndex
    chunks: dict[str, Chunk]
    documents: dict[str, SourceDocument]

    @property
    def doc_count(self) -> int:
        return len(self.documents)

    @property
    def chunk_count(self) -> int:
        return self.index.count

    @property
    def dim(self) -> int:
        return self.index.dim

    def document_for_chunk(self, chunk_id: str) -> SourceDocument | None:
        chunk = self.chunks.get(chunk_id)
        if chunk is None:
            return None
        return self.documents.get(chunk.doc_id)


@dataclass
class BuildReport:
    out_dir: str
    doc_count: int = 0
    chunk_count: int = 0
    dim: int = 0
    errors: list[FileError] = field(default_factory=list)


def build_kb(
    corpus_dir: str | Path,
    out_dir: str | Path,
    embedder: Embedder,
    chunking: ChunkingParams | None = None,
    hnsw: HnswParams | None = None,
    snap_to_whitespace: bool = True,
) -> BuildReport:
    """Ingest a corpus directory into an index directory.

    Documents are processed in path order and chunks in document order, so a
    given corpus, embedder, and seed always produce the same files.
    """
    chunking = chunking or ChunkingParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    loaded = corpus_mod.load_directory(corpus_dir)
    for err in loaded.errors:
        logger.warning("skipping %s: %s (%s)", err.path, err.kind, err.message)

    all_chunks: list[Chunk] = []
    num_chunks: dict[str, int] = {}
    for doc in loaded.documents:
        chunks = corpus_mod.chunk_text(
            loaded.texts[doc.doc_id], chunking, doc_id=doc.doc_id,
            snap_to_whitespace=snap_to_whitespace,
        )
        num_chunks[doc.doc_id] = len(chunks)
        all_chunks.extend(chunks)

    report = BuildReport(out_dir=str(out_dir), doc_count=len(loaded.documents), errors=loaded.errors)
    if all_chunks:
        vectors = embedder.embed_batch([c.text for c in all_chunks])
        dim = int(vectors[0].shape[0])
        index = HnswIndex(dim, hnsw)
        for chunk, vec in zip(all_chunks, vectors):
            index.insert(chunk.chunk_id, vec)
        report.chunk_count = index.count
        report.dim = dim
    else:
        # An empty corpus still produces a loadable (empty) index dir.
        index = HnswIndex(max(getattr(embedder, "dim", 0) or 8, 8), hnsw)

    chunk_records = {
        c.chunk_id: {
            "doc_id": c.doc_id,
            "index": c.index,
            "start_char": c.start_char,
            "end_char": c.end_char,
            "text": c.text,
        }
        for c in all_chunks
    }
    vindex.save(index, out_dir, chunk_records)
    corpus_mod.write_manifest(out_dir / MANIFEST_FILE, loaded.documents, num_chunks)
    return report


def load_kb(dir_path: str | Path) -> KnowledgeBase:
    """Load an index directory produced by :func:`build_kb`."""
    dir_path = Path(dir_path)
    index = vindex.load(dir_path)
    records = vindex.load_chunk_records(dir_path)
    chunks: dict[str, Chunk] = {}
    for cid, rec in records.items():
        try:
            chunks[cid] = Chunk(
                chunk_id=cid,
                doc_id=rec["doc_id"],
                index=rec["index"],
                start_char=rec["start_char"],
                end_char=rec["end_char"],
                text=rec["text"],
            )
        except KeyError as exc:
            raise FormatError(f"chunk record {cid} missing field {exc}")
    manifest_path = dir_path / MANIFEST_FILE
    if not manifest_path.exists():
        raise FormatError(f"missing {MANIFEST_FILE} in {dir_path}")
    documents = {d.doc_id: d for d in corpus_mod.read_manifest(manifest_path)}
    return KnowledgeBase(index=index, chunks=chunks, documents=documents)
