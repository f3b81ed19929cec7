"""Corpus ingestion: load, clean, and chunk documents into retrieval units.

Documents are plain text (.txt) or markdown (.md); binary formats must be
extracted upstream. Cleaning is deliberately minimal and idempotent, and
chunking uses fixed-stride character windows with a configurable overlap so
that a document can be reconstructed exactly from its chunks.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import InvalidParams, RootNotFound

DEFAULT_EXTENSIONS = {".txt", ".md"}

# Matches standards-style document numbers such as "23.334" in file names,
# tolerating ".", "_" or "-" as the separator.
_SPEC_LABEL_RE = re.compile(r"(\d{2})[._-](\d{3})")

_HWS_RE = re.compile(r"[^\S\n]+")
_TRAILING_SPACE_RE = re.compile(r" \n")
_LEADING_SPACE_RE = re.compile(r"\n ")
_BLANK_RUN_RE = re.compile(r"\n{4,}")


@dataclass(frozen=True)
class ChunkingParams:
    """Character-window chunking settings: window length and overlap."""

    chunk_size: int = 4000
    overlap: int = 100

    def __post_init__(self) -> None:
        if self.chunk_size <= 0:
            raise InvalidParams(f"chunk_size must be positive, got {self.chunk_size}")
        if self.overlap < 0:
            raise InvalidParams(f"overlap must be non-negative, got {self.overlap}")
        if self.overlap >= self.chunk_size:
            raise InvalidParams(
                f"overlap ({self.overlap}) must be smaller than chunk_size ({self.chunk_size})"
            )

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap


@dataclass(frozen=True)
class SourceDocument:
    """One corpus file after cleaning, with stable content-derived identity."""

    doc_id: str
    path: str
    title: str
    spec_label: str | None
    content_hash: str
    char_count: int


@dataclass(frozen=True)
class Chunk:
    """A contiguous passage of a cleaned document; the unit of retrieval."""

    chunk_id: str
    doc_id: str
    index: int
    start_char: int
    end_char: int
    text: str


@dataclass
class FileError:
    """Per-file ingestion failure; the batch continues past these."""

    path: str
    kind: str
    message: str


@dataclass
class LoadResult:
    documents: list[SourceDocument] = field(default_factory=list)
    errors: list[FileError] = field(default_factory=list)
    texts: dict[str, str] = field(default_factory=dict)  # doc_id -> cleaned text


def clean_text(raw: str) -> str:
    """Normalize raw document text.

    Applies NFC normalization, converts CRLF/CR line endings to LF, collapses
    runs of horizontal whitespace to a single space, drops spaces adjacent to
    line breaks, caps blank-line runs at two, and strips the ends. Idempotent.
    """
    text = unicodedata.normalize("NFC", raw)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = _HWS_RE.sub(" ", text)
    text = _TRAILING_SPACE_RE.sub("\n", text)
    text = _LEADING_SPACE_RE.sub("\n", text)
    text = _BLANK_RUN_RE.sub("\n\n\n", text)
    return text.strip()


def _snap_back(text: str, start: int, end: int, overlap: int, window: int = 32) -> int:
    """Move a cut point back to the nearest whitespace within `window` chars.

    Returns `end` unchanged when no whitespace is in range or when snapping
    would stall the stride (the adjusted window must still extend past the
    overlap carried into the next chunk).
    """
    lo = max(start + 1, end - window)
    for j in range(end - 1, lo - 1, -1):
        if text[j].isspace():
            if j - start > overlap:
                return j
            break
    return end


def chunk_text(
    cleaned: str,
    params: ChunkingParams,
    doc_id: str = "doc",
    snap_to_whitespace: bool = True,
) -> list[Chunk]:
    """Split cleaned text into overlapping fixed-stride windows.

    Consecutive chunks overlap by ``params.overlap`` characters. A final
    window that would fall entirely inside the previous chunk is not emitted.
    With ``snap_to_whitespace`` (the default) interior cut points move
    backward to the nearest whitespace within 32 characters, which keeps the
    overlap exact only at unadjusted boundaries; disable it when byte-exact
    reconstruction from chunks is required.
    """
    if not cleaned:
        raise InvalidParams("cannot chunk empty text")
    n = len(cleaned)
    chunks: list[Chunk] = []
    start = 0
    index = 0
    while start < n:
        end = min(start + params.chunk_size, n)
        if end < n and snap_to_whitespace:
            end = _snap_back(cleaned, start, end, params.overlap)
        if chunks and end <= chunks[-1].end_char:
            break  # window adds no new text beyond the previous chunk
        chunks.append(
            Chunk(
                chunk_id=f"{doc_id}#{index}",
                doc_id=doc_id,
                index=index,
                start_char=start,
                end_char=end,
                text=cleaned[start:end],
            )
        )
        if end >= n:
            break
        start = end - params.overlap
        index += 1
    return chunks


def stitch_chunks(chunks: list[Chunk], overlap: int) -> str:
    """Reassemble document text by trimming each non-first chunk's lead-in."""
    if not chunks:
        return ""
    parts = [chunks[0].text]
    parts.extend(c.text[overlap:] for c in chunks[1:])
    return "".join(parts)


def parse_spec_label(stem: str) -> str | None:
    """Extract a standards document number (e.g. "23.334") from a file stem."""
    m = _SPEC_LABEL_RE.search(stem)
    if m:
        return f"{m.group(1)}.{m.group(2)}"
    return None


def _sanitize_stem(stem: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]+", "-", stem).strip("-")
    return safe or "doc"


def document_from_text(path: Path, cleaned: str) -> SourceDocument:
    """Build a SourceDocument for already-cleaned text."""
    digest = hashlib.sha256(cleaned.encode("utf-8")).hexdigest()
    first_line = cleaned.split("\n", 1)[0]
    title = first_line[:120] if first_line else path.stem
    return SourceDocument(
        doc_id=f"{_sanitize_stem(path.stem)}-{digest[:16]}",
        path=str(path),
        title=title,
        spec_label=parse_spec_label(path.stem),
        content_hash=digest,
        char_count=len(cleaned),
    )


def load_directory(root: str | Path, extensions: set[str] | None = None) -> LoadResult:
    """Load every matching file under `root`, sorted by path.

    Unreadable or empty-after-cleaning files are skipped and recorded in the
    result's error list; the batch never aborts on a single bad file.
    """
    root = Path(root)
    if not root.is_dir():
        raise RootNotFound(f"corpus root not found: {root}")
    extensions = extensions or DEFAULT_EXTENSIONS
    result = LoadResult()
    paths = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in extensions)
    for path in paths:
        try:
            raw = path.read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            result.errors.append(FileError(str(path), "DecodeError", str(exc)))
            continue
        except OSError as exc:
            result.errors.append(FileError(str(path), "IoError", str(exc)))
            continue
        cleaned = clean_text(raw)
        if not cleaned:
            result.errors.append(FileError(str(path), "EmptyDocument", "empty after cleaning"))
            continue
        doc = document_from_text(path, cleaned)
        result.documents.append(doc)
        result.texts[doc.doc_id] = cleaned
    return result


def write_manifest(path: str | Path, documents: list[SourceDocument], num_chunks: dict[str, int]) -> None:
    """Write `manifest.jsonl`: one SourceDocument per line plus `num_chunks`."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            record = asdict(doc)
            record["num_chunks"] = num_chunks.get(doc.doc_id, 0)
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_manifest(path: str | Path) -> list[SourceDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            record.pop("num_chunks", None)
            docs.append(SourceDocument(**record))
    return docs
