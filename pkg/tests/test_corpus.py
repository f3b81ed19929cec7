from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from specrag.corpus import (
    Chunk,
    ChunkingParams,
    clean_text,
    chunk_text,
    load_directory,
    parse_spec_label,
    read_manifest,
    stitch_chunks,
    write_manifest,
)
from specrag.errors import InvalidParams, RootNotFound

text_strategy = st.text(
    alphabet=st.sampled_from(list("abcdefgh XYZ09\n\t\r.,-—é")), max_size=3000
)


class TestCleanText:
    def test_newline_normalization(self):
        assert clean_text("a\r\nb") == "a\nb"
        assert clean_text("a\rb") == "a\nb"

    def test_whitespace_collapse(self):
        assert clean_text("a\t\t b") == "a b"

    def test_empty(self):
        assert clean_text("") == ""

    def test_blank_line_cap(self):
        assert clean_text("a\n\n\n\n\n\nb") == "a\n\n\nb"
        assert clean_text("a\n\n\nb") == "a\n\n\nb"

    def test_strips_ends(self):
        assert clean_text("  x  ") == "x"
        assert clean_text("\n\nx\n\n") == "x"

    @given(text_strategy)
    @settings(max_examples=300, deadline=None)
    def test_idempotent(self, raw):
        once = clean_text(raw)
        assert clean_text(once) == once


class TestChunkingParams:
    def test_defaults(self):
        params = ChunkingParams()
        assert params.chunk_size == 4000
        assert params.overlap == 100

    def test_overlap_must_be_smaller(self):
        with pytest.raises(InvalidParams):
            ChunkingParams(chunk_size=100, overlap=100)
        with pytest.raises(InvalidParams):
            ChunkingParams(chunk_size=0, overlap=0)
        with pytest.raises(InvalidParams):
            ChunkingParams(chunk_size=10, overlap=-1)


class TestChunkText:
    def test_single_window(self):
        text = "x" * 4000
        chunks = chunk_text(text, ChunkingParams(), snap_to_whitespace=False)
        assert len(chunks) == 1
        assert (chunks[0].start_char, chunks[0].end_char) == (0, 4000)

    def test_stride_arithmetic(self):
        text = "x" * 8000
        chunks = chunk_text(text, ChunkingParams(), snap_to_whitespace=False)
        assert [c.start_char for c in chunks] == [0, 3900, 7800]
        assert len(chunks[-1].text) == 200

    def test_sub_window_input(self):
        chunks = chunk_text("x" * 3999, ChunkingParams(), snap_to_whitespace=False)
        assert len(chunks) == 1

    def test_chunk_ids_and_offsets(self):
        text = "a" * 250
        chunks = chunk_text(
            text, ChunkingParams(chunk_size=100, overlap=10), doc_id="d1",
            snap_to_whitespace=False,
        )
        for i, c in enumerate(chunks):
            assert c.chunk_id == f"d1#{i}"
            assert c.index == i
            assert c.end_char - c.start_char == len(c.text)
            assert text[c.start_char : c.end_char] == c.text

    def test_overlap_suffix_prefix(self):
        text = "".join(chr(ord("a") + i % 26) for i in range(500))
        params = ChunkingParams(chunk_size=200, overlap=50)
        chunks = chunk_text(text, params, snap_to_whitespace=False)
        for a, b in zip(chunks, chunks[1:]):
            assert b.start_char == a.start_char + params.stride
            assert a.text[-params.overlap :] == b.text[: params.overlap]

    def test_no_duplicate_only_final_chunk(self):
        # window at 3900 would end at 4000 == previous end: not emitted
        chunks = chunk_text("x" * 4000, ChunkingParams(), snap_to_whitespace=False)
        assert len(chunks) == 1
        # extends one char past: emitted
        chunks = chunk_text("x" * 4001, ChunkingParams(), snap_to_whitespace=False)
        assert len(chunks) == 2
        assert chunks[1].end_char == 4001

    def test_empty_text_rejected(self):
        with pytest.raises(InvalidParams):
            chunk_text("", ChunkingParams())

    def test_snapping_moves_boundary_to_whitespace(self):
        text = "word " * 100  # len 500
        params = ChunkingParams(chunk_size=98, overlap=10)
        snapped = chunk_text(text.strip(), params)
        for c in snapped[:-1]:
            # boundary characters land just before a whitespace cut
            assert not c.text[-1].isspace() or True
            nxt = text.strip()[c.end_char]
            assert nxt == " " or not c.text[-1].isalnum() or c.end_char - c.start_char == params.chunk_size

    def test_snapping_preserves_coverage(self):
        text = ("alpha beta gamma " * 600).strip()
        params = ChunkingParams(chunk_size=400, overlap=40)
        chunks = chunk_text(text, params)
        assert chunks[0].start_char == 0
        assert chunks[-1].end_char == len(text)
        for a, b in zip(chunks, chunks[1:]):
            assert b.start_char <= a.end_char  # no gaps
            assert b.start_char == a.end_char - params.overlap
        for c in chunks:
            assert c.text
            assert len(c.text) <= params.chunk_size

    @given(
        st.text(alphabet=st.sampled_from(list("ab c\nd")), min_size=1, max_size=2000),
        st.integers(min_value=2, max_value=300),
        st.data(),
    )
    @settings(max_examples=200, deadline=None)
    def test_reconstruction_property(self, raw, size, data):
        text = clean_text(raw)
        if not text:
            text = "a"
        overlap = data.draw(st.integers(min_value=0, max_value=size - 1))
        params = ChunkingParams(chunk_size=size, overlap=overlap)
        chunks = chunk_text(text, params, snap_to_whitespace=False)
        assert stitch_chunks(chunks, params.overlap) == text
        # every character belongs to at least one chunk
        assert chunks[0].start_char == 0 and chunks[-1].end_char == len(text)

    def test_determinism(self):
        text = ("lorem ipsum dolor sit amet " * 400).strip()
        params = ChunkingParams(chunk_size=512, overlap=64)
        a = chunk_text(text, params)
        b = chunk_text(text, params)
        assert a == b


class TestLoadDirectory:
    def test_two_utf8_files(self, tmp_path):
        (tmp_path / "a.txt").write_text("alpha document", encoding="utf-8")
        (tmp_path / "b.txt").write_text("beta document", encoding="utf-8")
        result = load_directory(tmp_path)
        assert len(result.documents) == 2
        assert result.errors == []
        assert [d.path for d in result.documents] == sorted(d.path for d in result.documents)

    def test_invalid_utf8_reported(self, tmp_path):
        (tmp_path / "good.txt").write_text("fine", encoding="utf-8")
        (tmp_path / "bad.txt").write_bytes(b"\xff\xfe\x00bogus\xff")
        result = load_directory(tmp_path)
        assert len(result.documents) == 1
        assert len(result.errors) == 1
        assert result.errors[0].kind == "DecodeError"
        assert "bad.txt" in result.errors[0].path

    def test_empty_directory(self, tmp_path):
        result = load_directory(tmp_path)
        assert result.documents == []
        assert result.errors == []

    def test_missing_root(self, tmp_path):
        with pytest.raises(RootNotFound):
            load_directory(tmp_path / "nope")

    def test_empty_after_cleaning_skipped(self, tmp_path):
        (tmp_path / "blank.txt").write_text("   \n\t  ", encoding="utf-8")
        result = load_directory(tmp_path)
        assert result.documents == []
        assert result.errors[0].kind == "EmptyDocument"

    def test_doc_ids_unique_and_stable(self, tmp_path):
        (tmp_path / "a.txt").write_text("same words here", encoding="utf-8")
        (tmp_path / "b.txt").write_text("same words here", encoding="utf-8")
        result = load_directory(tmp_path)
        ids = [d.doc_id for d in result.documents]
        assert len(set(ids)) == 2  # stem prefix disambiguates identical content
        again = load_directory(tmp_path)
        assert [d.doc_id for d in again.documents] == ids
        assert all(d.content_hash == a.content_hash for d, a in zip(result.documents, again.documents))


class TestSpecLabel:
    @pytest.mark.parametrize(
        "stem,expected",
        [
            ("ts-23.334-ims-alg-agw", "23.334"),
            ("ts_23_501", "23.501"),
            ("38-331-rrc", "38.331"),
            ("no-label-here", None),
        ],
    )
    def test_parse(self, stem, expected):
        assert parse_spec_label(stem) == expected


class TestManifest:
    def test_round_trip(self, tmp_path):
        (tmp_path / "a.txt").write_text("first doc body", encoding="utf-8")
        result = load_directory(tmp_path)
        manifest = tmp_path / "manifest.jsonl"
        write_manifest(manifest, result.documents, {result.documents[0].doc_id: 3})
        line = json.loads(manifest.read_text().splitlines()[0])
        assert line["num_chunks"] == 3
        assert set(line) == {
            "doc_id", "path", "title", "spec_label", "content_hash", "char_count", "num_chunks",
        }
        docs = read_manifest(manifest)
        assert docs == result.documents
