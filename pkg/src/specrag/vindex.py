"""HNSW approximate nearest-neighbor index over unit-norm embeddings.

A layered proximity graph (Malkov & Yashunin) specialized to cosine
similarity: stored vectors are unit-normalized, so similarity is a plain dot
product. Scores are accumulated in float64; vectors are stored and persisted
as little-endian float32.

Design notes:

* Node levels are drawn as ``floor(-ln(u) * ml)`` from a generator seeded at
  construction, so the same seed and insertion order reproduce the same
  graph byte-for-byte.
* Neighbor lists are pruned with the diversity heuristic (a candidate
  survives only if it is closer to the query than to every already-selected
  neighbor, with fill-up from discarded candidates), and edges are kept
  symmetric: whenever pruning drops ``x -> y``, ``y -> x`` is dropped too.
* Traversal, selection, and pruning run as JIT-compiled kernels over flat
  adjacency arrays (see ``_hnsw_kernels``); graph construction in pure
  Python was an order of magnitude too slow for corpus-scale ingest.
* Deletion is not supported; rebuild the index to remove documents.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _hnsw_kernels as _k
from .errors import DimMismatch, DuplicateId, FormatError, InvalidParams, VersionMismatch

FORMAT_VERSION = 1
VECTORS_MAGIC = b"TRAGVEC1"
GRAPH_MAGIC = b"TRAGGRF1"

META_FILE = "index.meta.json"
VECTORS_FILE = "vectors.bin"
GRAPH_FILE = "graph.bin"
CHUNKS_FILE = "chunks.jsonl"

_MAX_LEVEL = 255  # level is persisted as u8


@dataclass(frozen=True)
class HnswParams:
    """Graph construction and search settings."""

    m: int = 16
    m0: int = 0  # 0 means 2 * m
    ef_construction: int = 200
    ef_search: int = 100
    ml: float = 0.0  # 0 means 1 / ln(m)
    seed: int = 42

    def __post_init__(self) -> None:
        if self.m < 1:
            raise InvalidParams("m must be positive")
        if self.m0 == 0:
            object.__setattr__(self, "m0", 2 * self.m)
        if self.ml == 0.0:
            object.__setattr__(self, "ml", 1.0 / math.log(self.m) if self.m > 1 else 1.0)
        if self.ef_construction < self.m:
            raise InvalidParams("ef_construction must be >= m")
        if self.ef_search < 1:
            raise InvalidParams("ef_search must be >= 1")


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float


def _as_f64(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimMismatch(f"expected a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimMismatch(f"vector dim {arr.shape[0]} != index dim {dim}")
    return arr


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors, clamped to [-1, 1]."""
    a64 = _as_f64(a)
    b64 = _as_f64(b, dim=a64.shape[0])
    return float(np.clip(a64 @ b64, -1.0, 1.0))


def brute_force_knn(
    vectors: list[tuple[str, np.ndarray]], q: np.ndarray, k: int
) -> list[SearchHit]:
    """Exact top-k by cosine; the oracle the graph search is tested against.

    Ties in score break by ascending chunk id, same as :meth:`HnswIndex.search_knn`.
    """
    if not vectors:
        return []
    q64 = _as_f64(q)
    matrix = np.stack([_as_f64(v, dim=q64.shape[0]) for _, v in vectors])
    scores = np.clip(matrix @ q64, -1.0, 1.0)
    ranked = sorted(
        (SearchHit(cid, float(s)) for (cid, _), s in zip(vectors, scores)),
        key=lambda h: (-h.score, h.chunk_id),
    )
    return ranked[: max(k, 0)]


class HnswIndex:
    """Layered small-world graph over chunk embeddings.

    Vectors must share one dimension and be unit-normalized by the caller
    (the embedding module guarantees this). Safe for concurrent readers;
    inserts require exclusive access.
    """

    def __init__(self, dim: int, params: HnswParams | None = None):
        if dim < 1:
            raise InvalidParams("dim must be positive")
        self.dim = dim
        self.params = params or HnswParams()
        self.chunk_ids: list[str] = []
        self.levels: list[int] = []
        self.entry_point: int | None = None
        self._id_of: dict[str, int] = {}
        self._capacity = 0
        self._vec32 = np.zeros((0, dim), dtype=np.float32)
        self._vec64 = np.zeros((0, dim), dtype=np.float64)
        # Per layer: adjacency matrix (capacity x (max_degree + 1 slack)),
        # degree vector, and the ids of nodes present at that layer.
        self._adj: list[np.ndarray] = []
        self._deg: list[np.ndarray] = []
        self._members: list[list[int]] = []
        self._rng = np.random.default_rng(self.params.seed)

    # -- introspection -------------------------------------------------

    @property
    def count(self) -> int:
        return len(self.chunk_ids)

    @property
    def max_level(self) -> int:
        return len(self._adj) - 1

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._id_of

    def vector(self, node: int) -> np.ndarray:
        return self._vec32[node].copy()

    def neighbors(self, node: int, layer: int) -> list[int]:
        deg = int(self._deg[layer][node])
        return [int(x) for x in self._adj[layer][node, :deg]]

    def nodes_at_layer(self, layer: int) -> list[int]:
        return list(self._members[layer])

    def _layer_degree_cap(self, layer: int) -> int:
        return self.params.m0 if layer == 0 else self.params.m

    # -- construction ---------------------------------------------------

    def _grow(self, needed: int) -> None:
        if needed <= self._capacity:
            return
        new_cap = max(needed, max(16, self._capacity * 2))
        for name, dtype in (("_vec32", np.float32), ("_vec64", np.float64)):
            old = getattr(self, name)
            buf = np.zeros((new_cap, self.dim), dtype=dtype)
            buf[: old.shape[0]] = old
            setattr(self, name, buf)
        for lc in range(len(self._adj)):
            self._adj[lc] = self._grow_adj(self._adj[lc], new_cap, lc)
            deg = np.zeros(new_cap, dtype=np.int32)
            deg[: self._deg[lc].shape[0]] = self._deg[lc]
            self._deg[lc] = deg
        self._capacity = new_cap

    def _grow_adj(self, old: np.ndarray, cap: int, layer: int) -> np.ndarray:
        buf = np.zeros((cap, self._layer_degree_cap(layer) + 1), dtype=np.int32)
        buf[: old.shape[0]] = old
        return buf

    def _new_layer(self) -> None:
        layer = len(self._adj)
        self._adj.append(
            np.zeros((self._capacity, self._layer_degree_cap(layer) + 1), dtype=np.int32)
        )
        self._deg.append(np.zeros(self._capacity, dtype=np.int32))
        self._members.append([])

    def _draw_level(self) -> int:
        u = 1.0 - self._rng.random()  # (0, 1]
        return min(int(-math.log(u) * self.params.ml), _MAX_LEVEL)

    def insert(self, chunk_id: str, v: np.ndarray) -> None:
        """Add one vector; neighbor edges stay symmetric and degree-bounded."""
        if chunk_id in self._id_of:
            raise DuplicateId(f"chunk id already indexed: {chunk_id}")
        v64 = _as_f64(v, dim=self.dim)
        level = self._draw_level()

        node = self.count
        self._grow(node + 1)
        self._vec32[node] = v64.astype(np.float32)
        self._vec64[node] = self._vec32[node].astype(np.float64)
        q64 = self._vec64[node]
        self.chunk_ids.append(chunk_id)
        self.levels.append(level)
        self._id_of[chunk_id] = node

        if self.entry_point is None:
            for lc in range(level + 1):
                self._new_layer()
                self._members[lc].append(node)
            self.entry_point = node
            return

        top = self.max_level
        cur = self.entry_point
        dist = -float(self._vec64[cur] @ q64)
        for lc in range(top, level, -1):
            cur, dist = _k.greedy_descend(self._vec64, self._adj[lc], self._deg[lc], q64, cur, dist)

        ep_ids = np.array([cur], dtype=np.int64)
        ep_dists = np.array([dist], dtype=np.float64)
        for lc in range(min(level, top), -1, -1):
            sims, ids = _k.search_layer(
                self._vec64,
                self._adj[lc],
                self._deg[lc],
                node,  # nodes 0..node-1 are searchable
                q64,
                ep_ids,
                ep_dists,
                self.params.ef_construction,
            )
            order = np.lexsort((ids, -sims))
            cand_ids = ids[order]
            cand_dists = -sims[order]
            _k.connect_node(
                self._vec64,
                self._adj[lc],
                self._deg[lc],
                node,
                cand_ids,
                cand_dists,
                self._layer_degree_cap(lc),
            )
            self._members[lc].append(node)
            ep_ids = cand_ids
            ep_dists = cand_dists

        if level > top:
            for lc in range(top + 1, level + 1):
                self._new_layer()
                self._members[lc].append(node)
            self.entry_point = node

    # -- search ----------------------------------------------------------

    def search_knn(self, q: np.ndarray, k: int, ef: int | None = None) -> list[SearchHit]:
        """Approximate top-k by cosine similarity.

        The candidate pool holds ``max(ef or ef_search, k)`` entries; a
        larger ``ef`` trades speed for recall. Hits are sorted by descending
        score, then ascending chunk id.
        """
        if k < 1:
            raise InvalidParams("k must be positive")
        if self.entry_point is None:
            return []
        q64 = _as_f64(q, dim=self.dim)
        pool_size = max(ef if ef is not None else self.params.ef_search, k)
        cur = self.entry_point
        dist = -float(self._vec64[cur] @ q64)
        for lc in range(self.max_level, 0, -1):
            cur, dist = _k.greedy_descend(self._vec64, self._adj[lc], self._deg[lc], q64, cur, dist)
        sims, ids = _k.search_layer(
            self._vec64,
            self._adj[0],
            self._deg[0],
            self.count,
            q64,
            np.array([cur], dtype=np.int64),
            np.array([dist], dtype=np.float64),
            pool_size,
        )
        hits = sorted(
            (
                SearchHit(self.chunk_ids[n], float(np.clip(s, -1.0, 1.0)))
                for s, n in zip(sims.tolist(), ids.tolist())
            ),
            key=lambda h: (-h.score, h.chunk_id),
        )
        return hits[:k]

    def items(self) -> list[tuple[str, np.ndarray]]:
        """(chunk_id, vector) pairs in insertion order; feeds the brute-force oracle."""
        return [(cid, self._vec32[i].copy()) for i, cid in enumerate(self.chunk_ids)]


def warm_kernels() -> None:
    """Trigger JIT compilation of the graph kernels on a throwaway index."""
    rng = np.random.default_rng(0)
    data = rng.normal(size=(8, 8))
    data /= np.linalg.norm(data, axis=1, keepdims=True)
    ix = HnswIndex(8, HnswParams(m=4, ef_construction=8, ef_search=4, seed=0))
    for i, row in enumerate(data):
        ix.insert(f"warm{i}", row)
    ix.search_knn(data[0], 2)


# -- persistence ----------------------------------------------------------


def save(index: HnswIndex, dir_path: str | Path, chunk_records: dict[str, dict] | None = None) -> None:
    """Write the index to `dir_path` (meta JSON, vectors, graph, chunk table).

    ``chunk_records`` optionally maps chunk_id to its chunk fields (doc_id,
    offsets, text); ids without a record persist as id-only rows.
    """
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    n = index.count

    meta = {
        "format_version": FORMAT_VERSION,
        "dim": index.dim,
        "count": n,
        "params": asdict(index.params),
        "entry_point": index.entry_point,
    }
    (dir_path / META_FILE).write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    with open(dir_path / VECTORS_FILE, "wb") as fh:
        fh.write(VECTORS_MAGIC)
        fh.write(index._vec32[:n].astype("<f4").tobytes())

    with open(dir_path / GRAPH_FILE, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        for node in range(n):
            level = index.levels[node]
            fh.write(struct.pack("<B", level))
            for lc in range(level + 1):
                neigh = index.neighbors(node, lc)
                fh.write(struct.pack("<H", len(neigh)))
                fh.write(struct.pack(f"<{len(neigh)}I", *neigh) if neigh else b"")

    with open(dir_path / CHUNKS_FILE, "w", encoding="utf-8") as fh:
        for cid in index.chunk_ids:
            record = {"chunk_id": cid}
            if chunk_records and cid in chunk_records:
                record.update(chunk_records[cid])
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def _read_exact(fh, size: int, what: str) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise FormatError(f"truncated {what}")
    return data


def load(dir_path: str | Path) -> HnswIndex:
    """Reload a saved index; rejects wrong versions and malformed files."""
    dir_path = Path(dir_path)
    try:
        meta = json.loads((dir_path / META_FILE).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"missing {META_FILE} in {dir_path}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"unparseable {META_FILE}: {exc}")

    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format_version {version}, expected {FORMAT_VERSION}")
    try:
        dim = int(meta["dim"])
        count = int(meta["count"])
        params = HnswParams(**meta["params"])
        entry_point = meta["entry_point"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed {META_FILE}: {exc}")

    index = HnswIndex(dim, params)

    with open(dir_path / VECTORS_FILE, "rb") as fh:
        if _read_exact(fh, len(VECTORS_MAGIC), "vectors header") != VECTORS_MAGIC:
            raise FormatError("bad magic in vectors file")
        payload = fh.read()
    expected = count * dim * 4
    if len(payload) != expected:
        raise FormatError(f"vectors payload is {len(payload)} bytes, expected {expected}")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim)

    levels: list[int] = []
    adjacency: list[list[list[int]]] = []  # per node, per layer
    with open(dir_path / GRAPH_FILE, "rb") as fh:
        if _read_exact(fh, len(GRAPH_MAGIC), "graph header") != GRAPH_MAGIC:
            raise FormatError("bad magic in graph file")
        for node in range(count):
            (level,) = struct.unpack("<B", _read_exact(fh, 1, "graph node level"))
            per_layer = []
            for _ in range(level + 1):
                (n_neigh,) = struct.unpack("<H", _read_exact(fh, 2, "graph neighbor count"))
                raw = _read_exact(fh, 4 * n_neigh, "graph neighbor ids")
                ids = list(struct.unpack(f"<{n_neigh}I", raw)) if n_neigh else []
                if any(i >= count for i in ids):
                    raise FormatError(f"neighbor id out of range at node {node}")
                per_layer.append(ids)
            levels.append(level)
            adjacency.append(per_layer)
        if fh.read(1):
            raise FormatError("trailing bytes in graph file")

    chunk_ids: list[str] = []
    with open(dir_path / CHUNKS_FILE, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                chunk_ids.append(json.loads(line)["chunk_id"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise FormatError(f"malformed chunk record: {exc}")
    if len(chunk_ids) != count:
        raise FormatError(f"{len(chunk_ids)} chunk records for {count} nodes")
    if count and (entry_point is None or not 0 <= entry_point < count):
        raise FormatError(f"entry_point {entry_point} out of range")

    index._grow(max(count, 1))
    if count:
        index._vec32[:count] = vectors
        index._vec64[:count] = vectors.astype(np.float64)
    index.chunk_ids = chunk_ids
    index.levels = levels
    index._id_of = {cid: i for i, cid in enumerate(chunk_ids)}
    if len(index._id_of) != count:
        raise FormatError("duplicate chunk ids in chunk table")
    index.entry_point = entry_point
    n_layers = (max(levels) + 1) if levels else 0
    for _ in range(n_layers):
        index._new_layer()
    for node in range(count):
        for lc, ids in enumerate(adjacency[node]):
            cap = index._layer_degree_cap(lc)
            if len(ids) > cap:
                raise FormatError(f"node {node} exceeds degree bound at layer {lc}")
            index._adj[lc][node, : len(ids)] = ids
            index._deg[lc][node] = len(ids)
            index._members[lc].append(node)
    return index


def load_chunk_records(dir_path: str | Path) -> dict[str, dict]:
    """Read the chunk table back as a chunk_id -> fields mapping."""
    records: dict[str, dict] = {}
    with open(Path(dir_path) / CHUNKS_FILE, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                records[record["chunk_id"]] = record
    return records
