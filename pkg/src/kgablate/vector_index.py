"""Exact top-k cosine-similarity index with a small binary file format."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch

INDEX_KINDS = ("textunit", "entity", "community")


class VectorIndex:
    """Flat exact index; no ANN, searches are full scans.

    Entries keep insertion order internally but search output is fully
    determined by (score desc, id asc).
    """

    def __init__(self, dim: int, kind: str):
        if kind not in INDEX_KINDS:
            raise ValueError(f"kind must be one of {INDEX_KINDS}")
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.kind = kind
        self._ids: list[str] = []
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def vector(self, item_id: str) -> np.ndarray:
        return self._rows[self._ids.index(item_id)].copy()

    def add(self, item_id: str, vector: np.ndarray) -> None:
        if item_id in set(self._ids):
            raise ValueError(f"duplicate id {item_id}")
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise DimensionMismatch(
                f"vector has shape {vec.shape}, index dim is {self.dim}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("vector has non-finite components")
        self._ids.append(item_id)
        self._rows.append(vec)
        self._matrix = None

    def _stacked(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.vstack(self._rows)
        return self._matrix


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def search(index: VectorIndex, query: np.ndarray,
           k: int) -> list[tuple[str, float]]:
    """Top-k entries by cosine similarity; ties broken by ascending id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise ValueError("index is empty")
    q = np.asarray(query, dtype=np.float32)
    if q.shape != (index.dim,):
        raise DimensionMismatch(
            f"query has shape {q.shape}, index dim is {index.dim}")
    mat = index._stacked()
    qn = float(np.linalg.norm(q))
    row_norms = np.linalg.norm(mat, axis=1)
    if qn == 0.0:
        sims = np.zeros(len(index), dtype=np.float64)
    else:
        denom = row_norms * qn
        sims = np.where(denom > 0.0, mat.astype(np.float64) @ q / denom, 0.0)
    order = sorted(range(len(index)),
                   key=lambda i: (-sims[i], index._ids[i]))
    return [(index._ids[i], float(sims[i])) for i in order[:k]]


def index_path(out_dir: str | Path, kind: str) -> Path:
    return Path(out_dir) / f"index_{kind}.bin"


def save_index(index: VectorIndex, out_dir: str | Path) -> Path:
    """Binary layout: u32 dim, u32 count, then per record a u32
    byte-length-prefixed UTF-8 id followed by dim little-endian f32s."""
    path = index_path(out_dir, index.kind)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(struct.pack("<II", index.dim, len(index)))
        for item_id, vec in zip(index._ids, index._rows):
            raw = item_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(vec.astype("<f4").tobytes())
    return path


def load_index(kb_dir: str | Path, kind: str) -> VectorIndex:
    path = index_path(kb_dir, kind)
    with path.open("rb") as fh:
        dim, count = struct.unpack("<II", fh.read(8))
        index = VectorIndex(dim=dim, kind=kind)
        for _ in range(count):
            (id_len,) = struct.unpack("<I", fh.read(4))
            item_id = fh.read(id_len).decode("utf-8")
            vec = np.frombuffer(fh.read(4 * dim), dtype="<f4").copy()
            index.add(item_id, vec)
    return index
