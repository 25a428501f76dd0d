"""Exact dense retrieval over frame embeddings with MaxFrame aggregation.

A video's score for a query is the largest inner product between the
(unit-normalized) query vector and any of the video's frame vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_query_vector
from .exceptions import DataError
from .io import load_embedding_matrix, write_embeddings
from .model import FrameEmbeddings, RankedList

__all__ = [
    "DenseIndex",
    "score_frames",
    "max_frame_aggregate",
    "dense_search",
    "video_scores",
    "DenseRetriever",
]

MANIFEST_NAME = "manifest.json"
VECTORS_NAME = "vectors.f32"
_CHUNK_ROWS = 1 << 15


@dataclass(frozen=True, eq=False)
class DenseIndex:
    """All frame vectors in one read-only ``(n_frames, dim)`` float32 matrix.

    Frames of video ``i`` are rows ``offsets[i]:offsets[i + 1]``.
    """

    doc_ids: tuple
    matrix: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 1:
            raise DataError(f"frame matrix must be 2-d with dim >= 1, got {self.matrix.shape}")
        if len(self.offsets) != len(self.doc_ids) + 1 or self.offsets[-1] != self.matrix.shape[0]:
            raise DataError("frame offsets do not cover the frame matrix")
        if np.any(np.diff(self.offsets) < 1):
            raise DataError("every video needs at least one frame")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise DataError("duplicate doc_id in dense index")
        order = np.argsort(np.array(self.doc_ids, dtype=object), kind="stable")
        id_rank = np.empty(len(self.doc_ids), dtype=np.int64)
        id_rank[order] = np.arange(len(self.doc_ids))
        object.__setattr__(self, "_id_rank", id_rank)

    @classmethod
    def from_embeddings(cls, stores: Sequence[FrameEmbeddings]) -> "DenseIndex":
        if not stores:
            raise DataError("cannot index an empty embedding store")
        dim = stores[0].dim
        for s in stores:
            if s.dim != dim:
                raise DataError(f"{s.doc_id!r} has dim {s.dim}, store dim is {dim}")
        matrix = np.ascontiguousarray(np.concatenate([s.vectors for s in stores]), dtype=np.float32)
        matrix.flags.writeable = False
        counts = [s.n_frames for s in stores]
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(tuple(s.doc_id for s in stores), matrix, offsets)

    @classmethod
    def load(cls, manifest_path, vectors_path) -> "DenseIndex":
        manifest, matrix, offsets = load_embedding_matrix(manifest_path, vectors_path)
        return cls(tuple(e["doc_id"] for e in manifest["entries"]), matrix, offsets.astype(np.int64))

    @classmethod
    def load_dir(cls, path) -> "DenseIndex":
        path = Path(path)
        return cls.load(path / MANIFEST_NAME, path / VECTORS_NAME)

    def save_dir(self, path, source_note: str = "") -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        write_embeddings(list(self.embeddings()), path / MANIFEST_NAME, path / VECTORS_NAME, source_note)

    def embeddings(self):
        for i, doc_id in enumerate(self.doc_ids):
            yield FrameEmbeddings(doc_id, self.matrix[self.offsets[i] : self.offsets[i + 1]])

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_videos(self) -> int:
        return len(self.doc_ids)

    @property
    def ownership(self) -> np.ndarray:
        """Video index of every frame row."""
        return np.repeat(np.arange(self.n_videos), np.diff(self.offsets))


def score_frames(index: DenseIndex, query_vec) -> np.ndarray:
    """Inner product of the normalized query with every frame (float32)."""
    q = check_query_vector(query_vec, index.dim).astype(np.float32)
    return index.matrix @ q


def max_frame_aggregate(frame_scores, ownership, n_videos: Optional[int] = None) -> np.ndarray:
    """Per-video maximum of ``frame_scores``; ``ownership[j]`` owns frame ``j``."""
    frame_scores = np.asarray(frame_scores, dtype=np.float64)
    ownership = np.asarray(ownership, dtype=np.int64)
    if frame_scores.shape != ownership.shape:
        raise DataError("frame scores and ownership map differ in length")
    if n_videos is None:
        n_videos = int(ownership.max()) + 1 if ownership.size else 0
    counts = np.bincount(ownership, minlength=n_videos)
    if counts.size > n_videos or np.any(counts == 0):
        raise DataError("every video must own at least one frame")
    if np.all(ownership[1:] >= ownership[:-1]):
        ordered = frame_scores
    else:
        ordered = frame_scores[np.argsort(ownership, kind="stable")]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return np.maximum.reduceat(ordered, starts)


def _exact_max(index: DenseIndex, videos: np.ndarray, q64: np.ndarray) -> np.ndarray:
    """float64 MaxFrame scores for the given videos, computed in row chunks."""
    starts = index.offsets[videos]
    counts = index.offsets[videos + 1] - starts
    cum = np.cumsum(counts)
    out = np.empty(len(videos), dtype=np.float64)
    pos = 0
    while pos < len(videos):
        base = cum[pos - 1] if pos else 0
        end = max(pos + 1, int(np.searchsorted(cum, base + _CHUNK_ROWS, side="right")))
        c = counts[pos:end]
        local = np.concatenate([[0], np.cumsum(c)[:-1]])
        rows = np.repeat(starts[pos:end] - local, c) + np.arange(int(c.sum()))
        frame = index.matrix[rows].astype(np.float64) @ q64
        out[pos:end] = np.maximum.reduceat(frame, local)
        pos = end
    return out


def video_scores(index: DenseIndex, query_vec, top_n: Optional[int] = None):
    """Return ``(video_indices, scores)`` for the best ``top_n`` videos.

    A float32 pass over all frames screens candidates; candidates within the
    float32 error bound of the cutoff are then rescored in float64 so the
    final order does not depend on float32 rounding.
    """
    q64 = check_query_vector(query_vec, index.dim)
    frame32 = index.matrix @ q64.astype(np.float32)
    screened = np.maximum.reduceat(frame32, index.offsets[:-1]).astype(np.float64)
    n = index.n_videos
    if top_n is None or top_n >= n:
        candidates = np.arange(n)
    else:
        margin = 4.0 * index.dim * float(np.finfo(np.float32).eps)
        cutoff = np.partition(screened, n - top_n)[n - top_n]
        candidates = np.flatnonzero(screened >= cutoff - margin)
    exact = _exact_max(index, candidates, q64)
    order = np.lexsort((index._id_rank[candidates], -exact))
    if top_n is not None:
        order = order[:top_n]
    return candidates[order], exact[order]


def dense_search(
    index: DenseIndex, query_vec, top_n: int = 1000, qid: str = "q", run_tag: str = "dense"
) -> RankedList:
    top_n = check_positive_int(top_n, "top_n")
    videos, scores = video_scores(index, query_vec, top_n)
    return RankedList._trusted(
        qid, tuple(index.doc_ids[i] for i in videos.tolist()), tuple(scores.tolist()), run_tag
    )


class DenseRetriever(BaseEstimator):
    """Estimator wrapper around :class:`DenseIndex`.

    ``fit`` takes per-video :class:`FrameEmbeddings`; ``predict`` takes
    query embeddings (one single-frame entry per query, ``doc_id`` = qid).
    """

    def __init__(self, top_n=1000, run_tag="dense"):
        self.top_n = top_n
        self.run_tag = run_tag

    def fit(self, embeddings: Sequence[FrameEmbeddings], y=None):
        self.index_ = DenseIndex.from_embeddings(list(embeddings))
        self.dim_ = self.index_.dim
        return self

    def search(self, query_vec, qid: str = "q") -> RankedList:
        check_is_fitted(self, "index_")
        return dense_search(self.index_, query_vec, self.top_n, qid, self.run_tag)

    def predict(self, queries: Sequence[FrameEmbeddings]) -> list[RankedList]:
        out = []
        for q in queries:
            if q.n_frames != 1:
                raise DataError(f"query {q.doc_id!r} must have exactly one vector, has {q.n_frames}")
            out.append(self.search(q.vectors[0], q.doc_id))
        return out

    def save(self, path, source_note: str = "") -> None:
        check_is_fitted(self, "index_")
        self.index_.save_dir(path, source_note)

    @classmethod
    def load(cls, path, top_n=1000, run_tag="dense") -> "DenseRetriever":
        est = cls(top_n=top_n, run_tag=run_tag)
        est.index_ = DenseIndex.load_dir(path)
        est.dim_ = est.index_.dim
        return est
