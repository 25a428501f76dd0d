"""Core value types shared across the package.

Everything here is immutable after construction. Ranks are 1-based so that
``1 / (rank + k)`` stays finite at ``k = 0``.
"""

from __future__ import annotations

import math
from itertools import repeat
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from .exceptions import DataError

__all__ = [
    "Entry",
    "QueryRecord",
    "RankedList",
    "VideoDocument",
    "FrameEmbeddings",
    "WeightTable",
    "FusionParams",
    "Qrels",
    "EvalReport",
    "canonicalize",
]

NORM_TOLERANCE = 1e-3


class Entry(NamedTuple):
    doc_id: str
    rank: int
    score: float


@dataclass(frozen=True)
class QueryRecord:
    qid: str
    text: str

    def __post_init__(self):
        if not self.qid:
            raise DataError("query id must be non-empty")
        if not self.text:
            raise DataError(f"query {self.qid!r} has empty text")


@dataclass(frozen=True)
class RankedList:
    """One query's ranked result.

    Rank ``i`` is the entry at position ``i - 1``; ranks are therefore always
    exactly ``1..n``. Scores must be finite and non-increasing with rank.
    Use :func:`canonicalize` to build one from unordered ``(doc_id, score)``
    pairs.
    """

    qid: str
    doc_ids: tuple[str, ...]
    scores: tuple[float, ...]
    run_tag: str = ""
    _rank_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if len(self.doc_ids) != len(self.scores):
            raise DataError(
                f"query {self.qid!r}: {len(self.doc_ids)} doc ids but {len(self.scores)} scores"
            )
        if len(set(self.doc_ids)) != len(self.doc_ids):
            seen = set()
            dup = next(d for d in self.doc_ids if d in seen or seen.add(d))
            raise DataError(f"query {self.qid!r}: duplicate doc_id {dup!r}")
        prev = math.inf
        for doc_id, score in zip(self.doc_ids, self.scores):
            if not math.isfinite(score):
                raise DataError(f"query {self.qid!r}: non-finite score for doc_id {doc_id!r}")
            if score > prev:
                raise DataError(
                    f"query {self.qid!r}: score of {doc_id!r} increases with rank; canonicalize first"
                )
            prev = score

    @classmethod
    def _trusted(cls, qid, doc_ids, scores, run_tag=""):
        # Skips validation; callers guarantee canonical order.
        obj = object.__new__(cls)
        object.__setattr__(obj, "qid", qid)
        object.__setattr__(obj, "doc_ids", tuple(doc_ids))
        object.__setattr__(obj, "scores", tuple(scores))
        object.__setattr__(obj, "run_tag", run_tag)
        object.__setattr__(obj, "_rank_index", None)
        return obj

    def __len__(self) -> int:
        return len(self.doc_ids)

    def __iter__(self) -> Iterator[Entry]:
        for i, (doc_id, score) in enumerate(zip(self.doc_ids, self.scores), start=1):
            yield Entry(doc_id, i, score)

    @property
    def entries(self) -> list[Entry]:
        return list(self)

    @property
    def ranks(self) -> Mapping[str, int]:
        """Mapping ``doc_id -> rank`` (built lazily, then cached)."""
        if self._rank_index is None:
            index = {d: i for i, d in enumerate(self.doc_ids, start=1)}
            object.__setattr__(self, "_rank_index", index)
        return self._rank_index

    def rank_of(self, doc_id: str) -> Optional[int]:
        return self.ranks.get(doc_id)

    def head(self, n: int) -> "RankedList":
        if n >= len(self):
            return self
        return RankedList._trusted(self.qid, self.doc_ids[:n], self.scores[:n], self.run_tag)

    def with_tag(self, run_tag: str) -> "RankedList":
        return RankedList._trusted(self.qid, self.doc_ids, self.scores, run_tag)


def _sort_key(pair):
    return (-pair[1], pair[0])


def canonicalize(
    ranked: Union[RankedList, Iterable[Sequence]],
    *,
    qid: Optional[str] = None,
    run_tag: Optional[str] = None,
) -> RankedList:
    """Sort by score descending, break ties by ascending doc_id, rerank 1..n.

    ``ranked`` is either a :class:`RankedList` or an iterable of
    ``(doc_id, score)`` / ``(doc_id, rank, score)`` tuples whose ranks are
    provisional and ignored. Python string comparison is by code point, which
    agrees with UTF-8 byte order.
    """
    if isinstance(ranked, RankedList):
        pairs = list(zip(ranked.doc_ids, ranked.scores))
        qid = ranked.qid if qid is None else qid
        run_tag = ranked.run_tag if run_tag is None else run_tag
    else:
        if qid is None:
            raise TypeError("qid is required when canonicalizing raw entries")
        pairs = []
        for item in ranked:
            doc_id, score = item[0], item[-1]
            pairs.append((doc_id, float(score)))
    for doc_id, score in pairs:
        if not math.isfinite(score):
            raise DataError(f"query {qid!r}: non-finite score {score!r} for doc_id {doc_id!r}")
    pairs.sort(key=_sort_key)
    doc_ids = tuple(p[0] for p in pairs)
    if len(set(doc_ids)) != len(doc_ids):
        dup = next(a for a, b in zip(doc_ids, doc_ids[1:]) if a == b)
        raise DataError(f"query {qid!r}: duplicate doc_id {dup!r}")
    return RankedList._trusted(qid, doc_ids, tuple(p[1] for p in pairs), run_tag or "")


@dataclass(frozen=True)
class VideoDocument:
    doc_id: str
    ocr_text: str = ""
    asr_text: str = ""
    mt_ocr: Optional[str] = None
    mt_asr: Optional[str] = None

    def __post_init__(self):
        if not self.doc_id:
            raise DataError("doc_id must be non-empty")


@dataclass(frozen=True, eq=False)
class FrameEmbeddings:
    """Unit-normalized frame vectors of one video, shape ``(n_frames, dim)``."""

    doc_id: str
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise DataError(f"{self.doc_id!r}: expected a non-empty 2-d frame matrix, got {vectors.shape}")
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
        if bad.size:
            raise DataError(
                f"{self.doc_id!r}: frame {int(bad[0])} has L2 norm {norms[bad[0]]:.6f}, expected 1.0"
            )
        if vectors.flags.writeable:
            vectors = vectors.copy() if vectors is self.vectors else vectors
            vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)

    @property
    def n_frames(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_raw(cls, doc_id: str, vectors) -> "FrameEmbeddings":
        """L2-normalize each row, rejecting zero rows."""
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim == 1:
            vectors = vectors[None, :]
        norms = np.linalg.norm(vectors, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise DataError(f"{doc_id!r}: frame {int(zero[0])} has zero norm")
        return cls(doc_id, (vectors / norms[:, None]).astype(np.float32))


def _check_alpha(value, what):
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise DataError(f"{what} must lie in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class WeightTable:
    """Per-video text weight ``alpha`` in [0, 1]; ``1 - alpha`` goes to vision."""

    alphas: Mapping[str, float]
    default_alpha: float = 0.5
    probe_text: Optional[str] = None

    def __post_init__(self):
        checked = {d: _check_alpha(a, f"alpha for {d!r}") for d, a in dict(self.alphas).items()}
        object.__setattr__(self, "_lookup", checked)
        object.__setattr__(self, "alphas", MappingProxyType(checked))
        object.__setattr__(self, "default_alpha", _check_alpha(self.default_alpha, "default_alpha"))

    def alpha(self, doc_id: str) -> float:
        return self._lookup.get(doc_id, self.default_alpha)

    def alpha_array(self, doc_ids: Sequence[str]) -> np.ndarray:
        return np.fromiter(
            map(self._lookup.get, doc_ids, repeat(self.default_alpha)), dtype=np.float64, count=len(doc_ids)
        )

    def __len__(self) -> int:
        return len(self.alphas)

    def with_default(self, default_alpha: float) -> "WeightTable":
        """Same per-video alphas, different fallback (no re-validation)."""
        obj = object.__new__(WeightTable)
        object.__setattr__(obj, "_lookup", self._lookup)
        object.__setattr__(obj, "alphas", self.alphas)
        object.__setattr__(obj, "default_alpha", _check_alpha(default_alpha, "default_alpha"))
        object.__setattr__(obj, "probe_text", self.probe_text)
        return obj

    @classmethod
    def constant(cls, alpha: float) -> "WeightTable":
        return cls({}, default_alpha=alpha)


FUSION_METHODS = ("rrf", "wrrf")


@dataclass(frozen=True)
class FusionParams:
    method: str = "wrrf"
    k: float = 0.0
    depth: int = 1000
    output_size: int = 1000

    def __post_init__(self):
        method = str(self.method).lower()
        if method not in FUSION_METHODS:
            raise DataError(f"unknown fusion method {self.method!r}; expected one of {FUSION_METHODS}")
        object.__setattr__(self, "method", method)
        if not (math.isfinite(self.k) and self.k >= 0):
            raise DataError(f"fusion k must be a finite non-negative number, got {self.k!r}")
        for name in ("depth", "output_size"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DataError(f"{name} must be a positive integer, got {value!r}")


class Qrels:
    """Graded relevance judgments ``(qid, doc_id) -> grade``."""

    def __init__(self, judgments: Iterable[tuple[str, str, int]] = ()):
        table: dict[str, dict[str, int]] = {}
        for qid, doc_id, grade in judgments:
            grade = int(grade)
            if grade < 0:
                raise DataError(f"negative grade {grade} for ({qid!r}, {doc_id!r})")
            per_query = table.setdefault(qid, {})
            if doc_id in per_query:
                raise DataError(f"duplicate judgment for ({qid!r}, {doc_id!r})")
            per_query[doc_id] = grade
        self._table = table

    @classmethod
    def from_dict(cls, mapping: Mapping[str, Mapping[str, int]]) -> "Qrels":
        return cls((q, d, g) for q, docs in mapping.items() for d, g in docs.items())

    def __contains__(self, qid) -> bool:
        return qid in self._table

    def __len__(self) -> int:
        return sum(len(v) for v in self._table.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, Qrels) and self._table == other._table

    def qids(self) -> list[str]:
        return list(self._table)

    def judgments(self, qid: str) -> Mapping[str, int]:
        return MappingProxyType(self._table.get(qid, {}))

    def grade(self, qid: str, doc_id: str) -> int:
        return self._table.get(qid, {}).get(doc_id, 0)

    def relevant(self, qid: str) -> set[str]:
        return {d for d, g in self._table.get(qid, {}).items() if g >= 1}

    def items(self) -> Iterator[tuple[str, str, int]]:
        for qid, docs in self._table.items():
            for doc_id, grade in docs.items():
                yield qid, doc_id, grade


@dataclass(frozen=True)
class EvalReport:
    """Per-query values of one metric plus their mean.

    ``n_skipped_no_relevant`` counts queries excluded because they have no
    judged-relevant documents; ``n_skipped_unjudged`` counts run queries that
    do not appear in the qrels at all.
    """

    metric_name: str
    per_query: Mapping[str, float]
    n_skipped_no_relevant: int = 0
    n_skipped_unjudged: int = 0

    def __post_init__(self):
        values = dict(self.per_query)
        for qid, v in values.items():
            if not (0.0 <= v <= 1.0):
                raise DataError(f"{self.metric_name} for {qid!r} out of [0, 1]: {v!r}")
        object.__setattr__(self, "per_query", MappingProxyType(values))

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return math.fsum(self.per_query.values()) / len(self.per_query)


def top_order(scores: np.ndarray, doc_ids: Sequence[str], n: Optional[int] = None) -> list[int]:
    """Indices of the best ``n`` items by (score desc, doc_id asc).

    ``scores`` is a float array aligned with ``doc_ids``. Only tie groups are
    sorted in Python, which keeps large candidate pools cheap to order.
    """
    m = len(scores)
    if n is not None and n < m:
        neg = -scores
        cutoff = np.partition(neg, n - 1)[n - 1]
        cand = np.flatnonzero(neg <= cutoff)
    else:
        cand = np.arange(m)
    order = cand[np.argsort(-scores[cand], kind="stable")]
    ordered = scores[order]
    ties = np.flatnonzero(ordered[1:] == ordered[:-1])
    order = order.tolist()
    if ties.size:
        # Runs of consecutive tie positions mark equal-score groups.
        breaks = np.flatnonzero(np.diff(ties) != 1)
        starts = np.concatenate([[ties[0]], ties[breaks + 1]])
        ends = np.concatenate([ties[breaks], [ties[-1]]]) + 2
        for lo, hi in zip(starts.tolist(), ends.tolist()):
            order[lo:hi] = sorted(order[lo:hi], key=doc_ids.__getitem__)
    return order if n is None else order[:n]
