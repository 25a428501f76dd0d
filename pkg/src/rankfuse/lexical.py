"""BM25 retrieval over extracted OCR / ASR text.

The ``joint`` field indexes OCR and ASR text of a video as one document,
with any supplied machine translations appended.
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_non_negative, check_positive_int
from .exceptions import DataError
from .model import QueryRecord, RankedList, VideoDocument

__all__ = [
    "FIELD_SPECS",
    "tokenize",
    "field_text",
    "LexicalIndex",
    "build_index",
    "bm25_search",
    "save_index",
    "load_index",
    "BM25Retriever",
]

FIELD_SPECS = ("ocr", "asr", "joint")
INDEX_FORMAT = "rankfuse.lexical"
INDEX_VERSION = 1

_CJK_RANGES = (
    (0x3040, 0x309F),  # hiragana
    (0x30A0, 0x30FF),  # katakana
    (0x31F0, 0x31FF),  # katakana phonetic extensions
    (0x3400, 0x4DBF),  # CJK extension A
    (0x4E00, 0x9FFF),  # CJK unified ideographs
    (0xF900, 0xFAFF),  # CJK compatibility ideographs
    (0xFF66, 0xFF9F),  # halfwidth katakana
    (0x20000, 0x2FA1F),  # CJK extensions B-F and compatibility supplement
)

_SEP, _WORD, _CJK = 0, 1, 2


@lru_cache(maxsize=65536)
def _char_info(ch: str):
    """Return ``(class, folded)`` for one character."""
    if ch.isspace() or unicodedata.category(ch).startswith("P"):
        return _SEP, ""
    cp = ord(ch)
    kind = _CJK if any(lo <= cp <= hi for lo, hi in _CJK_RANGES) else _WORD
    folded = ch.casefold()
    # Simple (1:1) folding only; multi-character full foldings fall back to lower().
    if len(folded) != 1:
        folded = ch.lower() if len(ch.lower()) == 1 else ch
    return kind, folded


def _flush_cjk(run: list, out: list) -> None:
    if len(run) == 1:
        out.append(run[0])
    else:
        out.extend(a + b for a, b in zip(run, run[1:]))


def tokenize(text: str) -> list[str]:
    """Split on whitespace and punctuation, case-fold, bigram CJK spans.

    No stemming and no stopwords. A run of CJK characters becomes its
    overlapping character bigrams (a lone CJK character is kept as is).

    >>> tokenize("Breaking News!")
    ['breaking', 'news']
    >>> tokenize("新闻报道")
    ['新闻', '闻报', '报道']
    """
    out: list[str] = []
    word: list[str] = []
    cjk: list[str] = []
    for ch in text:
        kind, folded = _char_info(ch)
        if kind != _WORD and word:
            out.append("".join(word))
            word = []
        if kind != _CJK and cjk:
            _flush_cjk(cjk, out)
            cjk = []
        if kind == _WORD:
            word.append(folded)
        elif kind == _CJK:
            cjk.append(folded)
    if word:
        out.append("".join(word))
    if cjk:
        _flush_cjk(cjk, out)
    return out


def field_text(doc: VideoDocument, field_spec: str) -> str:
    """Text of ``doc`` for ``field_spec``, translations appended when present."""
    if field_spec == "ocr":
        parts = [doc.ocr_text, doc.mt_ocr]
    elif field_spec == "asr":
        parts = [doc.asr_text, doc.mt_asr]
    elif field_spec == "joint":
        parts = [doc.ocr_text, doc.asr_text, doc.mt_ocr, doc.mt_asr]
    else:
        raise DataError(f"unknown field_spec {field_spec!r}; expected one of {FIELD_SPECS}")
    return " ".join(p for p in parts if p is not None)


@dataclass(frozen=True, eq=False)
class LexicalIndex:
    """Inverted index with postings stored in CSR form.

    Postings of term id ``t`` are ``post_docs[offsets[t]:offsets[t + 1]]``
    with matching term frequencies in ``post_tfs``.
    """

    field_spec: str
    k1: float
    b: float
    doc_ids: tuple
    doc_lengths: np.ndarray
    vocabulary: dict
    offsets: np.ndarray
    post_docs: np.ndarray
    post_tfs: np.ndarray

    def __post_init__(self):
        order = np.argsort(np.array(self.doc_ids, dtype=object), kind="stable")
        id_rank = np.empty(len(self.doc_ids), dtype=np.int64)
        id_rank[order] = np.arange(len(self.doc_ids))
        object.__setattr__(self, "_id_rank", id_rank)
        lengths = self.doc_lengths.astype(np.float64)
        avgdl = float(lengths.mean()) if len(lengths) else 0.0
        object.__setattr__(self, "avgdl", avgdl)
        if avgdl > 0:
            norm = self.k1 * (1.0 - self.b + self.b * lengths / avgdl)
        else:
            norm = np.full(len(lengths), self.k1 * (1.0 - self.b))
        object.__setattr__(self, "_norm", norm)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def document_frequency(self, term: str) -> int:
        tid = self.vocabulary.get(term)
        if tid is None:
            return 0
        return int(self.offsets[tid + 1] - self.offsets[tid])

    def postings(self, term: str) -> list[tuple[int, int]]:
        tid = self.vocabulary.get(term)
        if tid is None:
            return []
        lo, hi = self.offsets[tid], self.offsets[tid + 1]
        return list(zip(self.post_docs[lo:hi].tolist(), self.post_tfs[lo:hi].tolist()))

    def idf(self, term: str) -> float:
        df = self.document_frequency(term)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def build_index(
    docs: Sequence[VideoDocument],
    field_spec: str = "joint",
    k1: float = 0.9,
    b: float = 0.4,
    progress: Optional[Callable[[int], None]] = None,
) -> LexicalIndex:
    """Index ``docs``; ``progress(n)`` is called after every 1000 documents."""
    field_spec = check_choice(field_spec, "field_spec", FIELD_SPECS)
    k1 = check_non_negative(k1, "k1")
    b = check_non_negative(b, "b")
    if b > 1:
        raise DataError(f"b must lie in [0, 1], got {b!r}")
    if not docs:
        raise DataError("cannot index an empty collection")
    doc_ids = []
    seen = set()
    lengths = []
    term_postings: dict[str, list] = {}
    for i, doc in enumerate(docs):
        if doc.doc_id in seen:
            raise DataError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        doc_ids.append(doc.doc_id)
        tokens = tokenize(field_text(doc, field_spec))
        lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            term_postings.setdefault(tok, []).append((i, tf))
        if progress is not None and (i + 1) % 1000 == 0:
            progress(i + 1)
    terms = sorted(term_postings)
    vocabulary = {t: i for i, t in enumerate(terms)}
    sizes = np.array([len(term_postings[t]) for t in terms], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    flat = [p for t in terms for p in term_postings[t]]
    post = np.array(flat, dtype=np.int64).reshape(-1, 2)
    return LexicalIndex(
        field_spec=field_spec,
        k1=k1,
        b=b,
        doc_ids=tuple(doc_ids),
        doc_lengths=np.array(lengths, dtype=np.int64),
        vocabulary=vocabulary,
        offsets=offsets,
        post_docs=post[:, 0].astype(np.int32),
        post_tfs=post[:, 1].astype(np.int32),
    )


def _as_query(query, qid=None) -> QueryRecord:
    if isinstance(query, QueryRecord):
        return query
    return QueryRecord(qid or "q", query)


def bm25_search(
    index: LexicalIndex, query: Union[QueryRecord, str], top_n: int = 1000, run_tag: str = "bm25"
) -> RankedList:
    """Rank documents by Okapi BM25 with ``idf = ln(1 + (N - df + .5)/(df + .5))``.

    Repeated query terms count once per occurrence. Only documents with a
    positive score are returned.
    """
    query = _as_query(query)
    top_n = check_positive_int(top_n, "top_n")
    scores = np.zeros(index.n_docs, dtype=np.float64)
    k1 = index.k1
    for term in tokenize(query.text):
        tid = index.vocabulary.get(term)
        if tid is None:
            continue
        lo, hi = index.offsets[tid], index.offsets[tid + 1]
        docs = index.post_docs[lo:hi]
        tf = index.post_tfs[lo:hi].astype(np.float64)
        idf = math.log(1.0 + (index.n_docs - (hi - lo) + 0.5) / ((hi - lo) + 0.5))
        scores[docs] += idf * (tf * (k1 + 1.0)) / (tf + index._norm[docs])
    hits = np.flatnonzero(scores > 0)
    if not hits.size:
        return RankedList._trusted(query.qid, (), (), run_tag)
    order = np.lexsort((index._id_rank[hits], -scores[hits]))[:top_n]
    chosen = hits[order]
    return RankedList._trusted(
        query.qid,
        tuple(index.doc_ids[i] for i in chosen.tolist()),
        tuple(scores[chosen].tolist()),
        run_tag,
    )


def save_index(index: LexicalIndex, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    terms = [None] * len(index.vocabulary)
    for term, tid in index.vocabulary.items():
        terms[tid] = term
    meta = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "field_spec": index.field_spec,
        "k1": index.k1,
        "b": index.b,
        "doc_ids": list(index.doc_ids),
        "terms": terms,
    }
    with open(path / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, ensure_ascii=False)
    np.savez(
        path / "postings.npz",
        doc_lengths=index.doc_lengths,
        offsets=index.offsets,
        post_docs=index.post_docs,
        post_tfs=index.post_tfs,
    )


def load_index(path) -> LexicalIndex:
    path = Path(path)
    try:
        with open(path / "meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DataError("not a lexical index directory (meta.json missing)", str(path)) from None
    if meta.get("format") != INDEX_FORMAT:
        raise DataError(f"unexpected index format {meta.get('format')!r}", str(path))
    if meta.get("version") != INDEX_VERSION:
        raise DataError(f"unsupported index version {meta.get('version')!r}", str(path))
    arrays = np.load(path / "postings.npz")
    return LexicalIndex(
        field_spec=meta["field_spec"],
        k1=float(meta["k1"]),
        b=float(meta["b"]),
        doc_ids=tuple(meta["doc_ids"]),
        doc_lengths=arrays["doc_lengths"],
        vocabulary={t: i for i, t in enumerate(meta["terms"])},
        offsets=arrays["offsets"],
        post_docs=arrays["post_docs"],
        post_tfs=arrays["post_tfs"],
    )


class BM25Retriever(BaseEstimator):
    """Estimator wrapper: ``fit`` indexes documents, ``predict`` returns runs.

    Parameters
    ----------
    field : {"ocr", "asr", "joint"}
        Which extracted text to index.
    k1, b : float
        BM25 term-frequency saturation and length normalization.
    top_n : int
        Maximum entries per returned list.
    run_tag : str
        Tag written in the last column of run files.
    """

    def __init__(self, field="joint", k1=0.9, b=0.4, top_n=1000, run_tag="bm25"):
        self.field = field
        self.k1 = k1
        self.b = b
        self.top_n = top_n
        self.run_tag = run_tag

    def fit(self, documents: Iterable[VideoDocument], y=None, progress=None):
        self.index_ = build_index(list(documents), self.field, self.k1, self.b, progress)
        self.n_documents_ = self.index_.n_docs
        return self

    def search(self, query, qid: Optional[str] = None) -> RankedList:
        check_is_fitted(self, "index_")
        return bm25_search(self.index_, _as_query(query, qid), self.top_n, self.run_tag)

    def predict(self, queries: Iterable[QueryRecord]) -> list[RankedList]:
        return [self.search(q) for q in queries]

    def save(self, path) -> None:
        check_is_fitted(self, "index_")
        save_index(self.index_, path)

    @classmethod
    def load(cls, path, top_n=1000, run_tag="bm25") -> "BM25Retriever":
        index = load_index(path)
        est = cls(field=index.field_spec, k1=index.k1, b=index.b, top_n=top_n, run_tag=run_tag)
        est.index_ = index
        est.n_documents_ = index.n_docs
        return est
