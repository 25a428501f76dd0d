"""Reciprocal rank fusion (RRF) and video-weighted RRF (WRRF).

RRF scores a document by ``sum(1 / (rank + k))`` over the lists it appears
in. WRRF combines exactly two modalities with a per-video text weight::

    score(d) = alpha_d / (r_text(d) + k) + (1 - alpha_d) / (r_vision(d) + k)

A document missing from one list contributes nothing for that term. Only
ranks are consumed; input scores are ignored.
"""

from __future__ import annotations

from itertools import chain, repeat
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_choice, check_non_negative, check_positive_int, check_same_qid
from .exceptions import DataError
from .model import FUSION_METHODS, RankedList, WeightTable, top_order

__all__ = ["rrf_fuse", "wrrf_fuse", "RankFusion"]


def _pool_ranks(lists: Sequence[RankedList], depth: Optional[int]):
    """Candidate pool (first-seen order) and a rank array per list (0 = absent)."""
    pool = list(lists[0].doc_ids[:depth])
    position = dict(zip(pool, range(len(pool))))
    placed = [np.arange(len(pool))]
    for ranked in lists[1:]:
        ids = ranked.doc_ids[:depth]
        where = np.fromiter(map(position.get, ids, repeat(-1)), dtype=np.int64, count=len(ids))
        new = np.flatnonzero(where < 0)
        if new.size:
            fresh = range(len(pool), len(pool) + new.size)
            new_ids = [ids[i] for i in new.tolist()]
            position.update(zip(new_ids, fresh))
            pool.extend(new_ids)
            where[new] = np.arange(fresh.start, fresh.stop)
        placed.append(where)
    ranks = []
    for where in placed:
        r = np.zeros(len(pool), dtype=np.float64)
        r[where] = np.arange(1, len(where) + 1)
        ranks.append(r)
    return pool, ranks


def _reciprocal(ranks: np.ndarray, k: float, weight=1.0) -> np.ndarray:
    out = np.zeros_like(ranks)
    present = ranks > 0
    w = weight[present] if isinstance(weight, np.ndarray) else weight
    out[present] = w / (ranks[present] + k)
    return out


def _finish(pool: list, values: np.ndarray, qid: str, output_size: Optional[int], run_tag: str) -> RankedList:
    positive = values > 0
    if not positive.all():
        keep = np.flatnonzero(positive)
        pool = [pool[i] for i in keep.tolist()]
        values = values[keep]
    if not pool:
        return RankedList._trusted(qid, (), (), run_tag)
    order = top_order(values, pool, output_size)
    return RankedList._trusted(qid, tuple(pool[i] for i in order), tuple(values[order].tolist()), run_tag)


def rrf_fuse(
    lists: Sequence[RankedList],
    k: float = 60.0,
    output_size: Optional[int] = 1000,
    depth: Optional[int] = None,
    run_tag: str = "rrf",
) -> RankedList:
    """Fuse two or more lists for one query by reciprocal rank.

    ``depth`` limits how many entries of each input are consumed (all when
    ``None``); ``output_size=None`` keeps the whole candidate pool.
    """
    if len(lists) < 2:
        raise DataError(f"RRF needs at least two lists, got {len(lists)}")
    k = check_non_negative(k, "k")
    qid = check_same_qid(lists)
    if depth is not None:
        depth = check_positive_int(depth, "depth")
    if output_size is not None:
        output_size = check_positive_int(output_size, "output_size")
    pool, ranks = _pool_ranks(lists, depth)
    values = np.zeros(len(pool), dtype=np.float64)
    for r in ranks:
        values += _reciprocal(r, k)
    return _finish(pool, values, qid, output_size, run_tag)


def wrrf_fuse(
    text: RankedList,
    vision: RankedList,
    weights: WeightTable,
    k: float = 0.0,
    output_size: Optional[int] = 1000,
    depth: Optional[int] = None,
    run_tag: str = "wrrf",
) -> RankedList:
    """Fuse a text and a vision list with per-video weights.

    ``weights.alpha(d)`` multiplies the text term and ``1 - alpha`` the
    vision term; videos absent from the table use ``weights.default_alpha``.
    """
    k = check_non_negative(k, "k")
    qid = check_same_qid([text, vision])
    if depth is not None:
        depth = check_positive_int(depth, "depth")
    if output_size is not None:
        output_size = check_positive_int(output_size, "output_size")
    pool, (r_text, r_vision) = _pool_ranks([text, vision], depth)
    alpha = weights.alpha_array(pool)
    values = _reciprocal(r_text, k, alpha) + _reciprocal(r_vision, k, 1.0 - alpha)
    return _finish(pool, values, qid, output_size, run_tag)


class RankFusion(BaseEstimator):
    """Late fusion of per-query text and vision runs.

    Parameters
    ----------
    method : {"rrf", "wrrf"}
    k : float
        Rank smoothing constant; 0 emphasises top ranks of either modality.
    depth : int or None
        Entries consumed from each input list.
    output_size : int or None
        Entries kept in each fused list.
    default_alpha : float
        Text weight for videos missing from the fitted weight table.
    """

    def __init__(self, method="wrrf", k=0.0, depth=1000, output_size=1000, default_alpha=0.5, run_tag=None):
        self.method = method
        self.k = k
        self.depth = depth
        self.output_size = output_size
        self.default_alpha = default_alpha
        self.run_tag = run_tag

    def fit(self, weights: Optional[WeightTable] = None, y=None):
        self.method_ = check_choice(self.method, "method", FUSION_METHODS)
        check_non_negative(self.k, "k")
        if weights is None:
            weights = WeightTable.constant(self.default_alpha)
        self.weights_ = weights
        return self

    def _ensure_fitted(self):
        if not hasattr(self, "weights_"):
            self.fit()

    def fuse(self, text: RankedList, vision: RankedList) -> RankedList:
        self._ensure_fitted()
        tag = self.run_tag or self.method_
        if self.method_ == "rrf":
            return rrf_fuse([text, vision], self.k, self.output_size, self.depth, tag)
        return wrrf_fuse(text, vision, self.weights_, self.k, self.output_size, self.depth, tag)

    def predict(self, text_runs: Sequence[RankedList], vision_runs: Sequence[RankedList]) -> list[RankedList]:
        """Fuse runs query by query; a query missing on one side fuses with an empty list."""
        text_by_qid = {r.qid: r for r in text_runs}
        vision_by_qid = {r.qid: r for r in vision_runs}
        qids = list(text_by_qid) + [q for q in vision_by_qid if q not in text_by_qid]
        empty = lambda q: RankedList._trusted(q, (), ())  # noqa: E731
        return [
            self.fuse(text_by_qid.get(q) or empty(q), vision_by_qid.get(q) or empty(q)) for q in qids
        ]
