"""Per-video fusion weights from a fixed, query-independent probe.

Each video is scored (MaxFrame) against the embedding of a probe query that
describes professional news footage. News-like videos tend to carry useful
OCR/ASR text, so a higher probe score maps to a higher text weight alpha.
Scores are computed once, at indexing time.
"""

from __future__ import annotations

import math
from typing import Mapping, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_unit_interval
from .dense import DenseIndex, video_scores
from .exceptions import DataError
from .model import FrameEmbeddings, WeightTable

__all__ = ["PROBE_QUERY", "calibration_scores", "scores_to_alphas", "ProbeCalibrator"]

PROBE_QUERY = "news anchor live coverage broadcast microphone breaking news"
ALPHA_MODES = ("minmax", "fixed")


def calibration_scores(index: DenseIndex, probe_vec) -> dict[str, float]:
    """MaxFrame score of the probe for every video in ``index``."""
    videos, scores = video_scores(index, probe_vec, None)
    by_position = np.empty(index.n_videos, dtype=np.float64)
    by_position[videos] = scores
    return dict(zip(index.doc_ids, by_position.tolist()))


def scores_to_alphas(
    raw: Mapping[str, float],
    mode: str = "minmax",
    fixed_alpha: float = 0.5,
    default_alpha: float = 0.5,
    probe_text: Union[str, None] = PROBE_QUERY,
) -> WeightTable:
    """Map raw probe scores to text weights.

    ``minmax`` rescales scores linearly onto [0, 1] over the collection
    (all videos get ``default_alpha`` when every score is equal). ``fixed``
    assigns ``fixed_alpha`` to every video.
    """
    mode = check_choice(mode, "mode", ALPHA_MODES)
    if not raw:
        raise DataError("no calibration scores to convert")
    for doc_id, s in raw.items():
        if not math.isfinite(s):
            raise DataError(f"non-finite calibration score for {doc_id!r}")
    if mode == "fixed":
        alpha = check_unit_interval(fixed_alpha, "fixed_alpha")
        return WeightTable({d: alpha for d in raw}, default_alpha=default_alpha, probe_text=probe_text)
    lo, hi = min(raw.values()), max(raw.values())
    if hi == lo:
        return WeightTable({d: default_alpha for d in raw}, default_alpha, probe_text)
    span = hi - lo
    alphas = {d: min(1.0, max(0.0, (s - lo) / span)) for d, s in raw.items()}
    return WeightTable(alphas, default_alpha=default_alpha, probe_text=probe_text)


class ProbeCalibrator(BaseEstimator):
    """Fit per-video alphas from a probe embedding.

    ``fit(X, probe)`` accepts a :class:`DenseIndex` or a sequence of
    :class:`FrameEmbeddings`; ``probe`` is a vector or a one-frame
    :class:`FrameEmbeddings`. ``transform(doc_ids)`` returns their alphas.
    """

    def __init__(self, mode="minmax", fixed_alpha=0.5, default_alpha=0.5, probe_text=PROBE_QUERY):
        self.mode = mode
        self.fixed_alpha = fixed_alpha
        self.default_alpha = default_alpha
        self.probe_text = probe_text

    def fit(self, X, probe=None):
        if probe is None:
            raise DataError("a probe embedding is required")
        index = X if isinstance(X, DenseIndex) else DenseIndex.from_embeddings(list(X))
        if isinstance(probe, FrameEmbeddings):
            if probe.n_frames != 1:
                raise DataError(f"probe store must hold one vector, has {probe.n_frames}")
            probe = probe.vectors[0]
        self.raw_scores_ = calibration_scores(index, probe)
        self.weights_ = scores_to_alphas(
            self.raw_scores_, self.mode, self.fixed_alpha, self.default_alpha, self.probe_text
        )
        return self

    def transform(self, doc_ids):
        check_is_fitted(self, "weights_")
        return np.array([self.weights_.alpha(d) for d in doc_ids], dtype=np.float64)

    def fit_transform(self, X, probe=None):
        self.fit(X, probe)
        return self.transform(self.weights_.alphas.keys())
