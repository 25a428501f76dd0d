"""Multimodal rank fusion for video retrieval.

BM25 over extracted video text, MaxFrame dense search over frame
embeddings, probe-calibrated per-video weights, reciprocal rank fusion, and
TREC-style evaluation with paired significance tests.
"""

__version__ = "0.1.0"

from .calibrate import PROBE_QUERY, ProbeCalibrator, calibration_scores, scores_to_alphas
from .dense import DenseIndex, DenseRetriever, dense_search, max_frame_aggregate
from .evaluation import (
    TTestResult,
    bonferroni_adjust,
    evaluate_run,
    ndcg_at_k,
    paired_t_test,
    recall_at_k,
)
from .exceptions import DataError, NotReadyError
from .fuse import RankFusion, rrf_fuse, wrrf_fuse
from .lexical import BM25Retriever, LexicalIndex, bm25_search, build_index, tokenize
from .model import (
    EvalReport,
    FrameEmbeddings,
    FusionParams,
    QueryRecord,
    Qrels,
    RankedList,
    VideoDocument,
    WeightTable,
    canonicalize,
)

__all__ = [
    "BM25Retriever",
    "DataError",
    "DenseIndex",
    "DenseRetriever",
    "EvalReport",
    "FrameEmbeddings",
    "FusionParams",
    "LexicalIndex",
    "NotReadyError",
    "PROBE_QUERY",
    "ProbeCalibrator",
    "QueryRecord",
    "Qrels",
    "RankFusion",
    "RankedList",
    "TTestResult",
    "VideoDocument",
    "WeightTable",
    "bm25_search",
    "bonferroni_adjust",
    "build_index",
    "calibration_scores",
    "canonicalize",
    "dense_search",
    "evaluate_run",
    "max_frame_aggregate",
    "ndcg_at_k",
    "paired_t_test",
    "recall_at_k",
    "rrf_fuse",
    "scores_to_alphas",
    "tokenize",
    "wrrf_fuse",
]
