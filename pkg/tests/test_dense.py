import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_stores
from rankfuse.dense import DenseIndex, DenseRetriever, dense_search, max_frame_aggregate, score_frames, video_scores
from rankfuse.exceptions import DataError
from rankfuse.model import FrameEmbeddings


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_self_and_orthogonal_scores():
    frames = np.eye(4)[:3]
    index = DenseIndex.from_embeddings([FrameEmbeddings("a", frames)])
    s = score_frames(index, frames[1])
    assert s[1] == pytest.approx(1.0, abs=1e-5)
    assert s[0] == pytest.approx(0.0, abs=1e-5)


def test_score_frames_matches_naive_loop(rng):
    stores = [FrameEmbeddings.from_raw("a", rng.standard_normal((5, 8)))]
    index = DenseIndex.from_embeddings(stores)
    q = _unit(rng.standard_normal(8))
    got = score_frames(index, q)
    want = [sum(float(a) * b for a, b in zip(f, q)) for f in stores[0].vectors]
    assert np.allclose(got, want, atol=1e-6)


def test_query_validation():
    index = DenseIndex.from_embeddings([FrameEmbeddings("a", np.eye(3)[:1])])
    with pytest.raises(DataError, match="dim"):
        score_frames(index, [1.0, 0.0])
    with pytest.raises(DataError):
        score_frames(index, [0.0, 0.0, 0.0])
    with pytest.raises(DataError):
        score_frames(index, [np.nan, 0.0, 1.0])


def test_max_frame_aggregate_examples():
    assert max_frame_aggregate(np.array([0.2, 0.9, 0.5]), np.array([0, 0, 0])).tolist() == pytest.approx([0.9])
    assert max_frame_aggregate(np.array([0.3, 0.1, -0.2]), np.array([0, 1, 1])).tolist() == pytest.approx([0.3, 0.1])
    # Unsorted ownership is handled too.
    assert max_frame_aggregate(np.array([0.1, 0.3, 0.2]), np.array([1, 0, 1])).tolist() == pytest.approx([0.3, 0.2])


def test_index_validation():
    m = np.eye(2, dtype=np.float32)
    with pytest.raises(DataError):
        DenseIndex(("a", "b"), m, np.array([0, 2, 2]))
    with pytest.raises(DataError):
        DenseIndex(("a", "a"), m, np.array([0, 1, 2]))
    with pytest.raises(DataError):
        DenseIndex(("a",), m, np.array([0, 1]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dense_search_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    stores = random_stores(rng, int(rng.integers(1, 80)), 6, 16)
    index = DenseIndex.from_embeddings(stores)
    q = _unit(rng.standard_normal(16))
    top_n = int(rng.integers(1, 100))
    got = dense_search(index, q, top_n=top_n)
    want = oracles.max_frame([(s.doc_id, s.vectors.tolist()) for s in stores], q.tolist())
    assert list(got.doc_ids) == oracles.ordering(want)[:top_n]
    assert np.allclose(got.scores, [want[d] for d in got.doc_ids], atol=1e-6)


def test_single_frame_videos_are_nearest_neighbour(rng):
    vecs = rng.standard_normal((40, 8))
    stores = [FrameEmbeddings.from_raw(f"v{i:02d}", vecs[i]) for i in range(40)]
    q = _unit(rng.standard_normal(8))
    got = dense_search(DenseIndex.from_embeddings(stores), q, top_n=40)
    unit = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    assert list(got.doc_ids) == [f"v{i:02d}" for i in np.argsort(-(unit @ q), kind="stable")]


def test_adding_a_frame_never_lowers_score(rng):
    stores = random_stores(rng, 10, 4, 8)
    q = _unit(rng.standard_normal(8))
    before = dict(zip(*video_scores_named(stores, q)))
    extra = [FrameEmbeddings(s.doc_id, np.vstack([s.vectors, _unit(rng.standard_normal(8))])) for s in stores]
    after = dict(zip(*video_scores_named(extra, q)))
    assert all(after[d] >= before[d] for d in before)


def video_scores_named(stores, q):
    index = DenseIndex.from_embeddings(stores)
    idx, scores = video_scores(index, q)
    return [index.doc_ids[i] for i in idx], scores.tolist()


def test_equal_scores_tie_break_by_doc_id():
    f = np.array([[1.0, 0.0]])
    stores = [FrameEmbeddings(d, f) for d in ["c", "a", "b"]]
    assert dense_search(DenseIndex.from_embeddings(stores), [1.0, 0.0]).doc_ids == ("a", "b", "c")


def test_close_scores_match_float64_order():
    # Float32 screening must not reorder near-ties that float64 separates.
    base = _unit(np.arange(1.0, 65.0))
    eps = 1e-7
    stores = []
    for i in range(50):
        v = base + eps * i * _unit(np.sin(np.arange(64.0) + i))
        stores.append(FrameEmbeddings.from_raw(f"v{i:02d}", v))
    q = base
    got = dense_search(DenseIndex.from_embeddings(stores), q, top_n=10)
    want = oracles.max_frame([(s.doc_id, s.vectors.tolist()) for s in stores], q.tolist())
    assert list(got.doc_ids) == oracles.ordering(want)[:10]


def test_retriever_roundtrip(tmp_path, rng):
    stores = random_stores(rng, 20, 5, 8)
    est = DenseRetriever(top_n=5).fit(stores)
    q = FrameEmbeddings.from_raw("q1", rng.standard_normal(8))
    runs = est.predict([q])
    assert runs[0].qid == "q1" and len(runs[0]) == 5
    est.save(tmp_path / "d")
    again = DenseRetriever.load(tmp_path / "d", top_n=5)
    assert again.predict([q]) == runs
    with pytest.raises(DataError):
        est.predict([FrameEmbeddings.from_raw("q2", rng.standard_normal((2, 8)))])
