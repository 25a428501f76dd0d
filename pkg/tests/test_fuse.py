import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_run
from rankfuse.exceptions import DataError
from rankfuse.fuse import RankFusion, rrf_fuse, wrrf_fuse
from rankfuse.model import RankedList, WeightTable, canonicalize


def _list(qid, ids):
    return RankedList(qid, tuple(ids), tuple(float(len(ids) - i) for i in range(len(ids))))


def test_rrf_hand_values():
    a, b = _list("q", ["d", "x"]), _list("q", ["d", "y"])
    assert rrf_fuse([a, b], k=60).scores[0] == pytest.approx(2 / 61)
    assert rrf_fuse([a, b], k=0).scores[0] == 2.0
    only = rrf_fuse([_list("q", ["z", "e"]), _list("q", ["z"])], k=0)
    assert dict(zip(only.doc_ids, only.scores))["e"] == 0.5


def test_wrrf_hand_value():
    text = _list("q", ["d", "x", "y"])
    vision = _list("q", ["x", "y", "d"])
    fused = wrrf_fuse(text, vision, WeightTable({"d": 0.7}), k=0)
    assert dict(zip(fused.doc_ids, fused.scores))["d"] == pytest.approx(0.8, abs=1e-12)


def test_missing_modality_keeps_own_weight():
    fused = wrrf_fuse(_list("q", ["a"]), _list("q", ["b"]), WeightTable({"a": 0.25, "b": 0.25}), k=0)
    assert dict(zip(fused.doc_ids, fused.scores)) == {"a": 0.25, "b": 0.75}


def test_alpha_one_reproduces_text_order():
    text = _list("q", ["c", "a", "b"])
    vision = _list("q", ["b", "z", "a"])
    fused = wrrf_fuse(text, vision, WeightTable.constant(1.0), k=0)
    assert fused.doc_ids == ("c", "a", "b")


def test_errors():
    a, b = _list("q1", ["a"]), _list("q2", ["a"])
    with pytest.raises(DataError):
        rrf_fuse([a, b])
    with pytest.raises(DataError):
        rrf_fuse([a])
    with pytest.raises(DataError):
        rrf_fuse([a, a], k=-1)
    with pytest.raises(DataError):
        wrrf_fuse(a, b, WeightTable.constant(0.5))


def _pair(seed, ties=False):
    rng = np.random.default_rng(seed)
    pool = [f"d{i:03d}" for i in range(int(rng.integers(2, 120)))]
    t = random_run(rng, "q", pool, int(rng.integers(0, len(pool) + 1)), ties)
    v = random_run(rng, "q", pool, int(rng.integers(0, len(pool) + 1)), ties)
    return rng, t, v


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 1.0, 60.0]))
def test_wrrf_matches_oracle(seed, k):
    rng, t, v = _pair(seed)
    alphas = {d: float(rng.random()) for d in t.doc_ids + v.doc_ids if rng.random() < 0.8}
    weights = WeightTable(alphas, default_alpha=0.4)
    fused = wrrf_fuse(t, v, weights, k=k, output_size=None)
    want = oracles.wrrf(list(t.doc_ids), list(v.doc_ids), weights.alpha, k)
    assert list(fused.doc_ids) == oracles.ordering(want)
    assert np.allclose(fused.scores, [want[d] for d in fused.doc_ids], rtol=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 60.0]))
def test_half_alpha_is_exactly_half_rrf(seed, k):
    _, t, v = _pair(seed, ties=True)
    r = rrf_fuse([t, v], k=k, output_size=None)
    w = wrrf_fuse(t, v, WeightTable.constant(0.5), k=k, output_size=None)
    assert w.doc_ids == r.doc_ids
    assert all(ws == 0.5 * rs for ws, rs in zip(w.scores, r.scores))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 60.0]))
def test_score_bounds(seed, k):
    rng, t, v = _pair(seed)
    r = rrf_fuse([t, v], k=k, output_size=None)
    assert all(0 < s <= 2 / (1 + k) for s in r.scores)
    w = wrrf_fuse(t, v, WeightTable({d: float(rng.random()) for d in t.doc_ids}), k=k, output_size=None)
    assert all(0 < s <= 1 / (1 + k) + 1e-15 for s in w.scores)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fusion_uses_ranks_only(seed):
    rng, t, v = _pair(seed)
    rescored = canonicalize([(d, float(np.exp(-i))) for i, d in enumerate(t.doc_ids)], qid="q")
    weights = WeightTable({d: float(rng.random()) for d in t.doc_ids})
    assert wrrf_fuse(t, v, weights) == wrrf_fuse(rescored, v, weights)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_promoting_a_doc_never_lowers_it(seed):
    rng, t, v = _pair(seed)
    if len(t) < 2:
        return
    weights = WeightTable({d: float(rng.random()) for d in t.doc_ids + v.doc_ids})
    i = int(rng.integers(1, len(t)))
    ids = list(t.doc_ids)
    promoted = ids[:i - 1] + [ids[i]] + [ids[i - 1]] + ids[i + 1:]
    before = wrrf_fuse(t, v, weights, output_size=None)
    after = wrrf_fuse(_list("q", promoted), v, weights, output_size=None)
    d = ids[i]
    assert dict(zip(after.doc_ids, after.scores))[d] >= dict(zip(before.doc_ids, before.scores))[d]


def test_depth_and_output_size():
    text = _list("q", ["a", "b", "c", "d"])
    vision = _list("q", ["d", "c", "b", "a"])
    fused = rrf_fuse([text, vision], k=0, depth=1, output_size=10)
    assert set(fused.doc_ids) == {"a", "d"}
    assert len(rrf_fuse([text, vision], k=0, output_size=2)) == 2


def test_estimator_predict_aligns_queries():
    text = [_list("q1", ["a", "b"]), _list("q2", ["c"])]
    vision = [_list("q1", ["b"]), _list("q3", ["e"])]
    fusion = RankFusion(method="rrf", k=0)
    runs = fusion.predict(text, vision)
    assert [r.qid for r in runs] == ["q1", "q2", "q3"]
    assert runs[0].doc_ids == ("b", "a")
    assert runs[0].run_tag == "rrf"
    assert fusion.get_params()["method"] == "rrf"
    with pytest.raises(DataError):
        RankFusion(method="borda").fit()
