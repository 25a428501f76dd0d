import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_qrels, random_run
from rankfuse.evaluation import (
    betainc,
    bonferroni_adjust,
    evaluate_run,
    ndcg_at_k,
    paired_t_test,
    parse_metric,
    read_report,
    recall_at_k,
    significance_rows,
    student_t_two_sided_p,
    write_report,
    write_significance,
)
from rankfuse.exceptions import DataError
from rankfuse.model import EvalReport, Qrels, RankedList

scipy_stats = pytest.importorskip("scipy.stats")


def _list(qid, ids):
    return RankedList(qid, tuple(ids), tuple(float(len(ids) - i) for i in range(len(ids))))


def test_dcg_single_relevant_at_rank_two():
    qrels = Qrels([("q", "r", 1)])
    assert ndcg_at_k(_list("q", ["x", "r"]), qrels, 10) == pytest.approx(1 / math.log2(3), abs=1e-12)
    assert ndcg_at_k(_list("q", ["x", "r"]), qrels, 10) == pytest.approx(0.63093, abs=1e-5)


def test_ideal_ordering_is_one_and_gains_differ():
    qrels = Qrels([("q", "a", 3), ("q", "b", 1), ("q", "c", 2)])
    assert ndcg_at_k(_list("q", ["a", "c", "b"]), qrels, 10) == 1.0
    run = _list("q", ["b", "c", "a"])
    lin = ndcg_at_k(run, qrels, 10)
    exp = ndcg_at_k(run, qrels, 10, gain="exponential")
    assert lin == pytest.approx(oracles.ndcg(list(run.doc_ids), {"a": 3, "b": 1, "c": 2}, 10))
    assert exp == pytest.approx(oracles.ndcg(list(run.doc_ids), {"a": 3, "b": 1, "c": 2}, 10, exponential=True))
    assert lin != exp


def test_recall_examples():
    qrels = Qrels([("q", d, 1) for d in "abcd"] + [("q", "z", 0)])
    assert recall_at_k(_list("q", ["a"]), Qrels([("q", "a", 1)]), 1) == 1.0
    assert recall_at_k(_list("q", ["x", "a", "z"]), qrels, 10) == 0.25
    assert recall_at_k(_list("q", ["x"]), Qrels([("q", "x", 0)]), 10) is None
    with pytest.raises(DataError):
        recall_at_k(_list("q", ["x"]), qrels, 0)


def test_parse_metric():
    assert parse_metric("ndcg@10") == ("ndcg", 10)
    assert parse_metric("NDCG_EXP@5") == ("ndcg_exp", 5)
    for bad in ["ndcg", "map@10", "recall@0", "ndcg@x"]:
        with pytest.raises(DataError):
            parse_metric(bad)


def test_evaluate_run_skip_counts():
    qrels = Qrels([("q1", "a", 1), ("q2", "b", 0), ("q3", "c", 2)])
    run = [_list("q1", ["a"]), _list("q9", ["a"])]
    rep = evaluate_run(run, qrels, ["ndcg@10"])["ndcg@10"]
    assert rep.per_query == {"q1": 1.0, "q3": 0.0}
    assert rep.n_skipped_no_relevant == 1
    assert rep.n_skipped_unjudged == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 5, 10, 20]))
def test_metrics_match_oracle(seed, k):
    rng = np.random.default_rng(seed)
    pool = [f"d{i:02d}" for i in range(20)]
    qids = [f"q{i}" for i in range(5)]
    qrels = random_qrels(rng, qids, pool, 12)
    for q in qids:
        run = random_run(rng, q, pool, int(rng.integers(0, 21)))
        grades = dict(qrels.judgments(q))
        got = ndcg_at_k(run, qrels, k)
        if not qrels.relevant(q):
            assert got is None
            continue
        assert got == pytest.approx(oracles.ndcg(list(run.doc_ids), grades, k), abs=1e-12)
        assert recall_at_k(run, qrels, k) == pytest.approx(oracles.recall(list(run.doc_ids), grades, k))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metrics_match_trec_eval(seed):
    pytrec_eval = pytest.importorskip("pytrec_eval")
    rng = np.random.default_rng(seed)
    pool = [f"d{i:02d}" for i in range(20)]
    qids = [f"q{i}" for i in range(5)]
    qrels = random_qrels(rng, qids, pool, 12)
    runs = [random_run(rng, q, pool, int(rng.integers(1, 21))) for q in qids]
    ev = pytrec_eval.RelevanceEvaluator(
        {q: dict(qrels.judgments(q)) for q in qids}, {"ndcg_cut.5,10", "recall.5,10"}
    )
    ref = ev.evaluate({r.qid: dict(zip(r.doc_ids, r.scores)) for r in runs})
    ours = evaluate_run(runs, qrels, ["ndcg@5", "ndcg@10", "recall@5", "recall@10"])
    for q in ours["ndcg@10"].per_query:
        assert ours["ndcg@5"].per_query[q] == pytest.approx(ref[q]["ndcg_cut_5"], abs=1e-6)
        assert ours["ndcg@10"].per_query[q] == pytest.approx(ref[q]["ndcg_cut_10"], abs=1e-6)
        assert ours["recall@5"].per_query[q] == pytest.approx(ref[q]["recall_5"], abs=1e-6)
        assert ours["recall@10"].per_query[q] == pytest.approx(ref[q]["recall_10"], abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    pool = [f"d{i:02d}" for i in range(30)]
    qrels = random_qrels(rng, ["q"], pool, 15)
    if not qrels.relevant("q"):
        return
    run = random_run(rng, "q", pool, 30)
    recalls = [recall_at_k(run, qrels, k) for k in range(1, 31)]
    assert recalls == sorted(recalls)
    for k in (1, 5, 10):
        assert 0.0 <= ndcg_at_k(run, qrels, k) <= 1.0
        assert ndcg_at_k(run.head(k), qrels, k) == ndcg_at_k(run, qrels, k)
    # Consistent relabeling.
    rename = {d: "x" + d[::-1] for d in pool}
    run2 = RankedList("q", tuple(rename[d] for d in run.doc_ids), run.scores)
    qrels2 = Qrels([(q, rename[d], g) for q, d, g in qrels.items()])
    assert ndcg_at_k(run2, qrels2, 10) == pytest.approx(ndcg_at_k(run, qrels, 10), abs=1e-15)
    ideal = sorted(qrels.judgments("q"), key=lambda d: -qrels.grade("q", d))
    assert ndcg_at_k(_list("q", ideal), qrels, 10) == 1.0


def test_t_test_hand_value():
    res = paired_t_test({"a": 1.0, "b": 2.0, "c": 3.0}, {"a": 0.0, "b": 0.0, "c": 0.0})
    assert res.t == pytest.approx(2 * math.sqrt(3), abs=1e-12)
    assert res.t == pytest.approx(3.4641, abs=1e-3)
    assert res.p == pytest.approx(0.0742, abs=1e-3)
    assert res.n == 3 and not res.degenerate


def test_t_test_degenerate_and_errors():
    a = {"x": 0.3, "y": 0.7}
    res = paired_t_test(a, a)
    assert (res.t, res.p, res.degenerate) == (0.0, 1.0, True)
    res = paired_t_test({"x": 1.0, "y": 2.0}, {"x": 0.0, "y": 1.0})
    assert res.p == 0.0 and res.t == math.inf and res.degenerate
    with pytest.raises(DataError):
        paired_t_test({"x": 1.0}, {"x": 0.0})
    with pytest.raises(DataError):
        paired_t_test({"x": 1.0, "y": 1.0}, {"x": 0.0, "z": 1.0})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_t_test_matches_scipy_and_is_antisymmetric(seed, n):
    rng = np.random.default_rng(seed)
    a = dict(zip(map(str, range(n)), rng.random(n).tolist()))
    b = dict(zip(map(str, range(n)), (rng.random(n) * rng.random()).tolist()))
    ours = paired_t_test(a, b)
    ref = scipy_stats.ttest_rel([a[q] for q in sorted(a)], [b[q] for q in sorted(a)])
    assert ours.t == pytest.approx(ref.statistic, rel=1e-9)
    assert ours.p == pytest.approx(ref.pvalue, abs=1e-9)
    swapped = paired_t_test(b, a)
    assert swapped.t == -ours.t and swapped.p == ours.p


@given(st.floats(0.05, 50), st.floats(0.05, 50), st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    special = pytest.importorskip("scipy.special")
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-10)


def test_t_distribution_tails():
    assert student_t_two_sided_p(0.0, 5) == 1.0
    assert student_t_two_sided_p(1e-8, 5) < 1.0
    assert student_t_two_sided_p(math.inf, 5) == 0.0
    with pytest.raises(DataError):
        student_t_two_sided_p(1.0, 0)


def test_bonferroni():
    assert bonferroni_adjust(0.0004, 110) == pytest.approx(0.044)
    assert bonferroni_adjust(0.0004, 110) < 0.05
    assert bonferroni_adjust(0.01, 1) == 0.01
    assert bonferroni_adjust(0.5, 110) == 1.0
    for p, m in [(-0.1, 1), (1.1, 1), (0.5, 0)]:
        with pytest.raises(DataError):
            bonferroni_adjust(p, m)


def test_report_roundtrip_and_significance(tmp_path):
    a = {"ndcg@10": EvalReport("ndcg@10", {"q1": 0.1, "q2": 1 / 3, "q3": 0.9}, 2, 1)}
    b = {"ndcg@10": EvalReport("ndcg@10", {"q1": 0.2, "q2": 0.5, "q3": 0.95})}
    write_report(a, tmp_path / "a.tsv")
    back = read_report(tmp_path / "a.tsv")
    assert back["ndcg@10"].per_query == a["ndcg@10"].per_query
    assert back["ndcg@10"].n_skipped_no_relevant == 2
    rows = significance_rows({"A": back, "B": b}, m=110)
    assert len(rows) == 1
    direct = paired_t_test(a["ndcg@10"].per_query, b["ndcg@10"].per_query)
    assert rows[0]["p"] == direct.p
    assert rows[0]["p_adjusted"] == min(1.0, 110 * direct.p)
    write_significance(rows, tmp_path / "sig.tsv")
    header = (tmp_path / "sig.tsv").read_text().splitlines()[0].split("\t")
    assert header[:3] == ["metric", "system_a", "system_b"]
