"""Ranked-retrieval metrics and paired significance testing.

Metric names follow ``<name>@<cutoff>``: ``ndcg@10``, ``recall@1``, and
``ndcg_exp@10`` for nDCG with exponential gain ``2**grade - 1``. nDCG uses
linear gain and a ``log2(rank + 1)`` discount by default (trec_eval's
``ndcg_cut``).

Queries without any judged-relevant document are excluded from means and
counted in the report. Judged queries that a run did not answer score 0.
"""

from __future__ import annotations

import math
import re
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence, Union

from .exceptions import DataError
from .model import EvalReport, Qrels, RankedList

__all__ = [
    "parse_metric",
    "ndcg_at_k",
    "recall_at_k",
    "evaluate_run",
    "betainc",
    "student_t_two_sided_p",
    "TTestResult",
    "paired_t_test",
    "bonferroni_adjust",
    "significance_rows",
    "write_report",
    "read_report",
    "write_significance",
]

_METRIC_RE = re.compile(r"^(ndcg|ndcg_exp|recall)@([1-9][0-9]*)$")


def parse_metric(spec: str) -> tuple[str, int]:
    match = _METRIC_RE.match(spec.strip().lower())
    if not match:
        raise DataError(f"unknown metric {spec!r}; expected ndcg@k, ndcg_exp@k or recall@k")
    return match.group(1), int(match.group(2))


def _check_cutoff(k):
    if int(k) != k or k < 1:
        raise DataError(f"cutoff k must be a positive integer, got {k!r}")
    return int(k)


def _gain(grade: int, gain: str) -> float:
    if gain == "linear":
        return float(grade)
    if gain == "exponential":
        return 2.0**grade - 1.0
    raise DataError(f"unknown gain {gain!r}")


def ndcg_at_k(ranked: RankedList, qrels: Qrels, k: int, gain: str = "linear") -> Optional[float]:
    """nDCG@k of one list, or ``None`` when the query has no relevant document."""
    k = _check_cutoff(k)
    judged = qrels.judgments(ranked.qid)
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:k]
    if not ideal:
        return None
    idcg = math.fsum(_gain(g, gain) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    dcg = math.fsum(
        _gain(judged.get(d, 0), gain) / math.log2(i + 1)
        for i, d in enumerate(ranked.doc_ids[:k], start=1)
        if judged.get(d, 0) > 0
    )
    return min(1.0, dcg / idcg)


def recall_at_k(ranked: RankedList, qrels: Qrels, k: int) -> Optional[float]:
    """Fraction of relevant documents in the top ``k``; ``None`` without relevant docs."""
    k = _check_cutoff(k)
    relevant = qrels.relevant(ranked.qid)
    if not relevant:
        return None
    hits = sum(1 for d in ranked.doc_ids[:k] if d in relevant)
    return hits / len(relevant)


def _metric_fn(name: str):
    if name == "ndcg":
        return lambda r, q, k: ndcg_at_k(r, q, k, "linear")
    if name == "ndcg_exp":
        return lambda r, q, k: ndcg_at_k(r, q, k, "exponential")
    return recall_at_k


def evaluate_run(
    run: Union[Iterable[RankedList], Mapping[str, RankedList]],
    qrels: Qrels,
    metrics: Sequence[str] = ("ndcg@10", "recall@1", "recall@10"),
) -> dict[str, EvalReport]:
    if isinstance(run, Mapping):
        by_qid = dict(run)
    else:
        by_qid = {}
        for ranked in run:
            if ranked.qid in by_qid:
                raise DataError(f"run contains query {ranked.qid!r} twice")
            by_qid[ranked.qid] = ranked
    judged = [q for q in qrels.qids() if qrels.relevant(q)]
    n_no_relevant = len(qrels.qids()) - len(judged)
    n_unjudged = sum(1 for q in by_qid if q not in qrels)
    reports = {}
    for spec in metrics:
        name, k = parse_metric(spec)
        fn = _metric_fn(name)
        values = {}
        for qid in judged:
            ranked = by_qid.get(qid) or RankedList._trusted(qid, (), ())
            values[qid] = fn(ranked, qrels, k)
        reports[spec] = EvalReport(f"{name}@{k}", values, n_no_relevant, n_unjudged)
    return reports


# --- Student t distribution -------------------------------------------------

_BETA_EPS = 1e-15
_BETA_TINY = 1e-300
_BETA_MAX_ITER = 10_000


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the incomplete beta continued fraction.
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _BETA_TINY if abs(d) < _BETA_TINY else d
        c = 1.0 + aa / c
        c = _BETA_TINY if abs(c) < _BETA_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _BETA_TINY if abs(d) < _BETA_TINY else d
        c = 1.0 + aa / c
        c = _BETA_TINY if abs(c) < _BETA_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, complement: Optional[float] = None) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``.

    ``complement`` may carry ``1 - x`` computed without cancellation.
    """
    if a <= 0 or b <= 0:
        raise DataError("betainc requires a > 0 and b > 0")
    if not (0.0 <= x <= 1.0):
        raise DataError(f"betainc requires 0 <= x <= 1, got {x!r}")
    y = 1.0 - x if complement is None else complement
    if x == 0.0 or y == 0.0:
        return 0.0 if x == 0.0 else 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, y) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise DataError(f"degrees of freedom must be positive, got {df!r}")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2)))


class TTestResult(NamedTuple):
    t: float
    p: float
    n: int
    degenerate: bool = False


def paired_t_test(per_query_a: Mapping[str, float], per_query_b: Mapping[str, float]) -> TTestResult:
    """Two-sided paired t-test on ``a - b`` over a shared query set.

    When all differences are equal the variance is zero; the result is then
    flagged ``degenerate`` with ``p = 1`` for a zero mean difference and
    ``p = 0`` otherwise.
    """
    if set(per_query_a) != set(per_query_b):
        only_a = sorted(set(per_query_a) - set(per_query_b))[:5]
        only_b = sorted(set(per_query_b) - set(per_query_a))[:5]
        raise DataError(f"query sets differ (only in a: {only_a}, only in b: {only_b})")
    n = len(per_query_a)
    if n < 2:
        raise DataError(f"paired t-test needs at least 2 queries, got {n}")
    diffs = [per_query_a[q] - per_query_b[q] for q in sorted(per_query_a)]
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, n, True)
        return TTestResult(math.copysign(math.inf, mean), 0.0, n, True)
    t = mean / math.sqrt(var / n)
    return TTestResult(t, student_t_two_sided_p(t, n - 1), n)


def bonferroni_adjust(p: float, m: int) -> float:
    if not (0.0 <= p <= 1.0):
        raise DataError(f"p-value must lie in [0, 1], got {p!r}")
    if int(m) != m or m < 1:
        raise DataError(f"number of tests m must be a positive integer, got {m!r}")
    return min(1.0, int(m) * p)


def significance_rows(
    systems: Mapping[str, Mapping[str, EvalReport]], m: int, level: float = 0.05
) -> list[dict]:
    """Pairwise tests for every metric shared by every pair of systems."""
    rows = []
    names = list(systems)
    for a, b in combinations(names, 2):
        for metric in systems[a]:
            if metric not in systems[b]:
                continue
            ra, rb = systems[a][metric], systems[b][metric]
            res = paired_t_test(ra.per_query, rb.per_query)
            adjusted = bonferroni_adjust(res.p, m)
            rows.append(
                {
                    "metric": metric,
                    "system_a": a,
                    "system_b": b,
                    "n": res.n,
                    "mean_a": ra.mean,
                    "mean_b": rb.mean,
                    "t": res.t,
                    "p": res.p,
                    "p_adjusted": adjusted,
                    "significant": adjusted < level,
                    "degenerate": res.degenerate,
                }
            )
    return rows


# --- report files ------------------------------------------------------------


def write_report(reports: Mapping[str, EvalReport], path) -> None:
    """TSV rows ``metric  qid|mean  value``; skip counts go in ``#`` comments."""
    lines = []
    for key, rep in reports.items():
        lines.append(
            f"# {key} queries={len(rep.per_query)} skipped_no_relevant={rep.n_skipped_no_relevant}"
            f" skipped_unjudged={rep.n_skipped_unjudged}\n"
        )
        for qid, value in rep.per_query.items():
            lines.append(f"{key}\t{qid}\t{float(value)!r}\n")
        lines.append(f"{key}\tmean\t{rep.mean!r}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_report(path) -> dict[str, EvalReport]:
    values: dict[str, dict[str, float]] = {}
    counts: dict[str, tuple[int, int]] = {}
    text = Path(path).read_bytes().decode("utf-8")
    for number, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            fields = line[1:].split()
            if fields:
                kv = dict(f.split("=", 1) for f in fields[1:] if "=" in f)
                counts[fields[0]] = (
                    int(kv.get("skipped_no_relevant", 0)),
                    int(kv.get("skipped_unjudged", 0)),
                )
            continue
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise DataError(f"expected 3 tab-separated columns, found {len(cols)}", f"{path}:{number}")
        metric, qid, value = cols
        if qid == "mean":
            continue
        try:
            values.setdefault(metric, {})[qid] = float(value)
        except ValueError:
            raise DataError(f"unparsable value {value!r}", f"{path}:{number}") from None
    return {
        m: EvalReport(m, vals, *counts.get(m, (0, 0))) for m, vals in values.items()
    }


def write_significance(rows: Sequence[dict], path) -> None:
    header = ["metric", "system_a", "system_b", "n", "mean_a", "mean_b", "t", "p", "p_adjusted", "significant", "degenerate"]
    lines = ["\t".join(header) + "\n"]
    for row in rows:
        cells = []
        for key in header:
            v = row[key]
            if isinstance(v, bool):
                cells.append("1" if v else "0")
            elif isinstance(v, float):
                cells.append(f"{v:.6g}" if key in ("t", "p", "p_adjusted") else f"{v:.6f}")
            else:
                cells.append(str(v))
        lines.append("\t".join(cells) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")
