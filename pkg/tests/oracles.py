"""Brute-force reference implementations, written without the package.

Each oracle works from the textbook definition with plain Python loops so it
shares no code path with the implementation under test.
"""

import math


def ndcg(ranking, grades, k, exponential=False):
    """nDCG@k; ``grades`` maps doc -> grade for one query."""
    gain = (lambda g: 2.0**g - 1.0) if exponential else (lambda g: float(g))
    dcg = 0.0
    for i in range(min(k, len(ranking))):
        g = grades.get(ranking[i], 0)
        if g > 0:
            dcg += gain(g) / math.log2(i + 2)
    best = sorted([g for g in grades.values() if g > 0], reverse=True)
    idcg = 0.0
    for i in range(min(k, len(best))):
        idcg += gain(best[i]) / math.log2(i + 2)
    return dcg / idcg


def recall(ranking, grades, k):
    rel = [d for d, g in grades.items() if g >= 1]
    top = ranking[:k]
    hits = 0
    for d in rel:
        if d in top:
            hits += 1
    return hits / len(rel)


def bm25(docs_tokens, query_tokens, k1=0.9, b=0.4):
    """Scores for every doc, expanded term by term."""
    n = len(docs_tokens)
    avgdl = sum(len(t) for t in docs_tokens) / n
    out = []
    for tokens in docs_tokens:
        total = 0.0
        for term in query_tokens:
            df = 0
            for other in docs_tokens:
                if term in other:
                    df += 1
            if df == 0:
                continue
            tf = tokens.count(term)
            if tf == 0:
                continue
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(tokens) / avgdl))
        out.append(total)
    return out


def rrf(runs, k):
    """``runs``: list of lists of doc ids (best first). Returns dict doc -> score."""
    scores = {}
    for run in runs:
        for i, d in enumerate(run):
            scores[d] = scores.get(d, 0.0) + 1.0 / (i + 1 + k)
    return scores


def wrrf(text, vision, alpha_of, k):
    scores = {}
    for i, d in enumerate(text):
        scores[d] = scores.get(d, 0.0) + alpha_of(d) / (i + 1 + k)
    for i, d in enumerate(vision):
        scores[d] = scores.get(d, 0.0) + (1 - alpha_of(d)) / (i + 1 + k)
    return {d: s for d, s in scores.items() if s > 0}


def ordering(scores):
    """Doc ids by score descending, ties by doc id."""
    return sorted(scores, key=lambda d: (-scores[d], d))


def max_frame(videos, q):
    """``videos``: list of (doc_id, list of frame vectors). Naive double loop."""
    out = {}
    for doc_id, frames in videos:
        best = -math.inf
        for f in frames:
            s = 0.0
            for a, b in zip(f, q):
                s += float(a) * float(b)
            if s > best:
                best = s
        out[doc_id] = best
    return out
