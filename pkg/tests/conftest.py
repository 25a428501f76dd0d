import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rankfuse.model import FrameEmbeddings, Qrels, RankedList, canonicalize  # noqa: E402


def random_run(rng, qid, doc_pool, n, ties=False, tag="t"):
    docs = rng.choice(doc_pool, size=min(n, len(doc_pool)), replace=False).tolist()
    if ties:
        scores = rng.integers(0, 5, size=len(docs)).astype(float).tolist()
    else:
        scores = rng.standard_normal(len(docs)).tolist()
    return canonicalize(list(zip(docs, scores)), qid=qid, run_tag=tag)


def random_qrels(rng, qids, doc_pool, max_judged=30, max_grade=3):
    triples = []
    for q in qids:
        judged = rng.choice(doc_pool, size=int(rng.integers(1, max_judged + 1)), replace=False)
        for d in judged.tolist():
            triples.append((q, d, int(rng.integers(0, max_grade + 1))))
    return Qrels(triples)


def random_stores(rng, n_videos, max_frames, dim, prefix="v"):
    return [
        FrameEmbeddings.from_raw(f"{prefix}{i:04d}", rng.standard_normal((int(rng.integers(1, max_frames + 1)), dim)))
        for i in range(n_videos)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_run():
    return RankedList("q1", ("d1", "d2", "d3"), (3.0, 2.0, 1.0), "t")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
