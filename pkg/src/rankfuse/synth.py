"""Seeded synthetic collections with per-video modality reliability.

Each video is either *text-reliable* (its OCR/ASR text describes it, its
frames do not) or *vision-reliable* (the reverse). Text-reliable videos also
carry a frame resembling a fixed "news" probe vector, so probe calibration
can recover the split. ``noise`` in [0, 1] perturbs relevant signals and
plants spurious matches in each video's unreliable modality:

* vision-reliable distractors get garbled text containing query terms;
* text-reliable distractors get a frame close to the query vector.

With ``noise = 0`` each modality's run ranks its relevant videos first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .io import write_documents, write_embeddings, write_qrels, write_queries, write_weights
from .model import FrameEmbeddings, QueryRecord, Qrels, VideoDocument, WeightTable
from .calibrate import PROBE_QUERY

__all__ = ["SyntheticCollection", "generate", "TEXT", "VISION"]

TEXT, VISION = "text", "vision"
ORACLE_ALPHA = {TEXT: 0.9, VISION: 0.1}

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "tr", "br"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]


def _words(rng: np.random.Generator, count: int, taken: set) -> list[str]:
    out = []
    while len(out) < count:
        n_syl = int(rng.integers(2, 4))
        word = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(n_syl))
        if word not in taken:
            taken.add(word)
            out.append(word)
    return out


def _unit(rng, dim, n=None):
    shape = (dim,) if n is None else (n, dim)
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _near(rng, target, cosine):
    """Unit vector at exactly ``cosine`` similarity to unit ``target``."""
    u = rng.standard_normal(target.shape[0])
    u -= (u @ target) * target
    u /= np.linalg.norm(u)
    return cosine * target + np.sqrt(max(0.0, 1.0 - cosine * cosine)) * u


@dataclass
class SyntheticCollection:
    documents: list
    video_embeddings: list
    queries: list
    query_embeddings: list
    probe: FrameEmbeddings
    qrels: Qrels
    oracle_weights: WeightTable
    video_class: dict = field(default_factory=dict)

    FILES = {
        "documents": "documents.jsonl",
        "videos_manifest": "videos.manifest.json",
        "videos_vectors": "videos.f32",
        "queries": "queries.tsv",
        "query_manifest": "queries.manifest.json",
        "query_vectors": "queries.f32",
        "probe_manifest": "probe.manifest.json",
        "probe_vectors": "probe.f32",
        "qrels": "qrels.txt",
        "oracle_weights": "oracle_weights.tsv",
    }

    def save(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / v for k, v in self.FILES.items()}
        write_documents(self.documents, paths["documents"])
        write_embeddings(self.video_embeddings, paths["videos_manifest"], paths["videos_vectors"], "synthetic frames")
        write_queries(self.queries, paths["queries"])
        write_embeddings(self.query_embeddings, paths["query_manifest"], paths["query_vectors"], "synthetic queries")
        write_embeddings([self.probe], paths["probe_manifest"], paths["probe_vectors"], PROBE_QUERY)
        write_qrels(self.qrels, paths["qrels"])
        write_weights(self.oracle_weights, paths["oracle_weights"])
        return paths


def generate(
    seed: int = 0,
    n_videos: int = 1000,
    n_queries: int = 100,
    dim: int = 64,
    text_reliable_fraction: float = 0.5,
    noise: float = 0.5,
    terms_per_query: int = 3,
    max_frames: int = 16,
    spurious_rate: float = 3.0,
) -> SyntheticCollection:
    """Build a collection; identical arguments give identical output."""
    if not (0.0 <= text_reliable_fraction <= 1.0):
        raise DataError(f"text_reliable_fraction must lie in [0, 1], got {text_reliable_fraction!r}")
    if not (0.0 <= noise <= 1.0):
        raise DataError(f"noise must lie in [0, 1], got {noise!r}")
    for name, value, low in (
        ("n_videos", n_videos, 1),
        ("n_queries", n_queries, 1),
        ("dim", dim, 2),
        ("terms_per_query", terms_per_query, 1),
        ("max_frames", max_frames, 2),
    ):
        if int(value) != value or value < low:
            raise DataError(f"{name} must be an integer >= {low}, got {value!r}")
    if spurious_rate < 0:
        raise DataError(f"spurious_rate must be >= 0, got {spurious_rate!r}")

    rng = np.random.default_rng(seed)
    taken: set = set()
    query_terms = [_words(rng, terms_per_query, taken) for _ in range(n_queries)]
    filler = _words(rng, 3000, taken)

    n_text = int(round(text_reliable_fraction * n_videos))
    classes = np.array([TEXT] * n_text + [VISION] * (n_videos - n_text))
    rng.shuffle(classes)
    video_ids = [f"v{i:05d}" for i in range(n_videos)]
    pools = {c: [i for i in rng.permutation(n_videos).tolist() if classes[i] == c] for c in (TEXT, VISION)}

    query_vecs = _unit(rng, dim, n_queries)
    probe_vec = _unit(rng, dim)

    # Relevance: classes alternate within a query so neither modality holds
    # more than one relevant video beyond the other's count.
    judgments = []
    relevant_of = {}  # video -> (query, grade)
    for q in range(n_queries):
        n_rel = int(rng.integers(1, 4))
        first = TEXT if rng.random() < text_reliable_fraction else VISION
        if not pools[VISION]:
            first = TEXT
        if not pools[TEXT]:
            first = VISION
        per_class = {TEXT: 0, VISION: 0}
        for j in range(n_rel):
            cls = first if j % 2 == 0 else (VISION if first == TEXT else TEXT)
            if not pools[cls]:
                if j == 0:
                    raise DataError("collection too small for the requested number of queries")
                break
            v = pools[cls].pop()
            grade = 2 if per_class[cls] == 0 else 1
            per_class[cls] += 1
            relevant_of[v] = (q, grade)
            judgments.append((f"q{q:04d}", video_ids[v], grade))

    ocr = [[] for _ in range(n_videos)]
    asr = [[] for _ in range(n_videos)]
    frames = []
    for v in range(n_videos):
        n_frames = int(rng.integers(max(2, max_frames // 4), max_frames + 1))
        f = _unit(rng, dim, n_frames)
        text_cls = classes[v] == TEXT
        take = lambda lo, hi: [filler[i] for i in rng.integers(len(filler), size=int(rng.integers(lo, hi)))]  # noqa: E731
        if text_cls:
            ocr[v] = take(6, 13)
            asr[v] = take(20, 41)
            f[0] = _near(rng, probe_vec, rng.uniform(0.9 - 0.4 * noise, 0.95))
        else:
            ocr[v] = take(0, 4)
            asr[v] = take(5, 16)
        if v in relevant_of:
            q, grade = relevant_of[v]
            if text_cls:
                copies = 2 if grade == 2 else 1
                terms = [t for t in query_terms[q] for _ in range(copies)]
                kept = [t for t in terms if rng.random() >= 0.5 * noise] or [query_terms[q][0]]
                half = len(kept) // 2
                ocr[v] += kept[:half]
                asr[v] += kept[half:]
            else:
                top = 1.0 if grade == 2 else 0.9
                f[1] = _near(rng, query_vecs[q], top - noise * rng.uniform(0.0, 0.3))
        frames.append(f)

    # Spurious matches in each video's unreliable modality.
    distractors = {c: [i for i in range(n_videos) if classes[i] == c and i not in relevant_of] for c in (TEXT, VISION)}
    for q in range(n_queries):
        if distractors[VISION]:
            for v in rng.choice(distractors[VISION], size=rng.poisson(noise * spurious_rate)).tolist():
                hits = rng.choice(query_terms[q], size=int(rng.integers(1, terms_per_query + 1)), replace=False)
                asr[v] += hits.tolist()
        if distractors[TEXT]:
            for v in rng.choice(distractors[TEXT], size=rng.poisson(noise * spurious_rate)).tolist():
                f = frames[v]
                f[int(rng.integers(1, len(f)))] = _near(rng, query_vecs[q], rng.uniform(0.65, 0.95))

    for v in range(n_videos):
        rng.shuffle(ocr[v])
        rng.shuffle(asr[v])
    documents = [VideoDocument(video_ids[v], " ".join(ocr[v]), " ".join(asr[v])) for v in range(n_videos)]
    video_embeddings = [FrameEmbeddings.from_raw(video_ids[v], frames[v]) for v in range(n_videos)]
    queries = [QueryRecord(f"q{q:04d}", " ".join(query_terms[q])) for q in range(n_queries)]
    query_embeddings = [FrameEmbeddings.from_raw(f"q{q:04d}", query_vecs[q]) for q in range(n_queries)]
    oracle = WeightTable(
        {video_ids[v]: ORACLE_ALPHA[classes[v]] for v in range(n_videos)}, default_alpha=0.5, probe_text=PROBE_QUERY
    )
    return SyntheticCollection(
        documents=documents,
        video_embeddings=video_embeddings,
        queries=queries,
        query_embeddings=query_embeddings,
        probe=FrameEmbeddings.from_raw("probe", probe_vec),
        qrels=Qrels(judgments),
        oracle_weights=oracle,
        video_class={video_ids[v]: str(classes[v]) for v in range(n_videos)},
    )
