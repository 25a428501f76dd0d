"""Readers and writers for the on-disk formats.

Formats:

* TREC run: ``qid Q0 doc_id rank score run_tag`` (whitespace separated)
* TREC qrels: ``qid iter doc_id grade``
* queries: ``qid<TAB>text``
* documents: JSON lines with ``doc_id``, ``ocr``, ``asr`` and optional
  ``mt_ocr`` / ``mt_asr``
* embedding store: JSON manifest plus a raw little-endian float32 payload,
  row-major, videos concatenated in manifest order
* weights: ``doc_id<TAB>alpha`` with a ``#default_alpha=<v>`` header

Readers reject malformed input instead of repairing it, and every error
carries a ``path:line`` (or byte offset) location. All text is strict UTF-8.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DataError
from .model import (
    NORM_TOLERANCE,
    FrameEmbeddings,
    QueryRecord,
    Qrels,
    RankedList,
    VideoDocument,
    WeightTable,
    canonicalize,
)

__all__ = [
    "read_run",
    "write_run",
    "read_qrels",
    "write_qrels",
    "read_queries",
    "write_queries",
    "read_documents",
    "write_documents",
    "read_embeddings",
    "write_embeddings",
    "read_weights",
    "write_weights",
    "SCORE_DECIMALS",
]

SCORE_DECIMALS = 6
DEFAULT_RUN_TAG = "rankfuse"


def _read_lines(path):
    """Yield ``(line_number, line)`` from a strict UTF-8 text file."""
    path = Path(path)
    data = path.read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"invalid UTF-8 ({exc.reason})", f"{path}:byte {exc.start}") from None
    if text.startswith("\ufeff"):
        text = text[1:]
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for number, line in enumerate(lines, start=1):
        yield number, line.rstrip("\r")


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _check_token(value: str, what: str) -> str:
    if not value or any(c.isspace() for c in value):
        raise DataError(f"{what} {value!r} is empty or contains whitespace")
    return value


# --- runs -------------------------------------------------------------------


def read_run(path) -> list[RankedList]:
    """Parse a TREC run file into canonicalized lists, one per qid.

    Lists come back in order of each qid's first appearance. File ranks are
    validated as integers but the order is rebuilt from the scores.
    """
    groups: dict[str, list] = {}
    tags: dict[str, str] = {}
    seen: set = set()
    for number, line in _read_lines(path):
        if not line.strip():
            continue
        where = f"{path}:{number}"
        cols = line.split()
        if len(cols) != 6:
            raise DataError(f"expected 6 columns, found {len(cols)}", where)
        qid, _q0, doc_id, rank, score, tag = cols
        try:
            rank_value = int(rank)
        except ValueError:
            raise DataError(f"unparsable rank {rank!r}", where) from None
        if rank_value < 1:
            raise DataError(f"rank must be >= 1, got {rank_value}", where)
        try:
            score_value = float(score)
        except ValueError:
            raise DataError(f"unparsable score {score!r}", where) from None
        if not math.isfinite(score_value):
            raise DataError(f"non-finite score {score!r} for doc_id {doc_id!r}", where)
        if (qid, doc_id) in seen:
            raise DataError(f"duplicate entry for ({qid}, {doc_id})", where)
        seen.add((qid, doc_id))
        groups.setdefault(qid, []).append((doc_id, score_value))
        tags.setdefault(qid, tag)
    return [canonicalize(pairs, qid=qid, run_tag=tags[qid]) for qid, pairs in groups.items()]


def format_score(score: float) -> str:
    return f"{score:.{SCORE_DECIMALS}f}"


def write_run(lists: Iterable[RankedList], path, run_tag: str | None = None) -> None:
    """Write lists in TREC run format with 6-decimal scores.

    Entries are written in canonical order of their *printed* scores, so two
    documents whose scores differ below the print precision are ordered by
    doc_id. That makes the written file a fixed point of read-then-write.
    """
    out = []
    for ranked in lists:
        qid = _check_token(ranked.qid, "qid")
        tag = _check_token(run_tag or ranked.run_tag or DEFAULT_RUN_TAG, "run_tag")
        printed = [(d, format_score(s), float(format_score(s))) for d, s in zip(ranked.doc_ids, ranked.scores)]
        printed.sort(key=lambda p: (-p[2], p[0]))
        for rank, (doc_id, text, _) in enumerate(printed, start=1):
            _check_token(doc_id, "doc_id")
            out.append(f"{qid} Q0 {doc_id} {rank} {text} {tag}\n")
    _atomic_write_text(path, "".join(out))


# --- qrels ------------------------------------------------------------------


def read_qrels(path) -> Qrels:
    triples = []
    seen = set()
    for number, line in _read_lines(path):
        if not line.strip():
            continue
        where = f"{path}:{number}"
        cols = line.split()
        if len(cols) != 4:
            raise DataError(f"expected 4 columns, found {len(cols)}", where)
        qid, _iter, doc_id, grade = cols
        try:
            grade_value = int(grade)
        except ValueError:
            raise DataError(f"unparsable grade {grade!r}", where) from None
        if grade_value < 0:
            raise DataError(f"negative grade {grade_value}", where)
        if (qid, doc_id) in seen:
            raise DataError(f"duplicate judgment for ({qid}, {doc_id})", where)
        seen.add((qid, doc_id))
        triples.append((qid, doc_id, grade_value))
    return Qrels(triples)


def write_qrels(qrels: Qrels, path) -> None:
    lines = [
        f"{_check_token(q, 'qid')} 0 {_check_token(d, 'doc_id')} {g}\n" for q, d, g in qrels.items()
    ]
    _atomic_write_text(path, "".join(lines))


# --- queries ----------------------------------------------------------------


def read_queries(path) -> list[QueryRecord]:
    queries = []
    seen = set()
    for number, line in _read_lines(path):
        if not line.strip():
            continue
        where = f"{path}:{number}"
        qid, sep, text = line.partition("\t")
        if not sep:
            raise DataError("expected 'qid<TAB>text'", where)
        qid = qid.strip()
        if qid in seen:
            raise DataError(f"duplicate qid {qid!r}", where)
        seen.add(qid)
        try:
            queries.append(QueryRecord(qid, text.strip()))
        except DataError as exc:
            raise DataError(str(exc), where) from None
    return queries


def write_queries(queries: Iterable[QueryRecord], path) -> None:
    lines = []
    for q in queries:
        if "\t" in q.text or "\n" in q.text:
            raise DataError(f"query {q.qid!r} text contains a tab or newline")
        lines.append(f"{_check_token(q.qid, 'qid')}\t{q.text}\n")
    _atomic_write_text(path, "".join(lines))


# --- documents --------------------------------------------------------------


def _optional_str(obj, key, where):
    value = obj.get(key)
    if value is not None and not isinstance(value, str):
        raise DataError(f"field {key!r} must be a string", where)
    return value


def read_documents(path) -> list[VideoDocument]:
    docs = []
    seen = set()
    for number, line in _read_lines(path):
        if not line.strip():
            continue
        where = f"{path}:{number}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed JSON ({exc.msg})", where) from None
        if not isinstance(obj, dict):
            raise DataError("expected a JSON object", where)
        doc_id = obj.get("doc_id")
        if not isinstance(doc_id, str) or not doc_id:
            raise DataError("missing or empty doc_id", where)
        if doc_id in seen:
            raise DataError(f"duplicate doc_id {doc_id!r}", where)
        seen.add(doc_id)
        docs.append(
            VideoDocument(
                doc_id,
                _optional_str(obj, "ocr", where) or "",
                _optional_str(obj, "asr", where) or "",
                _optional_str(obj, "mt_ocr", where),
                _optional_str(obj, "mt_asr", where),
            )
        )
    return docs


def write_documents(docs: Iterable[VideoDocument], path) -> None:
    lines = []
    for d in docs:
        obj = {"doc_id": d.doc_id, "ocr": d.ocr_text, "asr": d.asr_text}
        if d.mt_ocr is not None:
            obj["mt_ocr"] = d.mt_ocr
        if d.mt_asr is not None:
            obj["mt_asr"] = d.mt_asr
        lines.append(json.dumps(obj, ensure_ascii=False) + "\n")
    _atomic_write_text(path, "".join(lines))


# --- embedding store --------------------------------------------------------


def read_manifest(path) -> dict:
    try:
        text = Path(path).read_bytes().decode("utf-8")
        manifest = json.loads(text)
    except UnicodeDecodeError as exc:
        raise DataError(f"invalid UTF-8 ({exc.reason})", f"{path}:byte {exc.start}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON ({exc.msg})", f"{path}:{exc.lineno}") from None
    if not isinstance(manifest, dict):
        raise DataError("manifest must be a JSON object", str(path))
    dim = manifest.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim <= 0:
        raise DataError(f"dim must be a positive integer, got {dim!r}", str(path))
    if not isinstance(manifest.get("normalized"), bool):
        raise DataError("normalized must be a boolean", str(path))
    entries = manifest.get("entries")
    if not isinstance(entries, list):
        raise DataError("entries must be a list", str(path))
    seen = set()
    for i, entry in enumerate(entries):
        where = f"{path}:entries[{i}]"
        if not isinstance(entry, dict):
            raise DataError("entry must be an object", where)
        doc_id, n = entry.get("doc_id"), entry.get("n_frames")
        if not isinstance(doc_id, str) or not doc_id:
            raise DataError("missing or empty doc_id", where)
        if doc_id in seen:
            raise DataError(f"duplicate doc_id {doc_id!r}", where)
        seen.add(doc_id)
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise DataError(f"n_frames must be a positive integer, got {n!r}", where)
    return manifest


def load_embedding_matrix(manifest_path, vectors_path):
    """Return ``(manifest, matrix, offsets)`` with rows normalized and read-only.

    ``offsets[i]:offsets[i + 1]`` are the rows of manifest entry ``i``.
    """
    manifest = read_manifest(manifest_path)
    dim = manifest["dim"]
    counts = np.array([e["n_frames"] for e in manifest["entries"]], dtype=np.int64)
    expected = int(counts.sum()) * dim * 4
    actual = os.path.getsize(vectors_path)
    if actual != expected:
        raise DataError(
            f"vector payload is {actual} bytes, manifest implies {expected} bytes",
            str(vectors_path),
        )
    matrix = np.fromfile(vectors_path, dtype="<f4").astype(np.float32, copy=False)
    matrix = matrix.reshape(-1, dim)
    if not np.all(np.isfinite(matrix)):
        row = int(np.flatnonzero(~np.all(np.isfinite(matrix), axis=1))[0])
        raise DataError(f"non-finite value in row {row}", f"{vectors_path}:byte {row * dim * 4}")
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix, dtype=np.float64))
    if manifest["normalized"]:
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
        if bad.size:
            row = int(bad[0])
            raise DataError(
                f"row {row} has norm {norms[row]:.6f} but manifest says normalized",
                f"{vectors_path}:byte {row * dim * 4}",
            )
    else:
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            row = int(zero[0])
            raise DataError(f"row {row} has zero norm", f"{vectors_path}:byte {row * dim * 4}")
        matrix = (matrix / norms[:, None]).astype(np.float32)
    matrix.flags.writeable = False
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return manifest, matrix, offsets


def read_embeddings(manifest_path, vectors_path) -> list[FrameEmbeddings]:
    manifest, matrix, offsets = load_embedding_matrix(manifest_path, vectors_path)
    return [
        FrameEmbeddings(e["doc_id"], matrix[offsets[i] : offsets[i + 1]])
        for i, e in enumerate(manifest["entries"])
    ]


def write_embeddings(
    stores: Sequence[FrameEmbeddings], manifest_path, vectors_path, source_note: str = ""
) -> None:
    if not stores:
        raise DataError("cannot write an empty embedding store")
    dim = stores[0].dim
    seen = set()
    for s in stores:
        if s.dim != dim:
            raise DataError(f"{s.doc_id!r} has dim {s.dim}, store dim is {dim}")
        if s.doc_id in seen:
            raise DataError(f"duplicate doc_id {s.doc_id!r}")
        seen.add(s.doc_id)
    manifest = {
        "dim": dim,
        "normalized": True,
        "entries": [{"doc_id": s.doc_id, "n_frames": s.n_frames} for s in stores],
        "source_note": source_note,
    }
    payload = np.concatenate([s.vectors for s in stores]).astype("<f4", copy=False)
    vectors_path = Path(vectors_path)
    tmp = vectors_path.with_name(vectors_path.name + ".tmp")
    payload.tofile(tmp)
    os.replace(tmp, vectors_path)
    _atomic_write_text(manifest_path, json.dumps(manifest, ensure_ascii=False, indent=1) + "\n")


# --- weights ----------------------------------------------------------------


def read_weights(path) -> WeightTable:
    default = None
    probe = None
    alphas = {}
    for number, line in _read_lines(path):
        where = f"{path}:{number}"
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key == "default_alpha":
                try:
                    default = float(value)
                except ValueError:
                    raise DataError(f"unparsable default_alpha {value!r}", where) from None
            elif key == "probe":
                probe = value
            continue
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise DataError(f"expected 2 tab-separated columns, found {len(cols)}", where)
        doc_id, alpha = cols
        try:
            value = float(alpha)
        except ValueError:
            raise DataError(f"unparsable alpha {alpha!r}", where) from None
        if not (0.0 <= value <= 1.0):
            raise DataError(f"alpha {value!r} outside [0, 1]", where)
        if doc_id in alphas:
            raise DataError(f"duplicate doc_id {doc_id!r}", where)
        alphas[doc_id] = value
    if default is None:
        raise DataError("missing '#default_alpha=<v>' header", f"{path}:1")
    try:
        return WeightTable(alphas, default_alpha=default, probe_text=probe)
    except DataError as exc:
        raise DataError(str(exc), str(path)) from None


def write_weights(table: WeightTable, path) -> None:
    lines = [f"#default_alpha={float(table.default_alpha)!r}\n"]
    if table.probe_text is not None:
        lines.append(f"#probe={table.probe_text}\n")
    for doc_id, alpha in table.alphas.items():
        lines.append(f"{_check_token(doc_id, 'doc_id')}\t{float(alpha)!r}\n")
    _atomic_write_text(path, "".join(lines))
