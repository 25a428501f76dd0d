"""``rankfuse`` command-line interface.

Exit status: 0 success, 1 usage error, 2 data or validation error,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
import time
import traceback
from pathlib import Path

from . import __version__
from .calibrate import ALPHA_MODES, PROBE_QUERY, ProbeCalibrator
from .config import load_config
from .dense import DenseIndex, DenseRetriever
from .evaluation import evaluate_run, read_report, significance_rows, write_report, write_significance
from .exceptions import DataError
from .fuse import RankFusion
from .io import (
    read_documents,
    read_embeddings,
    read_qrels,
    read_queries,
    read_run,
    read_weights,
    write_run,
    write_weights,
)
from .lexical import FIELD_SPECS, BM25Retriever
from .model import FUSION_METHODS

log = logging.getLogger("rankfuse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _metrics(value: str) -> list[str]:
    return [m.strip() for m in value.split(",") if m.strip()]


def _echo(*parts):
    print(*parts, flush=True)


# --- commands -----------------------------------------------------------------


def cmd_index_text(args) -> int:
    docs = read_documents(args.docs)
    started = time.perf_counter()

    def progress(n):
        _echo(f"indexed {n} documents ({time.perf_counter() - started:.2f} s)")

    est = BM25Retriever(field=args.field, k1=args.k1, b=args.b)
    est.fit(docs, progress=progress)
    est.save(args.out)
    elapsed = time.perf_counter() - started
    _echo(
        f"indexed {len(docs)} documents, {len(est.index_.vocabulary)} terms, field={args.field} "
        f"in {elapsed:.2f} s ({1000.0 * elapsed / len(docs):.3f} ms/doc)"
    )
    return EXIT_OK


def cmd_index_dense(args) -> int:
    started = time.perf_counter()
    index = DenseIndex.load(args.manifest, args.vectors)
    index.save_dir(args.out, source_note=args.note)
    elapsed = time.perf_counter() - started
    _echo(
        f"indexed {index.n_videos} videos, {index.matrix.shape[0]} frames, dim {index.dim} in {elapsed:.2f} s"
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    index = DenseIndex.load_dir(args.index)
    probes = read_embeddings(args.probe_manifest, args.probe_vectors)
    if len(probes) != 1:
        raise DataError(f"probe store must hold exactly one entry, has {len(probes)}")
    cal = ProbeCalibrator(args.mode, args.fixed_alpha, args.default_alpha, args.probe_text)
    cal.fit(index, probes[0])
    write_weights(cal.weights_, args.out)
    alphas = list(cal.weights_.alphas.values())
    _echo(f"wrote {len(alphas)} weights: mean alpha {sum(alphas) / len(alphas):.4f}")
    return EXIT_OK


def _run_text(index_dir, queries, top_n):
    est = BM25Retriever.load(index_dir, top_n=top_n)
    runs, times = [], []
    for q in queries:
        t0 = time.perf_counter()
        runs.append(est.search(q))
        times.append(time.perf_counter() - t0)
    return runs, times


def _run_vision(index_dir, query_stores, top_n):
    est = DenseRetriever.load(index_dir, top_n=top_n)
    runs, times = [], []
    for q in query_stores:
        if q.n_frames != 1:
            raise DataError(f"query {q.doc_id!r} must have exactly one vector, has {q.n_frames}")
        t0 = time.perf_counter()
        runs.append(est.search(q.vectors[0], q.doc_id))
        times.append(time.perf_counter() - t0)
    return runs, times


def _mean_ms(times) -> float:
    return 1000.0 * sum(times) / len(times) if times else 0.0


def cmd_search(args) -> int:
    if not args.text_index and not args.dense_index:
        raise UsageError("give --text-index and/or --dense-index")
    if args.text_index:
        if not (args.queries and args.out_text):
            raise UsageError("--text-index needs --queries and --out-text")
        runs, times = _run_text(args.text_index, read_queries(args.queries), args.top_n)
        write_run(runs, args.out_text)
        _echo(f"text: {len(runs)} queries, mean latency {_mean_ms(times):.3f} ms")
    if args.dense_index:
        if not (args.query_manifest and args.query_vectors and args.out_vision):
            raise UsageError("--dense-index needs --query-manifest, --query-vectors and --out-vision")
        stores = read_embeddings(args.query_manifest, args.query_vectors)
        runs, times = _run_vision(args.dense_index, stores, args.top_n)
        write_run(runs, args.out_vision)
        _echo(f"vision: {len(runs)} queries, mean latency {_mean_ms(times):.3f} ms")
    return EXIT_OK


def cmd_fuse(args) -> int:
    weights = None
    if args.weights:
        if args.method != "wrrf":
            raise UsageError("--weights only applies to --method wrrf")
        weights = read_weights(args.weights)
        if args.default_alpha is not None:
            weights = weights.with_default(args.default_alpha)
    default_alpha = 0.5 if args.default_alpha is None else args.default_alpha
    k = args.k
    fusion = RankFusion(args.method, k, args.depth, args.output_size, default_alpha).fit(weights)
    fused = fusion.predict(read_run(args.text), read_run(args.vision))
    write_run(fused, args.out)
    _echo(f"fused {len(fused)} queries with {args.method} (k={k:g})")
    return EXIT_OK


def cmd_eval(args) -> int:
    reports = evaluate_run(read_run(args.run), read_qrels(args.qrels), args.metrics)
    if args.out:
        write_report(reports, args.out)
    for name, rep in reports.items():
        _echo(
            f"{name}\t{rep.mean:.4f}\t(queries={len(rep.per_query)}, "
            f"skipped_no_relevant={rep.n_skipped_no_relevant}, unjudged={rep.n_skipped_unjudged})"
        )
    return EXIT_OK


def _named_paths(items) -> dict[str, str]:
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"expected NAME=PATH, got {item!r}")
        if name in out:
            raise UsageError(f"system name {name!r} given twice")
        out[name] = path
    return out


def _print_rows(rows):
    for r in rows:
        mark = "*" if r["significant"] else " "
        _echo(
            f"{r['metric']}\t{r['system_a']} {r['mean_a']:.4f} vs {r['system_b']} {r['mean_b']:.4f}"
            f"\tt={r['t']:.4g}\tp={r['p']:.4g}\tp_adj={r['p_adjusted']:.4g} {mark}"
        )


def cmd_sigtest(args) -> int:
    named = _named_paths(args.reports)
    if len(named) < 2:
        raise UsageError("need at least two NAME=PATH reports")
    systems = {name: read_report(path) for name, path in named.items()}
    rows = significance_rows(systems, args.m, args.level)
    if args.out:
        write_significance(rows, args.out)
    _print_rows(rows)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import SearchService, make_server

    overrides = {"serve": {}}
    if args.host is not None:
        overrides["serve"]["host"] = args.host
    if args.port is not None:
        overrides["serve"]["port"] = args.port
    cfg = load_config(args.config, overrides)
    service = SearchService(cfg)
    server = make_server(service, cfg["serve"]["host"], cfg["serve"]["port"])
    host, port = server.server_address[:2]
    _echo(f"listening on http://{host}:{port} (loading indexes)")
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        service.load()
        _echo("indexes loaded")
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import generate

    coll = generate(
        seed=args.seed,
        n_videos=args.n_videos,
        n_queries=args.n_queries,
        dim=args.dim,
        text_reliable_fraction=args.text_fraction,
        noise=args.noise,
    )
    paths = coll.save(args.out)
    _echo(f"wrote {len(coll.documents)} videos and {len(coll.queries)} queries to {args.out}")
    for key, path in paths.items():
        _echo(f"  {key}: {path.name}")
    return EXIT_OK


def run_experiment(cfg: dict) -> dict:
    """Run every configured system, evaluate, and test all pairs.

    Returns ``{"reports": {name: {metric: EvalReport}}, "significance": rows}``.
    Outputs go to ``experiment.output_dir``.
    """
    exp = cfg["experiment"]
    systems = exp["systems"]
    if not systems:
        raise DataError("experiment.systems is empty")
    out = Path(exp["output_dir"])
    (out / "runs").mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    qrels = read_qrels(exp["qrels"])
    depth = cfg["fusion"]["depth"]

    base: dict[str, list] = {}

    def modality_run(modality):
        if modality not in base:
            if modality == "text":
                if not (cfg["indexes"]["text"] and exp["queries"]):
                    raise DataError("text runs need indexes.text and experiment.queries")
                base[modality], _ = _run_text(cfg["indexes"]["text"], read_queries(exp["queries"]), depth)
            elif modality == "vision":
                if not (cfg["indexes"]["dense"] and exp["query_manifest"] and exp["query_vectors"]):
                    raise DataError("vision runs need indexes.dense, experiment.query_manifest and query_vectors")
                stores = read_embeddings(exp["query_manifest"], exp["query_vectors"])
                base[modality], _ = _run_vision(cfg["indexes"]["dense"], stores, depth)
            else:
                raise DataError(f"unknown modality {modality!r}; expected text or vision")
        return base[modality]

    default_weights = read_weights(cfg["weights"]) if cfg["weights"] else None
    reports = {}
    for spec in systems:
        if not isinstance(spec, dict) or "name" not in spec:
            raise DataError(f"each system needs a name, got {spec!r}")
        name = str(spec["name"])
        if name in reports:
            raise DataError(f"system name {name!r} given twice")
        if "modality" in spec:
            run = [r.head(exp["top_n"]) for r in modality_run(spec["modality"])]
        elif "fusion" in spec:
            if not isinstance(spec["fusion"], dict) or "k" not in spec["fusion"]:
                raise DataError(f"fusion system {name!r} must set k explicitly")
            params = {**cfg["fusion"], **spec["fusion"]}
            weights = default_weights
            if "weights" in spec:
                weights = read_weights(_resolve(cfg, spec["weights"])) if spec["weights"] else None
            if weights is not None:
                weights = weights.with_default(params["default_alpha"])
            fusion = RankFusion(params["method"], params["k"], params["depth"], exp["top_n"], params["default_alpha"])
            fusion.set_params(run_tag=name)
            run = fusion.fit(weights).predict(modality_run("text"), modality_run("vision"))
        else:
            raise DataError(f"system {name!r} needs either 'modality' or 'fusion'")
        write_run(run, out / "runs" / f"{name}.run", run_tag=name)
        reports[name] = evaluate_run(run, qrels, exp["metrics"])
        write_report(reports[name], out / "reports" / f"{name}.tsv")

    sig = exp["significance"]
    n_pairs = len(systems) * (len(systems) - 1) // 2 * len(exp["metrics"])
    m = sig["m"] if sig["m"] is not None else max(1, n_pairs)
    rows = significance_rows(reports, m, sig["level"]) if len(reports) > 1 else []
    write_significance(rows, out / "significance.tsv")
    summary = {name: {metric: rep.mean for metric, rep in reps.items()} for name, reps in reports.items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return {"reports": reports, "significance": rows, "m": m}


def _resolve(cfg, path) -> str:
    root = cfg.get("_root")
    return str(Path(root, path)) if root else str(path)


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    cfg["_root"] = str(Path(args.config).resolve().parent)
    result = run_experiment(cfg)
    metrics = cfg["experiment"]["metrics"]
    _echo("system\t" + "\t".join(metrics))
    for name, reps in result["reports"].items():
        _echo(name + "\t" + "\t".join(f"{reps[m].mean:.4f}" for m in metrics))
    _echo(f"significance (Bonferroni m={result['m']}):")
    _print_rows(result["significance"])
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rankfuse", description="Multimodal video rank fusion and evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging and tracebacks")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("index-text", help="build a BM25 index from a JSONL document file")
    s.add_argument("--docs", required=True, help="JSONL with doc_id, ocr, asr[, mt_ocr, mt_asr]")
    s.add_argument("--field", choices=FIELD_SPECS, default="joint")
    s.add_argument("--k1", type=float, default=0.9)
    s.add_argument("--b", type=float, default=0.4)
    s.add_argument("--out", required=True, help="index directory")
    s.set_defaults(func=cmd_index_text)

    s = sub.add_parser("index-dense", help="validate an embedding store and write a dense index")
    s.add_argument("--manifest", required=True)
    s.add_argument("--vectors", required=True)
    s.add_argument("--note", default="", help="source note stored in the manifest")
    s.add_argument("--out", required=True, help="index directory")
    s.set_defaults(func=cmd_index_dense)

    s = sub.add_parser("calibrate", help="derive per-video text weights from a probe embedding")
    s.add_argument("--index", required=True, help="dense index directory")
    s.add_argument("--probe-manifest", required=True)
    s.add_argument("--probe-vectors", required=True)
    s.add_argument("--mode", choices=ALPHA_MODES, default="minmax")
    s.add_argument("--fixed-alpha", type=float, default=0.5)
    s.add_argument("--default-alpha", type=float, default=0.5)
    s.add_argument("--probe-text", default=PROBE_QUERY)
    s.add_argument("--out", required=True, help="weights file")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("search", help="run queries against the lexical and/or dense index")
    s.add_argument("--text-index")
    s.add_argument("--queries", help="TSV of qid<TAB>text")
    s.add_argument("--out-text")
    s.add_argument("--dense-index")
    s.add_argument("--query-manifest")
    s.add_argument("--query-vectors")
    s.add_argument("--out-vision")
    s.add_argument("--top-n", type=int, default=1000)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("fuse", help="fuse a text run and a vision run")
    s.add_argument("--text", required=True, help="text-modality run file")
    s.add_argument("--vision", required=True, help="vision-modality run file")
    s.add_argument("--method", choices=FUSION_METHODS, default="wrrf")
    s.add_argument("--k", type=float, default=0.0, help="rank constant for either method (default 0)")
    s.add_argument("--weights", help="per-video weights file (wrrf)")
    s.add_argument("--default-alpha", type=float)
    s.add_argument("--depth", type=int, default=1000)
    s.add_argument("--output-size", type=int, default=1000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("eval", help="score a run against qrels")
    s.add_argument("--run", required=True)
    s.add_argument("--qrels", required=True)
    s.add_argument("--metrics", type=_metrics, default=["ndcg@10", "recall@1", "recall@10"],
                   help="comma-separated, e.g. ndcg@10,recall@1")
    s.add_argument("--out", help="per-query report TSV")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sigtest", help="paired t-tests between per-query reports")
    s.add_argument("reports", nargs="+", metavar="NAME=PATH")
    s.add_argument("--m", type=int, required=True, help="number of tests for Bonferroni")
    s.add_argument("--level", type=float, default=0.05)
    s.add_argument("--out", help="significance TSV")
    s.set_defaults(func=cmd_sigtest)

    s = sub.add_parser("serve", help="HTTP search service")
    s.add_argument("--config", required=True)
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("synth", help="write a seeded synthetic collection")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-videos", type=int, default=1000)
    s.add_argument("--n-queries", type=int, default=100)
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--text-fraction", type=float, default=0.5)
    s.add_argument("--noise", type=float, default=0.5)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("experiment", help="run a configured grid of systems end to end")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rankfuse {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"rankfuse {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"rankfuse {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        if args.verbose:
            traceback.print_exc()
        print(f"rankfuse {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
