"""``botscope`` command line.

Subcommands map onto pipeline stages so each can be run and checkpointed on
its own; ``report`` runs everything end to end.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, resolve_config
from .graph import build_retweet_graph, pagerank, rank_accounts
from .ingest import TrackingWindow, encode_corpus
from .metrics import TU_NORMALIZATIONS, detect
from .pipeline import (
    OutputDir,
    OutputLockedError,
    PipelineError,
    PipelineOptions,
    edges_csv,
    load_inputs,
    metrics_csv,
    pagerank_csv,
    ranked_csv,
    read_edges_csv,
    read_metrics_csv,
    run_pipeline,
    stage,
)
from .synth import GroundTruth, evaluate_detector, generate_corpus, synth_config_from_mapping

logger = logging.getLogger("botscope")

# flag/config key -> DetectionThresholds field
_THRESHOLD_FLAGS = {
    "tu_threshold": "tu_threshold",
    "tfq_threshold": "tfq_threshold",
    "ffr_threshold": "ffr_threshold",
    "min_tweets": "activity_min_tweets",
    "activity_window_days": "activity_window_days",
}


class UsageError(Exception):
    pass


def _common(parser, inputs=True):
    if inputs:
        parser.add_argument("--input", nargs="+", required=True, metavar="PATH", help="NDJSON corpus file(s), .gz accepted")
    parser.add_argument("--config", help="key = value config file (default: $BOTSCOPE_CONFIG)")
    parser.add_argument("--out", default=".", help="output directory (default: current directory)")
    parser.add_argument("--workers", type=int, help="parallel workers (results are identical for any value)")
    parser.add_argument("-v", "--verbose", action="store_true")


def _detection(parser):
    parser.add_argument("--tu-threshold", type=float, help="fixed TU cut-off instead of the data-derived one")
    parser.add_argument("--tfq-threshold", type=float, help="tweets/hour cut-off (default 25/24)")
    parser.add_argument("--ffr-threshold", type=float, help="friends/followers cut-off (default 3.5)")
    parser.add_argument("--min-tweets", type=int, help="activity gate: tweets required (default 150)")
    parser.add_argument("--activity-window-days", type=int, help="activity gate: span in days (default 14)")
    parser.add_argument("--tu-normalization", choices=TU_NORMALIZATIONS)


def _ingest_opts(parser):
    parser.add_argument("--infer-rt-prefix", action="store_true", default=None, help='treat leading "RT @name:" as a retweet')
    parser.add_argument("--window-start", help="tracking window start, ISO-8601 UTC")
    parser.add_argument("--window-end", help="tracking window end, ISO-8601 UTC")


def _ranking(parser):
    parser.add_argument("--damping", type=float)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iter", type=int)
    parser.add_argument("--threat-percentile", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="botscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="merge, deduplicate and window crawls into one checkpoint")
    _common(p); _ingest_opts(p)
    p.add_argument("--name", default="corpus.ndjson", help="checkpoint file name (.gz to compress)")

    p = sub.add_parser("detect", help="activity gate + TU/TFQ/FFR flags -> metrics.csv")
    _common(p); _ingest_opts(p); _detection(p)

    p = sub.add_parser("graph", help="retweet network -> graph_edges.csv")
    _common(p); _ingest_opts(p)

    p = sub.add_parser("rank", help="PageRank -> pagerank.csv (and ranked.csv with --metrics)")
    _common(p, inputs=False); _ingest_opts(p); _ranking(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", nargs="+", metavar="PATH", help="corpus file(s)")
    src.add_argument("--edges", help="graph_edges.csv from the graph stage")
    p.add_argument("--metrics", help="metrics.csv from the detect stage")

    p = sub.add_parser("report", help="run the whole pipeline")
    _common(p); _ingest_opts(p); _detection(p); _ranking(p)

    p = sub.add_parser("synth", help="generate a labelled synthetic corpus")
    _common(p, inputs=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--window-start")
    p.add_argument("--window-end")
    p.add_argument("--name", default="corpus.ndjson")

    p = sub.add_parser("eval", help="precision/recall of the screening against labels.csv")
    _common(p); _ingest_opts(p); _detection(p)
    p.add_argument("--labels", required=True)
    return parser


def _setting(args, cfg, key, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return cfg.get(key, default)


def _window(args, cfg):
    start = _setting(args, cfg, "window_start")
    end = _setting(args, cfg, "window_end")
    if start is None and end is None:
        return None
    if start is None or end is None:
        raise UsageError("--window-start and --window-end must be given together")
    try:
        return TrackingWindow(start, end)
    except ValueError as exc:
        raise UsageError(f"bad tracking window: {exc}") from exc


def options_from(args, cfg) -> PipelineOptions:
    overrides = {}
    for key, fld in _THRESHOLD_FLAGS.items():
        value = _setting(args, cfg, key)
        if value is not None:
            overrides[fld] = value
    opts = PipelineOptions(threshold_overrides=overrides, window=_window(args, cfg))
    for key in ("tu_normalization", "damping", "tol", "max_iter", "threat_percentile", "infer_rt_prefix", "workers"):
        value = _setting(args, cfg, key)
        if value is not None:
            setattr(opts, key, value)
    if opts.workers < 1:
        raise UsageError("--workers must be at least 1")
    return opts


def _missing_inputs(paths):
    for p in paths or ():
        if not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")


def cmd_ingest(args, cfg):
    opts = options_from(args, cfg)
    corpus = load_inputs(args.input, opts)
    with stage("write"), OutputDir(args.out) as out:
        out.add(args.name, encode_corpus(corpus, args.name.endswith(".gz")))
    print(f"{len(corpus.tweets)} tweets from {len(corpus.tweets_by_user)} users "
          f"({corpus.malformed_count} malformed lines skipped) -> {Path(args.out) / args.name}")


def cmd_detect(args, cfg):
    opts = options_from(args, cfg)
    corpus = load_inputs(args.input, opts)
    with stage("detect"):
        active, thresholds, metrics = detect(corpus, opts.threshold_overrides, opts.tu_normalization, opts.workers)
    with stage("write"), OutputDir(args.out) as out:
        out.add("metrics.csv", metrics_csv(metrics))
        out.add("thresholds.json", json.dumps(thresholds.as_dict() if thresholds else None, indent=2, sort_keys=True) + "\n")
    flagged = sum(m.bot_like for m in metrics)
    print(f"{len(active)} highly active, {flagged} flagged")


def cmd_graph(args, cfg):
    opts = options_from(args, cfg)
    corpus = load_inputs(args.input, opts)
    with stage("graph"):
        graph = build_retweet_graph(corpus)
    with stage("write"), OutputDir(args.out) as out:
        out.add("graph_edges.csv", edges_csv(graph))
    print(f"{len(graph.nodes)} nodes, {len(graph.edges)} edges")


def cmd_rank(args, cfg):
    opts = options_from(args, cfg)
    if args.edges:
        _missing_inputs([args.edges])
        with stage("graph"):
            graph = read_edges_csv(args.edges)
    else:
        _missing_inputs(args.input)
        corpus = load_inputs(args.input, opts)
        with stage("graph"):
            graph = build_retweet_graph(corpus)
    if not graph.nodes:
        raise PipelineError("rank", ValueError("retweet graph is empty"))
    with stage("rank"):
        result = pagerank(graph, opts.damping, opts.tol, opts.max_iter)
    reports = None
    if args.metrics:
        _missing_inputs([args.metrics])
        with stage("assess"):
            reports = rank_accounts(read_metrics_csv(args.metrics), result, graph, opts.threat_percentile)
    with stage("write"), OutputDir(args.out) as out:
        out.add("pagerank.csv", pagerank_csv(result))
        if reports is not None:
            out.add("ranked.csv", ranked_csv(reports))
    state = "converged" if result.converged else "NOT converged"
    print(f"pagerank {state} after {result.iterations} iterations (residual {result.residual:.3g})")


def cmd_report(args, cfg):
    opts = options_from(args, cfg)
    summary = run_pipeline(args.input, opts, args.out)
    print(f"{summary.highly_active_count} highly active accounts, "
          f"{summary.flagged_share_percent:.1f}% ({summary.flagged_count} accounts) flagged, "
          f"{summary.flagged_tweet_count} tweets by flagged accounts")
    print("verdicts: " + ", ".join(f"{k}={v}" for k, v in summary.verdict_counts.items()))


def cmd_synth(args, cfg):
    values = dict(cfg)
    for key in ("seed", "window_start", "window_end"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    try:
        config = synth_config_from_mapping(values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with stage("synth"):
        corpus, truth = generate_corpus(config)
    out = Path(args.out)
    with stage("write"), OutputDir(out) as od:
        od.add(args.name, encode_corpus(corpus, args.name.endswith(".gz")))
        od.add("labels.csv", truth.to_csv())
    print(f"{len(corpus.tweets)} tweets, {len(truth.labels)} users ({len(truth.positives)} bots) -> {out}")


def cmd_eval(args, cfg):
    _missing_inputs([args.labels])
    opts = options_from(args, cfg)
    corpus = load_inputs(args.input, opts)
    with stage("eval"):
        truth = GroundTruth.read(args.labels)
        thresholds = None
        if opts.threshold_overrides:
            _, thresholds, _ = detect(corpus, opts.threshold_overrides, opts.tu_normalization)
        cm = evaluate_detector(corpus, truth, thresholds, opts.tu_normalization)
    with stage("write"), OutputDir(args.out) as out:
        out.add("eval.json", json.dumps(cm.as_dict(), indent=2, sort_keys=True) + "\n")
    print(f"tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}")
    print(f"precision={cm.precision:.4f} recall={cm.recall:.4f} f1={cm.f1:.4f}")


COMMANDS = {
    "ingest": cmd_ingest,
    "detect": cmd_detect,
    "graph": cmd_graph,
    "rank": cmd_rank,
    "report": cmd_report,
    "synth": cmd_synth,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args.config)
        _missing_inputs(getattr(args, "input", None))
        COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError, OSError) as exc:
        if isinstance(exc, OSError) and not isinstance(exc, FileNotFoundError):
            print(f"botscope: {exc}", file=sys.stderr)
            return 1
        parser.error(str(exc))
    except OutputLockedError as exc:
        print(f"botscope: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        if isinstance(exc.cause, OutputLockedError):
            print(f"botscope: {exc.cause}", file=sys.stderr)
        else:
            print(f"botscope: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
