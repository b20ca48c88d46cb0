"""End-to-end run and the CSV/JSON report formats."""

from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
import math
import os
import shutil
import tempfile
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from filelock import FileLock, Timeout

from .graph import (
    DEFAULT_DAMPING,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_THREAT_PERCENTILE,
    DEFAULT_TOLERANCE,
    PageRankResult,
    RetweetGraph,
    Verdict,
    build_retweet_graph,
    pagerank,
    percentile_ranks,
    rank_accounts,
)
from .ingest import Corpus, TrackingWindow, filter_window, parse_corpus_files
from .metrics import UserMetrics, detect

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOCK_NAME = ".botscope.lock"

METRICS_COLUMNS = [
    "user_id", "screen_name", "tweet_count", "tu", "tfq", "ffr",
    "tu_flag", "tfq_flag", "ffr_flag", "bot_like",
]
RANKED_COLUMNS = ["user_id", "bot_like", "pagerank", "percentile", "verdict", "self_retweets"]


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class OutputLockedError(RuntimeError):
    pass


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


@dataclass
class PipelineOptions:
    threshold_overrides: dict = field(default_factory=dict)
    tu_normalization: str = "none"
    damping: float = DEFAULT_DAMPING
    tol: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITERATIONS
    threat_percentile: float = DEFAULT_THREAT_PERCENTILE
    infer_rt_prefix: bool = False
    window: Optional[TrackingWindow] = None
    workers: int = 1


@dataclass
class PipelineSummary:
    total_users: int = 0
    total_tweets: int = 0
    highly_active_count: int = 0
    flagged_count: int = 0
    flagged_share_percent: float = 0.0
    flagged_tweet_count: int = 0
    thresholds: Optional[dict] = None
    verdict_counts: dict = field(default_factory=lambda: {v.value: 0 for v in Verdict})
    malformed_count: int = 0
    graph_nodes: int = 0
    graph_edges: int = 0
    pagerank_iterations: int = 0
    pagerank_converged: Optional[bool] = None

    def as_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}


def flagged_share_percent(flagged: int, active: int) -> float:
    return round(100.0 * flagged / active, 1) if active else 0.0


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def metrics_csv(metrics: Sequence[UserMetrics]) -> str:
    return _csv(METRICS_COLUMNS, (
        (m.user_id, m.screen_name, m.tweet_count, m.tu, m.tfq, m.ffr,
         m.tu_flag, m.tfq_flag, m.ffr_flag, m.bot_like)
        for m in metrics
    ))


def read_metrics_csv(path) -> list:
    def flag(v):
        return v == "true"

    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ffr = row["ffr"]
            out.append(UserMetrics(
                user_id=int(row["user_id"]),
                screen_name=row["screen_name"],
                tweet_count=int(row["tweet_count"]),
                distinct_text_count=round(float(row["tu"]) * int(row["tweet_count"])),
                tu=float(row["tu"]),
                tfq=float(row["tfq"]),
                ffr=None if ffr == "" else float(ffr),
                tu_flag=flag(row["tu_flag"]),
                tfq_flag=flag(row["tfq_flag"]),
                ffr_flag=flag(row["ffr_flag"]),
            ))
    return out


def ranked_csv(reports) -> str:
    return _csv(RANKED_COLUMNS, (
        (r.user_id, r.bot_like, r.pagerank, r.percentile, r.verdict.value, r.self_retweets)
        for r in reports
    ))


def edges_csv(graph: RetweetGraph) -> str:
    return _csv(["source", "target", "weight"], ((s, t, w) for (s, t), w in graph.edges.items()))


def read_edges_csv(path) -> RetweetGraph:
    edges = {}
    nodes = set()
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            s, t = int(row["source"]), int(row["target"])
            edges[(s, t)] = edges.get((s, t), 0) + int(row["weight"])
            nodes.update((s, t))
    return RetweetGraph(tuple(nodes), edges)


def pagerank_csv(result: PageRankResult) -> str:
    pct = percentile_ranks(result)
    return _csv(["user_id", "score", "percentile"], ((u, s, pct[u]) for u, s in sorted(result.scores.items())))


def summary_json(summary: PipelineSummary) -> str:
    return json.dumps(summary.as_dict(), indent=2, sort_keys=True) + "\n"


class OutputDir:
    """Stage files in a scratch directory and publish them only on success.

    Holds a lock on the directory for the duration; a second writer fails fast.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._files: dict[str, bytes] = {}

    def add(self, name: str, content):
        self._files[name] = content.encode("utf-8") if isinstance(content, str) else content

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.path / LOCK_NAME))
        try:
            self._lock.acquire(timeout=0)
        except Timeout:
            raise OutputLockedError(f"{self.path} is in use by another run") from None
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self._publish()
        finally:
            self._lock.release()
        return False

    def _publish(self):
        scratch = Path(tempfile.mkdtemp(prefix=".botscope-", dir=self.path))
        try:
            for name, data in self._files.items():
                (scratch / name).write_bytes(data)
            for name in self._files:
                os.replace(scratch / name, self.path / name)
        finally:
            shutil.rmtree(scratch, ignore_errors=True)


def load_inputs(paths, options: PipelineOptions) -> Corpus:
    with stage("ingest"):
        corpus = parse_corpus_files(paths, options.infer_rt_prefix, options.workers)
    with stage("filter"):
        if options.window is not None:
            corpus = filter_window(corpus, options.window)
    return corpus


def analyse(corpus: Corpus, options: PipelineOptions) -> dict:
    """Run every stage after ingest; returns the artifacts keyed by output name."""
    with stage("detect"):
        active, thresholds, metrics = detect(
            corpus, options.threshold_overrides, options.tu_normalization, options.workers
        )
    with stage("graph"):
        graph = build_retweet_graph(corpus)
    result = None
    reports = []
    if graph.nodes:
        with stage("rank"):
            result = pagerank(graph, options.damping, options.tol, options.max_iter)
        with stage("assess"):
            reports = rank_accounts(metrics, result, graph, options.threat_percentile)

    flagged = [m for m in metrics if m.bot_like]
    verdicts = Counter(r.verdict.value for r in reports)
    summary = PipelineSummary(
        total_users=len(corpus.tweets_by_user),
        total_tweets=len(corpus.tweets),
        highly_active_count=len(active),
        flagged_count=len(flagged),
        flagged_share_percent=flagged_share_percent(len(flagged), len(active)),
        flagged_tweet_count=sum(m.tweet_count for m in flagged),
        thresholds=thresholds.as_dict() if thresholds else None,
        verdict_counts={v.value: verdicts.get(v.value, 0) for v in Verdict},
        malformed_count=corpus.malformed_count,
        graph_nodes=len(graph.nodes),
        graph_edges=len(graph.edges),
        pagerank_iterations=result.iterations if result else 0,
        pagerank_converged=result.converged if result else None,
    )
    return {
        "summary": summary,
        "metrics": metrics,
        "graph": graph,
        "pagerank": result,
        "reports": reports,
        "thresholds": thresholds,
    }


def run_pipeline(inputs, options: Optional[PipelineOptions] = None, out_dir=None) -> PipelineSummary:
    """ingest -> filter -> detect -> graph -> rank -> assess -> reports.

    Writes ``metrics.csv``, ``ranked.csv``, ``graph_edges.csv`` and
    ``summary.json`` to ``out_dir`` when given. Nothing is written if a
    stage fails.
    """
    options = options or PipelineOptions()
    corpus = load_inputs(inputs, options)
    artifacts = analyse(corpus, options)
    if out_dir is not None:
        with stage("report"), OutputDir(out_dir) as out:
            out.add("metrics.csv", metrics_csv(artifacts["metrics"]))
            out.add("ranked.csv", ranked_csv(artifacts["reports"]))
            out.add("graph_edges.csv", edges_csv(artifacts["graph"]))
            out.add("summary.json", summary_json(artifacts["summary"]))
    return artifacts["summary"]
