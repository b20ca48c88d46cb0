"""Directed retweet network and PageRank-based influence ranking."""

from __future__ import annotations

import bisect
import enum
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .ingest import Corpus
from .metrics import UserMetrics

logger = logging.getLogger(__name__)

DEFAULT_DAMPING = 0.85
DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITERATIONS = 200
DEFAULT_THREAT_PERCENTILE = 90.0


@dataclass(frozen=True, eq=False)
class RetweetGraph:
    """Users as nodes; edge ``(retweeter, author)`` weighted by retweet count.

    Self-retweets never become edges; they are tallied in ``self_retweets``.
    """

    nodes: tuple
    edges: Mapping[tuple, int]
    self_retweets: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(sorted(set(self.nodes)))
        known = set(nodes)
        edges = {}
        for (src, dst), w in sorted(self.edges.items()):
            if src == dst:
                raise ValueError(f"self-loop on {src}")
            if w < 1:
                raise ValueError(f"edge {src}->{dst} has weight {w}")
            if src not in known or dst not in known:
                raise ValueError(f"edge {src}->{dst} has an endpoint outside the node set")
            edges[(src, dst)] = int(w)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "self_retweets", dict(sorted(self.self_retweets.items())))

    def __eq__(self, other):
        if not isinstance(other, RetweetGraph):
            return NotImplemented
        return (self.nodes, self.edges, self.self_retweets) == (other.nodes, other.edges, other.self_retweets)

    def __len__(self):
        return len(self.nodes)


def build_retweet_graph(corpus: Corpus) -> RetweetGraph:
    """Every tweet author and retweeted author becomes a node."""
    nodes = set(corpus.users)
    edges: Counter = Counter()
    self_rt: Counter = Counter()
    for tweet in corpus.tweets:
        nodes.add(tweet.user_id)
        if tweet.retweeted_user_id is None:
            continue
        nodes.add(tweet.retweeted_user_id)
        if tweet.retweeted_user_id == tweet.user_id:
            self_rt[tweet.user_id] += 1
        else:
            edges[(tweet.user_id, tweet.retweeted_user_id)] += 1
    return RetweetGraph(tuple(nodes), dict(edges), dict(self_rt))


@dataclass(frozen=True)
class PageRankResult:
    scores: Mapping[int, float]
    damping: float
    iterations: int
    residual: float
    converged: bool = True


def pagerank(
    graph: RetweetGraph,
    damping: float = DEFAULT_DAMPING,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> PageRankResult:
    """Weighted PageRank by power iteration.

    A node passes its rank along out-edges in proportion to edge weight;
    nodes without out-edges spread theirs uniformly over all nodes. Iterates
    until the L1 change drops below ``tolerance``. If that never happens within
    ``max_iterations`` the last iterate is returned with ``converged=False``.
    """
    if not graph.nodes:
        raise ValueError("pagerank needs at least one node")
    if not 0 < damping < 1:
        raise ValueError(f"damping must lie in (0, 1), got {damping}")
    n = len(graph.nodes)
    index = {u: i for i, u in enumerate(graph.nodes)}
    src = np.fromiter((index[s] for s, _ in graph.edges), dtype=np.int64, count=len(graph.edges))
    dst = np.fromiter((index[d] for _, d in graph.edges), dtype=np.int64, count=len(graph.edges))
    w = np.fromiter(graph.edges.values(), dtype=np.float64, count=len(graph.edges))
    out_weight = np.bincount(src, weights=w, minlength=n)
    dangling = out_weight == 0
    share = w / out_weight[src] if len(w) else w

    x = np.full(n, 1.0 / n)
    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        flow = np.bincount(dst, weights=x[src] * share, minlength=n)
        leaked = x[dangling].sum()
        x_new = damping * (flow + leaked / n) + (1.0 - damping) / n
        x_new /= x_new.sum()
        residual = float(np.abs(x_new - x).sum())
        x = x_new
        if residual < tolerance:
            break
    converged = residual < tolerance
    if not converged:
        logger.warning("pagerank did not converge in %d iterations (residual %.3g)", max_iterations, residual)
    scores = {u: float(x[i]) for u, i in index.items()}
    return PageRankResult(scores, damping, iterations, residual, converged)


def percentile_rank(scores: PageRankResult, user_id: int) -> float:
    """Share of *other* users scoring strictly lower, in percent."""
    if user_id not in scores.scores:
        raise KeyError(f"user {user_id} has no PageRank score")
    return percentile_ranks(scores)[user_id]


def percentile_ranks(scores: PageRankResult) -> dict:
    values = sorted(scores.scores.values())
    n = len(values)
    if n == 1:
        return {u: 100.0 for u in scores.scores}
    return {u: 100.0 * bisect.bisect_left(values, s) / (n - 1) for u, s in scores.scores.items()}


class Verdict(str, enum.Enum):
    THREAT = "threat"
    HARMLESS = "harmless"
    NOT_FLAGGED = "not_flagged"


@dataclass(frozen=True)
class RankedReport:
    user_id: int
    bot_like: bool
    pagerank: float
    percentile: float
    verdict: Verdict
    self_retweets: int = 0


def verdict_for(bot_like: bool, percentile: float, threat_percentile: float) -> Verdict:
    if not bot_like:
        return Verdict.NOT_FLAGGED
    return Verdict.THREAT if percentile >= threat_percentile else Verdict.HARMLESS


def assess_threat(
    metrics: UserMetrics,
    scores: PageRankResult,
    threat_percentile: float = DEFAULT_THREAT_PERCENTILE,
    percentiles: Optional[Mapping[int, float]] = None,
    self_retweets: int = 0,
) -> RankedReport:
    """Flagged accounts at or above ``threat_percentile`` are threats, the rest harmless.

    Pass precomputed ``percentiles`` when ranking many accounts against the
    same scores.
    """
    uid = metrics.user_id
    if uid not in scores.scores:
        raise KeyError(f"user {uid} has no PageRank score")
    pct = percentiles[uid] if percentiles is not None else percentile_rank(scores, uid)
    return RankedReport(
        user_id=uid,
        bot_like=metrics.bot_like,
        pagerank=scores.scores[uid],
        percentile=pct,
        verdict=verdict_for(metrics.bot_like, pct, threat_percentile),
        self_retweets=self_retweets,
    )


def rank_accounts(metrics, scores: PageRankResult, graph: RetweetGraph, threat_percentile: float = DEFAULT_THREAT_PERCENTILE) -> list:
    pct = percentile_ranks(scores)
    return [
        assess_threat(m, scores, threat_percentile, pct, graph.self_retweets.get(m.user_id, 0))
        for m in metrics
    ]
