"""Social-bot sampling and retweet-network influence ranking for archived tweet corpora."""

from .ingest import (
    Corpus,
    CorpusFormatError,
    TrackingWindow,
    TweetKind,
    TweetRecord,
    UserProfile,
    filter_window,
    merge_corpora,
    parse_corpus_file,
    write_corpus,
)
from .metrics import (
    DetectionThresholds,
    UserMetrics,
    classify,
    derive_thresholds,
    friends_followers_ratio,
    select_highly_active,
    tweet_frequency,
    tweet_uniqueness,
)
from .graph import (
    PageRankResult,
    RankedReport,
    RetweetGraph,
    assess_threat,
    build_retweet_graph,
    pagerank,
    percentile_rank,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "CorpusFormatError",
    "DetectionThresholds",
    "PageRankResult",
    "RankedReport",
    "RetweetGraph",
    "TrackingWindow",
    "TweetKind",
    "TweetRecord",
    "UserMetrics",
    "UserProfile",
    "assess_threat",
    "build_retweet_graph",
    "classify",
    "derive_thresholds",
    "filter_window",
    "friends_followers_ratio",
    "merge_corpora",
    "pagerank",
    "parse_corpus_file",
    "percentile_rank",
    "select_highly_active",
    "tweet_frequency",
    "tweet_uniqueness",
    "write_corpus",
]
