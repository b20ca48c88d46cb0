"""Tweet Uniqueness, Tweet Frequency and Friends-Followers-Ratio screening.

Accounts are first restricted to the highly active ones (at least
``activity_min_tweets`` tweets inside some ``activity_window_days`` span).
Each remaining account is flagged when *any* of these holds:

* TU  = distinct texts / tweets        falls strictly below the corpus-wide TU
* TFQ = tweets / hours of the window   strictly exceeds 25/24 per hour
* FFR = friends / followers            strictly exceeds 3.5
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .ingest import Corpus, TrackingWindow, TweetRecord, UserProfile

DEFAULT_MIN_TWEETS = 150
DEFAULT_WINDOW_DAYS = 14
DEFAULT_TFQ_THRESHOLD = 25 / 24
DEFAULT_FFR_THRESHOLD = 3.5

TU_NORMALIZATIONS = ("none", "casefold_trim")


class ThresholdDerivationError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionThresholds:
    tu_threshold: float
    tfq_threshold: float = DEFAULT_TFQ_THRESHOLD
    ffr_threshold: float = DEFAULT_FFR_THRESHOLD
    activity_min_tweets: int = DEFAULT_MIN_TWEETS
    activity_window_days: int = DEFAULT_WINDOW_DAYS

    def __post_init__(self):
        if not 0 < self.tu_threshold <= 1:
            raise ValueError(f"tu_threshold must lie in (0, 1], got {self.tu_threshold}")
        if self.tfq_threshold <= 0:
            raise ValueError("tfq_threshold must be positive")
        if self.ffr_threshold <= 0:
            raise ValueError("ffr_threshold must be positive")
        if self.activity_min_tweets < 1 or self.activity_window_days < 1:
            raise ValueError("activity parameters must be positive integers")

    def as_dict(self) -> dict:
        return asdict(self)


_THRESHOLD_FIELDS = {f.name for f in fields(DetectionThresholds)}


@dataclass(frozen=True)
class UserMetrics:
    user_id: int
    screen_name: str
    tweet_count: int
    distinct_text_count: int
    tu: float
    tfq: float
    ffr: Optional[float]
    tu_flag: bool = False
    tfq_flag: bool = False
    ffr_flag: bool = False

    @property
    def bot_like(self) -> bool:
        return self.tu_flag or self.tfq_flag or self.ffr_flag


def normalize_text(text: str, normalization: str = "none") -> str:
    if normalization == "none":
        return text
    if normalization == "casefold_trim":
        return text.strip().casefold()
    raise ValueError(f"unknown tu_normalization {normalization!r}")


def _activity_counts(corpus: Corpus, window: TrackingWindow) -> dict:
    """Per-user tweet counts for each day of ``window`` (tweets outside it are ignored)."""
    n_days = window.n_days
    start = window.start.timestamp()
    out = {}
    for uid, tweets in corpus.tweets_by_user.items():
        secs = np.fromiter((t.created_at.timestamp() for t in tweets), dtype=np.float64, count=len(tweets))
        days = np.floor((secs - start) / 86400.0).astype(np.int64)
        days = days[(days >= 0) & (days < n_days)]
        out[uid] = np.bincount(days, minlength=n_days)
    return out


def select_highly_active(
    corpus: Corpus,
    min_tweets: int = DEFAULT_MIN_TWEETS,
    window_days: int = DEFAULT_WINDOW_DAYS,
    window: Optional[TrackingWindow] = None,
) -> set:
    """Users with at least ``min_tweets`` tweets in some ``window_days``-day span.

    Spans start on every whole day from the tracking-window start. When the
    span is longer than the tracking period, the whole period is one span.
    """
    window = window or corpus.window
    if window is None:
        return set()
    active = set()
    for uid, per_day in _activity_counts(corpus, window).items():
        if per_day.sum() < min_tweets:
            continue
        span = min(window_days, len(per_day))
        csum = np.concatenate(([0], np.cumsum(per_day)))
        best = int((csum[span:] - csum[:-span]).max())
        if best >= min_tweets:
            active.add(uid)
    return active


def tweet_uniqueness(tweets_of_user: Sequence, normalization: str = "none") -> tuple:
    """Return ``(distinct_count, tu)`` for one user's tweets (records or raw strings)."""
    if not tweets_of_user:
        raise ValueError("tweet uniqueness is undefined for an empty tweet list")
    texts = {
        normalize_text(t.text if isinstance(t, TweetRecord) else t, normalization)
        for t in tweets_of_user
    }
    return len(texts), len(texts) / len(tweets_of_user)


def tweet_frequency(tweet_count: int, window: TrackingWindow) -> float:
    """Tweets per hour over the tracking window."""
    return tweet_count / window.duration_hours


def friends_followers_ratio(profile: UserProfile) -> Optional[float]:
    """friends / followers; ``None`` for incomplete profiles, ``inf`` for 0 followers."""
    if not profile.complete:
        return None
    if profile.followers_count == 0:
        return math.inf if profile.friends_count > 0 else 0.0
    return profile.friends_count / profile.followers_count


def derive_thresholds(
    corpus: Corpus,
    active_users: Iterable[int],
    overrides: Optional[Mapping] = None,
    normalization: str = "none",
) -> DetectionThresholds:
    """Build thresholds; TU comes from the active sample unless overridden.

    The TU threshold is the number of distinct texts among all tweets of the
    active users divided by their total tweet count. The FFR threshold is a
    fixed constant, never derived from data.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    unknown = set(overrides) - _THRESHOLD_FIELDS
    if unknown:
        raise ValueError(f"unknown threshold override(s): {sorted(unknown)}")
    if "tu_threshold" not in overrides:
        active = set(active_users)
        if not active:
            raise ThresholdDerivationError("no highly active users to derive the TU threshold from")
        by_user = corpus.tweets_by_user
        texts = set()
        total = 0
        for uid in sorted(active):
            for tweet in by_user.get(uid, ()):
                texts.add(normalize_text(tweet.text, normalization))
                total += 1
        if total == 0:
            raise ThresholdDerivationError("active users have no tweets")
        overrides["tu_threshold"] = len(texts) / total
    return DetectionThresholds(**overrides)


def classify(metrics: UserMetrics, thresholds: DetectionThresholds) -> UserMetrics:
    """Set the three flags; every comparison is strict."""
    return replace(
        metrics,
        tu_flag=metrics.tu < thresholds.tu_threshold,
        tfq_flag=metrics.tfq > thresholds.tfq_threshold,
        ffr_flag=metrics.ffr is not None and metrics.ffr > thresholds.ffr_threshold,
    )


def measure_user(
    user_id: int,
    tweets: Sequence[TweetRecord],
    profile: UserProfile,
    window: TrackingWindow,
    normalization: str = "none",
) -> UserMetrics:
    distinct, tu = tweet_uniqueness(tweets, normalization)
    return UserMetrics(
        user_id=user_id,
        screen_name=profile.screen_name,
        tweet_count=len(tweets),
        distinct_text_count=distinct,
        tu=tu,
        tfq=tweet_frequency(len(tweets), window),
        ffr=friends_followers_ratio(profile),
    )


def compute_metrics(
    corpus: Corpus,
    users: Iterable[int],
    thresholds: DetectionThresholds,
    normalization: str = "none",
    workers: int = 1,
) -> list:
    """Measure and classify ``users``; returns ``UserMetrics`` sorted by user id."""
    if corpus.window is None:
        return []
    by_user = corpus.tweets_by_user
    uids = sorted(u for u in set(users) if by_user.get(u))

    def one(uid):
        m = measure_user(uid, by_user[uid], corpus.users[uid], corpus.window, normalization)
        return classify(m, thresholds)

    if workers > 1 and len(uids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, uids))
    return [one(uid) for uid in uids]


def detect(
    corpus: Corpus,
    overrides: Optional[Mapping] = None,
    normalization: str = "none",
    workers: int = 1,
) -> tuple:
    """Activity gate, threshold derivation and classification in one call.

    Returns ``(active_users, thresholds, metrics)``. ``thresholds`` is ``None``
    when no account is highly active and no TU override was given.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    min_tweets = overrides.get("activity_min_tweets", DEFAULT_MIN_TWEETS)
    window_days = overrides.get("activity_window_days", DEFAULT_WINDOW_DAYS)
    active = select_highly_active(corpus, min_tweets, window_days)
    if not active and "tu_threshold" not in overrides:
        return active, None, []
    thresholds = derive_thresholds(corpus, active, overrides, normalization)
    return active, thresholds, compute_metrics(corpus, active, thresholds, normalization, workers)
