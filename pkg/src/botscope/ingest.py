"""Reading, merging and windowing archived tweet corpora.

Corpora are stored as newline-delimited JSON, one tweet per line::

    {"id": 1, "user_id": 7, "user_screen_name": "alice",
     "created_at": "2020-02-27T10:00:00Z", "text": "...",
     "retweeted_user_id": 9, "retweeted_tweet_id": 3,
     "friends_count": 120, "followers_count": 80}

The retweet and count fields are optional. Files ending in ``.gz`` are
read and written gzip-compressed.
"""

from __future__ import annotations

import enum
import gzip
import io
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

# A file with more than this share of malformed lines is probably not in our schema.
MAX_MALFORMED_SHARE = 0.5

_RT_PREFIX = re.compile(r"^RT @(\w{1,50}):")
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class CorpusFormatError(ValueError):
    """Raised when a corpus file does not look like our record schema."""


class TweetKind(str, enum.Enum):
    ORIGINAL = "original"
    RETWEET = "retweet"


def parse_timestamp(value) -> datetime:
    """Parse an ISO-8601 string (or epoch seconds) to an aware UTC datetime, truncated to seconds."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a timestamp")
    if isinstance(value, (int, float)):
        ts = datetime.fromtimestamp(value, tz=timezone.utc)
    elif isinstance(value, str):
        text = value.strip()
        if text.endswith("Z") or text.endswith("z"):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        else:
            ts = ts.astimezone(timezone.utc)
    elif isinstance(value, datetime):
        ts = value if value.tzinfo else value.replace(tzinfo=timezone.utc)
        ts = ts.astimezone(timezone.utc)
    else:
        raise ValueError(f"unsupported timestamp {value!r}")
    return ts.replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: int
    user_id: int
    created_at: datetime
    text: str
    retweeted_user_id: Optional[int] = None
    retweeted_tweet_id: Optional[int] = None

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"tweet {self.tweet_id} has empty text")
        if self.retweeted_tweet_id is not None and self.retweeted_user_id is None:
            raise ValueError(f"tweet {self.tweet_id} names a retweeted tweet but no retweeted user")

    @property
    def kind(self) -> TweetKind:
        return TweetKind.RETWEET if self.retweeted_user_id is not None else TweetKind.ORIGINAL

    @property
    def is_retweet(self) -> bool:
        return self.retweeted_user_id is not None

    def sort_key(self):
        return (
            self.tweet_id,
            self.created_at,
            self.user_id,
            self.text,
            -1 if self.retweeted_user_id is None else self.retweeted_user_id,
            -1 if self.retweeted_tweet_id is None else self.retweeted_tweet_id,
        )


@dataclass(frozen=True)
class UserProfile:
    """Account identity and friend/follower counts.

    Counts are ``None`` when the source did not carry them; such a profile is
    *incomplete* and has no defined friends/followers ratio. ``observed_at`` is
    the timestamp of the record the counts were taken from.
    """

    user_id: int
    screen_name: str = ""
    friends_count: Optional[int] = None
    followers_count: Optional[int] = None
    observed_at: Optional[datetime] = None

    def __post_init__(self):
        for name in ("friends_count", "followers_count"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"user {self.user_id}: {name} must be non-negative, got {value}")

    @property
    def complete(self) -> bool:
        return self.friends_count is not None and self.followers_count is not None

    def _preference(self):
        # latest complete observation wins; remaining fields only break exact ties
        return (
            self.complete,
            self.observed_at or _EPOCH,
            self.friends_count if self.friends_count is not None else -1,
            self.followers_count if self.followers_count is not None else -1,
            self.screen_name,
        )


@dataclass(frozen=True)
class TrackingWindow:
    start: datetime
    end: datetime

    def __post_init__(self):
        object.__setattr__(self, "start", parse_timestamp(self.start))
        object.__setattr__(self, "end", parse_timestamp(self.end))
        if self.end <= self.start:
            raise ValueError(f"window end {self.end} must be after start {self.start}")

    @property
    def duration_hours(self) -> float:
        return (self.end - self.start).total_seconds() / 3600.0

    @property
    def n_days(self) -> int:
        """Number of whole or partial days covered, counted from ``start``."""
        seconds = (self.end - self.start).total_seconds()
        return max(1, -int(-seconds // 86400))

    def contains(self, ts: datetime) -> bool:
        return self.start <= ts <= self.end

    @classmethod
    def covering(cls, timestamps: Iterable[datetime]) -> Optional["TrackingWindow"]:
        """Smallest day-aligned window (00:00:00 to 23:59:59 UTC) holding every timestamp."""
        timestamps = list(timestamps)
        if not timestamps:
            return None
        first, last = min(timestamps), max(timestamps)
        start = first.replace(hour=0, minute=0, second=0)
        end = last.replace(hour=23, minute=59, second=59)
        return cls(start, end)


@dataclass(frozen=True, eq=False)
class Corpus:
    """Immutable tweet collection sorted by tweet id, with one profile per author."""

    tweets: tuple = ()
    users: Mapping[int, UserProfile] = field(default_factory=dict)
    window: Optional[TrackingWindow] = None
    malformed_count: int = 0

    def __post_init__(self):
        tweets = tuple(sorted(self.tweets, key=TweetRecord.sort_key))
        for a, b in zip(tweets, tweets[1:]):
            if a.tweet_id == b.tweet_id:
                raise ValueError(f"duplicate tweet id {a.tweet_id}")
        users = dict(sorted(self.users.items()))
        for tweet in tweets:
            if tweet.user_id not in users:
                users[tweet.user_id] = UserProfile(tweet.user_id)
        object.__setattr__(self, "tweets", tweets)
        object.__setattr__(self, "users", dict(sorted(users.items())))

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.tweets == other.tweets
            and self.users == other.users
            and self.window == other.window
        )

    def __len__(self):
        return len(self.tweets)

    @cached_property
    def tweets_by_user(self) -> dict:
        grouped: dict[int, list[TweetRecord]] = {}
        for tweet in self.tweets:
            grouped.setdefault(tweet.user_id, []).append(tweet)
        return {uid: tuple(ts) for uid, ts in sorted(grouped.items())}

    @property
    def tweet_ids(self) -> set:
        return {t.tweet_id for t in self.tweets}


def _optional_int(record: dict, key: str) -> Optional[int]:
    value = record.get(key)
    if value is None or value == "":
        return None
    if isinstance(value, bool):
        raise ValueError(f"{key} must be an integer")
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"{key} must be an integer")
    return int(value)


def _required_int(record: dict, key: str) -> int:
    value = _optional_int(record, key)
    if value is None:
        raise ValueError(f"missing {key}")
    return value


def parse_record(line: str) -> tuple[TweetRecord, UserProfile]:
    """Parse one NDJSON line. Raises ``ValueError`` on anything malformed."""
    record = json.loads(line)
    if not isinstance(record, dict):
        raise ValueError("record is not an object")
    text = record.get("text")
    if not isinstance(text, str) or not text:
        raise ValueError("missing or empty text")
    created_at = parse_timestamp(record["created_at"])
    tweet = TweetRecord(
        tweet_id=_required_int(record, "id"),
        user_id=_required_int(record, "user_id"),
        created_at=created_at,
        text=text,
        retweeted_user_id=_optional_int(record, "retweeted_user_id"),
        retweeted_tweet_id=_optional_int(record, "retweeted_tweet_id"),
    )
    screen_name = record.get("user_screen_name") or ""
    if not isinstance(screen_name, str):
        raise ValueError("user_screen_name must be a string")
    profile = UserProfile(
        user_id=tweet.user_id,
        screen_name=screen_name,
        friends_count=_optional_int(record, "friends_count"),
        followers_count=_optional_int(record, "followers_count"),
        observed_at=created_at,
    )
    return tweet, profile


def reconcile_profiles(profiles: Iterable[UserProfile]) -> dict:
    best: dict[int, UserProfile] = {}
    for profile in profiles:
        current = best.get(profile.user_id)
        if current is None or profile._preference() > current._preference():
            best[profile.user_id] = profile
    return dict(sorted(best.items()))


def _dedupe_tweets(tweets: Iterable[TweetRecord]) -> list:
    chosen: dict[int, TweetRecord] = {}
    for tweet in tweets:
        current = chosen.get(tweet.tweet_id)
        # pick the smallest full record so the winner never depends on input order
        if current is None or tweet.sort_key() < current.sort_key():
            chosen[tweet.tweet_id] = tweet
    return [chosen[k] for k in sorted(chosen)]


def _open_text(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def parse_corpus_file(path, format: str = "ndjson", infer_rt_prefix: bool = False) -> Corpus:
    """Read one archived crawl.

    Malformed lines are skipped and counted in ``Corpus.malformed_count``.
    Raises ``CorpusFormatError`` when more than half of the non-blank lines
    are malformed, and ``OSError`` when the file cannot be read.
    """
    if format != "ndjson":
        raise ValueError(f"unsupported corpus format {format!r}")
    path = Path(path)
    tweets, profiles = [], []
    total = malformed = 0
    with _open_text(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            total += 1
            try:
                tweet, profile = parse_record(line)
            except (ValueError, KeyError, TypeError, OverflowError) as exc:
                malformed += 1
                logger.debug("%s:%d: malformed record (%s)", path, lineno, exc)
                continue
            tweets.append(tweet)
            profiles.append(profile)
    if total and malformed / total > MAX_MALFORMED_SHARE:
        raise CorpusFormatError(
            f"{path}: {malformed} of {total} lines are malformed; wrong schema?"
        )
    if malformed:
        logger.warning("%s: skipped %d malformed line(s)", path, malformed)
    corpus = Corpus(
        tweets=_dedupe_tweets(tweets),
        users=reconcile_profiles(profiles),
        window=TrackingWindow.covering(t.created_at for t in tweets),
        malformed_count=malformed,
    )
    if infer_rt_prefix:
        corpus = infer_retweet_prefixes(corpus)
    return corpus


def infer_retweet_prefixes(corpus: Corpus) -> Corpus:
    """Mark tweets whose text starts with ``RT @name:`` as retweets of ``name``.

    Only applies to tweets without an explicit retweeted user, and only when
    ``name`` matches a known screen name (case-insensitive) in the corpus.
    """
    by_name = {}
    for profile in corpus.users.values():
        if profile.screen_name:
            by_name.setdefault(profile.screen_name.casefold(), profile.user_id)
    tweets = []
    changed = 0
    for tweet in corpus.tweets:
        if tweet.retweeted_user_id is None:
            m = _RT_PREFIX.match(tweet.text)
            target = by_name.get(m.group(1).casefold()) if m else None
            if target is not None:
                tweet = replace(tweet, retweeted_user_id=target)
                changed += 1
        tweets.append(tweet)
    if not changed:
        return corpus
    return Corpus(tweets, corpus.users, corpus.window, corpus.malformed_count)


def merge_corpora(corpora: Sequence[Corpus]) -> Corpus:
    """Union of several crawls with one record per tweet id.

    Conflicting profiles resolve to the latest complete observation. The
    merged window spans the earliest start to the latest end.
    """
    corpora = list(corpora)
    if not corpora:
        return Corpus()
    tweets = _dedupe_tweets(t for c in corpora for t in c.tweets)
    users = reconcile_profiles(p for c in corpora for p in c.users.values())
    windows = [c.window for c in corpora if c.window is not None]
    window = None
    if windows:
        window = TrackingWindow(min(w.start for w in windows), max(w.end for w in windows))
    return Corpus(tweets, users, window, sum(c.malformed_count for c in corpora))


def filter_window(corpus: Corpus, window: TrackingWindow) -> Corpus:
    """Keep tweets with ``start <= created_at <= end`` and their authors' profiles."""
    tweets = [t for t in corpus.tweets if window.contains(t.created_at)]
    authors = {t.user_id for t in tweets}
    users = {uid: p for uid, p in corpus.users.items() if uid in authors}
    return Corpus(tweets, users, window, corpus.malformed_count)


def parse_corpus_files(paths, infer_rt_prefix: bool = False, workers: int = 1) -> Corpus:
    """Parse several crawls (optionally in parallel) and merge them."""
    paths = [Path(p) for p in paths]
    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            corpora = list(pool.map(parse_corpus_file, paths))
    else:
        corpora = [parse_corpus_file(p) for p in paths]
    merged = merge_corpora(corpora)
    # prefix inference runs after the merge so screen names from every crawl resolve
    if infer_rt_prefix:
        merged = infer_retweet_prefixes(merged)
    return merged


def record_to_json(tweet: TweetRecord, profile: Optional[UserProfile]) -> dict:
    out = {
        "id": tweet.tweet_id,
        "user_id": tweet.user_id,
        "user_screen_name": profile.screen_name if profile else "",
        "created_at": format_timestamp(tweet.created_at),
        "text": tweet.text,
    }
    if tweet.retweeted_user_id is not None:
        out["retweeted_user_id"] = tweet.retweeted_user_id
    if tweet.retweeted_tweet_id is not None:
        out["retweeted_tweet_id"] = tweet.retweeted_tweet_id
    if profile is not None and profile.friends_count is not None:
        out["friends_count"] = profile.friends_count
    if profile is not None and profile.followers_count is not None:
        out["followers_count"] = profile.followers_count
    return out


def dumps_corpus(corpus: Corpus) -> str:
    buf = io.StringIO()
    for tweet in corpus.tweets:
        record = record_to_json(tweet, corpus.users.get(tweet.user_id))
        buf.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
        buf.write("\n")
    return buf.getvalue()


def encode_corpus(corpus: Corpus, compress: bool = False) -> bytes:
    data = dumps_corpus(corpus).encode("utf-8")
    if not compress:
        return data
    buf = io.BytesIO()
    # fixed mtime keeps compressed output byte-identical across runs
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0, filename="") as gz:
        gz.write(data)
    return buf.getvalue()


def write_corpus(corpus: Corpus, path) -> Path:
    """Write ``corpus`` as NDJSON (gzip when ``path`` ends in ``.gz``).

    Output is sorted by tweet id and byte-identical for equal corpora.
    """
    path = Path(path)
    path.write_bytes(encode_corpus(corpus, path.suffix == ".gz"))
    return path


def day_offset(ts: datetime, window: TrackingWindow) -> int:
    return int((ts - window.start) // timedelta(days=1))
