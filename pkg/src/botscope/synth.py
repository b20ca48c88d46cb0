"""Seeded synthetic corpora with labelled human and bot-archetype accounts.

Archetypes:

``repeater``        recycles a small per-account phrase pool (low TU)
``flooder``         posts far above the TFQ threshold
``follow_spammer``  follows many more accounts than follow it (high FFR)
``mixed``           all three at once

Each account draws from its own seeded substream so output does not depend
on generation order. Timestamps follow a homogeneous Poisson process over the
tracking window.
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field, replace
from datetime import timedelta
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .ingest import Corpus, TrackingWindow, TweetRecord, UserProfile
from .metrics import (
    DetectionThresholds,
    compute_metrics,
    derive_thresholds,
    select_highly_active,
)

ARCHETYPES = ("repeater", "flooder", "follow_spammer", "mixed")
LABELS = ("human",) + ARCHETYPES

DEFAULT_WINDOW = TrackingWindow("2020-02-27T00:00:00Z", "2020-05-20T23:59:00Z")

_VOCAB = (
    "corona virus covid lockdown masks vaccine hospital cases germany berlin "
    "update news study data test quarantine school distance health risk doctors "
    "spread curve flatten stay home wuhan who pandemic report numbers today "
    "government measures study science experts warning crisis economy border"
).split()


class SynthConfigError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class ArchetypeParams:
    duplicate_probability: float = 0.0
    tweets_per_day: float = 12.0
    ffr_target: float = 1.0
    retweet_propensity: float = 0.2

    def validate(self, name: str):
        if not 0.0 <= self.duplicate_probability <= 1.0:
            raise SynthConfigError(f"{name}: duplicate_probability must lie in [0, 1]")
        if self.tweets_per_day <= 0:
            raise SynthConfigError(f"{name}: tweets_per_day must be positive")
        if self.ffr_target < 0:
            raise SynthConfigError(f"{name}: ffr_target must be non-negative")
        if not 0.0 <= self.retweet_propensity <= 1.0:
            raise SynthConfigError(f"{name}: retweet_propensity must lie in [0, 1]")


# Each archetype sits at least 2x past its defining threshold; all bots stay
# comfortably above the 150-per-fortnight activity gate.
DEFAULT_ARCHETYPE_PARAMS = {
    "repeater": ArchetypeParams(duplicate_probability=0.95, tweets_per_day=20.0, ffr_target=1.0, retweet_propensity=0.05),
    "flooder": ArchetypeParams(duplicate_probability=0.0, tweets_per_day=55.0, ffr_target=1.0, retweet_propensity=0.3),
    "follow_spammer": ArchetypeParams(duplicate_probability=0.0, tweets_per_day=20.0, ffr_target=8.0, retweet_propensity=0.2),
    "mixed": ArchetypeParams(duplicate_probability=0.9, tweets_per_day=55.0, ffr_target=8.0, retweet_propensity=0.05),
}

DEFAULT_ARCHETYPE_COUNTS = {"repeater": 5, "flooder": 5, "follow_spammer": 5, "mixed": 5}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    window: TrackingWindow = DEFAULT_WINDOW
    humans: int = 200
    # human rates are drawn log-uniformly from [min, max] tweets/day
    human_rate_min: float = 0.5
    human_rate_max: float = 12.0
    human_ffr_range: tuple = (0.5, 1.5)
    human_retweet_propensity: float = 0.3
    archetype_counts: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_ARCHETYPE_COUNTS))
    archetype_params: Mapping[str, ArchetypeParams] = field(default_factory=lambda: dict(DEFAULT_ARCHETYPE_PARAMS))
    phrase_pool_size: int = 5
    first_user_id: int = 1000

    def validate(self):
        if self.humans < 0 or any(c < 0 for c in self.archetype_counts.values()):
            raise SynthConfigError("account counts must be non-negative")
        unknown = set(self.archetype_counts) - set(ARCHETYPES)
        if unknown:
            raise SynthConfigError(f"unknown archetype(s): {sorted(unknown)}")
        if self.total_users == 0:
            raise SynthConfigError("configuration generates no users")
        if not 0 < self.human_rate_min <= self.human_rate_max:
            raise SynthConfigError("need 0 < human_rate_min <= human_rate_max")
        lo, hi = self.human_ffr_range
        if not 0 <= lo <= hi:
            raise SynthConfigError("human_ffr_range must be an ordered non-negative pair")
        if not 0.0 <= self.human_retweet_propensity <= 1.0:
            raise SynthConfigError("human_retweet_propensity must lie in [0, 1]")
        if self.phrase_pool_size < 1:
            raise SynthConfigError("phrase_pool_size must be at least 1")
        for name in ARCHETYPES:
            self.params(name).validate(name)

    @property
    def total_users(self) -> int:
        return self.humans + sum(self.archetype_counts.get(a, 0) for a in ARCHETYPES)

    def params(self, archetype: str) -> ArchetypeParams:
        return self.archetype_params.get(archetype, DEFAULT_ARCHETYPE_PARAMS[archetype])


@dataclass(frozen=True)
class GroundTruth:
    labels: Mapping[int, str]

    @property
    def positives(self) -> set:
        return {u for u, label in self.labels.items() if label != "human"}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user_id", "label"])
        for uid in sorted(self.labels):
            writer.writerow([uid, self.labels[uid]])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "GroundTruth":
        with open(path, newline="", encoding="utf-8") as fh:
            labels = {}
            for row in csv.DictReader(fh):
                label = row["label"]
                if label not in LABELS:
                    raise ValueError(f"unknown label {label!r} for user {row['user_id']}")
                labels[int(row["user_id"])] = label
        return cls(labels)


@dataclass
class _Account:
    user_id: int
    label: str
    rng: np.random.Generator
    offsets: np.ndarray  # seconds from window start, sorted
    is_retweet: np.ndarray
    texts: list
    appeal: float
    profile: UserProfile


def _words(rng, k=5) -> str:
    return " ".join(rng.choice(_VOCAB, size=k))


def _make_account(config: SynthConfig, index: int, label: str, seq: np.random.SeedSequence) -> _Account:
    rng = np.random.default_rng(seq)
    uid = config.first_user_id + index
    window = config.window
    seconds = int((window.end - window.start).total_seconds())
    days = seconds / 86400.0

    if label == "human":
        rate = float(np.exp(rng.uniform(np.log(config.human_rate_min), np.log(config.human_rate_max))))
        lo, hi = config.human_ffr_range
        ratio = float(rng.uniform(lo, hi))
        dup_p, rt_p = 0.0, config.human_retweet_propensity
    else:
        p = config.params(label)
        rate, ratio, dup_p, rt_p = p.tweets_per_day, p.ffr_target, p.duplicate_probability, p.retweet_propensity

    n = int(rng.poisson(rate * days))
    offsets = np.sort(rng.integers(0, seconds + 1, size=n))
    is_retweet = rng.random(n) < rt_p
    pool = [f"{_words(rng)} ~{uid}/{j}" for j in range(config.phrase_pool_size)]
    duplicate = rng.random(n) < dup_p
    pool_pick = rng.integers(len(pool), size=n)
    words = np.asarray(_VOCAB)[rng.integers(len(_VOCAB), size=(n, 5))]
    texts = []
    for k in range(n):
        if is_retweet[k]:
            texts.append(None)
        elif duplicate[k]:
            texts.append(pool[pool_pick[k]])
        else:
            texts.append(f"{' '.join(words[k])} #{uid}x{k}")

    if label in ("follow_spammer", "mixed"):
        followers = int(rng.integers(20, 500))
    else:
        followers = int(np.round(np.exp(rng.uniform(np.log(50), np.log(5000)))))
    friends = int(round(followers * ratio))
    profile = UserProfile(uid, f"user{uid}", friends, followers, window.end)
    appeal = float(rng.pareto(1.5) + 1.0)
    return _Account(uid, label, rng, offsets, is_retweet, texts, appeal, profile)


def generate_corpus(config: SynthConfig) -> tuple:
    """Return ``(Corpus, GroundTruth)``; identical for identical configs."""
    config.validate()
    labels = ["human"] * config.humans
    for name in ARCHETYPES:
        labels += [name] * config.archetype_counts.get(name, 0)
    seqs = np.random.SeedSequence(config.seed).spawn(len(labels))
    accounts = [_make_account(config, i, label, seqs[i]) for i, label in enumerate(labels)]

    # global ids in (time, user, local index) order
    order = sorted(
        (int(off), a_i, k)
        for a_i, acc in enumerate(accounts)
        for k, off in enumerate(acc.offsets)
    )
    ids = {}
    for tid, key in enumerate(order, start=1):
        ids[(key[1], key[2])] = tid

    # originals per account as sorted (offset, tweet_id, text) for retweet targeting
    originals = []
    for a_i, acc in enumerate(accounts):
        originals.append([
            (int(acc.offsets[k]), ids[(a_i, k)], acc.texts[k])
            for k in range(len(acc.offsets))
            if not acc.is_retweet[k]
        ])
    appeal = np.array([acc.appeal for acc in accounts])

    start = config.window.start
    tweets = []
    for a_i, acc in enumerate(accounts):
        used = set()
        others = appeal.copy()
        others[a_i] = 0.0
        total = others.sum()
        n_rt = int(acc.is_retweet.sum())
        if total > 0 and n_rt:
            first_choice = acc.rng.choice(len(accounts), size=n_rt, p=others / total)
            first_pick = acc.rng.random(n_rt)
        j = -1
        for k, off in enumerate(acc.offsets):
            off = int(off)
            created = start + timedelta(seconds=off)
            tid = ids[(a_i, k)]
            text = acc.texts[k]
            if text is not None:
                tweets.append(TweetRecord(tid, acc.user_id, created, text))
                continue
            j += 1
            target = None
            for attempt in range(8 if total > 0 else 0):
                if attempt == 0:
                    t_acc, u = int(first_choice[j]), float(first_pick[j])
                else:
                    t_acc = int(acc.rng.choice(len(accounts), p=others / total))
                    u = float(acc.rng.random())
                # only tweets strictly older than the retweet are eligible
                cands = originals[t_acc]
                hi = bisect.bisect_left(cands, (off, -1, ""))
                if hi == 0:
                    continue
                pick = cands[int(u * hi)]
                if pick[1] not in used:
                    target = (t_acc, pick)
                    break
            if target is None:
                tweets.append(TweetRecord(tid, acc.user_id, created, f"{_words(acc.rng)} #{acc.user_id}x{k}"))
                continue
            t_acc, (_, target_id, target_text) = target
            used.add(target_id)
            target_acc = accounts[t_acc]
            tweets.append(TweetRecord(
                tid,
                acc.user_id,
                created,
                f"RT @{target_acc.profile.screen_name}: {target_text}",
                retweeted_user_id=target_acc.user_id,
                retweeted_tweet_id=target_id,
            ))

    users = {acc.user_id: acc.profile for acc in accounts}
    corpus = Corpus(tweets, users, config.window)
    truth = GroundTruth({acc.user_id: acc.label for acc in accounts})
    return corpus, truth


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        # no predicted positives: report 1.0 by convention
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


def evaluate_detector(
    corpus: Corpus,
    truth: GroundTruth,
    thresholds: Optional[DetectionThresholds] = None,
    normalization: str = "none",
) -> ConfusionMatrix:
    """Score the screening against ground truth.

    Predicted positives are bot-like accounts among the highly active users.
    Labelled bots that miss the activity gate (or have no tweets at all)
    count as false negatives. With ``thresholds=None`` the TU threshold is
    derived from the corpus and the other values take their defaults.
    """
    unlabeled = set(corpus.tweets_by_user) - set(truth.labels)
    if unlabeled:
        raise ConsistencyError(f"{len(unlabeled)} corpus user(s) have no ground-truth label, e.g. {min(unlabeled)}")
    if thresholds is None:
        active = select_highly_active(corpus)
        thresholds = derive_thresholds(corpus, active, normalization=normalization) if active else None
    else:
        active = select_highly_active(corpus, thresholds.activity_min_tweets, thresholds.activity_window_days)
    predicted = set()
    if thresholds is not None:
        predicted = {m.user_id for m in compute_metrics(corpus, active, thresholds, normalization) if m.bot_like}
    actual = truth.positives
    everyone = set(truth.labels)
    tp = len(predicted & actual)
    fp = len(predicted - actual)
    fn = len(actual - predicted)
    tn = len(everyone - actual - predicted)
    return ConfusionMatrix(tp, fp, fn, tn)


def synth_config_from_mapping(values: Mapping) -> SynthConfig:
    """Build a ``SynthConfig`` from flat config keys such as ``flooder_count``."""
    base = SynthConfig()
    kwargs = {}
    if values.get("seed") is not None:
        kwargs["seed"] = int(values["seed"])
    if values.get("window_start") or values.get("window_end"):
        kwargs["window"] = TrackingWindow(
            values.get("window_start") or base.window.start,
            values.get("window_end") or base.window.end,
        )
    for key in ("humans", "phrase_pool_size", "first_user_id"):
        if values.get(key) is not None:
            kwargs[key] = int(values[key])
    for key in ("human_rate_min", "human_rate_max", "human_retweet_propensity"):
        if values.get(key) is not None:
            kwargs[key] = float(values[key])
    if values.get("human_ffr_min") is not None or values.get("human_ffr_max") is not None:
        lo, hi = base.human_ffr_range
        kwargs["human_ffr_range"] = (
            float(values.get("human_ffr_min", lo)),
            float(values.get("human_ffr_max", hi)),
        )
    counts = dict(base.archetype_counts)
    params = dict(base.archetype_params)
    for name in ARCHETYPES:
        if values.get(f"{name}_count") is not None:
            counts[name] = int(values[f"{name}_count"])
        overrides = {
            attr: float(values[f"{name}_{attr}"])
            for attr in ("duplicate_probability", "tweets_per_day", "ffr_target", "retweet_propensity")
            if values.get(f"{name}_{attr}") is not None
        }
        if overrides:
            params[name] = replace(params[name], **overrides)
    config = replace(base, archetype_counts=counts, archetype_params=params, **kwargs)
    config.validate()
    return config
