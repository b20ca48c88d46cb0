import math
from datetime import timedelta

import pytest
from hypothesis import given, settings, strategies as st

from botscope.ingest import TrackingWindow, UserProfile
from botscope.metrics import (
    DEFAULT_TFQ_THRESHOLD,
    DetectionThresholds,
    ThresholdDerivationError,
    UserMetrics,
    classify,
    compute_metrics,
    derive_thresholds,
    detect,
    friends_followers_ratio,
    select_highly_active,
    tweet_frequency,
    tweet_uniqueness,
)

from conftest import STUDY_WINDOW, T0, corpus_of, tweet


def brute_force_active(offsets_by_user, min_tweets, window_days, n_days):
    """Count every whole-day span directly; no cumulative sums."""
    selected = set()
    spans = max(1, n_days - window_days + 1)
    width = min(window_days, n_days)
    for uid, offsets in offsets_by_user.items():
        for k in range(spans):
            lo, hi = k * 86400, (k + width) * 86400
            if sum(1 for s in offsets if lo <= s < hi) >= min_tweets:
                selected.add(uid)
                break
    return selected


def timeline_corpus(offsets_by_user):
    tid = 0
    tweets = []
    for uid, offsets in offsets_by_user.items():
        for s in offsets:
            tid += 1
            tweets.append(tweet(tid, uid, at=s))
    return corpus_of(tweets)


def uniform_daily(per_day, days=84):
    return [d * 86400 + 3600 + i * 60 for d in range(days) for i in range(per_day)]


def test_150_on_one_day_is_active():
    corpus = timeline_corpus({1: [40 * 86400 + i for i in range(150)]})
    assert select_highly_active(corpus, 150, 14) == {1}


def test_149_total_is_not_active():
    corpus = timeline_corpus({1: [i * 3600 for i in range(149)]})
    assert select_highly_active(corpus, 150, 14) == set()


def test_uniform_rates_around_the_gate():
    offsets = {10: uniform_daily(10), 11: uniform_daily(11)}
    expected = brute_force_active(offsets, 150, 14, 84)
    assert expected == {11}  # 140 vs 154 per fortnight
    assert select_highly_active(timeline_corpus(offsets), 150, 14) == expected


def test_last_day_is_covered_by_a_span():
    # 150 tweets on the final (partial) day of the study window
    offsets = {1: [83 * 86400 + i for i in range(150)]}
    assert select_highly_active(timeline_corpus(offsets), 150, 14) == {1}


def test_span_longer_than_window_uses_whole_period():
    short = TrackingWindow(T0, T0 + timedelta(days=5))
    corpus = corpus_of([tweet(i, 1, at=i * 1000) for i in range(1, 151)], window=short)
    assert select_highly_active(corpus, 150, 14) == {1}


@settings(max_examples=80, deadline=None)
@given(
    st.dictionaries(
        st.integers(1, 6),
        st.lists(st.integers(0, 84 * 86400 - 61), max_size=60),
        max_size=5,
    ),
    st.integers(1, 40),
    st.integers(1, 20),
)
def test_activity_gate_matches_brute_force(offsets, min_tweets, window_days):
    offsets = {u: o for u, o in offsets.items() if o}
    got = select_highly_active(timeline_corpus(offsets), min_tweets, window_days)
    assert got == brute_force_active(offsets, min_tweets, window_days, 84)


def test_tu_all_identical():
    assert tweet_uniqueness(["same"] * 10) == (1, 0.1)


def test_tu_all_distinct():
    assert tweet_uniqueness([f"t{i}" for i in range(10)]) == (10, 1.0)


def test_tu_mixed():
    texts = list("aabccc")
    assert len(set(texts)) == 3
    assert tweet_uniqueness(texts) == (3, 0.5)


def test_tu_is_character_exact():
    assert tweet_uniqueness(["Covid", "covid", "covid "])[0] == 3
    assert tweet_uniqueness(["Covid", "covid", "covid "], "casefold_trim")[0] == 1


def test_tu_accepts_records():
    assert tweet_uniqueness([tweet(1, 1, text="x"), tweet(2, 1, text="x")]) == (1, 0.5)


def test_tu_empty_raises():
    with pytest.raises(ValueError):
        tweet_uniqueness([])


@given(st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), min_size=1, max_size=30), st.randoms())
def test_tu_bounds_and_permutation_invariance(texts, rnd):
    distinct, tu = tweet_uniqueness(texts)
    assert 0 < tu <= 1
    assert (tu == 1) == (len(set(texts)) == len(texts))
    shuffled = list(texts)
    rnd.shuffle(shuffled)
    assert tweet_uniqueness(shuffled) == (distinct, tu)


def test_tu_threshold_from_active_sample():
    tweets = [tweet(i, 1 + i % 4, text=f"s{i % 700}") for i in range(1000)]
    corpus = corpus_of(tweets)
    th = derive_thresholds(corpus, {1, 2, 3, 4})
    assert th.tu_threshold == pytest.approx(0.700)
    assert th.ffr_threshold == 3.5
    assert th.activity_min_tweets == 150 and th.activity_window_days == 14


def test_tu_threshold_ignores_inactive_users():
    tweets = [tweet(i, 1, text="dup") for i in range(1, 11)] + [tweet(i, 2, text=f"u{i}") for i in range(11, 21)]
    th = derive_thresholds(corpus_of(tweets), {1})
    assert th.tu_threshold == pytest.approx(1 / 10)


def test_derivation_needs_active_tweets():
    with pytest.raises(ThresholdDerivationError):
        derive_thresholds(corpus_of([tweet(1, 1)]), set())
    with pytest.raises(ThresholdDerivationError):
        derive_thresholds(corpus_of([tweet(1, 1)]), {99})


def test_overrides_replace_defaults():
    th = derive_thresholds(corpus_of([]), set(), {"tu_threshold": 0.703, "ffr_threshold": 2.0})
    assert (th.tu_threshold, th.ffr_threshold, th.tfq_threshold) == (0.703, 2.0, DEFAULT_TFQ_THRESHOLD)
    with pytest.raises(ValueError):
        derive_thresholds(corpus_of([]), set(), {"tu_threshold": 0.5, "bogus": 1})


def test_tfq_examples():
    hours = STUDY_WINDOW.duration_hours
    assert tweet_frequency(round(3 * hours), STUDY_WINDOW) == pytest.approx(3, abs=1e-3)
    assert tweet_frequency(0, STUDY_WINDOW) == 0
    exact = TrackingWindow(T0, T0 + timedelta(hours=2016))
    assert tweet_frequency(3967, exact) == pytest.approx(1.9678, abs=1e-4)
    assert tweet_frequency(3967, exact) > DEFAULT_TFQ_THRESHOLD


def test_tfq_threshold_is_25_per_day():
    assert DEFAULT_TFQ_THRESHOLD == pytest.approx(1.0417, abs=5e-4)
    day = TrackingWindow(T0, T0 + timedelta(days=1))
    assert tweet_frequency(25, day) == pytest.approx(DEFAULT_TFQ_THRESHOLD)


@given(st.integers(0, 10_000))
def test_tfq_is_linear(n):
    assert tweet_frequency(2 * n, STUDY_WINDOW) == pytest.approx(2 * tweet_frequency(n, STUDY_WINDOW))


@pytest.mark.parametrize("friends,followers,expected", [
    (3500, 1000, 3.5),
    (3501, 1000, 3.501),
    (7, 2, 3.5),
    (0, 0, 0.0),
    (5, 0, math.inf),
])
def test_ffr_values(friends, followers, expected):
    assert friends_followers_ratio(UserProfile(1, "", friends, followers)) == expected


def test_ffr_undefined_for_incomplete_profile():
    assert friends_followers_ratio(UserProfile(1, "", 10, None)) is None
    assert friends_followers_ratio(UserProfile(1)) is None


def metrics(tu=1.0, tfq=0.0, ffr=None):
    return UserMetrics(1, "u", 10, round(10 * tu), tu, tfq, ffr)


TH = DetectionThresholds(tu_threshold=0.703)


def test_strict_boundaries():
    assert not classify(metrics(tu=0.703), TH).tu_flag
    assert classify(metrics(tfq=1.05), TH).tfq_flag
    assert not classify(metrics(tfq=TH.tfq_threshold), TH).tfq_flag
    assert not classify(metrics(ffr=3500 / 1000), TH).ffr_flag
    assert classify(metrics(ffr=3501 / 1000), TH).ffr_flag
    assert classify(metrics(ffr=math.inf), TH).ffr_flag
    assert not classify(metrics(ffr=None), TH).ffr_flag


def test_ffr_alone_makes_bot_like():
    m = classify(metrics(tu=0.9, tfq=0.1, ffr=4.0), TH)
    assert (m.tu_flag, m.tfq_flag, m.ffr_flag, m.bot_like) == (False, False, True, True)


@pytest.mark.parametrize("tu_on", [False, True])
@pytest.mark.parametrize("tfq_on", [False, True])
@pytest.mark.parametrize("ffr_on", [False, True])
def test_truth_table(tu_on, tfq_on, ffr_on):
    m = classify(metrics(tu=0.5 if tu_on else 0.9, tfq=2.0 if tfq_on else 0.5, ffr=5.0 if ffr_on else 1.0), TH)
    assert (m.tu_flag, m.tfq_flag, m.ffr_flag) == (tu_on, tfq_on, ffr_on)
    assert m.bot_like == (tu_on or tfq_on or ffr_on)


ratio = st.one_of(st.none(), st.floats(0, 20, allow_nan=False))


@given(
    st.floats(0.01, 1), st.floats(0, 5), ratio,
    st.floats(0, 1), st.floats(0, 5), st.floats(0, 5),
)
def test_classify_is_monotone(tu, tfq, ffr, d_tu, d_tfq, d_ffr):
    before = classify(metrics(tu, tfq, ffr), TH)
    worse = classify(metrics(max(1e-6, tu - d_tu), tfq + d_tfq, None if ffr is None else ffr + d_ffr), TH)
    if before.bot_like:
        assert worse.bot_like


def test_bot_like_count_matches_direct_inequalities():
    from botscope.synth import SynthConfig, generate_corpus

    corpus, _ = generate_corpus(SynthConfig(seed=11, humans=40))
    active, th, ms = detect(corpus)
    by_user = corpus.tweets_by_user
    expected = 0
    for uid in active:
        texts = [t.text for t in by_user[uid]]
        prof = corpus.users[uid]
        tu = len(set(texts)) / len(texts)
        tfq = len(texts) / corpus.window.duration_hours
        ffr_hit = prof.followers_count > 0 and prof.friends_count / prof.followers_count > th.ffr_threshold
        ffr_hit = ffr_hit or (prof.followers_count == 0 and prof.friends_count > 0)
        expected += tu < th.tu_threshold or tfq > th.tfq_threshold or ffr_hit
    assert sum(m.bot_like for m in ms) == expected
    assert expected > 0


def test_compute_metrics_parallel_is_identical():
    from botscope.synth import SynthConfig, generate_corpus

    corpus, _ = generate_corpus(SynthConfig(seed=5, humans=30))
    active, th, serial = detect(corpus, workers=1)
    assert compute_metrics(corpus, active, th, workers=4) == serial


def test_detect_without_active_users():
    active, th, ms = detect(corpus_of([tweet(1, 1)]))
    assert (active, th, ms) == (set(), None, [])
