import json
from datetime import datetime, timedelta, timezone

import pytest

from botscope.ingest import Corpus, TrackingWindow, TweetRecord

T0 = datetime(2020, 2, 27, tzinfo=timezone.utc)
STUDY_WINDOW = TrackingWindow("2020-02-27T00:00:00Z", "2020-05-20T23:59:00Z")


def tweet(tid, uid, at=T0, text=None, rt=None, rt_tweet=None):
    if not isinstance(at, datetime):
        at = T0 + timedelta(seconds=at)
    return TweetRecord(tid, uid, at, text if text is not None else f"tweet {tid}", rt, rt_tweet)


def corpus_of(tweets, profiles=(), window=STUDY_WINDOW):
    return Corpus(list(tweets), {p.user_id: p for p in profiles}, window)


def ndjson_line(tid, uid=1, at="2020-03-01T12:00:00Z", text=None, **extra):
    record = {"id": tid, "user_id": uid, "user_screen_name": f"user{uid}", "created_at": at,
              "text": text if text is not None else f"tweet {tid}"}
    record.update(extra)
    return json.dumps(record)


@pytest.fixture
def write_ndjson(tmp_path):
    def _write(name, lines):
        path = tmp_path / name
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return path
    return _write


# --- acceptance reporting -------------------------------------------------

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome; printed in the terminal summary."""
    def _record(number, title, passed, detail=""):
        _CRITERIA[number] = (title, bool(passed), detail)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title}" + (f" -- {detail}" if detail else ""))
