import io
import math

import pytest

from aggrostream.ingest import (
    ParseCounter,
    ParseError,
    SchemaError,
    StreamSource,
    SyntheticConfig,
    generate_synthetic,
    multiplex,
    parse_timestamp,
    parse_tweet,
    replay,
    serialize_tweet,
    write_jsonl,
)
from aggrostream.types import ClassLabel, LabeledTweet, TweetRecord


def test_parse_unlabeled(make_line):
    t = parse_tweet(make_line(id="1", text="hi"))
    assert type(t) is TweetRecord
    assert (t.id, t.text) == ("1", "hi")
    assert t.user.followers_count == 10


def test_parse_labeled(make_line):
    t = parse_tweet(make_line(label="abusive"))
    assert isinstance(t, LabeledTweet)
    assert t.label is ClassLabel.ABUSIVE


def test_unknown_label_value_means_unlabeled(make_line):
    assert parse_tweet(make_line(label="spam")).label is None


@pytest.mark.parametrize("line,err", [
    ("{", ParseError),
    ("[1, 2]", ParseError),
    ('{"text": "x", "created_at": 1540000000000}', SchemaError),
    ('{"id": "1", "created_at": 1540000000000}', SchemaError),
    ('{"id": "1", "text": "x"}', SchemaError),
    ('{"id": "1", "text": "", "created_at": 1540000000000}', SchemaError),
])
def test_parse_errors(line, err):
    with pytest.raises(err):
        parse_tweet(line)


def test_missing_profile_fields_default_to_zero(caplog):
    t = parse_tweet('{"id": "1", "text": "x", "created_at": 1540000000000, "user": {"statuses_count": "n/a"}}')
    assert t.user.statuses_count == 0 and t.user.friends_count == 0
    assert t.user.account_created_at == t.created_at


def test_timestamp_formats_agree():
    a = parse_timestamp("Wed Oct 10 20:19:24 +0000 2018")
    b = parse_timestamp("2018-10-10T20:19:24Z")
    c = parse_timestamp("2018-10-10T22:19:24+02:00")
    assert a == b == c == 1539202764000
    assert parse_timestamp(1539202764000) == a


def test_serialize_round_trip():
    for t in generate_synthetic(SyntheticConfig(n_tweets=200, labeled_fraction=0.5), 3):
        back = parse_tweet(serialize_tweet(t))
        assert back == t


def test_parse_counter_conservation(make_line):
    lines = [make_line(id=str(i)) for i in range(5)] + ["{", "nope", '{"id":1}']
    pc = ParseCounter()
    out = list(pc.parse(lines))
    assert len(out) == pc.emitted == 5
    assert pc.skipped == 3
    assert pc.total == len(lines)


def test_synthetic_deterministic():
    cfg = SyntheticConfig(n_tweets=300)
    a = [serialize_tweet(t) for t in generate_synthetic(cfg, 9)]
    b = [serialize_tweet(t) for t in generate_synthetic(cfg, 9)]
    assert a == b
    assert a != [serialize_tweet(t) for t in generate_synthetic(cfg, 10)]


def test_synthetic_degenerate_prior():
    cfg = SyntheticConfig(n_tweets=200, class_priors=(1.0, 0.0, 0.0))
    assert all(t.label is ClassLabel.NORMAL for t in generate_synthetic(cfg, 1))


def test_synthetic_priors_within_three_sigma():
    n, priors = 10_000, (0.6, 0.3, 0.1)
    counts = [0, 0, 0]
    for t in generate_synthetic(SyntheticConfig(n_tweets=n, class_priors=priors), 4):
        counts[int(t.label)] += 1
    for c, p in zip(counts, priors):
        assert abs(c - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_synthetic_rejects_bad_priors():
    with pytest.raises(ValueError):
        SyntheticConfig(class_priors=(0.5, 0.3, 0.1))


def test_replay_unthrottled_preserves_order(tmp_path, make_line):
    p = tmp_path / "s.jsonl"
    lines = [make_line(id=str(i)) for i in range(1000)]
    p.write_text("\n".join(lines) + "\n")
    assert list(replay(StreamSource.parse(str(p)))) == lines


def test_replay_empty_file(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    assert list(replay(StreamSource.parse(str(p)))) == []


def test_replay_missing_file_fails_at_open(tmp_path):
    with pytest.raises(OSError):
        replay(StreamSource.parse(str(tmp_path / "missing")))


def test_replay_rate_schedule(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text("\n".join(str(i) for i in range(1000)) + "\n")
    now = [0.0]

    def clock():
        return now[0]

    def sleep(dt):
        now[0] += dt

    out = list(replay(StreamSource.parse(str(p), replay_rate=100), clock=clock, sleep=sleep))
    assert len(out) == 1000
    # last line is emitted at 999/100 s; the whole stream spans 10 s ± 5%
    assert now[0] + 1 / 100 == pytest.approx(10.0, rel=0.05)


def test_replay_rate_real_clock(tmp_path):
    import time
    p = tmp_path / "s.jsonl"
    p.write_text("\n".join(str(i) for i in range(50)) + "\n")
    t0 = time.monotonic()
    list(replay(StreamSource.parse(str(p), replay_rate=200)))
    assert time.monotonic() - t0 == pytest.approx(50 / 200, rel=0.1, abs=0.03)


def test_multiplex_tags_origin():
    got = list(multiplex({"a": ["1", "2"], "b": ["3"]}))
    assert sorted(got) == [("a", "1"), ("a", "2"), ("b", "3")]
    assert [l for o, l in got if o == "a"] == ["1", "2"]


def test_source_validation():
    with pytest.raises(ValueError):
        StreamSource("synthetic")
    with pytest.raises(ValueError):
        StreamSource("file", "x", replay_rate=-1)
    assert StreamSource.parse("-").kind == "stdin"
    assert StreamSource.parse("tcp:127.0.0.1:9000").address == "127.0.0.1:9000"


def test_write_jsonl():
    buf = io.StringIO()
    n = write_jsonl(generate_synthetic(SyntheticConfig(n_tweets=5), 1), buf)
    assert n == 5 and buf.getvalue().count("\n") == 5
