"""Tweet stream parsing, replay, multiplexing and synthetic generation.

Wire format is JSON lines, one tweet per line::

    {"id": "1", "text": "...", "created_at": "Wed Oct 10 20:19:24 +0000 2018",
     "label": "abusive",                       # optional
     "is_retweet": false, "is_reply": false,   # optional
     "user": {"id": "42", "created_at": "...", "statuses_count": 10,
              "listed_count": 0, "followers_count": 3, "friends_count": 7}}

``created_at`` accepts Twitter's ``EEE MMM dd HH:mm:ss Z yyyy`` form, ISO-8601,
or integer epoch milliseconds.
"""

from __future__ import annotations

import calendar
import json
import logging
import math
import queue
import random
import socket
import sys
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Iterator

from .types import (
    ClassLabel,
    LabeledTweet,
    TweetRecord,
    UserProfile,
)

log = logging.getLogger(__name__)


class RecordError(ValueError):
    """A single input line could not be turned into a record."""


class ParseError(RecordError):
    pass


class SchemaError(RecordError):
    pass


_MONTHS = {m: i for i, m in enumerate(
    ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"), 1)}
_PROFILE_FIELDS = ("statuses_count", "listed_count", "followers_count", "friends_count")


def parse_timestamp(value) -> int:
    """Return epoch milliseconds (UTC) for any accepted timestamp form."""
    if isinstance(value, bool):
        raise SchemaError(f"bad timestamp {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    if not isinstance(value, str):
        raise SchemaError(f"bad timestamp {value!r}")
    parts = value.split()
    # fast path for the Twitter format: "Wed Oct 10 20:19:24 +0000 2018"
    if len(parts) == 6 and parts[1] in _MONTHS:
        try:
            hh, mm, ss = (int(p) for p in parts[3].split(":"))
            tz = parts[4]
            offset = (int(tz[1:3]) * 60 + int(tz[3:5])) * (1 if tz[0] == "+" else -1)
            secs = calendar.timegm((int(parts[5]), _MONTHS[parts[1]], int(parts[2]), hh, mm, ss))
            return (secs - offset * 60) * 1000
        except (ValueError, IndexError):
            raise SchemaError(f"bad timestamp {value!r}") from None
    try:
        text = value.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise SchemaError(f"bad timestamp {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def format_timestamp(ms: int) -> str:
    return datetime.fromtimestamp(ms / 1000, tz=timezone.utc).strftime("%a %b %d %H:%M:%S +0000 %Y")


def _count(raw: dict, name: str) -> int:
    value = raw.get(name)
    if value is None:
        log.warning("missing profile field %s, defaulting to 0", name)
        return 0
    try:
        n = int(value)
    except (TypeError, ValueError):
        log.warning("unparseable profile field %s=%r, defaulting to 0", name, value)
        return 0
    return max(n, 0)


def parse_tweet(line: str) -> TweetRecord:
    """Parse one JSON document into a :class:`TweetRecord` or :class:`LabeledTweet`."""
    try:
        doc = json.loads(line)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ParseError(str(exc)) from None
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value is not an object")
    if "id" not in doc or "text" not in doc:
        raise SchemaError("record needs both 'id' and 'text'")
    text = doc["text"]
    if not isinstance(text, str) or not text:
        raise SchemaError("'text' must be a non-empty string")
    if "created_at" not in doc:
        raise SchemaError("record needs 'created_at'")
    created = parse_timestamp(doc["created_at"])

    raw_user = doc.get("user") or {}
    if not isinstance(raw_user, dict):
        raise SchemaError("'user' must be an object")
    if raw_user.get("created_at") is None:
        log.warning("tweet %s has no account creation time; using tweet time", doc["id"])
        account_created = created
    else:
        account_created = min(parse_timestamp(raw_user["created_at"]), created)
    user = UserProfile(
        account_created_at=account_created,
        id=str(raw_user.get("id", "")),
        **{name: _count(raw_user, name) for name in _PROFILE_FIELDS},
    )
    kwargs = dict(
        id=str(doc["id"]),
        text=text,
        created_at=created,
        user=user,
        is_retweet=bool(doc.get("is_retweet", False)),
        is_reply=bool(doc.get("is_reply", False)),
    )
    try:
        label = doc.get("label")
        if isinstance(label, str) and label.strip().lower() in ("normal", "abusive", "hateful"):
            return LabeledTweet(label=ClassLabel.parse(label), **kwargs)
        return TweetRecord(**kwargs)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def tweet_to_dict(tweet: TweetRecord) -> dict:
    doc = {
        "id": tweet.id,
        "text": tweet.text,
        "created_at": format_timestamp(tweet.created_at),
        "is_retweet": tweet.is_retweet,
        "is_reply": tweet.is_reply,
        "user": {
            "id": tweet.user.id,
            "created_at": format_timestamp(tweet.user.account_created_at),
            **{name: getattr(tweet.user, name) for name in _PROFILE_FIELDS},
        },
    }
    if tweet.label is not None:
        doc["label"] = tweet.label.wire
    return doc


def serialize_tweet(tweet: TweetRecord) -> str:
    return json.dumps(tweet_to_dict(tweet), ensure_ascii=False, separators=(",", ":"))


class ParseCounter:
    """Parses lines lazily while counting what was emitted and skipped."""

    def __init__(self):
        self.emitted = 0
        self.skipped = 0

    @property
    def total(self) -> int:
        return self.emitted + self.skipped

    def parse(self, lines: Iterable[str]) -> Iterator[TweetRecord]:
        for line in lines:
            if not line.strip():
                continue
            try:
                record = parse_tweet(line)
            except RecordError as exc:
                self.skipped += 1
                log.debug("skipping record: %s", exc)
                continue
            self.emitted += 1
            yield record


# --------------------------------------------------------------------------
# sources


@dataclass(frozen=True)
class StreamSource:
    kind: str  # file | stdin | tcp | synthetic
    address: str = ""
    replay_rate: float = 0.0
    seed: int | None = None
    synthetic: "SyntheticConfig | None" = None

    def __post_init__(self):
        if self.kind not in ("file", "stdin", "tcp", "synthetic"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.replay_rate < 0:
            raise ValueError("replay_rate must be >= 0")
        if self.kind == "synthetic" and self.seed is None:
            raise ValueError("synthetic sources need a seed")

    @classmethod
    def parse(cls, location: str, replay_rate: float = 0.0) -> "StreamSource":
        """``-`` is stdin, ``tcp:HOST:PORT`` a listener, anything else a path."""
        if location == "-":
            return cls("stdin", replay_rate=replay_rate)
        if location.startswith("tcp:"):
            return cls("tcp", location[4:], replay_rate=replay_rate)
        return cls("file", location, replay_rate=replay_rate)


def _tcp_lines(address: str) -> Iterator[str]:
    host, _, port = address.rpartition(":")
    with socket.create_server((host or "127.0.0.1", int(port))) as server:
        conn, _ = server.accept()
        with conn, conn.makefile("r", encoding="utf-8") as fh:
            yield from fh


def _open_lines(source: StreamSource) -> Iterator[str]:
    if source.kind == "file":
        fh = open(source.address, encoding="utf-8")  # raises OSError eagerly

        def gen():
            with fh:
                for line in fh:
                    yield line.rstrip("\n")
        return gen()
    if source.kind == "stdin":
        return (line.rstrip("\n") for line in sys.stdin)
    if source.kind == "tcp":
        return (line.rstrip("\n") for line in _tcp_lines(source.address))
    cfg = source.synthetic or SyntheticConfig()
    return (serialize_tweet(t) for t in generate_synthetic(cfg, source.seed))


def replay(source: StreamSource, clock=time.monotonic, sleep=time.sleep) -> Iterator[str]:
    """Yield raw lines from ``source``, throttled to ``replay_rate`` lines/s.

    The source is opened eagerly so an unreachable file fails here rather than
    on first iteration.
    """
    lines = _open_lines(source)
    if source.replay_rate <= 0:
        return lines

    def throttled():
        interval = 1.0 / source.replay_rate
        start = clock()
        for i, line in enumerate(lines):
            # schedule against the start time so sleep jitter does not accumulate
            delay = start + i * interval - clock()
            if delay > 0:
                sleep(delay)
            yield line
    return throttled()


_DONE = object()


def multiplex(sources: dict[str, Iterable[str]]) -> Iterator[tuple[str, str]]:
    """Merge several line streams in arrival order, tagging each with its origin."""
    q: queue.Queue = queue.Queue(maxsize=10_000)

    def pump(name, it):
        try:
            for line in it:
                q.put((name, line))
        finally:
            q.put(_DONE)

    threads = [threading.Thread(target=pump, args=item, daemon=True) for item in sources.items()]
    for t in threads:
        t.start()
    remaining = len(threads)
    while remaining:
        item = q.get()
        if item is _DONE:
            remaining -= 1
            continue
        yield item


# --------------------------------------------------------------------------
# synthetic streams

NEUTRAL_WORDS = (
    "the a to and of in is it you that for on my this with be have at are just so was "
    "me but not what all we like get out up can your do if know about one time day now "
    "from today people they go see when love new good how think more back want make "
    "really there would here still morning tonight game week home work watch music "
    "great happy need year weekend thanks friend show team night city news video phone "
    "coffee school season movie food happen look feel little long right best going"
).split()
SENTIMENT_NEG = "hate stupid ugly awful terrible idiot disgusting pathetic worst angry kill sick".split()
SENTIMENT_POS = "love great happy awesome nice beautiful amazing win glad fun".split()
EMERGENT_WORDS = ("snowflakez", "globbo", "kreeps", "zorkface", "vrunt")


@dataclass(frozen=True)
class ClassProfile:
    """Generator parameters for one class."""

    swear_rate: float  # mean swear tokens per tweet
    upper_rate: float  # mean uppercase words per tweet
    neg_rate: float
    pos_rate: float
    words_per_sentence: float
    account_age_days: float
    statuses_log_mean: float
    listed_log_mean: float
    followers_log_mean: float
    friends_log_mean: float
    hashtag_rate: float
    url_rate: float


DEFAULT_PROFILES = (
    ClassProfile(0.10, 0.96, 0.25, 0.9, 16.0, 1487.7, 8.5, 2.5, 6.5, 6.0, 0.6, 0.5),
    ClassProfile(2.54, 1.84, 1.3, 0.3, 12.7, 1292.0, 9.0, 1.2, 5.8, 5.8, 0.25, 0.2),
    ClassProfile(1.84, 1.57, 1.6, 0.2, 15.9, 1380.0, 8.8, 1.5, 6.0, 6.0, 0.35, 0.3),
)


@dataclass(frozen=True)
class SyntheticConfig:
    n_tweets: int = 10_000
    class_priors: tuple[float, ...] = (0.626, 0.316, 0.058)
    profiles: tuple[ClassProfile, ...] = DEFAULT_PROFILES
    drift_point: int | None = None
    invert_point: int | None = None
    emergent_rate_aggressive: float = 0.30
    emergent_rate_normal: float = 0.005
    emergent_word: str = EMERGENT_WORDS[0]
    labeled_fraction: float = 1.0
    start_ms: int = 1_538_352_000_000  # 2018-10-01
    duration_days: float = 10.0

    def __post_init__(self):
        if self.n_tweets <= 0:
            raise ValueError("n_tweets must be > 0")
        if len(self.class_priors) != 3 or any(p < 0 for p in self.class_priors):
            raise ValueError("class_priors needs three non-negative entries")
        if abs(math.fsum(self.class_priors) - 1.0) > 1e-9:
            raise ValueError(f"class_priors must sum to 1, got {sum(self.class_priors)}")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            raise ValueError("labeled_fraction must lie in [0, 1]")


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    # Knuth; all rates here are small
    limit, k, p = math.exp(-lam), 0, rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k


def _load_word_pools():
    from .features import load_lexicons

    lex = load_lexicons()
    swear = sorted(lex.swear_seed)
    adjs = sorted(w for w, t in lex.pos.items() if t == "adjective" and w not in lex.sentiment)
    advs = sorted(w for w, t in lex.pos.items() if t == "adverb" and w not in lex.sentiment)
    verbs = sorted(w for w, t in lex.pos.items() if t == "verb" and w not in lex.sentiment)
    return swear, adjs, advs, verbs


def generate_synthetic(config: SyntheticConfig, seed: int) -> Iterator[TweetRecord]:
    """Deterministic labeled tweet stream with class-dependent features.

    Tokens come from three pools: neutral words, the swear seed list, and the
    emergent word that only starts appearing after ``drift_point``. After
    ``invert_point`` the emergent word's class association flips.
    """
    rng = random.Random(seed)
    swear, adjs, advs, verbs = _load_word_pools()
    labels = (ClassLabel.NORMAL, ClassLabel.ABUSIVE, ClassLabel.HATEFUL)
    cum = [math.fsum(config.class_priors[: i + 1]) for i in range(3)]
    step_ms = config.duration_days * 86_400_000 / config.n_tweets
    for i in range(config.n_tweets):
        u = rng.random()
        cls = 0 if u < cum[0] else (1 if u < cum[1] else 2)
        prof = config.profiles[cls]
        aggressive = cls != 0

        n_sent = 1 + _poisson(rng, 0.6)
        sentences = []
        for _ in range(n_sent):
            n_words = max(1, int(round(rng.gauss(prof.words_per_sentence / n_sent ** 0.5, 3.0))))
            words = []
            for _ in range(n_words):
                r = rng.random()
                if r < 0.12:
                    words.append(rng.choice(adjs) if not aggressive or rng.random() < 0.6 else rng.choice(verbs))
                elif r < 0.2:
                    words.append(rng.choice(advs))
                elif r < 0.35:
                    words.append(rng.choice(verbs))
                else:
                    words.append(rng.choice(NEUTRAL_WORDS))
            sentences.append(words)
        flat_len = sum(len(s) for s in sentences)

        def inject(word):
            s = rng.randrange(len(sentences))
            sentences[s].insert(rng.randrange(len(sentences[s]) + 1), word)

        for _ in range(_poisson(rng, prof.swear_rate)):
            inject(rng.choice(swear))
        for _ in range(_poisson(rng, prof.neg_rate)):
            inject(rng.choice(SENTIMENT_NEG))
        for _ in range(_poisson(rng, prof.pos_rate)):
            inject(rng.choice(SENTIMENT_POS))
        if config.drift_point is not None and i >= config.drift_point:
            inverted = config.invert_point is not None and i >= config.invert_point
            rate_aggr, rate_norm = config.emergent_rate_aggressive, config.emergent_rate_normal
            if inverted:
                rate_aggr, rate_norm = rate_norm, rate_aggr
            if rng.random() < (rate_aggr if aggressive else rate_norm):
                inject(config.emergent_word)
        n_upper = min(_poisson(rng, prof.upper_rate), flat_len)
        for _ in range(n_upper):
            s = rng.randrange(len(sentences))
            j = rng.randrange(len(sentences[s]))
            sentences[s][j] = sentences[s][j].upper()

        text = ". ".join(" ".join(s) for s in sentences)
        text = text[0].upper() + text[1:] + rng.choice((".", "!", "!!", "?", ""))
        if rng.random() < 0.15:
            text = "@user" + str(rng.randrange(1000)) + " " + text
        if rng.random() < 0.1:
            text = "RT " + text
        for _ in range(_poisson(rng, prof.hashtag_rate)):
            text += " #" + rng.choice(NEUTRAL_WORDS) + str(rng.randrange(10))
        for _ in range(_poisson(rng, prof.url_rate)):
            text += " https://t.co/" + "".join(rng.choice("abcdefghXYZ0123") for _ in range(8))
        if rng.random() < 0.1:
            text += " " + str(rng.randrange(1, 1000))

        # whole seconds, the resolution of the wire timestamp format
        created = int(config.start_ms + i * step_ms) // 1000 * 1000
        age_days = max(0.0, rng.gauss(prof.account_age_days, 700.0))
        user = UserProfile(
            account_created_at=created - int(age_days * 86_400) * 1000,
            statuses_count=int(rng.lognormvariate(prof.statuses_log_mean, 1.5)),
            listed_count=int(rng.lognormvariate(prof.listed_log_mean, 1.5)),
            followers_count=int(rng.lognormvariate(prof.followers_log_mean, 1.8)),
            friends_count=int(rng.lognormvariate(prof.friends_log_mean, 1.2)),
            id=f"u{rng.randrange(50_000)}",
        )
        kwargs = dict(id=f"{seed}-{i}", text=text, created_at=created, user=user,
                      is_retweet=text.startswith("RT "), is_reply=text.startswith("@"))
        if rng.random() < config.labeled_fraction:
            yield LabeledTweet(label=labels[cls], **kwargs)
        else:
            yield TweetRecord(**kwargs)


def write_jsonl(records: Iterable[TweetRecord], fh) -> int:
    n = 0
    for rec in records:
        fh.write(serialize_tweet(rec))
        fh.write("\n")
        n += 1
    return n
