"""Tweet → feature vector, plus the adaptive swear-word lexicon."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .textprep import URL_RE, CleanedText
from .types import MS_PER_DAY, TweetRecord

FEATURE_NAMES = (
    "account_age_days",
    "statuses_count",
    "listed_count",
    "hashtag_count",
    "url_count",
    "uppercase_word_count",
    "adj_rel_freq",
    "adv_rel_freq",
    "verb_rel_freq",
    "mean_words_per_sentence",
    "mean_word_length",
    "sentiment_pos",
    "sentiment_neg",
    "swear_count",
    "followers_count",
    "friends_count",
)
N_FEATURES = len(FEATURE_NAMES)
HASHTAG_COUNT_RE = re.compile(r"#\w+")
_LETTERS_RE = re.compile(r"[^\W\d_]+")


@dataclass(frozen=True)
class FeatureLayout:
    """Which canonical feature slots are on, in canonical order."""

    enabled: tuple[int, ...] = tuple(range(N_FEATURES))

    def __post_init__(self):
        if not self.enabled:
            raise ValueError("at least one feature must be enabled")
        if list(self.enabled) != sorted(set(self.enabled)) or not all(0 <= i < N_FEATURES for i in self.enabled):
            raise ValueError(f"invalid feature selection {self.enabled}")

    @classmethod
    def without(cls, disabled: Iterable[int | str]) -> "FeatureLayout":
        off = {FEATURE_NAMES.index(d) if isinstance(d, str) else int(d) for d in disabled}
        return cls(tuple(i for i in range(N_FEATURES) if i not in off))

    @property
    def size(self) -> int:
        return len(self.enabled)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(FEATURE_NAMES[i] for i in self.enabled)

    def position(self, name: str) -> int | None:
        idx = FEATURE_NAMES.index(name)
        return self.enabled.index(idx) if idx in self.enabled else None


# --------------------------------------------------------------------------
# lexicons


@dataclass(frozen=True)
class Lexicons:
    swear_seed: frozenset[str]
    sentiment: Mapping[str, int]
    pos: Mapping[str, str]


def _data_path(name: str):
    return resources.files("aggrostream") / "data" / name


def read_word_list(path) -> frozenset[str]:
    text = Path(str(path)).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def read_sentiment(path) -> dict[str, int]:
    out = {}
    for line in Path(str(path)).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        word, score = line.rsplit("\t", 1)
        s = int(score)
        if s == 0 or not -5 <= s <= 5:
            raise ValueError(f"sentiment score for {word!r} out of range: {s}")
        out[word.lower()] = s
    return out


def read_pos(path) -> dict[str, str]:
    out = {}
    for line in Path(str(path)).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        word, tag = line.split("\t")
        if tag not in ("adjective", "adverb", "verb"):
            raise ValueError(f"unknown POS tag {tag!r}")
        out.setdefault(word.lower(), tag)
    return out


@lru_cache(maxsize=8)
def load_lexicons(swear: str | None = None, sentiment: str | None = None, pos: str | None = None) -> Lexicons:
    """Load lexicon files; ``None`` picks the bundled default for that file."""
    return Lexicons(
        swear_seed=read_word_list(swear or _data_path("swear_seed.txt")),
        sentiment=read_sentiment(sentiment or _data_path("sentiment.tsv")),
        pos=read_pos(pos or _data_path("pos.tsv")),
    )


# --------------------------------------------------------------------------
# individual feature helpers


def count_uppercase_words(tokens: Iterable[str]) -> int:
    """Tokens whose letters are all uppercase and number at least two."""
    n = 0
    for tok in tokens:
        letters = tok if tok.isalpha() else "".join(_LETTERS_RE.findall(tok))
        if len(letters) >= 2 and letters.isupper():
            n += 1
    return n


def pos_rel_freqs(tokens, pos_lexicon: Mapping[str, str]) -> tuple[float, float, float]:
    if not tokens:
        return 0.0, 0.0, 0.0
    adj = adv = verb = 0
    for tok in tokens:
        tag = pos_lexicon.get(tok.lower())
        if tag == "adjective":
            adj += 1
        elif tag == "adverb":
            adv += 1
        elif tag == "verb":
            verb += 1
    n = len(tokens)
    return adj / n, adv / n, verb / n


def stylistic(sentences, tokens) -> tuple[float, float]:
    """(mean words per sentence, mean word length)."""
    wps = sum(len(s) for s in sentences) / len(sentences) if sentences else 0.0
    wl = sum(len(t) for t in tokens) / len(tokens) if tokens else 0.0
    return wps, wl


def sentiment(tokens, sentiment_lexicon: Mapping[str, int]) -> tuple[int, int]:
    """Dual-scale score: strongest positive in [1, 5], strongest negative in [-5, -1]."""
    pos, neg = 1, -1
    for tok in tokens:
        s = sentiment_lexicon.get(tok.lower())
        if s is None:
            continue
        if s > pos:
            pos = s
        elif s < neg:
            neg = s
    return pos, neg


def swear_count(tokens, lexicon: frozenset[str] | set[str]) -> int:
    return sum(1 for tok in tokens if tok.lower() in lexicon)


def hashtag_count(raw: str) -> int:
    return len(HASHTAG_COUNT_RE.findall(raw))


def url_count(raw: str) -> int:
    return len(URL_RE.findall(raw))


def extract_all(tweet: TweetRecord, cleaned: CleanedText, lexicon, lexicons: Lexicons) -> tuple[float, ...]:
    """Full 16-slot vector in canonical order."""
    tokens = cleaned.tokens
    adj, adv, verb = pos_rel_freqs(tokens, lexicons.pos)
    wps, wl = stylistic(cleaned.sentences, tokens)
    spos, sneg = sentiment(tokens, lexicons.sentiment)
    user = tweet.user
    return (
        (tweet.created_at - user.account_created_at) / MS_PER_DAY,
        float(user.statuses_count),
        float(user.listed_count),
        float(hashtag_count(tweet.text)),
        float(url_count(tweet.text)),
        float(count_uppercase_words(tokens)),
        adj,
        adv,
        verb,
        wps,
        wl,
        float(spos),
        float(sneg),
        float(swear_count(tokens, lexicon)),
        float(user.followers_count),
        float(user.friends_count),
    )


def extract(tweet: TweetRecord, cleaned: CleanedText, lexicon, lexicons: Lexicons,
            layout: FeatureLayout | None = None) -> tuple[float, ...]:
    full = extract_all(tweet, cleaned, lexicon, lexicons)
    if layout is None or layout.size == N_FEATURES:
        return full
    return tuple(full[i] for i in layout.enabled)


# --------------------------------------------------------------------------
# adaptive bag of words


@dataclass
class BowParams:
    refresh_period: int = 1000
    min_rate: float = 0.005
    min_ratio: float = 5.0
    min_count: float = 10.0
    # counts and totals are multiplied by this after every refresh;
    # 1.0 keeps all-time statistics, 0.0 uses tumbling windows
    decay: float = 0.5

    def __post_init__(self):
        if self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError("decay must lie in [0, 1]")


@dataclass
class BowDelta:
    """Word statistics gathered by one worker during a micro-batch."""

    aggressive: Counter = field(default_factory=Counter)
    normal: Counter = field(default_factory=Counter)
    total_aggressive: int = 0
    total_normal: int = 0

    def observe(self, tokens, aggressive: bool) -> None:
        words = {w for w in (t.lower() for t in tokens) if w.isalpha()}
        if aggressive:
            self.aggressive.update(words)
            self.total_aggressive += 1
        else:
            self.normal.update(words)
            self.total_normal += 1

    @property
    def labeled(self) -> int:
        return self.total_aggressive + self.total_normal


_PRUNE_BELOW = 1e-3


class AdaptiveBow:
    """Swear-word lexicon grown and shrunk from per-class word rates.

    Counting is per distinct word per tweet. ``refresh`` applies the add/remove
    rules and then decays the statistics so they track recent behaviour.
    """

    def __init__(self, seed_lexicon: Iterable[str], params: BowParams | None = None):
        self.params = params or BowParams()
        self.seed_lexicon = frozenset(w.lower() for w in seed_lexicon)
        self.lexicon: set[str] = set(self.seed_lexicon)
        self.counts_aggressive: dict[str, float] = {}
        self.counts_normal: dict[str, float] = {}
        self.total_aggressive = 0.0
        self.total_normal = 0.0
        self.labeled_seen = 0
        self.refreshes = 0
        self.history: list[tuple[int, int, frozenset[str], frozenset[str]]] = []

    def snapshot(self) -> frozenset[str]:
        return frozenset(self.lexicon)

    def observe(self, tokens, aggressive: bool) -> None:
        delta = BowDelta()
        delta.observe(tokens, aggressive)
        self.apply(delta)

    def apply(self, delta: BowDelta) -> None:
        for src, dst in ((delta.aggressive, self.counts_aggressive), (delta.normal, self.counts_normal)):
            for w, c in src.items():
                dst[w] = dst.get(w, 0.0) + c
        self.total_aggressive += delta.total_aggressive
        self.total_normal += delta.total_normal
        self.labeled_seen += delta.labeled

    def refresh_due(self) -> bool:
        return self.labeled_seen // self.params.refresh_period > self.refreshes

    def maybe_refresh(self) -> bool:
        if not self.refresh_due():
            return False
        self.refresh()
        self.refreshes = self.labeled_seen // self.params.refresh_period
        return True

    def _rates(self, word: str) -> tuple[float, float]:
        ra = self.counts_aggressive.get(word, 0.0) / self.total_aggressive if self.total_aggressive else 0.0
        rn = self.counts_normal.get(word, 0.0) / self.total_normal if self.total_normal else 0.0
        return ra, rn

    def refresh(self) -> tuple[set[str], set[str]]:
        p = self.params
        added, removed = set(), set()
        for w, ca in self.counts_aggressive.items():
            if w in self.lexicon or ca < p.min_count:
                continue
            ra, rn = self._rates(w)
            if ra >= p.min_rate and ra >= p.min_ratio * rn:
                added.add(w)
        for w in self.lexicon:
            cn = self.counts_normal.get(w, 0.0)
            if cn < p.min_count:
                continue
            ra, rn = self._rates(w)
            if rn > ra:
                removed.add(w)
        self.lexicon |= added
        self.lexicon -= removed
        self.history.append((self.labeled_seen, len(self.lexicon), frozenset(added), frozenset(removed)))
        self._decay()
        return added, removed

    def _decay(self) -> None:
        d = self.params.decay
        if d == 1.0:
            return
        for counts in (self.counts_aggressive, self.counts_normal):
            for w in list(counts):
                v = counts[w] * d
                if v < _PRUNE_BELOW:
                    del counts[w]
                else:
                    counts[w] = v
        self.total_aggressive *= d
        self.total_normal *= d

    def state_dict(self) -> dict:
        return {
            "lexicon": sorted(self.lexicon),
            "counts_aggressive": self.counts_aggressive,
            "counts_normal": self.counts_normal,
            "totals": [self.total_aggressive, self.total_normal],
            "labeled_seen": self.labeled_seen,
            "refreshes": self.refreshes,
        }
