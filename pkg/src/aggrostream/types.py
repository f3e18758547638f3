"""Value types shared by every pipeline stage."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

MS_PER_DAY = 86_400_000.0
# 2006-01-01T00:00:00Z
EARLIEST_TWEET_MS = 1_136_073_600_000


class ClassLabel(enum.IntEnum):
    NORMAL = 0
    ABUSIVE = 1
    HATEFUL = 2

    @classmethod
    def parse(cls, value: str) -> "ClassLabel":
        return cls[value.strip().upper()]

    @property
    def wire(self) -> str:
        return self.name.lower()


class ClassScheme(enum.Enum):
    """Two-class merges abusive and hateful into a single aggressive class."""

    TWO = 2
    THREE = 3

    @classmethod
    def from_count(cls, n: int) -> "ClassScheme":
        try:
            return cls(int(n))
        except ValueError:
            raise ValueError(f"classes must be 2 or 3, got {n!r}") from None

    @property
    def n_classes(self) -> int:
        return self.value

    @property
    def class_names(self) -> tuple[str, ...]:
        if self is ClassScheme.TWO:
            return ("normal", "aggressive")
        return ("normal", "abusive", "hateful")


NORMAL_INDEX = 0


def effective_label(label: ClassLabel, scheme: ClassScheme) -> int:
    """Map a base label onto the class index used by the models."""
    label = ClassLabel(label)
    if scheme is ClassScheme.THREE:
        return int(label)
    return 0 if label is ClassLabel.NORMAL else 1


@dataclass(frozen=True, slots=True)
class UserProfile:
    account_created_at: int
    statuses_count: int = 0
    listed_count: int = 0
    followers_count: int = 0
    friends_count: int = 0
    id: str = ""

    def __post_init__(self):
        for name in ("statuses_count", "listed_count", "followers_count", "friends_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True, slots=True)
class TweetRecord:
    id: str
    text: str
    created_at: int  # epoch ms UTC
    user: UserProfile
    is_retweet: bool = False
    is_reply: bool = False

    def __post_init__(self):
        if not self.text:
            raise ValueError("tweet text must be non-empty")
        if self.created_at < EARLIEST_TWEET_MS:
            raise ValueError("created_at is before 2006")

    @property
    def label(self) -> ClassLabel | None:
        return None

    @property
    def account_age_days(self) -> float:
        return (self.created_at - self.user.account_created_at) / MS_PER_DAY


@dataclass(frozen=True, slots=True)
class LabeledTweet(TweetRecord):
    label: ClassLabel = ClassLabel.NORMAL  # type: ignore[assignment]


@dataclass(frozen=True, slots=True)
class Instance:
    features: tuple[float, ...]
    label: int | None = None  # effective class index
    source_id: str = ""

    def __post_init__(self):
        for v in self.features:
            if not math.isfinite(v):
                raise ValueError(f"non-finite feature value in instance {self.source_id!r}")

    @property
    def is_labeled(self) -> bool:
        return self.label is not None


class ClassDistribution(tuple):
    """Class probabilities; construction checks the simplex constraint."""

    def __new__(cls, probs):
        obj = super().__new__(cls, (float(p) for p in probs))
        if not obj:
            raise ValueError("empty distribution")
        if any(p < 0.0 or p > 1.0 for p in obj) or abs(math.fsum(obj) - 1.0) > 1e-9:
            raise ValueError(f"not a probability distribution: {tuple(obj)}")
        return obj

    @classmethod
    def normalized(cls, scores) -> "ClassDistribution":
        scores = [max(0.0, float(s)) for s in scores]
        total = math.fsum(scores)
        if total <= 0.0 or not math.isfinite(total):
            return cls([1.0 / len(scores)] * len(scores))
        return cls([s / total for s in scores])

    @property
    def argmax(self) -> int:
        # ties resolve to the lowest index
        best = 0
        for i, p in enumerate(self):
            if p > self[best]:
                best = i
        return best


@dataclass(frozen=True, slots=True)
class Alert:
    source_id: str
    label: str
    confidence: float
    emitted_at: int
    user_id: str = ""

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "label": self.label,
            "confidence": self.confidence,
            "emitted_at": self.emitted_at,
        }


@dataclass(frozen=True, slots=True)
class ClassifiedInstance:
    source_id: str
    user_id: str
    predicted: int
    distribution: tuple[float, ...]
    actual: int | None = None
    origin: str = ""
    raw: str | None = field(default=None, compare=False)

    @property
    def confidence(self) -> float:
        return self.distribution[self.predicted]
