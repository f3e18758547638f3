"""Incremental per-feature statistics and feature scaling.

Statistics are mergeable so each worker can keep local stats that the
coordinator folds together at the batch barrier. Quantiles come from a
log-bucketed sketch whose state depends only on the multiset of values seen,
which makes merged results independent of how a batch was partitioned.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

log = logging.getLogger(__name__)

MODES = ("off", "minmax", "minmax_no_outliers", "zscore")


def canonical_mode(mode: str) -> str:
    m = mode.strip().lower().replace("-", "_")
    if m in ("none", "false"):
        m = "off"
    if m not in MODES:
        raise ValueError(f"unknown normalization mode {mode!r}; expected one of {MODES}")
    return m


class QuantileSketch:
    """Relative-accuracy quantile sketch over log-spaced buckets.

    A value ``x > 0`` lands in bucket ``ceil(log_gamma(x))``; negatives use a
    mirrored store and values within ``min_value`` of zero a dedicated counter.
    Returned quantiles are within ``alpha`` relative error of a value of the
    requested rank. Merging adds bucket counts, so it is exact, commutative
    and associative.
    """

    __slots__ = ("alpha", "gamma", "_log_gamma", "min_value", "pos", "neg", "zero", "count")

    def __init__(self, alpha: float = 0.005, min_value: float = 1e-9):
        self.alpha = alpha
        self.gamma = (1 + alpha) / (1 - alpha)
        self._log_gamma = math.log(self.gamma)
        self.min_value = min_value
        self.pos: dict[int, int] = {}
        self.neg: dict[int, int] = {}
        self.zero = 0
        self.count = 0

    def _key(self, x: float) -> int:
        return math.ceil(math.log(x) / self._log_gamma)

    def add(self, x: float) -> None:
        self.count += 1
        if x > self.min_value:
            k = self._key(x)
            self.pos[k] = self.pos.get(k, 0) + 1
        elif x < -self.min_value:
            k = self._key(-x)
            self.neg[k] = self.neg.get(k, 0) + 1
        else:
            self.zero += 1

    def merge(self, other: "QuantileSketch") -> None:
        if other.alpha != self.alpha:
            raise ValueError("cannot merge sketches with different accuracy")
        for k, c in other.pos.items():
            self.pos[k] = self.pos.get(k, 0) + c
        for k, c in other.neg.items():
            self.neg[k] = self.neg.get(k, 0) + c
        self.zero += other.zero
        self.count += other.count

    def _value(self, k: int) -> float:
        return 2.0 * self.gamma ** k / (self.gamma + 1.0)

    def quantile(self, q: float) -> float:
        if self.count == 0:
            raise ValueError("quantile of an empty sketch")
        rank = q * (self.count - 1)
        seen = 0
        for k in sorted(self.neg, reverse=True):
            seen += self.neg[k]
            if seen > rank:
                return -self._value(k)
        seen += self.zero
        if seen > rank:
            return 0.0
        for k in sorted(self.pos):
            seen += self.pos[k]
            if seen > rank:
                return self._value(k)
        return self._value(max(self.pos)) if self.pos else 0.0

    def copy(self) -> "QuantileSketch":
        out = QuantileSketch(self.alpha, self.min_value)
        out.pos = dict(self.pos)
        out.neg = dict(self.neg)
        out.zero = self.zero
        out.count = self.count
        return out


@dataclass
class FeatureStats:
    n: int = 0
    min: float = math.inf
    max: float = -math.inf
    mean: float = 0.0
    m2: float = 0.0
    sketch: QuantileSketch = field(default_factory=QuantileSketch)

    def update(self, v: float) -> None:
        self.n += 1
        d = v - self.mean
        self.mean += d / self.n
        self.m2 += d * (v - self.mean)
        if v < self.min:
            self.min = v
        if v > self.max:
            self.max = v
        self.sketch.add(v)

    def merge(self, other: "FeatureStats") -> None:
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.min, self.max, self.mean, self.m2 = other.n, other.min, other.max, other.mean, other.m2
            self.sketch = other.sketch.copy()
            return
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean += d * other.n / n
        self.m2 += other.m2 + d * d * self.n * other.n / n
        self.n = n
        self.min = min(self.min, other.min)
        self.max = max(self.max, other.max)
        self.sketch.merge(other.sketch)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


class RunningStats:
    """One :class:`FeatureStats` per feature slot."""

    def __init__(self, n_features: int):
        self.features = [FeatureStats() for _ in range(n_features)]

    def __len__(self):
        return len(self.features)

    @property
    def n(self) -> int:
        return self.features[0].n if self.features else 0

    def update(self, values: Sequence[float]) -> None:
        if len(values) != len(self.features):
            raise ValueError(f"expected {len(self.features)} values, got {len(values)}")
        for fs, v in zip(self.features, values):
            fs.update(v)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if len(other) != len(self):
            raise ValueError("layout mismatch")
        for a, b in zip(self.features, other.features):
            a.merge(b)
        return self

    def snapshot(self) -> "StatsSnapshot":
        rows = []
        for fs in self.features:
            if fs.n == 0:
                rows.append(None)
            else:
                rows.append(FeatureSummary(fs.min, fs.max, fs.mean, fs.std,
                                           fs.sketch.quantile(0.25), fs.sketch.quantile(0.75)))
        return StatsSnapshot(tuple(rows))


def stats_merge(a: RunningStats, b: RunningStats) -> RunningStats:
    """Stats of the concatenation of both value streams (returns a new object)."""
    out = RunningStats(len(a))
    out.merge(a)
    out.merge(b)
    return out


@dataclass(frozen=True)
class FeatureSummary:
    min: float
    max: float
    mean: float
    std: float
    q25: float
    q75: float


@dataclass(frozen=True)
class StatsSnapshot:
    """Frozen per-feature summary that normalization reads from."""

    features: tuple[FeatureSummary | None, ...]

    def to_json(self, feature_ids: Sequence[int] | None = None) -> str:
        ids = feature_ids or range(len(self.features))
        doc = {str(i): (dict(vars(s)) if s else None) for i, s in zip(ids, self.features)}
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str, feature_ids: Sequence[int]) -> "StatsSnapshot":
        """Read a stats file: feature index → {min, max, mean, std, q25, q75}."""
        doc = json.loads(text)
        rows = []
        for i in feature_ids:
            entry = doc.get(str(i))
            if entry is None:
                rows.append(None)
                continue
            mn, mx = float(entry["min"]), float(entry["max"])
            rows.append(FeatureSummary(mn, mx, float(entry.get("mean", (mn + mx) / 2)),
                                       float(entry.get("std", 0.0)),
                                       float(entry.get("q25", mn)), float(entry.get("q75", mx))))
        return cls(tuple(rows))


class Normalizer:
    """Per-feature affine maps precomputed from a snapshot."""

    def __init__(self, snapshot: StatsSnapshot | None, mode: str):
        self.mode = canonical_mode(mode)
        self.snapshot = snapshot
        self._maps: list[tuple[float, float, bool] | None] = []
        if self.mode == "off" or snapshot is None:
            return
        for s in snapshot.features:
            if s is None:
                self._maps.append(None)
                continue
            if self.mode == "zscore":
                self._maps.append((s.mean, s.std, False))
                continue
            lo, hi = s.min, s.max
            if self.mode == "minmax_no_outliers":
                iqr = s.q75 - s.q25
                flo, fhi = max(lo, s.q25 - 1.5 * iqr), min(hi, s.q75 + 1.5 * iqr)
                # zero-inflated counts give a zero-width fence; keep plain min/max then
                if fhi > flo:
                    lo, hi = flo, fhi
            self._maps.append((lo, hi - lo, True))

    @property
    def ready(self) -> bool:
        return bool(self._maps) and all(m is not None for m in self._maps)

    def __call__(self, values: Sequence[float]) -> tuple[float, ...]:
        if self.mode == "off":
            return tuple(values)
        if not self.ready:
            return tuple(values)
        out = []
        for v, (a, b, clamp) in zip(values, self._maps):
            if b <= 0.0:
                out.append(0.0)
            elif clamp:
                z = (v - a) / b
                out.append(0.0 if z < 0.0 else (1.0 if z > 1.0 else z))
            else:
                out.append((v - a) / b)
        return tuple(out)


_warned_pass_through = False


def normalize(values: Sequence[float], stats: RunningStats | StatsSnapshot | None, mode: str) -> tuple[float, ...]:
    """Scale one feature vector; passes values through when stats are empty."""
    global _warned_pass_through
    snap = stats.snapshot() if isinstance(stats, RunningStats) else stats
    norm = Normalizer(snap, mode)
    if norm.mode != "off" and not norm.ready and not _warned_pass_through:
        log.warning("normalization requested before any statistics exist; passing values through")
        _warned_pass_through = True
    return norm(values)
