"""Adaptive random forest: online bagging over random-subspace Hoeffding trees."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from ..types import ClassDistribution
from .base import MergeError, check_label
from .hoeffding import HoeffdingTree, HTParams


@dataclass
class ARFParams:
    tree: HTParams = field(default_factory=HTParams)
    ensemble_size: int = 10
    # None picks floor(sqrt(M)) + 1; 0 or anything >= M means every feature
    subspace_size: int | None = None
    poisson_lambda: float = 6.0
    # overrides the Poisson draw with a constant weight when set
    fixed_weight: float | None = None
    drift_detection: bool = True
    drift_window: int = 500
    warning_sigma: float = 2.0
    drift_sigma: float = 3.0

    def __post_init__(self):
        if isinstance(self.tree, dict):
            self.tree = HTParams(**self.tree)
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.poisson_lambda <= 0:
            raise ValueError("poisson_lambda must be > 0")
        if self.drift_window < 1:
            raise ValueError("drift_window must be >= 1")


def subspace_size(n_features: int, requested: int | None) -> int:
    if requested is None:
        k = math.isqrt(n_features) + 1
    elif requested <= 0:
        k = n_features
    else:
        k = requested
    return min(k, n_features)


class ErrorMonitor:
    """Sliding-window error rate compared against the long-run rate before the window.

    The long-run rate is Laplace-smoothed so a member that has made no mistakes
    yet is not flagged by its first error.
    """

    def __init__(self, window: int = 500, warning_sigma: float = 2.0, drift_sigma: float = 3.0):
        self.window = window
        self.warning_sigma = warning_sigma
        self.drift_sigma = drift_sigma
        self.recent: deque[int] = deque()
        self.recent_errors = 0
        self.past = 0
        self.past_errors = 0

    def add(self, error: bool) -> str:
        e = 1 if error else 0
        self.recent.append(e)
        self.recent_errors += e
        if len(self.recent) > self.window:
            old = self.recent.popleft()
            self.recent_errors -= old
            self.past += 1
            self.past_errors += old
        if len(self.recent) < self.window or self.past < self.window:
            return "none"
        p = (self.past_errors + 1) / (self.past + 2)
        sigma = math.sqrt(p * (1 - p) / self.window)
        rate = self.recent_errors / self.window
        if rate > p + self.drift_sigma * sigma:
            return "drift"
        if rate > p + self.warning_sigma * sigma:
            return "warning"
        return "none"

    def to_dict(self) -> dict:
        return {"recent": list(self.recent), "past": self.past, "past_errors": self.past_errors}

    def load(self, d: dict) -> None:
        self.recent = deque(d["recent"])
        self.recent_errors = sum(self.recent)
        self.past = d["past"]
        self.past_errors = d["past_errors"]


class Member:
    __slots__ = ("index", "resets", "rng", "features", "tree", "background", "monitor", "bits")

    def __init__(self, index: int, resets: int, seed: int, n_features: int, n_classes: int, params: ARFParams):
        self.index = index
        self.resets = resets
        self.rng = np.random.default_rng([seed, index, resets])
        k = subspace_size(n_features, params.subspace_size)
        feats = range(n_features) if k == n_features else self.rng.choice(n_features, size=k, replace=False)
        self.features = tuple(sorted(int(f) for f in feats))
        self.tree = HoeffdingTree(n_features, n_classes, params.tree, self.features)
        self.background: HoeffdingTree | None = None
        self.monitor = ErrorMonitor(params.drift_window, params.warning_sigma, params.drift_sigma)
        self.bits: list[int] | None = None


class AdaptiveRandomForest:
    kind = "arf"

    def __init__(self, n_features: int, n_classes: int, params: ARFParams | None = None, seed: int = 0):
        self.n_features = n_features
        self.n_classes = n_classes
        self.params = params or ARFParams()
        self.seed = seed
        self.version = 0
        self.base_version: int | None = None
        self.deferred = False
        self.n_drifts = 0
        self.members = [Member(i, 0, seed, n_features, n_classes, self.params)
                        for i in range(self.params.ensemble_size)]

    def predict_proba(self, x) -> ClassDistribution:
        k = self.n_classes
        acc = [0.0] * k
        for m in self.members:
            for c, p in enumerate(m.tree.predict_proba(x)):
                acc[c] += p
        n = len(self.members)
        return ClassDistribution.normalized([a / n for a in acc])

    def predict(self, x) -> int:
        return self.predict_proba(x).argmax

    def _weight(self, m: Member) -> float:
        if self.params.fixed_weight is not None:
            return self.params.fixed_weight
        return float(m.rng.poisson(self.params.poisson_lambda))

    def learn_one(self, x, y, weight: float = 1.0) -> None:
        y = check_label(y, self.n_classes)
        for m in self.members:
            error = m.tree.predict(x) != y
            k = self._weight(m) * weight
            if k > 0:
                m.tree.learn_one(x, y, k)
                if m.background is not None:
                    m.background.learn_one(x, y, k)
            if not self.params.drift_detection:
                continue
            if self.deferred:
                m.bits.append(1 if error else 0)
            else:
                self._monitor(m, error)

    def _monitor(self, m: Member, error: bool) -> bool:
        """Feed one correctness bit; returns True when the member was replaced."""
        state = m.monitor.add(error)
        if state == "warning" and m.background is None:
            m.background = HoeffdingTree(self.n_features, self.n_classes, self.params.tree, m.features)
        elif state == "drift":
            self._replace(m)
            return True
        return False

    def _replace(self, m: Member) -> None:
        i = self.members.index(m)
        fresh = Member(m.index, m.resets + 1, self.seed, self.n_features, self.n_classes, self.params)
        if m.background is not None:
            # the background tree was grown on the old member's subset
            fresh.features = m.features
            fresh.tree = m.background
        self.members[i] = fresh
        self.n_drifts += 1

    def trees(self):
        for m in self.members:
            yield m.tree
            if m.background is not None:
                yield m.background

    def end_batch(self) -> int:
        n = sum(t.attempt_splits() for t in self.trees())
        self.version += 1
        return n

    # -- replicas

    def fork(self, stream_id: int = 0) -> "AdaptiveRandomForest":
        rep = AdaptiveRandomForest.__new__(AdaptiveRandomForest)
        rep.n_features, rep.n_classes, rep.params, rep.seed = self.n_features, self.n_classes, self.params, self.seed
        rep.version = rep.base_version = self.version
        rep.deferred = True
        rep.n_drifts = self.n_drifts
        rep.members = []
        for m in self.members:
            r = Member.__new__(Member)
            r.index, r.resets, r.features = m.index, m.resets, m.features
            r.rng = np.random.default_rng([self.seed, m.index, m.resets, self.version, stream_id, 1])
            r.tree = m.tree.fork()
            r.background = m.background.fork() if m.background is not None else None
            r.monitor = None
            r.bits = []
            rep.members.append(r)
        return rep

    def merge(self, replicas) -> "AdaptiveRandomForest":
        for r in replicas:
            if r.base_version != self.version:
                raise MergeError(f"replica of version {r.base_version} cannot merge into version {self.version}")
        members = list(self.members)
        changed = False
        for i, m in enumerate(members):
            changed |= m.tree.absorb([r.members[i].tree for r in replicas])
            if m.background is not None:
                changed |= m.background.absorb([r.members[i].background for r in replicas])
            changed |= any(r.members[i].bits for r in replicas)
        if not changed:
            return self
        if self.params.drift_detection:
            for i, m in enumerate(members):
                for b in (b for r in replicas for b in r.members[i].bits):
                    # a replaced member ignores the rest of this batch's bits
                    if self._monitor(m, bool(b)):
                        break
        self.end_batch()
        return self

    # -- serialization

    def to_dict(self) -> dict:
        members = []
        for m in self.members:
            members.append({
                "index": m.index, "resets": m.resets, "features": list(m.features),
                "rng": m.rng.bit_generator.state, "tree": m.tree.to_dict(),
                "background": m.background.to_dict() if m.background is not None else None,
                "monitor": m.monitor.to_dict(),
            })
        params = asdict(self.params)
        return {"n_features": self.n_features, "n_classes": self.n_classes, "params": params,
                "seed": self.seed, "version": self.version, "n_drifts": self.n_drifts, "members": members}

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptiveRandomForest":
        params = ARFParams(**d["params"])
        model = cls.__new__(cls)
        model.n_features, model.n_classes, model.params, model.seed = d["n_features"], d["n_classes"], params, d["seed"]
        model.version, model.n_drifts = d["version"], d["n_drifts"]
        model.base_version = None
        model.deferred = False
        model.members = []
        for md in d["members"]:
            m = Member.__new__(Member)
            m.index, m.resets, m.features = md["index"], md["resets"], tuple(md["features"])
            m.rng = np.random.default_rng()
            m.rng.bit_generator.state = md["rng"]
            m.tree = HoeffdingTree.from_dict(md["tree"])
            m.background = HoeffdingTree.from_dict(md["background"]) if md["background"] else None
            m.monitor = ErrorMonitor(params.drift_window, params.warning_sigma, params.drift_sigma)
            m.monitor.load(md["monitor"])
            m.bits = None
            model.members.append(m)
        return model

    def leaf_statistics(self) -> list:
        return [t.leaf_statistics() for t in self.trees()]
