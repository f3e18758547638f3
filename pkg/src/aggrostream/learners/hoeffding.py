"""Hoeffding tree over numeric attributes with Gaussian attribute observers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..types import ClassDistribution
from .base import (
    ContractError,
    MergeError,
    check_features,
    check_label,
    hoeffding_bound,
    laplace,
)

_SQRT2 = math.sqrt(2.0)


@dataclass
class HTParams:
    split_criterion: str = "info_gain"
    split_confidence: float = 0.01
    tie_threshold: float = 0.05
    grace_period: int = 200
    max_depth: int = 20
    n_split_points: int = 10
    min_branch_fraction: float = 0.01

    def __post_init__(self):
        self.split_criterion = self.split_criterion.lower().replace("-", "_")
        if self.split_criterion in ("infogain", "info"):
            self.split_criterion = "info_gain"
        if self.split_criterion not in ("info_gain", "gini"):
            raise ValueError(f"unknown split criterion {self.split_criterion!r}")
        if not 0.0 < self.split_confidence < 1.0:
            raise ValueError("split_confidence must lie in (0, 1)")
        if self.tie_threshold <= 0:
            raise ValueError("tie_threshold must be > 0")
        if self.grace_period < 1:
            raise ValueError("grace_period must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


def entropy(dist) -> float:
    total = math.fsum(dist)
    if total <= 0:
        return 0.0
    h = 0.0
    for d in dist:
        if d > 0:
            p = d / total
            h -= p * math.log2(p)
    return h


def gini(dist) -> float:
    total = math.fsum(dist)
    if total <= 0:
        return 0.0
    return 1.0 - sum((d / total) ** 2 for d in dist)


def split_merit(criterion: str, pre, post, min_branch_fraction: float) -> float:
    """Impurity reduction of splitting ``pre`` into the ``post`` branch distributions."""
    total = math.fsum(pre)
    if total <= 0:
        return 0.0
    branch_w = [math.fsum(b) for b in post]
    if sum(1 for w in branch_w if w / total >= min_branch_fraction) < 2:
        return -math.inf
    impurity = entropy if criterion == "info_gain" else gini
    return impurity(pre) - sum(w / total * impurity(b) for w, b in zip(branch_w, post))


def merit_range(criterion: str, n_classes: int) -> float:
    return math.log2(max(n_classes, 2)) if criterion == "info_gain" else 1.0


class GaussianObserver:
    """Per-class weighted mean/variance/min/max of one numeric attribute."""

    __slots__ = ("n", "mean", "m2", "lo", "hi")

    def __init__(self, n_classes: int):
        self.n = [0.0] * n_classes
        self.mean = [0.0] * n_classes
        self.m2 = [0.0] * n_classes
        self.lo = [math.inf] * n_classes
        self.hi = [-math.inf] * n_classes

    def update(self, c: int, v: float, w: float = 1.0) -> None:
        n1 = self.n[c] + w
        d = v - self.mean[c]
        self.mean[c] += w * d / n1
        self.m2[c] += w * d * (v - self.mean[c])
        self.n[c] = n1
        if v < self.lo[c]:
            self.lo[c] = v
        if v > self.hi[c]:
            self.hi[c] = v

    def merge(self, other: "GaussianObserver") -> None:
        for c in range(len(self.n)):
            nb = other.n[c]
            if nb == 0:
                continue
            na = self.n[c]
            if na == 0:
                self.n[c], self.mean[c], self.m2[c] = nb, other.mean[c], other.m2[c]
            else:
                n = na + nb
                d = other.mean[c] - self.mean[c]
                self.mean[c] += d * nb / n
                self.m2[c] += other.m2[c] + d * d * na * nb / n
                self.n[c] = n
            self.lo[c] = min(self.lo[c], other.lo[c])
            self.hi[c] = max(self.hi[c], other.hi[c])

    def weight_le(self, c: int, t: float) -> float:
        n = self.n[c]
        if n <= 0 or t < self.lo[c]:
            return 0.0
        if t >= self.hi[c]:
            return n
        var = self.m2[c] / (n - 1) if n > 1 else 0.0
        if var <= 0:
            return n if t >= self.mean[c] else 0.0
        return n * 0.5 * (1.0 + math.erf((t - self.mean[c]) / (math.sqrt(var) * _SQRT2)))

    def best_split(self, pre, criterion, n_points, min_branch_fraction) -> tuple[float, float] | None:
        """(merit, threshold) of the best of ``n_points`` evenly spaced cut points."""
        lo = min((l for l, n in zip(self.lo, self.n) if n > 0), default=math.inf)
        hi = max((h for h, n in zip(self.hi, self.n) if n > 0), default=-math.inf)
        if not hi > lo:
            return None
        best = None
        k = len(self.n)
        step = (hi - lo) / (n_points + 1)
        for j in range(1, n_points + 1):
            t = lo + step * j
            left = [self.weight_le(c, t) for c in range(k)]
            right = [max(0.0, self.n[c] - left[c]) for c in range(k)]
            m = split_merit(criterion, pre, (left, right), min_branch_fraction)
            if best is None or m > best[0]:
                best = (m, t)
        return best

    def to_list(self) -> list:
        return [self.n, self.mean, self.m2,
                [None if math.isinf(v) else v for v in self.lo],
                [None if math.isinf(v) else v for v in self.hi]]

    @classmethod
    def from_list(cls, data) -> "GaussianObserver":
        ob = cls(len(data[0]))
        ob.n, ob.mean, ob.m2 = list(data[0]), list(data[1]), list(data[2])
        ob.lo = [math.inf if v is None else v for v in data[3]]
        ob.hi = [-math.inf if v is None else v for v in data[4]]
        return ob


class Leaf:
    __slots__ = ("counts", "observers", "pending", "depth", "base_counts", "log")

    def __init__(self, n_classes: int, features, depth: int):
        self.counts = [0.0] * n_classes
        self.observers = [(i, GaussianObserver(n_classes)) for i in features]
        self.pending = 0.0
        self.depth = depth
        self.base_counts = None
        self.log = None  # replica leaves: (y, weight, values) per trained instance


class Split:
    __slots__ = ("feature", "threshold", "left", "right", "depth")

    def __init__(self, feature, threshold, left, right, depth):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.depth = depth


class HoeffdingTree:
    """Incremental decision tree.

    In the default immediate mode a leaf attempts a split every
    ``grace_period`` units of weight. Replicas created by :meth:`fork` run in
    deferred mode: they only accumulate leaf statistics, and the owning global
    tree folds them in with :meth:`merge` and then attempts the due splits in
    one place.
    """

    kind = "ht"

    def __init__(self, n_features: int, n_classes: int, params: HTParams | None = None,
                 features=None, deferred: bool = False):
        if n_classes < 2:
            raise ValueError("need at least two classes")
        self.n_features = n_features
        self.n_classes = n_classes
        self.params = params or HTParams()
        self.features = tuple(range(n_features)) if features is None else tuple(sorted(features))
        self.deferred = deferred
        self.version = 0
        self.base_version: int | None = None
        self.root: Leaf | Split = Leaf(n_classes, self.features, 0)
        self.n_splits = 0

    # -- structure helpers

    def _leaf_for(self, x) -> Leaf:
        node = self.root
        while type(node) is Split:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def leaves(self):
        """Leaves in left-to-right order."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if type(node) is Split:
                stack.append(node.right)
                stack.append(node.left)
            else:
                yield node

    def _leaves_with_parents(self):
        stack = [(self.root, None, None)]
        while stack:
            node, parent, side = stack.pop()
            if type(node) is Split:
                stack.append((node.right, node, "right"))
                stack.append((node.left, node, "left"))
            else:
                yield node, parent, side

    @property
    def n_leaves(self) -> int:
        return sum(1 for _ in self.leaves())

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_leaves - 1

    @property
    def depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves())

    # -- learning

    def predict_proba(self, x) -> ClassDistribution:
        return ClassDistribution(laplace(self._leaf_for(x).counts, self.n_classes))

    def predict(self, x) -> int:
        return self.predict_proba(x).argmax

    def learn_one(self, x, y, weight: float = 1.0) -> None:
        y = check_label(y, self.n_classes)
        if len(x) != self.n_features:
            raise ContractError(f"expected {self.n_features} features, got {len(x)}")
        check_features(x)
        if weight <= 0:
            return
        leaf = self._leaf_for(x)
        leaf.counts[y] += weight
        leaf.pending += weight
        if leaf.log is not None:
            leaf.log.append((y, weight, tuple(x[i] for i, _ in leaf.observers)))
            return
        for i, ob in leaf.observers:
            ob.update(y, x[i], weight)
        if not self.deferred and leaf.pending >= self.params.grace_period:
            self._attempt(leaf)

    def _attempt(self, leaf: Leaf, parent: Split | None = None, side: str | None = None) -> bool:
        leaf.pending = 0.0
        p = self.params
        if leaf.depth >= p.max_depth:
            return False
        pre = leaf.counts
        if sum(1 for c in pre if c > 0) < 2:
            return False
        candidates = []
        for i, ob in leaf.observers:
            res = ob.best_split(pre, p.split_criterion, p.n_split_points, p.min_branch_fraction)
            if res is not None and res[0] > -math.inf:
                candidates.append((res[0], i, res[1]))
        if not candidates:
            return False
        candidates.sort(key=lambda c: (-c[0], c[1]))
        g1, feature, threshold = candidates[0]
        g2 = candidates[1][0] if len(candidates) > 1 else 0.0
        eps = hoeffding_bound(merit_range(p.split_criterion, self.n_classes), p.split_confidence, math.fsum(pre))
        if g1 <= 0 or not (g1 - g2 > eps or eps < p.tie_threshold):
            return False
        if parent is None and leaf is not self.root:
            for lf, par, sd in self._leaves_with_parents():
                if lf is leaf:
                    parent, side = par, sd
                    break
        node = Split(feature, threshold,
                     Leaf(self.n_classes, self.features, leaf.depth + 1),
                     Leaf(self.n_classes, self.features, leaf.depth + 1),
                     leaf.depth)
        if parent is None:
            self.root = node
        else:
            setattr(parent, side, node)
        self.n_splits += 1
        return True

    def attempt_splits(self) -> int:
        """Try to split every leaf whose pending weight reached the grace period."""
        due = [(lf, par, sd) for lf, par, sd in self._leaves_with_parents()
               if lf.pending >= self.params.grace_period]
        return sum(self._attempt(lf, par, sd) for lf, par, sd in due)

    def end_batch(self) -> int:
        n = self.attempt_splits()
        self.version += 1
        return n

    # -- replicas

    def fork(self, stream_id: int = 0) -> "HoeffdingTree":
        """Deferred-split replica sharing this tree's structure and leaf counts."""
        rep = HoeffdingTree.__new__(HoeffdingTree)
        rep.n_features, rep.n_classes, rep.params = self.n_features, self.n_classes, self.params
        rep.features = self.features
        rep.deferred = True
        rep.version = self.version
        rep.base_version = self.version
        rep.n_splits = self.n_splits

        def copy(node):
            if type(node) is Split:
                return Split(node.feature, node.threshold, copy(node.left), copy(node.right), node.depth)
            leaf = Leaf(self.n_classes, (), node.depth)
            leaf.counts = list(node.counts)
            leaf.base_counts = tuple(node.counts)
            leaf.observers = [(i, None) for i in self.features]
            leaf.log = []
            return leaf

        rep.root = copy(self.root)
        return rep

    def absorb(self, replicas) -> bool:
        """Fold replica leaf statistics into this tree without attempting splits.

        The instances every replica routed to a leaf are summarized into one
        batch observer in a canonical (sorted) order, which is then merged with
        the parallel-moments rule. The result is therefore bit-identical however
        the batch was partitioned. Returns whether any replica had trained.
        """
        for r in replicas:
            if r.base_version != self.version:
                raise MergeError(f"replica of version {r.base_version} cannot merge into version {self.version}")
        changed = False
        if not replicas:
            return changed
        for leaf, *reps in zip(self.leaves(), *(r.leaves() for r in replicas)):
            entries = []
            for rl in reps:
                if rl.pending == 0:
                    continue
                for c in range(self.n_classes):
                    leaf.counts[c] += rl.counts[c] - rl.base_counts[c]
                leaf.pending += rl.pending
                entries.extend(rl.log)
            if not entries:
                continue
            changed = True
            entries.sort()
            for j, (_, ob) in enumerate(leaf.observers):
                batch = GaussianObserver(self.n_classes)
                for y, w, values in entries:
                    batch.update(y, values[j], w)
                ob.merge(batch)
        return changed

    def merge(self, replicas) -> "HoeffdingTree":
        """Fold replicas in and attempt due splits; a no-op merge leaves the version alone."""
        if self.absorb(replicas):
            self.end_batch()
        return self

    # -- serialization

    def to_dict(self) -> dict:
        def enc(node):
            if type(node) is Split:
                return {"f": node.feature, "t": node.threshold, "d": node.depth,
                        "l": enc(node.left), "r": enc(node.right)}
            return {"c": node.counts, "p": node.pending, "d": node.depth,
                    "o": [ob.to_list() for _, ob in node.observers]}
        return {"n_features": self.n_features, "n_classes": self.n_classes,
                "params": asdict(self.params), "features": list(self.features),
                "version": self.version, "n_splits": self.n_splits, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, d: dict) -> "HoeffdingTree":
        tree = cls(d["n_features"], d["n_classes"], HTParams(**d["params"]), d["features"])
        tree.version = d["version"]
        tree.n_splits = d["n_splits"]

        def dec(node):
            if "f" in node:
                return Split(node["f"], node["t"], dec(node["l"]), dec(node["r"]), node["d"])
            leaf = Leaf(tree.n_classes, tree.features, node["d"])
            leaf.counts = list(node["c"])
            leaf.pending = node["p"]
            leaf.observers = [(i, GaussianObserver.from_list(o)) for i, o in zip(tree.features, node["o"])]
            return leaf

        tree.root = dec(d["root"])
        return tree

    def leaf_statistics(self) -> list[tuple]:
        """Flat view of every leaf's counts and observer moments, for comparisons."""
        return [(tuple(leaf.counts), tuple((i, tuple(ob.n), tuple(ob.mean), tuple(ob.m2)) for i, ob in leaf.observers))
                for leaf in self.leaves()]
