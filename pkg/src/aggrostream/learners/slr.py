"""One-vs-rest logistic regression trained by constant-step SGD."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..types import ClassDistribution
from .base import ContractError, MergeError, check_features, check_label


@dataclass
class SLRParams:
    learning_rate: float = 0.1
    regularizer: str = "l2"
    regularization: float = 0.01

    def __post_init__(self):
        self.regularizer = self.regularizer.lower()
        if self.regularizer not in ("zero", "l1", "l2"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class StreamingLogReg:
    kind = "slr"

    def __init__(self, n_features: int, n_classes: int, params: SLRParams | None = None):
        if n_classes < 2:
            raise ValueError("need at least two classes")
        self.n_features = n_features
        self.n_classes = n_classes
        self.params = params or SLRParams()
        self.weights = [[0.0] * n_features for _ in range(n_classes)]
        self.bias = [0.0] * n_classes
        self.instances_seen = 0
        self.version = 0
        self.base_version: int | None = None
        self.trained_since_fork = 0

    def score(self, c: int, x) -> float:
        w = self.weights[c]
        return sigmoid(math.fsum(wi * xi for wi, xi in zip(w, x)) + self.bias[c])

    def predict_proba(self, x) -> ClassDistribution:
        return ClassDistribution.normalized([self.score(c, x) for c in range(self.n_classes)])

    def predict(self, x) -> int:
        return self.predict_proba(x).argmax

    def gradient(self, c: int, x, y: int) -> tuple[list[float], float]:
        """Gradient of the regularized log-loss of head ``c`` at (x, y)."""
        p = self.score(c, x)
        g = p - (1.0 if y == c else 0.0)
        reg = self.params.regularization
        kind = self.params.regularizer
        gw = []
        for wi, xi in zip(self.weights[c], x):
            r = reg * wi if kind == "l2" else (reg * math.copysign(1.0, wi) if kind == "l1" and wi else 0.0)
            gw.append(g * xi + r)
        return gw, g

    def loss(self, c: int, x, y: int) -> float:
        """Log-loss of head ``c`` plus the penalty whose gradient :meth:`gradient` returns."""
        z = math.fsum(wi * xi for wi, xi in zip(self.weights[c], x)) + self.bias[c]
        t = 1.0 if y == c else 0.0
        # log(1 + e^z) - t z, written to avoid overflow
        nll = max(z, 0.0) + math.log1p(math.exp(-abs(z))) - t * z
        reg = self.params.regularization
        w = self.weights[c]
        if self.params.regularizer == "l2":
            nll += 0.5 * reg * sum(wi * wi for wi in w)
        elif self.params.regularizer == "l1":
            nll += reg * sum(abs(wi) for wi in w)
        return nll

    def learn_one(self, x, y, weight: float = 1.0) -> None:
        y = check_label(y, self.n_classes)
        if len(x) != self.n_features:
            raise ContractError(f"expected {self.n_features} features, got {len(x)}")
        check_features(x)
        lr = self.params.learning_rate * weight
        for c in range(self.n_classes):
            gw, g = self.gradient(c, x, y)
            w = self.weights[c]
            for j, gj in enumerate(gw):
                w[j] -= lr * gj
            self.bias[c] -= lr * g
        if self.base_version is None:
            self.instances_seen += 1
        else:
            self.trained_since_fork += 1

    def end_batch(self) -> int:
        self.version += 1
        return 0

    def fork(self, stream_id: int = 0) -> "StreamingLogReg":
        rep = StreamingLogReg(self.n_features, self.n_classes, self.params)
        rep.weights = [list(w) for w in self.weights]
        rep.bias = list(self.bias)
        rep.instances_seen = self.instances_seen
        rep.version = self.version
        rep.base_version = self.version
        return rep

    def merge(self, replicas) -> "StreamingLogReg":
        for r in replicas:
            if r.base_version != self.version:
                raise MergeError(f"replica of version {r.base_version} cannot merge into version {self.version}")
        active = [r for r in replicas if r.trained_since_fork > 0]
        total = sum(r.trained_since_fork for r in active)
        if total:
            fracs = [r.trained_since_fork / total for r in active]
            for c in range(self.n_classes):
                self.weights[c] = [math.fsum(f * r.weights[c][j] for f, r in zip(fracs, active))
                                   for j in range(self.n_features)]
                self.bias[c] = math.fsum(f * r.bias[c] for f, r in zip(fracs, active))
            self.instances_seen += total
            self.end_batch()
        return self

    def to_dict(self) -> dict:
        return {"n_features": self.n_features, "n_classes": self.n_classes, "params": asdict(self.params),
                "weights": self.weights, "bias": self.bias, "instances_seen": self.instances_seen,
                "version": self.version}

    @classmethod
    def from_dict(cls, d: dict) -> "StreamingLogReg":
        m = cls(d["n_features"], d["n_classes"], SLRParams(**d["params"]))
        m.weights = [list(w) for w in d["weights"]]
        m.bias = list(d["bias"])
        m.instances_seen = d["instances_seen"]
        m.version = d["version"]
        return m
