"""Incremental classifiers sharing one contract.

Every learner exposes ``predict_proba``, ``learn_one``, ``fork`` (a replica
for one worker), ``merge`` (fold replicas back at a barrier), ``end_batch``
and ``to_dict``/``from_dict``. :func:`serialize` wraps the dict form in a
versioned, checksummed binary envelope.
"""

from __future__ import annotations

from .arf import AdaptiveRandomForest, ARFParams
from .base import ContractError, DecodeError, MergeError, decode, encode, hoeffding_bound
from .hoeffding import HoeffdingTree, HTParams
from .slr import SLRParams, StreamingLogReg

KINDS = {"ht": HoeffdingTree, "arf": AdaptiveRandomForest, "slr": StreamingLogReg}

__all__ = [
    "ARFParams", "AdaptiveRandomForest", "ContractError", "DecodeError", "HTParams", "HoeffdingTree",
    "MergeError", "SLRParams", "StreamingLogReg", "deserialize", "hoeffding_bound", "make_learner",
    "serialize",
]


def make_learner(kind: str, n_features: int, n_classes: int, *, ht: HTParams | None = None,
                 arf: ARFParams | None = None, slr: SLRParams | None = None, seed: int = 0):
    kind = kind.lower()
    if kind == "ht":
        return HoeffdingTree(n_features, n_classes, ht)
    if kind == "arf":
        if arf is None:
            arf = ARFParams(tree=ht or HTParams())
        return AdaptiveRandomForest(n_features, n_classes, arf, seed=seed)
    if kind == "slr":
        return StreamingLogReg(n_features, n_classes, slr)
    raise ValueError(f"unknown classifier {kind!r}; expected one of {sorted(KINDS)}")


def serialize(model) -> bytes:
    return encode(model.kind, model.to_dict())


def deserialize(blob: bytes):
    kind, payload = decode(blob)
    if kind not in KINDS:
        raise DecodeError(f"unknown model kind {kind!r}")
    try:
        return KINDS[kind].from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"malformed {kind} payload: {exc}") from None
