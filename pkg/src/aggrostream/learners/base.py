from __future__ import annotations

import json
import math
import struct
import zlib

MAGIC = b"AGST"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">4sHB")


class ContractError(ValueError):
    """An operation was called with arguments outside its contract."""


class MergeError(RuntimeError):
    pass


class DecodeError(ValueError):
    pass


def hoeffding_bound(value_range: float, confidence: float, n: float) -> float:
    """sqrt(R² ln(1/δ) / 2n)."""
    return math.sqrt(value_range * value_range * math.log(1.0 / confidence) / (2.0 * n))


def check_features(x) -> None:
    for v in x:
        if not math.isfinite(v):
            raise ContractError(f"non-finite feature value {v!r}")


def check_label(y, n_classes: int) -> int:
    if y is None or not 0 <= int(y) < n_classes:
        raise ContractError(f"label {y!r} outside the {n_classes}-class scheme")
    return int(y)


def laplace(counts, n_classes: int) -> tuple[float, ...]:
    total = math.fsum(counts) + n_classes
    return tuple((c + 1.0) / total for c in counts)


def encode(kind: str, payload: dict) -> bytes:
    body = zlib.compress(json.dumps(payload, separators=(",", ":")).encode("utf-8"), 6)
    tag = kind.encode("ascii")
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, len(tag)) + tag
    return head + body + struct.pack(">I", zlib.crc32(head + body))


def decode(blob: bytes) -> tuple[str, dict]:
    if len(blob) < _HEADER.size + 4:
        raise DecodeError("buffer too short")
    magic, version, tag_len = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DecodeError("not a model file")
    if version != FORMAT_VERSION:
        raise DecodeError(f"unsupported model format version {version}")
    (crc,) = struct.unpack(">I", blob[-4:])
    if zlib.crc32(blob[:-4]) != crc:
        raise DecodeError("checksum mismatch (truncated or corrupt model)")
    start = _HEADER.size + tag_len
    kind = blob[_HEADER.size:start].decode("ascii")
    try:
        payload = json.loads(zlib.decompress(blob[start:-4]).decode("utf-8"))
    except (zlib.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(str(exc)) from None
    return kind, payload
