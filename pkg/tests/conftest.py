import json

import pytest

from aggrostream.fixtures import synthetic_lines
from aggrostream.ingest import format_timestamp

BASE_MS = 1_540_000_000_000


def tweet_line(id="1", text="hello world", label=None, created_ms=BASE_MS, age_days=10.0, **user):
    doc = {
        "id": id,
        "text": text,
        "created_at": format_timestamp(created_ms),
        "user": {
            "id": user.pop("user_id", "u1"),
            "created_at": format_timestamp(int(created_ms - age_days * 86_400_000)),
            "statuses_count": 5, "listed_count": 1, "followers_count": 10, "friends_count": 20,
            **user,
        },
    }
    if label is not None:
        doc["label"] = label
    return json.dumps(doc)


@pytest.fixture(scope="session")
def small_stream():
    return synthetic_lines(1500, 11)


@pytest.fixture
def make_line():
    return tweet_line
