"""Stub: turn a hydrated copy of the public labeled tweet dataset into JSON lines.

The dataset ships only tweet ids and labels. Hydrate the ids with your own
API credentials (for example with ``twarc hydrate``), then run::

    python scripts/hydrate_dataset.py --labels labels.csv --tweets hydrated.jsonl -o dataset.jsonl

``labels.csv`` needs ``tweet_id,label`` columns. Labels outside
normal/abusive/hateful (such as spam) are dropped. Point the
``AGGRO_DATASET`` environment variable at the output to enable the optional
dataset acceptance test.
"""

import argparse
import csv
import json
import sys


def convert(doc: dict, label: str) -> dict:
    user = doc.get("user") or {}
    return {
        "id": doc.get("id_str") or str(doc.get("id")),
        "text": doc.get("full_text") or doc.get("text", ""),
        "created_at": doc.get("created_at"),
        "label": label,
        "is_retweet": "retweeted_status" in doc,
        "is_reply": doc.get("in_reply_to_status_id") is not None,
        "user": {"id": user.get("id_str") or str(user.get("id", "")),
                 **{k: user[k] for k in ("created_at", "statuses_count", "listed_count",
                                         "followers_count", "friends_count") if user.get(k) is not None}},
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--labels", required=True)
    ap.add_argument("--tweets", required=True)
    ap.add_argument("-o", "--output", required=True)
    args = ap.parse_args()
    with open(args.labels, newline="", encoding="utf-8") as fh:
        labels = {row["tweet_id"]: row["label"].strip().lower() for row in csv.DictReader(fh)}
    kept = dropped = 0
    with open(args.tweets, encoding="utf-8") as src, open(args.output, "w", encoding="utf-8") as out:
        for line in src:
            doc = json.loads(line)
            tid = doc.get("id_str") or str(doc.get("id"))
            label = labels.get(tid)
            if label not in ("normal", "abusive", "hateful"):
                dropped += 1
                continue
            rec = convert(doc, label)
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
            kept += 1
    print(f"kept {kept}, dropped {dropped}", file=sys.stderr)


if __name__ == "__main__":
    main()
