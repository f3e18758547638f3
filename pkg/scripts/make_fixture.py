"""Regenerate the bundled 2k-line fixture stream."""

import argparse
from pathlib import Path

from aggrostream.ingest import SyntheticConfig, generate_synthetic, write_jsonl

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "aggrostream" / "data" / "fixture_stream.jsonl"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", type=Path, default=DEFAULT_OUT)
    ap.add_argument("--seed", type=int, default=2019)
    ap.add_argument("-n", type=int, default=2000)
    args = ap.parse_args()
    # a small unlabeled share exercises the prediction-only path
    cfg = SyntheticConfig(n_tweets=args.n, labeled_fraction=0.9)
    with open(args.output, "w", encoding="utf-8") as fh:
        n = write_jsonl(generate_synthetic(cfg, args.seed), fh)
    print(f"wrote {n} records to {args.output}")


if __name__ == "__main__":
    main()
