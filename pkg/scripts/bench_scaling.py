"""Throughput versus worker count on a synthetic stream."""

import argparse
import os
import sys

from aggrostream.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=200_000)
    ap.add_argument("--workers", default=None, help="comma list (default 1,2,4,... up to the core count)")
    ap.add_argument("--batch-size", type=int, default=8192)
    args = ap.parse_args()
    if args.workers is None:
        counts, w = [], 1
        while w <= max(1, os.cpu_count() or 1):
            counts.append(w)
            w *= 2
        args.workers = ",".join(map(str, counts))
    print(f"cpu_count={os.cpu_count()}", file=sys.stderr)
    return cli_main(["bench", "--synthetic", str(args.n), "--workers-list", args.workers,
                     "--batch-size", str(args.batch_size)])


if __name__ == "__main__":
    sys.exit(main())
