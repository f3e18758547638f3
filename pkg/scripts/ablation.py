"""Toggle preprocessing, normalization and the adaptive lexicon on a labeled stream.

Prints one CSV row per (classifier, classes, p, n, ad) combination with the
final cumulative weighted F1.
"""

import argparse
import csv
import itertools
import sys

from aggrostream.engine import Engine, PipelineConfig
from aggrostream.evaluate import metrics
from aggrostream.fixtures import synthetic_lines
from aggrostream.ingest import replay, StreamSource


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input", help="labeled JSON-lines stream (default: synthetic)")
    ap.add_argument("-n", type=int, default=20_000, help="synthetic stream length")
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--classifiers", default="ht,arf,slr")
    ap.add_argument("--normalize", default="off,minmax_no_outliers")
    args = ap.parse_args()

    lines = list(replay(StreamSource.parse(args.input))) if args.input else synthetic_lines(args.n, args.seed)
    out = csv.writer(sys.stdout)
    out.writerow(["classifier", "classes", "preprocess", "normalize", "adaptive_bow", "accuracy", "f1"])
    grid = itertools.product(args.classifiers.split(","), (2, 3), (True, False),
                             args.normalize.split(","), (True, False))
    for clf, classes, p, n, ad in grid:
        cfg = PipelineConfig(classifier=clf, classes=classes, preprocess=p, normalize=n, adaptive_bow=ad,
                             seed=args.seed)
        engine = Engine(cfg)
        engine.run_all(lines)
        m = metrics(engine.evaluator.cm)
        out.writerow([clf, classes, p, n, ad, f"{m.accuracy:.4f}", f"{m.weighted_f1:.4f}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
