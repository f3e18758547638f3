"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import itertools
import json
import logging
import signal
import sys
import time
from pathlib import Path

from . import __version__
from .engine import ConfigError, Engine, EngineError, PipelineConfig, write_alerts, write_samples
from .evaluate import EmptyMetricsError, emit_report, metrics
from .ingest import (
    StreamSource,
    SyntheticConfig,
    generate_synthetic,
    multiplex,
    replay,
    serialize_tweet,
    write_jsonl,
)
from .learners import MergeError, serialize

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("aggrostream")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3

# flag dest → config key; values of None mean "not given on the command line"
_FLAG_KEYS = ("classifier", "classes", "preprocess", "normalize", "adaptive_bow", "workers", "batch_size",
              "batch_interval_ms", "alert_threshold", "sample_rate", "boost_factor", "seed", "stats_file",
              "swear_lexicon", "sentiment_lexicon", "pos_lexicon", "window", "sample_every")


class InputError(OSError):
    pass


def on_off(value: str) -> bool:
    v = value.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {value!r}")


def load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        if path.endswith(".json"):
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_config(args) -> PipelineConfig:
    doc = load_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    if getattr(args, "disable_feature", None):
        doc["disabled_features"] = [int(d) if str(d).isdigit() else d for d in args.disable_feature]
    try:
        return PipelineConfig.from_dict(doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--config", help="TOML or JSON config file; flags override its values")
    g.add_argument("--classifier", choices=("ht", "arf", "slr"))
    g.add_argument("--classes", type=int, help="2 (normal/aggressive) or 3 (normal/abusive/hateful)")
    g.add_argument("--preprocess", type=on_off, metavar="on|off")
    g.add_argument("--normalize", metavar="MODE", help="off, minmax, minmax-no-outliers or zscore")
    g.add_argument("--adaptive-bow", type=on_off, metavar="on|off")
    g.add_argument("--workers", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--batch-interval-ms", type=int)
    g.add_argument("--alert-threshold", type=float)
    g.add_argument("--sample-rate", type=float)
    g.add_argument("--boost-factor", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--disable-feature", action="append", metavar="NAME|INDEX")
    g.add_argument("--stats-file", help="pre-computed normalization statistics (JSON)")
    g.add_argument("--swear-lexicon")
    g.add_argument("--sentiment-lexicon")
    g.add_argument("--pos-lexicon")
    g.add_argument("--window", type=int, help="sliding window for windowed metrics")
    g.add_argument("--sample-every", type=int, help="labeled instances between metric rows")


def open_input(location: str, replay_rate: float = 0.0):
    try:
        return replay(StreamSource.parse(location, replay_rate))
    except OSError as exc:
        raise InputError(f"cannot open {location}: {exc}") from None


def nonempty(lines):
    """Yield lines, raising InputError if the stream turns out to be empty."""
    it = iter(lines)
    for first in it:
        if first.strip():
            yield first
            yield from it
            return
    raise InputError("input stream is empty")


@contextlib.contextmanager
def output(path: str | None, default=None):
    if path is None:
        yield default
    elif path == "-":
        yield sys.stdout
    else:
        try:
            fh = open(path, "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise InputError(f"cannot write {path}: {exc}") from None
        with fh:
            yield fh


@contextlib.contextmanager
def graceful_stop(engine: Engine):
    """Turn SIGINT/SIGTERM into "finish the current batch", restoring the old handlers afterwards."""
    def handler(signum, frame):
        log.warning("signal %d received; finishing the current batch", signum)
        engine.stop_requested = True
    previous = {}
    for sig in (signal.SIGINT, signal.SIGTERM):
        with contextlib.suppress(ValueError):  # not on the main thread
            previous[sig] = signal.signal(sig, handler)
    try:
        yield
    finally:
        for sig, old in previous.items():
            signal.signal(sig, old)


def summary(engine: Engine) -> dict:
    out = {"records": engine.run_log.classified + engine.run_log.parse_errors,
           "classified": engine.run_log.classified, "parse_errors": engine.run_log.parse_errors,
           "alerts": engine.run_log.alerts, "labeled": engine.evaluator.labeled_seen,
           "lexicon_size": len(engine.bow.lexicon), "model_version": engine.model.version}
    try:
        m = metrics(engine.evaluator.cm)
    except EmptyMetricsError:
        return out
    out.update(accuracy=m.accuracy, precision=m.weighted_precision, recall=m.weighted_recall, f1=m.weighted_f1,
               per_class_f1=dict(zip(engine.scheme.class_names, m.f1)))
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    cfg = build_config(args)
    sources = {"labeled": open_input(args.input, args.replay_rate)}
    if args.unlabeled:
        sources["unlabeled"] = open_input(args.unlabeled, args.replay_rate)
    records = multiplex(sources) if len(sources) > 1 else (("labeled", l) for l in sources["labeled"])
    with Engine(cfg) as engine, output(args.alerts) as fa, output(args.samples) as fs, graceful_stop(engine):
        for outcome in engine.run(records):
            if fa is not None:
                write_alerts(outcome.alerts, fa)
            if fs is not None:
                write_samples(outcome.sample, engine.scheme.class_names, fs)
        finish(engine, args)
    return EXIT_OK


def finish(engine: Engine, args) -> None:
    if getattr(args, "metrics", None):
        with output(args.metrics) as fh:
            emit_report(engine.evaluator, fh)
    if getattr(args, "model_out", None):
        Path(args.model_out).write_bytes(serialize(engine.model))
    if getattr(args, "run_log", None):
        with output(args.run_log) as fh:
            json.dump({"alerts_per_user": engine.run_log.alerts_per_user, "retries": engine.run_log.retries,
                       "batch_records": engine.run_log.batch_records,
                       "batch_seconds": engine.run_log.batch_seconds}, fh, indent=2)
    doc = summary(engine)
    doc["throughput"] = engine.run_log.classified / engine.run_log.total_seconds if engine.run_log.total_seconds else 0.0
    print(json.dumps(doc, indent=2), file=sys.stderr if args.metrics == "-" else sys.stdout)


def cmd_eval(args) -> int:
    cfg = build_config(args)
    lines = nonempty(open_input(args.input, args.replay_rate))
    with Engine(cfg) as engine, graceful_stop(engine):
        engine.run_all(lines)
        if engine.evaluator.labeled_seen == 0:
            log.warning("stream contained no labeled tweets")
        finish(engine, args)
    return EXIT_OK


def _bench_lines(args) -> list[str]:
    if args.input:
        return list(nonempty(open_input(args.input)))
    cfg = SyntheticConfig(n_tweets=args.synthetic)
    return [serialize_tweet(t) for t in generate_synthetic(cfg, args.synthetic_seed)]


def cmd_bench(args) -> int:
    cfg = build_config(args)
    worker_counts = [int(w) for w in args.workers_list.split(",")]
    if any(w < 1 for w in worker_counts):
        raise ConfigError("worker counts must be >= 1")
    if args.replay_rate:
        log.warning("bench measures unthrottled throughput; ignoring --replay-rate %s", args.replay_rate)
    lines = _bench_lines(args)
    rows = []
    base = None
    for w in worker_counts:
        run_cfg = PipelineConfig.from_dict({**cfg.to_dict(), "workers": w})
        with Engine(run_cfg) as engine:
            if w > 1:
                engine._get_pool()  # start workers outside the timed region
            t0 = time.perf_counter()
            engine.run_all(lines)
            dt = time.perf_counter() - t0
        tps = len(lines) / dt if dt > 0 else 0.0
        base = base or tps
        rows.append({"workers": w, "records": len(lines), "seconds": round(dt, 4),
                     "tweets_per_second": round(tps, 1), "speedup": round(tps / base, 3) if base else 0.0})
    with output(args.output, sys.stdout) as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return EXIT_OK


def cmd_gen(args) -> int:
    priors = tuple(float(p) for p in args.priors.split(",")) if args.priors else SyntheticConfig.class_priors
    try:
        cfg = SyntheticConfig(n_tweets=args.n, class_priors=priors, drift_point=args.drift_point,
                              invert_point=args.invert_point, labeled_fraction=args.labeled_fraction)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with output(args.output, sys.stdout) as fh:
        write_jsonl(generate_synthetic(cfg, args.seed), fh)
    return EXIT_OK


TUNABLE = {
    "ht": ("split_criterion", "split_confidence", "tie_threshold", "grace_period", "max_depth"),
    "arf": ("ensemble_size", "subspace_size", "poisson_lambda", "drift_window"),
    "slr": ("learning_rate", "regularizer", "regularization"),
}


def expand_grid(grid: dict) -> list[dict]:
    if not grid:
        return [{}]
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid entry {key!r} must be a non-empty list")
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def apply_params(base: PipelineConfig, params: dict) -> PipelineConfig:
    doc = base.to_dict()
    for key, value in params.items():
        section = next((s for s, names in TUNABLE.items() if key in names), None)
        if section is None:
            raise ConfigError(f"unknown tunable parameter {key!r}")
        doc[section][key] = value
    return PipelineConfig.from_dict(doc)


def cmd_tune(args) -> int:
    cfg = build_config(args)
    grid = {}
    if args.grid:
        try:
            grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read grid {args.grid}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"grid file: {exc}") from None
        if not isinstance(grid, dict):
            raise ConfigError("grid file must hold an object of parameter → list of values")
    configs = [(params, apply_params(cfg, params)) for params in expand_grid(grid)]
    lines = list(nonempty(open_input(args.input)))
    rows = []
    for params, run_cfg in configs:
        with Engine(run_cfg) as engine:
            engine.run_all(lines)
        try:
            m = metrics(engine.evaluator.cm)
            f1, acc = m.weighted_f1, m.accuracy
        except EmptyMetricsError:
            raise InputError("tuning needs a labeled stream") from None
        rows.append({"params": json.dumps(params, sort_keys=True), "f1": f1, "accuracy": acc})
    rows.sort(key=lambda r: (-r["f1"], r["params"]))
    for i, r in enumerate(rows):
        r["best"] = "*" if i == 0 else ""
    with output(args.output, sys.stdout) as fh:
        writer = csv.DictWriter(fh, fieldnames=["params", "f1", "accuracy", "best"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggrostream", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="classify a stream, emitting alerts and samples")
    p.add_argument("input", help="path, '-' for stdin, or tcp:HOST:PORT")
    p.add_argument("--unlabeled", help="second, unlabeled source merged in arrival order")
    p.add_argument("--replay-rate", type=float, default=0.0, help="tweets/s, 0 = unthrottled")
    p.add_argument("--alerts", help="alerts JSON-lines output")
    p.add_argument("--samples", help="boosted sample JSON-lines output")
    p.add_argument("--metrics", help="metrics CSV output")
    p.add_argument("--model-out", help="write the final model here")
    p.add_argument("--run-log", help="per-batch timing and per-user alert counts (JSON)")
    add_pipeline_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="prequential evaluation on a labeled stream")
    p.add_argument("input")
    p.add_argument("--replay-rate", type=float, default=0.0)
    p.add_argument("--metrics", default="-", help="metrics CSV output (default stdout)")
    p.add_argument("--model-out")
    p.add_argument("--run-log")
    add_pipeline_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="throughput for several worker counts")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input")
    src.add_argument("--synthetic", type=int, default=200_000, help="synthetic stream length")
    p.add_argument("--synthetic-seed", type=int, default=1)
    p.add_argument("--workers-list", default="1,8")
    p.add_argument("--replay-rate", type=float, default=0.0)
    p.add_argument("--output", help="CSV output (default stdout)")
    add_pipeline_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="write a synthetic labeled stream")
    p.add_argument("-n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--priors", help="normal,abusive,hateful")
    p.add_argument("--drift-point", type=int)
    p.add_argument("--invert-point", type=int)
    p.add_argument("--labeled-fraction", type=float, default=1.0)
    p.add_argument("-o", "--output", help="output path (default stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("tune", help="grid search over learner parameters")
    p.add_argument("input")
    p.add_argument("--grid", help="JSON object: parameter → list of values")
    p.add_argument("--output")
    add_pipeline_flags(p)
    p.set_defaults(func=cmd_tune)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EngineError, MergeError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
