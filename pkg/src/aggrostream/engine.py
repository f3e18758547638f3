"""Micro-batch executor.

Each batch is split into partitions; every partition is processed by a worker
that parses, cleans, extracts features against the lexicon snapshot,
normalizes with the statistics published at the previous barrier, predicts,
and trains its own model replica (prediction first, then training). The
coordinator then merges replicas, feature statistics and word counts,
refreshes the lexicon when due, folds evaluation results in record order,
and emits alerts and samples.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import multiprocessing
import queue
import random
import signal
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .evaluate import PrequentialEvaluator
from .features import AdaptiveBow, BowDelta, BowParams, FeatureLayout, extract, load_lexicons
from .ingest import RecordError, parse_tweet
from .learners import ARFParams, HTParams, SLRParams, make_learner
from .normalize import Normalizer, RunningStats, StatsSnapshot, canonical_mode
from .textprep import clean, passthrough
from .types import NORMAL_INDEX, Alert, ClassifiedInstance, ClassScheme, effective_label

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class EngineError(RuntimeError):
    """Fatal engine condition (version mismatch, repeated worker failure)."""


@dataclass
class PipelineConfig:
    classifier: str = "ht"
    classes: int = 2
    preprocess: bool = True
    normalize: str = "minmax"
    adaptive_bow: bool = True
    workers: int = 1
    batch_size: int | None = 1024
    batch_interval_ms: int | None = None
    alert_threshold: float = 0.5
    sample_rate: float = 0.0
    boost_factor: float = 1.0
    seed: int = 0
    ht: HTParams = field(default_factory=HTParams)
    arf: ARFParams = field(default_factory=ARFParams)
    slr: SLRParams = field(default_factory=SLRParams)
    bow: BowParams = field(default_factory=BowParams)
    disabled_features: tuple = ()
    swear_lexicon: str | None = None
    sentiment_lexicon: str | None = None
    pos_lexicon: str | None = None
    stats_file: str | None = None
    window: int = 1000
    sample_every: int = 500

    def __post_init__(self):
        for name, cls in (("ht", HTParams), ("arf", ARFParams), ("slr", SLRParams), ("bow", BowParams)):
            if isinstance(getattr(self, name), dict):
                try:
                    setattr(self, name, cls(**getattr(self, name)))
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"[{name}] {exc}") from None
        self.classifier = str(self.classifier).lower()
        if self.classifier not in ("ht", "arf", "slr"):
            raise ConfigError(f"classifier must be ht, arf or slr, got {self.classifier!r}")
        try:
            ClassScheme.from_count(self.classes)
            self.normalize = canonical_mode(self.normalize)
            FeatureLayout.without(self.disabled_features)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.batch_interval_ms is not None and self.batch_size == 1024:
            # an explicit interval replaces the default count-based batching
            self.batch_size = None
        if (self.batch_size is None) == (self.batch_interval_ms is None):
            raise ConfigError("set exactly one of batch_size and batch_interval_ms")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.batch_interval_ms is not None and self.batch_interval_ms <= 0:
            raise ConfigError("batch_interval_ms must be > 0")
        if not 0.0 <= self.alert_threshold <= 1.0:
            raise ConfigError("alert_threshold must lie in [0, 1]")
        if not 0.0 <= self.sample_rate <= 1.0:
            raise ConfigError("sample_rate must lie in [0, 1]")
        if self.boost_factor < 1.0:
            raise ConfigError("boost_factor must be >= 1")
        if self.window < 1 or self.sample_every < 1:
            raise ConfigError("window and sample_every must be >= 1")

    @property
    def scheme(self) -> ClassScheme:
        return ClassScheme.from_count(self.classes)

    @property
    def layout(self) -> FeatureLayout:
        return FeatureLayout.without(self.disabled_features)

    @property
    def lexicon_paths(self) -> tuple:
        return (self.swear_lexicon, self.sentiment_lexicon, self.pos_lexicon)

    def build_model(self):
        arf = dataclasses.replace(self.arf, tree=self.ht)
        return make_learner(self.classifier, self.layout.size, self.scheme.n_classes,
                            ht=self.ht, arf=arf, slr=self.slr, seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if "disabled_features" in doc:
            doc["disabled_features"] = tuple(doc["disabled_features"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# batching and partitioning


@dataclass(frozen=True)
class MicroBatch:
    seq: int
    records: tuple  # (origin, line) pairs in arrival order
    model_version: int


def partition(batch, k: int, seed: int, batch_seq: int = 0) -> list[list]:
    """Seeded random balanced split; each partition keeps arrival order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    items = list(batch)
    if k == 1:
        return [items]
    order = list(range(len(items)))
    random.Random(f"{seed}:{batch_seq}").shuffle(order)
    buckets: list[list[int]] = [[] for _ in range(k)]
    for pos, idx in enumerate(order):
        buckets[pos % k].append(idx)
    return [[items[i] for i in sorted(b)] for b in buckets]


def count_batches(lines: Iterable, size: int) -> Iterator[list]:
    chunk = []
    for item in lines:
        chunk.append(item)
        if len(chunk) == size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


_END = object()


def interval_batches(lines: Iterable, interval_ms: int, clock=time.monotonic) -> Iterator[list]:
    """Group items by arrival time; a reader thread keeps blocking sources from stalling the cut."""
    q: queue.Queue = queue.Queue(maxsize=100_000)

    def pump():
        try:
            for item in lines:
                q.put(item)
        finally:
            q.put(_END)

    threading.Thread(target=pump, daemon=True).start()
    chunk: list = []
    deadline = clock() + interval_ms / 1000.0
    while True:
        try:
            item = q.get(timeout=max(0.0, deadline - clock()))
        except queue.Empty:
            item = None
        if item is _END:
            if chunk:
                yield chunk
            return
        if item is not None:
            chunk.append(item)
        if clock() >= deadline:
            if chunk:
                yield chunk
            chunk = []
            deadline = clock() + interval_ms / 1000.0


# --------------------------------------------------------------------------
# worker side


@dataclass
class WorkerTask:
    batch_seq: int
    partition_id: int
    records: list  # (index in batch, origin, line)
    model: object  # replica
    lexicon: frozenset
    snapshot: StatsSnapshot | None
    normalize: str
    preprocess: bool
    adaptive_bow: bool
    layout: FeatureLayout
    classes: int
    lexicon_paths: tuple
    keep_raw: bool = False
    keep_vectors: bool = False


@dataclass
class WorkerResult:
    partition_id: int
    model: object
    stats: RunningStats
    bow: BowDelta
    outputs: list  # (index, ClassifiedInstance)
    errors: list  # indices of unparseable records
    vectors: list | None = None


def process_partition(task: WorkerTask) -> WorkerResult:
    lexicons = load_lexicons(*task.lexicon_paths)
    scheme = ClassScheme.from_count(task.classes)
    norm = Normalizer(task.snapshot, task.normalize)
    stats = RunningStats(task.layout.size)
    delta = BowDelta()
    model = task.model
    prep = clean if task.preprocess else passthrough
    outputs, errors = [], []
    vectors = [] if task.keep_vectors else None
    for idx, origin, line in task.records:
        try:
            tweet = parse_tweet(line)
        except RecordError as exc:
            log.debug("record %d of batch %d skipped: %s", idx, task.batch_seq, exc)
            errors.append(idx)
            continue
        cleaned = prep(tweet.text)
        raw = extract(tweet, cleaned, task.lexicon, lexicons, task.layout)
        stats.update(raw)
        x = norm(raw)
        if vectors is not None:
            vectors.append((idx, x))
        dist = model.predict_proba(x)
        actual = None
        if tweet.label is not None:
            actual = effective_label(tweet.label, scheme)
            model.learn_one(x, actual)
            if task.adaptive_bow:
                delta.observe(cleaned.tokens, actual != NORMAL_INDEX)
        outputs.append((idx, ClassifiedInstance(
            tweet.id, tweet.user.id, dist.argmax, tuple(dist), actual, origin,
            line if task.keep_raw else None)))
    return WorkerResult(task.partition_id, model, stats, delta, outputs, errors, vectors)


# --------------------------------------------------------------------------
# alerting and sampling


def alert(inst: ClassifiedInstance, threshold: float, class_names, now_ms: int | None = None) -> Alert | None:
    if inst.predicted == NORMAL_INDEX or inst.confidence < threshold:
        return None
    stamp = int(time.time() * 1000) if now_ms is None else now_ms
    return Alert(inst.source_id, class_names[inst.predicted], inst.confidence, stamp, inst.user_id)


def keep_probability(predicted: int, sample_rate: float, boost_factor: float) -> float:
    return sample_rate if predicted == NORMAL_INDEX else min(1.0, boost_factor * sample_rate)


def _uniform(seed: int, key: str) -> float:
    h = hashlib.blake2b(f"{seed}\x1f{key}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "big") / 2.0 ** 64


def boosted_sample(instances, sample_rate: float, boost_factor: float, seed: int) -> list:
    """Keep each instance with the (boosted) rate; the coin is a hash of (seed, id)."""
    out = []
    for inst in instances:
        p = keep_probability(inst.predicted, sample_rate, boost_factor)
        if p >= 1.0 or (p > 0.0 and _uniform(seed, inst.source_id) < p):
            out.append(inst)
    return out


# --------------------------------------------------------------------------
# run log


@dataclass
class RunLog:
    batch_records: list = field(default_factory=list)
    batch_seconds: list = field(default_factory=list)
    parse_errors: int = 0
    classified: int = 0
    alerts: int = 0
    alerts_per_user: Counter = field(default_factory=Counter)
    retries: int = 0
    started: float | None = None
    finished: float | None = None

    @property
    def total_seconds(self) -> float:
        if self.started is None or self.finished is None:
            return 0.0
        return self.finished - self.started


def throughput_report(run: RunLog) -> dict:
    total = sum(run.batch_records)
    secs = run.total_seconds
    per_batch = [n / s if s > 0 else 0.0 for n, s in zip(run.batch_records, run.batch_seconds)]
    return {"records": total, "seconds": secs, "tweets_per_second": total / secs if secs > 0 else 0.0,
            "per_batch": per_batch}


# --------------------------------------------------------------------------
# coordinator


@dataclass
class BatchOutcome:
    seq: int
    classified: list
    alerts: list
    sample: list
    parse_errors: int
    model_version: int
    vectors: list | None = None


class Engine:
    """Coordinator owning the global model, statistics, lexicon and evaluator."""

    def __init__(self, config: PipelineConfig, *, keep_vectors: bool = False,
                 task_hook: Callable[[WorkerTask], None] | None = None):
        self.config = config
        self.layout = config.layout
        self.scheme = config.scheme
        lexicons = load_lexicons(*config.lexicon_paths)
        self.bow = AdaptiveBow(lexicons.swear_seed, config.bow)
        self.model = config.build_model()
        self.stats = RunningStats(self.layout.size)
        self.fixed_snapshot = None
        if config.stats_file:
            with open(config.stats_file, encoding="utf-8") as fh:
                self.fixed_snapshot = StatsSnapshot.from_json(fh.read(), self.layout.enabled)
        self.snapshot: StatsSnapshot | None = self.fixed_snapshot
        self.evaluator = PrequentialEvaluator(self.scheme.n_classes, self.scheme.class_names,
                                              config.window, config.sample_every)
        self.run_log = RunLog()
        self.keep_vectors = keep_vectors
        self.task_hook = task_hook
        self.barrier_hooks: list[Callable[["Engine", BatchOutcome], None]] = []
        self.seq = 0
        self.stop_requested = False
        self._pool = None

    # pool management

    def _get_pool(self):
        if self._pool is None:
            ctx = multiprocessing.get_context("fork")
            self._pool = ctx.Pool(self.config.workers, initializer=_worker_init)
        return self._pool

    def close(self) -> None:
        if self._pool is not None:
            self._pool.terminate()
            self._pool.join()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # batch processing

    def _tasks(self, batch: MicroBatch) -> list[WorkerTask]:
        cfg = self.config
        indexed = [(i, origin, line) for i, (origin, line) in enumerate(batch.records)]
        parts = partition(indexed, cfg.workers, cfg.seed, batch.seq)
        lexicon = self.bow.snapshot() if cfg.adaptive_bow else self.bow.seed_lexicon
        return [WorkerTask(batch.seq, pid, part, self.model.fork(pid), lexicon, self.snapshot,
                           cfg.normalize, cfg.preprocess, cfg.adaptive_bow, self.layout, cfg.classes,
                           cfg.lexicon_paths, cfg.sample_rate > 0, self.keep_vectors)
                for pid, part in enumerate(parts)]

    def _execute(self, tasks: list[WorkerTask]) -> list[WorkerResult]:
        if self.task_hook is not None:
            hook = self.task_hook
            fn = _HookedWorker(hook)
        else:
            fn = process_partition
        if self.config.workers == 1:
            return [fn(t) for t in tasks]
        return self._get_pool().map(fn, tasks, chunksize=1)

    def run_microbatch(self, batch: MicroBatch) -> BatchOutcome:
        if batch.model_version != self.model.version:
            raise EngineError(f"batch {batch.seq} expects model version {batch.model_version}, "
                              f"global is {self.model.version}")
        t0 = time.perf_counter()
        results = None
        for attempt in range(2):
            # tasks are rebuilt from the immutable batch so a retry sees fresh replicas
            tasks = self._tasks(batch)
            try:
                results = self._execute(tasks)
                break
            except Exception as exc:  # noqa: BLE001 - any worker failure aborts the batch
                if attempt == 1:
                    raise EngineError(f"batch {batch.seq} failed twice: {exc!r}") from exc
                log.warning("batch %d failed (%r); retrying once", batch.seq, exc)
                self.run_log.retries += 1
                self.close()
        outcome = self._barrier(batch, results)
        dt = time.perf_counter() - t0
        self.run_log.batch_records.append(len(batch.records))
        self.run_log.batch_seconds.append(dt)
        self.evaluator.throughput = len(batch.records) / dt if dt > 0 else None
        for hook in self.barrier_hooks:
            hook(self, outcome)
        return outcome

    def _barrier(self, batch: MicroBatch, results: list[WorkerResult]) -> BatchOutcome:
        cfg = self.config
        results = sorted(results, key=lambda r: r.partition_id)
        self.model.merge([r.model for r in results])
        for r in results:
            self.stats.merge(r.stats)
            if cfg.adaptive_bow:
                self.bow.apply(r.bow)
        if cfg.adaptive_bow:
            self.bow.maybe_refresh()
        if self.fixed_snapshot is None and cfg.normalize != "off" and self.stats.n:
            self.snapshot = self.stats.snapshot()

        outputs = sorted((o for r in results for o in r.outputs), key=lambda o: o[0])
        classified = [inst for _, inst in outputs]
        alerts = []
        names = self.scheme.class_names
        for inst in classified:
            if inst.actual is None:
                self.evaluator.observe_unlabeled(inst.predicted)
            else:
                self.evaluator.preq_step(inst.predicted, inst.actual)
            a = alert(inst, cfg.alert_threshold, names)
            if a is not None:
                alerts.append(a)
                self.run_log.alerts_per_user[inst.user_id] += 1
        sample = boosted_sample(classified, cfg.sample_rate, cfg.boost_factor, cfg.seed) if cfg.sample_rate > 0 else []
        n_err = sum(len(r.errors) for r in results)
        self.run_log.parse_errors += n_err
        self.run_log.classified += len(classified)
        self.run_log.alerts += len(alerts)
        vectors = None
        if self.keep_vectors:
            vectors = [v for _, v in sorted((v for r in results for v in r.vectors), key=lambda v: v[0])]
        self.seq += 1
        return BatchOutcome(batch.seq, classified, alerts, sample, n_err, self.model.version, vectors)

    def batches(self, records: Iterable) -> Iterator[MicroBatch]:
        """Cut (origin, line) pairs or bare lines into micro-batches; blank lines are dropped."""
        def tagged():
            for item in records:
                if self.stop_requested:
                    return
                origin, line = item if isinstance(item, tuple) else ("", item)
                if line.strip():
                    yield origin, line
        cfg = self.config
        if cfg.batch_size is not None:
            chunks = count_batches(tagged(), cfg.batch_size)
        else:
            chunks = interval_batches(tagged(), cfg.batch_interval_ms)
        for chunk in chunks:
            yield MicroBatch(self.seq, tuple(chunk), self.model.version)

    def run(self, records: Iterable) -> Iterator[BatchOutcome]:
        self.run_log.started = time.perf_counter()
        try:
            for batch in self.batches(records):
                yield self.run_microbatch(batch)
        finally:
            self.run_log.finished = time.perf_counter()

    def run_all(self, records: Iterable) -> RunLog:
        for _ in self.run(records):
            pass
        return self.run_log


def _worker_init() -> None:
    # forked workers must not inherit the coordinator's graceful-stop handlers,
    # or terminate() could not stop them; Ctrl-C is left to the coordinator
    signal.signal(signal.SIGTERM, signal.SIG_DFL)
    signal.signal(signal.SIGINT, signal.SIG_IGN)


class _HookedWorker:
    """Picklable wrapper that calls a test hook before processing a partition."""

    def __init__(self, hook):
        self.hook = hook

    def __call__(self, task):
        self.hook(task)
        return process_partition(task)


def write_alerts(alerts: Iterable[Alert], fh) -> None:
    for a in alerts:
        fh.write(json.dumps(a.to_json()) + "\n")


def write_samples(sample: Iterable[ClassifiedInstance], class_names, fh) -> None:
    for inst in sample:
        doc = json.loads(inst.raw) if inst.raw else {"id": inst.source_id}
        doc["predicted"] = class_names[inst.predicted]
        fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
