import math
import os

import pytest

from aggrostream.engine import (
    ConfigError,
    Engine,
    EngineError,
    MicroBatch,
    PipelineConfig,
    RunLog,
    alert,
    boosted_sample,
    count_batches,
    interval_batches,
    partition,
    throughput_report,
)
from aggrostream.fixtures import oracle_run
from aggrostream.learners import serialize
from aggrostream.types import ClassifiedInstance

from conftest import tweet_line

NAMES = ("normal", "abusive", "hateful")


def inst(i, predicted, dist, actual=None):
    return ClassifiedInstance(str(i), "u", predicted, dist, actual)


# -- partitioning and batching


def test_partition_sizes_and_determinism():
    items = list(range(10))
    parts = partition(items, 3, seed=5, batch_seq=2)
    assert sorted(map(len, parts)) == [3, 3, 4]
    assert sorted(x for p in parts for x in p) == items
    assert all(p == sorted(p) for p in parts)
    assert partition(items, 3, 5, 2) == parts


def test_partition_edges():
    assert partition([1, 2], 1, 0) == [[1, 2]]
    assert partition([], 4, 0) == [[], [], [], []]
    with pytest.raises(ValueError):
        partition([1], 0, 0)


def test_count_batches():
    assert [len(c) for c in count_batches(range(7), 3)] == [3, 3, 1]
    assert list(count_batches([], 3)) == []


def test_interval_batches_cut_on_time():
    t = [0.0]

    def clock():
        return t[0]

    def source():
        for i in range(6):
            t[0] = i * 0.4
            yield i

    chunks = list(interval_batches(source(), 1000, clock))
    assert [x for c in chunks for x in c] == list(range(6))
    assert len(chunks) >= 1


# -- alerting and sampling


def test_alert_rules():
    assert alert(inst(1, 0, (0.9, 0.05, 0.05)), 0.5, NAMES) is None
    a = alert(inst(1, 1, (0.1, 0.6, 0.3)), 0.0, NAMES, now_ms=7)
    assert (a.label, a.confidence, a.emitted_at) == ("abusive", 0.6, 7)
    assert alert(inst(1, 1, (0.05, 0.75, 0.2)), 0.8, NAMES) is None


def test_sampling_extremes():
    xs = [inst(i, i % 2, (0.5, 0.5)) for i in range(100)]
    assert boosted_sample(xs, 0.0, 10, 1) == []
    assert boosted_sample(xs, 1.0, 1, 1) == xs


def test_boosted_sampling_rate():
    xs = [inst(i, 1, (0.2, 0.8)) for i in range(10_000)]
    kept = len(boosted_sample(xs, 0.01, 10, seed=3))
    mu, sd = 1000, math.sqrt(10_000 * 0.1 * 0.9)
    assert abs(kept - mu) <= 3 * sd
    assert boosted_sample(xs, 0.01, 10, seed=3) == boosted_sample(xs, 0.01, 10, seed=3)


def test_throughput_report():
    run = RunLog(batch_records=[1000], batch_seconds=[2.0], started=0.0, finished=2.0)
    assert throughput_report(run)["tweets_per_second"] == 500
    assert throughput_report(RunLog())["tweets_per_second"] == 0


# -- config


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(classes=4)
    with pytest.raises(ConfigError):
        PipelineConfig(classifier="svm")
    with pytest.raises(ConfigError):
        PipelineConfig(workers=0)
    with pytest.raises(ConfigError):
        PipelineConfig(ht={"split_confidence": 2})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"nope": 1})


def test_config_round_trip():
    cfg = PipelineConfig(classifier="arf", classes=3, ht={"grace_period": 50}, seed=4)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.build_model().params.tree.grace_period == 50


# -- engine


def test_unlabeled_batch_leaves_model_untouched(small_stream):
    eng = Engine(PipelineConfig(batch_size=500))
    list(eng.run(small_stream[:1000]))
    before = serialize(eng.model)
    unl = [tweet_line(id=str(i), text="you are all idiots") for i in range(50)]
    (out,) = list(eng.run(unl))
    assert serialize(eng.model) == before
    assert len(out.classified) == 50 and all(c.actual is None for c in out.classified)


def test_record_conservation(small_stream):
    lines = list(small_stream[:600]) + ["{bad json", "", "   "]
    eng = Engine(PipelineConfig(batch_size=128, workers=2))
    with eng:
        log = eng.run_all(lines)
    assert log.classified + log.parse_errors == 601
    assert log.parse_errors == 1
    assert eng.evaluator.instances_seen == 600


def test_workers_one_matches_oracle(small_stream):
    cfg = PipelineConfig(batch_size=250)
    eng = Engine(cfg)
    eng.run_all(small_stream)
    ref = oracle_run(small_stream, cfg, sync_every=250)
    assert eng.evaluator.cm == ref.cm
    assert serialize(eng.model) == serialize(ref.model)


def test_retry_once_then_succeed(small_stream):
    calls = []

    def flaky(task):
        calls.append(task.partition_id)
        if len(calls) == 1:
            raise RuntimeError("boom")

    eng = Engine(PipelineConfig(batch_size=200), task_hook=flaky)
    eng.run_all(small_stream[:400])
    clean = Engine(PipelineConfig(batch_size=200))
    clean.run_all(small_stream[:400])
    assert eng.run_log.retries == 1
    assert serialize(eng.model) == serialize(clean.model)
    assert eng.evaluator.cm == clean.evaluator.cm


def test_retry_in_pool(small_stream, tmp_path):
    marker = tmp_path / "failed"

    eng = Engine(PipelineConfig(batch_size=200, workers=2), task_hook=_FailOnce(str(marker)))
    with eng:
        eng.run_all(small_stream[:400])
    ref = Engine(PipelineConfig(batch_size=200, workers=2))
    with ref:
        ref.run_all(small_stream[:400])
    assert eng.run_log.retries == 1
    assert serialize(eng.model) == serialize(ref.model)


class _FailOnce:
    def __init__(self, path):
        self.path = path

    def __call__(self, task):
        if not os.path.exists(self.path):
            open(self.path, "w").close()
            raise RuntimeError("worker crash")


def test_second_failure_is_fatal(small_stream):
    def always(task):
        raise RuntimeError("down")

    eng = Engine(PipelineConfig(batch_size=100), task_hook=always)
    with pytest.raises(EngineError):
        eng.run_all(small_stream[:100])


def test_version_mismatch_is_fatal(small_stream):
    eng = Engine(PipelineConfig(batch_size=100))
    eng.run_all(small_stream[:200])
    stale = MicroBatch(99, tuple(("", l) for l in small_stream[:10]), eng.model.version - 1)
    with pytest.raises(EngineError):
        eng.run_microbatch(stale)


def test_leaf_statistics_do_not_depend_on_workers(small_stream):
    per_batch = {}
    for k in (1, 2, 8):
        stats = []
        eng = Engine(PipelineConfig(batch_size=300, workers=k))
        eng.barrier_hooks.append(lambda e, o: stats.append(e.model.leaf_statistics()))
        with eng:
            eng.run_all(small_stream)
        per_batch[k] = stats
    assert per_batch[1] == per_batch[2] == per_batch[8]


def test_alerts_and_samples_in_record_order(small_stream):
    cfg = PipelineConfig(batch_size=400, workers=2, classes=3, sample_rate=0.5, boost_factor=2, alert_threshold=0.0)
    eng = Engine(cfg)
    with eng:
        outs = list(eng.run(small_stream[:800]))
    for o in outs:
        ids = [c.source_id for c in o.classified]
        aggressive = [c.source_id for c in o.classified if c.predicted != 0]
        assert [a.source_id for a in o.alerts] == aggressive
        sample_ids = [s.source_id for s in o.sample]
        assert sample_ids == [i for i in ids if i in set(sample_ids)]
        assert all(s.raw for s in o.sample)


def test_interval_mode_processes_everything(small_stream):
    eng = Engine(PipelineConfig(batch_interval_ms=50))
    log = eng.run_all(small_stream[:300])
    assert sum(log.batch_records) == 300
