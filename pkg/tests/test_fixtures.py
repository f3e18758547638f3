from pathlib import Path

import pytest

from aggrostream.engine import Engine, PipelineConfig
from aggrostream.fixtures import (
    bayes_accuracy_two_gaussians,
    fingerprint,
    gaussian_stream,
    oracle_run,
)

FIXTURE = Path(__file__).resolve().parents[1] / "src" / "aggrostream" / "data" / "fixture_stream.jsonl"


@pytest.fixture(scope="module")
def corpus():
    return FIXTURE.read_text(encoding="utf-8").splitlines()


def test_oracle_on_empty_stream():
    res = oracle_run([], PipelineConfig())
    assert res.cm.total == 0
    assert res.fingerprint == fingerprint(PipelineConfig().build_model())


def test_oracle_is_deterministic(corpus):
    cfg = PipelineConfig(seed=3)
    assert oracle_run(corpus[:500], cfg).fingerprint == oracle_run(corpus[:500], cfg).fingerprint


@pytest.mark.parametrize("kind", ["ht", "slr", "arf"])
def test_engine_matches_oracle_on_corpus(corpus, kind):
    cfg = PipelineConfig(classifier=kind, classes=3, batch_size=256)
    eng = Engine(cfg, keep_vectors=True)
    vectors = []
    for out in eng.run(corpus):
        vectors.extend(out.vectors)
    ref = oracle_run(corpus, cfg, sync_every=256)
    assert vectors == ref.vectors
    assert eng.evaluator.cm == ref.cm
    assert fingerprint(eng.model) == ref.fingerprint


def test_unsynchronized_oracle_learns(corpus):
    res = oracle_run(corpus, PipelineConfig(classes=2))
    assert res.cm.total == sum(1 for _, _, y in res.predictions if y is not None)
    assert res.evaluator.cumulative().accuracy > 0.7


def test_gaussian_stream_shape():
    data = list(gaussian_stream(2000, 1, n_features=3, separation=4, priors=(0.7, 0.3)))
    assert all(len(x) == 3 for x, _ in data)
    share = sum(y for _, y in data) / len(data)
    assert abs(share - 0.3) < 0.04
    assert bayes_accuracy_two_gaussians(4.0) == pytest.approx(0.97725, abs=1e-5)
