"""Sequential reference pipeline and synthetic numeric streams for tests.

The oracle walks the stream one record at a time with no partitioning, no
worker pool and no batch objects. With ``sync_every=None`` it trains the
global model directly and refreshes statistics and the lexicon as soon as
they are due; with ``sync_every=B`` it publishes state every ``B`` records
the same way a barrier would, which is what the engine must reproduce.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .evaluate import ConfusionMatrix, PrequentialEvaluator
from .features import AdaptiveBow, extract, load_lexicons
from .ingest import RecordError, SyntheticConfig, generate_synthetic, parse_tweet, serialize_tweet
from .learners import serialize
from .normalize import Normalizer, RunningStats, StatsSnapshot
from .textprep import clean, passthrough
from .types import NORMAL_INDEX, effective_label


@dataclass
class OracleResult:
    cm: ConfusionMatrix
    fingerprint: str
    model: object
    evaluator: PrequentialEvaluator
    predictions: list = field(default_factory=list)  # (source_id, predicted, actual)
    vectors: list = field(default_factory=list)
    parse_errors: int = 0
    bow: AdaptiveBow | None = None


def fingerprint(model) -> str:
    return hashlib.sha256(serialize(model)).hexdigest()


def oracle_run(lines: Iterable[str], config, sync_every: int | None = None) -> OracleResult:
    lexicons = load_lexicons(*config.lexicon_paths)
    layout = config.layout
    scheme = config.scheme
    model = config.build_model()
    bow = AdaptiveBow(lexicons.swear_seed, config.bow)
    stats = RunningStats(layout.size)
    fixed = None
    if config.stats_file:
        with open(config.stats_file, encoding="utf-8") as fh:
            fixed = StatsSnapshot.from_json(fh.read(), layout.enabled)
    snapshot = fixed
    evaluator = PrequentialEvaluator(scheme.n_classes, scheme.class_names, config.window, config.sample_every)
    result = OracleResult(evaluator.cm, "", model, evaluator)
    prep = clean if config.preprocess else passthrough

    learner = model if sync_every is None else model.fork(0)
    pending_stats = RunningStats(layout.size)
    lexicon = bow.snapshot() if config.adaptive_bow else bow.seed_lexicon
    pending_words = []
    seen = 0

    def publish():
        nonlocal learner, pending_stats, snapshot, lexicon, pending_words
        if sync_every is not None:
            model.merge([learner])
            learner = model.fork(0)
        stats.merge(pending_stats)
        pending_stats = RunningStats(layout.size)
        for tokens, aggressive in pending_words:
            bow.observe(tokens, aggressive)
        pending_words = []
        if config.adaptive_bow:
            bow.maybe_refresh()
            lexicon = bow.snapshot()
        if fixed is None and config.normalize != "off" and stats.n:
            snapshot = stats.snapshot()

    for line in lines:
        if not line.strip():
            continue
        seen += 1
        try:
            tweet = parse_tweet(line)
        except RecordError:
            result.parse_errors += 1
        else:
            cleaned = prep(tweet.text)
            raw = extract(tweet, cleaned, lexicon, lexicons, layout)
            pending_stats.update(raw)
            x = Normalizer(snapshot, config.normalize)(raw)
            result.vectors.append(x)
            dist = model.predict_proba(x) if sync_every is None else learner.predict_proba(x)
            if tweet.label is None:
                evaluator.observe_unlabeled(dist.argmax)
                result.predictions.append((tweet.id, dist.argmax, None))
            else:
                y = effective_label(tweet.label, scheme)
                evaluator.preq_step(dist.argmax, y)
                result.predictions.append((tweet.id, dist.argmax, y))
                learner.learn_one(x, y)
                if config.adaptive_bow:
                    pending_words.append((cleaned.tokens, y != NORMAL_INDEX))
        if sync_every is None or seen % sync_every == 0:
            publish()
    if sync_every is not None and seen % sync_every:
        publish()
    result.cm = evaluator.cm
    result.fingerprint = fingerprint(model)
    result.bow = bow
    return result


# --------------------------------------------------------------------------
# numeric streams


def gaussian_stream(n: int, seed: int, n_features: int = 4, separation: float = 4.0,
                    informative: int = 1, priors=(0.5, 0.5)) -> Iterator[tuple[tuple[float, ...], int]]:
    """Class-conditional Gaussians: the first ``informative`` features have class
    means ``c * separation``, the rest are pure N(0,1) noise."""
    rng = random.Random(seed)
    classes = list(range(len(priors)))
    for _ in range(n):
        y = rng.choices(classes, weights=priors)[0]
        x = tuple(rng.gauss(y * separation if j < informative else 0.0, 1.0) for j in range(n_features))
        yield x, y


def bayes_accuracy_two_gaussians(separation: float) -> float:
    """Accuracy of the midpoint threshold for two unit-variance Gaussians with equal priors."""
    return 0.5 * (1.0 + math.erf(separation / 2.0 / math.sqrt(2.0)))


def prequential(model, stream, normalize: str = "off", sync_every: int = 1000,
                n_classes: int = 2) -> PrequentialEvaluator:
    """Test-then-train a learner on (x, y) pairs, normalizing with stats published every ``sync_every``."""
    ev = PrequentialEvaluator(n_classes)
    stats = None
    norm = Normalizer(None, normalize)
    for i, (x, y) in enumerate(stream, 1):
        if stats is None:
            stats = RunningStats(len(x))
        stats.update(x)
        z = norm(x)
        ev.preq_step(model.predict(z), y)
        model.learn_one(z, y)
        if normalize != "off" and i % sync_every == 0:
            norm = Normalizer(stats.snapshot(), normalize)
    return ev


def synthetic_lines(n: int, seed: int, **overrides) -> list[str]:
    cfg = SyntheticConfig(n_tweets=n, **overrides)
    return [serialize_tweet(t) for t in generate_synthetic(cfg, seed)]
