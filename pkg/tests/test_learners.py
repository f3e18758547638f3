import math
import random

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from aggrostream.fixtures import gaussian_stream, prequential
from aggrostream.learners import (
    AdaptiveRandomForest,
    ARFParams,
    ContractError,
    DecodeError,
    HoeffdingTree,
    HTParams,
    MergeError,
    SLRParams,
    StreamingLogReg,
    deserialize,
    hoeffding_bound,
    make_learner,
    serialize,
)
from aggrostream.learners.arf import ErrorMonitor, subspace_size
from aggrostream.learners.hoeffding import GaussianObserver, entropy, gini, split_merit


def random_points(n, m, seed):
    rng = random.Random(seed)
    return [tuple(rng.uniform(-3, 3) for _ in range(m)) for _ in range(n)]


# -- hoeffding bound


def test_bound_reference_value():
    mpmath.mp.dps = 40
    ref = mpmath.sqrt(mpmath.log(1 / mpmath.mpf("0.01")) / 400)
    assert hoeffding_bound(1, 0.01, 200) == pytest.approx(float(ref), abs=1e-15)
    assert hoeffding_bound(1, 0.01, 200) == pytest.approx(0.10729, abs=1e-5)


def test_bound_edges():
    assert hoeffding_bound(1, 1, 50) == 0
    assert hoeffding_bound(2, 0.05, 400) == pytest.approx(hoeffding_bound(2, 0.05, 100) / 2, rel=1e-12)


# -- hoeffding tree


def test_grace_period_holds_off_splits():
    t = HoeffdingTree(2, 2)
    for _ in range(10):
        t.learn_one((0.1, 0.2), 0)
    assert t.root.counts == [10, 0] and t.n_leaves == 1
    rng = random.Random(0)
    for i in range(199 - 10):
        v = rng.random()
        t.learn_one((v, 0.0), int(v > 0.5))
    assert t.n_leaves == 1


def test_learns_threshold_split():
    rng = random.Random(42)
    t = HoeffdingTree(3, 2)
    for _ in range(5000):
        x = tuple(rng.random() for _ in range(3))
        t.learn_one(x, int(x[0] > 0.5))
    assert t.root.feature == 0
    assert 0.4 < t.root.threshold < 0.6


def test_max_depth_zero_is_a_single_leaf():
    t = HoeffdingTree(2, 2, HTParams(max_depth=0))
    for x, y in gaussian_stream(3000, 1, n_features=2, separation=5):
        t.learn_one(x, y)
    assert t.n_leaves == 1
    assert t.predict((0, 0)) == max(range(2), key=lambda c: t.root.counts[c])


def test_laplace_leaf():
    t = HoeffdingTree(1, 2)
    assert tuple(t.predict_proba((0,))) == (0.5, 0.5)
    for _ in range(10):
        t.learn_one((1.0,), 0)
    assert t.predict_proba((1.0,))[0] == pytest.approx(11 / 12)


def test_label_and_feature_contracts():
    t = HoeffdingTree(2, 2)
    with pytest.raises(ContractError):
        t.learn_one((0, 0), 2)
    with pytest.raises(ContractError):
        t.learn_one((math.nan, 0), 0)
    with pytest.raises(ContractError):
        t.learn_one((0,), 0)


def test_leaf_count_conservation():
    t = HoeffdingTree(4, 2)
    routed, alive = {}, []  # alive keeps retired leaves from recycling ids
    for x, y in gaussian_stream(4000, 3):
        leaf = t._leaf_for(x)
        alive.append(leaf)
        routed[id(leaf)] = routed.get(id(leaf), 0) + 1
        t.learn_one(x, y)
    assert t.n_leaves > 1
    for leaf in t.leaves():
        assert sum(leaf.counts) == routed.get(id(leaf), 0)


def test_impurities():
    assert entropy([5, 5]) == pytest.approx(1.0)
    assert entropy([10, 0]) == 0
    assert gini([5, 5]) == pytest.approx(0.5)
    assert split_merit("info_gain", [5, 5], [[5, 0], [0, 5]], 0.01) == pytest.approx(1.0)
    assert split_merit("info_gain", [5, 5], [[5, 5], [0, 0]], 0.01) == -math.inf


def test_gaussian_observer_merge_matches_sequential():
    rng = random.Random(5)
    vals = [(rng.randrange(2), rng.gauss(0, 3)) for _ in range(200)]
    a, b, whole = GaussianObserver(2), GaussianObserver(2), GaussianObserver(2)
    for i, (c, v) in enumerate(vals):
        (a if i < 77 else b).update(c, v)
        whole.update(c, v)
    a.merge(b)
    assert a.n == whole.n
    for c in range(2):
        assert a.mean[c] == pytest.approx(whole.mean[c], abs=1e-9)
        assert a.m2[c] == pytest.approx(whole.m2[c], abs=1e-9)


# -- random forest


def test_subspace_size():
    assert subspace_size(16, None) == 5
    assert subspace_size(16, 0) == 16
    assert subspace_size(3, 10) == 3
    arf = AdaptiveRandomForest(16, 2, ARFParams(ensemble_size=3))
    assert all(len(m.features) == 5 for m in arf.members)


def test_forest_averages_members():
    arf = AdaptiveRandomForest(1, 2, ARFParams(ensemble_size=2, fixed_weight=1.0))
    for _ in range(3):
        arf.members[0].tree.learn_one((0.0,), 0)
    # member 0: (4/5, 1/5); member 1 gets 0 and 1 counts to reach (3/5, 2/5)
    arf.members[1].tree.learn_one((0.0,), 0)
    arf.members[1].tree.learn_one((0.0,), 0)
    arf.members[1].tree.learn_one((0.0,), 1)
    assert tuple(arf.predict_proba((0.0,))) == pytest.approx((0.7, 0.3))


def test_untrained_forest_is_uniform():
    arf = AdaptiveRandomForest(4, 3)
    assert tuple(arf.predict_proba((0, 0, 0, 0))) == pytest.approx((1 / 3,) * 3)


def test_zero_weight_leaves_forest_unchanged():
    arf = AdaptiveRandomForest(4, 2, ARFParams(ensemble_size=3, fixed_weight=0.0, drift_detection=False))
    before = serialize(arf)
    for x, y in gaussian_stream(300, 0):
        arf.learn_one(x, y)
    assert serialize(arf) == before


def test_single_member_matches_tree():
    params = ARFParams(ensemble_size=1, fixed_weight=1.0, drift_detection=False, subspace_size=0)
    arf = AdaptiveRandomForest(4, 2, params)
    ht = HoeffdingTree(4, 2)
    for x, y in gaussian_stream(3000, 9):
        assert arf.predict(x) == ht.predict(x)
        arf.learn_one(x, y)
        ht.learn_one(x, y)
    assert arf.members[0].tree.leaf_statistics() == ht.leaf_statistics()


def test_error_monitor_flags_a_jump():
    mon = ErrorMonitor(window=100)
    states = [mon.add(i % 10 == 0) for i in range(300)]
    assert set(states) == {"none"}
    states = [mon.add(True) for _ in range(60)]
    assert "warning" in states and states[-1] == "drift"


def test_forest_replaces_member_on_drift():
    arf = AdaptiveRandomForest(2, 2, ARFParams(ensemble_size=2, drift_window=100), seed=3)
    stream = list(gaussian_stream(3000, 2, n_features=2, separation=5))
    for x, y in stream:
        arf.learn_one(x, y)
    for x, y in stream:
        arf.learn_one(x, 1 - y)
    assert arf.n_drifts >= 1
    assert any(m.resets for m in arf.members)


# -- logistic regression


def test_slr_single_step():
    m = StreamingLogReg(1, 2, SLRParams(learning_rate=0.1, regularization=0.0))
    assert m.score(1, (1.0,)) == 0.5
    m.learn_one((1.0,), 1)
    assert m.weights[1] == pytest.approx([0.05])
    assert m.bias[1] == pytest.approx(0.05)


def test_slr_zero_vector_only_moves_bias_and_shrinks():
    m = StreamingLogReg(2, 2, SLRParams(learning_rate=0.1, regularization=0.5))
    m.weights = [[1.0, -2.0], [0.5, 0.5]]
    m.learn_one((0.0, 0.0), 0)
    assert m.weights[0] == pytest.approx([1.0 * 0.95, -2.0 * 0.95])
    assert m.bias[0] != 0


def test_slr_untrained_uniform_and_two_class_identity():
    m = StreamingLogReg(3, 2)
    assert tuple(m.predict_proba((1, 2, 3))) == (0.5, 0.5)
    m.weights = [[0.3, -0.2, 0.1], [-0.3, 0.2, -0.1]]
    x = (1.0, 2.0, -0.5)
    z = sum(w * v for w, v in zip(m.weights[0], x))
    s = 1 / (1 + math.exp(-z))
    assert tuple(m.predict_proba(x)) == pytest.approx((s, 1 - s), abs=1e-9)


def test_slr_learns_separable_stream():
    rng = random.Random(7)

    def stream():
        for _ in range(10_000):
            y = rng.randrange(2)
            yield (rng.gauss(4 * y, 1), rng.gauss(0, 1)), y

    ev = prequential(StreamingLogReg(2, 2), stream(), "minmax", sync_every=200)
    assert ev.cumulative().accuracy >= 0.95


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["l2", "l1", "zero"]))
def test_slr_gradient_matches_finite_differences(seed, reg):
    rng = random.Random(seed)
    m = StreamingLogReg(4, 2, SLRParams(regularizer=reg, regularization=0.1))
    m.weights = [[rng.uniform(-1, 1) or 0.5 for _ in range(4)] for _ in range(2)]
    m.bias = [rng.uniform(-1, 1) for _ in range(2)]
    x = tuple(rng.uniform(-2, 2) for _ in range(4))
    y = rng.randrange(2)
    gw, g = m.gradient(0, x, y)
    h = 1e-6
    for j in range(4):
        w0 = m.weights[0][j]
        m.weights[0][j] = w0 + h
        up = m.loss(0, x, y)
        m.weights[0][j] = w0 - h
        down = m.loss(0, x, y)
        m.weights[0][j] = w0
        num = (up - down) / (2 * h)
        assert abs(num - gw[j]) <= 1e-5 * max(1.0, abs(gw[j]))


# -- predictions are distributions


@pytest.mark.parametrize("kind", ["ht", "arf", "slr"])
def test_predictions_are_distributions(kind):
    model = make_learner(kind, 4, 3, seed=1)
    for i, (x, y) in enumerate(gaussian_stream(1500, 4, priors=(0.5, 0.3, 0.2))):
        if i % 100 == 0:
            d = tuple(model.predict_proba(x))
            assert sum(d) == pytest.approx(1.0) and all(0 <= p <= 1 for p in d)
        model.learn_one(x, y)


# -- replicas


@pytest.mark.parametrize("kind", ["ht", "arf", "slr"])
def test_fork_is_isolated(kind):
    model = make_learner(kind, 4, 2, seed=0)
    for x, y in gaussian_stream(500, 1):
        model.learn_one(x, y)
    before = serialize(model)
    rep = model.fork(0)
    pts = random_points(50, 4, 0)
    assert [rep.predict(p) for p in pts] == [model.predict(p) for p in pts]
    for x, y in gaussian_stream(100, 2):
        rep.learn_one(x, y)
    assert serialize(model) == before


def test_deferred_replica_keeps_structure():
    rep = HoeffdingTree(4, 2).fork(0)
    for x, y in gaussian_stream(3000, 1, separation=6):
        rep.learn_one(x, y)
    assert rep.n_nodes == 1


@pytest.mark.parametrize("kind", ["ht", "arf", "slr"])
def test_merge_with_no_replicas_is_identity(kind):
    model = make_learner(kind, 4, 2, seed=0)
    for x, y in gaussian_stream(300, 1):
        model.learn_one(x, y)
    before = serialize(model)
    model.merge([])
    assert serialize(model) == before


def test_ht_merge_equals_sequential_counts():
    base = HoeffdingTree(2, 2)
    seq = HoeffdingTree(2, 2, HTParams(grace_period=10**9))
    data = list(gaussian_stream(200, 3, n_features=2))
    r1, r2 = base.fork(0), base.fork(1)
    for i, (x, y) in enumerate(data):
        (r1 if i < 100 else r2).learn_one(x, y)
        seq.learn_one(x, y)
    base.absorb([r1, r2])
    (counts, obs), = base.leaf_statistics()
    (s_counts, s_obs), = seq.leaf_statistics()
    assert counts == s_counts
    for (i, n, mean, m2), (_, sn, smean, sm2) in zip(obs, s_obs):
        assert n == sn
        assert mean == pytest.approx(smean, abs=1e-9)
        assert m2 == pytest.approx(sm2, abs=1e-9)


def test_identical_slr_replicas_average_to_themselves():
    m = StreamingLogReg(2, 2)
    r1, r2 = m.fork(0), m.fork(1)
    for r in (r1, r2):
        for x, y in gaussian_stream(50, 0, n_features=2):
            r.learn_one(x, y)
    m.merge([r1, r2])
    assert m.weights == r1.weights and m.bias == r1.bias


def test_stale_replica_is_rejected():
    for kind in ("ht", "slr", "arf"):
        m = make_learner(kind, 4, 2)
        stale = m.fork(0)
        fresh = m.fork(1)
        for x, y in gaussian_stream(10, 0):
            fresh.learn_one(x, y)
        m.merge([fresh])
        with pytest.raises(MergeError):
            m.merge([stale])


# -- serialization


@pytest.mark.parametrize("kind", ["ht", "arf", "slr"])
def test_round_trip_predictions(kind):
    model = make_learner(kind, 4, 2, seed=2)
    for x, y in gaussian_stream(3000, 5):
        model.learn_one(x, y)
    back = deserialize(serialize(model))
    pts = random_points(1000, 4, 1)
    assert [tuple(back.predict_proba(p)) for p in pts] == [tuple(model.predict_proba(p)) for p in pts]
    assert serialize(back) == serialize(model)


def test_round_trip_continues_identically():
    model = make_learner("arf", 4, 2, seed=2)
    stream = list(gaussian_stream(2000, 5))
    for x, y in stream[:1000]:
        model.learn_one(x, y)
    back = deserialize(serialize(model))
    for x, y in stream[1000:]:
        model.learn_one(x, y)
        back.learn_one(x, y)
    assert serialize(back) == serialize(model)


def test_corrupt_buffers():
    blob = serialize(HoeffdingTree(2, 2))
    with pytest.raises(DecodeError):
        deserialize(blob[:-5])
    with pytest.raises(DecodeError):
        deserialize(blob[:3])
    with pytest.raises(DecodeError):
        deserialize(b"XXXX" + blob[4:])
    flipped = bytearray(blob)
    flipped[20] ^= 0xFF
    with pytest.raises(DecodeError):
        deserialize(bytes(flipped))
    bad_version = bytearray(blob)
    bad_version[5] = 9
    with pytest.raises(DecodeError):
        deserialize(bytes(bad_version))


def test_unknown_classifier():
    with pytest.raises(ValueError):
        make_learner("svm", 2, 2)
