import io
import random

import pytest
from hypothesis import given, strategies as st

from aggrostream.evaluate import (
    ConfusionMatrix,
    EmptyMetricsError,
    PrequentialEvaluator,
    emit_report,
    f1,
    metrics,
    read_report,
    report_header,
)


def test_first_step_and_two_steps():
    ev = PrequentialEvaluator(2)
    ev.preq_step(0, 0)
    assert ev.cumulative().accuracy == 1.0
    ev.preq_step(0, 1)
    assert ev.cm.counts == [[1, 0], [1, 0]]
    assert ev.cumulative().accuracy == 0.5


def test_window_eviction():
    ev = PrequentialEvaluator(2, window=2)
    ev.preq_step(1, 0)
    ev.preq_step(0, 0)
    ev.preq_step(1, 1)
    assert ev.windowed().accuracy == 1.0
    assert ev.cumulative().accuracy == pytest.approx(2 / 3)


def test_hand_matrix():
    m = metrics(ConfusionMatrix(2, [[50, 10], [5, 35]]))
    assert m.accuracy == 0.85
    assert m.precision[1] == pytest.approx(35 / 45)
    assert m.recall[1] == 35 / 40
    assert m.support == (60, 40)


def test_perfect_diagonal():
    m = metrics(ConfusionMatrix(3, [[4, 0, 0], [0, 2, 0], [0, 0, 7]]))
    assert m.accuracy == m.weighted_f1 == m.weighted_precision == m.weighted_recall == 1.0


def test_empty_matrix_is_an_error():
    with pytest.raises(EmptyMetricsError):
        metrics(ConfusionMatrix(2))


@pytest.mark.parametrize("p,r,expected", [(0.85, 0.89, 0.87), (0.92, 0.90, 0.91)])
def test_f1_examples(p, r, expected):
    assert f1(p, r) == pytest.approx(expected, abs=0.005)
    assert f1(0, 0) == 0


@given(st.lists(st.lists(st.integers(0, 50), min_size=3, max_size=3), min_size=3, max_size=3))
def test_weighted_recall_is_accuracy(counts):
    cm = ConfusionMatrix(3, counts)
    if cm.total == 0:
        return
    m = metrics(cm)
    assert m.weighted_recall == pytest.approx(m.accuracy)
    assert 0 <= m.weighted_f1 <= 1


def test_matrix_merge():
    a = ConfusionMatrix(2, [[1, 2], [3, 4]])
    a.merge(ConfusionMatrix(2, [[1, 1], [1, 1]]))
    assert a == ConfusionMatrix(2, [[2, 3], [4, 5]])


def test_history_rows_and_csv_round_trip():
    rng = random.Random(0)
    ev = PrequentialEvaluator(3, ("normal", "abusive", "hateful"), window=100, sample_every=50)
    for _ in range(1234):
        ev.preq_step(rng.randrange(3), rng.randrange(3))
    for _ in range(10):
        ev.observe_unlabeled(1)
    assert len(ev.history) == 1234 // 50
    buf = io.StringIO()
    text = emit_report(ev, buf)
    assert buf.getvalue() == text
    rows = read_report(text)
    assert list(rows[0]) == report_header(ev.class_names)
    assert rows[-1]["labeled_seen"] == 1200
    assert rows[-1]["cum_accuracy"] == ev.history[-1]["cum_accuracy"]
    final = read_report(emit_report(ev, final_row=True))
    assert len(final) == len(rows) + 1
    assert final[-1]["pred_unlabeled_abusive"] == 1.0


def test_unlabeled_only_report():
    ev = PrequentialEvaluator(2, ("normal", "aggressive"))
    for p in (0, 1, 1, 1):
        ev.observe_unlabeled(p)
    (row,) = read_report(emit_report(ev))
    assert row["cum_accuracy"] is None and row["f1_normal"] is None
    assert row["pred_unlabeled_aggressive"] == 0.75
    assert row["instances_seen"] == 4 and row["labeled_seen"] == 0
