import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from bpdhar.dataset import AnnotationLabel as L
from bpdhar.metrics import confusion_matrix, confusion_matrix_arrays, f1_macro, f1_scores

# (true, pred, expected macro F1) worked out by hand
HAND_CASES = [
    # all correct, two classes
    ([0, 0, 1, 1], [0, 0, 1, 1], 1.0),
    # A: P=1/2 R=1/2 -> 1/2 ; B: P=1/2 R=1/2 -> 1/2
    ([0, 0, 1, 1], [0, 1, 0, 1], 0.5),
    # always A on 3A+1B: A: P=3/4 R=1 -> 6/7 ; B: 0
    ([0, 0, 0, 1], [0, 0, 0, 0], 3 / 7),
    # predicted-only class 6 adds no term: A: P=1 R=1/2 -> 2/3
    ([0, 0], [0, 6], 2 / 3),
    # three classes: A 1/2, B 1/2, C 1 -> 2/3
    ([0, 0, 1, 1, 2], [0, 1, 1, 0, 2], 2 / 3),
]


@pytest.mark.parametrize("true,pred,expected", HAND_CASES)
def test_hand_cases(true, pred, expected):
    cm = confusion_matrix(zip(true, pred))
    assert cm.sum() == len(true)
    assert f1_macro(cm) == pytest.approx(expected, abs=1e-15)


def test_hand_case_cells():
    cm = confusion_matrix([(L.apathy, L.apathy), (L.apathy, L.pacing), (L.pacing, L.pacing)])
    expected = np.zeros((7, 7), dtype=np.int64)
    expected[0, 0] = expected[0, 3] = expected[3, 3] = 1
    np.testing.assert_array_equal(cm, expected)
    _, per = f1_scores(cm)
    # apathy: P=1 R=1/2 ; pacing: P=1/2 R=1
    assert per[0] == pytest.approx(2 / 3) and per[3] == pytest.approx(2 / 3)


def test_single_class_f1_half():
    # true A,A ; pred A,B -> A has P=1 R=1/2 ; B absent from truth
    macro, per = f1_scores(confusion_matrix([(0, 0), (0, 1)]))
    assert per[1] == 0.0
    assert macro == pytest.approx(2 / 3)
    macro, per = f1_scores(confusion_matrix([(0, 0), (1, 0)]))
    # A: P=1/2 R=1 -> 2/3 ; B: R=0 -> 0
    assert per[0] == pytest.approx(2 / 3) and macro == pytest.approx(1 / 3)


def test_empty():
    cm = confusion_matrix([])
    assert cm.shape == (7, 7) and cm.sum() == 0
    assert f1_macro(cm) == 0.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        confusion_matrix_arrays([0, 1], [0])


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=60))
def test_matches_sklearn_over_present_labels(pairs):
    true, pred = map(list, zip(*pairs))
    ours = f1_macro(confusion_matrix(pairs))
    ref = f1_score(true, pred, labels=sorted(set(true)), average="macro", zero_division=0)
    assert ours == pytest.approx(ref, abs=1e-12)
    assert 0.0 <= ours <= 1.0
