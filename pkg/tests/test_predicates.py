import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from momentcal.predicates import (All, And, Box, FunctionPredicate, GroupFamily, Linear, Not, Nothing, Or, Ref,
                                  predicate_from_json, stump, whole_domain)

X = np.array([[0.1, 0.9], [0.5, 0.5], [0.9, 0.2]])


def test_basic_masks():
    assert All().mask(X).all() and not Nothing().mask(X).any()
    box = Box(((0, 0.1, 0.5),))
    assert list(box.mask(X)) == [True, True, False]
    assert list(Linear((1.0, -1.0), 0.0).mask(X)) == [False, True, True]
    assert list(Not(box).mask(X)) == [False, False, True]
    assert list(And((box, Linear((1.0, -1.0), 0.0))).mask(X)) == [False, True, False]
    assert list(Or((Nothing(), box)).mask(X)) == [True, True, False]


def test_ref_needs_family():
    fam = GroupFamily([("left", Box(((0, None, 0.5),)))])
    assert list(Ref("left").mask(X, fam)) == [True, True, False]
    with pytest.raises(ValueError):
        Ref("left").mask(X)
    with pytest.raises((KeyError, ValueError)):
        fam.index("right")


def test_family_json_round_trip(tmp_path):
    fam = GroupFamily([("all", All()), ("b", Box(((1, 0.2, None),))), ("l", Linear((0.5, 0.5), 0.4)),
                       ("n", Not(Or((Box(((0, None, 0.3),)), Nothing()))))])
    path = tmp_path / "fam.json"
    fam.save(path)
    back = GroupFamily.load(path)
    assert back.names == fam.names
    assert np.array_equal(back.masks(X), fam.masks(X))
    assert predicate_from_json(fam.predicates[3].to_json()) == fam.predicates[3]


def test_function_predicate_not_serializable():
    fam = GroupFamily([("f", FunctionPredicate(lambda X: X[:, 0] > 0.3))])
    assert list(fam.masks(X)[0]) == [False, True, True]
    assert not fam.serializable()


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        GroupFamily([("a", All()), ("a", Nothing())])


@given(st.floats(0, 1), st.floats(0, 1))
def test_stump_halves_partition(t, v):
    x = np.array([[v]])
    up, down = stump(0, t, 1, True), stump(0, t, 1, False)
    assert up.mask(x)[0] != down.mask(x)[0]


def test_whole_domain():
    fam = whole_domain()
    assert fam.masks(X).all()
