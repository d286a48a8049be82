import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from teichld.errors import BudgetError, ValidationError
from teichld.rauzy import (
    Permutation,
    integer_det,
    is_irreducible,
    matrix_a,
    matrix_b,
    rauzy_a,
    rauzy_b,
    rauzy_class,
)

P = Permutation.parse


def irreducible_perms(m):
    return [Permutation(p) for p in itertools.permutations(range(1, m + 1)) if is_irreducible(Permutation(p))]


def test_parse_and_str():
    assert P("3,2,1").image == (3, 2, 1)
    assert P("3 2 1") == P("3,2,1")
    assert str(P("3,1,2")) == "(3 1 2)"
    assert P("2,3,1").inverse(1) == 3


@pytest.mark.parametrize("bad", [(1, 1), (0, 1), (2, 3), ()])
def test_malformed_permutation(bad):
    with pytest.raises(ValidationError):
        Permutation(bad)


@pytest.mark.parametrize("pi, expected", [("2,1", True), ("1,2", False), ("2,3,1", True), ("3,2,1", True), ("2,1,3", False)])
def test_is_irreducible(pi, expected):
    assert is_irreducible(P(pi)) is expected


def brute_irreducible(image):
    m = len(image)
    return not any(set(image[:k]) == set(range(1, k + 1)) for k in range(1, m))


def test_is_irreducible_matches_definition():
    for m in range(1, 7):
        for p in itertools.permutations(range(1, m + 1)):
            assert is_irreducible(Permutation(p)) == brute_irreducible(p)


@pytest.mark.parametrize("pi, expected", [("2,1", "2,1"), ("3,2,1", "3,1,2"), ("2,3,1", "2,3,1")])
def test_rauzy_a_examples(pi, expected):
    assert rauzy_a(P(pi)) == P(expected)


@pytest.mark.parametrize("pi, expected", [("2,1", "2,1"), ("3,2,1", "2,3,1"), ("3,1,2", "3,1,2")])
def test_rauzy_b_examples(pi, expected):
    assert rauzy_b(P(pi)) == P(expected)


def test_rauzy_ops_reject_reducible():
    with pytest.raises(ValidationError):
        rauzy_a(P("1,2"))
    with pytest.raises(ValidationError):
        rauzy_b(P("2,1,3"))


def test_matrix_examples():
    np.testing.assert_array_equal(matrix_b(P("2,1")), [[1, 0], [1, 1]])
    A = matrix_a(P("3,2,1"))
    np.testing.assert_array_equal(A, [[1, 1, 0], [0, 0, 1], [0, 1, 0]])
    assert integer_det(A) == -1
    B = matrix_b(P("3,2,1"))
    expected = np.eye(3, dtype=int)
    expected[2, 0] = 1
    np.testing.assert_array_equal(B, expected)
    assert integer_det(B) == 1


@given(st.lists(st.lists(st.integers(-6, 6), min_size=5, max_size=5), min_size=5, max_size=5))
def test_integer_det_matches_float(rows):
    A = np.array(rows)
    assert integer_det(A) == round(np.linalg.det(A))


def test_integer_det_needs_pivoting():
    assert integer_det([[0, 1], [1, 0]]) == -1
    assert integer_det([[0, 0], [1, 0]]) == 0


def test_class_of_two_symbols():
    cls = rauzy_class(P("2,1"))
    assert cls.members == (P("2,1"),)
    assert {(e.label, e.target) for e in cls.edges} == {("a", P("2,1")), ("b", P("2,1"))}


def test_class_of_321():
    cls = rauzy_class(P("3,2,1"))
    assert set(cls.members) == {P("3,2,1"), P("3,1,2"), P("2,3,1")}
    assert len(cls) == 3
    assert cls.edge(P("3,2,1"), "a").target == P("3,1,2")
    assert cls.edge(P("3,2,1"), "b").target == P("2,3,1")
    assert cls.edge(P("2,3,1"), "a").target == P("2,3,1")
    assert cls.edge(P("3,1,2"), "b").target == P("3,1,2")
    d = cls.to_dict()
    assert d["size"] == 3 and len(d["edges"]) == 6
    assert all(abs(e["det"]) == 1 for e in d["edges"])


def test_class_rejects_reducible():
    with pytest.raises(ValidationError):
        rauzy_class(P("1,2"))


def test_class_cap():
    with pytest.raises(BudgetError):
        rauzy_class(P("4,3,2,1"), cap=2)


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_class_invariants(m):
    for pi in irreducible_perms(m):
        cls = rauzy_class(pi)
        members = set(cls.members)
        for q in cls.members:
            for op in (rauzy_a, rauzy_b):
                assert is_irreducible(op(q)) and op(q) in members
            assert abs(integer_det(matrix_a(q))) == 1
            assert abs(integer_det(matrix_b(q))) == 1
        assert len(cls.edges) == 2 * len(members)


def test_class_independent_of_start():
    for m in (4, 5):
        for pi in irreducible_perms(m):
            base = set(rauzy_class(pi).members)
            for q in base:
                assert set(rauzy_class(q).members) == base


def test_known_class_sizes():
    # Classes of the symmetric permutation: 1, 3, 7, 15 members for m = 2..5.
    sizes = [len(rauzy_class(Permutation(tuple(range(m, 0, -1))))) for m in range(2, 6)]
    assert sizes == [1, 3, 7, 15]
