import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxfield.errors import DimensionError, MaxfieldError
from maxfield.lattice import (EQUAL, GREATER, LESS, OrderSpec, Window, block_sizes, compare,
                              enumerate_window, neighborhood_A, sup_norm)

from oracles import brute_A


def all_orders(d):
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            yield OrderSpec(perm, signs)


@st.composite
def orders(draw, d=None):
    d = draw(st.integers(1, 3)) if d is None else d
    perm = draw(st.permutations(range(d)))
    signs = draw(st.tuples(*[st.sampled_from((1, -1))] * d))
    return OrderSpec(tuple(perm), signs)


def points(d, lo=-6, hi=6):
    return st.tuples(*[st.integers(lo, hi)] * d)


@st.composite
def order_and_points(draw, n=3):
    o = draw(orders())
    return o, [draw(points(o.dim)) for _ in range(n)]


def test_window_shape_and_enumeration():
    w = Window((1, 0), (3, 4))
    assert w.shape == (3, 5) and w.size == 15
    pts = list(enumerate_window(w))
    assert len(pts) == len(set(pts)) == 15
    assert pts[0] == (1, 0) and pts[1] == (1, 1)
    assert all(w.contains(p) for p in pts)


def test_enumerate_single_point_window():
    assert list(Window((0, 0), (0, 0))) == [(0, 0)]


def test_window_rejects_inverted_and_mixed_dims():
    with pytest.raises(MaxfieldError):
        Window((2,), (1,))
    with pytest.raises(DimensionError):
        Window((1, 1), (2,))


def test_dilate_and_shrink():
    w = Window.from_shape((5, 5))
    assert w.dilate(2) == Window((-1, -1), (7, 7))
    assert w.dilate(2).shrink(2) == w
    assert w.shrink((1, 2)) == Window((2, 3), (4, 3))


def test_block_sizes():
    assert block_sizes((100, 100), 10) == (10, 10)
    assert block_sizes((7, 9), 2) == (3, 4)
    assert block_sizes((5,), 5) == (1,)


@pytest.mark.parametrize("N,k", [((10, 10), 0), ((3, 10), 4)])
def test_block_sizes_rejects(N, k):
    with pytest.raises(MaxfieldError):
        block_sizes(N, k)


def test_compare_lex_examples():
    lex = OrderSpec.lex(2)
    assert compare(lex, (0, 0), (0, 1)) == LESS
    assert compare(lex, (1, 0), (0, 5)) == GREATER
    assert compare(lex, (2, 3), (2, 3)) == EQUAL


def test_compare_permuted_signed():
    o = OrderSpec((1, 0), (1, -1))
    # signs are per axis, so the key is (-i[1], i[0])
    assert compare(o, (0, 1), (5, 0)) == LESS
    assert compare(o, (1, 0), (0, 0)) == GREATER
    assert compare(o, (0, -1), (9, 0)) == GREATER


def test_compare_dimension_mismatch():
    with pytest.raises(DimensionError):
        compare(OrderSpec.lex(2), (0, 0), (0, 0, 0))


def test_orderspec_validation():
    with pytest.raises(MaxfieldError):
        OrderSpec((0, 0), (1, 1))
    with pytest.raises(MaxfieldError):
        OrderSpec((0, 1), (1, 2))


@settings(max_examples=300, deadline=None)
@given(order_and_points())
def test_order_is_total_antisymmetric_transitive(case):
    o, (i, j, k) = case
    c = compare(o, i, j)
    assert c == -compare(o, j, i)
    assert (c == EQUAL) == (i == j)
    if compare(o, i, j) <= 0 and compare(o, j, k) <= 0:
        assert compare(o, i, k) <= 0


@settings(max_examples=300, deadline=None)
@given(order_and_points())
def test_order_translation_invariant(case):
    o, (i, j, t) = case
    shift = lambda a: tuple(x + y for x, y in zip(a, t))  # noqa: E731
    assert compare(o, i, j) == compare(o, shift(i), shift(j))


@settings(max_examples=100, deadline=None)
@given(orders(), st.data())
def test_argsort_agrees_with_compare(o, data):
    pts = data.draw(st.lists(points(o.dim), min_size=1, max_size=30, unique=True))
    arr = np.asarray(pts)
    srt = arr[o.argsort(arr)]
    for a, b in zip(srt[:-1], srt[1:]):
        assert compare(o, tuple(a), tuple(b)) == LESS


def test_reversed_order_flips_comparisons():
    o = OrderSpec((1, 0), (1, -1))
    r = o.reversed()
    for i, j in itertools.product(enumerate_window(Window((-1, -1), (1, 1))), repeat=2):
        assert compare(r, i, j) == -compare(o, i, j)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_A_exhaustive_partition_and_cardinality(d):
    # every order, every p with entries 0..4
    for o in all_orders(d):
        for p in itertools.product(range(5), repeat=d):
            A = neighborhood_A(o, p)
            box = set(enumerate_window(Window(tuple(-c for c in p), p)))
            pos = set(A.points)
            neg = {tuple(-x for x in j) for j in pos}
            assert len(pos) == (math.prod(2 * c + 1 for c in p) - 1) // 2
            assert not pos & neg and (0,) * d not in pos
            assert pos | neg | {(0,) * d} == box


@settings(max_examples=60, deadline=None)
@given(orders(), st.data())
def test_A_matches_brute_force(o, data):
    p = data.draw(st.tuples(*[st.integers(0, 3)] * o.dim))
    A = neighborhood_A(o, p)
    assert set(A.points) == brute_A(o.permutation, o.signs, p)
    assert all(compare(o, (0,) * o.dim, j) == LESS for j in A)


def test_A_examples():
    A = neighborhood_A(OrderSpec.lex(2), (1, 1))
    assert set(A.points) == {(0, 1), (1, -1), (1, 0), (1, 1)}
    assert len(neighborhood_A(OrderSpec.lex(2), (0, 0))) == 0
    assert len(neighborhood_A(OrderSpec.lex(1), (3,))) == 3


def test_A_difference_and_membership():
    lex = OrderSpec.lex(2)
    big, small = neighborhood_A(lex, (2, 2)), neighborhood_A(lex, (1, 1))
    diff = big.difference(small)
    assert len(diff) == len(big) - len(small)
    assert (1, 1) in big and (1, 1) not in {tuple(r) for r in diff.tolist()}
    assert (0, -1) not in big


def test_A_offsets_read_only():
    A = neighborhood_A(OrderSpec.lex(2), (1, 1))
    with pytest.raises(ValueError):
        A.offsets[0, 0] = 5


def test_A_rejects_negative_or_wrong_dim():
    with pytest.raises(MaxfieldError):
        neighborhood_A(OrderSpec.lex(2), (-1, 1))
    with pytest.raises(DimensionError):
        neighborhood_A(OrderSpec.lex(2), (1,))


def test_sup_norm():
    assert sup_norm((3, -5, 1)) == 5
