import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from soficlab.group import (
    DisconnectedWindow,
    RankMismatch,
    Window,
    Word,
    ball,
    ball_size,
    growth_ratio,
    is_connected,
    multiply,
)


def words(rank=2, max_len=8):
    letter = st.tuples(st.integers(1, rank), st.sampled_from([1, -1]))
    return st.lists(letter, max_size=max_len).map(lambda ls: Word.from_letters(ls, rank))


def test_inverse_cancels():
    a = Word.parse("a", 2)
    assert multiply(a, a.inverse()) == Word.identity(2)


def test_hand_reduction():
    assert Word.parse("ab", 2) * Word.parse("Ba", 2) == Word.parse("aa", 2)


def test_identity_left():
    w = Word.parse("abA", 2)
    assert Word.identity(2) * w == w


def test_rank_mismatch():
    with pytest.raises(RankMismatch):
        multiply(Word.parse("a", 2), Word.parse("a", 3))


def test_unreduced_rejected():
    with pytest.raises(ValueError):
        Word(((1, 1), (1, -1)), 2)


def test_string_round_trip():
    for text in ["e", "a", "abA", "BBa", "cAb"]:
        assert str(Word.parse(text, 3)) == text


@given(words(), words(), words())
def test_associative(a, b, c):
    assert (a * b) * c == a * (b * c)


@given(words())
def test_inverse_property(w):
    assert w * w.inverse() == Word.identity(2)
    assert w.inverse() * w == Word.identity(2)


@given(words(), words())
def test_length_subadditive(a, b):
    assert len(a * b) <= len(a) + len(b)


@pytest.mark.parametrize("radius,size", [(0, 1), (1, 5), (2, 17)])
def test_ball_sizes(radius, size):
    assert len(ball(radius, 2)) == size


@pytest.mark.parametrize("rank", [1, 2, 3])
@pytest.mark.parametrize("radius", range(7))
def test_ball_closed_form(rank, radius):
    W = ball(radius, rank)
    assert len(W) == ball_size(radius, rank)
    assert W.connected


def test_ball_canonical_order():
    assert ball(1, 2).strings() == ["e", "a", "A", "b", "B"]


def test_window_rejects_duplicates():
    e = Word.identity(2)
    with pytest.raises(ValueError):
        Window((e, e), 2)


def test_connectivity_flag_is_verified():
    assert Window.of(["e", "a", "ab"], 2).connected
    W = Window.of(["e", "ab"], 2)
    assert not W.connected
    with pytest.raises(DisconnectedWindow):
        W.require_connected()
    # a flag passed by hand on an unchecked set is never trusted by constructors
    assert not Window.of(["e", "ab"], 2, check=False).connected


def test_growth_identity_window():
    F = Window.of(["e", "a", "ab", "abb"], 2)
    assert growth_ratio(Window.of(["e"], 2), F) == 1


def test_growth_singleton():
    assert growth_ratio(ball(1, 2), Window.of(["e"], 2)) == 5


def test_growth_empty_raises():
    with pytest.raises(ValueError):
        growth_ratio(ball(1, 2), Window((), 2))


def _random_subtree(k, rng):
    letters = [(1, 1), (1, -1), (2, 1), (2, -1)]
    tree = {Word.identity(2)}
    while len(tree) < k:
        base = rng.choice(sorted(tree, key=Word.sort_key))
        g = rng.choice(letters)
        tree.add(base * Word((g,), 2))
    return tree


def test_growth_subtrees_exhaustive():
    # W F = F u sF is a neighbourhood in the left Cayley graph (g ~ s g), so F is
    # taken as the inverse of a subtree grown by right multiplication
    rng = random.Random(7)
    W = ball(1, 2)
    for k in range(1, 51):
        tree = _random_subtree(k, rng)
        assert is_connected(tree)
        F = Window.of([w.inverse() for w in tree], 2, check=False)
        assert growth_ratio(W, F) == Fraction(3 * k + 2, k)


def test_growth_right_subtree_uses_right_product():
    rng = random.Random(8)
    tree = Window.of(_random_subtree(20, rng), 2)
    assert tree.connected
    right = {f * w for f in tree for w in ball(1, 2)}
    assert len(right) == 3 * 20 + 2
