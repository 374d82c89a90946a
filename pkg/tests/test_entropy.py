import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from soficlab.entropy import (
    JointDist,
    ProbVector,
    binary_entropy,
    conditional_entropy,
    mutual_information,
    product,
    rokhlin_distance,
    shannon,
)


def prob_vectors(k_min=1, k_max=6):
    return st.lists(st.floats(0, 1), min_size=k_min, max_size=k_max).filter(lambda w: sum(w) > 1e-3).map(
        lambda w: np.array(w) / sum(w)
    )


@st.composite
def joints(draw, max_k=4):
    a = draw(st.integers(1, max_k))
    b = draw(st.integers(1, max_k))
    w = draw(st.lists(st.floats(0, 1), min_size=a * b, max_size=a * b).filter(lambda x: sum(x) > 1e-3))
    t = np.array(w).reshape(a, b)
    return JointDist(t / t.sum())


def test_uniform_four():
    assert shannon(ProbVector([0.25] * 4)) == pytest.approx(math.log(4), abs=1e-15)


def test_point_mass():
    assert shannon(ProbVector([1, 0, 0])) == 0


def test_binary_value():
    assert shannon(ProbVector([0.9, 0.1])) == pytest.approx(0.325083, abs=1e-6)
    assert binary_entropy(0.1) == pytest.approx(-0.9 * math.log(0.9) - 0.1 * math.log(0.1), abs=1e-15)


def test_probvector_validation():
    with pytest.raises(ValueError):
        ProbVector([0.5, 0.6])
    with pytest.raises(ValueError):
        ProbVector([1.5, -0.5])
    with pytest.raises(ValueError):
        ProbVector([0.5, 0.5], labels=["x"])


def test_tiny_weights_are_zero():
    assert shannon([1.0, 1e-16]) == 0.0


def test_conditional_independent():
    p, q = ProbVector([0.2, 0.8]), ProbVector([0.1, 0.3, 0.6])
    assert conditional_entropy(product(p, q), given=1) == pytest.approx(shannon(p), abs=1e-14)


def test_conditional_diagonal():
    assert conditional_entropy(JointDist(np.eye(3) / 3), given=0) == pytest.approx(0, abs=1e-15)


def test_conditional_ising_edge():
    eps = 0.1
    edge = JointDist(np.array([[1 - eps, eps], [eps, 1 - eps]]) / 2)
    assert conditional_entropy(edge, given=1) == pytest.approx(0.325083, abs=1e-6)
    assert conditional_entropy(edge, given=1) == pytest.approx(shannon(edge) - math.log(2), abs=1e-15)


def test_conditional_axis_errors():
    with pytest.raises(IndexError):
        conditional_entropy(JointDist(np.eye(2) / 2), given=2)
    with pytest.raises(ValueError):
        conditional_entropy(JointDist(np.full((2, 2, 2), 1 / 8)), given=0)


def test_marginal_axis_error():
    with pytest.raises(IndexError):
        JointDist(np.eye(2) / 2).marginal(3)


def test_rokhlin_examples():
    assert rokhlin_distance(JointDist(np.eye(2) / 2)) == pytest.approx(0, abs=1e-15)
    assert rokhlin_distance(JointDist(np.full((2, 2), 0.25))) == pytest.approx(2 * math.log(2), abs=1e-15)
    eps = 0.3
    pert = JointDist(np.array([[1 - eps, eps], [eps, 1 - eps]]) / 2)
    assert rokhlin_distance(pert) == pytest.approx(2 * binary_entropy(eps), abs=1e-14)


@given(joints())
def test_chain_rule(j):
    hy = shannon(j.table.sum(axis=0))
    assert shannon(j) == pytest.approx(hy + conditional_entropy(j, given=1), abs=1e-12)


@given(joints())
def test_subadditive_and_monotone(j):
    hx, hy = shannon(j.table.sum(axis=1)), shannon(j.table.sum(axis=0))
    assert shannon(j) <= hx + hy + 1e-12
    assert conditional_entropy(j, given=1) <= hx + 1e-12
    assert conditional_entropy(j, given=1) >= -1e-12
    assert mutual_information(j) >= -1e-12


@given(prob_vectors(3, 3), prob_vectors(3, 3), st.floats(0, 1))
def test_concave(p, q, lam):
    mix = lam * p + (1 - lam) * q
    assert shannon(mix) >= lam * shannon(p) + (1 - lam) * shannon(q) - 1e-12


@given(prob_vectors())
def test_range(p):
    assert -1e-15 <= shannon(p) <= math.log(len(p)) + 1e-12
