import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from soficlab.group import Word, ball
from soficlab.sofic import (
    SizeMismatch,
    SoficMap,
    SoficSequence,
    amplify,
    bs_local_fraction,
    check_multiplicative,
    check_trace,
    cyclic_model,
    disjoint_union,
    edit_distance,
    expander_witness,
    identity_model,
    random_free_model,
    walk_matrix,
)
import soficlab.sofic as sofic_mod


def W(text, rank=2):
    return Word.parse(text, rank)


def nontrivial_ball(radius, rank):
    return [w for w in ball(radius, rank) if len(w)]


def test_cyclic_trace_passes():
    rep = check_trace(cyclic_model(10), [W("a", 1), W("aa", 1)], 0.05)
    assert rep.passed
    assert set(rep.fixed_fraction.values()) == {0.0}


def test_identity_trace_fails():
    rep = check_trace(identity_model(6, 2), [W("a"), W("ab")], 0.5)
    assert not rep.passed
    assert rep.fixed_fraction["a"] == 1.0


def test_random_trace_passes():
    rep = check_trace(random_free_model(2, 1000, 0), nontrivial_ball(2, 2), 0.05)
    assert rep.passed
    assert max(rep.fixed_fraction.values()) <= 0.01


def test_trace_rejects_identity_word():
    with pytest.raises(ValueError):
        check_trace(cyclic_model(5), [Word.identity(1)], 0.1)


@pytest.mark.parametrize("radius", [1, 2, 3])
def test_cyclic_local_fraction(radius):
    # the r-ball of C_n is a path only when n >= 2r + 2; at n = 2r + 1 the
    # two ends of the ball are joined by an edge
    assert bs_local_fraction(cyclic_model(2 * radius + 2), radius) == 1.0
    assert bs_local_fraction(cyclic_model(50), radius) == 1.0
    assert bs_local_fraction(cyclic_model(2 * radius + 1), radius) == 0.0


def test_identity_local_fraction():
    assert bs_local_fraction(identity_model(10, 2), 1) == 0.0


def _tree_ball_oracle(s, v, r):
    """Independent check: BFS the r-ball and test it has |B(r)| vertices and is a tree."""
    dist, frontier = {v: 0}, [v]
    moves = list(s.perms) + [np.argsort(q) for q in s.perms]
    for d in range(r):
        nxt = []
        for u in frontier:
            for p in moves:
                w = int(p[u])
                if w not in dist:
                    dist[w] = d + 1
                    nxt.append(w)
        frontier = nxt
    edges = sum(1 for q in s.perms for u in dist if int(q[u]) in dist)
    return len(dist) == len(ball(r, s.rank)) and edges == len(dist) - 1


def test_random_local_fraction_matches_oracle():
    s = random_free_model(2, 2000, 0)
    oracle = np.array([_tree_ball_oracle(s, v, 2) for v in range(s.n)])
    assert np.array_equal(sofic_mod.local_tree_mask(s, 2), oracle)
    # short cycles leave about 12% of 2-balls non-tree at this size
    assert bs_local_fraction(s, 2) == pytest.approx(0.875)


def test_random_local_fraction_large():
    assert bs_local_fraction(random_free_model(2, 10_000, 0), 2) >= 0.95


def test_local_fraction_radius_guard():
    with pytest.raises(ValueError):
        bs_local_fraction(cyclic_model(5), 0)


@pytest.mark.parametrize("seed", range(5))
def test_local_fraction_monotone(seed):
    s = random_free_model(2, 60, seed)
    vals = [bs_local_fraction(s, r) for r in range(1, 5)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_edit_distance_examples():
    s = random_free_model(2, 50, 0)
    assert edit_distance(s, s, [W("a")]) == 0
    # swap the a-images of two vertices: only those two sources change
    p = s.perms[0].copy()
    p[[3, 7]] = p[[7, 3]]
    t = SoficMap(50, 2, (p, s.perms[1]))
    assert 0 < edit_distance(s, t, [W("a")]) <= 2 / 50
    inv = SoficMap(50, 2, tuple(s.letter_perm(i, -1) for i in (1, 2)))
    assert edit_distance(s, inv, [W("a")]) >= 0.9


def test_edit_distance_size_mismatch():
    with pytest.raises(SizeMismatch):
        edit_distance(cyclic_model(4), cyclic_model(5), [W("a", 1)])


@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
def test_edit_distance_pseudometric(s1, s2, s3):
    a, b, c = (random_free_model(2, 12, s) for s in (s1, s2, s3))
    F = nontrivial_ball(1, 2)
    assert edit_distance(a, b, F) == edit_distance(b, a, F)
    assert edit_distance(a, c, F) <= edit_distance(a, b, F) + edit_distance(b, c, F) + 1e-12


def test_disjoint_union_not_expander():
    s = random_free_model(2, 30, 3)
    w = expander_witness(disjoint_union(s, s))
    assert w.lambda2 == pytest.approx(1.0, abs=1e-9)
    assert not w.is_expander_at(0.999)


@pytest.mark.parametrize("n", [7, 40, 101])
def test_cyclic_spectrum(n):
    assert expander_witness(cyclic_model(n)).lambda2 == pytest.approx(np.cos(2 * np.pi / n), abs=1e-12)


def test_random_model_expander():
    w = expander_witness(random_free_model(2, 1000, 0))
    assert w.lambda2 <= 0.95
    assert w.is_expander_at(0.95)
    assert w.edge_expansion_bound == pytest.approx((1 - w.lambda2) * 2)


def test_power_iteration_matches_dense(monkeypatch):
    s = random_free_model(2, 400, 5)
    dense = expander_witness(s)
    monkeypatch.setattr(sofic_mod, "DENSE_EIG_MAX_N", 10)
    power = expander_witness(s)
    assert power.method == "power"
    assert power.lambda2 == pytest.approx(dense.lambda2, abs=1e-4)


def test_walk_matrix_doubly_stochastic():
    s = identity_model(5, 2)  # loops only
    M = walk_matrix(s).toarray()
    assert np.allclose(M.sum(axis=0), 1) and np.allclose(M.sum(axis=1), 1)
    assert np.allclose(M, np.eye(5))


def test_amplify_constructors():
    s = random_free_model(2, 10, 4)
    assert amplify(s, 1) == s
    assert expander_witness(amplify(s, 2)).lambda2 == pytest.approx(1.0, abs=1e-9)
    assert random_free_model(2, 10, 4) == s
    assert random_free_model(2, 10, 5) != s


@pytest.mark.parametrize("seed", range(4))
def test_amplify_preserves_local_fraction(seed):
    s = random_free_model(2, 25, seed)
    for r in (1, 2):
        assert bs_local_fraction(amplify(s, 3), r) == bs_local_fraction(s, r)


def test_amplify_layout():
    s = cyclic_model(3)
    a = amplify(s, 2)
    # vertex (j, k) lives at k*n + j and sigma acts on j
    assert a.perms[0].tolist() == [1, 2, 0, 4, 5, 3]


@given(st.integers(0, 10_000))
def test_homomorphisms_are_exactly_multiplicative(seed):
    s = random_free_model(2, 15, seed)
    assert check_multiplicative(s, ball(2, 2), 0).passed


def test_corrupted_map_fails_multiplicative():
    s = random_free_model(2, 20, 1)
    bad = s.word_perm(W("ab")).copy()
    bad[[0, 1, 2, 3]] = bad[[1, 0, 3, 2]]
    t = SoficMap(20, 2, s.perms, {W("ab"): bad})
    assert not t.is_homomorphism
    rep = check_multiplicative(t, [W("a"), W("b")], 0)
    assert not rep.passed
    assert rep.worst_agreement == pytest.approx(16 / 20)
    assert rep.worst_pair == ("a", "b")
    assert check_multiplicative(t, [W("a"), W("b")], 0.25).passed
    assert not check_multiplicative(t, [W("a"), W("b")], 0.2).passed


def test_word_perm_composition():
    s = random_free_model(2, 9, 2)
    g, h = W("aB"), W("ba")
    assert np.array_equal(s.word_perm(g * h), s.word_perm(g)[s.word_perm(h)])


def test_json_round_trip(tmp_path):
    s = random_free_model(2, 8, 1)
    path = tmp_path / "m.json"
    s.save(path)
    assert SoficMap.load(path) == s
    d = json.loads(path.read_text())
    assert set(d) == {"rank", "n", "perms"}


def test_json_with_override_round_trip():
    s = random_free_model(2, 6, 1)
    t = SoficMap(6, 2, s.perms, {W("ab"): np.arange(6)})
    back = SoficMap.from_json(json.loads(json.dumps(t.to_json())))
    assert not back.is_homomorphism
    assert np.array_equal(back.word_perm(W("ab")), np.arange(6))


def test_bad_permutation_rejected():
    with pytest.raises(ValueError):
        SoficMap.from_perms([[0, 0, 1]])


def test_sequence_sizes_increase():
    with pytest.raises(ValueError):
        SoficSequence.cyclic([4, 4])
    seq = SoficSequence.random_free(2, [5, 7], seed=3)
    assert [s.n for s in seq] == [5, 7]
    assert seq[0] == random_free_model(2, 5, 3)
