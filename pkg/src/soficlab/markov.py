"""Stationary Markov chains over free groups and the f-invariant.

Coordinates live on the vertices of the Cayley tree; ``g`` and ``g s`` are
neighbours.  A chain is fixed by the law ``pi`` of ``X_e`` and, for each
positive generator ``s``, the joint law of ``(X_e, X_s)``.  The law of
``(X_e, X_{s^-1})`` is its transpose.

Window marginals are exact tables over ``K^W`` with axes in the window's
canonical order.  Every entropy here is in nats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Protocol, Sequence

import numpy as np

from . import entropy as ent
from .entropy import JointDist, ProbVector, shannon
from .group import DisconnectedWindow, Window, Word

MARGINAL_TOL = 1e-10
PATTERN_CAP = 10**7


class InconsistentMarginals(ValueError):
    pass


class WindowTooLarge(ValueError):
    pass


class PatternMeasure(Protocol):
    rank: int
    alphabet: tuple

    def marginal(self, W: Window) -> JointDist: ...


def _check_cap(k: int, size: int, cap: int) -> None:
    if k**size > cap:
        raise WindowTooLarge(f"{k}^{size} patterns exceeds the cap of {cap}")


def hull(W: Window) -> Window:
    """Smallest subtree of the Cayley tree containing W."""
    elems = list(W)
    if not elems:
        return W
    base = elems[0]
    out = set()
    for w in elems:
        path = base.inverse() * w
        for i in range(len(path) + 1):
            out.add(base * Word(path.letters[:i], W.rank))
    return Window.of(out, W.rank)


def _spanning_order(W: Window, root: Word) -> list[tuple[Word, Word | None, tuple[int, int] | None]]:
    """BFS order of the induced subtree: (node, parent, letter from parent)."""
    members = set(W)
    order = [(root, None, None)]
    seen = {root}
    i = 0
    while i < len(order):
        node = order[i][0]
        for g in range(1, W.rank + 1):
            for s in (1, -1):
                nb = node * Word.generator(g, W.rank, s)
                if nb in members and nb not in seen:
                    seen.add(nb)
                    order.append((nb, node, (g, s)))
        i += 1
    if len(order) != len(members):
        raise DisconnectedWindow("window is not connected")
    return order


@dataclass(frozen=True, eq=False)
class MarkovChainSpec:
    rank: int
    alphabet: tuple
    pi: np.ndarray
    edges: tuple[np.ndarray, ...]

    def __init__(self, rank: int, alphabet: Sequence[Hashable], pi, edges, tol: float = MARGINAL_TOL):
        alphabet = tuple(alphabet)
        pi = np.asarray(pi, dtype=float)
        k = len(alphabet)
        if pi.shape != (k,):
            raise ValueError("pi length differs from alphabet size")
        ProbVector(pi, alphabet, tol=1e-9)
        edges = tuple(np.asarray(e, dtype=float) for e in edges)
        if len(edges) != rank:
            raise ValueError(f"need one edge law per generator ({rank}), got {len(edges)}")
        for i, e in enumerate(edges, start=1):
            if e.shape != (k, k):
                raise ValueError(f"edge law {i} has shape {e.shape}")
            if np.any(e < 0):
                raise ValueError(f"edge law {i} has negative entries")
            if np.max(np.abs(e.sum(axis=1) - pi)) > tol or np.max(np.abs(e.sum(axis=0) - pi)) > tol:
                raise InconsistentMarginals(f"edge law {i} marginals differ from pi")
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "edges", edges)

    @property
    def k(self) -> int:
        return len(self.alphabet)

    def edge_law(self, gen: int, sign: int = 1) -> np.ndarray:
        """Joint law of (X_e, X_{s}) for the letter s = (gen, sign)."""
        e = self.edges[gen - 1]
        return e if sign > 0 else e.T

    def kernel(self, gen: int, sign: int = 1) -> np.ndarray:
        """P(X_{g s} = l | X_g = k); rows of null states are left uniform."""
        e = self.edge_law(gen, sign)
        with np.errstate(invalid="ignore", divide="ignore"):
            ker = e / self.pi[:, None]
        ker[self.pi <= 0] = 1.0 / self.k
        return ker

    def marginal(self, W: Window, cap: int = PATTERN_CAP) -> JointDist:
        if not W.connected:
            H = hull(W)
            full = window_marginal(self, H, cap)
            return _restrict(full, H, W)
        return window_marginal(self, W, cap)

    # serialization -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "rank": self.rank,
            "alphabet": list(self.alphabet),
            "pi": self.pi.tolist(),
            "edges": {f"s{i + 1}": e.tolist() for i, e in enumerate(self.edges)},
        }

    @classmethod
    def from_json(cls, d: dict) -> "MarkovChainSpec":
        rank = int(d["rank"])
        edges = [d["edges"][f"s{i}"] for i in range(1, rank + 1)]
        return cls(rank, d["alphabet"], d["pi"], edges)

    @classmethod
    def load(cls, path: str | Path) -> "MarkovChainSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _restrict(j: JointDist, big: Window, small: Window) -> JointDist:
    keep = [big.index(w) for w in small]
    return j.marginal(keep)


def window_marginal(m: MarkovChainSpec, W: Window, cap: int = PATTERN_CAP) -> JointDist:
    """Exact law of (X_w) for a connected window, by the tree Markov property."""
    W.require_connected()
    _check_cap(m.k, len(W), cap)
    root = Word.identity(m.rank) if Word.identity(m.rank) in W else W.elements[0]
    order = _spanning_order(W, root)
    pos = {}
    table = m.pi.copy()
    pos[root] = 0
    for node, parent, letter in order[1:]:
        ker = m.kernel(*letter)
        shape = [1] * (table.ndim + 1)
        shape[pos[parent]] = m.k
        shape[-1] = m.k
        table = table[..., None] * ker.reshape(shape)
        pos[node] = table.ndim - 1
    perm = [pos[w] for w in W]
    table = np.transpose(table, perm)
    return JointDist(table, [m.alphabet] * len(W), tol=1e-9)


# ------------------------------------------------------------- chain builders


def ising_chain(eps: float, rank: int = 2) -> MarkovChainSpec:
    """Symmetric two-state chain flipping with probability eps along every edge."""
    e = 0.5 * np.array([[1 - eps, eps], [eps, 1 - eps]])
    return MarkovChainSpec(rank, (-1, 1), [0.5, 0.5], [e] * rank)


def iid_chain(p, rank: int = 2, alphabet=None) -> MarkovChainSpec:
    p = np.asarray(p, dtype=float)
    alphabet = tuple(range(len(p))) if alphabet is None else alphabet
    return MarkovChainSpec(rank, alphabet, p, [np.outer(p, p)] * rank)


def constant_chain(k: int, symbol: int, rank: int = 2) -> MarkovChainSpec:
    """Dirac measure on the configuration that is constantly ``symbol``."""
    pi = np.zeros(k)
    pi[symbol] = 1.0
    return MarkovChainSpec(rank, tuple(range(k)), pi, [np.diag(pi)] * rank)


def tree_lattice_chain() -> MarkovChainSpec:
    """Legal-labelling chain of the 4-regular tree seen by F_2 = <a, b>.

    States are bijections from the outgoing letters S = {a, b, A, B} to S.
    A pair (x_e, x_s) is compatible when the edge leaving e along s, which
    x_e labels t with pi1(t) = s, is labelled s^-1 from the far end:
    pi2(t^-1) = s^-1.
    """
    from itertools import permutations

    S = ("a", "A", "b", "B")
    inv = {"a": "A", "A": "a", "b": "B", "B": "b"}
    states = [dict(zip(S, p)) for p in permutations(S)]
    names = tuple("".join(st[t] for t in S) for st in states)
    k = len(states)
    edges = []
    for s in ("a", "b"):
        allowed = np.zeros((k, k))
        for i, p1 in enumerate(states):
            t = next(t for t in S if p1[t] == s)
            for j, p2 in enumerate(states):
                if p2[inv[t]] == inv[s]:
                    allowed[i, j] = 1.0
        edges.append(allowed / allowed.sum())
    return MarkovChainSpec(2, names, np.full(k, 1.0 / k), edges)


@dataclass(frozen=True, eq=False)
class HiddenMarkov:
    """A Markov chain observed through a symbol map ``label: K -> L``."""

    chain: MarkovChainSpec
    label: tuple[int, ...]
    alphabet: tuple

    def __init__(self, chain: MarkovChainSpec, label: Sequence[int], alphabet=None):
        label = tuple(int(x) for x in label)
        if len(label) != chain.k:
            raise ValueError("label map must cover the hidden alphabet")
        if alphabet is None:
            alphabet = tuple(range(max(label) + 1))
        object.__setattr__(self, "chain", chain)
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "alphabet", tuple(alphabet))

    @property
    def rank(self) -> int:
        return self.chain.rank

    def marginal(self, W: Window, cap: int = PATTERN_CAP) -> JointDist:
        hidden = self.chain.marginal(W, cap).table
        proj = np.zeros((self.chain.k, len(self.alphabet)))
        proj[np.arange(self.chain.k), self.label] = 1.0
        t = hidden
        for ax in range(t.ndim):
            t = np.moveaxis(np.tensordot(t, proj, axes=([ax], [0])), -1, ax)
        return JointDist(t, [self.alphabet] * len(W), tol=1e-9)


@dataclass(frozen=True, eq=False)
class Mixture:
    """Convex combination of pattern measures sharing rank and alphabet."""

    weights: tuple[float, ...]
    parts: tuple

    def __post_init__(self):
        ProbVector(self.weights, tol=1e-9)
        ranks = {p.rank for p in self.parts}
        alphabets = {p.alphabet for p in self.parts}
        if len(ranks) != 1 or len(alphabets) != 1:
            raise ValueError("mixture components must share rank and alphabet")

    @property
    def rank(self) -> int:
        return self.parts[0].rank

    @property
    def alphabet(self) -> tuple:
        return self.parts[0].alphabet

    def marginal(self, W: Window, cap: int = PATTERN_CAP) -> JointDist:
        t = sum(w * p.marginal(W, cap).table for w, p in zip(self.weights, self.parts))
        return JointDist(t, [self.alphabet] * len(W), tol=1e-9)


def two_atom_trivial(rank: int = 2) -> Mixture:
    """Equal mixture of the all-0 and all-1 configurations (trivial action on two points)."""
    return Mixture((0.5, 0.5), (constant_chain(2, 0, rank), constant_chain(2, 1, rank)))


# --------------------------------------------------------- entropy functionals


def f_markov(m: MarkovChainSpec) -> float:
    """-(r-1) H(X_e) + sum_i H(X_e | X_{s_i})."""
    r = m.rank
    h_vertex = shannon(m.pi)
    return -(r - 1) * h_vertex + sum(shannon(e) - h_vertex for e in m.edges)


def _coords(W: Window) -> Window:
    # the refined partition P^W reads the coordinates at w^-1 for w in W
    return Window.of((w.inverse() for w in W), W.rank)


def F_window(p: PatternMeasure, W: Window, cap: int = PATTERN_CAP) -> float:
    """F functional of the refined partition P^W, from exact joint marginals.

    F(Q) = H(Q) + sum_s [H(Q v sQ) - 2 H(Q)] over positive generators s.
    """
    W.require_connected()
    C = _coords(W)
    h_w = shannon(p.marginal(C, cap).table)
    total = h_w
    for g in range(1, p.rank + 1):
        joined = C.union(C.translate(Word.generator(g, p.rank)))
        total += shannon(p.marginal(joined, cap).table) - 2 * h_w
    return total


def naive_window_rate(p: PatternMeasure, F: Window, cap: int = PATTERN_CAP) -> float:
    """H(P^F) / |F|."""
    if len(F) == 0:
        raise ValueError("empty window")
    return shannon(p.marginal(_coords(F), cap).table) / len(F)


def f_trivial(h: float, rank: int) -> float:
    """f-invariant of the trivial action on a space of Shannon entropy h."""
    if h < 0:
        raise ValueError("entropy must be non-negative")
    return -(rank - 1) * h


def f_mixture(components: Sequence[tuple[float, float]], rank: int) -> float:
    """Ergodic decomposition: sum w_i f_i - (r-1) H(w)."""
    w = np.array([c[0] for c in components], dtype=float)
    ProbVector(w, tol=1e-9)
    fs = np.array([c[1] for c in components], dtype=float)
    return float(np.dot(w, fs)) - (rank - 1) * shannon(w)


def f_finite_factor(f_source: float, n: int, rank: int) -> float:
    """f of an n-to-1 factor of a system with f-invariant f_source."""
    return (rank - 1) * np.log(n) + f_source


def edge_entropies(m: MarkovChainSpec) -> dict[str, float]:
    return {
        "H_vertex": shannon(m.pi),
        **{f"H_pair_s{i + 1}": shannon(e) for i, e in enumerate(m.edges)},
        **{f"H_cond_s{i + 1}": ent.conditional_entropy(JointDist(e), 1) for i, e in enumerate(m.edges)},
    }
