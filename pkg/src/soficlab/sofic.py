"""Finite permutation models of free groups and their diagnostics.

A :class:`SoficMap` stores one permutation of ``{0..n-1}`` per positive
generator.  Words act by composition, ``sigma(w1 w2) = sigma(w1) sigma(w2)``,
so every map built from permutations is a homomorphism.  Maps imported from
a file may carry per-word ``overrides`` to model near-homomorphisms; those
exist only for diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .group import Window, Word, ball, letters_of_rank

SPECTRAL_TOL = 1e-8
SPECTRAL_MAXITER = 10_000
DENSE_EIG_MAX_N = 2048


class SizeMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SoficMap:
    n: int
    rank: int
    perms: tuple[np.ndarray, ...]
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.perms) != self.rank:
            raise ValueError(f"expected {self.rank} permutations, got {len(self.perms)}")
        fixed = []
        for p in self.perms:
            p = np.asarray(p, dtype=np.int64)
            if p.shape != (self.n,) or not np.array_equal(np.sort(p), np.arange(self.n)):
                raise ValueError("each permutation must be a bijection of range(n)")
            p.setflags(write=False)
            fixed.append(p)
        object.__setattr__(self, "perms", tuple(fixed))
        inv = []
        for p in fixed:
            q = np.empty_like(p)
            q[p] = np.arange(self.n)
            q.setflags(write=False)
            inv.append(q)
        object.__setattr__(self, "_inverses", tuple(inv))

    @classmethod
    def from_perms(cls, perms: Sequence[Sequence[int]]) -> "SoficMap":
        perms = [np.asarray(p, dtype=np.int64) for p in perms]
        return cls(len(perms[0]), len(perms), tuple(perms))

    @property
    def is_homomorphism(self) -> bool:
        return not self.overrides

    def letter_perm(self, gen: int, sign: int) -> np.ndarray:
        return self.perms[gen - 1] if sign > 0 else self._inverses[gen - 1]

    def word_perm(self, w: Word) -> np.ndarray:
        """Image array of sigma(w): ``word_perm(w)[v] == sigma(w) v``."""
        if w.rank != self.rank:
            raise ValueError("word rank differs from model rank")
        if w in self.overrides:
            return self.overrides[w]
        out = np.arange(self.n)
        for gen, sign in reversed(w.letters):
            out = self.letter_perm(gen, sign)[out]
        return out

    def __eq__(self, other):
        if not isinstance(other, SoficMap):
            return NotImplemented
        return (
            self.n == other.n
            and self.rank == other.rank
            and all(np.array_equal(a, b) for a, b in zip(self.perms, other.perms))
            and self.overrides.keys() == other.overrides.keys()
        )

    def __hash__(self):
        return hash((self.n, self.rank, tuple(p.tobytes() for p in self.perms)))

    def to_json(self) -> dict:
        d = {"rank": self.rank, "n": self.n, "perms": [p.tolist() for p in self.perms]}
        if self.overrides:
            d["overrides"] = {str(w): p.tolist() for w, p in self.overrides.items()}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SoficMap":
        rank, n = int(d["rank"]), int(d["n"])
        perms = tuple(np.asarray(p, dtype=np.int64) for p in d["perms"])
        overrides = {}
        for text, p in d.get("overrides", {}).items():
            arr = np.asarray(p, dtype=np.int64)
            if arr.shape != (n,) or not np.array_equal(np.sort(arr), np.arange(n)):
                raise ValueError(f"override for {text!r} is not a permutation")
            overrides[Word.parse(text, rank)] = arr
        return cls(n, rank, perms, overrides)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SoficMap":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- constructors


def cyclic_model(n: int) -> SoficMap:
    """Z acting on Z/n by +1."""
    if n < 1:
        raise ValueError("n must be positive")
    return SoficMap(n, 1, (np.roll(np.arange(n), -1),))


def identity_model(n: int, rank: int) -> SoficMap:
    return SoficMap(n, rank, tuple(np.arange(n) for _ in range(rank)))


def random_free_model(rank: int, n: int, seed: int) -> SoficMap:
    """Independent uniform permutations, one per generator."""
    rng = np.random.default_rng(seed)
    return SoficMap(n, rank, tuple(rng.permutation(n) for _ in range(rank)))


def amplify(sigma: SoficMap, p: int) -> SoficMap:
    """p disjoint copies of sigma; vertex (j, k) is stored at k*n + j."""
    if p < 1:
        raise ValueError("p must be at least 1")
    n = sigma.n
    offsets = (np.arange(p) * n)[:, None]
    perms = tuple((perm[None, :] + offsets).ravel() for perm in sigma.perms)
    return SoficMap(n * p, sigma.rank, perms)


def disjoint_union(a: SoficMap, b: SoficMap) -> SoficMap:
    if a.rank != b.rank:
        raise ValueError("rank mismatch")
    perms = tuple(np.concatenate([pa, pb + a.n]) for pa, pb in zip(a.perms, b.perms))
    return SoficMap(a.n + b.n, a.rank, perms)


class SoficSequence:
    """Lazily built models at strictly increasing sizes."""

    def __init__(self, sizes: Iterable[int], build: Callable[[int], SoficMap], rank: int):
        self.sizes = list(sizes)
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("vertex counts must strictly increase")
        self._build = build
        self.rank = rank

    def __len__(self):
        return len(self.sizes)

    def __getitem__(self, i: int) -> SoficMap:
        sigma = self._build(self.sizes[i])
        if sigma.n != self.sizes[i] or sigma.rank != self.rank:
            raise ValueError("builder returned a model of the wrong size or rank")
        return sigma

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def random_free(cls, rank: int, sizes: Iterable[int], seed: int) -> "SoficSequence":
        sizes = list(sizes)
        return cls(sizes, lambda n: random_free_model(rank, n, seed + sizes.index(n)), rank)

    @classmethod
    def cyclic(cls, sizes: Iterable[int]) -> "SoficSequence":
        return cls(sizes, cyclic_model, 1)


# ----------------------------------------------------------------- diagnostics


@dataclass
class TraceReport:
    passed: bool
    fixed_fraction: dict[str, float]


def check_trace(sigma: SoficMap, F: Iterable[Word], delta: float) -> TraceReport:
    fractions = {}
    for w in F:
        if len(w) == 0:
            raise ValueError("F must not contain the identity")
        img = sigma.word_perm(w)
        fractions[str(w)] = float(np.mean(img == np.arange(sigma.n)))
    return TraceReport(all(f < delta for f in fractions.values()), fractions)


@dataclass
class MultiplicativeReport:
    passed: bool
    worst_agreement: float
    worst_pair: tuple[str, str] | None


def check_multiplicative(sigma: SoficMap, F: Iterable[Word], delta: float) -> MultiplicativeReport:
    """Pass iff sigma(g)sigma(h) agrees with sigma(gh) on > 1 - delta of V for all g, h in F."""
    F = list(F)
    worst, worst_pair = 1.0, None
    for g in F:
        pg = sigma.word_perm(g)
        for h in F:
            composed = pg[sigma.word_perm(h)]
            agree = float(np.mean(composed == sigma.word_perm(g * h)))
            if agree < worst:
                worst, worst_pair = agree, (str(g), str(h))
    # delta = 0 accepts exact homomorphisms
    passed = worst == 1.0 if delta == 0 else worst > 1.0 - delta
    return MultiplicativeReport(passed, worst, worst_pair)


def ball_images(sigma: SoficMap, radius: int) -> tuple[list[Word], np.ndarray]:
    """Words of B(radius) and the array ``img[i, v] = sigma(w_i) v``."""
    words = [Word.identity(sigma.rank)]
    imgs = [np.arange(sigma.n)]
    frontier = [(Word.identity(sigma.rank), imgs[0])]
    for _ in range(radius):
        nxt = []
        for w, img in frontier:
            for g, s in letters_of_rank(sigma.rank):
                if w.letters and w.letters[0] == (g, -s):
                    continue
                nw = Word(((g, s),) + w.letters, sigma.rank)
                nimg = sigma.letter_perm(g, s)[img]
                nxt.append((nw, nimg))
        frontier = nxt
        for w, img in frontier:
            words.append(w)
            imgs.append(img)
    return words, np.array(imgs)


def local_tree_mask(sigma: SoficMap, radius: int) -> np.ndarray:
    """Boolean per vertex: its labelled radius-ball is the Cayley-tree ball."""
    _, inner = ball_images(sigma, radius)
    _, outer = ball_images(sigma, radius + 1)
    sphere = outer[len(inner):]
    n = sigma.n
    cols = np.arange(n)
    srt = np.sort(inner, axis=0)
    injective = ~np.any(srt[1:] == srt[:-1], axis=0)
    inner_keys = (inner + n * cols[None, :]).ravel()
    sphere_keys = sphere + n * cols[None, :]
    # an outer word landing inside the ball means a cycle or extra edge
    closes = np.isin(sphere_keys, inner_keys).any(axis=0)
    return injective & ~closes


def bs_local_fraction(sigma: SoficMap, radius: int) -> float:
    if radius < 1:
        raise ValueError("radius must be at least 1")
    return float(np.mean(local_tree_mask(sigma, radius)))


def edit_distance(a: SoficMap, b: SoficMap, F: Iterable[Word]) -> float:
    if a.n != b.n:
        raise SizeMismatch(f"{a.n} vs {b.n} vertices")
    bad = np.zeros(a.n, dtype=bool)
    for w in F:
        bad |= a.word_perm(w) != b.word_perm(w)
    return float(np.mean(bad))


def walk_matrix(sigma: SoficMap) -> sp.csr_matrix:
    """Simple random walk on the 2r-regular multigraph (loops count twice)."""
    n = sigma.n
    rows = np.arange(n)
    A = sp.csr_matrix((n, n))
    for p in sigma.perms:
        P = sp.csr_matrix((np.ones(n), (rows, p)), shape=(n, n))
        A = A + P + P.T
    return A / (2 * sigma.rank)


@dataclass
class ExpanderWitness:
    """lambda2 is the second-largest eigenvalue of the walk matrix; slem is
    the largest modulus after the top eigenvalue (None when not computed)."""

    lambda2: float
    rank: int
    iterations: int
    method: str
    slem: float | None = None

    @property
    def edge_expansion_bound(self) -> float:
        """Cheeger lower bound on |boundary(A)| / |A| for |A| <= n/2."""
        return max(0.0, 1.0 - self.lambda2) * self.rank

    def is_expander_at(self, threshold: float) -> bool:
        return self.lambda2 <= threshold


def expander_witness(sigma: SoficMap) -> ExpanderWitness:
    """Second-largest eigenvalue of the walk matrix.

    Small models are diagonalised densely; larger ones use power iteration on
    the lazy walk (M + I)/2 with the constant vector projected out, which has
    the same eigenvector order and a non-negative spectrum.
    """
    n = sigma.n
    if n < 2:
        raise ValueError("need at least two vertices")
    M = walk_matrix(sigma)
    if n <= DENSE_EIG_MAX_N:
        ev = np.linalg.eigvalsh(M.toarray())
        lam2 = float(min(1.0, ev[-2]))
        slem = float(min(1.0, max(abs(ev[-2]), abs(ev[0]))))
        return ExpanderWitness(lam2, sigma.rank, 0, "dense", slem)

    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    x -= x.mean()
    x /= np.linalg.norm(x)
    est = 0.0
    it = 0
    for it in range(1, SPECTRAL_MAXITER + 1):
        y = 0.5 * (M @ x + x)
        y -= y.mean()
        new = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0:
            est = 0.0
            break
        x = y / norm
        if abs(new - est) < SPECTRAL_TOL:
            est = new
            break
        est = new
    return ExpanderWitness(float(min(1.0, 2 * est - 1)), sigma.rank, it, "power")
