"""Reduced words in the free group F_r and finite windows in its Cayley graph.

A word is a tuple of ``(generator, sign)`` letters with generators indexed
``1..r``.  Words serialize as strings over ``a, b, c, ...`` with uppercase
letters for inverses, so ``"abA"`` is a b a^-1.
"""

from __future__ import annotations

import string
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

Letter = tuple[int, int]


class RankMismatch(ValueError):
    pass


class DisconnectedWindow(ValueError):
    pass


def _reduce(letters: Iterable[Letter]) -> tuple[Letter, ...]:
    out: list[Letter] = []
    for gen, sign in letters:
        if out and out[-1][0] == gen and out[-1][1] == -sign:
            out.pop()
        else:
            out.append((gen, sign))
    return tuple(out)


@dataclass(frozen=True, order=False)
class Word:
    """A reduced word in the free group of the given rank."""

    letters: tuple[Letter, ...]
    rank: int

    def __post_init__(self):
        for gen, sign in self.letters:
            if not 1 <= gen <= self.rank or sign not in (1, -1):
                raise ValueError(f"bad letter {(gen, sign)} for rank {self.rank}")
        for (g1, s1), (g2, s2) in zip(self.letters, self.letters[1:]):
            if g1 == g2 and s1 == -s2:
                raise ValueError("word is not reduced")

    @classmethod
    def from_letters(cls, letters: Iterable[Letter], rank: int) -> "Word":
        return cls(_reduce(letters), rank)

    @classmethod
    def identity(cls, rank: int) -> "Word":
        return cls((), rank)

    @classmethod
    def generator(cls, i: int, rank: int, sign: int = 1) -> "Word":
        return cls(((i, sign),), rank)

    @classmethod
    def parse(cls, text: str, rank: int) -> "Word":
        """Parse ``"abA"`` style notation; ``"e"`` or ``""`` is the identity."""
        text = text.strip()
        if text in ("", "e"):
            return cls.identity(rank)
        letters = []
        for ch in text:
            if ch.islower():
                letters.append((string.ascii_lowercase.index(ch) + 1, 1))
            elif ch.isupper():
                letters.append((string.ascii_uppercase.index(ch) + 1, -1))
            else:
                raise ValueError(f"bad character {ch!r} in word {text!r}")
        return cls.from_letters(letters, rank)

    def __str__(self) -> str:
        if not self.letters:
            return "e"
        return "".join(
            string.ascii_lowercase[g - 1] if s > 0 else string.ascii_uppercase[g - 1]
            for g, s in self.letters
        )

    def __repr__(self) -> str:
        return f"Word({str(self)!r}, rank={self.rank})"

    def __len__(self) -> int:
        return len(self.letters)

    def __mul__(self, other: "Word") -> "Word":
        return multiply(self, other)

    def inverse(self) -> "Word":
        return Word(tuple((g, -s) for g, s in reversed(self.letters)), self.rank)

    def sort_key(self) -> tuple:
        # (length, lexicographic) with a < A < b < B < ...
        return (len(self.letters), tuple((g, -s) for g, s in self.letters))


def multiply(a: Word, b: Word) -> Word:
    if a.rank != b.rank:
        raise RankMismatch(f"rank {a.rank} vs rank {b.rank}")
    return Word(_reduce(a.letters + b.letters), a.rank)


def letters_of_rank(rank: int) -> list[Letter]:
    return [(g, s) for g in range(1, rank + 1) for s in (1, -1)]


def _sphere_iter(radius: int, rank: int) -> Iterator[Word]:
    yield Word.identity(rank)
    frontier = [()]
    for _ in range(radius):
        nxt = []
        for w in frontier:
            for g, s in letters_of_rank(rank):
                if w and w[-1] == (g, -s):
                    continue
                nxt.append(w + ((g, s),))
        frontier = nxt
        for w in frontier:
            yield Word(w, rank)


def ball_size(radius: int, rank: int) -> int:
    if radius == 0:
        return 1
    if rank == 1:
        return 2 * radius + 1
    return 1 + 2 * rank * ((2 * rank - 1) ** radius - 1) // (2 * rank - 2)


@dataclass(frozen=True)
class Window:
    """A finite set of group elements in canonical (length, lex) order.

    ``connected`` is only ever True after a breadth-first check over
    one-letter neighbours inside the set.
    """

    elements: tuple[Word, ...]
    rank: int
    connected: bool = field(default=False, compare=False)

    def __post_init__(self):
        if len(set(self.elements)) != len(self.elements):
            raise ValueError("window has duplicate elements")
        for w in self.elements:
            if w.rank != self.rank:
                raise RankMismatch(f"element {w} has rank {w.rank}, window rank {self.rank}")

    @classmethod
    def of(cls, words: Iterable[Word | str], rank: int, check: bool = True) -> "Window":
        parsed = {Word.parse(w, rank) if isinstance(w, str) else w for w in words}
        elems = tuple(sorted(parsed, key=Word.sort_key))
        win = cls(elems, rank)
        if check and is_connected(elems):
            win = cls(elems, rank, connected=True)
        return win

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[Word]:
        return iter(self.elements)

    def __contains__(self, w: Word) -> bool:
        return w in self.elements

    def index(self, w: Word) -> int:
        return self.elements.index(w)

    def require_connected(self) -> "Window":
        if not self.connected:
            raise DisconnectedWindow(
                f"window {[str(w) for w in self.elements]} is not a verified connected set"
            )
        return self

    def translate(self, g: Word) -> "Window":
        """Left translate: {g w : w in W}."""
        return Window.of((g * w for w in self.elements), self.rank)

    def union(self, other: "Window") -> "Window":
        if other.rank != self.rank:
            raise RankMismatch("rank mismatch")
        return Window.of(set(self.elements) | set(other.elements), self.rank)

    def strings(self) -> list[str]:
        return [str(w) for w in self.elements]


def is_connected(elements: Iterable[Word]) -> bool:
    elems = set(elements)
    if not elems:
        return False
    start = next(iter(elems))
    seen = {start}
    queue = deque([start])
    while queue:
        w = queue.popleft()
        for g, s in letters_of_rank(w.rank):
            nb = w * Word(((g, s),), w.rank)
            if nb in elems and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(elems)


def ball(radius: int, rank: int) -> Window:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    elems = tuple(sorted(_sphere_iter(radius, rank), key=Word.sort_key))
    return Window(elems, rank, connected=True)


def product_set(W: Window, F: Window) -> set[Word]:
    if W.rank != F.rank:
        raise RankMismatch("rank mismatch")
    return {w * f for w in W for f in F}


def growth_ratio(W: Window, F: Window) -> Fraction:
    """|W F| / |F| as an exact fraction."""
    if len(F) == 0:
        raise ValueError("F must be non-empty")
    return Fraction(len(product_set(W, F)), len(F))
