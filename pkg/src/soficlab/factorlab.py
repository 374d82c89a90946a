"""Window-level checks of GF(2)-linear factor maps on the rank-2 free group.

Everything here is finite: a map from patterns on a source window to patterns
on a target window.  Reports describe window-level evidence only and say
nothing certified about the infinite shift.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .group import Window, Word, ball
from .markov import MarkovChainSpec, F_window, f_markov

RANK = 2
ENUM_CAP_BITS = 24
CHUNK = 1 << 20
EVIDENCE = "window-level evidence"


class CapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class WindowMap:
    """GF(2)-linear map from source-window bits to output bits.

    rows[j] is a bit mask over source sites: output bit j is the parity of
    the source bits it selects.  labels name the output bits.
    """

    source: Window
    target: Window
    rows: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        full = (1 << len(self.source)) - 1
        for j, row in enumerate(self.rows):
            if row & ~full:
                raise ValueError(f"output bit {self.labels[j]} reads sites outside the source window")

    @property
    def n_in(self) -> int:
        return len(self.source)

    @property
    def n_out(self) -> int:
        return len(self.rows)

    def apply(self, x: int) -> int:
        """Image of a source pattern given as a bit mask."""
        out = 0
        for j, row in enumerate(self.rows):
            out |= (bin(x & row).count("1") & 1) << j
        return out

    def apply_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        out = np.zeros(len(xs), dtype=np.uint64)
        for j, row in enumerate(self.rows):
            out |= (np.bitwise_count(xs & np.uint64(row)) & np.uint8(1)).astype(np.uint64) << np.uint64(j)
        return out


def gf2_rank(rows) -> int:
    """Rank over GF(2) of bit-packed rows by elimination on leading bits."""
    pivots: dict[int, int] = {}
    for row in rows:
        while row:
            top = row.bit_length() - 1
            if top not in pivots:
                pivots[top] = row
                break
            row ^= pivots[top]
    return len(pivots)


def _bit(src: Window, w: Word) -> int:
    return 1 << src.index(w)


def ow_window_map(r: int) -> WindowMap:
    """x -> (x_g + x_ga, x_g + x_gb) for g in B(r), reading B(r+1)."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    src, tgt = ball(r + 1, RANK), ball(r, RANK)
    a, b = Word.generator(1, RANK), Word.generator(2, RANK)
    rows, labels = [], []
    for g in tgt:
        for name, s in (("a", a), ("b", b)):
            rows.append(_bit(src, g) ^ _bit(src, g * s))
            labels.append(f"{g}:{name}")
    return WindowMap(src, tgt, tuple(rows), tuple(labels))


def identity_map(W: Window) -> WindowMap:
    return WindowMap(W, W, tuple(1 << i for i in range(len(W))), tuple(W.strings()))


def zero_map(W: Window) -> WindowMap:
    """x -> x_e + x_e at every site."""
    return WindowMap(W, W, tuple(0 for _ in W), tuple(W.strings()))


@dataclass(frozen=True)
class Pushforward:
    fiber_histogram: dict[int, int]
    image_size: int
    gf2_rank: int
    n_in: int
    n_out: int
    method: str = "enumeration"
    kind: str = EVIDENCE

    @property
    def is_uniform_on_image(self) -> bool:
        return len(self.fiber_histogram) == 1

    @property
    def surjective(self) -> bool:
        return self.image_size == 1 << self.n_out

    @property
    def fiber_sizes(self) -> list[int]:
        return sorted(Counter(self.fiber_histogram).elements())


def pushforward_uniform(m: WindowMap, cap_bits: int = ENUM_CAP_BITS) -> Pushforward:
    """Push the uniform law on source patterns through m by full enumeration."""
    if m.n_in > cap_bits:
        raise CapExceeded(f"2^{m.n_in} source patterns exceeds the cap 2^{cap_bits}")
    counts: Counter = Counter()
    total = 1 << m.n_in
    for start in range(0, total, CHUNK):
        xs = np.arange(start, min(start + CHUNK, total), dtype=np.uint64)
        vals, c = np.unique(m.apply_array(xs), return_counts=True)
        for v, k in zip(vals.tolist(), c.tolist()):
            counts[v] += k
    hist = Counter(counts.values())
    return Pushforward(dict(sorted(hist.items())), len(counts), gf2_rank(m.rows), m.n_in, m.n_out)


def pushforward_by_rank(m: WindowMap) -> Pushforward:
    """Fiber structure from the rank alone: every fiber of a linear map is a kernel coset."""
    rk = gf2_rank(m.rows)
    return Pushforward({1 << (m.n_in - rk): 1 << rk}, 1 << rk, rk, m.n_in, m.n_out, method="rank")


def kernel_contains(m: WindowMap, x: int) -> bool:
    return m.apply(x) == 0


def coset_segments(W: Window, gen: int = 1) -> list[list[Word]]:
    """Pieces of left cosets g<s> inside W, joined along right multiplication by s."""
    s = Word.generator(gen, W.rank)
    members = set(W)
    seen: set = set()
    segs = []
    for w in W:
        if w in seen:
            continue
        seg, stack = [], [w]
        seen.add(w)
        while stack:
            u = stack.pop()
            seg.append(u)
            for nb in (u * s, u * s.inverse()):
                if nb in members and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        segs.append(sorted(seg, key=Word.sort_key))
    return segs


def coset_constant_chain(rank: int = RANK) -> MarkovChainSpec:
    """Binary chain equal along a-edges and independent uniform along the others."""
    pi = np.array([0.5, 0.5])
    edges = [np.eye(2) / 2] + [np.full((2, 2), 0.25)] * (rank - 1)
    return MarkovChainSpec(rank, (0, 1), pi, edges)


@dataclass(frozen=True)
class VariantReport:
    radius: int
    rank: int
    degrees_of_freedom: int
    fiber_histogram: dict[int, int]
    uniform: bool
    surjective: bool
    gf2_rank: int
    f_value: float
    window_f_values: dict[str, float]
    method: str
    kind: str = EVIDENCE

    def to_json(self) -> dict:
        return {
            "radius": self.radius,
            "rank": self.rank,
            "fiber_histogram": {str(k): v for k, v in self.fiber_histogram.items()},
            "uniform": self.uniform,
            "surjective": self.surjective,
            "gf2_rank": self.gf2_rank,
            "degrees_of_freedom": self.degrees_of_freedom,
            "f_value": self.f_value,
            "method": self.method,
            "kind": self.kind,
        }


def variant_map(r: int) -> tuple[WindowMap, list[list[Word]]]:
    """x -> x_g + x_gb on B(r), with sources constant on a-coset segments of B(r+1).

    The returned map acts on one bit per segment.
    """
    if not 0 <= r <= 2:
        raise ValueError("radius must be 0, 1 or 2")
    W, tgt = ball(r + 1, RANK), ball(r, RANK)
    segs = coset_segments(W, 1)
    seg_of = {w: i for i, seg in enumerate(segs) for w in seg}
    b = Word.generator(2, RANK)
    rows = tuple((1 << seg_of[g]) ^ (1 << seg_of[g * b]) for g in tgt)
    # the map's source is indexed by segment; use the segment leaders as the source window
    leaders = Window(tuple(seg[0] for seg in segs), RANK)
    return WindowMap(leaders, tgt, rows, tuple(tgt.strings())), segs


def variant_factor_check(r: int, cap_bits: int = ENUM_CAP_BITS) -> VariantReport:
    m, segs = variant_map(r)
    push = pushforward_uniform(m, cap_bits) if m.n_in <= cap_bits else pushforward_by_rank(m)
    chain = coset_constant_chain(RANK)
    windows = {}
    for rad in range(0, min(r, 1) + 1):
        W = ball(rad, RANK)
        windows[f"B({rad})"] = F_window(chain, W)
    return VariantReport(
        radius=r,
        rank=RANK,
        degrees_of_freedom=len(segs),
        fiber_histogram=push.fiber_histogram,
        uniform=push.is_uniform_on_image and push.surjective,
        surjective=push.surjective,
        gf2_rank=push.gf2_rank,
        f_value=f_markov(chain),
        window_f_values=windows,
        method=push.method,
    )


def ow_report(r: int, cap_bits: int = ENUM_CAP_BITS) -> dict:
    m = ow_window_map(r)
    push = pushforward_uniform(m, cap_bits)
    ones = (1 << m.n_in) - 1
    return {
        "radius": r,
        "rank": RANK,
        "fiber_histogram": {str(k): v for k, v in push.fiber_histogram.items()},
        "uniform": push.is_uniform_on_image and push.surjective,
        "gf2_rank": push.gf2_rank,
        "image_size": push.image_size,
        "constants_in_kernel": kernel_contains(m, ones),
        "kind": EVIDENCE,
    }
