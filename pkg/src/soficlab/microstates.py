"""Microstate counting on finite permutation models.

A labelling ``phi: V -> K`` is an ``(r, delta)``-microstate for a target
pattern measure when the empirical law of its pullback names on the ball
``B(r)`` lies within ``delta`` of the target's ``B(r)`` marginal.  Distances
are total-variation norms ``sum |p - q|`` and so range over ``[0, 2]``.

Pullback names follow ``name_v(g) = phi(sigma(g)^-1 v)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations, product
from typing import Sequence

import numpy as np

from .entropy import JointDist
from .group import Window, Word, ball
from .markov import MarkovChainSpec, PatternMeasure
from .sofic import SoficMap, SoficSequence

ENUM_CAP_BITS = 24
CHUNK = 1 << 14
EXACT_FACTORIAL_MAX = 20

EMPTY = "EMPTY"


class CapExceeded(ValueError):
    pass


class InfeasibleCounts(ValueError):
    pass


@dataclass
class MicrostateQuery:
    target: PatternMeasure
    radius: int
    delta: float
    sigma: SoficMap

    def __post_init__(self):
        if not 0 < self.delta <= 2:
            raise ValueError("delta must lie in (0, 2]")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        if self.sigma.rank != self.target.rank:
            raise ValueError("model rank differs from target rank")

    @property
    def window(self) -> Window:
        return ball(self.radius, self.sigma.rank)


def _pre_images(sigma: SoficMap, W: Window) -> np.ndarray:
    """``pre[j, v] = sigma(w_j)^-1 v``."""
    return np.array([sigma.word_perm(w.inverse()) for w in W])


def pullback_name(phi: Sequence[int], v: int, W: Window, sigma: SoficMap) -> tuple:
    phi = np.asarray(phi)
    return tuple(phi[sigma.word_perm(w.inverse())[v]].tolist() for w in W)


def empirical_distribution(phi: Sequence[int], W: Window, sigma: SoficMap, k: int | None = None) -> JointDist:
    phi = np.asarray(phi, dtype=np.int64)
    k = int(phi.max()) + 1 if k is None else k
    pre = _pre_images(sigma, W)
    names = phi[pre]  # shape (|W|, n)
    codes = np.ravel_multi_index(tuple(names), (k,) * len(W))
    hist = np.bincount(codes, minlength=k ** len(W)).astype(float) / sigma.n
    return JointDist(hist.reshape((k,) * len(W)), [tuple(range(k))] * len(W), tol=1e-9)


def tv_distance(p: JointDist | np.ndarray, q: JointDist | np.ndarray) -> float:
    a = p.table if isinstance(p, JointDist) else np.asarray(p)
    b = q.table if isinstance(q, JointDist) else np.asarray(q)
    return float(np.abs(a - b).sum())


class _Scorer:
    """Vectorised distance-to-target for batches of labellings."""

    def __init__(self, q: MicrostateQuery):
        W = q.window
        self.k = len(q.target.alphabet)
        self.n = q.sigma.n
        self.pre = _pre_images(q.sigma, W)
        self.weights = self.k ** np.arange(len(W) - 1, -1, -1, dtype=np.int64)
        self.target = q.target.marginal(W).table.ravel()
        self.npat = self.target.size
        self.delta = q.delta

    def distances(self, labels: np.ndarray) -> np.ndarray:
        """L1 distance for each row of ``labels`` (shape (m, n))."""
        m = labels.shape[0]
        codes = np.zeros((m, self.n), dtype=np.int64)
        for j, w in enumerate(self.weights):
            codes += labels[:, self.pre[j]] * w
        codes.sort(axis=1)
        flat = codes.ravel()
        rows = np.repeat(np.arange(m), self.n)
        start = np.ones(flat.size, dtype=bool)
        start[1:] = (flat[1:] != flat[:-1]) | (rows[1:] != rows[:-1])
        idx = np.flatnonzero(start)
        counts = np.diff(np.append(idx, flat.size))
        q = self.target[flat[idx]]
        contrib = np.abs(counts / self.n - q) - q
        # sum over unseen patterns of q is 1 minus sum over seen ones
        return 1.0 + np.bincount(rows[idx], weights=contrib, minlength=m)

    def hits(self, labels: np.ndarray) -> np.ndarray:
        return self.distances(labels) <= self.delta + 1e-12


def _labels_from_codes(codes: np.ndarray, k: int, n: int) -> np.ndarray:
    out = np.empty((codes.size, n), dtype=np.int64)
    c = codes.copy()
    for i in range(n):
        out[:, i] = c % k
        c //= k
    return out


def count_microstates_exact(q: MicrostateQuery, cap_bits: int = ENUM_CAP_BITS, threads: int = 1) -> int:
    """Exact number of (r, delta)-microstates by exhaustive enumeration."""
    k, n = len(q.target.alphabet), q.sigma.n
    total = k**n
    if total > 2**cap_bits:
        raise CapExceeded(f"{k}^{n} labellings exceeds 2^{cap_bits}")
    scorer = _Scorer(q)
    starts = range(0, total, CHUNK)

    def work(s):
        codes = np.arange(s, min(s + CHUNK, total), dtype=np.int64)
        return int(scorer.hits(_labels_from_codes(codes, k, n)).sum())

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return sum(ex.map(work, starts))
    return sum(map(work, starts))


def list_microstates(q: MicrostateQuery, cap_bits: int = ENUM_CAP_BITS) -> np.ndarray:
    """All microstates as rows of labels (small instances only)."""
    k, n = len(q.target.alphabet), q.sigma.n
    total = k**n
    if total > 2**cap_bits:
        raise CapExceeded(f"{k}^{n} labellings exceeds 2^{cap_bits}")
    scorer = _Scorer(q)
    found = []
    for s in range(0, total, CHUNK):
        labels = _labels_from_codes(np.arange(s, min(s + CHUNK, total), dtype=np.int64), k, n)
        found.append(labels[scorer.hits(labels)])
    return np.concatenate(found) if found else np.empty((0, n), dtype=np.int64)


@dataclass
class McEstimate:
    log_count: float | None
    halfwidth: float | None
    hits: int
    samples: int

    @property
    def empty(self) -> bool:
        return self.hits == 0

    def __str__(self):
        if self.empty:
            return f"no hits in {self.samples} samples"
        return f"{self.log_count:.6f} +/- {self.halfwidth:.6f} ({self.hits}/{self.samples})"


def estimate_microstates_mc(
    q: MicrostateQuery, samples: int, seed: int, z: float = 1.96, threads: int = 1
) -> McEstimate:
    """Monte-Carlo log-count: n ln|K| + ln(hit fraction) under uniform labellings.

    Chunk ``i`` draws from ``SeedSequence(seed).spawn`` child ``i``, so the
    result does not depend on ``threads``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    k, n = len(q.target.alphabet), q.sigma.n
    scorer = _Scorer(q)
    sizes = [min(CHUNK, samples - s) for s in range(0, samples, CHUNK)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def work(args):
        size, ss = args
        labels = np.random.default_rng(ss).integers(0, k, size=(size, n))
        return int(scorer.hits(labels).sum())

    jobs = list(zip(sizes, children))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            hits = sum(ex.map(work, jobs))
    else:
        hits = sum(map(work, jobs))
    if hits == 0:
        return McEstimate(None, None, 0, samples)
    frac = hits / samples
    se = math.sqrt((1 - frac) / (samples * frac))
    return McEstimate(n * math.log(k) + math.log(frac), z * se, hits, samples)


# --------------------------------------------------------------- annealed count


def _log_factorial(m: int) -> float:
    if m <= EXACT_FACTORIAL_MAX:
        return math.log(math.factorial(m))
    return math.lgamma(m + 1)


@dataclass
class AnnealedCount:
    log_expected: float
    n: int
    vertex_counts: list[int]
    pair_counts: list[np.ndarray]
    rounding_residual: float
    exact: Fraction | None = None

    @property
    def normalized(self) -> float:
        return self.log_expected / self.n


def annealed_from_counts(vertex_counts: Sequence[int], pair_counts: Sequence[np.ndarray]) -> AnnealedCount:
    """ln E[#labellings with the given vertex and pair counts] for uniform random permutations.

    ``pair_counts[i][k, l]`` counts vertices v with phi(v) = k and
    phi(sigma_i^-1 v) = l.
    """
    nk = [int(c) for c in vertex_counts]
    n = sum(nk)
    pcs = [np.asarray(p, dtype=np.int64) for p in pair_counts]
    for i, p in enumerate(pcs, start=1):
        if p.shape != (len(nk), len(nk)) or np.any(p < 0):
            raise InfeasibleCounts(f"pair table {i} has the wrong shape or negative entries")
        if not (np.array_equal(p.sum(axis=1), nk) and np.array_equal(p.sum(axis=0), nk)):
            raise InfeasibleCounts(f"pair table {i} margins differ from the vertex counts")
    logv = _log_factorial(n) - sum(_log_factorial(c) for c in nk)
    lfk = sum(_log_factorial(c) for c in nk)
    for p in pcs:
        logv += 2 * lfk - _log_factorial(n) - sum(_log_factorial(int(c)) for c in p.ravel())
    exact = None
    if n <= EXACT_FACTORIAL_MAX:
        f = math.factorial
        val = Fraction(f(n), math.prod(f(c) for c in nk))
        for p in pcs:
            val *= Fraction(math.prod(f(c) for c in nk) ** 2, f(n) * math.prod(f(int(c)) for c in p.ravel()))
        exact = val
        logv = math.log(val) if val > 0 else float("-inf")
    return AnnealedCount(logv, n, nk, pcs, 0.0, exact)


def feasible_n(m: MarkovChainSpec, start: int, max_den: int = 10**6) -> int:
    """Smallest n >= start making every n*pi and n*edge entry an integer."""
    den = 1
    for x in np.concatenate([m.pi.ravel(), *[e.ravel() for e in m.edges]]):
        den = math.lcm(den, Fraction(float(x)).limit_denominator(max_den).denominator)
    return -(-start // den) * den


def annealed_count(m: MarkovChainSpec, n: int) -> AnnealedCount:
    """Annealed expected count for the chain's exact vertex and pair statistics."""
    if n < 1:
        raise ValueError("n must be positive")
    raw_v = n * m.pi
    nk = np.rint(raw_v).astype(np.int64)
    resid = float(np.max(np.abs(raw_v - nk)))
    pcs = []
    for e in m.edges:
        raw = n * e
        rounded = np.rint(raw).astype(np.int64)
        resid = max(resid, float(np.max(np.abs(raw - rounded))))
        pcs.append(rounded)
    if resid >= 0.5 or nk.sum() != n:
        raise InfeasibleCounts(f"n={n} does not give integer counts; try n={feasible_n(m, n)}")
    try:
        out = annealed_from_counts(nk, pcs)
    except InfeasibleCounts as exc:
        raise InfeasibleCounts(f"{exc}; try n={feasible_n(m, n)}") from None
    out.rounding_residual = resid
    return out


def annealed_exhaustive(vertex_counts: Sequence[int], pair_counts: Sequence[np.ndarray]) -> Fraction:
    """Brute-force E[#labellings] over all labellings and all permutation tuples."""
    nk = list(vertex_counts)
    n, k, r = sum(nk), len(nk), len(pair_counts)
    targets = [np.asarray(p) for p in pair_counts]
    perms = [np.array(p) for p in permutations(range(n))]
    total = 0
    for labels in product(range(k), repeat=n):
        phi = np.array(labels)
        if list(np.bincount(phi, minlength=k)) != nk:
            continue
        good_per_gen = []
        for t in targets:
            good = 0
            for p in perms:
                inv = np.empty(n, dtype=np.int64)
                inv[p] = np.arange(n)
                table = np.zeros((k, k), dtype=np.int64)
                np.add.at(table, (phi, phi[inv]), 1)
                good += np.array_equal(table, t)
            good_per_gen.append(good)
        total += math.prod(good_per_gen)
    return Fraction(total, math.factorial(n) ** r)


# ------------------------------------------------------------- entropy tables


@dataclass
class EntropyRow:
    n: int
    radius: int
    delta: float
    log_count: float | None
    method: str
    seed: int | None
    halfwidth: float | None = None
    local_fraction: float | None = None

    @property
    def normalized(self) -> float | None:
        return None if self.log_count is None else self.log_count / self.n

    def csv_fields(self) -> dict:
        return {
            "n": self.n,
            "r": self.radius,
            "delta": self.delta,
            "log_count": EMPTY if self.log_count is None else self.log_count,
            "normalized": EMPTY if self.log_count is None else self.normalized,
            "method": self.method,
            "seed": "" if self.seed is None else self.seed,
        }


@dataclass
class EntropyTable:
    rows: list[EntropyRow] = field(default_factory=list)

    def last_three_slope(self) -> float | None:
        pts = [(r.n, r.normalized) for r in self.rows if r.normalized is not None][-3:]
        if len(pts) < 2:
            return None
        x, y = np.array(pts, dtype=float).T
        return float(np.polyfit(x, y, 1)[0])


def sofic_entropy_estimate(
    seq: SoficSequence,
    target: PatternMeasure,
    schedule: Sequence[tuple[int, float]],
    method: str = "exact",
    samples: int = 100_000,
    seed: int = 0,
    cap_bits: int = ENUM_CAP_BITS,
    threads: int = 1,
) -> EntropyTable:
    """Finite-n normalized log-counts along a sequence; no limit is claimed."""
    from .sofic import local_tree_mask

    table = EntropyTable()
    for i, sigma in enumerate(seq):
        for radius, delta in schedule:
            q = MicrostateQuery(target, radius, delta, sigma)
            frac = float(np.mean(local_tree_mask(sigma, radius))) if radius >= 1 else 1.0
            if method == "exact":
                c = count_microstates_exact(q, cap_bits, threads)
                row = EntropyRow(sigma.n, radius, delta, math.log(c) if c else None, method, None)
            elif method == "mc":
                est = estimate_microstates_mc(q, samples, seed + i, threads=threads)
                row = EntropyRow(sigma.n, radius, delta, est.log_count, method, seed + i, est.halfwidth)
            else:
                raise ValueError(f"unknown method {method!r}")
            row.local_fraction = frac
            table.rows.append(row)
    return table
