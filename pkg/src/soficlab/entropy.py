"""Shannon entropy of finite distributions, in nats."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

SUM_TOL = 1e-12
ZERO_WEIGHT = 1e-15


def _xlogx_sum(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > ZERO_WEIGHT]
    return float(-np.sum(p * np.log(p)))


@dataclass(frozen=True)
class ProbVector:
    weights: np.ndarray
    labels: tuple

    def __init__(self, weights, labels: Sequence[Hashable] | None = None, tol: float = SUM_TOL):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(w < 0):
            raise ValueError("negative weight")
        if abs(w.sum() - 1.0) > tol:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if labels is None:
            labels = range(len(w))
        labels = tuple(labels)
        if len(labels) != len(w):
            raise ValueError("labels and weights differ in length")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class JointDist:
    """Probability table over a product of finite alphabets."""

    table: np.ndarray
    axes: tuple

    def __init__(self, table, axes: Sequence[Sequence[Hashable]] | None = None, tol: float = SUM_TOL):
        t = np.asarray(table, dtype=float)
        if np.any(t < 0):
            raise ValueError("negative probability")
        if abs(t.sum() - 1.0) > tol:
            raise ValueError(f"table sums to {t.sum()!r}, not 1")
        if axes is None:
            axes = [tuple(range(k)) for k in t.shape]
        axes = tuple(tuple(a) for a in axes)
        if tuple(len(a) for a in axes) != t.shape:
            raise ValueError("axes do not match table shape")
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "axes", axes)

    @property
    def ndim(self) -> int:
        return self.table.ndim

    def marginal(self, keep: Sequence[int] | int) -> "JointDist":
        if isinstance(keep, int):
            keep = [keep]
        keep = list(keep)
        for k in keep:
            if not 0 <= k < self.ndim:
                raise IndexError(f"axis {k} out of range")
        drop = tuple(i for i in range(self.ndim) if i not in keep)
        t = self.table.sum(axis=drop)
        # restore requested axis order
        remaining = [i for i in range(self.ndim) if i in keep]
        t = np.moveaxis(t, [remaining.index(k) for k in keep], range(len(keep)))
        return JointDist(t, [self.axes[k] for k in keep], tol=1e-9)

    def to_prob_vector(self) -> ProbVector:
        if self.ndim != 1:
            raise ValueError("only one-axis tables convert to ProbVector")
        return ProbVector(self.table, self.axes[0], tol=1e-9)


def shannon(p) -> float:
    """-sum p ln p with 0 ln 0 = 0.  Accepts ProbVector, JointDist or an array."""
    if isinstance(p, ProbVector):
        return _xlogx_sum(p.weights)
    if isinstance(p, JointDist):
        return _xlogx_sum(p.table)
    return _xlogx_sum(np.asarray(p))


def binary_entropy(eps: float) -> float:
    return shannon([eps, 1.0 - eps])


def conditional_entropy(j: JointDist, given: int) -> float:
    """H(other | given) for a two-axis joint law."""
    if j.ndim != 2:
        raise ValueError("conditional_entropy needs a two-axis JointDist")
    if given not in (0, 1):
        raise IndexError(f"axis {given} out of range")
    return shannon(j.table) - shannon(j.table.sum(axis=1 - given))


def mutual_information(j: JointDist) -> float:
    return shannon(j.table.sum(axis=1)) + shannon(j.table.sum(axis=0)) - shannon(j.table)


def rokhlin_distance(j: JointDist) -> float:
    """H(P|Q) + H(Q|P) for partitions coupled by the joint table."""
    return conditional_entropy(j, 0) + conditional_entropy(j, 1)


def product(p, q) -> JointDist:
    p = p if isinstance(p, ProbVector) else ProbVector(p)
    q = q if isinstance(q, ProbVector) else ProbVector(q)
    return JointDist(np.outer(p.weights, q.weights), [p.labels, q.labels])
