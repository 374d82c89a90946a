"""Subshifts of finite type, depth-1 potentials, partition functions and
equilibrium states on finite permutation models.

Energies use ``Z = sum exp(+E)``.  On a model ``sigma`` the pair seen along
generator ``i`` at vertex ``v`` is ``(phi(v), phi(sigma_i^-1 v))``, matching
``(x_e, x_{s_i})`` of the pullback name.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .entropy import ProbVector, shannon
from .markov import MarkovChainSpec, f_markov
from .sofic import SoficMap, SoficSequence

ENUM_CAP_BITS = 24
VARIATIONAL_CAP_BITS = 12
SINKHORN_TOL = 1e-14
ASCENT_TOL = 1e-12


class InfeasibleSft(ValueError):
    pass


class CapExceeded(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SftSpec:
    alphabet: tuple
    allowed: tuple[np.ndarray, ...]

    def __init__(self, alphabet: Sequence, allowed: Sequence):
        alphabet = tuple(alphabet)
        k = len(alphabet)
        mats = tuple(np.asarray(a, dtype=bool) for a in allowed)
        for i, a in enumerate(mats, start=1):
            if a.shape != (k, k):
                raise ValueError(f"allowed-pair table {i} has shape {a.shape}")
            if not (a.any(axis=1).all() and a.any(axis=0).all()):
                raise InfeasibleSft(f"generator {i}: some symbol has no legal successor or predecessor")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "allowed", mats)

    @property
    def rank(self) -> int:
        return len(self.allowed)

    @property
    def k(self) -> int:
        return len(self.alphabet)

    def supports(self, m: MarkovChainSpec, tol: float = 1e-15) -> bool:
        return all(np.all(e[~a] <= tol) for e, a in zip(m.edges, self.allowed))

    def symmetries(self) -> list[tuple[int, ...]]:
        """Symbol permutations preserving every allowed-pair table.

        All permutations are tried for at most 7 symbols, cyclic shifts otherwise.
        """
        k = self.k
        cands = permutations(range(k)) if k <= 7 else (tuple((i + j) % k for i in range(k)) for j in range(k))
        out = []
        for tau in cands:
            t = np.array(tau)
            if all(np.array_equal(a[np.ix_(t, t)], a) for a in self.allowed):
                out.append(tuple(tau))
        return out

    def is_symbol_transitive(self) -> bool:
        orbit = {0}
        for tau in self.symmetries():
            orbit.add(tau[0])
        return len(orbit) == self.k

    def to_json(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "allowed": {f"s{i + 1}": a.astype(int).tolist() for i, a in enumerate(self.allowed)},
        }

    @classmethod
    def from_json(cls, d: dict) -> "SftSpec":
        if "mod_n" in d:
            return mod_n_sft(int(d["mod_n"]), int(d.get("rank", 2)))
        allowed = d["allowed"]
        rank = len(allowed)
        return cls(d["alphabet"], [allowed[f"s{i}"] for i in range(1, rank + 1)])


def mod_n_sft(n: int, rank: int = 2) -> SftSpec:
    """x(g s) - x(g) in {0, 1} mod n for every generator s."""
    a = np.zeros((n, n), dtype=bool)
    for i in range(n):
        a[i, i] = a[i, (i + 1) % n] = True
    return SftSpec(tuple(range(n)), [a] * rank)


def full_shift(k: int, rank: int = 2) -> SftSpec:
    return SftSpec(tuple(range(k)), [np.ones((k, k), dtype=bool)] * rank)


@dataclass(frozen=True, eq=False)
class Potential:
    vertex: np.ndarray
    edges: tuple[np.ndarray, ...]

    def __init__(self, vertex, edges):
        v = np.asarray(vertex, dtype=float)
        es = tuple(np.asarray(e, dtype=float) for e in edges)
        if not np.all(np.isfinite(v)) or not all(np.all(np.isfinite(e)) for e in es):
            raise ValueError("potential values must be finite")
        for e in es:
            if e.shape != (len(v), len(v)):
                raise ValueError("edge table shape differs from vertex table")
        object.__setattr__(self, "vertex", v)
        object.__setattr__(self, "edges", es)

    @property
    def k(self) -> int:
        return len(self.vertex)

    @property
    def rank(self) -> int:
        return len(self.edges)

    def scaled(self, t: float) -> "Potential":
        return Potential(t * self.vertex, [t * e for e in self.edges])

    def to_json(self) -> dict:
        return {"vertex": self.vertex.tolist(), "edges": {f"s{i + 1}": e.tolist() for i, e in enumerate(self.edges)}}

    @classmethod
    def from_json(cls, d: dict) -> "Potential":
        if "ising" in d:
            p = d["ising"]
            return ising_potential(p["beta"], p.get("field", 0.0), int(p.get("rank", 2)))
        edges = d["edges"]
        return cls(d["vertex"], [edges[f"s{i}"] for i in range(1, len(edges) + 1)])


def ising_potential(beta: float, field: float = 0.0, rank: int = 2) -> Potential:
    """Spins (-1, +1): vertex energy field*x, edge energy beta*x*y."""
    spins = np.array([-1.0, 1.0])
    return Potential(field * spins, [beta * np.outer(spins, spins)] * rank)


def zero_potential(k: int, rank: int) -> Potential:
    return Potential(np.zeros(k), [np.zeros((k, k))] * rank)


# ------------------------------------------------------------ configurations


def _labels_from_codes(codes: np.ndarray, k: int, n: int) -> np.ndarray:
    out = np.empty((codes.size, n), dtype=np.int64)
    c = codes.copy()
    for i in range(n):
        out[:, i] = c % k
        c //= k
    return out


def energies(sigma: SoficMap, psi: Potential, labels: np.ndarray) -> np.ndarray:
    """E(phi) for each row of ``labels``; illegal rows are not filtered here."""
    e = psi.vertex[labels].sum(axis=1)
    for i, tab in enumerate(psi.edges):
        back = sigma.letter_perm(i + 1, -1)
        e = e + tab[labels, labels[:, back]].sum(axis=1)
    return e


def legal(sigma: SoficMap, sft: SftSpec, labels: np.ndarray) -> np.ndarray:
    ok = np.ones(labels.shape[0], dtype=bool)
    for i, a in enumerate(sft.allowed):
        back = sigma.letter_perm(i + 1, -1)
        ok &= a[labels, labels[:, back]].all(axis=1)
    return ok


def _check(sigma: SoficMap, psi: Potential, constraint: SftSpec | None):
    if psi.rank != sigma.rank:
        raise ValueError("potential rank differs from model rank")
    if constraint is not None and (constraint.rank != sigma.rank or constraint.k != psi.k):
        raise ValueError("constraint does not match the potential")


def enumerate_configurations(sigma: SoficMap, psi: Potential, constraint: SftSpec | None, cap_bits: int):
    """Yield (labels, energies) chunks over all legal labellings."""
    k, n = psi.k, sigma.n
    total = k**n
    if total > 2**cap_bits:
        raise CapExceeded(f"{k}^{n} configurations exceeds 2^{cap_bits}")
    chunk = 1 << 14
    for s in range(0, total, chunk):
        labels = _labels_from_codes(np.arange(s, min(s + chunk, total), dtype=np.int64), k, n)
        if constraint is not None:
            labels = labels[legal(sigma, constraint, labels)]
        yield labels, energies(sigma, psi, labels)


def _cycles(perm: np.ndarray) -> list[list[int]]:
    seen = np.zeros(len(perm), dtype=bool)
    out = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        cyc, v = [], start
        while not seen[v]:
            seen[v] = True
            cyc.append(v)
            v = perm[v]
        out.append(cyc)
    return out


def _log_trace_power(T: np.ndarray, length: int) -> float:
    """ln tr(T^length) with rescaling to avoid overflow."""
    M = np.eye(T.shape[0])
    log_scale = 0.0
    base, p = T.copy(), length
    base_scale = 0.0
    while p:
        if p & 1:
            M = M @ base
            s = np.abs(M).max()
            if s > 0:
                M /= s
                log_scale += math.log(s) + base_scale
        p >>= 1
        if p:
            base = base @ base
            base_scale *= 2
            s = np.abs(base).max()
            if s > 0:
                base /= s
                base_scale += math.log(s)
    tr = np.trace(M)
    return math.log(tr) + log_scale if tr > 0 else float("-inf")


def transfer_matrix(psi: Potential, constraint: SftSpec | None = None) -> np.ndarray:
    """T[k, l] = exp(vertex(k) + edge(k, l)) for a rank-1 potential."""
    if psi.rank != 1:
        raise ValueError("transfer matrices need rank 1")
    T = np.exp(psi.vertex[:, None] + psi.edges[0])
    if constraint is not None:
        T = T * constraint.allowed[0]
    return T


def partition_function(
    sigma: SoficMap,
    psi: Potential,
    constraint: SftSpec | None = None,
    cap_bits: int = ENUM_CAP_BITS,
    method: str = "auto",
) -> float:
    """ln Z over legal labellings.  Rank-1 models use cycle transfer matrices."""
    _check(sigma, psi, constraint)
    if method == "auto":
        method = "transfer" if sigma.rank == 1 else "enumerate"
    if method == "transfer":
        if sigma.rank != 1:
            raise ValueError("transfer method needs rank 1")
        T = transfer_matrix(psi, constraint)
        back = sigma.letter_perm(1, -1)
        return float(sum(_log_trace_power(T, len(c)) for c in _cycles(back)))
    parts = [logsumexp(e) for _, e in enumerate_configurations(sigma, psi, constraint, cap_bits) if e.size]
    if not parts:
        return float("-inf")
    return float(logsumexp(parts))


@dataclass
class PressureRow:
    n: int
    log_z: float

    @property
    def normalized(self) -> float:
        return self.log_z / self.n


@dataclass
class PressureTable:
    rows: list[PressureRow] = field(default_factory=list)

    def last_three_slope(self) -> float | None:
        pts = [(r.n, r.normalized) for r in self.rows][-3:]
        if len(pts) < 2:
            return None
        x, y = np.array(pts).T
        return float(np.polyfit(x, y, 1)[0])


def pressure_table(
    seq: SoficSequence, psi: Potential, constraint: SftSpec | None = None, cap_bits: int = ENUM_CAP_BITS
) -> PressureTable:
    return PressureTable([PressureRow(s.n, partition_function(s, psi, constraint, cap_bits)) for s in seq])


def transfer_pressure(psi: Potential, constraint: SftSpec | None = None) -> float:
    """ln of the Perron eigenvalue of the rank-1 transfer matrix."""
    return float(np.log(np.max(np.abs(np.linalg.eigvals(transfer_matrix(psi, constraint))))))


# --------------------------------------------------------- finite Gibbs measures


@dataclass
class GibbsSystem:
    labels: np.ndarray
    energies: np.ndarray
    log_z: float

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.energies - self.log_z)

    def free_energy(self, nu: np.ndarray) -> float:
        """H(nu) + E_nu[E] for a law on the enumerated configurations."""
        nu = np.asarray(nu, dtype=float)
        return shannon(nu) + float(np.dot(nu, self.energies))


def gibbs_system(
    sigma: SoficMap, psi: Potential, constraint: SftSpec | None = None, cap_bits: int = VARIATIONAL_CAP_BITS
) -> GibbsSystem:
    _check(sigma, psi, constraint)
    chunks = list(enumerate_configurations(sigma, psi, constraint, cap_bits))
    labels = np.concatenate([c[0] for c in chunks])
    e = np.concatenate([c[1] for c in chunks])
    return GibbsSystem(labels, e, float(logsumexp(e)))


def gibbs_variational_check(
    sigma: SoficMap, psi: Potential, constraint: SftSpec | None = None, cap_bits: int = VARIATIONAL_CAP_BITS
) -> float:
    """|ln Z - (H(Gibbs) + E_Gibbs[E])| on an enumerable system."""
    g = gibbs_system(sigma, psi, constraint, cap_bits)
    return abs(g.log_z - g.free_energy(g.probabilities))


def equilibrium_product_measure(psi0: Sequence[float]) -> tuple[ProbVector, float]:
    """Product-measure equilibrium state of a single-site potential and its pressure."""
    psi0 = np.asarray(psi0, dtype=float)
    pressure = float(logsumexp(psi0))
    return ProbVector(np.exp(psi0 - pressure)), pressure


def product_free_energy(kappa: Sequence[float], psi0: Sequence[float]) -> float:
    kappa = np.asarray(kappa, dtype=float)
    return shannon(kappa) + float(np.dot(kappa, psi0))


# ------------------------------------------------------ maximal-f Markov measures


def _feasible_support(A: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Allowed pairs that carry mass in some coupling of a and b.

    Solves one LP on the homogenised problem: rows sum to t*a, columns to t*b,
    and slacks s <= min(P, 1) are maximised, so every pair that is positive in
    some feasible coupling gets s = 1.
    """
    from scipy.optimize import linprog

    idx = np.argwhere(A)
    m1, m2 = A.shape
    if not (A.any(axis=1).all() and A.any(axis=0).all()):
        raise InfeasibleSft("marginals incompatible with the allowed pairs")
    ne = len(idx)
    # variables: P (ne), s (ne), t
    nv = 2 * ne + 1
    A_eq = np.zeros((m1 + m2, nv))
    for j, (k, l) in enumerate(idx):
        A_eq[k, j] = 1
        A_eq[m1 + l, j] = 1
    A_eq[:m1, -1] = -a
    A_eq[m1:, -1] = -b
    A_ub = np.hstack([-np.eye(ne), np.eye(ne), np.zeros((ne, 1))])
    c = np.concatenate([np.zeros(ne), -np.ones(ne), [0.0]])
    bounds = [(0, None)] * ne + [(0, 1)] * ne + [(0, 1e6)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(ne), A_eq=A_eq, b_eq=np.zeros(m1 + m2), bounds=bounds,
                  method="highs")
    if res.status != 0 or res.x[-1] <= 0:
        raise InfeasibleSft("marginals incompatible with the allowed pairs")
    keep = np.zeros_like(A, dtype=bool)
    for j, (k, l) in enumerate(idx):
        keep[k, l] = res.x[ne + j] > 0.5
    return keep


def max_entropy_coupling(support: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float = SINKHORN_TOL,
                         maxiter: int = 200):
    """Entropy-maximising coupling of marginals a, b on the given support.

    Returns (P, x, y) with P = diag(x) support diag(y).  A few Sinkhorn sweeps
    warm-start damped Newton steps on the dual
    sum_{kl} A_kl exp(u_k + v_l) - a.u - b.v.
    Raises InfeasibleSft if the marginals cannot be matched.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _coupling(support, a, b, tol, maxiter)


def _coupling(support, a, b, tol, maxiter):
    A = np.asarray(support, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ra, rb = a > 0, b > 0
    As, aa, bb = _feasible_support(A[np.ix_(ra, rb)] > 0, a[ra], b[rb]).astype(float), a[ra], b[rb]
    m1, m2 = As.shape
    logA = np.where(As > 0, 0.0, -np.inf)
    la, lb = np.log(aa), np.log(bb)
    u, v = np.zeros(m1), np.zeros(m2)
    for _ in range(20):
        u = la - logsumexp(logA + v[None, :], axis=1)
        v = lb - logsumexp(logA + u[:, None], axis=0)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise InfeasibleSft("coupling scaling left the finite range")

    def dual(u, v):
        z = u[:, None] + v[None, :]
        if np.max(z[As > 0]) > 700:
            return np.inf
        return float(np.sum(As * np.exp(z)) - aa @ u - bb @ v)

    for _ in range(maxiter):
        P = As * np.exp(u[:, None] + v[None, :])
        g = np.concatenate([P.sum(axis=1) - aa, P.sum(axis=0) - bb])
        if np.max(np.abs(g)) < tol:
            break
        if not np.all(np.isfinite(g)):
            break
        H = np.block([[np.diag(P.sum(axis=1)), P], [P.T, np.diag(P.sum(axis=0))]])
        try:
            d = -np.linalg.lstsq(H + 1e-14 * np.eye(m1 + m2), g, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(d)):
            break
        f0, t = dual(u, v), 1.0
        slope = g @ d
        while t > 1e-12 and dual(u + t * d[:m1], v + t * d[m1:]) > f0 + 1e-4 * t * slope:
            t /= 2
        if t <= 1e-12:
            break
        u, v = u + t * d[:m1], v + t * d[m1:]
    else:
        raise InfeasibleSft("coupling did not converge; marginals likely infeasible")
    P = As * np.exp(u[:, None] + v[None, :])
    if np.max(np.abs(P.sum(axis=1) - aa)) > 1e-9 or np.max(np.abs(P.sum(axis=0) - bb)) > 1e-9:
        raise InfeasibleSft("marginals incompatible with the allowed pairs")
    full = np.zeros_like(A)
    full[np.ix_(ra, rb)] = P
    xf, yf = np.zeros(len(a)), np.zeros(len(b))
    xf[ra], yf[rb] = np.exp(u), np.exp(v)
    return full, xf, yf


def _recurrent_part(allowed: np.ndarray) -> np.ndarray:
    """Allowed pairs inside a strongly connected class; only these can carry
    mass in a coupling with equal marginals."""
    from scipy.sparse.csgraph import connected_components

    _, comp = connected_components(allowed.astype(float), directed=True, connection="strong")
    return allowed & (comp[:, None] == comp[None, :])


def _chain_for(sft: SftSpec, pi: np.ndarray, rank: int):
    edges, duals = [], []
    for a in sft.allowed[:rank]:
        P, x, y = max_entropy_coupling(_recurrent_part(a), pi, pi)
        edges.append(P)
        duals.append((x, y))
    chain = MarkovChainSpec(rank, sft.alphabet, pi, edges, tol=1e-9)
    return chain, duals


def _f_value(pi: np.ndarray, edges: Sequence[np.ndarray], rank: int) -> float:
    h = shannon(pi)
    return -(2 * rank - 1) * h + sum(shannon(e) for e in edges)


@dataclass
class MaxentResult:
    chain: MarkovChainSpec
    value: float
    symmetric: bool
    restarts: int
    ties: list[tuple[float, list[float]]] = field(default_factory=list)

    @property
    def alpha(self) -> list[float]:
        """Self-transition mass P(x_e = 0, x_s = 0) per generator."""
        return [float(e[0, 0]) for e in self.chain.edges]


def _mirror_ascent(sft: SftSpec, rank: int, pi0: np.ndarray, maxiter: int, step: float) -> tuple[float, np.ndarray]:
    """Exact edge laws for the current pi, then a multiplicative step on pi.

    Stops on improvement below ASCENT_TOL or once pi reaches the boundary of
    the simplex (faces are covered by the Dirac candidates and by restarts).
    """
    pi = pi0 / pi0.sum()
    chain, duals = _chain_for(sft, pi, rank)
    best = _f_value(pi, chain.edges, rank)
    for _ in range(maxiter):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            grad = (2 * rank - 1) * np.log(pi)
            for x, y in duals:
                grad -= np.log(x) + np.log(y)
        if not np.all(np.isfinite(grad)):
            break
        grad -= grad.max()
        cand = pi * np.exp(step * grad)
        cand /= cand.sum()
        if cand.min() < 1e-12:
            # the step leaves the interior; faces are handled by Dirac candidates
            step /= 2
            if step < 1e-10:
                break
            continue
        try:
            c_chain, c_duals = _chain_for(sft, cand, rank)
        except InfeasibleSft:
            c_chain = None
        if c_chain is None or (val := _f_value(cand, c_chain.edges, rank)) < best:
            step /= 2
            if step < 1e-10:
                break
            continue
        improved = val - best
        pi, chain, duals, best = cand, c_chain, c_duals, val
        step = min(step * 1.5, 4.0)
        if improved < ASCENT_TOL or pi.min() < 1e-9:
            break
    return best, pi


def maxent_markov_on_sft(
    sft: SftSpec,
    rank: int | None = None,
    symmetry: str = "auto",
    restarts: int = 16,
    seed: int = 0,
    maxiter: int = 5000,
) -> MaxentResult:
    """Stationary Markov measure on the SFT maximising -(r-1)H(pi) + sum_s H(X_e | X_s).

    With ``symmetry="auto"`` and a symbol-transitive SFT, the search is over
    measures invariant under the symbol symmetries; ``pi`` is then uniform and
    each edge law is the unique entropy-maximising coupling.  Otherwise
    seeded restarts alternate exact edge-law maximisation with a mirror-ascent
    step on ``pi``, and every distinct optimum within 1e-9 of the best is
    reported in ``ties``.
    """
    rank = sft.rank if rank is None else rank
    if rank > sft.rank:
        raise ValueError("SFT has fewer generator tables than the requested rank")
    k = sft.k
    if symmetry not in ("auto", "none"):
        raise ValueError("symmetry must be 'auto' or 'none'")
    if symmetry == "auto" and sft.is_symbol_transitive():
        chain, _ = _chain_for(sft, np.full(k, 1.0 / k), rank)
        return MaxentResult(chain, f_markov(chain), True, 1)

    rng = np.random.default_rng(seed)
    starts = [np.full(k, 1.0 / k)] + [rng.dirichlet(np.ones(k)) for _ in range(restarts - 1)]
    results = []
    for pi0 in starts:
        try:
            results.append(_mirror_ascent(sft, rank, pi0, maxiter, 0.5))
        except InfeasibleSft:
            continue
    # vertices of the simplex: Dirac measures on self-looping symbols
    for s in range(k):
        if all(a[s, s] for a in sft.allowed[:rank]):
            pi = np.zeros(k)
            pi[s] = 1.0
            results.append((0.0, pi))
    if not results:
        raise InfeasibleSft("no stationary Markov measure found on the SFT")
    best_val = max(v for v, _ in results)
    winners = [(v, p) for v, p in results if v >= best_val - 1e-9]
    v0, p0 = max(winners, key=lambda t: t[0])
    chain, _ = _chain_for(sft, p0, rank)
    ties = []
    for v, p in winners:
        if not any(np.max(np.abs(p - np.array(q))) < 1e-4 for _, q in ties):
            ties.append((float(v), p.round(12).tolist()))
    return MaxentResult(chain, f_markov(chain), False, len(starts), ties if len(ties) > 1 else [])
